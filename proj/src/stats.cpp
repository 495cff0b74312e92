#include "shefields/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "shefields/error.hpp"
#include "shefields/random.hpp"

namespace shefields {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

double mean(std::span<const double> x) {
    if (x.empty()) throw InsufficientDataError("mean of an empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

double variance(std::span<const double> x) {
    if (x.size() < 2) throw InsufficientDataError("variance needs two samples");
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss / static_cast<double>(x.size() - 1);
}

double standard_error(std::span<const double> x) {
    return std::sqrt(variance(x) / static_cast<double>(x.size()));
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw InsufficientDataError("correlation needs two paired samples");
    }
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return kNaN;
    return sab / std::sqrt(saa * sbb);
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw InsufficientDataError("quantile of an empty sample");
    p = std::clamp(p, 0.0, 1.0);
    const double pos = p * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

double median(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    return quantile_sorted(x, 0.5);
}

LinearFit ols(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InsufficientDataError("fit needs two points");
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw InsufficientDataError("fit needs distinct abscissae");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
    f.points = x.size();
    return f;
}

Interval wilson_interval(std::size_t k, std::size_t n, double z) {
    if (n == 0) throw InsufficientDataError("proportion of zero trials");
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / nn;
    const double centre = (p + z2 / (2.0 * nn)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
    return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

double wilson_upper(std::size_t k, std::size_t n, double z) { return wilson_interval(k, n, z).hi; }

std::vector<double> bootstrap(std::size_t n, std::size_t replicates, std::uint64_t seed,
                              const std::function<double(std::span<const std::size_t>)>& stat) {
    if (n == 0) throw InsufficientDataError("bootstrap of an empty sample");
    std::vector<double> out(replicates);
    std::vector<std::size_t> idx(n);
    for (std::size_t b = 0; b < replicates; ++b) {
        SplitMix64 rng(stream_key(seed, b));
        for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
        out[b] = stat(idx);
    }
    return out;
}

Interval percentile_interval(std::vector<double> replicates, double level) {
    std::erase_if(replicates, [](double v) { return std::isnan(v); });
    if (replicates.empty()) return {kNaN, kNaN};
    std::sort(replicates.begin(), replicates.end());
    const double a = 0.5 * (1.0 - level);
    return {quantile_sorted(replicates, a), quantile_sorted(replicates, 1.0 - a)};
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double ks_normal(std::vector<double> samples, double mu, double sd) {
    if (samples.empty()) throw InsufficientDataError("KS distance of an empty sample");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double f = normal_cdf((samples[i] - mu) / sd);
        d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
    }
    return d;
}

double ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw InsufficientDataError("KS distance of an empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double d = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    return d;
}

double ks_critical(std::size_t n, double alpha) {
    return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

// ---------------------------------------------------------------- tails

namespace {

double tail_shift(CaseKind c) { return c == CaseKind::Case2 ? 1.0 : 0.0; }

// number of sorted values strictly above v
std::size_t count_above(const std::vector<double>& sorted, double v) {
    return static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), v));
}

}  // namespace

TailFitReport survival_curve(std::span<const double> samples, std::span<const double> lambda_grid,
                             CaseKind tail_case, std::size_t censored, std::size_t min_count) {
    if (samples.size() < 10000) {
        throw InsufficientDataError("tail fits need at least 1e4 samples");
    }
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const double shift = tail_shift(tail_case);

    TailFitReport rep;
    rep.tail_case = tail_case;
    rep.samples = samples.size();
    rep.censored = censored;
    std::ostringstream warn;
    for (double lam : lambda_grid) {
        const std::size_t c = count_above(sorted, shift + lam);
        rep.lambda_requested.push_back(lam);
        rep.count_requested.push_back(c);
        rep.surv_requested.push_back(static_cast<double>(c) / n);
        if (tail_case == CaseKind::Case1 && !(lam > 1.0)) {
            rep.truncated = true;
            warn << "lambda=" << lam << " outside the Case 1 range lambda > 1; ";
            continue;
        }
        if (tail_case == CaseKind::Case2 && !(lam > 0.0)) {
            rep.truncated = true;
            warn << "lambda=" << lam << " outside the Case 2 range lambda > 0; ";
            continue;
        }
        if (c < min_count) {
            rep.truncated = true;
            continue;
        }
        rep.lambda_grid.push_back(lam);
        rep.log_surv.push_back(std::log(static_cast<double>(c) / n));
        rep.regressor.push_back(tail_case == CaseKind::Case1 ? std::pow(std::log(lam), 1.5) : lam * lam);
    }
    if (rep.lambda_grid.size() < rep.lambda_requested.size()) {
        warn << "grid truncated to " << rep.lambda_grid.size() << " of " << rep.lambda_requested.size()
             << " points with at least " << min_count << " exceedances; ";
    }
    if (rep.lambda_grid.size() >= 3) {
        try {
            const LinearFit f = ols(rep.regressor, rep.log_surv);
            rep.slope = f.slope;
            rep.intercept = f.intercept;
            rep.r2 = f.r2;
            rep.fit_valid = true;
        } catch (const InsufficientDataError&) {
            warn << "degenerate regressor; ";
        }
    } else {
        rep.slope = rep.intercept = rep.r2 = kNaN;
        warn << "fewer than 3 resolvable points, no fit; ";
    }
    rep.warning = warn.str();
    if (!rep.warning.empty()) rep.warning.resize(rep.warning.size() - 2);
    return rep;
}

std::vector<double> resolvable_lambda_grid(std::span<const double> samples, CaseKind tail_case,
                                           double lo, std::size_t points, std::size_t min_count) {
    if (points < 2) throw ConfigError("lambda grid needs at least two points");
    if (samples.size() <= min_count) throw InsufficientDataError("too few samples for a tail grid");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
    // count(v > hi) >= min_count whenever the min_count largest values exceed hi
    const double hi = sorted[min_count] - tail_shift(tail_case);
    if (!(hi > lo)) throw InsufficientDataError("no resolvable tail above the requested start");
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) {
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
    }
    return grid;
}

// ---------------------------------------------------------------- small values

std::vector<NegativeMoment> negative_moments(std::span<const double> samples,
                                             std::span<const int> k_list) {
    if (samples.size() < 2) throw InsufficientDataError("negative moments need two samples");
    for (double v : samples) {
        if (!(v > 0.0)) {
            std::ostringstream msg;
            msg << "nonpositive sample " << v << " in a positive-solution ensemble";
            throw PositivityViolation(msg.str());
        }
    }
    std::vector<double> logs(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) logs[i] = std::log(samples[i]);
    const double n = static_cast<double>(samples.size());

    std::vector<NegativeMoment> out;
    std::vector<double> terms(samples.size());
    std::vector<double> loo(samples.size());
    for (int k : k_list) {
        if (k < 1 || k > 20) throw ConfigError("negative moment order must lie in [1, 20]");
        double top = -kInf;
        for (std::size_t i = 0; i < logs.size(); ++i) {
            terms[i] = -static_cast<double>(k) * logs[i];
            top = std::max(top, terms[i]);
        }
        double scaled = 0.0;  // sum of exp(term - top)
        for (double t : terms) scaled += std::exp(t - top);
        const double log_sum = top + std::log(scaled);

        NegativeMoment m;
        m.k = k;
        m.log_estimate = log_sum - std::log(n);
        m.estimate = std::exp(m.log_estimate);
        m.top_share = 1.0 / scaled;
        m.dominated = m.top_share > 0.5;
        const double lk = std::log(static_cast<double>(k)) / static_cast<double>(k);
        const double c = lk * lk * lk;
        m.stabilized = c * m.log_estimate;

        // jackknife on the log estimate
        double loo_mean = 0.0;
        for (std::size_t i = 0; i < terms.size(); ++i) {
            const double share = std::exp(terms[i] - log_sum);
            const double rest = std::max(1.0 - share, 1e-300);
            loo[i] = log_sum + std::log(rest) - std::log(n - 1.0);
            loo_mean += loo[i];
        }
        loo_mean /= n;
        double ss = 0.0;
        for (double v : loo) ss += (v - loo_mean) * (v - loo_mean);
        const double se = std::sqrt((n - 1.0) / n * ss);
        m.stabilized_ci = {c * (m.log_estimate - kZ95TwoSided * se),
                           c * (m.log_estimate + kZ95TwoSided * se)};
        out.push_back(m);
    }
    return out;
}

SmallBallReport small_ball_curve(std::span<const double> samples, std::span<const double> eps_grid,
                                 std::span<const int> k_list, std::size_t censored) {
    if (samples.empty()) throw InsufficientDataError("small-ball curve of an empty sample");
    std::vector<double> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();

    SmallBallReport rep;
    rep.samples = n;
    rep.censored = censored;
    rep.nonpositive = static_cast<std::size_t>(
        std::lower_bound(sorted.begin(), sorted.end(), std::numeric_limits<double>::min()) - sorted.begin());
    for (double eps : eps_grid) {
        if (!(eps > 0.0)) throw ConfigError("small-ball levels must be positive");
        const auto c = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), eps) - sorted.begin());
        const double p = static_cast<double>(c) / static_cast<double>(n);
        const double scale = std::abs(std::log(eps));
        rep.eps_grid.push_back(eps);
        rep.counts.push_back(c);
        rep.prob.push_back(p);
        rep.log_prob.push_back(c == 0 ? -kInf : std::log(p));
        rep.upper_bound_only.push_back(c == 0);
        if (c == 0) {
            const double up = wilson_upper(0, n, kZ95OneSided);
            rep.normalized.push_back(-kInf);
            rep.ci_lo.push_back(-kInf);
            rep.ci_hi.push_back(scale > 0.0 ? std::log(up) / scale : kNaN);
        } else {
            const Interval ci = wilson_interval(c, n);
            rep.normalized.push_back(scale > 0.0 ? std::log(p) / scale : kNaN);
            rep.ci_lo.push_back(scale > 0.0 ? std::log(ci.lo) / scale : kNaN);
            rep.ci_hi.push_back(scale > 0.0 ? std::log(ci.hi) / scale : kNaN);
        }
    }
    // monotone as eps decreases: a smaller eps may not sit clearly above a larger one
    std::vector<std::size_t> order(rep.eps_grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return rep.eps_grid[a] > rep.eps_grid[b]; });
    for (std::size_t j = 1; j < order.size(); ++j) {
        const std::size_t big = order[j - 1], small = order[j];
        if (rep.eps_grid[big] >= 1.0) continue;
        if (rep.ci_lo[small] > rep.ci_hi[big]) rep.monotone = false;
    }
    if (n < 100000) rep.warning = "fewer than 1e5 samples; deep small-ball levels are unresolved";
    if (!k_list.empty() && rep.nonpositive == 0) rep.moment_estimates = negative_moments(samples, k_list);
    return rep;
}

LowerEnvelopeReport lower_envelope_check(std::span<const FieldSnapshot> fields, double zeta,
                                         std::span<const double> n_grid) {
    if (fields.empty()) throw InsufficientDataError("lower envelope needs at least one field");
    if (!(zeta >= 0.0)) throw ConfigError("zeta must be nonnegative");
    LowerEnvelopeReport rep;
    rep.zeta = zeta;
    double prev_n = 0.0;
    for (double nv : n_grid) {
        if (!(nv > prev_n)) throw ConfigError("n grid must be positive and increasing");
        prev_n = nv;
        EnvelopeRow row;
        row.n = nv;
        row.threshold = std::exp(-zeta * std::pow(std::log(nv), 2.0 / 3.0));
        for (const FieldSnapshot& f : fields) {
            const GridSpec& g = f.grid;
            if (2.0 * nv > g.length) {
                std::ostringstream msg;
                msg << "window (" << nv << ", " << 2.0 * nv << ") exceeds the domain length " << g.length;
                throw ConfigError(msg.str());
            }
            double inf = kInf;
            for (std::size_t i = 0; i < g.nx; ++i) {
                const double x = g.x(i);
                if (x > nv && x < 2.0 * nv) inf = std::min(inf, f.values[i]);
            }
            row.hits += inf < row.threshold;
            ++row.fields;
        }
        row.frequency = static_cast<double>(row.hits) / static_cast<double>(row.fields);
        row.ci = wilson_interval(row.hits, row.fields);
        row.frequency_n2 = row.frequency * nv * nv;
        if (!rep.rows.empty() && row.frequency > rep.rows.back().frequency) rep.non_increasing = false;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace shefields
