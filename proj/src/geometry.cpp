#include "shefields/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "shefields/error.hpp"
#include "shefields/io.hpp"
#include "shefields/random.hpp"
#include "shefields/stats.hpp"

namespace shefields {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double log_plus(double R) { return std::log(std::max(R, std::exp(1.0))); }

double value_at_index(const FieldSnapshot& f, std::size_t i) {
    return f.values[i % f.values.size()];
}

void check_reach(const FieldSnapshot& f, double R, const char* what) {
    if (f.values.empty() || f.values.size() != f.grid.nx)
        throw ConfigError(std::string(what) + ": snapshot has no values");
    if (!(R > 0.0)) throw DomainError(std::string(what) + ": R must be positive");
    if (R > f.grid.length * (1.0 + 1e-12))
        throw ConfigError(std::string(what) + ": R=" + format_double(R) + " exceeds domain length " +
                          format_double(f.grid.length));
}

struct Vertex {
    double x;
    double f;
};

// Polyline of the interpolated field on [0, R], ending exactly at R.
std::vector<Vertex> polyline(const FieldSnapshot& f, double R) {
    const double dx = f.grid.dx();
    std::vector<Vertex> pts;
    const double snap = 1e-9 * dx;  // R within rounding of a grid point is that point
    std::size_t i = 0;
    for (; static_cast<double>(i) * dx < R - snap; ++i)
        pts.push_back({static_cast<double>(i) * dx, value_at_index(f, i)});
    const double xi = static_cast<double>(i) * dx;
    if (xi - R <= snap) {
        pts.push_back({R, value_at_index(f, i)});
    } else {
        const Vertex& last = pts.back();
        const double w = (R - last.x) / (xi - last.x);
        pts.push_back({R, last.f + w * (value_at_index(f, i) - last.f)});
    }
    return pts;
}

double interpolate(const FieldSnapshot& f, double x) {
    const double dx = f.grid.dx();
    const double s = x / dx;
    const auto i = static_cast<std::size_t>(std::floor(s));
    const double w = s - static_cast<double>(i);
    const double a = value_at_index(f, i);
    if (w == 0.0) return a;
    return a + w * (value_at_index(f, i + 1) - a);
}

double crossing(const Vertex& p, const Vertex& q, double level) {
    if (p.f == level) return p.x;
    if (q.f == level) return q.x;
    return p.x + (level - p.f) / (q.f - p.f) * (q.x - p.x);
}

// Measure of cells [x_i, x_i + dx) inside [0, end) with Y_i >= threshold, split into blocks of width ell.
std::vector<double> riemann_blocks(const FieldSnapshot& Y, double ell, int blocks, double threshold) {
    const double dx = Y.grid.dx();
    const double end = ell * blocks;
    std::vector<double> out(static_cast<std::size_t>(blocks), 0.0);
    for (std::size_t i = 0; static_cast<double>(i) * dx < end; ++i) {
        if (!(Y.values[i] >= threshold)) continue;
        const double lo = static_cast<double>(i) * dx;
        const double hi = std::min(lo + dx, end);
        for (auto j = static_cast<std::size_t>(std::floor(lo / ell));
             j < out.size() && static_cast<double>(j) * ell < hi; ++j) {
            const double piece = std::min(hi, static_cast<double>(j + 1) * ell) -
                                 std::max(lo, static_cast<double>(j) * ell);
            if (piece > 0.0) out[j] += piece;
        }
    }
    return out;
}

}  // namespace

double gauge(const GaugeCase& gc, double R) {
    if (!(gc.alpha > 0.0)) throw DomainError("gauge: alpha must be positive");
    if (!(R > 0.0)) throw DomainError("gauge: R must be positive");
    const double l = log_plus(R);
    if (gc.kind == CaseKind::Case1) return std::exp(gc.alpha * std::cbrt(l * l));
    return gc.alpha * std::sqrt(l);
}

double exceedance_measure_at(const FieldSnapshot& field, double R, double threshold) {
    check_reach(field, R, "exceedance_measure");
    const auto pts = polyline(field, R);
    double m = 0.0;
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const Vertex& p = pts[k];
        const Vertex& q = pts[k + 1];
        const bool pin = p.f >= threshold;
        const bool qin = q.f >= threshold;
        if (pin && qin) {
            m += q.x - p.x;
        } else if (pin != qin) {
            const double c = crossing(p, q, threshold);
            m += pin ? c - p.x : q.x - c;
        }
    }
    return m;
}

ScalingReport exceedance_scaling(const GaugeCase& gc, std::span<const double> R_grid,
                                 const std::vector<std::vector<double>>& measures,
                                 std::size_t replicates, std::uint64_t seed) {
    if (R_grid.size() < 4) throw InsufficientDataError("exceedance_scaling: needs at least 4 values of R");
    if (measures.size() != R_grid.size())
        throw PreconditionError("exceedance_scaling: one ensemble per R required");
    ScalingReport rep;
    rep.gauge_case = gc;
    rep.R_grid.assign(R_grid.begin(), R_grid.end());
    const double span = std::log10(*std::max_element(R_grid.begin(), R_grid.end()) /
                                   *std::min_element(R_grid.begin(), R_grid.end()));
    rep.narrow_span = span < 1.5;

    std::vector<double> logR;
    bool same_size = true;
    for (std::size_t r = 0; r < R_grid.size(); ++r) {
        const auto& ens = measures[r];
        if (ens.empty()) throw InsufficientDataError("exceedance_scaling: empty ensemble");
        same_size = same_size && ens.size() == measures[0].size();
        rep.thresholds.push_back(gauge(gc, R_grid[r]));
        rep.medians.push_back(median(ens));
        const auto empty = std::count_if(ens.begin(), ens.end(), [](double v) { return v <= 0.0; });
        rep.empty_frequency.push_back(static_cast<double>(empty) / static_cast<double>(ens.size()));
        rep.fields.push_back(ens.size());
        logR.push_back(std::log(R_grid[r]));
        if (!(rep.medians.back() > 0.0)) rep.degenerate = true;
    }
    if (rep.degenerate) {
        rep.slope = rep.ci_lo = rep.ci_hi = kNaN;
        return rep;
    }
    auto fit = [&](const std::vector<double>& meds) {
        std::vector<double> y(meds.size());
        for (std::size_t r = 0; r < meds.size(); ++r) y[r] = std::log(meds[r]);
        return ols(logR, y).slope;
    };
    rep.slope = fit(rep.medians);

    // Resample fields; when every R was measured on the same fields, the same draw is used at each R.
    std::vector<double> slopes;
    slopes.reserve(replicates);
    std::vector<double> meds(R_grid.size()), buf;
    for (std::size_t b = 0; b < replicates; ++b) {
        SplitMix64 rng(stream_key(seed, b));
        std::vector<std::size_t> shared;
        if (same_size) {
            const std::size_t n = measures[0].size();
            shared.resize(n);
            for (auto& s : shared) s = static_cast<std::size_t>(rng.uniform() * static_cast<double>(n));
        }
        bool ok = true;
        for (std::size_t r = 0; r < R_grid.size(); ++r) {
            const auto& ens = measures[r];
            buf.resize(ens.size());
            for (std::size_t i = 0; i < ens.size(); ++i) {
                const std::size_t idx = same_size ? shared[i]
                                                  : static_cast<std::size_t>(rng.uniform() * static_cast<double>(ens.size()));
                buf[i] = ens[idx];
            }
            meds[r] = median(buf);
            ok = ok && meds[r] > 0.0;
        }
        if (ok) slopes.push_back(fit(meds));
    }
    if (slopes.size() < replicates / 2) {
        rep.ci_lo = rep.ci_hi = kNaN;
    } else {
        const Interval ci = percentile_interval(std::move(slopes), 0.95);
        rep.ci_lo = ci.lo;
        rep.ci_hi = ci.hi;
    }
    return rep;
}

ScalingReport exceedance_scaling_fields(std::span<const FieldSnapshot> fields, const GaugeCase& gc,
                                        std::span<const double> R_grid, std::size_t replicates,
                                        std::uint64_t seed) {
    std::vector<std::vector<double>> measures(R_grid.size());
    for (std::size_t r = 0; r < R_grid.size(); ++r) {
        measures[r].reserve(fields.size());
        for (const auto& f : fields) measures[r].push_back(exceedance_measure(f, R_grid[r], gc));
    }
    return exceedance_scaling(gc, R_grid, measures, replicates, seed);
}

void write_scaling_csv(const ScalingReport& rep, std::ostream& out) {
    out << "# case=" << (rep.gauge_case.kind == CaseKind::Case1 ? "case1" : "case2")
        << " alpha=" << format_double(rep.gauge_case.alpha) << " slope=" << format_double(rep.slope)
        << " ci_lo=" << format_double(rep.ci_lo) << " ci_hi=" << format_double(rep.ci_hi)
        << " degenerate=" << (rep.degenerate ? 1 : 0) << " narrow_span=" << (rep.narrow_span ? 1 : 0)
        << '\n';
    out << "R,threshold,median_measure,empty_frequency,fields\n";
    for (std::size_t r = 0; r < rep.R_grid.size(); ++r)
        out << csv_row({format_double(rep.R_grid[r]), format_double(rep.thresholds[r]),
                        format_double(rep.medians[r]), format_double(rep.empty_frequency[r]),
                        std::to_string(rep.fields[r])})
            << '\n';
}

std::vector<IslandRecord> find_islands(const FieldSnapshot& field, double a, double b, double R) {
    if (!(a > 1.0) || !(b > a)) throw PreconditionError("find_islands: needs 1 < a < b");
    check_reach(field, R, "find_islands");
    const double min_len = 2.0 * field.grid.dx();
    const auto pts = polyline(field, R);

    std::vector<IslandRecord> out;
    bool inside = pts.front().f > a;
    bool clipped = inside;  // started above a at x = 0
    double left = 0.0;
    double peak = inside ? pts.front().f : -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
        const Vertex& p = pts[k];
        const Vertex& q = pts[k + 1];
        const bool qin = q.f > a;
        if (!inside && qin) {
            inside = true;
            clipped = false;
            left = crossing(p, q, a);
            peak = q.f;
        } else if (inside && qin) {
            peak = std::max(peak, q.f);
        } else if (inside && !qin) {
            inside = false;
            const double right = crossing(p, q, a);
            if (!clipped && peak > b && right - left >= min_len)
                out.push_back({left, right, right - left, peak, a, b});
            clipped = false;
        }
    }
    return out;
}

double longest_island(const FieldSnapshot& field, double a, double b, double R) {
    double best = 0.0;
    for (const auto& isl : find_islands(field, a, b, R)) best = std::max(best, isl.length);
    return best;
}

void write_islands_csv(std::span<const IslandRecord> islands, std::ostream& out) {
    out << "left,right,length,peak,a,b\n";
    for (const auto& i : islands)
        out << csv_row({format_double(i.left), format_double(i.right), format_double(i.length),
                        format_double(i.peak), format_double(i.a), format_double(i.b)})
            << '\n';
}

UpperQuantile::UpperQuantile(std::vector<double> calibration) : desc_(std::move(calibration)) {
    std::sort(desc_.begin(), desc_.end(), std::greater<>());
}

double UpperQuantile::operator()(double level) const {
    if (!(level > 0.0) || level > 1.0)
        throw QuantileResolutionError("upper quantile: level " + format_double(level) + " outside (0, 1]");
    const auto m = static_cast<double>(desc_.size());
    if (m < 10.0 / level)
        throw QuantileResolutionError("upper quantile: level " + format_double(level) + " needs at least " +
                                      format_double(std::ceil(10.0 / level)) + " calibration values, have " +
                                      std::to_string(desc_.size()));
    // sup{b : #{y >= b} >= level m} is the ceil(level m)-th largest value.
    auto rank = static_cast<std::size_t>(std::ceil(level * m - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, desc_.size());
    return desc_[rank - 1];
}

double UpperQuantile::survival(double b) const {
    if (desc_.empty()) return kNaN;
    const auto it = std::upper_bound(desc_.begin(), desc_.end(), b, std::greater<>());
    return static_cast<double>(it - desc_.begin()) / static_cast<double>(desc_.size());
}

std::vector<double> block_integrals(const FieldSnapshot& Y, double ell, int n, double threshold) {
    if (!(ell > 0.0) || n <= 0) throw PreconditionError("block_integrals: needs ell > 0 and n > 0");
    check_reach(Y, ell * n, "block_integrals");
    return riemann_blocks(Y, ell, n, threshold);
}

SojournResult sojourn_statistic(const FieldSnapshot& Y, double ell, int n, double alpha,
                                const UpperQuantile& G) {
    if (!(alpha > 0.0 && alpha < 0.5)) throw PreconditionError("sojourn_statistic: alpha must lie in (0, 1/2)");
    if (!(ell >= 1.0)) throw PreconditionError("sojourn_statistic: ell must be at least 1");
    if (n <= 0) throw PreconditionError("sojourn_statistic: n must be positive");
    const double span = ell * n;
    check_reach(Y, span, "sojourn_statistic");
    SojournResult res;
    res.alpha = alpha;
    res.n = n;
    res.ell = ell;
    res.threshold_used = G(std::pow(span, -alpha));
    for (double z : riemann_blocks(Y, ell, n, res.threshold_used)) res.value += z;
    res.value = std::min(res.value, span);
    res.normalized = res.value / (span * G.survival(res.threshold_used));
    return res;
}

namespace {

// Central moment of order k of a sum of m iid copies, from the summand's cumulants.
double iid_sum_central_moment(int k, double m, double k2, double k3, double k4, double k6) {
    switch (k) {
        case 2: return m * k2;
        case 4: return m * k4 + 3.0 * m * m * k2 * k2;
        case 6:
            return m * k6 + 15.0 * m * m * k4 * k2 + 10.0 * m * m * k3 * k3 + 15.0 * m * m * m * k2 * k2 * k2;
        default: return kNaN;
    }
}

}  // namespace

BlockMomentResult block_moment_detail(const std::vector<std::vector<double>>& blocks, int k) {
    if (k < 2 || k % 2 != 0) throw PreconditionError("block_moment_estimate: k must be an even integer >= 2");
    if (blocks.empty()) throw InsufficientDataError("block_moment_estimate: no paths");
    const std::size_t n = blocks.front().size();
    for (const auto& b : blocks) {
        if (b.size() < 4) throw InsufficientDataError("block_moment_estimate: fewer than 4 blocks");
        if (b.size() != n) throw PreconditionError("block_moment_estimate: paths differ in block count");
    }
    BlockMomentResult res;
    res.k = k;
    res.blocks = n;
    res.paths = blocks.size();
    const double nn = static_cast<double>(n);

    double total = 0.0;
    for (const auto& b : blocks)
        for (double z : b) total += z;
    const double N = nn * static_cast<double>(blocks.size());
    const double mu = total / N;
    if (!(mu > 0.0)) {
        res.estimate = res.odd_norm = res.even_norm = res.minkowski_bound = kNaN;
        return res;
    }

    // Pooled central moments of a single block and the lag-one covariance.
    double m2 = 0.0, m3 = 0.0, m4 = 0.0, m6 = 0.0, c1 = 0.0;
    double pairs = 0.0;
    for (const auto& b : blocks) {
        for (std::size_t j = 0; j < n; ++j) {
            const double d = b[j] - mu;
            const double d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
            m6 += d2 * d2 * d2;
            if (j + 1 < n) {
                c1 += d * (b[j + 1] - mu);
                pairs += 1.0;
            }
        }
    }
    m2 /= N;
    m3 /= N;
    m4 /= N;
    m6 /= N;
    c1 /= pairs;
    const double k2 = m2, k3 = m3, k4 = m4 - 3.0 * m2 * m2;
    const double k6 = m6 - 15.0 * m4 * m2 - 10.0 * m3 * m3 + 30.0 * m2 * m2 * m2;

    const double mean_sum = nn * mu;
    const double m_odd = static_cast<double>(n / 2);
    const double m_even = nn - m_odd;
    auto norm = [&](double m) {
        const double c = iid_sum_central_moment(k, m, k2, k3, k4, k6);
        return std::pow(std::max(c, 0.0), 1.0 / k) / mean_sum;
    };
    res.odd_norm = norm(m_odd);
    res.even_norm = norm(m_even);
    res.minkowski_bound = res.odd_norm + res.even_norm;

    if (k == 2) {
        const double var = nn * k2 + 2.0 * (nn - 1.0) * c1;
        res.estimate = std::sqrt(std::max(var, 0.0)) / mean_sum;
        return res;
    }
    if (blocks.size() < 2)
        throw InsufficientDataError("block_moment_estimate: k > 2 needs at least two paths");
    std::vector<double> sums;
    sums.reserve(blocks.size());
    for (const auto& b : blocks) {
        double s = 0.0;
        for (double z : b) s += z;
        sums.push_back(s);
    }
    const double ms = mean(sums);
    double acc = 0.0;
    for (double s : sums) acc += std::pow(std::abs(s / ms - 1.0), k);
    res.estimate = std::pow(acc / static_cast<double>(sums.size()), 1.0 / k);
    return res;
}

double block_moment_estimate(const std::vector<std::vector<double>>& blocks, int k) {
    return block_moment_detail(blocks, k).estimate;
}

GoodIndexScan good_index_scan(const FieldSnapshot& field, double a, double b, double delta,
                              double spacing_c, double R) {
    if (!(spacing_c > 0.0)) throw PreconditionError("good_index_scan: spacing must be positive");
    if (!(a > 1.0) || !(b > a)) throw PreconditionError("good_index_scan: needs 1 < a < b");
    if (!(delta >= 0.0) || !(a - 2.0 * delta > 1.0))
        throw PreconditionError("good_index_scan: needs delta >= 0 and a - 2 delta > 1");
    check_reach(field, R, "good_index_scan");
    if (!(R > 1.0)) throw ConfigError("good_index_scan: R must exceed 1");
    const double step = spacing_c * std::log(R);

    GoodIndexScan scan;
    for (std::size_t j = 0;; ++j) {
        const double x = step * static_cast<double>(j);
        if (x > R) break;
        scan.positions.push_back(x);
    }
    if (scan.positions.size() < 6)
        throw ConfigError("good_index_scan: only " + std::to_string(scan.positions.size()) +
                          " indices fit in [0, R]; need 6");
    std::vector<double> y;
    y.reserve(scan.positions.size());
    for (double x : scan.positions) y.push_back(interpolate(field, x));

    const std::size_t J = y.size() - 2;
    scan.flags.resize(J);
    std::size_t good = 0, run = 0;
    for (std::size_t j = 0; j < J; ++j) {
        const bool g = y[j] < a - delta && y[j + 2] < a - delta && y[j + 1] > b + delta;
        scan.flags[j] = g;
        if (g) {
            ++good;
            run = 0;
        } else {
            scan.max_bad_gap = std::max(scan.max_bad_gap, ++run);
        }
    }
    for (std::size_t r = 0; r < 3; ++r) {
        std::size_t prog = 0;
        for (std::size_t j = r; j < J; j += 3) {
            prog = scan.flags[j] ? 0 : prog + 1;
            scan.max_bad_progression = std::max(scan.max_bad_progression, prog);
        }
    }
    scan.good_fraction = static_cast<double>(good) / static_cast<double>(J);
    return scan;
}

std::string good_index_json(const GoodIndexScan& scan) {
    nlohmann::json j;
    j["flags"] = std::vector<bool>(scan.flags.begin(), scan.flags.end());
    j["positions"] = scan.positions;
    j["max_bad_gap"] = scan.max_bad_gap;
    j["max_bad_progression"] = scan.max_bad_progression;
    j["good_fraction"] = scan.good_fraction;
    return j.dump();
}

}  // namespace shefields
