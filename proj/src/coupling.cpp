#include "shefields/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "shefields/error.hpp"
#include "shefields/io.hpp"
#include "shefields/parallel.hpp"
#include "shefields/random.hpp"
#include "shefields/stats.hpp"

namespace shefields {

namespace {

std::vector<std::size_t> equispaced_sites(std::size_t nx, std::size_t count) {
    count = std::min(count, nx);
    std::vector<std::size_t> s(count);
    for (std::size_t i = 0; i < count; ++i) s[i] = i * nx / count;
    return s;
}

struct PathDiffs {
    bool censored = false;
    std::vector<double> diff;  // entry-major, sites inner
};

double int_pow(double x, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r *= x;
    return r;
}

// Sup over sites of the mean of |d|^k over the given paths; also reports the site and SE.
struct SupMoment {
    double value = 0.0;
    double se = 0.0;
    std::size_t site = 0;
};

SupMoment sup_moment(const std::vector<PathDiffs>& data, std::span<const std::size_t> paths,
                     std::size_t entry, std::size_t nsites, int k, bool with_se) {
    SupMoment best{-1.0, 0.0, 0};
    const double np = static_cast<double>(paths.size());
    for (std::size_t s = 0; s < nsites; ++s) {
        double sum = 0.0, sum2 = 0.0;
        for (std::size_t p : paths) {
            const double v = int_pow(std::abs(data[p].diff[entry * nsites + s]), k);
            sum += v;
            sum2 += v * v;
        }
        const double m = sum / np;
        if (m > best.value) {
            best.value = m;
            best.site = s;
            if (with_se && paths.size() > 1) {
                const double var = std::max(0.0, (sum2 - np * m * m) / (np - 1.0));
                best.se = std::sqrt(var / np);
            }
        }
    }
    return best;
}

double safe_log(double v) { return std::log(std::max(v, 1e-300)); }

FittedRate fit_rate(const std::vector<PathDiffs>& data, const std::vector<std::size_t>& valid,
                    const std::vector<std::size_t>& entry_idx, const std::vector<double>& xs,
                    std::size_t nsites, int k, const std::string& axis, double fixed,
                    std::size_t replicates, std::uint64_t seed) {
    FittedRate r;
    r.axis = axis;
    r.fixed = fixed;
    r.k = k;
    r.abscissa = xs;
    if (entry_idx.size() < 2) return r;
    for (std::size_t e : entry_idx) {
        r.log_moment.push_back(safe_log(sup_moment(data, valid, e, nsites, k, false).value));
    }
    r.slope = ols(xs, r.log_moment).slope;
    std::vector<double> ys(entry_idx.size());
    const auto reps = bootstrap(valid.size(), replicates, seed, [&](std::span<const std::size_t> idx) {
        std::vector<std::size_t> sample(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) sample[i] = valid[idx[i]];
        for (std::size_t j = 0; j < entry_idx.size(); ++j) {
            ys[j] = safe_log(sup_moment(data, sample, entry_idx[j], nsites, k, false).value);
        }
        return ols(xs, ys).slope;
    });
    const Interval ci = percentile_interval(reps);
    r.ci_lo = ci.lo;
    r.ci_hi = ci.hi;
    r.valid = true;
    return r;
}

}  // namespace

CouplingReport coupling_moments(const GridSpec& spec, const SigmaSpec& sigma, double t,
                                const Schedule& schedule, std::span<const int> k_list,
                                std::size_t paths, std::uint64_t base_seed,
                                const CouplingOptions& opts) {
    if (schedule.empty()) throw ConfigError("coupling schedule is empty");
    if (paths < 100) throw ConfigError("coupling moments need at least 100 paths");
    if (k_list.empty()) throw ConfigError("coupling moments need at least one k");
    for (int k : k_list) {
        if (k < 1) throw ConfigError("moment orders must be positive");
    }
    for (double d : opts.deltas) {
        if (!(d > 0.0)) throw ConfigError("probe deltas must be positive");
    }
    const std::size_t steps = steps_to(spec, t);

    // one Picard chain per beta serves every requested n
    std::map<double, std::vector<int>> by_beta;
    for (const auto& [beta, n] : schedule) {
        if (n < 0) throw ConfigError("Picard index must be nonnegative");
        auto& ns = by_beta[beta];
        if (std::find(ns.begin(), ns.end(), n) == ns.end()) ns.push_back(n);
    }
    std::map<double, LocalizedKernel> kernels;
    for (const auto& [beta, ns] : by_beta) {
        kernels.emplace(beta, LocalizedKernel(spec, steps, window_cells(spec, t, beta)));
    }

    const std::vector<std::size_t> sites = equispaced_sites(spec.nx, opts.sites);
    const std::size_t nsites = sites.size();
    const std::size_t nentries = schedule.size();

    const auto data = parallel_map(paths, opts.workers, [&](std::size_t p) {
        PathDiffs out;
        const NoiseGrid noise = sample_noise_grid(spec, base_seed + p);
        const FieldSnapshot u = solve_full(spec, sigma, noise, t);
        if (u.censored) {
            out.censored = true;
            return out;
        }
        out.diff.resize(nentries * nsites);
        for (const auto& [beta, ns] : by_beta) {
            const auto seq = solve_picard_sequence(spec, sigma, noise, t, beta, ns, kernels.at(beta));
            for (std::size_t e = 0; e < nentries; ++e) {
                if (schedule[e].first != beta) continue;
                const auto pos = std::find(ns.begin(), ns.end(), schedule[e].second) - ns.begin();
                const FieldSnapshot& U = seq[static_cast<std::size_t>(pos)];
                if (U.censored) out.censored = true;
                for (std::size_t s = 0; s < nsites; ++s) {
                    out.diff[e * nsites + s] = u.values[sites[s]] - U.values[sites[s]];
                }
            }
        }
        return out;
    });

    std::vector<std::size_t> valid;
    for (std::size_t p = 0; p < paths; ++p) {
        if (!data[p].censored) valid.push_back(p);
    }
    if (valid.empty()) throw DegenerateEnsembleError("every coupling path was censored");

    CouplingReport rep;
    rep.t = t;
    rep.sigma = sigma.summary();
    rep.deltas = opts.deltas;
    rep.sites = sites;
    rep.paths = paths;
    rep.censored = paths - valid.size();
    const double nv = static_cast<double>(valid.size());
    for (std::size_t e = 0; e < nentries; ++e) {
        std::vector<double> exceed(opts.deltas.size(), 0.0);
        for (std::size_t j = 0; j < opts.deltas.size(); ++j) {
            for (std::size_t s = 0; s < nsites; ++s) {
                std::size_t c = 0;
                for (std::size_t p : valid) c += std::abs(data[p].diff[e * nsites + s]) > opts.deltas[j];
                exceed[j] = std::max(exceed[j], static_cast<double>(c) / nv);
            }
        }
        for (int k : k_list) {
            const SupMoment m = sup_moment(data, valid, e, nsites, k, true);
            CouplingEntry ce;
            ce.beta = schedule[e].first;
            ce.n = schedule[e].second;
            ce.k = k;
            ce.sup_moment = m.value;
            ce.sup_moment_se = m.se;
            ce.sup_site = sites[m.site];
            ce.exceed_prob = exceed;
            rep.entries.push_back(std::move(ce));
        }
    }

    // decay fits at k = 2 when requested, else the first k
    const int kfit = std::find(k_list.begin(), k_list.end(), 2) != k_list.end() ? 2 : k_list.front();
    auto pick_axis = [&](bool along_beta) {
        // fixed value holding the most distinct abscissae; ties go to the larger one
        std::map<double, std::set<double>> groups;
        for (const auto& [beta, n] : schedule) {
            if (along_beta) groups[static_cast<double>(n)].insert(beta);
            else groups[beta].insert(static_cast<double>(n));
        }
        double best_fixed = 0.0;
        std::size_t best = 0;
        for (const auto& [fixed, xs] : groups) {
            if (xs.size() >= best) {
                best = xs.size();
                best_fixed = fixed;
            }
        }
        std::vector<std::size_t> idx;
        std::vector<double> xs;
        std::set<double> seen;
        for (std::size_t e = 0; e < nentries; ++e) {
            const double fixed = along_beta ? schedule[e].second : schedule[e].first;
            const double x = along_beta ? schedule[e].first : schedule[e].second;
            if (fixed == best_fixed && seen.insert(x).second) {
                idx.push_back(e);
                xs.push_back(x);
            }
        }
        return fit_rate(data, valid, idx, xs, nsites, kfit, along_beta ? "beta" : "n", best_fixed,
                        opts.bootstrap, stream_key(base_seed, along_beta ? 0xB0 : 0xB1));
    };
    rep.rate_beta = pick_axis(true);
    rep.rate_n = pick_axis(false);
    return rep;
}

namespace {

nlohmann::json rate_json(const FittedRate& r) {
    return {{"axis", r.axis}, {"fixed", r.fixed}, {"k", r.k}, {"abscissa", r.abscissa},
            {"log_moment", r.log_moment}, {"slope", r.slope}, {"ci_lo", r.ci_lo},
            {"ci_hi", r.ci_hi}, {"valid", r.valid}};
}

}  // namespace

std::string coupling_report_json(const CouplingReport& rep) {
    nlohmann::json j;
    j["t"] = rep.t;
    j["sigma"] = rep.sigma;
    j["deltas"] = rep.deltas;
    j["sites"] = rep.sites;
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rep.entries) {
        entries.push_back({{"beta", e.beta}, {"n", e.n}, {"k", e.k}, {"sup_moment", e.sup_moment},
                           {"sup_moment_se", e.sup_moment_se}, {"sup_site", e.sup_site},
                           {"exceed_prob", e.exceed_prob}});
    }
    j["entries"] = entries;
    j["fitted_rates"] = {{"beta", rate_json(rep.rate_beta)}, {"n", rate_json(rep.rate_n)}};
    j["paths"] = rep.paths;
    j["censored"] = rep.censored;
    return j.dump(2);
}

void write_coupling_csv(const CouplingReport& rep, std::ostream& out) {
    std::vector<std::string> head{"beta", "n", "k", "sup_moment", "sup_moment_se", "sup_site"};
    for (double d : rep.deltas) head.push_back("exceed_" + format_double(d));
    out << csv_row(head) << '\n';
    for (const auto& e : rep.entries) {
        std::vector<std::string> row{format_double(e.beta), std::to_string(e.n), std::to_string(e.k),
                                     format_double(e.sup_moment), format_double(e.sup_moment_se),
                                     std::to_string(e.sup_site)};
        for (double p : e.exceed_prob) row.push_back(format_double(p));
        out << csv_row(row) << '\n';
    }
}

// ---------------------------------------------------------------- correlation length

LagClassWitness make_witness(const GridSpec& spec, double t, double beta, int n) {
    if (n < 0) throw PreconditionError("Picard index must be nonnegative");
    LagClassWitness w;
    w.beta = beta;
    w.n = n;
    w.window_cells = window_cells(spec, t, beta);
    w.cone_cells = static_cast<std::size_t>(n) * w.window_cells;
    w.slack_cells = 0;
    w.lag = 2.0 * n * std::sqrt(beta * t);
    return w;
}

CorrelationFrontier correlation_frontier(const GridSpec& spec, const SigmaSpec& sigma, double t,
                                         std::span<const double> epsilons,
                                         std::span<const double> deltas, std::size_t paths,
                                         std::uint64_t base_seed, const CorrelationOptions& opts) {
    if (epsilons.empty() || deltas.empty()) throw ConfigError("need at least one epsilon and delta");
    for (double e : epsilons) {
        if (!(e > 0.0 && e < 1.0)) throw ConfigError("epsilon must lie in (0, 1)");
        if (e < 5.0 / static_cast<double>(paths)) {
            std::ostringstream msg;
            msg << "epsilon=" << e << " is below 5/paths=" << 5.0 / static_cast<double>(paths);
            throw InsufficientDataError(msg.str());
        }
    }
    for (double d : deltas) {
        if (!(d > 0.0)) throw ConfigError("delta must be positive");
    }
    if (opts.schedule.empty()) throw ConfigError("correlation-length schedule is empty");
    const std::size_t steps = steps_to(spec, t);
    const std::vector<std::size_t> sites = equispaced_sites(spec.nx, opts.sites);
    const std::size_t nsites = sites.size();

    // full solution at the probe sites, once per path
    struct Base {
        bool censored = false;
        std::vector<double> u;
    };
    const auto base = parallel_map(paths, opts.workers, [&](std::size_t p) {
        Base b;
        const FieldSnapshot u = solve_full(spec, sigma, sample_noise_grid(spec, base_seed + p), t);
        b.censored = u.censored;
        for (std::size_t s : sites) b.u.push_back(u.values[s]);
        return b;
    });
    std::vector<std::size_t> valid;
    for (std::size_t p = 0; p < paths; ++p) {
        if (!base[p].censored) valid.push_back(p);
    }
    if (valid.empty()) throw DegenerateEnsembleError("every correlation-length path was censored");

    CorrelationFrontier f;
    f.t = t;
    f.sigma = sigma.summary();
    f.epsilons.assign(epsilons.begin(), epsilons.end());
    f.deltas.assign(deltas.begin(), deltas.end());
    f.paths = paths;
    f.censored = paths - valid.size();
    f.results.resize(epsilons.size() * deltas.size());
    for (std::size_t i = 0; i < epsilons.size(); ++i) {
        for (std::size_t j = 0; j < deltas.size(); ++j) {
            f.results[i * deltas.size() + j].epsilon = epsilons[i];
            f.results[i * deltas.size() + j].delta = deltas[j];
        }
    }

    std::vector<int> schedule = opts.schedule;
    std::sort(schedule.begin(), schedule.end());
    for (int n : schedule) {
        if (n < 1) throw ConfigError("schedule entries must be positive");
        const double beta = n;
        const LagClassWitness witness = make_witness(spec, t, beta, n);
        const LocalizedKernel kernel(spec, steps, witness.window_cells);
        const int ns[] = {n};
        // per valid path: |u - U| at each site, +inf when U was censored
        const auto diffs = parallel_map(valid.size(), opts.workers, [&](std::size_t v) {
            const std::size_t p = valid[v];
            const NoiseGrid noise = sample_noise_grid(spec, base_seed + p);
            const auto U = solve_picard_sequence(spec, sigma, noise, t, beta, ns, kernel);
            std::vector<double> d(nsites);
            for (std::size_t s = 0; s < nsites; ++s) {
                d[s] = U[0].censored ? std::numeric_limits<double>::infinity()
                                     : std::abs(base[p].u[s] - U[0].values[sites[s]]);
            }
            return d;
        });
        ScheduleProbe probe;
        probe.beta = beta;
        probe.n = n;
        probe.lag = witness.lag;
        for (double delta : deltas) {
            std::size_t worst = 0;
            for (std::size_t s = 0; s < nsites; ++s) {
                std::size_t c = 0;
                for (const auto& d : diffs) c += d[s] > delta;
                worst = std::max(worst, c);
            }
            probe.max_count.push_back(worst);
            probe.upper.push_back(wilson_upper(worst, valid.size()));
        }
        f.probes.push_back(probe);

        bool all_done = true;
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            for (std::size_t j = 0; j < deltas.size(); ++j) {
                CorrelationLength& r = f.results[i * deltas.size() + j];
                if (!r.achieved && probe.upper[j] < epsilons[i]) {
                    r.achieved = true;
                    r.lag = witness.lag;
                    r.witness = witness;
                }
                all_done = all_done && r.achieved;
            }
        }
        if (opts.stop_early && all_done) break;
    }

    for (std::size_t j = 0; j < deltas.size(); ++j) {
        std::vector<double> xs, ys, ratio;
        for (std::size_t i = 0; i < epsilons.size(); ++i) {
            const CorrelationLength& r = f.at(i, j);
            if (!r.achieved) continue;
            xs.push_back(std::abs(std::log(r.epsilon)));
            ys.push_back(r.lag);
            ratio.push_back(r.lag / xs.back());
        }
        double slope = std::numeric_limits<double>::quiet_NaN();
        if (xs.size() >= 2 && std::set<double>(xs.begin(), xs.end()).size() >= 2) slope = ols(xs, ys).slope;
        f.lag_slope.push_back(slope);
        f.ratio_spread.push_back(ratio.empty() ? std::numeric_limits<double>::quiet_NaN()
                                               : *std::max_element(ratio.begin(), ratio.end()) /
                                                     *std::min_element(ratio.begin(), ratio.end()));
    }
    return f;
}

CorrelationLength estimate_correlation_length(const GridSpec& spec, const SigmaSpec& sigma, double t,
                                              double epsilon, double delta, std::size_t paths,
                                              std::uint64_t base_seed,
                                              const CorrelationOptions& opts) {
    const double e[] = {epsilon};
    const double d[] = {delta};
    return correlation_frontier(spec, sigma, t, e, d, paths, base_seed, opts).results.front();
}

std::string correlation_frontier_json(const CorrelationFrontier& f) {
    nlohmann::json j;
    j["t"] = f.t;
    j["sigma"] = f.sigma;
    j["epsilons"] = f.epsilons;
    j["deltas"] = f.deltas;
    j["paths"] = f.paths;
    j["censored"] = f.censored;
    nlohmann::json probes = nlohmann::json::array();
    for (const auto& p : f.probes) {
        probes.push_back({{"beta", p.beta}, {"n", p.n}, {"lag", p.lag}, {"max_count", p.max_count},
                          {"upper", p.upper}});
    }
    j["probes"] = probes;
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : f.results) {
        nlohmann::json row{{"epsilon", r.epsilon}, {"delta", r.delta}, {"achieved", r.achieved}};
        if (r.achieved) {
            row["lag"] = r.lag;
            row["witness"] = {{"lag", r.witness.lag}, {"beta", r.witness.beta}, {"n", r.witness.n},
                              {"slack_cells", r.witness.slack_cells},
                              {"window_cells", r.witness.window_cells},
                              {"cone_cells", r.witness.cone_cells}};
        }
        results.push_back(row);
    }
    j["results"] = results;
    j["lag_slope"] = f.lag_slope;
    j["ratio_spread"] = f.ratio_spread;
    return j.dump(2);
}

void write_frontier_csv(const CorrelationFrontier& f, std::ostream& out) {
    out << "epsilon,delta,achieved,lag,beta,n\n";
    for (const auto& r : f.results) {
        out << csv_row({format_double(r.epsilon), format_double(r.delta), r.achieved ? "1" : "0",
                        r.achieved ? format_double(r.lag) : "nan",
                        r.achieved ? format_double(r.witness.beta) : "nan",
                        r.achieved ? std::to_string(r.witness.n) : "nan"})
            << '\n';
    }
}

// ---------------------------------------------------------------- cone and lag checks

ConeTestResult cone_test(const GridSpec& spec, const SigmaSpec& sigma, double t, double beta, int n,
                         std::size_t site, std::size_t trials, std::uint64_t base_seed,
                         std::size_t workers) {
    if (site >= spec.nx) throw PreconditionError("cone test site outside the grid");
    if (n < 1) throw PreconditionError("cone test needs n >= 1");
    const LagClassWitness w = make_witness(spec, t, beta, n);
    if (w.cone_cells == 0) throw PreconditionError("cone test needs a window of at least one cell");
    const LocalizedKernel kernel(spec, steps_to(spec, t), w.window_cells);
    const int ns[] = {n};
    struct Trial {
        bool outside_same = false;
        bool inside_changed = false;
    };
    const auto res = parallel_map(trials, workers, [&](std::size_t i) {
        const NoiseGrid noise = sample_noise_grid(spec, base_seed + i);
        const std::uint64_t seed2 = stream_key(base_seed + i, 0xC0DE);
        auto value = [&](const NoiseGrid& g) {
            return solve_picard_sequence(spec, sigma, g, t, beta, ns, kernel)[0].values[site];
        };
        const double v = value(noise);
        Trial tr;
        tr.outside_same = value(resample_outside_window(noise, site, w.cone_cells, seed2)) == v;
        // fresh noise strictly inside the cone, the original stream outside it
        const NoiseGrid inside =
            resample_outside_window(sample_noise_grid(spec, seed2), site, w.cone_cells - 1, base_seed + i);
        tr.inside_changed = value(inside) != v;
        return tr;
    });
    ConeTestResult out;
    out.trials = trials;
    for (const Trial& tr : res) {
        out.outside_identical += tr.outside_same;
        out.inside_changed += tr.inside_changed;
    }
    return out;
}

LagCheckResult lag_independence_check(const FieldBuilder& build, const LagCheckConfig& cfg) {
    const std::size_t nx = cfg.spec.nx;
    if (cfg.site_z >= nx) throw PreconditionError("site z outside the grid");
    if (cfg.sites_x.empty()) throw PreconditionError("no x sites given");
    for (std::size_t x : cfg.sites_x) {
        if (x >= nx) throw PreconditionError("site x outside the grid");
        if (periodic_distance(x, cfg.site_z, nx) < cfg.lag_cells) {
            throw PreconditionError("sites are closer than the lag");
        }
    }
    if (cfg.paths < 2) throw PreconditionError("lag check needs at least two paths");

    const auto vals = parallel_map(cfg.paths, cfg.workers, [&](std::size_t p) {
        const FieldSnapshot f = build(sample_noise_grid(cfg.spec, cfg.base_seed + p));
        std::vector<double> v;
        for (std::size_t x : cfg.sites_x) v.push_back(f.values[x]);
        v.push_back(f.values[cfg.site_z]);
        return v;
    });
    LagCheckResult out;
    const std::size_t nxs = cfg.sites_x.size();
    std::vector<double> z(cfg.paths), a(cfg.paths);
    for (std::size_t p = 0; p < cfg.paths; ++p) z[p] = vals[p][nxs];
    for (std::size_t j = 0; j < nxs; ++j) {
        for (std::size_t p = 0; p < cfg.paths; ++p) a[p] = vals[p][j];
        const double r = pearson(a, z);
        out.correlations.push_back(r);
        if (std::isfinite(r)) out.max_abs_corr = std::max(out.max_abs_corr, std::abs(r));
    }
    out.standard_error = 1.0 / std::sqrt(static_cast<double>(cfg.paths));

    const auto same = parallel_map(cfg.cone_trials, cfg.workers, [&](std::size_t i) {
        const NoiseGrid noise = sample_noise_grid(cfg.spec, cfg.base_seed + i);
        const double v = build(noise).values[cfg.site_z];
        const NoiseGrid moved =
            resample_outside_window(noise, cfg.site_z, cfg.cone_cells, stream_key(cfg.base_seed + i, 0xC0DE));
        return build(moved).values[cfg.site_z] == v ? 1 : 0;
    });
    out.cone_trials = cfg.cone_trials;
    out.cone_exact = std::all_of(same.begin(), same.end(), [](int s) { return s == 1; });
    return out;
}

}  // namespace shefields
