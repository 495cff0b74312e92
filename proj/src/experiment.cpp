#include "shefields/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "shefields/coupling.hpp"
#include "shefields/error.hpp"
#include "shefields/geometry.hpp"
#include "shefields/io.hpp"
#include "shefields/parallel.hpp"
#include "shefields/random.hpp"
#include "shefields/stats.hpp"

#ifndef SHEFIELDS_VERSION
#define SHEFIELDS_VERSION "0.0.0"
#endif

namespace shefields {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Finite doubles as numbers, the rest as strings, so the JSON stays valid.
json num(double v) {
    if (std::isfinite(v)) return v;
    return format_double(v);
}

json nums(const std::vector<double>& v) {
    json a = json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

class Outputs {
public:
    Outputs(fs::path dir, RunManifest& m) : dir_(std::move(dir)), m_(m) {}

    void text(const std::string& name, const std::string& body) {
        std::ofstream out(dir_ / name, std::ios::binary);
        out << body;
        if (!out) throw Error("cannot write " + (dir_ / name).string());
        m_.outputs.push_back(name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

private:
    fs::path dir_;
    RunManifest& m_;
};

struct Context {
    const ExperimentConfig& cfg;
    std::uint64_t seed;
    std::size_t workers;
    Outputs& out;
    RunManifest& manifest;
};

std::vector<std::size_t> path_sites(const ExperimentConfig& cfg) {
    std::vector<std::size_t> s;
    for (std::size_t k = 0; k < cfg.sites_per_path; ++k) s.push_back(k * cfg.grid.nx / cfg.sites_per_path);
    return s;
}

FieldSnapshot full_path(const ExperimentConfig& cfg, std::uint64_t seed, std::size_t p) {
    return solve_full(cfg.grid, cfg.sigma, sample_noise_grid(cfg.grid, seed + p), cfg.t);
}

// u_t at the per-path sites for every path; censored paths dropped and counted.
std::vector<double> marginal_samples(const Context& c, std::size_t& censored) {
    const auto sites = path_sites(c.cfg);
    const auto per_path = parallel_map(c.cfg.paths, c.workers, [&](std::size_t p) {
        const FieldSnapshot f = full_path(c.cfg, c.seed, p);
        std::vector<double> v;
        if (f.censored) return v;
        for (auto s : sites) v.push_back(f.values[s]);
        return v;
    });
    std::vector<double> all;
    censored = 0;
    for (const auto& v : per_path) {
        if (v.empty()) ++censored;
        all.insert(all.end(), v.begin(), v.end());
    }
    return all;
}

json grid_json(const GridSpec& g) {
    return {{"nx", g.nx}, {"length", g.length}, {"dx", g.dx()}, {"dt", g.dt}, {"nt", g.nt}};
}

json header(const Context& c) {
    return {{"experiment", experiment_name(c.cfg.experiment)},
            {"sigma", c.cfg.sigma.summary()},
            {"t", c.cfg.t},
            {"paths", c.cfg.paths},
            {"base_seed", c.seed},
            {"grid", grid_json(c.cfg.grid)}};
}

const char* case_name(CaseKind k) { return k == CaseKind::Case1 ? "case1" : "case2"; }

void run_tails(Context& c) {
    std::size_t censored = 0;
    const auto samples = marginal_samples(c, censored);
    c.manifest.censored = censored;
    const CaseKind kind = *c.cfg.case_kind;
    std::vector<double> grid = c.cfg.lambda_grid;
    if (grid.empty()) grid = resolvable_lambda_grid(samples, kind, c.cfg.lambda_lo, c.cfg.lambda_points, c.cfg.min_count);
    const auto rep = survival_curve(samples, grid, kind, censored, c.cfg.min_count);

    std::ostringstream csv;
    csv << "lambda,estimate,ci_lo,ci_hi,count\n";
    for (std::size_t i = 0; i < rep.lambda_requested.size(); ++i) {
        const Interval ci = wilson_interval(rep.count_requested[i], samples.size());
        csv << csv_row({format_double(rep.lambda_requested[i]), format_double(rep.surv_requested[i]),
                        format_double(ci.lo), format_double(ci.hi), std::to_string(rep.count_requested[i])})
            << '\n';
    }
    c.out.text("tails.csv", csv.str());

    json j = header(c);
    j["case"] = case_name(kind);
    j["samples"] = rep.samples;
    j["censored"] = censored;
    j["fit"] = {{"lambda", nums(rep.lambda_grid)}, {"log_surv", nums(rep.log_surv)},
                {"regressor", nums(rep.regressor)}, {"slope", num(rep.slope)},
                {"intercept", num(rep.intercept)}, {"r2", num(rep.r2)}, {"valid", rep.fit_valid},
                {"truncated", rep.truncated}, {"warning", rep.warning}};
    j["mean"] = num(mean(samples));
    j["variance"] = num(variance(samples));
    if (c.cfg.sigma.is_constant()) {
        // Gaussian marginal: variance sigma^2 sqrt(t / pi)
        const double s = c.cfg.sigma(1.0);
        const double var = s * s * std::sqrt(c.cfg.t / std::numbers::pi);
        const double ks = ks_normal(samples, 1.0, std::sqrt(var));
        j["gaussian"] = {{"variance_exact", var},
                         {"variance_rel_error", num(variance(samples) / var - 1.0)},
                         {"ks", num(ks)},
                         {"ks_critical_1pct", num(ks_critical(samples.size(), 0.01))}};
    }
    c.out.json_file("tails.json", j);
}

void run_small_ball(Context& c) {
    const auto sites = path_sites(c.cfg);
    const bool envelope = !c.cfg.envelope_n.empty();
    struct PathOut {
        std::vector<double> v;
        std::vector<std::size_t> hits;
        bool censored = false;
    };
    const auto per_path = parallel_map(c.cfg.paths, c.workers, [&](std::size_t p) {
        const FieldSnapshot f = full_path(c.cfg, c.seed, p);
        PathOut o;
        o.censored = f.censored;
        if (f.censored) return o;
        for (auto s : sites) o.v.push_back(f.values[s]);
        if (envelope) {
            const auto rep = lower_envelope_check(std::span<const FieldSnapshot>(&f, 1), c.cfg.zeta, c.cfg.envelope_n);
            for (const auto& row : rep.rows) o.hits.push_back(row.hits);
        }
        return o;
    });
    std::vector<double> samples;
    std::size_t censored = 0, used = 0;
    std::vector<std::size_t> hits(c.cfg.envelope_n.size(), 0);
    for (const auto& o : per_path) {
        if (o.censored) {
            ++censored;
            continue;
        }
        ++used;
        samples.insert(samples.end(), o.v.begin(), o.v.end());
        for (std::size_t i = 0; i < o.hits.size(); ++i) hits[i] += o.hits[i];
    }
    c.manifest.censored = censored;
    const auto rep = small_ball_curve(samples, c.cfg.eps_grid, {}, censored);

    std::ostringstream csv;
    csv << "eps,estimate,ci_lo,ci_hi,count,prob,upper_bound_only\n";
    for (std::size_t i = 0; i < rep.eps_grid.size(); ++i)
        csv << csv_row({format_double(rep.eps_grid[i]), format_double(rep.normalized[i]),
                        format_double(rep.ci_lo[i]), format_double(rep.ci_hi[i]), std::to_string(rep.counts[i]),
                        format_double(rep.prob[i]), rep.upper_bound_only[i] ? "1" : "0"})
            << '\n';
    c.out.text("small_ball.csv", csv.str());

    json j = header(c);
    j["samples"] = rep.samples;
    j["nonpositive"] = rep.nonpositive;
    j["censored"] = censored;
    j["monotone"] = rep.monotone;
    j["warning"] = rep.warning;
    json moments = json::array();
    if (rep.nonpositive == 0) {
        for (const auto& m : negative_moments(samples, c.cfg.k_list))
            moments.push_back({{"k", m.k}, {"estimate", num(m.estimate)}, {"log_estimate", num(m.log_estimate)},
                               {"stabilized", num(m.stabilized)},
                               {"stabilized_ci", {num(m.stabilized_ci.lo), num(m.stabilized_ci.hi)}},
                               {"top_share", num(m.top_share)}, {"dominated", m.dominated}});
    }
    j["negative_moments"] = moments;
    if (envelope) {
        json rows = json::array();
        for (std::size_t i = 0; i < hits.size(); ++i) {
            const double n = c.cfg.envelope_n[i];
            const double freq = static_cast<double>(hits[i]) / static_cast<double>(used);
            const Interval ci = wilson_interval(hits[i], used);
            rows.push_back({{"n", n}, {"threshold", std::exp(-c.cfg.zeta * std::pow(std::log(n), 2.0 / 3.0))},
                            {"hits", hits[i]}, {"fields", used}, {"frequency", freq},
                            {"ci", {ci.lo, ci.hi}}, {"frequency_n2", freq * n * n}});
        }
        j["lower_envelope"] = {{"zeta", c.cfg.zeta}, {"rows", rows}};
    }
    c.out.json_file("small_ball.json", j);
    if (rep.nonpositive > 0)
        c.manifest.failures.push_back("positivity: " + std::to_string(rep.nonpositive) +
                                      " nonpositive samples under sigma(0) = 0");
}

void run_comparison(Context& c) {
    const GridSpec& g = c.cfg.grid;
    std::vector<double> low(g.nx, 0.0);
    for (std::size_t i = 0; i < g.nx; ++i) {
        const double x = g.x(i);
        if (std::min(x, g.length - x) < c.cfg.low_halfwidth) low[i] = c.cfg.low_level;
    }
    const auto res = parallel_map(c.cfg.paths, c.workers, [&](std::size_t p) {
        return comparison_check(g, c.cfg.sigma, sample_noise_grid(g, c.seed + p), c.cfg.t, low);
    });
    std::ostringstream csv;
    csv << "path,violation_fraction,max_excess,tolerance\n";
    std::size_t violating = 0;
    double worst = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < res.size(); ++p) {
        csv << csv_row({std::to_string(p), format_double(res[p].violation_fraction),
                        format_double(res[p].max_excess), format_double(res[p].tolerance)})
            << '\n';
        violating += res[p].violation_fraction > 0.0;
        worst = std::max(worst, res[p].max_excess);
    }
    c.out.text("comparison.csv", csv.str());
    json j = header(c);
    j["tolerance"] = comparison_tolerance(g);
    j["violating_paths"] = violating;
    j["max_excess"] = num(worst);
    c.out.json_file("comparison.json", j);
    if (violating > 0)
        c.manifest.failures.push_back("comparison: " + std::to_string(violating) + " paths with v_t > u_t + tol");
}

void run_coupling(Context& c) {
    CouplingOptions o;
    o.deltas = c.cfg.deltas;
    o.sites = c.cfg.sites;
    o.workers = c.workers;
    o.bootstrap = c.cfg.bootstrap;
    const auto rep = coupling_moments(c.cfg.grid, c.cfg.sigma, c.cfg.t, c.cfg.schedule, c.cfg.k_list, c.cfg.paths,
                                      c.seed, o);
    c.manifest.censored = rep.censored;
    std::ostringstream csv;
    write_coupling_csv(rep, csv);
    c.out.text("coupling.csv", csv.str());
    c.out.text("coupling.json", coupling_report_json(rep) + "\n");
}

json witness_json(const LagClassWitness& w) {
    return {{"lag", w.lag}, {"beta", w.beta}, {"n", w.n}, {"slack_cells", w.slack_cells},
            {"window_cells", w.window_cells}, {"cone_cells", w.cone_cells}};
}

void run_correlation_length(Context& c) {
    CorrelationOptions o;
    o.schedule = c.cfg.ln_schedule;
    o.sites = c.cfg.sites;
    o.workers = c.workers;
    const auto f = correlation_frontier(c.cfg.grid, c.cfg.sigma, c.cfg.t, c.cfg.eps_grid, c.cfg.deltas, c.cfg.paths,
                                        c.seed, o);
    c.manifest.censored = f.censored;
    std::ostringstream csv;
    write_frontier_csv(f, csv);
    c.out.text("coupling_probes.csv", csv.str());
    c.out.text("frontier.json", correlation_frontier_json(f) + "\n");

    // The largest witness gets the exact cone test.
    json witnesses = json::array();
    const CorrelationLength* widest = nullptr;
    for (const auto& r : f.results) {
        json row{{"epsilon", r.epsilon}, {"delta", r.delta}, {"achieved", r.achieved}};
        if (r.achieved) {
            row["witness"] = witness_json(r.witness);
            if (!widest || r.lag > widest->lag) widest = &r;
        }
        witnesses.push_back(row);
    }
    json j = header(c);
    j["witnesses"] = witnesses;
    if (widest && c.cfg.cone_trials > 0) {
        const auto ct = cone_test(c.cfg.grid, c.cfg.sigma, c.cfg.t, widest->witness.beta, widest->witness.n, 0,
                                  c.cfg.cone_trials, c.seed, c.workers);
        j["cone_test"] = {{"beta", widest->witness.beta}, {"n", widest->witness.n}, {"trials", ct.trials},
                          {"outside_identical", ct.outside_identical}, {"inside_changed", ct.inside_changed},
                          {"exact", ct.exact()}};
        if (!ct.exact()) c.manifest.failures.push_back("cone test: resampling outside the cone moved U");
    }
    c.out.json_file("witness.json", j);
}

void run_exceedance(Context& c) {
    std::vector<double> alphas{c.cfg.alpha};
    for (double a : c.cfg.alphas)
        if (std::find(alphas.begin(), alphas.end(), a) == alphas.end()) alphas.push_back(a);
    const CaseKind kind = *c.cfg.case_kind;
    const auto& R = c.cfg.R_grid;
    // per path: measures[alpha][R], empty when censored
    const auto per_path = parallel_map(c.cfg.paths, c.workers, [&](std::size_t p) {
        const FieldSnapshot f = full_path(c.cfg, c.seed, p);
        std::vector<std::vector<double>> m;
        if (f.censored) return m;
        for (double a : alphas) {
            std::vector<double> row;
            for (double r : R) row.push_back(exceedance_measure(f, r, {kind, a}));
            m.push_back(row);
        }
        return m;
    });
    std::size_t censored = 0;
    for (const auto& m : per_path) censored += m.empty();
    c.manifest.censored = censored;

    std::ostringstream curve;
    curve << "alpha,slope,ci_lo,ci_hi,degenerate,median_at_Rmax,empty_frequency_at_Rmax\n";
    json reports = json::array();
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        std::vector<std::vector<double>> measures(R.size());
        for (const auto& m : per_path) {
            if (m.empty()) continue;
            for (std::size_t r = 0; r < R.size(); ++r) measures[r].push_back(m[ai][r]);
        }
        const auto rep = exceedance_scaling({kind, alphas[ai]}, R, measures, c.cfg.bootstrap,
                                            stream_key(c.seed, 0xE0 + ai));
        if (ai == 0) {
            std::ostringstream csv;
            write_scaling_csv(rep, csv);
            c.out.text("scaling.csv", csv.str());
        }
        curve << csv_row({format_double(alphas[ai]), format_double(rep.slope), format_double(rep.ci_lo),
                          format_double(rep.ci_hi), rep.degenerate ? "1" : "0", format_double(rep.medians.back()),
                          format_double(rep.empty_frequency.back())})
              << '\n';
        reports.push_back({{"alpha", alphas[ai]}, {"R", nums(rep.R_grid)}, {"thresholds", nums(rep.thresholds)},
                           {"medians", nums(rep.medians)}, {"empty_frequency", nums(rep.empty_frequency)},
                           {"slope", num(rep.slope)}, {"ci", {num(rep.ci_lo), num(rep.ci_hi)}},
                           {"degenerate", rep.degenerate}, {"narrow_span", rep.narrow_span}});
    }
    c.out.text("alpha_curve.csv", curve.str());
    json j = header(c);
    j["case"] = case_name(kind);
    j["censored"] = censored;
    j["scaling"] = reports;
    c.out.json_file("exceedance.json", j);
}

void run_islands(Context& c) {
    const auto& R = c.cfg.R_grid;
    const double Rmax = *std::max_element(R.begin(), R.end());
    struct PathOut {
        std::vector<double> longest;
        std::vector<IslandRecord> islands;
        bool censored = false;
    };
    const auto per_path = parallel_map(c.cfg.paths, c.workers, [&](std::size_t p) {
        const FieldSnapshot f = full_path(c.cfg, c.seed, p);
        PathOut o;
        o.censored = f.censored;
        if (f.censored) return o;
        o.islands = find_islands(f, c.cfg.a, c.cfg.b, Rmax);
        for (double r : R) o.longest.push_back(longest_island(f, c.cfg.a, c.cfg.b, r));
        return o;
    });
    std::ostringstream isl;
    isl << "path,left,right,length,peak,a,b\n";
    std::size_t censored = 0;
    std::vector<std::vector<double>> J(R.size());
    for (std::size_t p = 0; p < per_path.size(); ++p) {
        const auto& o = per_path[p];
        if (o.censored) {
            ++censored;
            continue;
        }
        for (const auto& i : o.islands)
            isl << csv_row({std::to_string(p), format_double(i.left), format_double(i.right), format_double(i.length),
                            format_double(i.peak), format_double(i.a), format_double(i.b)})
                << '\n';
        for (std::size_t r = 0; r < R.size(); ++r) J[r].push_back(o.longest[r]);
    }
    c.manifest.censored = censored;
    c.out.text("islands.csv", isl.str());

    std::ostringstream csv;
    csv << "R,max_J,max_J_over_log2,ci_lo,ci_hi,median_J,fields\n";
    json rows = json::array();
    for (std::size_t r = 0; r < R.size(); ++r) {
        const auto& v = J[r];
        const double l2 = std::pow(std::log(R[r]), 2.0);
        const double mx = v.empty() ? kNaN : *std::max_element(v.begin(), v.end());
        Interval ci{kNaN, kNaN};
        if (!v.empty()) {
            auto reps = bootstrap(v.size(), 500, stream_key(c.seed, 0x15 + r), [&](std::span<const std::size_t> idx) {
                double m = 0.0;
                for (auto i : idx) m = std::max(m, v[i]);
                return m / l2;
            });
            ci = percentile_interval(std::move(reps));
        }
        const double med = v.empty() ? kNaN : median(v);
        csv << csv_row({format_double(R[r]), format_double(mx), format_double(mx / l2), format_double(ci.lo),
                        format_double(ci.hi), format_double(med), std::to_string(v.size())})
            << '\n';
        rows.push_back({{"R", R[r]}, {"max_J", num(mx)}, {"max_J_over_log2", num(mx / l2)},
                        {"ci", {num(ci.lo), num(ci.hi)}}, {"median_J", num(med)}});
    }
    c.out.text("longest.csv", csv.str());
    json j = header(c);
    j["a"] = c.cfg.a;
    j["b"] = c.cfg.b;
    j["censored"] = censored;
    j["rows"] = rows;
    c.out.json_file("islands.json", j);
}

void run_good_index(Context& c) {
    const auto& R = c.cfg.R_grid;
    const auto per_path = parallel_map(c.cfg.paths, c.workers, [&](std::size_t p) {
        const FieldSnapshot f = full_path(c.cfg, c.seed, p);
        std::vector<GoodIndexScan> scans;
        if (f.censored) return scans;
        for (double r : R) scans.push_back(good_index_scan(f, c.cfg.a, c.cfg.b, c.cfg.delta, c.cfg.spacing_c, r));
        return scans;
    });
    std::size_t censored = 0;
    for (const auto& s : per_path) censored += s.empty();
    c.manifest.censored = censored;

    std::ostringstream csv;
    csv << "R,log_R,indices,p_good,mean_max_bad_gap,max_max_bad_gap,mean_max_bad_progression\n";
    json rows = json::array();
    for (std::size_t r = 0; r < R.size(); ++r) {
        double p = 0.0, gap = 0.0, prog = 0.0;
        std::size_t worst = 0, n = 0, indices = 0;
        for (const auto& s : per_path) {
            if (s.empty()) continue;
            p += s[r].good_fraction;
            gap += static_cast<double>(s[r].max_bad_gap);
            prog += static_cast<double>(s[r].max_bad_progression);
            worst = std::max(worst, s[r].max_bad_gap);
            indices = s[r].flags.size();
            ++n;
        }
        const double dn = static_cast<double>(std::max<std::size_t>(n, 1));
        csv << csv_row({format_double(R[r]), format_double(std::log(R[r])), std::to_string(indices),
                        format_double(p / dn), format_double(gap / dn), std::to_string(worst),
                        format_double(prog / dn)})
            << '\n';
        rows.push_back({{"R", R[r]}, {"indices", indices}, {"p_good", p / dn}, {"mean_max_bad_gap", gap / dn},
                        {"max_max_bad_gap", worst}, {"mean_max_bad_progression", prog / dn}});
    }
    c.out.text("good_index.csv", csv.str());
    json j = header(c);
    j["a"] = c.cfg.a;
    j["b"] = c.cfg.b;
    j["delta"] = c.cfg.delta;
    j["c"] = c.cfg.spacing_c;
    j["rows"] = rows;
    for (const auto& s : per_path) {
        if (s.empty()) continue;
        j["first_path_scan"] = json::parse(good_index_json(s.back()));
        break;
    }
    c.out.json_file("good_index.json", j);
}

void run_sojourn(Context& c) {
    const ExperimentConfig& cfg = c.cfg;
    json j = header(c);
    double beta = 0.0;
    int n = 0;
    if (cfg.beta && cfg.picard_n) {
        beta = *cfg.beta;
        n = *cfg.picard_n;
        j["lag_source"] = "configured";
    } else {
        // Measure the lag on a grid just wide enough for the schedule's windows.
        const int nmax = *std::max_element(cfg.ln_schedule.begin(), cfg.ln_schedule.end());
        const double need = std::max(20.0 * std::sqrt(cfg.t), 4.0 * std::sqrt(nmax * cfg.t));
        const auto nx = static_cast<std::size_t>(std::ceil(need / cfg.dx / 8.0 - 1e-9)) * 8;
        const GridSpec lag_grid = GridSpec::from_resolution(cfg.dx, static_cast<double>(nx) * cfg.dx, cfg.dt, cfg.t);
        CorrelationOptions o;
        o.schedule = cfg.ln_schedule;
        o.workers = c.workers;
        o.sites = cfg.sites;
        const auto cl = estimate_correlation_length(lag_grid, cfg.sigma, cfg.t, cfg.lag_eps, cfg.delta,
                                                    cfg.lag_paths, stream_key(c.seed, 0x1A6), o);
        if (!cl.achieved)
            throw InsufficientDataError("no lag in the schedule reaches epsilon=" + format_double(cfg.lag_eps));
        beta = cl.witness.beta;
        n = cl.witness.n;
        j["lag_source"] = "measured";
        j["lag_grid"] = grid_json(lag_grid);
    }
    const LagClassWitness w = make_witness(cfg.grid, cfg.t, beta, n);
    const double ell = w.lag;
    j["witness"] = witness_json(w);

    const LocalizedKernel kernel(cfg.grid, steps_to(cfg.grid, cfg.t), w.window_cells);
    const int ns[] = {n};
    auto picard = [&](std::uint64_t seed) {
        return solve_picard_sequence(cfg.grid, cfg.sigma, sample_noise_grid(cfg.grid, seed), cfg.t, beta, ns,
                                     kernel)[0];
    };

    // Independent calibration fields, read one lag apart.
    const auto step = static_cast<std::size_t>(std::ceil(ell / cfg.grid.dx()));
    const auto cal = parallel_map(cfg.calibration, c.workers, [&](std::size_t k) {
        const FieldSnapshot f = picard(c.seed + cfg.paths + k);
        std::vector<double> v;
        if (f.censored) return v;
        for (std::size_t i = 0; i + step <= cfg.grid.nx; i += step) v.push_back(f.values[i]);
        return v;
    });
    std::vector<double> calibration;
    for (const auto& v : cal) calibration.insert(calibration.end(), v.begin(), v.end());
    const UpperQuantile G(calibration);
    j["calibration_values"] = calibration.size();

    const std::vector<int> ms{cfg.blocks, cfg.blocks * cfg.multiplier};
    struct PathOut {
        std::vector<SojournResult> res;
        std::vector<std::vector<double>> blocks;
        bool censored = false;
    };
    const auto per_path = parallel_map(cfg.paths, c.workers, [&](std::size_t p) {
        const FieldSnapshot Y = picard(c.seed + p);
        PathOut o;
        o.censored = Y.censored;
        if (Y.censored) return o;
        for (int m : ms) {
            const auto r = sojourn_statistic(Y, ell, m, cfg.alpha, G);
            o.res.push_back(r);
            o.blocks.push_back(block_integrals(Y, ell, m, r.threshold_used));
        }
        return o;
    });

    std::ostringstream csv;
    csv << "path,n,value,normalized,threshold\n";
    std::size_t censored = 0;
    for (std::size_t p = 0; p < per_path.size(); ++p) {
        if (per_path[p].censored) {
            ++censored;
            continue;
        }
        for (const auto& r : per_path[p].res)
            csv << csv_row({std::to_string(p), std::to_string(r.n), format_double(r.value), format_double(r.normalized),
                            format_double(r.threshold_used)})
                << '\n';
    }
    c.manifest.censored = censored;
    c.out.text("sojourn.csv", csv.str());

    json levels = json::array();
    std::vector<double> l2;
    for (std::size_t mi = 0; mi < ms.size(); ++mi) {
        std::vector<double> values;
        std::vector<std::vector<double>> blocks;
        for (const auto& o : per_path) {
            if (o.censored) continue;
            values.push_back(o.res[mi].value);
            blocks.push_back(o.blocks[mi]);
        }
        const double mv = mean(values);
        json norms = json::array();
        for (int k : cfg.k_list) {
            double acc = 0.0;
            for (double v : values) acc += std::pow(std::abs(v / mv - 1.0), k);
            const double direct = std::pow(acc / static_cast<double>(values.size()), 1.0 / k);
            const auto bm = block_moment_detail(blocks, k);
            if (k == 2) l2.push_back(direct);
            norms.push_back({{"k", k}, {"direct", num(direct)}, {"block_estimate", num(bm.estimate)},
                             {"odd_norm", num(bm.odd_norm)}, {"even_norm", num(bm.even_norm)},
                             {"minkowski_bound", num(bm.minkowski_bound)}});
        }
        levels.push_back({{"n", ms[mi]}, {"threshold", num(per_path.front().censored ? kNaN : per_path.front().res[mi].threshold_used)},
                          {"mean_value", num(mv)}, {"norms", norms}});
    }
    j["alpha"] = cfg.alpha;
    j["ell"] = ell;
    j["levels"] = levels;
    j["censored"] = censored;
    if (l2.size() == 2) {
        j["l2_ratio"] = num(l2[1] / l2[0]);
        j["l2_ratio_predicted"] = std::pow(static_cast<double>(cfg.multiplier), -(0.5 - cfg.alpha));
    }
    c.out.json_file("sojourn.json", j);
}

}  // namespace

const char* code_version() { return SHEFIELDS_VERSION; }

std::string manifest_json(const RunManifest& m) {
    json j{{"config_hash", m.config_hash},
           {"code_version", m.code_version},
           {"experiment", m.experiment},
           {"wall_time_seconds", m.wall_time_seconds},
           {"outputs", m.outputs},
           {"censored", m.censored},
           {"status", m.status},
           {"failures", m.failures}};
    return j.dump(2) + "\n";
}

RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    RunManifest m;
    m.config_hash = hex64(cfg.hash);
    m.code_version = code_version();
    m.experiment = experiment_name(cfg.experiment);
    const fs::path dir(opts.out_dir);
    fs::create_directories(dir);
    Outputs out(dir, m);
    Context c{cfg, opts.seed_override.value_or(cfg.base_seed), opts.workers, out, m};

    try {
        out.text("config.canonical", cfg.canonical);
        switch (cfg.experiment) {
            case Experiment::Coupling: run_coupling(c); break;
            case Experiment::CorrelationLength: run_correlation_length(c); break;
            case Experiment::Exceedance: run_exceedance(c); break;
            case Experiment::Islands: run_islands(c); break;
            case Experiment::Sojourn: run_sojourn(c); break;
            case Experiment::Tails: run_tails(c); break;
            case Experiment::SmallBall: run_small_ball(c); break;
            case Experiment::Comparison: run_comparison(c); break;
            case Experiment::GoodIndex: run_good_index(c); break;
        }
        if (!m.failures.empty()) m.status = "invariant_failed";
    } catch (const std::exception& e) {
        m.status = "failed";
        m.failures.push_back(e.what());
    }
    m.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    m.outputs.push_back("manifest.json");
    std::ofstream(dir / "manifest.json", std::ios::binary) << manifest_json(m);
    return m;
}

}  // namespace shefields
