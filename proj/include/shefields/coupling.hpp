#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "shefields/noise.hpp"
#include "shefields/solver.hpp"

namespace shefields {

/// Moment and exceedance summary of u - U^(beta,n) for one (beta, n, k).
struct CouplingEntry {
    double beta = 0.0;
    int n = 0;
    int k = 0;
    double sup_moment = 0.0;     // max over sites of the empirical E|u - U|^k
    double sup_moment_se = 0.0;  // standard error at the maximizing site
    std::size_t sup_site = 0;
    std::vector<double> exceed_prob;  // per probe delta, max over sites
};

/// Log-linear decay of sup moments along beta (n fixed) or n (beta fixed).
struct FittedRate {
    std::string axis;  // "beta" or "n"
    double fixed = 0.0;
    int k = 0;
    std::vector<double> abscissa;
    std::vector<double> log_moment;
    double slope = 0.0;
    double ci_lo = 0.0;  // 95% bootstrap percentile interval over paths
    double ci_hi = 0.0;
    bool valid = false;
};

struct CouplingReport {
    double t = 0.0;
    std::string sigma;
    std::vector<double> deltas;
    std::vector<std::size_t> sites;
    std::vector<CouplingEntry> entries;
    FittedRate rate_beta;
    FittedRate rate_n;
    std::size_t paths = 0;
    std::size_t censored = 0;
};

struct CouplingOptions {
    std::vector<double> deltas{0.01, 0.05, 0.1};
    std::size_t sites = 32;
    std::size_t workers = 0;
    std::size_t bootstrap = 1000;
};

using Schedule = std::vector<std::pair<double, int>>;

/// Runs u and U^(beta,n) on shared noise for every schedule entry and path.
/// Requires paths >= 100; raises DegenerateEnsembleError if every path is censored.
CouplingReport coupling_moments(const GridSpec& spec, const SigmaSpec& sigma, double t,
                                const Schedule& schedule, std::span<const int> k_list,
                                std::size_t paths, std::uint64_t base_seed,
                                const CouplingOptions& opts = {});

/// JSON object with keys t, sigma, entries, fitted_rates, paths, censored.
std::string coupling_report_json(const CouplingReport& rep);
/// One row per entry: beta,n,k,sup_moment,sup_moment_se,sup_site,exceed_<delta>...
void write_coupling_csv(const CouplingReport& rep, std::ostream& out);

/// Evidence that U^(beta,n) belongs to the lag class L(lag).
struct LagClassWitness {
    double lag = 0.0;             // 2 n sqrt(beta t)
    double beta = 0.0;
    int n = 0;
    std::size_t slack_cells = 0;  // zero: the discrete cone is exact
    std::size_t window_cells = 0;
    std::size_t cone_cells = 0;   // n * window_cells, dependence radius of one site
};

LagClassWitness make_witness(const GridSpec& spec, double t, double beta, int n);

struct ScheduleProbe {
    double beta = 0.0;
    int n = 0;
    double lag = 0.0;
    std::vector<std::size_t> max_count;  // per delta, max over sites of #{|u - U| > delta}
    std::vector<double> upper;           // per delta, one-sided 95% Wilson bound of max_count
};

struct CorrelationLength {
    double epsilon = 0.0;
    double delta = 0.0;
    bool achieved = false;
    double lag = 0.0;
    LagClassWitness witness;
};

struct CorrelationFrontier {
    double t = 0.0;
    std::string sigma;
    std::vector<double> epsilons;
    std::vector<double> deltas;
    std::vector<ScheduleProbe> probes;
    std::vector<CorrelationLength> results;  // epsilon-major
    std::size_t paths = 0;
    std::size_t censored = 0;
    // lag against |log eps| per delta over achieved entries
    std::vector<double> lag_slope;
    std::vector<double> ratio_spread;  // max/min of lag / |log eps|

    const CorrelationLength& at(std::size_t eps_index, std::size_t delta_index) const {
        return results[eps_index * deltas.size() + delta_index];
    }
};

struct CorrelationOptions {
    std::vector<int> schedule{1, 2, 3, 4, 6, 8, 12, 16};  // beta = n
    std::size_t sites = 32;
    std::size_t workers = 0;
    bool stop_early = true;  // stop once every (eps, delta) is resolved
};

/// Smallest tested lag 2 n sqrt(beta t) along beta = n whose exceedance
/// probability at every probed site has a one-sided 95% upper bound below eps.
/// Raises InsufficientDataError if eps < 5 / paths.
CorrelationFrontier correlation_frontier(const GridSpec& spec, const SigmaSpec& sigma, double t,
                                         std::span<const double> epsilons,
                                         std::span<const double> deltas, std::size_t paths,
                                         std::uint64_t base_seed, const CorrelationOptions& opts = {});

CorrelationLength estimate_correlation_length(const GridSpec& spec, const SigmaSpec& sigma, double t,
                                              double epsilon, double delta, std::size_t paths,
                                              std::uint64_t base_seed,
                                              const CorrelationOptions& opts = {});

std::string correlation_frontier_json(const CorrelationFrontier& f);
void write_frontier_csv(const CorrelationFrontier& f, std::ostream& out);

struct ConeTestResult {
    std::size_t trials = 0;
    std::size_t outside_identical = 0;  // resampled beyond the cone, value unchanged
    std::size_t inside_changed = 0;     // resampled inside the cone, value changed
    bool exact() const { return outside_identical == trials; }
    double inside_change_rate() const {
        return trials ? static_cast<double>(inside_changed) / static_cast<double>(trials) : 0.0;
    }
};

/// Resamples the noise outside the cone around `site` and checks U^(beta,n)
/// there is bit-identical; also resamples strictly inside the cone, keeping
/// the outside, and counts how often the value moves.
ConeTestResult cone_test(const GridSpec& spec, const SigmaSpec& sigma, double t, double beta, int n,
                         std::size_t site, std::size_t trials, std::uint64_t base_seed,
                         std::size_t workers = 0);

using FieldBuilder = std::function<FieldSnapshot(const NoiseGrid&)>;

struct LagCheckConfig {
    GridSpec spec;
    std::vector<std::size_t> sites_x;
    std::size_t site_z = 0;
    std::size_t lag_cells = 0;   // required periodic separation
    std::size_t cone_cells = 0;  // dependence radius of the built field
    std::size_t paths = 0;
    std::uint64_t base_seed = 0;
    std::size_t cone_trials = 20;
    std::size_t workers = 0;
};

struct LagCheckResult {
    double max_abs_corr = 0.0;
    std::vector<double> correlations;  // one per x site
    double standard_error = 0.0;       // 1/sqrt(paths), the null scale
    bool cone_exact = false;
    std::size_t cone_trials = 0;
};

/// Empirical correlation between the field at separated sites, plus the exact
/// cone test at z. Sites closer than lag_cells raise PreconditionError.
LagCheckResult lag_independence_check(const FieldBuilder& build, const LagCheckConfig& cfg);

}  // namespace shefields
