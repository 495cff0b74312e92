#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "shefields/solver.hpp"

namespace shefields {

// ---------------------------------------------------------------- basic estimators

double mean(std::span<const double> x);
/// Unbiased sample variance.
double variance(std::span<const double> x);
double standard_error(std::span<const double> x);
double pearson(std::span<const double> a, std::span<const double> b);

/// Linear interpolation quantile of already sorted data, p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);
double median(std::vector<double> x);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    std::size_t points = 0;
};

/// Ordinary least squares of y on x. Needs two distinct abscissae.
LinearFit ols(std::span<const double> x, std::span<const double> y);

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return lo <= v && v <= hi; }
};

inline constexpr double kZ95TwoSided = 1.959963984540054;
inline constexpr double kZ95OneSided = 1.6448536269514722;

/// Wilson score interval for k successes out of n at normal quantile z.
Interval wilson_interval(std::size_t k, std::size_t n, double z = kZ95TwoSided);
/// One-sided Wilson upper bound (95% by default).
double wilson_upper(std::size_t k, std::size_t n, double z = kZ95OneSided);

/// Bootstrap replicates of a statistic over resampled index sets. Each
/// replicate draws n indices with replacement from a stream keyed by seed.
std::vector<double> bootstrap(std::size_t n, std::size_t replicates, std::uint64_t seed,
                              const std::function<double(std::span<const std::size_t>)>& stat);

/// Percentile interval of replicate values at the given two-sided level.
Interval percentile_interval(std::vector<double> replicates, double level = 0.95);

double normal_cdf(double x);
/// One-sample Kolmogorov-Smirnov distance against Normal(mu, sd^2).
double ks_normal(std::vector<double> samples, double mu, double sd);
/// Two-sample Kolmogorov-Smirnov distance.
double ks_two_sample(std::vector<double> a, std::vector<double> b);
/// Asymptotic critical value of the one-sample KS distance at level alpha.
double ks_critical(std::size_t n, double alpha = 0.01);

// ---------------------------------------------------------------- tails

/// Fit of the empirical survival function against the case's tail shape.
struct TailFitReport {
    CaseKind tail_case = CaseKind::Case1;
    std::vector<double> lambda_requested;
    std::vector<double> surv_requested;       // empirical survival at every requested lambda
    std::vector<std::size_t> count_requested;
    std::vector<double> lambda_grid;          // resolvable subset used in the fit
    std::vector<double> log_surv;
    std::vector<double> regressor;            // (log lambda)^{3/2} or lambda^2
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    bool fit_valid = false;
    bool truncated = false;
    std::string warning;
    std::size_t samples = 0;
    std::size_t censored = 0;
};

/// Case1: P{u > lambda} regressed on (log lambda)^{3/2}, lambda > 1.
/// Case2: P{u - 1 > lambda} regressed on lambda^2, lambda > 0.
/// Only grid points with at least `min_count` exceedances enter the fit.
TailFitReport survival_curve(std::span<const double> samples, std::span<const double> lambda_grid,
                             CaseKind tail_case, std::size_t censored = 0,
                             std::size_t min_count = 10);

/// Equispaced grid from lo up to the largest lambda still holding min_count exceedances.
std::vector<double> resolvable_lambda_grid(std::span<const double> samples, CaseKind tail_case,
                                           double lo, std::size_t points, std::size_t min_count = 10);

// ---------------------------------------------------------------- small values

struct NegativeMoment {
    int k = 0;
    double estimate = 0.0;      // E[u^-k]; may overflow to inf, see log_estimate
    double log_estimate = 0.0;
    double stabilized = 0.0;    // (log k / k)^3 log E[u^-k]
    Interval stabilized_ci;     // jackknife, 95%
    double top_share = 0.0;     // largest single term / sum
    bool dominated = false;     // top_share > 0.5
};

/// Harmonic-type estimator of negative moments. k must lie in [1, 20];
/// a nonpositive sample raises PositivityViolation.
std::vector<NegativeMoment> negative_moments(std::span<const double> samples,
                                             std::span<const int> k_list);

struct SmallBallReport {
    std::vector<double> eps_grid;
    std::vector<std::size_t> counts;
    std::vector<double> prob;
    std::vector<double> log_prob;       // -inf on zero counts
    std::vector<double> normalized;     // log_prob / |log eps|
    std::vector<double> ci_lo;          // normalized scale, 95%
    std::vector<double> ci_hi;
    std::vector<bool> upper_bound_only; // zero count: only ci_hi is informative
    std::vector<NegativeMoment> moment_estimates;
    std::size_t samples = 0;
    std::size_t nonpositive = 0;
    std::size_t censored = 0;
    bool monotone = true;               // normalized non-increasing as eps decreases, within CI
    std::string warning;
};

SmallBallReport small_ball_curve(std::span<const double> samples, std::span<const double> eps_grid,
                                 std::span<const int> k_list = {}, std::size_t censored = 0);

struct EnvelopeRow {
    double n = 0.0;
    double threshold = 0.0;
    std::size_t hits = 0;
    std::size_t fields = 0;
    double frequency = 0.0;
    Interval ci;
    double frequency_n2 = 0.0;
};

struct LowerEnvelopeReport {
    double zeta = 0.0;
    std::vector<EnvelopeRow> rows;
    bool non_increasing = true;
};

/// Frequency over fields of inf_{x in (n, 2n)} u(x) < exp(-zeta (log n)^{2/3}).
/// Windows are read at grid points; (n, 2n) must fit in the domain.
LowerEnvelopeReport lower_envelope_check(std::span<const FieldSnapshot> fields, double zeta,
                                         std::span<const double> n_grid);

}  // namespace shefields
