#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "shefields/solver.hpp"

namespace shefields {

struct GaugeCase {
    CaseKind kind = CaseKind::Case1;
    double alpha = 0.0;
};

/// Case1: exp(alpha (log+ R)^{2/3}); Case2: alpha (log+ R)^{1/2}; log+ R = log(max(R, e)).
double gauge(const GaugeCase& gc, double R);

/// Lebesgue measure of {x in [0, R]: field(x) >= threshold} for the
/// piecewise-linear interpolant of the grid values. R must not exceed the domain.
double exceedance_measure_at(const FieldSnapshot& field, double R, double threshold);
inline double exceedance_measure(const FieldSnapshot& field, double R, const GaugeCase& gc) {
    return exceedance_measure_at(field, R, gauge(gc, R));
}

struct ScalingReport {
    GaugeCase gauge_case;
    std::vector<double> R_grid;
    std::vector<double> thresholds;
    std::vector<double> medians;
    std::vector<double> empty_frequency;
    std::vector<std::size_t> fields;
    bool degenerate = false;      // a zero median: slope undefined, see empty_frequency
    bool narrow_span = false;     // R grid spans less than 1.5 decades
    double slope = 0.0;
    double ci_lo = 0.0;           // 95% bootstrap over fields within each R
    double ci_hi = 0.0;
};

/// Slope of log median |E_alpha(R)| against log R. measures[r] holds the
/// ensemble of measures at R_grid[r]. Needs at least 4 values of R.
ScalingReport exceedance_scaling(const GaugeCase& gc, std::span<const double> R_grid,
                                 const std::vector<std::vector<double>>& measures,
                                 std::size_t replicates = 2000, std::uint64_t seed = 0);

/// Measures every field at every R, then fits as above.
ScalingReport exceedance_scaling_fields(std::span<const FieldSnapshot> fields, const GaugeCase& gc,
                                        std::span<const double> R_grid,
                                        std::size_t replicates = 2000, std::uint64_t seed = 0);

void write_scaling_csv(const ScalingReport& rep, std::ostream& out);

struct IslandRecord {
    double left = 0.0;
    double right = 0.0;
    double length = 0.0;
    double peak = 0.0;
    double a = 0.0;
    double b = 0.0;
};

/// Maximal intervals inside [0, R] bounded by level-a crossings of the
/// interpolated field, above a inside and peaking above b. Intervals touching
/// 0 or R and those shorter than two grid cells are dropped. Needs 1 < a < b.
std::vector<IslandRecord> find_islands(const FieldSnapshot& field, double a, double b, double R);

/// Length of the longest (a, b)-island in [0, R]; 0 if none.
double longest_island(const FieldSnapshot& field, double a, double b, double R);

void write_islands_csv(std::span<const IslandRecord> islands, std::ostream& out);

/// Empirical upper quantile G(level) = sup{b : P{Y >= b} >= level} of a calibration sample.
class UpperQuantile {
public:
    explicit UpperQuantile(std::vector<double> calibration);

    /// Raises QuantileResolutionError unless level is in (0, 1] and the sample
    /// holds at least 10 / level values.
    double operator()(double level) const;

    /// Empirical P{Y >= b}.
    double survival(double b) const;
    std::size_t size() const noexcept { return desc_.size(); }

private:
    std::vector<double> desc_;  // sorted, largest first
};

struct SojournResult {
    double alpha = 0.0;
    int n = 0;
    double ell = 0.0;
    double value = 0.0;           // measure of {x in [0, n ell]: Y >= threshold}
    double threshold_used = 0.0;  // G((n ell)^{-alpha})
    double normalized = 0.0;      // value / (n ell P{Y >= threshold})
};

/// Riemann-sum sojourn of Y above G((n ell)^{-alpha}) over [0, n ell].
/// Needs alpha in (0, 1/2), ell >= 1 and n ell within the domain.
SojournResult sojourn_statistic(const FieldSnapshot& Y, double ell, int n, double alpha,
                                const UpperQuantile& G);

/// Integrals of 1{Y >= threshold} over consecutive blocks [j ell, (j+1) ell), j < n.
std::vector<double> block_integrals(const FieldSnapshot& Y, double ell, int n, double threshold);

struct BlockMomentResult {
    int k = 0;
    double estimate = 0.0;         // || sum Z / E sum Z - 1 ||_k
    double odd_norm = 0.0;         // same norm of the odd-block sum, from iid cumulants
    double even_norm = 0.0;
    double minkowski_bound = 0.0;  // odd_norm + even_norm scaled to the full sum
    std::size_t blocks = 0;
    std::size_t paths = 0;
};

/// Estimates ||Y/EY - 1||_k for Y = sum_j Z_j with Z_j from a lag-ell field
/// sampled in blocks of width ell. blocks[p] are one path's block integrals.
/// k = 2 uses the one-dependent variance identity (works on a single path);
/// larger even k use the across-path sample moment and need two or more paths.
BlockMomentResult block_moment_detail(const std::vector<std::vector<double>>& blocks, int k);
double block_moment_estimate(const std::vector<std::vector<double>>& blocks, int k);

struct GoodIndexScan {
    std::vector<bool> flags;        // flags[j]: j good
    std::vector<double> positions;  // x_j = c j log R
    std::size_t max_bad_gap = 0;    // longest run of consecutive bad indices
    std::size_t max_bad_progression = 0;  // longest bad run along j, j+3, j+6, ...
    double good_fraction = 0.0;
};

/// j is good iff Y(x_j) < a - delta, Y(x_{j+2}) < a - delta and Y(x_{j+1}) > b + delta,
/// with Y read by linear interpolation. Needs 1 < a < b, a - 2 delta > 1 and
/// at least 6 points x_j in [0, R].
GoodIndexScan good_index_scan(const FieldSnapshot& field, double a, double b, double delta,
                              double spacing_c, double R);

std::string good_index_json(const GoodIndexScan& scan);

}  // namespace shefields
