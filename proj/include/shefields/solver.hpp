#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "shefields/noise.hpp"

namespace shefields {

/// Values above this magnitude mark a path as censored.
inline constexpr double kCensorCap = 1e12;

enum class BoundedShape { Constant, Sine, Logistic };

/// Case1: sigma(z) = q z. Case2: 0 < inf sigma <= sup sigma < inf.
enum class CaseKind { Case1, Case2 };

/// The nonlinearity sigma in du = (1/2) u'' dt + sigma(u) dW.
class SigmaSpec {
public:
    enum class Kind { Pam, BoundedPositive, Custom };

    /// sigma(z) = q z.
    static SigmaSpec pam(double q);
    /// lo <= sigma <= hi; Constant requires lo == hi.
    static SigmaSpec bounded(double lo, double hi, BoundedShape shape);
    static SigmaSpec constant(double c) { return bounded(c, c, BoundedShape::Constant); }
    /// Arbitrary Lipschitz function; the constant is spot-checked on random pairs.
    static SigmaSpec custom(std::function<double(double)> fn, double lip_const, std::string name);
    /// sigma(z) = slope z + intercept, the built-in custom family.
    static SigmaSpec affine(double slope, double intercept);

    double operator()(double z) const;

    Kind kind() const noexcept { return kind_; }
    double q() const noexcept { return q_; }
    double lo() const noexcept { return lo_; }
    double hi() const noexcept { return hi_; }
    BoundedShape shape() const noexcept { return shape_; }
    double lipschitz() const noexcept { return lip_; }
    double value_at_zero() const { return (*this)(0.0); }
    bool is_constant() const noexcept {
        return kind_ == Kind::BoundedPositive && shape_ == BoundedShape::Constant;
    }

    /// out[i] = u[i] + sigma(u[i]) * xi[i].
    void add_noise_term(std::span<const double> u, std::span<const double> xi,
                        std::span<double> out) const;

    /// Stable human-readable description, e.g. "pam(q=1)".
    std::string summary() const;

private:
    Kind kind_ = Kind::Pam;
    double q_ = 1.0;
    double lo_ = 0.0;
    double hi_ = 0.0;
    BoundedShape shape_ = BoundedShape::Constant;
    double lip_ = 0.0;
    std::function<double(double)> fn_;
    std::string name_;
};

/// Case of a built-in nonlinearity; empty for custom functions.
std::optional<CaseKind> sigma_case(const SigmaSpec& sigma);

/// Heat kernel of (1/2) d^2/dx^2: exp(-x^2 / 2t) / sqrt(2 pi t).
double heat_kernel(double t, double x);

/// One-step propagator weights k(d) ~ p_dt(d dx) dx for |d| <= r_cells.
///
/// Truncated where the tail mass drops below 1e-12 and normalized so that
/// the stencil maps a constant field to itself exactly.
struct KernelRow {
    double dt_step = 0.0;
    double dx = 0.0;
    std::size_t r_cells = 0;
    std::vector<double> weights;  // index d + r_cells

    double weight(std::ptrdiff_t d) const;

    /// Weights folded onto a ring of nx cells (index = offset mod nx).
    std::vector<double> periodic(std::size_t nx) const;
};

KernelRow make_kernel_row(double dt, double dx);
inline KernelRow make_kernel_row(const GridSpec& spec) { return make_kernel_row(spec.dt, spec.dx()); }

struct Provenance {
    enum class Kind { Full, Localized, Picard };
    Kind kind = Kind::Full;
    double beta = 0.0;
    int n = 0;

    static Provenance full() { return {}; }
    static Provenance localized(double beta) { return {Kind::Localized, beta, 0}; }
    static Provenance picard(double beta, int n) { return {Kind::Picard, beta, n}; }
    std::string describe() const;
    bool operator==(const Provenance&) const = default;
};

/// Spatial profile of one of the coupled fields at a fixed time.
struct FieldSnapshot {
    GridSpec grid;
    double time = 0.0;
    std::vector<double> values;
    Provenance provenance;
    std::uint64_t noise_seed = 0;
    bool censored = false;
};

/// One exponential-Euler step of the mild equation:
///   u'(x_i) = sum_j k(i-j) u(x_j) + sum_j k(i-j) sigma(u(x_j)) dW_j / dx,
/// the stochastic sum restricted to |i-j| <= window_cells when given.
/// Throws NumericalBlowUp (carrying step_index) if a value is not finite.
FieldSnapshot step_mild(const FieldSnapshot& field, std::span<const double> noise_row,
                        const SigmaSpec& sigma, const KernelRow& kernel,
                        std::optional<std::size_t> window_cells, std::size_t step_index = 0);

/// Full solution from u_0 = 1.
FieldSnapshot solve_full(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                         double t_end);

/// Full solution recorded at each of `times` (ascending).
std::vector<FieldSnapshot> solve_full_at(const GridSpec& spec, const SigmaSpec& sigma,
                                         const NoiseGrid& noise, std::span<const double> times);

/// Full solution from an arbitrary initial profile.
FieldSnapshot evolve_from(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                          std::span<const double> initial, double t_end);

/// Window half-width in cells for the localized equation at terminal time t_end.
/// Throws ConfigError if sqrt(beta t_end) exceeds half the domain.
std::size_t window_cells(const GridSpec& spec, double t_end, double beta);

/// True when the window reaches every column of the ring.
bool window_is_vacuous(const GridSpec& spec, std::size_t window);

/// Window-truncated powers K^r of the one-step kernel on the ring, r = 1..steps.
///
/// Shared by the localized solver and every Picard level; depends only on the
/// grid, the number of steps and the window.
class LocalizedKernel {
public:
    LocalizedKernel(const GridSpec& spec, std::size_t steps, std::size_t window);

    std::size_t steps() const noexcept { return steps_; }
    std::size_t window() const noexcept { return window_; }
    /// Whether the antipodal column is counted once on its own (vacuous window, even nx).
    bool antipode() const noexcept { return antipode_; }
    std::size_t width(std::size_t r) const { return width_[r - 1]; }
    const double* row(std::size_t r) const { return values_.data() + (r - 1) * (window_ + 1); }
    double antipode_weight(std::size_t r) const { return antipode_w_[r - 1]; }

private:
    std::size_t steps_;
    std::size_t window_;
    bool antipode_ = false;
    std::vector<std::size_t> width_;
    std::vector<double> values_;
    std::vector<double> antipode_w_;
};

struct PicardOptions {
    /// Trajectory storage above this raises ResourceError.
    std::size_t memory_budget_bytes = std::size_t{2} << 30;
};

/// Localized solution U^(beta): noise enters only within sqrt(beta t_end) of x.
/// A vacuous window reduces to solve_full on the same noise.
FieldSnapshot solve_localized(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                              double t_end, double beta);

/// Picard iterate U^(beta, n); U^(beta, 0) = 1.
FieldSnapshot solve_picard(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                           double t_end, double beta, int n, const PicardOptions& opts = {});

/// Iterates U^(beta, n) for each n in `ns`, sharing one Picard chain.
/// Returned in the order of `ns`.
std::vector<FieldSnapshot> solve_picard_sequence(const GridSpec& spec, const SigmaSpec& sigma,
                                                 const NoiseGrid& noise, double t_end, double beta,
                                                 std::span<const int> ns,
                                                 const LocalizedKernel& kernel,
                                                 const PicardOptions& opts = {});

/// Bytes of trajectory storage a Picard chain needs.
std::size_t picard_required_bytes(const GridSpec& spec, std::size_t steps, std::size_t window);

struct ComparisonResult {
    double violation_fraction = 0.0;
    double max_excess = 0.0;  // max of v - u over the grid
    double tolerance = 0.0;
    bool bit_identical = false;
};

/// Tolerance for order violations between two solutions: 1e-8 + 3 sqrt(dx).
double comparison_tolerance(const GridSpec& spec);

/// Solves from u_0 = 1 and from u0_low <= 1 on shared noise and counts sites
/// where v_t > u_t + tolerance. Requires sigma(0) = 0.
ComparisonResult comparison_check(const GridSpec& spec, const SigmaSpec& sigma,
                                  const NoiseGrid& noise, double t_end,
                                  std::span<const double> u0_low);

}  // namespace shefields
