#include "shefields/solver.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <sstream>

#include "shefields/error.hpp"
#include "shefields/random.hpp"

namespace shefields {

// ---------------------------------------------------------------- sigma

SigmaSpec SigmaSpec::pam(double q) {
    if (!(q > 0.0) || !std::isfinite(q)) throw ConfigError("pam: q must be positive");
    SigmaSpec s;
    s.kind_ = Kind::Pam;
    s.q_ = q;
    s.lip_ = q;
    return s;
}

SigmaSpec SigmaSpec::bounded(double lo, double hi, BoundedShape shape) {
    if (!(lo > 0.0) || !std::isfinite(lo)) throw ConfigError("bounded sigma: lo must be positive");
    if (!(hi >= lo) || !std::isfinite(hi)) throw ConfigError("bounded sigma: hi must be >= lo");
    if (shape == BoundedShape::Constant && hi != lo) {
        throw ConfigError("constant sigma requires lo == hi");
    }
    SigmaSpec s;
    s.kind_ = Kind::BoundedPositive;
    s.lo_ = lo;
    s.hi_ = hi;
    s.shape_ = shape;
    switch (shape) {
        case BoundedShape::Constant: s.lip_ = 0.0; break;
        case BoundedShape::Sine: s.lip_ = 0.5 * (hi - lo); break;
        case BoundedShape::Logistic: s.lip_ = 0.25 * (hi - lo); break;
    }
    return s;
}

SigmaSpec SigmaSpec::custom(std::function<double(double)> fn, double lip_const, std::string name) {
    if (!fn) throw ConfigError("custom sigma: empty function");
    if (!(lip_const > 0.0) || !std::isfinite(lip_const)) {
        throw ConfigError("custom sigma: Lipschitz constant must be positive");
    }
    if (!std::isfinite(fn(0.0))) throw ConfigError("custom sigma: value at 0 is not finite");
    // spot-check the Lipschitz bound on random pairs
    SplitMix64 rng(stream_key(0x5167A11Cull, 0));
    for (int trial = 0; trial < 2000; ++trial) {
        const double spread = trial < 1000 ? 4.0 : 100.0;
        const double z = spread * (2.0 * rng.uniform() - 1.0);
        const double w = z + spread * 0.1 * (2.0 * rng.uniform() - 1.0);
        if (z == w) continue;
        const double fz = fn(z);
        const double fw = fn(w);
        if (!std::isfinite(fz) || !std::isfinite(fw)) {
            throw ConfigError("custom sigma: non-finite value during Lipschitz check");
        }
        if (std::abs(fz - fw) > lip_const * std::abs(z - w) * (1.0 + 1e-9) + 1e-12) {
            std::ostringstream msg;
            msg << "custom sigma '" << name << "' violates Lipschitz constant " << lip_const
                << " near z=" << z;
            throw ConfigError(msg.str());
        }
    }
    SigmaSpec s;
    s.kind_ = Kind::Custom;
    s.lip_ = lip_const;
    s.fn_ = std::move(fn);
    s.name_ = std::move(name);
    return s;
}

SigmaSpec SigmaSpec::affine(double slope, double intercept) {
    std::ostringstream name;
    name.precision(17);
    name << "affine(slope=" << slope << ",intercept=" << intercept << ")";
    const double lip = std::max(std::abs(slope), 1e-12);
    return custom([slope, intercept](double z) { return slope * z + intercept; }, lip, name.str());
}

double SigmaSpec::operator()(double z) const {
    switch (kind_) {
        case Kind::Pam: return q_ * z;
        case Kind::BoundedPositive:
            switch (shape_) {
                case BoundedShape::Constant: return lo_;
                case BoundedShape::Sine: return lo_ + (hi_ - lo_) * 0.5 * (1.0 + std::sin(z));
                case BoundedShape::Logistic: return lo_ + (hi_ - lo_) / (1.0 + std::exp(-z));
            }
            break;
        case Kind::Custom: return fn_(z);
    }
    return 0.0;
}

void SigmaSpec::add_noise_term(std::span<const double> u, std::span<const double> xi,
                               std::span<double> out) const {
    const std::size_t n = u.size();
    const double* up = u.data();
    const double* xp = xi.data();
    double* op = out.data();
    if (kind_ == Kind::Pam) {
        const double q = q_;
        for (std::size_t i = 0; i < n; ++i) op[i] = up[i] + (q * up[i]) * xp[i];
    } else if (is_constant()) {
        const double c = lo_;
        for (std::size_t i = 0; i < n; ++i) op[i] = up[i] + c * xp[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) op[i] = up[i] + (*this)(up[i]) * xp[i];
    }
}

std::string SigmaSpec::summary() const {
    std::ostringstream out;
    out.precision(17);
    switch (kind_) {
        case Kind::Pam: out << "pam(q=" << q_ << ")"; break;
        case Kind::BoundedPositive: {
            const char* shape = shape_ == BoundedShape::Constant ? "constant"
                                : shape_ == BoundedShape::Sine   ? "sine"
                                                                 : "logistic";
            out << "bounded:" << shape << "(lo=" << lo_ << ",hi=" << hi_ << ")";
            break;
        }
        case Kind::Custom: out << "custom:" << name_; break;
    }
    return out.str();
}

std::optional<CaseKind> sigma_case(const SigmaSpec& sigma) {
    switch (sigma.kind()) {
        case SigmaSpec::Kind::Pam: return CaseKind::Case1;
        case SigmaSpec::Kind::BoundedPositive: return CaseKind::Case2;
        case SigmaSpec::Kind::Custom: break;
    }
    return std::nullopt;
}

namespace {

// out[i] = sigma(u[i]) * xi[i]
void noise_term(const SigmaSpec& sigma, const double* u, const double* xi, double* out,
                std::size_t n) {
    if (sigma.kind() == SigmaSpec::Kind::Pam) {
        const double q = sigma.q();
        for (std::size_t i = 0; i < n; ++i) out[i] = (q * u[i]) * xi[i];
    } else if (sigma.is_constant()) {
        const double c = sigma.lo();
        for (std::size_t i = 0; i < n; ++i) out[i] = c * xi[i];
    } else {
        for (std::size_t i = 0; i < n; ++i) out[i] = sigma(u[i]) * xi[i];
    }
}

}  // namespace

// ---------------------------------------------------------------- kernel

double heat_kernel(double t, double x) {
    if (!(t > 0.0)) throw DomainError("heat kernel needs t > 0");
    return std::exp(-x * x / (2.0 * t)) / std::sqrt(2.0 * std::numbers::pi * t);
}

double KernelRow::weight(std::ptrdiff_t d) const {
    const std::size_t a = static_cast<std::size_t>(d < 0 ? -d : d);
    if (a > r_cells) return 0.0;
    return weights[r_cells + a];
}

std::vector<double> KernelRow::periodic(std::size_t nx) const {
    std::vector<double> ring(nx, 0.0);
    const auto r = static_cast<std::ptrdiff_t>(r_cells);
    const auto n = static_cast<std::ptrdiff_t>(nx);
    for (std::ptrdiff_t d = -r; d <= r; ++d) {
        ring[static_cast<std::size_t>(((d % n) + n) % n)] += weights[static_cast<std::size_t>(d + r)];
    }
    return ring;
}

namespace {

// Value the stencil produces on a constant field of ones, summed in the
// same order as the stepping loop.
double stencil_on_ones(const std::vector<double>& half) {
    double s = half[0] * 1.0;
    for (std::size_t d = 1; d < half.size(); ++d) s = s + half[d] * (1.0 + 1.0);
    return s;
}

}  // namespace

KernelRow make_kernel_row(double dt, double dx) {
    if (!(dt > 0.0) || !(dx > 0.0)) throw DomainError("kernel row needs dt, dx > 0");
    const double sd_cells = std::sqrt(dt) / dx;
    const auto dmax = static_cast<std::size_t>(std::ceil(40.0 * sd_cells)) + 2;
    std::vector<double> raw(dmax + 1);
    for (std::size_t d = 0; d <= dmax; ++d) raw[d] = heat_kernel(dt, static_cast<double>(d) * dx) * dx;
    double total = raw[0];
    for (std::size_t d = 1; d <= dmax; ++d) total += 2.0 * raw[d];
    // smallest radius whose two-sided tail mass is below 1e-12
    std::size_t r = 0;
    double tail = total - raw[0];
    while (r < dmax && tail / total >= 1e-12) {
        ++r;
        tail -= 2.0 * raw[r];
    }
    std::vector<double> half(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(r + 1));
    double kept = half[0];
    for (std::size_t d = 1; d <= r; ++d) kept += 2.0 * half[d];
    for (double& w : half) w /= kept;
    for (int pass = 0; pass < 16; ++pass) {
        const double s = stencil_on_ones(half);
        if (s == 1.0) break;
        half[0] += 1.0 - s;
    }
    KernelRow row;
    row.dt_step = dt;
    row.dx = dx;
    row.r_cells = r;
    row.weights.resize(2 * r + 1);
    for (std::size_t d = 0; d <= r; ++d) {
        row.weights[r + d] = half[d];
        row.weights[r - d] = half[d];
    }
    return row;
}

namespace {

// Periodic convolution with a symmetric one-step kernel.
class Stencil {
public:
    Stencil(const KernelRow& kernel, std::size_t nx) : nx_(nx), r_(kernel.r_cells) {
        half_.assign(kernel.weights.begin() + static_cast<std::ptrdiff_t>(r_), kernel.weights.end());
        wrapped_ = 2 * r_ + 1 > nx_;
        if (wrapped_) {
            ring_ = kernel.periodic(nx_);
        } else {
            pad_.assign(nx_ + 2 * r_, 0.0);
        }
    }

    std::size_t radius() const { return r_; }

    // out = K * in, optionally restricted to offsets |d| <= limit
    void apply(const double* in, double* out, std::size_t limit = SIZE_MAX) {
        if (wrapped_) {
            apply_dense(in, out, limit);
            return;
        }
        const std::size_t r = r_;
        double* p = pad_.data();
        std::copy(in, in + nx_, p + r);
        std::copy(in + nx_ - r, in + nx_, p);
        std::copy(in, in + r, p + r + nx_);
        const double* c = p + r;
        const double k0 = half_[0];
        for (std::size_t i = 0; i < nx_; ++i) out[i] = k0 * c[i];
        const std::size_t dmax = std::min(r, limit);
        for (std::size_t d = 1; d <= dmax; ++d) {
            const double kd = half_[d];
            const double* lo = c - d;
            const double* hi = c + d;
            for (std::size_t i = 0; i < nx_; ++i) out[i] = out[i] + kd * (hi[i] + lo[i]);
        }
    }

private:
    void apply_dense(const double* in, double* out, std::size_t limit) {
        for (std::size_t i = 0; i < nx_; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < nx_; ++j) {
                const std::size_t off = (i + nx_ - j) % nx_;
                if (limit != SIZE_MAX && periodic_distance(i, j, nx_) > limit) continue;
                s += ring_[off] * in[j];
            }
            out[i] = s;
        }
    }

    std::size_t nx_;
    std::size_t r_;
    bool wrapped_ = false;
    std::vector<double> half_;
    std::vector<double> ring_;
    std::vector<double> pad_;
};

// Scans a freshly computed row. Returns true if the path must be censored.
bool check_row(double* u, std::size_t n, std::size_t step) {
    bool bad = false;
    for (std::size_t i = 0; i < n; ++i) bad |= !(std::abs(u[i]) <= kCensorCap);
    if (!bad) return false;
    bool censored = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (std::isnan(u[i])) throw NumericalBlowUp(step, "NaN in field");
        if (!(std::abs(u[i]) <= kCensorCap)) {
            u[i] = std::copysign(kCensorCap, u[i]);
            censored = true;
        }
    }
    return censored;
}

struct Trajectory {
    std::vector<std::vector<double>> records;
    bool censored = false;
};

// Exponential-Euler stepping from `initial`, recording after each step count in `record_steps`.
Trajectory evolve(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                  std::span<const double> initial, std::span<const std::size_t> record_steps) {
    if (!(noise.spec() == spec)) throw PreconditionError("noise grid does not match the grid spec");
    const std::size_t nx = spec.nx;
    if (initial.size() != nx) throw PreconditionError("initial profile has wrong size");
    const KernelRow kernel = make_kernel_row(spec);
    Stencil stencil(kernel, nx);
    const double dx = spec.dx();

    std::vector<double> u(initial.begin(), initial.end());
    std::vector<double> row(nx), tmp(nx);
    Trajectory out;
    out.records.reserve(record_steps.size());
    std::size_t next = 0;
    std::size_t step = 0;
    auto record_due = [&] {
        while (next < record_steps.size() && record_steps[next] == step) {
            out.records.push_back(u);
            ++next;
        }
    };
    record_due();
    const std::size_t last = record_steps.empty() ? 0 : record_steps.back();
    while (step < last && !out.censored) {
        noise.fill_row(step, row);
        for (double& v : row) v = v / dx;
        sigma.add_noise_term(u, row, tmp);
        stencil.apply(tmp.data(), u.data());
        out.censored = check_row(u.data(), nx, step);
        ++step;
        record_due();
    }
    while (next < record_steps.size()) {
        out.records.push_back(u);
        ++next;
    }
    return out;
}

FieldSnapshot make_snapshot(const GridSpec& spec, double t, std::vector<double> values,
                            Provenance prov, std::uint64_t seed, bool censored) {
    FieldSnapshot s;
    s.grid = spec;
    s.time = t;
    s.values = std::move(values);
    s.provenance = prov;
    s.noise_seed = seed;
    s.censored = censored;
    return s;
}

}  // namespace

std::string Provenance::describe() const {
    std::ostringstream out;
    out.precision(17);
    switch (kind) {
        case Kind::Full: out << "full"; break;
        case Kind::Localized: out << "localized(beta=" << beta << ")"; break;
        case Kind::Picard: out << "picard(beta=" << beta << ",n=" << n << ")"; break;
    }
    return out.str();
}

FieldSnapshot step_mild(const FieldSnapshot& field, std::span<const double> noise_row,
                        const SigmaSpec& sigma, const KernelRow& kernel,
                        std::optional<std::size_t> window_cells, std::size_t step_index) {
    const std::size_t nx = field.grid.nx;
    if (field.values.size() != nx || noise_row.size() != nx) {
        throw PreconditionError("field and noise row must both have nx entries");
    }
    for (double v : field.values) {
        if (!std::isfinite(v)) throw PreconditionError("step_mild input is not finite");
    }
    const double dx = field.grid.dx();
    std::vector<double> xi(nx);
    for (std::size_t i = 0; i < nx; ++i) xi[i] = noise_row[i] / dx;
    Stencil stencil(kernel, nx);
    FieldSnapshot out = field;
    out.time = field.time + kernel.dt_step;
    if (!window_cells) {
        std::vector<double> tmp(nx);
        sigma.add_noise_term(field.values, xi, tmp);
        stencil.apply(tmp.data(), out.values.data());
    } else {
        std::vector<double> h(nx), det(nx), sto(nx);
        noise_term(sigma, field.values.data(), xi.data(), h.data(), nx);
        stencil.apply(field.values.data(), det.data());
        stencil.apply(h.data(), sto.data(), *window_cells);
        for (std::size_t i = 0; i < nx; ++i) out.values[i] = det[i] + sto[i];
    }
    for (double v : out.values) {
        if (!std::isfinite(v)) throw NumericalBlowUp(step_index, "non-finite value in step_mild");
    }
    return out;
}

FieldSnapshot solve_full(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                         double t_end) {
    const double times[] = {t_end};
    return std::move(solve_full_at(spec, sigma, noise, times).front());
}

std::vector<FieldSnapshot> solve_full_at(const GridSpec& spec, const SigmaSpec& sigma,
                                         const NoiseGrid& noise, std::span<const double> times) {
    std::vector<std::size_t> steps;
    for (double t : times) {
        steps.push_back(steps_to(spec, t));
        if (steps.size() > 1 && steps.back() < steps[steps.size() - 2]) {
            throw PreconditionError("record times must be ascending");
        }
    }
    const std::vector<double> ones(spec.nx, 1.0);
    Trajectory traj = evolve(spec, sigma, noise, ones, steps);
    std::vector<FieldSnapshot> out;
    for (std::size_t k = 0; k < times.size(); ++k) {
        out.push_back(make_snapshot(spec, static_cast<double>(steps[k]) * spec.dt,
                                    std::move(traj.records[k]), Provenance::full(), noise.seed(),
                                    traj.censored));
    }
    return out;
}

FieldSnapshot evolve_from(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                          std::span<const double> initial, double t_end) {
    const std::size_t steps[] = {steps_to(spec, t_end)};
    Trajectory traj = evolve(spec, sigma, noise, initial, steps);
    return make_snapshot(spec, static_cast<double>(steps[0]) * spec.dt,
                         std::move(traj.records[0]), Provenance::full(), noise.seed(),
                         traj.censored);
}

// ---------------------------------------------------------------- localization

std::size_t window_cells(const GridSpec& spec, double t_end, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be positive");
    if (!(t_end > 0.0)) throw ConfigError("t_end must be positive");
    const double radius = std::sqrt(beta * t_end);
    if (radius > 0.5 * spec.length * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg << "localization window sqrt(beta*t)=" << radius << " exceeds half the domain ("
            << 0.5 * spec.length << ")";
        throw ConfigError(msg.str());
    }
    const auto cells = static_cast<std::size_t>(std::floor(radius / spec.dx() + 1e-9));
    return std::min(cells, spec.nx / 2);
}

bool window_is_vacuous(const GridSpec& spec, std::size_t window) {
    return 2 * window + 1 >= spec.nx;
}

LocalizedKernel::LocalizedKernel(const GridSpec& spec, std::size_t steps, std::size_t window)
    : steps_(steps), window_(window) {
    const std::size_t nx = spec.nx;
    if (window_is_vacuous(spec, window)) {
        window_ = (nx - 1) / 2;
        antipode_ = nx % 2 == 0;
    }
    const KernelRow kernel = make_kernel_row(spec);
    const std::vector<double> one = kernel.periodic(nx);
    const std::size_t r1 = std::min(kernel.r_cells, nx / 2);
    std::vector<double> cur = one;
    std::vector<double> next(nx);
    width_.resize(steps);
    values_.assign(steps * (window_ + 1), 0.0);
    antipode_w_.assign(steps, 0.0);
    for (std::size_t r = 1; r <= steps; ++r) {
        if (r > 1) {
            // next = cur (*) one on the ring
            for (std::size_t i = 0; i < nx; ++i) {
                double s = one[0] * cur[i];
                for (std::size_t d = 1; d <= r1; ++d) {
                    const double w = one[d];
                    s += w * (cur[(i + d) % nx] + cur[(i + nx - d) % nx]);
                }
                if (2 * r1 == nx) s -= one[r1] * cur[(i + r1) % nx];  // antipode counted twice
                next[i] = s;
            }
            cur.swap(next);
        }
        double* row = values_.data() + (r - 1) * (window_ + 1);
        std::size_t width = 0;
        const double floor_w = cur[0] * 1e-18;
        for (std::size_t d = 0; d <= window_; ++d) {
            row[d] = cur[d];
            if (cur[d] > floor_w) width = d;
        }
        for (std::size_t d = width + 1; d <= window_; ++d) row[d] = 0.0;
        width_[r - 1] = width;
        if (antipode_) antipode_w_[r - 1] = cur[nx / 2];
    }
}

std::size_t picard_required_bytes(const GridSpec& spec, std::size_t steps, std::size_t window) {
    const std::size_t padded = spec.nx + 2 * std::min(window, spec.nx / 2);
    // two padded source trajectories, the scaled noise and the kernel powers
    return sizeof(double) * (2 * steps * padded + steps * spec.nx + steps * (window + 1));
}

namespace {

class MildChain {
public:
    MildChain(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
              const LocalizedKernel& kernel)
        : spec_(spec), sigma_(sigma), kernel_(kernel), nx_(spec.nx), w_(kernel.window()),
          stride_(spec.nx + 2 * kernel.window()), steps_(kernel.steps()) {
        xi_.resize(steps_ * nx_);
        const double dx = spec.dx();
        for (std::size_t j = 0; j < steps_; ++j) {
            std::span<double> row(xi_.data() + j * nx_, nx_);
            noise.fill_row(j, row);
            for (double& v : row) v = v / dx;
        }
        acc_.resize(nx_);
        src_.assign(steps_ * stride_, 0.0);
        dst_.assign(steps_ * stride_, 0.0);
    }

    // Source terms of U^(0) = 1.
    void seed_constant() {
        std::vector<double> ones(nx_, 1.0);
        for (std::size_t m = 0; m < steps_; ++m) {
            noise_term(sigma_, ones.data(), xi_.data() + m * nx_, center(src_, m), nx_);
            pad(src_, m);
        }
    }

    // One mild-form pass: U_s = 1 + sum_{r=1..s} K^r_W * h_{s-r}, reading h from
    // `from` and writing sigma(U_s) xi_s into `to`. from == to gives the
    // localized equation itself (h_s depends only on h_m, m < s).
    std::vector<double> pass(bool in_place) {
        std::vector<double>& from = src_;
        std::vector<double>& to = in_place ? src_ : dst_;
        censored_ = false;
        {
            std::vector<double> ones(nx_, 1.0);
            noise_term(sigma_, ones.data(), xi_.data(), center(to, 0), nx_);
            pad(to, 0);
        }
        std::vector<double> u(nx_);
        for (std::size_t s = 1; s <= steps_; ++s) {
            std::fill(acc_.begin(), acc_.end(), 0.0);
            double* acc = acc_.data();
            for (std::size_t r = 1; r <= s; ++r) {
                const double* h = center(from, s - r);
                const double* k = kernel_.row(r);
                const std::size_t width = kernel_.width(r);
                const double k0 = k[0];
                for (std::size_t i = 0; i < nx_; ++i) acc[i] = acc[i] + k0 * h[i];
                for (std::size_t d = 1; d <= width; ++d) {
                    const double kd = k[d];
                    const double* lo = h - d;
                    const double* hi = h + d;
                    for (std::size_t i = 0; i < nx_; ++i) acc[i] = acc[i] + kd * (hi[i] + lo[i]);
                }
                if (kernel_.antipode()) {
                    const double a = kernel_.antipode_weight(r);
                    const std::size_t half = nx_ / 2;
                    for (std::size_t i = 0; i < nx_; ++i) acc[i] = acc[i] + a * h[(i + half) % nx_];
                }
            }
            for (std::size_t i = 0; i < nx_; ++i) u[i] = 1.0 + acc[i];
            censored_ = check_row(u.data(), nx_, s - 1) || censored_;
            if (s < steps_) {
                noise_term(sigma_, u.data(), xi_.data() + s * nx_, center(to, s), nx_);
                pad(to, s);
            }
        }
        return u;
    }

    bool censored() const { return censored_; }

    // Promote the freshly written terms to the source of the next pass.
    // Returns true if they did not change (fixed point reached).
    bool advance() {
        const bool same = src_ == dst_;
        src_.swap(dst_);
        return same;
    }

private:
    double* center(std::vector<double>& buf, std::size_t m) { return buf.data() + m * stride_ + w_; }

    void pad(std::vector<double>& buf, std::size_t m) {
        double* base = buf.data() + m * stride_;
        double* c = base + w_;
        // left ghost cells hold the tail of the row, right ones its head
        std::copy(c + nx_ - w_, c + nx_, base);
        std::copy(c, c + w_, c + nx_);
    }

    const GridSpec& spec_;
    const SigmaSpec& sigma_;
    const LocalizedKernel& kernel_;
    std::size_t nx_;
    std::size_t w_;
    std::size_t stride_;
    std::size_t steps_;
    std::vector<double> xi_;
    std::vector<double> acc_;
    std::vector<double> src_;
    std::vector<double> dst_;
    bool censored_ = false;
};

void check_budget(const GridSpec& spec, std::size_t steps, std::size_t window,
                  const PicardOptions& opts) {
    const std::size_t need = picard_required_bytes(spec, steps, window);
    if (need > opts.memory_budget_bytes) {
        std::ostringstream msg;
        msg << "Picard trajectory storage needs " << need << " bytes, budget is "
            << opts.memory_budget_bytes;
        throw ResourceError(need, msg.str());
    }
}

}  // namespace

FieldSnapshot solve_localized(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                              double t_end, double beta) {
    const std::size_t window = window_cells(spec, t_end, beta);
    const std::size_t steps = steps_to(spec, t_end);
    if (!(noise.spec() == spec)) throw PreconditionError("noise grid does not match the grid spec");
    if (window_is_vacuous(spec, window)) {
        FieldSnapshot out = solve_full(spec, sigma, noise, t_end);
        out.provenance = Provenance::localized(beta);
        return out;
    }
    check_budget(spec, steps, window, PicardOptions{});
    const LocalizedKernel kernel(spec, steps, window);
    MildChain chain(spec, sigma, noise, kernel);
    std::vector<double> u = chain.pass(true);
    return make_snapshot(spec, static_cast<double>(steps) * spec.dt, std::move(u),
                         Provenance::localized(beta), noise.seed(), chain.censored());
}

FieldSnapshot solve_picard(const GridSpec& spec, const SigmaSpec& sigma, const NoiseGrid& noise,
                           double t_end, double beta, int n, const PicardOptions& opts) {
    if (n < 0) throw PreconditionError("Picard index must be nonnegative");
    const std::size_t window = window_cells(spec, t_end, beta);
    const std::size_t steps = steps_to(spec, t_end);
    if (n == 0) {
        return make_snapshot(spec, static_cast<double>(steps) * spec.dt,
                             std::vector<double>(spec.nx, 1.0), Provenance::picard(beta, 0),
                             noise.seed(), false);
    }
    check_budget(spec, steps, window, opts);
    const LocalizedKernel kernel(spec, steps, window);
    const int ns[] = {n};
    return std::move(solve_picard_sequence(spec, sigma, noise, t_end, beta, ns, kernel, opts).front());
}

std::vector<FieldSnapshot> solve_picard_sequence(const GridSpec& spec, const SigmaSpec& sigma,
                                                 const NoiseGrid& noise, double t_end, double beta,
                                                 std::span<const int> ns,
                                                 const LocalizedKernel& kernel,
                                                 const PicardOptions& opts) {
    if (!(noise.spec() == spec)) throw PreconditionError("noise grid does not match the grid spec");
    const std::size_t steps = steps_to(spec, t_end);
    if (kernel.steps() != steps) throw PreconditionError("kernel powers built for another horizon");
    int top = 0;
    for (int n : ns) {
        if (n < 0) throw PreconditionError("Picard index must be nonnegative");
        top = std::max(top, n);
    }
    const double t = static_cast<double>(steps) * spec.dt;
    std::vector<FieldSnapshot> out(ns.size());
    auto store = [&](int level, const std::vector<double>& u, bool censored) {
        for (std::size_t k = 0; k < ns.size(); ++k) {
            if (ns[k] == level) {
                out[k] = make_snapshot(spec, t, u, Provenance::picard(beta, level), noise.seed(),
                                       censored);
            }
        }
    };
    store(0, std::vector<double>(spec.nx, 1.0), false);
    if (top == 0) return out;
    check_budget(spec, steps, kernel.window(), opts);

    MildChain chain(spec, sigma, noise, kernel);
    chain.seed_constant();
    std::vector<double> u;
    bool censored = false;
    int level = 1;
    for (; level <= top; ++level) {
        u = chain.pass(false);
        censored = chain.censored();
        store(level, u, censored);
        if (level < top && chain.advance()) break;
    }
    // fixed point reached early: later iterates repeat the last one
    for (int later = level + 1; later <= top; ++later) store(later, u, censored);
    return out;
}

// ---------------------------------------------------------------- comparison

double comparison_tolerance(const GridSpec& spec) { return 1e-8 + 3.0 * std::sqrt(spec.dx()); }

ComparisonResult comparison_check(const GridSpec& spec, const SigmaSpec& sigma,
                                  const NoiseGrid& noise, double t_end,
                                  std::span<const double> u0_low) {
    if (sigma.value_at_zero() != 0.0) throw PreconditionError("comparison check needs sigma(0) = 0");
    if (u0_low.size() != spec.nx) throw PreconditionError("u0_low has wrong size");
    for (double v : u0_low) {
        if (!(v >= 0.0 && v <= 1.0)) throw PreconditionError("u0_low must lie in [0, 1]");
    }
    const FieldSnapshot u = solve_full(spec, sigma, noise, t_end);
    const FieldSnapshot v = evolve_from(spec, sigma, noise, u0_low, t_end);
    ComparisonResult res;
    res.tolerance = comparison_tolerance(spec);
    res.bit_identical = u.values == v.values;
    std::size_t bad = 0;
    res.max_excess = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < spec.nx; ++i) {
        const double excess = v.values[i] - u.values[i];
        res.max_excess = std::max(res.max_excess, excess);
        if (excess > res.tolerance) ++bad;
    }
    res.violation_fraction = static_cast<double>(bad) / static_cast<double>(spec.nx);
    return res;
}

}  // namespace shefields
