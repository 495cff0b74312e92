#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "shefields/error.hpp"
#include "shefields/noise.hpp"
#include "shefields/solver.hpp"

using namespace shefields;

namespace {

FieldSnapshot constant_field(const GridSpec& g, double c) {
    FieldSnapshot f;
    f.grid = g;
    f.values.assign(g.nx, c);
    return f;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace

TEST_CASE("heat kernel closed form") {
    CHECK(heat_kernel(1.0, 0.0) == doctest::Approx(0.3989422804).epsilon(1e-10));
    CHECK(heat_kernel(2.0, 0.0) == doctest::Approx(0.2820947918).epsilon(1e-10));
    CHECK(heat_kernel(1.0, 1.0) == doctest::Approx(0.3989422804 * std::exp(-0.5)).epsilon(1e-10));
    CHECK_THROWS_AS(heat_kernel(0.0, 1.0), DomainError);
    CHECK_THROWS_AS(heat_kernel(-1.0, 1.0), DomainError);

    // integral of p_1^2 by composite Simpson on [-20, 20]
    const int m = 40000;
    const double h = 40.0 / m;
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
        const double x = -20.0 + i * h;
        const double w = (i == 0 || i == m) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        const double p = heat_kernel(1.0, x);
        s += w * p * p;
    }
    s *= h / 3.0;
    CHECK(std::abs(s - 1.0 / (2.0 * std::sqrt(std::numbers::pi))) < 1e-8);
}

TEST_CASE("kernel row invariants") {
    for (double dx : {0.01, 0.02, 0.05, 0.1}) {
        for (double ratio : {0.25, 0.5, 1.0}) {
            const KernelRow k = make_kernel_row(ratio * dx * dx, dx);
            REQUIRE(k.weights.size() == 2 * k.r_cells + 1);
            double sum = 0.0;
            for (double w : k.weights) sum += w;
            CHECK(sum >= 1.0 - 1e-10);
            CHECK(sum <= 1.0 + 1e-15);
            for (std::size_t d = 0; d <= k.r_cells; ++d) {
                CHECK(k.weight(static_cast<std::ptrdiff_t>(d)) == k.weight(-static_cast<std::ptrdiff_t>(d)));
            }
            // the truncated tail of the raw kernel carries less than 1e-12
            const double edge = heat_kernel(k.dt_step, static_cast<double>(k.r_cells + 1) * dx) * dx;
            CHECK(edge < 1e-12);
            // folding onto a ring conserves mass
            double ring = 0.0;
            for (double w : k.periodic(2 * k.r_cells + 1)) ring += w;
            CHECK(ring == doctest::Approx(sum).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(make_kernel_row(0.0, 0.1), DomainError);
}

TEST_CASE("step_mild: constant field with zero noise is a fixed point") {
    const GridSpec g = GridSpec::make(64, 3.2, 0.0025, 10);
    const KernelRow k = make_kernel_row(g);
    const std::vector<double> zero(g.nx, 0.0);
    for (const SigmaSpec& s : {SigmaSpec::pam(1.0), SigmaSpec::constant(2.0),
                               SigmaSpec::bounded(0.5, 1.5, BoundedShape::Sine),
                               SigmaSpec::affine(1.0, -1.0)}) {
        const FieldSnapshot out = step_mild(constant_field(g, 1.0), zero, s, k, std::nullopt);
        for (double v : out.values) CHECK(v == 1.0);
        const FieldSnapshot win = step_mild(constant_field(g, 1.0), zero, s, k, std::size_t{2});
        for (double v : win.values) CHECK(v == 1.0);
        CHECK(out.time == doctest::Approx(0.0025));
    }
}

TEST_CASE("step_mild: spike spreads into the kernel row and conserves mass") {
    const GridSpec g = GridSpec::make(64, 3.2, 0.0025, 10);
    const KernelRow k = make_kernel_row(g);
    FieldSnapshot spike = constant_field(g, 0.0);
    spike.values[20] = 1.0;
    const std::vector<double> row(g.nx, 0.3);
    const FieldSnapshot out = step_mild(spike, row, SigmaSpec::affine(0.0, 0.0), k, std::nullopt);
    double mass = 0.0;
    for (std::size_t i = 0; i < g.nx; ++i) {
        mass += out.values[i];
        CHECK(out.values[i] == doctest::Approx(k.weight(static_cast<std::ptrdiff_t>(i) - 20)).epsilon(1e-14));
    }
    CHECK(std::abs(mass - 1.0) < 1e-10);
}

TEST_CASE("step_mild matches a hand evaluation on a 4-point ring") {
    const GridSpec g = GridSpec::make(4, 4.0, 0.5, 1);
    const KernelRow k = make_kernel_row(g);
    FieldSnapshot f = constant_field(g, 0.0);
    f.values = {1.0, 2.0, 0.5, 1.5};
    const std::vector<double> dw = {0.3, -0.2, 0.1, -0.4};
    const FieldSnapshot out = step_mild(f, dw, SigmaSpec::pam(1.0), k, std::nullopt);
    const auto r = static_cast<std::ptrdiff_t>(k.r_cells);
    for (std::ptrdiff_t i = 0; i < 4; ++i) {
        double expect = 0.0;
        for (std::ptrdiff_t d = -r; d <= r; ++d) {
            const auto j = static_cast<std::size_t>(((i - d) % 4 + 4) % 4);
            const double u = f.values[j];
            expect += k.weight(d) * (u + u * dw[j] / 1.0);
        }
        CHECK(std::abs(out.values[static_cast<std::size_t>(i)] - expect) < 1e-12);
    }
}

TEST_CASE("step_mild reports blow-up with the step index") {
    const GridSpec g = GridSpec::make(8, 0.8, 0.01, 1);
    const KernelRow k = make_kernel_row(g);
    std::vector<double> dw(g.nx, 0.0);
    dw[3] = std::numeric_limits<double>::infinity();
    dw[4] = -std::numeric_limits<double>::infinity();
    try {
        step_mild(constant_field(g, 1.0), dw, SigmaSpec::pam(1.0), k, std::nullopt, 7);
        FAIL("expected blow-up");
    } catch (const NumericalBlowUp& e) {
        CHECK(e.step() == 7);
    }
    FieldSnapshot bad = constant_field(g, 1.0);
    bad.values[0] = std::nan("");
    CHECK_THROWS_AS(step_mild(bad, std::vector<double>(g.nx, 0.0), SigmaSpec::pam(1.0), k, std::nullopt),
                    PreconditionError);
}

TEST_CASE("solve_full blow-up carries the offending step") {
    const GridSpec g = GridSpec::make(8, 0.8, 0.01, 6);
    std::vector<double> inc(g.nt * g.nx, 0.0);
    inc[3 * g.nx + 2] = std::numeric_limits<double>::infinity();
    inc[3 * g.nx + 3] = -std::numeric_limits<double>::infinity();
    const NoiseGrid noise = NoiseGrid::from_increments(g, 0, inc);
    try {
        solve_full(g, SigmaSpec::pam(1.0), noise, 0.06);
        FAIL("expected blow-up");
    } catch (const NumericalBlowUp& e) {
        CHECK(e.step() == 3);
    }
}

TEST_CASE("sigma with a zero at 1 leaves the flat profile untouched") {
    const GridSpec g = GridSpec::from_resolution(0.05, 6.4, 0.0025, 0.25);
    const NoiseGrid noise = sample_noise_grid(g, 5);
    const FieldSnapshot u = solve_full(g, SigmaSpec::affine(1.0, -1.0), noise, 0.25);
    for (double v : u.values) CHECK(v == 1.0);
    CHECK(u.provenance == Provenance::full());
    CHECK(u.time == doctest::Approx(0.25));
    CHECK(u.noise_seed == 5);
}

TEST_CASE("solve_full_at records a consistent trajectory") {
    const GridSpec g = GridSpec::from_resolution(0.05, 6.4, 0.0025, 0.25);
    const NoiseGrid noise = sample_noise_grid(g, 11);
    const double times[] = {0.0, 0.1, 0.25};
    const auto snaps = solve_full_at(g, SigmaSpec::pam(1.0), noise, times);
    REQUIRE(snaps.size() == 3);
    for (double v : snaps[0].values) CHECK(v == 1.0);
    CHECK(snaps[1].values == solve_full(g, SigmaSpec::pam(1.0), noise, 0.1).values);
    CHECK(snaps[2].values == solve_full(g, SigmaSpec::pam(1.0), noise, 0.25).values);
}

TEST_CASE("custom sigma Lipschitz spot-check") {
    CHECK_NOTHROW(SigmaSpec::custom([](double z) { return std::sin(z); }, 1.0, "sin"));
    CHECK_THROWS_AS(SigmaSpec::custom([](double z) { return 3.0 * z; }, 1.0, "steep"), ConfigError);
    CHECK_THROWS_AS(SigmaSpec::pam(0.0), ConfigError);
    CHECK_THROWS_AS(SigmaSpec::bounded(0.0, 1.0, BoundedShape::Sine), ConfigError);
    CHECK_THROWS_AS(SigmaSpec::bounded(1.0, 2.0, BoundedShape::Constant), ConfigError);
    const SigmaSpec s = SigmaSpec::bounded(0.5, 1.5, BoundedShape::Logistic);
    for (double z = -50; z <= 50; z += 0.37) {
        CHECK(s(z) >= 0.5);
        CHECK(s(z) <= 1.5);
    }
    CHECK(SigmaSpec::pam(2.0)(3.0) == 6.0);
    CHECK(SigmaSpec::pam(1.0).summary() == "pam(q=1)");
}

TEST_CASE("localized solution") {
    const GridSpec g = GridSpec::from_resolution(0.05, 6.4, 0.0025, 0.25);
    const SigmaSpec pam = SigmaSpec::pam(1.0);

    SUBCASE("zero noise gives the flat profile for any beta") {
        const NoiseGrid zero = NoiseGrid::zero(g);
        for (double beta : {0.5, 4.0, 40.96}) {
            for (double v : solve_localized(g, pam, zero, 0.25, beta).values) CHECK(v == 1.0);
        }
    }
    SUBCASE("vacuous window equals the full solution bit for bit") {
        const NoiseGrid noise = sample_noise_grid(g, 3);
        const double beta = 3.2 * 3.2 / 0.25;  // radius L/2
        const FieldSnapshot loc = solve_localized(g, pam, noise, 0.25, beta);
        CHECK(loc.values == solve_full(g, pam, noise, 0.25).values);
        CHECK(loc.provenance == Provenance::localized(beta));
    }
    SUBCASE("window larger than half the domain is rejected") {
        const NoiseGrid noise = sample_noise_grid(g, 3);
        CHECK_THROWS_AS(solve_localized(g, pam, noise, 0.25, 200.0), ConfigError);
        CHECK_THROWS_AS(solve_picard(g, pam, noise, 0.25, 200.0, 2), ConfigError);
    }
    SUBCASE("localized values stay close to the full solution for a wide window") {
        const NoiseGrid noise = sample_noise_grid(g, 4);
        const FieldSnapshot u = solve_full(g, pam, noise, 0.25);
        const FieldSnapshot loc = solve_localized(g, pam, noise, 0.25, 16.0);
        CHECK(max_abs_diff(u.values, loc.values) < 1e-3);
    }
}

TEST_CASE("Picard iterates") {
    const GridSpec g = GridSpec::from_resolution(0.05, 8.0, 0.0025, 0.25);
    const SigmaSpec pam = SigmaSpec::pam(1.0);
    const NoiseGrid noise = sample_noise_grid(g, 21);

    SUBCASE("level zero is the flat profile") {
        const FieldSnapshot p0 = solve_picard(g, pam, noise, 0.25, 4.0, 0);
        for (double v : p0.values) CHECK(v == 1.0);
        CHECK(p0.provenance == Provenance::picard(4.0, 0));
    }
    SUBCASE("iterates converge to the localized solution") {
        const FieldSnapshot loc = solve_localized(g, pam, noise, 0.25, 4.0);
        const int ns[] = {1, 2, 4, 8, 24};
        const LocalizedKernel k(g, steps_to(g, 0.25), window_cells(g, 0.25, 4.0));
        const auto it = solve_picard_sequence(g, pam, noise, 0.25, 4.0, ns, k);
        double prev = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < 5; ++j) {
            const double err = max_abs_diff(it[j].values, loc.values);
            CHECK(err <= prev);
            prev = err;
        }
        CHECK(prev < 1e-12);
        CHECK(it[2].values == solve_picard(g, pam, noise, 0.25, 4.0, 4).values);
    }
    SUBCASE("vacuous window converges to the full solution") {
        const double beta = 4.0 * 4.0 / 0.25;
        const FieldSnapshot u = solve_full(g, pam, noise, 0.25);
        const FieldSnapshot p = solve_picard(g, pam, noise, 0.25, beta, 24);
        CHECK(max_abs_diff(u.values, p.values) < 1e-12);
    }
    SUBCASE("constant sigma reaches its fixed point after one pass") {
        const SigmaSpec c = SigmaSpec::constant(1.0);
        const FieldSnapshot p1 = solve_picard(g, c, noise, 0.25, 4.0, 1);
        const FieldSnapshot p5 = solve_picard(g, c, noise, 0.25, 4.0, 5);
        CHECK(p1.values == p5.values);
    }
    SUBCASE("dependence cone is exact") {
        const std::size_t w = window_cells(g, 0.25, 4.0);
        const std::size_t x0 = 80;
        for (int n : {1, 2, 3}) {
            const FieldSnapshot base = solve_picard(g, pam, noise, 0.25, 4.0, n);
            const std::size_t radius = static_cast<std::size_t>(n) * w;
            const NoiseGrid outside = resample_outside_window(noise, x0, radius, 99);
            const FieldSnapshot same = solve_picard(g, pam, outside, 0.25, 4.0, n);
            CHECK(same.values[x0] == base.values[x0]);
            const NoiseGrid inside = resample_outside_window(noise, x0, radius - 1, 99);
            CHECK(solve_picard(g, pam, inside, 0.25, 4.0, n).values[x0] != base.values[x0]);
        }
        // the localized equation itself depends on the whole window history
        const FieldSnapshot loc = solve_localized(g, pam, noise, 0.25, 4.0);
        const NoiseGrid far = resample_outside_window(noise, x0, 3 * w, 99);
        CHECK(solve_localized(g, pam, far, 0.25, 4.0).values[x0] != loc.values[x0]);
    }
    SUBCASE("storage budget") {
        PicardOptions tiny;
        tiny.memory_budget_bytes = 1024;
        try {
            solve_picard(g, pam, noise, 0.25, 4.0, 2, tiny);
            FAIL("expected a resource error");
        } catch (const ResourceError& e) {
            CHECK(e.required_bytes() == picard_required_bytes(g, 100, window_cells(g, 0.25, 4.0)));
        }
    }
}

TEST_CASE("comparison principle") {
    const GridSpec g = GridSpec::from_resolution(0.05, 8.0, 0.0025, 0.25);
    const SigmaSpec pam = SigmaSpec::pam(1.0);
    const NoiseGrid noise = sample_noise_grid(g, 8);

    SUBCASE("identical initial data") {
        const ComparisonResult r = comparison_check(g, pam, noise, 0.25, std::vector<double>(g.nx, 1.0));
        CHECK(r.violation_fraction == 0.0);
        CHECK(r.bit_identical);
    }
    SUBCASE("indicator initial data") {
        std::vector<double> v0(g.nx, 0.0);
        for (std::size_t i = 0; i < g.nx; ++i) {
            const double x = g.x(i) - 4.0;
            if (std::abs(x) < 1.0) v0[i] = 1.0;
        }
        const ComparisonResult r = comparison_check(g, pam, noise, 0.25, v0);
        CHECK(r.violation_fraction == 0.0);
        CHECK(r.max_excess <= 0.0);
    }
    SUBCASE("zero noise: linear scaling") {
        const NoiseGrid zero = NoiseGrid::zero(g);
        const std::vector<double> half(g.nx, 0.5);
        const FieldSnapshot v = evolve_from(g, pam, zero, half, 0.25);
        const FieldSnapshot u = solve_full(g, pam, zero, 0.25);
        for (std::size_t i = 0; i < g.nx; ++i) CHECK(v.values[i] == 0.5 * u.values[i]);
        CHECK(comparison_check(g, pam, zero, 0.25, half).violation_fraction == 0.0);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(comparison_check(g, SigmaSpec::constant(1.0), noise, 0.25,
                                         std::vector<double>(g.nx, 1.0)),
                        PreconditionError);
        CHECK_THROWS_AS(comparison_check(g, pam, noise, 0.25, std::vector<double>(g.nx, 1.5)),
                        PreconditionError);
    }
    CHECK(comparison_tolerance(g) == doctest::Approx(1e-8 + 3.0 * std::sqrt(0.05)));
}
