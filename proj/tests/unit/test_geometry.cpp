#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include <json.hpp>

#include "../oracles/island_scan.hpp"
#include "shefields/error.hpp"
#include "shefields/geometry.hpp"
#include "shefields/random.hpp"

using namespace shefields;

namespace {

FieldSnapshot make_field(std::size_t nx, double length, const std::function<double(double)>& f) {
    FieldSnapshot s;
    const double dx = length / static_cast<double>(nx);
    s.grid = GridSpec::make(nx, length, dx * dx / 2.0, 1);
    s.values.resize(nx);
    for (std::size_t i = 0; i < nx; ++i) s.values[i] = f(static_cast<double>(i) * dx);
    return s;
}

FieldSnapshot from_values(std::vector<double> v, double dx) {
    FieldSnapshot s;
    s.grid = GridSpec::make(v.size(), dx * static_cast<double>(v.size()), dx * dx / 2.0, 1);
    s.values = std::move(v);
    return s;
}

}  // namespace

TEST_CASE("gauge closed forms") {
    const double e = std::numbers::e;
    CHECK(gauge({CaseKind::Case2, 1.0}, e) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(gauge({CaseKind::Case1, 1.0}, e) == doctest::Approx(e).epsilon(1e-15));
    CHECK(gauge({CaseKind::Case1, 2.0}, std::exp(8.0)) == doctest::Approx(std::exp(8.0)).epsilon(1e-13));
    // below e the log+ convention pins the gauge
    CHECK(gauge({CaseKind::Case2, 0.3}, 0.5) == gauge({CaseKind::Case2, 0.3}, e));
    CHECK_THROWS_AS(gauge({CaseKind::Case1, 1.0}, 0.0), DomainError);
    CHECK_THROWS_AS(gauge({CaseKind::Case1, 0.0}, 5.0), DomainError);
}

TEST_CASE("gauge is non-decreasing in R and alpha") {
    for (auto kind : {CaseKind::Case1, CaseKind::Case2}) {
        for (double alpha : {0.05, 0.2, 1.0, 3.0}) {
            double prev = 0.0;
            for (double R = 0.1; R < 1e6; R *= 1.37) {
                const double g = gauge({kind, alpha}, R);
                CHECK(g >= prev);
                CHECK(gauge({kind, alpha * 1.1}, R) >= g);
                prev = g;
            }
        }
    }
}

TEST_CASE("exceedance measure examples") {
    const GaugeCase gc{CaseKind::Case1, 0.5};
    const double R = 10.0;
    const double g = gauge(gc, R);
    auto ones = make_field(400, 20.0, [](double) { return 1.0; });
    CHECK(g > 1.0);
    CHECK(exceedance_measure(ones, R, gc) == 0.0);
    auto high = make_field(400, 20.0, [g](double) { return g + 1.0; });
    CHECK(exceedance_measure(high, R, gc) == doctest::Approx(R).epsilon(1e-14));

    // tent of height 2 over [0.2, 0.6]: above 1 on its middle half
    auto tent = make_field(100, 1.0, [](double x) {
        const double d = std::abs(x - 0.4);
        return d < 0.2 ? 2.0 * (1.0 - d / 0.2) : 0.0;
    });
    CHECK(exceedance_measure_at(tent, 1.0, 1.0) == doctest::Approx(0.2).epsilon(1e-12));
    // R between grid points, cutting the tent on its way down
    CHECK(exceedance_measure_at(tent, 0.455, 1.0) == doctest::Approx(0.155).epsilon(1e-12));
    CHECK_THROWS_AS(exceedance_measure_at(tent, 1.5, 1.0), ConfigError);
}

TEST_CASE("exceedance measure monotone and additive") {
    SplitMix64 rng(11);
    std::vector<double> v(512);
    for (auto& x : v) x = 0.5 + 2.0 * rng.uniform();
    auto f = from_values(v, 0.05);
    double prev = 1e300;
    for (double thr = 0.4; thr < 2.6; thr += 0.05) {
        const double m = exceedance_measure_at(f, 20.0, thr);
        CHECK(m <= prev + 1e-12);
        prev = m;
    }
    // [0, 20] = [0, 7.3] + [7.3, 20]: the tail piece is bounded by its length
    const double a = exceedance_measure_at(f, 7.3, 1.5);
    const double b = exceedance_measure_at(f, 20.0, 1.5);
    CHECK(b - a >= -1e-12);
    CHECK(b - a <= 20.0 - 7.3 + 1e-12);
    // fine-sampling oracle of the interpolant
    double brute = 0.0;
    const std::size_t sub = 2000;
    for (std::size_t i = 0; i < 400; ++i)
        for (std::size_t k = 0; k < sub; ++k) {
            const double w = (static_cast<double>(k) + 0.5) / static_cast<double>(sub);
            if (v[i] + w * (v[i + 1] - v[i]) >= 1.5) brute += 0.05 / static_cast<double>(sub);
        }
    CHECK(b == doctest::Approx(brute).epsilon(1e-3));
}

TEST_CASE("scaling degenerate and regular branches") {
    std::vector<double> R{10, 40, 160, 640};
    std::vector<std::vector<double>> zeros(4, std::vector<double>(50, 0.0));
    auto rep = exceedance_scaling({CaseKind::Case1, 0.5}, R, zeros);
    CHECK(rep.degenerate);
    CHECK(std::isnan(rep.slope));
    for (double fr : rep.empty_frequency) CHECK(fr == 1.0);
    CHECK_FALSE(rep.narrow_span);

    // |E| = R^0.6 exactly, jittered per field
    std::vector<std::vector<double>> m(4);
    SplitMix64 rng(3);
    for (std::size_t r = 0; r < 4; ++r)
        for (int i = 0; i < 200; ++i) m[r].push_back(std::pow(R[r], 0.6) * (0.9 + 0.2 * rng.uniform()));
    rep = exceedance_scaling({CaseKind::Case2, 0.2}, R, m, 500, 9);
    CHECK_FALSE(rep.degenerate);
    CHECK(rep.slope == doctest::Approx(0.6).epsilon(0.02));
    CHECK(rep.ci_lo < 0.6);
    CHECK(rep.ci_hi > 0.6);
    CHECK(rep.ci_hi - rep.ci_lo < 0.05);

    std::vector<double> short_grid{64, 128, 256, 512};
    rep = exceedance_scaling({CaseKind::Case2, 0.2}, short_grid, m, 100, 1);
    CHECK(rep.narrow_span);
    CHECK_THROWS_AS(exceedance_scaling({CaseKind::Case2, 0.2}, std::vector<double>{1, 2, 3}, zeros),
                    InsufficientDataError);
}

TEST_CASE("islands on hand-built profiles") {
    auto ones = make_field(160, 8.0, [](double) { return 1.0; });
    CHECK(find_islands(ones, 1.5, 2.5, 8.0).empty());
    CHECK(longest_island(ones, 1.5, 2.5, 8.0) == 0.0);

    auto plateau = make_field(160, 8.0, [](double x) {
        if (x <= 1.5 || x >= 4.5) return 1.0;
        if (x < 2.0) return 1.0 + 4.0 * (x - 1.5);
        if (x > 4.0) return 3.0 - 4.0 * (x - 4.0);
        return 3.0;
    });
    auto isl = find_islands(plateau, 1.5, 2.5, 8.0);
    REQUIRE(isl.size() == 1);
    CHECK(isl[0].left == doctest::Approx(1.625).epsilon(1e-12));
    CHECK(isl[0].right == doctest::Approx(4.375).epsilon(1e-12));
    CHECK(isl[0].peak == 3.0);
    CHECK(isl[0].length == doctest::Approx(2.75).epsilon(1e-12));
    CHECK(find_islands(plateau, 1.5, 3.5, 8.0).empty());

    CHECK_THROWS_AS(find_islands(plateau, 1.0, 2.5, 8.0), PreconditionError);
    CHECK_THROWS_AS(find_islands(plateau, 2.0, 2.0, 8.0), PreconditionError);
    CHECK_THROWS_AS(find_islands(plateau, 1.5, 2.5, 9.0), ConfigError);
}

TEST_CASE("longest of two islands") {
    const double dx = 0.05;
    std::vector<double> v(200, 1.0);
    auto put = [&](double lo, double hi) {
        const auto i0 = static_cast<std::size_t>(std::lround(lo / dx));
        const auto i1 = static_cast<std::size_t>(std::lround(hi / dx));
        v[i0] = 1.5;
        v[i1] = 1.5;
        for (std::size_t i = i0 + 1; i < i1; ++i) v[i] = 3.0;
    };
    put(1.0, 1.5);
    put(3.0, 4.25);
    auto f = from_values(v, dx);
    auto isl = find_islands(f, 1.5, 2.5, 9.0);
    REQUIRE(isl.size() == 2);
    CHECK(isl[0].length == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(isl[1].length == doctest::Approx(1.25).epsilon(1e-12));
    CHECK(longest_island(f, 1.5, 2.5, 9.0) == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("islands touching the window edge or below resolution are dropped") {
    const double dx = 0.1;
    std::vector<double> v(100, 1.0);
    for (std::size_t i = 0; i < 5; ++i) v[i] = 3.0;     // starts above a at x = 0
    for (std::size_t i = 40; i < 60; ++i) v[i] = 3.0;   // cut by R = 5
    v[80] = 3.0;                                       // one-point spike: length 0.15 < 2 dx
    auto f = from_values(v, dx);
    CHECK(find_islands(f, 1.5, 2.5, 5.0).empty());
    CHECK(find_islands(f, 1.5, 2.5, 9.5).size() == 1);  // the middle one, now whole
}

TEST_CASE("find_islands matches brute-force scan on random fields") {
    std::mt19937_64 gen(20240611);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::size_t total = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t nx = 64 + static_cast<std::size_t>(U(gen) * 400);
        const double dx = 0.02 + 0.2 * U(gen);
        std::vector<double> v(nx);
        double walk = 1.0 + U(gen);
        for (auto& x : v) {
            walk = std::clamp(walk + 0.6 * (U(gen) - 0.5), 0.3, 4.0);
            x = walk;
        }
        if (trial % 7 == 0)
            for (std::size_t i = 0; i < nx; i += 3) v[i] = 1.8;  // values sitting exactly at a
        auto f = from_values(v, dx);
        const std::size_t last = nx / 2 + static_cast<std::size_t>(U(gen) * static_cast<double>(nx / 2 - 1));
        const double R = static_cast<double>(last) * dx;
        const double a = 1.8, b = 2.4;
        auto got = find_islands(f, a, b, R);
        auto want = oracle::scan_islands(v, dx, a, b, last);
        if (got.size() != want.size()) {
            for (auto& g : got) MESSAGE("got " << g.left << " " << g.right << " " << g.peak);
            for (auto& w : want) MESSAGE("want " << w.left << " " << w.right << " " << w.peak);
            MESSAGE("R " << R << " dx " << dx << " trial " << trial);
        }
        REQUIRE(got.size() == want.size());
        for (std::size_t k = 0; k < got.size(); ++k) {
            CHECK(got[k].left == doctest::Approx(want[k].left).epsilon(1e-12));
            CHECK(got[k].right == doctest::Approx(want[k].right).epsilon(1e-12));
            CHECK(got[k].peak == want[k].peak);
            CHECK(got[k].peak > b);
            CHECK(got[k].left >= 0.0);
            CHECK(got[k].right <= R);
            if (k > 0) CHECK(got[k - 1].right <= got[k].left);
        }
        total += got.size();
    }
    CHECK(total > 500);
}

TEST_CASE("upper quantile") {
    std::vector<double> cal;
    for (int i = 1; i <= 100; ++i) cal.push_back(i);
    UpperQuantile G(cal);
    CHECK(G(0.1) == 91.0);
    CHECK(G(1.0) == 1.0);
    CHECK(G(0.3) == 71.0);
    CHECK(G.survival(91.0) == doctest::Approx(0.1));
    CHECK(G.survival(0.0) == 1.0);
    CHECK(G.survival(101.0) == 0.0);
    CHECK_THROWS_AS(G(0.05), QuantileResolutionError);
    CHECK_THROWS_AS(G(0.0), QuantileResolutionError);
    CHECK_THROWS_AS(G(1.5), QuantileResolutionError);
}

TEST_CASE("sojourn statistic extremes and preconditions") {
    auto f = make_field(400, 40.0, [](double x) { return 2.0 + std::sin(x); });
    std::vector<double> low(1000, 0.5), high(1000, 10.0);
    const auto below = sojourn_statistic(f, 2.0, 8, 0.25, UpperQuantile(low));
    CHECK(below.value == doctest::Approx(16.0).epsilon(1e-12));
    CHECK(below.threshold_used == 0.5);
    const auto above = sojourn_statistic(f, 2.0, 8, 0.25, UpperQuantile(high));
    CHECK(above.value == 0.0);

    // level 1: threshold at the calibration minimum, the whole span on a field above it
    std::vector<double> cal;
    for (int i = 0; i < 200; ++i) cal.push_back(0.9 + 0.001 * i);
    UpperQuantile G(cal);
    const auto r = sojourn_statistic(f, 1.5, 10, 0.25, G);
    CHECK(r.threshold_used >= 0.9);
    CHECK(r.value >= 0.0);
    CHECK(r.value <= 15.0);

    CHECK_THROWS_AS(sojourn_statistic(f, 2.0, 8, 0.5, G), PreconditionError);
    CHECK_THROWS_AS(sojourn_statistic(f, 0.5, 8, 0.25, G), PreconditionError);
    CHECK_THROWS_AS(sojourn_statistic(f, 2.0, 30, 0.25, G), ConfigError);
    CHECK_THROWS_AS(sojourn_statistic(f, 2.0, 8, 0.25, UpperQuantile(std::vector<double>(5, 1.0))),
                    QuantileResolutionError);
}

TEST_CASE("block integrals sum to the sojourn") {
    auto f = make_field(1000, 50.0, [](double x) { return 1.0 + 0.5 * std::sin(3.0 * x); });
    std::vector<double> cal;
    for (int i = 0; i < 5000; ++i) cal.push_back(0.5 + 1.0 * i / 5000.0);
    UpperQuantile G(cal);
    const auto s = sojourn_statistic(f, 3.3, 12, 0.2, G);
    const auto blocks = block_integrals(f, 3.3, 12, s.threshold_used);
    double sum = 0.0;
    for (double z : blocks) {
        CHECK(z >= 0.0);
        CHECK(z <= 3.3 + 1e-12);
        sum += z;
    }
    CHECK(sum == doctest::Approx(s.value).epsilon(1e-12));
}

TEST_CASE("block moment estimate") {
    std::vector<std::vector<double>> det(3, std::vector<double>(50, 0.7));
    CHECK(block_moment_estimate(det, 2) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(block_moment_estimate(det, 2)) < 1e-12);

    // independent uniforms: direct sample moment across many paths as the oracle
    const std::size_t paths = 20000, n = 1000;
    std::vector<std::vector<double>> blocks(paths, std::vector<double>(n));
    std::vector<double> sums(paths, 0.0);
    for (std::size_t p = 0; p < paths; ++p) {
        SplitMix64 rng(stream_key(77, p));
        for (auto& z : blocks[p]) {
            z = rng.uniform();
            sums[p] += z;
        }
    }
    double ms = 0.0;
    for (double s : sums) ms += s;
    ms /= static_cast<double>(paths);
    double direct2 = 0.0, direct4 = 0.0;
    for (double s : sums) {
        const double d = s / ms - 1.0;
        direct2 += d * d;
        direct4 += d * d * d * d;
    }
    direct2 = std::sqrt(direct2 / static_cast<double>(paths));
    direct4 = std::pow(direct4 / static_cast<double>(paths), 0.25);
    const auto r2 = block_moment_detail(blocks, 2);
    CHECK(r2.estimate == doctest::Approx(direct2).epsilon(0.02));
    CHECK(r2.estimate == doctest::Approx(std::sqrt(1.0 / 12.0 / 1000.0) / 0.5).epsilon(0.02));
    CHECK(r2.minkowski_bound >= r2.estimate);
    CHECK(r2.odd_norm == doctest::Approx(r2.even_norm).epsilon(1e-12));
    const auto r4 = block_moment_detail(blocks, 4);
    CHECK(r4.estimate == doctest::Approx(direct4).epsilon(1e-12));
    // Gaussian limit: ||.||_4 = 3^{1/4} ||.||_2
    CHECK(r4.odd_norm / r2.odd_norm == doctest::Approx(std::pow(3.0, 0.25)).epsilon(0.01));

    CHECK_THROWS_AS(block_moment_estimate({{1, 2, 3}}, 2), InsufficientDataError);
    CHECK_THROWS_AS(block_moment_estimate({{1, 2, 3, 4}}, 3), PreconditionError);
    CHECK_THROWS_AS(block_moment_estimate({{1, 2, 3, 4, 5}}, 4), InsufficientDataError);
}

TEST_CASE("block moments of a one-dependent sequence") {
    // Z_j = (e_j + e_{j+1}) / 2 with e iid uniform: blocks one apart correlate, two apart do not
    const std::size_t paths = 4000, n = 400;
    std::vector<std::vector<double>> blocks(paths, std::vector<double>(n));
    std::vector<double> sums(paths, 0.0);
    for (std::size_t p = 0; p < paths; ++p) {
        SplitMix64 rng(stream_key(5, p));
        double prev = rng.uniform();
        for (auto& z : blocks[p]) {
            const double e = rng.uniform();
            z = 0.5 * (prev + e);
            prev = e;
            sums[p] += z;
        }
    }
    // exact: Var(sum) = (n-1)/12 + 2 * (1/16)/12... computed from sum = e_0/2 + e_1 + ... + e_{n-1} + e_n/2
    const double var = (static_cast<double>(n) - 1.0) / 12.0 + 2.0 * 0.25 / 12.0;
    const double exact = std::sqrt(var) / (0.5 * static_cast<double>(n));
    CHECK(block_moment_estimate(blocks, 2) == doctest::Approx(exact).epsilon(0.02));
    // one path alone suffices at k = 2
    CHECK(block_moment_estimate({blocks[0]}, 2) == doctest::Approx(exact).epsilon(0.25));
}

TEST_CASE("good index scan") {
    auto ones = make_field(4000, 40.0, [](double) { return 1.0; });
    auto scan = good_index_scan(ones, 1.5, 2.0, 0.1, 1.0, 40.0);
    CHECK(scan.positions.size() == 11);
    CHECK(scan.flags.size() == 9);
    CHECK(scan.max_bad_gap == scan.flags.size());
    CHECK(scan.good_fraction == 0.0);

    const double step = std::log(40.0);
    auto alt = make_field(4000, 40.0, [step](double x) {
        const auto j = static_cast<long>(std::lround(x / step));
        return j % 3 == 1 ? 3.0 : 1.0;
    });
    scan = good_index_scan(alt, 1.5, 2.0, 0.1, 1.0, 40.0);
    for (std::size_t j = 0; j < scan.flags.size(); ++j) CHECK(scan.flags[j] == (j % 3 == 0));
    CHECK(scan.max_bad_gap == 2);
    CHECK(scan.max_bad_progression == scan.flags.size() / 3);

    auto j = nlohmann::json::parse(good_index_json(scan));
    CHECK(j["max_bad_gap"] == 2);
    CHECK(j["flags"].size() == scan.flags.size());

    CHECK_THROWS_AS(good_index_scan(ones, 1.5, 2.0, 0.1, 3.0, 40.0), ConfigError);
    CHECK_THROWS_AS(good_index_scan(ones, 1.5, 2.0, 0.3, 1.0, 40.0), PreconditionError);
    CHECK_THROWS_AS(good_index_scan(ones, 2.5, 2.0, 0.1, 1.0, 40.0), PreconditionError);
    CHECK_THROWS_AS(good_index_scan(ones, 1.5, 2.0, 0.1, 0.0, 40.0), PreconditionError);
}
