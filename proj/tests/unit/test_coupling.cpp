#include <doctest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "shefields/coupling.hpp"
#include "shefields/error.hpp"
#include "shefields/parallel.hpp"

using namespace shefields;

namespace {

GridSpec small_grid() { return GridSpec::make(128, 12.8, 0.005, 50); }

}  // namespace

TEST_CASE("parallel map keeps order and rethrows the first failure") {
    const auto v = parallel_map(100, 4, [](std::size_t i) { return i * i; });
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == i * i);
    auto boom = [](std::size_t i) -> int {
        if (i == 13 || i == 70) throw ConfigError("at " + std::to_string(i));
        return 0;
    };
    try {
        parallel_map(100, 4, boom);
        FAIL("expected a throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()) == "at 13");
    }
}

TEST_CASE("lag witness") {
    const auto spec = small_grid();
    const auto w = make_witness(spec, 0.25, 4.0, 3);
    CHECK(w.lag == doctest::Approx(6.0));
    CHECK(w.window_cells == window_cells(spec, 0.25, 4.0));
    CHECK(w.cone_cells == 3 * w.window_cells);
    CHECK(w.slack_cells == 0);
    CHECK_THROWS_AS(make_witness(spec, 0.25, 4.0, -1), PreconditionError);
}

TEST_CASE("coupling moments decay and are worker independent") {
    const auto spec = small_grid();
    const auto sigma = SigmaSpec::pam(1.0);
    const Schedule sched{{1.0, 8}, {2.0, 8}, {4.0, 8}, {4.0, 1}, {4.0, 2}, {4.0, 4}};
    const int ks[] = {2};
    CouplingOptions opts;
    opts.bootstrap = 200;
    opts.workers = 1;
    const auto rep = coupling_moments(spec, sigma, 0.25, sched, ks, 100, 7, opts);
    REQUIRE(rep.entries.size() == sched.size());
    CHECK(rep.entries[0].sup_moment > rep.entries[2].sup_moment);
    CHECK(rep.entries[3].sup_moment > rep.entries[5].sup_moment);
    for (const auto& e : rep.entries) {
        CHECK(e.sup_moment >= 0.0);
        CHECK(e.exceed_prob.size() == opts.deltas.size());
        for (std::size_t d = 1; d < e.exceed_prob.size(); ++d) CHECK(e.exceed_prob[d] <= e.exceed_prob[d - 1]);
    }
    CHECK(rep.rate_beta.valid);
    CHECK(rep.rate_beta.slope < 0.0);
    CHECK(rep.rate_n.valid);
    CHECK(rep.rate_n.slope < 0.0);

    opts.workers = 3;
    const auto again = coupling_moments(spec, sigma, 0.25, sched, ks, 100, 7, opts);
    CHECK(coupling_report_json(rep) == coupling_report_json(again));

    const auto j = nlohmann::json::parse(coupling_report_json(rep));
    for (const char* key : {"t", "sigma", "entries", "fitted_rates", "paths", "censored"}) CHECK(j.contains(key));
    std::ostringstream csv;
    write_coupling_csv(rep, csv);
    CHECK(csv.str().rfind("beta,n,k,", 0) == 0);

    CHECK_THROWS_AS(coupling_moments(spec, sigma, 0.25, sched, ks, 99, 7, opts), ConfigError);
}

TEST_CASE("correlation frontier") {
    const auto spec = small_grid();
    const auto sigma = SigmaSpec::constant(1.0);
    const double eps[] = {0.2, 0.1, 0.05};
    const double deltas[] = {0.05};
    CorrelationOptions opts;
    opts.schedule = {1, 2, 3, 4};
    const auto f = correlation_frontier(spec, sigma, 0.25, eps, deltas, 200, 3, opts);
    double prev = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        const auto& r = f.at(i, 0);
        REQUIRE(r.achieved);
        CHECK(r.lag >= prev);
        CHECK(r.lag == doctest::Approx(r.witness.lag));
        prev = r.lag;
    }
    // the probe counts fall as the schedule advances
    for (std::size_t p = 1; p < f.probes.size(); ++p) CHECK(f.probes[p].max_count[0] <= f.probes[p - 1].max_count[0]);
    const auto j = nlohmann::json::parse(correlation_frontier_json(f));
    CHECK(j.contains("results"));

    const double tiny[] = {0.01};
    CHECK_THROWS_AS(correlation_frontier(spec, sigma, 0.25, tiny, deltas, 200, 3, opts), InsufficientDataError);
}

TEST_CASE("cone test is exact") {
    const auto spec = small_grid();
    const auto r = cone_test(spec, SigmaSpec::pam(1.0), 0.25, 1.0, 2, 40, 10, 11, 1);
    CHECK(r.trials == 10);
    CHECK(r.exact());
    CHECK(r.inside_change_rate() == 1.0);
    CHECK(cone_test(spec, SigmaSpec::constant(1.0), 0.25, 1.0, 3, 0, 4, 12, 1).inside_change_rate() == 1.0);

    // the inside resample is the original stream outside the cone
    const auto noise = sample_noise_grid(spec, 5);
    const auto inside = resample_outside_window(sample_noise_grid(spec, 99), 40, 10, 5);
    for (std::size_t j = 0; j < spec.nt; j += 7)
        for (std::size_t i = 0; i < spec.nx; ++i) {
            if (periodic_distance(i, 40, spec.nx) > 10) CHECK(inside.at(j, i) == noise.at(j, i));
            else CHECK(inside.at(j, i) != noise.at(j, i));
        }
}

TEST_CASE("lag independence check") {
    const auto spec = small_grid();
    const auto sigma = SigmaSpec::constant(1.0);
    const double beta = 1.0;
    const int n = 1;
    const auto w = make_witness(spec, 0.25, beta, n);
    LagCheckConfig cfg;
    cfg.spec = spec;
    cfg.site_z = 10;
    cfg.lag_cells = 2 * w.cone_cells;
    cfg.cone_cells = w.cone_cells;
    cfg.sites_x = {10 + cfg.lag_cells, 70};
    cfg.paths = 400;
    cfg.base_seed = 5;
    cfg.cone_trials = 5;
    const FieldBuilder build = [&](const NoiseGrid& noise) {
        return solve_picard(spec, sigma, noise, 0.25, beta, n);
    };
    const auto r = lag_independence_check(build, cfg);
    CHECK(r.cone_exact);
    CHECK(r.max_abs_corr < 4.0 * r.standard_error);

    cfg.sites_x = {12};
    CHECK_THROWS_AS(lag_independence_check(build, cfg), PreconditionError);
}
