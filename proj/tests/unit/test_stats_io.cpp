#include <doctest.h>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <stdexcept>

#include "saclab/errors.hpp"
#include "saclab/io.hpp"
#include "saclab/parallel.hpp"
#include "saclab/rng.hpp"
#include "saclab/stats.hpp"

using namespace saclab;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("saclab_unit_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

} // namespace

TEST_SUITE("stats_io") {

TEST_CASE("summary statistics") {
    const std::vector<double> v{3, 1, 2, 10};
    CHECK(stats::mean(v) == 4.0);
    CHECK(stats::median(v) == 2.5);
    CHECK(stats::quantile(v, 0.0) == 1.0);
    CHECK(stats::quantile(v, 1.0) == 10.0);
    CHECK(stats::quantile(v, 0.5) == 2.5);
    CHECK(std::isnan(stats::median(std::vector<double>{})));
    // sd of {3,1,2,10} is sqrt(50/3)
    CHECK(stats::stderr_mean(v) == doctest::Approx(std::sqrt(50.0 / 3.0) / 2.0));
}

TEST_CASE("least squares recovers an exact line and reports its uncertainty") {
    const std::vector<double> x{1, 2, 3, 4, 5};
    std::vector<double> y;
    for (double t : x) y.push_back(2.5 * t - 1.0);
    const auto f = stats::ols(x, y);
    CHECK(f.slope == doctest::Approx(2.5));
    CHECK(f.intercept == doctest::Approx(-1.0));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(f.slope_se == doctest::Approx(0.0).scale(1e-12));
    CHECK(f.n == 5);

    // noisy: slope_se matches the textbook formula
    const std::vector<double> yn{1.0, 2.9, 5.2, 6.8, 9.4};
    const auto g = stats::ols(x, yn);
    double sse = 0.0;
    for (std::size_t i = 0; i < 5; ++i) {
        const double r = yn[i] - g.intercept - g.slope * x[i];
        sse += r * r;
    }
    CHECK(g.slope_se == doctest::Approx(std::sqrt(sse / 3.0 / 10.0)));
    CHECK_THROWS(stats::ols(std::vector<double>{1, 1}, std::vector<double>{1, 2}));
}

TEST_CASE("isotonic regression") {
    const std::vector<double> y{1, 3, 2, 4, 3.5, 5};
    const auto fit = stats::isotonic_increasing(y);
    CHECK(fit == std::vector<double>{1, 2.5, 2.5, 3.75, 3.75, 5});
    const std::vector<double> sorted{0, 0.1, 0.5, 0.5, 1};
    CHECK(stats::isotonic_increasing(sorted) == sorted);

    Rng rng(4);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> z(12), w(12);
        for (std::size_t i = 0; i < 12; ++i) {
            z[i] = standard_normal(rng);
            w[i] = 0.5 + uniform01(rng);
        }
        const auto f = stats::isotonic_increasing(z, w);
        CHECK(std::is_sorted(f.begin(), f.end()));
        // weighted means are preserved
        double a = 0.0, b = 0.0;
        for (std::size_t i = 0; i < 12; ++i) {
            a += w[i] * z[i];
            b += w[i] * f[i];
        }
        CHECK(a == doctest::Approx(b));
    }
}

TEST_CASE("first crossing interpolates linearly") {
    const std::vector<double> x{1, 2, 4}, y{0.0, 0.4, 1.0};
    CHECK(stats::first_crossing(x, y, 0.5) == doctest::Approx(2.0 + 2.0 / 6.0));
    CHECK(stats::first_crossing(x, y, 0.0) == 1.0);
    CHECK(std::isnan(stats::first_crossing(x, y, 1.5)));
}

TEST_CASE("seed derivation") {
    CHECK(derive_seed(1, "a") == derive_seed(1, "a"));
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
    CHECK(derive_seed(1, "a") != derive_seed(2, "a"));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    Rng rng(1);
    double m = 0.0;
    for (int i = 0; i < 20000; ++i) {
        const double u = uniform01(rng);
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        m += u / 20000;
    }
    CHECK(m == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("parallel_for covers every index and propagates errors") {
    std::vector<int> hit(1000, 0);
    parallel_for(hit.size(), [&](std::size_t i) { hit[i] += 1; });
    for (int h : hit) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(50,
                                 [](std::size_t i) {
                                     if (i == 17) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    CHECK(worker_count() >= 1);
}

TEST_CASE("number formatting") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(2.0) == "2");
    CHECK(format_double(std::nan("")) == "nan");
    CHECK(format_double(-HUGE_VAL) == "-inf");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("JSON round trips") {
    const BlockParam b(3, 2, {1, -2, 0, 0, 0.125, 1e-300});
    CHECK(block_param_from_json(to_json(b)) == b);

    FitResult f;
    f.theta_hat = b;
    f.iterations = 12;
    f.kkt_residual = 3e-9;
    f.converged = true;
    f.objective_trace = {3, 2, 1};
    const auto back = fit_result_from_json(to_json(f, true));
    CHECK(back.theta_hat == b);
    CHECK(back.iterations == 12);
    CHECK(back.kkt_residual == 3e-9);
    CHECK(back.converged);

    for (const auto& name : builtin_pomdp_names()) {
        const auto m = builtin_pomdp(name);
        const auto again = pomdp_from_json(to_json(m));
        CHECK(again.transition == m.transition);
        CHECK(again.observation == m.observation);
        CHECK(again.reward == m.reward);
        CHECK(again.gamma == m.gamma);
        CHECK(again.action_tools == m.action_tools);
    }

    GenConfig g;
    g.M = 17;
    g.rho = 0.25;
    g.design = DesignKind::equicorrelated;
    g.seed = 99;
    std::vector<std::string> errs;
    const auto g2 = gen_config_from_json(to_json(g), "", errs);
    CHECK(errs.empty());
    CHECK(g2.M == 17);
    CHECK(g2.rho == 0.25);
    CHECK(g2.design == DesignKind::equicorrelated);
    CHECK(g2.seed == 99);

    SolverConfig s;
    s.lambda = 0.3;
    s.step_rule = StepRule::backtracking;
    const auto s2 = solver_config_from_json(to_json(s), "/solver", errs);
    CHECK(errs.empty());
    CHECK(s2.lambda == 0.3);
    CHECK(s2.step_rule == StepRule::backtracking);
}

TEST_CASE("config readers collect every problem with its path") {
    std::vector<std::string> errs;
    // Unknown keys are the caller's business here: command configs share the object.
    gen_config_from_json(json{{"M", -3}, {"k", "five"}, {"bogus", 1}, {"design", "spiral"}}, "/gen", errs);
    CHECK(errs.size() == 3);
    bool m = false, k = false, design = false;
    for (const auto& e : errs) {
        m |= e.rfind("/gen/M", 0) == 0;
        k |= e.rfind("/gen/k", 0) == 0;
        design |= e.find("/gen/design") != std::string::npos;
    }
    CHECK(m);
    CHECK(k);
    CHECK(design);

    errs.clear();
    solver_config_from_json(json{{"lamda", 0.1}, {"kkt_tol", -1.0}}, "/solver", errs);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].find("/solver/lamda") != std::string::npos);

    errs.clear();
    auto bad = to_json(builtin_pomdp("tiger"));
    bad["gamma"] = 1.0;
    pomdp_from_json(bad, "/model", errs);
    REQUIRE(errs.size() == 1);
    CHECK(errs[0].find("/model/gamma") != std::string::npos);
    CHECK_THROWS_AS(pomdp_from_json(bad), ConfigError);

    CHECK(prefix_fields("/x", "k, M: k must not exceed M") == "/x/k, /x/M: k must not exceed M");
}

TEST_CASE("instances survive a write and read") {
    const auto dir = scratch_dir("instance");
    GenConfig g;
    g.M = 6;
    g.q = 2;
    g.k = 2;
    g.T = 15;
    g.seed = 4;
    for (const auto& inst : {gen_linear_instance(g), gen_interaction_instance(g, 1), gen_grouped_instance(g, 3, 1),
                             inject_contamination(gen_drift_sequence(g, 3), 0.2, 10.0, 1)}) {
        write_instance(inst, dir / "inst.json", json{{"note", "unit"}});
        CHECK(std::filesystem::exists(dir / "inst.csv"));
        const auto back = read_instance(dir / "inst.json");
        CHECK(back.w == inst.w);
        CHECK(back.y == inst.y);
        CHECK(back.theta_star == inst.theta_star);
        CHECK(back.s_star == inst.s_star);
        CHECK(back.group_map == inst.group_map);
        CHECK(back.interactions == inst.interactions);
        CHECK(back.drift_schedule == inst.drift_schedule);
        CHECK(back.contamination_mask == inst.contamination_mask);
        CHECK(read_json_file(dir / "inst.json").contains("provenance"));
    }
    CHECK_THROWS(read_json_file(dir / "missing.json"));
    std::filesystem::remove_all(dir);
}

}
