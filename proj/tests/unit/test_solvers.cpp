#include <doctest.h>

#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "../oracles/oracles.hpp"
#include "saclab/errors.hpp"
#include "saclab/rng.hpp"
#include "saclab/solvers.hpp"

using namespace saclab;

namespace {

Eigen::MatrixXd dense(const ProblemInstance& inst) {
    Eigen::MatrixXd w(inst.T(), inst.dim());
    for (std::size_t t = 0; t < inst.T(); ++t)
        for (std::size_t c = 0; c < inst.dim(); ++c) w(t, c) = inst.w(t, c);
    return w;
}

Eigen::VectorXd vec(const BlockParam& b) {
    return Eigen::Map<const Eigen::VectorXd>(b.values().data(), static_cast<Eigen::Index>(b.size()));
}

// Gradient and block KKT residual straight from the data.
Eigen::VectorXd gradient(const ProblemInstance& inst, const Eigen::VectorXd& theta) {
    const Eigen::MatrixXd w = dense(inst);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(inst.y.data(), static_cast<Eigen::Index>(inst.T()));
    return w.transpose() * (w * theta - y) / static_cast<double>(inst.T());
}

double kkt(const ProblemInstance& inst, const Eigen::VectorXd& theta, double lambda) {
    const Eigen::VectorXd g = gradient(inst, theta);
    const auto q = static_cast<Eigen::Index>(inst.q());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(inst.M()); ++j) {
        const Eigen::VectorXd th = theta.segment(j * q, q), gj = g.segment(j * q, q);
        const double n = th.norm();
        worst = std::max(worst, n > 0 ? (gj + lambda * th / n).norm() : std::max(0.0, gj.norm() - lambda));
    }
    return worst;
}

double objective(const ProblemInstance& inst, const Eigen::VectorXd& theta, double lambda) {
    const Eigen::MatrixXd w = dense(inst);
    const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(inst.y.data(), static_cast<Eigen::Index>(inst.T()));
    double pen = 0.0;
    const auto q = static_cast<Eigen::Index>(inst.q());
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(inst.M()); ++j) pen += theta.segment(j * q, q).norm();
    return 0.5 * (y - w * theta).squaredNorm() / static_cast<double>(inst.T()) + lambda * pen;
}

SolverConfig tight(double lambda) {
    SolverConfig c;
    c.lambda = lambda;
    c.kkt_tol = 1e-10;
    c.max_iters = 200000;
    return c;
}

ProblemInstance gauss(std::size_t M, std::size_t q, std::size_t k, std::size_t T, std::uint64_t seed,
                      double sigma = 1.0) {
    GenConfig g;
    g.M = M;
    g.q = q;
    g.k = k;
    g.T = T;
    g.noise_sigma = sigma;
    g.seed = seed;
    return gen_linear_instance(g);
}

ProblemInstance scaled_y(const ProblemInstance& inst, double c) {
    ProblemInstance out = inst;
    for (double& v : out.y) v *= c;
    return out;
}

bool monotone(const std::vector<double>& trace) {
    for (std::size_t i = 1; i < trace.size(); ++i)
        if (trace[i] > trace[i - 1] + 1e-10) return false;
    return true;
}

} // namespace

TEST_SUITE("solvers") {

TEST_CASE("lambda_rate") {
    CHECK(lambda_rate(1000, 1000, 1, 1) == doctest::Approx(0.16623).epsilon(1e-4));
    CHECK(lambda_rate(50, 400, 1.3, 2) == doctest::Approx(2 * lambda_rate(50, 1600, 1.3, 2)));
    CHECK(lambda_rate(50, 400, 0, 2) == 0.0);
    CHECK_THROWS_AS(lambda_rate(1, 400, 1, 1), InvalidInput);
    CHECK(lambda_sn_default(100, 400, 1.1, 0.05) ==
          doctest::Approx(1.1 * std::sqrt((std::log(100.0) + std::log(20.0)) / 400)));
}

TEST_CASE("solver config validation lists every problem") {
    SolverConfig c;
    c.kkt_tol = 0;
    c.max_iters = 0;
    c.lambda = -1;
    CHECK(validate(c).size() == 3);
    CHECK(validate(SolverConfig{}).empty());
}

TEST_CASE("penalty above the origin gradient gives zero") {
    const auto inst = gauss(20, 2, 3, 80, 1);
    const double g0 = gradient(inst, Eigen::VectorXd::Zero(40)).reshaped(2, 20).colwise().norm().maxCoeff();
    const auto fit = fit_group_lasso(inst, tight(g0 * 1.0001));
    CHECK(mixed_norm(fit.theta_hat, NormKind::one_two) == 0.0);
    CHECK(fit.converged);
}

TEST_CASE("noiseless least squares on an orthogonal design recovers theta*") {
    GenConfig g;
    g.M = 12;
    g.q = 2;
    g.k = 4;
    g.T = 48;
    g.noise_sigma = 0;
    g.design = DesignKind::orthogonal;
    g.seed = 3;
    const auto inst = gen_linear_instance(g);
    const auto fit = fit_group_lasso(inst, tight(0.0));
    CHECK((vec(fit.theta_hat) - vec(inst.theta_star)).norm() <= 1e-8);
}

TEST_CASE("orthonormal design solution is the thresholded least-squares coordinate") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        GenConfig g;
        g.M = 16;
        g.q = 1;
        g.k = 4;
        g.T = 64;
        g.design = DesignKind::orthogonal;
        g.seed = seed;
        const auto inst = gen_linear_instance(g);
        const double s = inst.orthogonal_scale;
        const Eigen::MatrixXd w = dense(inst);
        const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(inst.y.data(), 64);
        const Eigen::VectorXd ols = w.transpose() * y / (64.0 * s);
        const double lam = 0.05;
        const auto fit = fit_group_lasso(inst, tight(lam));
        for (Eigen::Index j = 0; j < 16; ++j) {
            const double z = ols[j];
            const double want = std::copysign(std::max(0.0, std::abs(z) - lam / s), z);
            CHECK(fit.theta_hat.values()[static_cast<std::size_t>(j)] == doctest::Approx(want).epsilon(1e-8).scale(1));
        }
    }
}

TEST_CASE("converged fits satisfy the KKT conditions checked from the data") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = gauss(40, 1 + seed % 3, 4, 150, seed);
        SolverConfig c;
        c.lambda = lambda_rate(40, 150, 1, 1);
        c.step_rule = seed % 2 ? StepRule::backtracking : StepRule::fixed_lipschitz;
        const auto fit = fit_group_lasso(inst, c);
        CHECK(fit.converged == (fit.kkt_residual <= c.kkt_tol));
        REQUIRE(fit.converged);
        CHECK(kkt(inst, vec(fit.theta_hat), *c.lambda) <= 1e-8 * 1.01);
        CHECK(monotone(fit.objective_trace));
        CHECK(fit.objective_trace.back() == doctest::Approx(objective(inst, vec(fit.theta_hat), *c.lambda)));
    }
}

TEST_CASE("iteration cap yields an unconverged result, not an exception") {
    const auto inst = gauss(40, 2, 4, 100, 4);
    SolverConfig c;
    c.lambda = 0.01;
    c.max_iters = 2;
    const auto fit = fit_group_lasso(inst, c);
    CHECK_FALSE(fit.converged);
    CHECK(fit.kkt_residual > c.kkt_tol);
}

TEST_CASE("tiny instances agree with the exhaustive sign-pattern oracle") {
    Rng rng(derive_seed(77, "tiny"));
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t M = 2 + static_cast<std::size_t>(trial % 7), T = 5 + static_cast<std::size_t>(trial % 11);
        DesignMatrix w(T, M);
        std::vector<double> y(T);
        Eigen::MatrixXd W(T, M);
        Eigen::VectorXd Y(T);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t j = 0; j < M; ++j) W(t, j) = w(t, j) = standard_normal(rng) / 3;
            Y[t] = y[t] = standard_normal(rng);
        }
        const double lam = 0.02 + 0.2 * uniform01(rng);
        const auto inst = make_custom_instance(M, 1, std::move(w), std::move(y), BlockParam(M, 1));
        const auto fit = fit_group_lasso(inst, tight(lam));
        REQUIRE(fit.converged);
        const Eigen::VectorXd ref = oracle::exhaustive_lasso(W, Y, lam);
        // The minimizer is unique only if the objectives agree; compare both.
        CHECK(oracle::lasso_objective(W, Y, vec(fit.theta_hat), lam) ==
              doctest::Approx(oracle::lasso_objective(W, Y, ref, lam)).epsilon(1e-9));
        if (T >= M) CHECK((vec(fit.theta_hat) - ref).cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("square-root fit") {
    const auto inst = gauss(60, 2, 4, 300, 9);
    SolverConfig c;
    c.kkt_tol = 1e-11;
    c.max_iters = 100000;
    const double lsn = lambda_sn_default(60, 300, 1.1, 0.05);
    const auto a = fit_sqrt_group_lasso(inst, lsn, c);
    for (double s : {0.1, 3.0, 25.0}) {
        const auto b = fit_sqrt_group_lasso(scaled_y(inst, s), lsn, c);
        CHECK((vec(b.theta_hat) - s * vec(a.theta_hat)).norm() <= 1e-6 * s * vec(a.theta_hat).norm());
    }
    CHECK(mixed_norm(fit_sqrt_group_lasso(inst, 100.0, c).theta_hat, NormKind::one_two) == 0.0);

    auto zero = inst;
    std::fill(zero.y.begin(), zero.y.end(), 0.0);
    CHECK(mixed_norm(fit_sqrt_group_lasso(zero, lsn, c).theta_hat, NormKind::one_two) == 0.0);
    CHECK_THROWS_AS(fit_sqrt_group_lasso(inst, -1.0, c), InvalidInput);
    CHECK(monotone(a.objective_trace));
}

TEST_CASE("online proximal steps") {
    BlockParam theta(3, 2), grad(3, 2, {0.1, 0.2, -0.3, 0.1, 0.0, 0.05});
    CHECK(online_prox_step(theta, grad, 0.5, 1.0) == theta);

    BlockParam th(3, 2, {1, 2, 3, 4, 5, 6});
    CHECK(online_prox_step(th, grad, 0.0, 5.0) == th);
    CHECK_THROWS_AS(online_prox_step(th, BlockParam(2, 2), 0.1, 0.1), InvalidInput);

    // Repeated steps on one fixed sample reach the batch solution of that one-sample problem.
    const std::vector<double> wrow{0.6, -0.3, 0.2, 0.5, -0.1, 0.4};
    const double yv = 2.0, lam = 0.1, eta = 0.5;
    DesignMatrix w(1, 6, wrow);
    const auto inst = make_custom_instance(3, 2, w, {yv}, BlockParam(3, 2));
    BlockParam cur(3, 2);
    for (int i = 0; i < 5000; ++i) {
        const double r = std::inner_product(wrow.begin(), wrow.end(), cur.values().begin(), 0.0) - yv;
        BlockParam g(3, 2);
        for (std::size_t c = 0; c < 6; ++c) g.values()[c] = r * wrow[c];
        cur = online_prox_step(cur, g, eta, lam);
    }
    const auto batch = fit_group_lasso(inst, tight(lam));
    CHECK((vec(cur) - vec(batch.theta_hat)).norm() <= 1e-8);
}

TEST_CASE("median-of-means") {
    const std::vector<double> l{1.0, 1.1, 100.0};
    CHECK(median_block(l) == 1);
    const std::vector<double> l2{100.0, 1.0, 1.1};
    CHECK(median_block(l2) == 2);
    const std::vector<double> ties{2.0, 2.0, 2.0};
    CHECK(median_block(ties) == 1);

    const auto inst = gauss(50, 1, 4, 300, 5);
    SolverConfig c;
    c.lambda = lambda_rate(50, 300, 1.5, 1);
    const auto b1 = fit_mom(inst, 1, c);
    const auto gl = fit_group_lasso(inst, c);
    CHECK(b1.theta_hat == gl.theta_hat);
    CHECK(b1.objective_trace == gl.objective_trace);

    CHECK_THROWS_AS(fit_mom(inst, 301, c), ConfigError);
    CHECK_THROWS_AS(fit_mom(inst, 7, c), ConfigError);
    CHECK_THROWS_AS(fit_mom(inst, 2, c), ConfigError);

    // Clean data: the median-block iterate stays as close to the full fit as the full fit is to theta*.
    int close = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto i2 = gauss(50, 1, 4, 600, 100 + seed);
        SolverConfig c2;
        c2.lambda = lambda_rate(50, 600, 1.5, 1);
        c2.max_iters = 3000;
        const auto full = fit_group_lasso(i2, c2);
        const auto mom = fit_mom(i2, 3, c2);
        const double err = (vec(full.theta_hat) - vec(i2.theta_star)).norm();
        if ((vec(mom.theta_hat) - vec(full.theta_hat)).norm() <= 2.0 * err) ++close;
    }
    CHECK(close >= 9);
}

TEST_CASE("sparse-group prox matches the numeric oracle") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t q = 1 + static_cast<std::size_t>(trial % 3), G = 3, per = 2, M = G * per;
        std::vector<std::size_t> gmap(M);
        for (std::size_t j = 0; j < M; ++j) gmap[j] = (j * 7 + static_cast<std::size_t>(trial)) % G;
        std::vector<double> z(M * q);
        for (double& v : z) v = 2.0 * standard_normal(rng);
        const double tb = 0.8 * uniform01(rng), tg = 1.5 * uniform01(rng);
        std::vector<double> got = z;
        sparse_group_prox_inplace(got, q, gmap, G, tb, tg);

        auto terms = oracle::block_terms(M, q, tb);
        for (std::size_t g = 0; g < G; ++g) {
            oracle::NormTerm t;
            t.weight = tg;
            for (std::size_t j = 0; j < M; ++j)
                if (gmap[j] == g)
                    for (std::size_t c = 0; c < q; ++c) t.indices.push_back(j * q + c);
            terms.push_back(t);
        }
        const auto want = oracle::numeric_prox(z, terms);
        for (std::size_t i = 0; i < z.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-8);
    }
}

TEST_CASE("sparse-group fit reduces to the plain and the group-level lasso") {
    GenConfig g;
    g.M = 24;
    g.q = 2;
    g.k = 4;
    g.T = 120;
    g.seed = 8;
    const auto inst = gen_grouped_instance(g, 6, 2);
    auto c = tight(0.05);
    c.lambda_group = 0.0;
    const auto sg = fit_sparse_group(inst, c);
    const auto gl = fit_group_lasso(inst, c);
    CHECK((vec(sg.theta_hat) - vec(gl.theta_hat)).norm() <= 1e-7);
    CHECK_THROWS_AS(fit_sparse_group(gauss(10, 1, 2, 20, 1), c), ConfigError);

    // Block penalty off: a group lasso whose blocks are the groups. Reorder columns group by group.
    std::vector<std::size_t> order;
    for (std::size_t grp = 0; grp < 6; ++grp)
        for (std::size_t j = 0; j < 24; ++j)
            if ((*inst.group_map)[j] == grp)
                for (std::size_t cc = 0; cc < 2; ++cc) order.push_back(j * 2 + cc);
    const auto big = make_custom_instance(6, 8, inst.w.select_columns(order), inst.y, BlockParam(6, 8));
    auto c2 = tight(0.0);
    c2.lambda_group = 0.08;
    const auto pure = fit_sparse_group(inst, c2);
    const auto ref = fit_group_lasso(big, tight(0.08));
    for (std::size_t i = 0; i < order.size(); ++i)
        CHECK(std::abs(pure.theta_hat.values()[order[i]] - ref.theta_hat.values()[i]) <= 1e-7);
    CHECK(monotone(pure.objective_trace));
}

TEST_CASE("hierarchical fit keeps strong heredity") {
    int no_interactions = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        GenConfig g;
        g.M = 20;
        g.k = 3;
        g.T = 600;
        g.seed = seed;
        const auto inst = gen_interaction_instance(g, 0);
        SolverConfig c;
        c.lambda = lambda_rate(20, 600, 1, 1);
        const auto hf = fit_hierarchical(inst, c);
        CHECK(hf.heredity_holds());
        if (hf.interaction_support().empty()) ++no_interactions;
        const auto main = support_of(hf.main_effects());
        for (const auto& [i, j] : hf.interaction_support()) {
            CHECK(main.contains(i));
            CHECK(main.contains(j));
        }
    }
    CHECK(no_interactions >= 90);

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        GenConfig g;
        g.M = 15;
        g.k = 4;
        g.T = 400;
        g.seed = seed;
        const auto hf = fit_hierarchical(gen_interaction_instance(g, 2), SolverConfig{.lambda = 0.08});
        CHECK(hf.heredity_holds());
    }

    // Huge penalty: empty stage-1 support, no interactions.
    GenConfig g;
    g.M = 10;
    g.k = 3;
    g.T = 100;
    const auto hf = fit_hierarchical(gen_interaction_instance(g, 1), SolverConfig{.lambda = 1e6});
    CHECK(hf.stage1_support.size() == 0);
    CHECK(hf.interaction_support().empty());
    CHECK_THROWS_AS(fit_hierarchical(gauss(10, 1, 2, 20, 1), SolverConfig{}), ConfigError);
}

TEST_CASE("hierarchical fit recovers noiseless interactions at small penalty") {
    GenConfig g;
    g.M = 8;
    g.k = 3;
    g.T = 400;
    g.noise_sigma = 0;
    g.seed = 11;
    const auto inst = gen_interaction_instance(g, 2);
    auto c = tight(1e-6);
    const auto hf = fit_hierarchical(inst, c);
    CHECK(support_of(hf.main_effects(), 1e-3) == inst.s_star);
    auto sel = hf.interaction_support(1e-3);
    std::vector<std::pair<std::size_t, std::size_t>> truth;
    for (const auto& it : *inst.interactions) truth.emplace_back(it.i, it.j);
    std::sort(sel.begin(), sel.end());
    std::sort(truth.begin(), truth.end());
    CHECK(sel == truth);
}

TEST_CASE("dense ridge") {
    const std::size_t M = 5, q = 2, d = M * q;
    DesignMatrix w(d, d);
    for (std::size_t t = 0; t < d; ++t) w(t, t) = 1.0;
    BlockParam star(M, q, {1, -2, 0.5, 0, 3, 1, -1, 2, 0, 4});
    std::vector<double> y(star.values().begin(), star.values().end());
    const auto inst = make_custom_instance(M, q, w, y, star);
    for (double tau : {0.01, 0.3, 5.0}) {
        const auto fit = fit_ridge_dense(inst, tau);
        // Normal equations per coordinate: (1/d + tau) theta = theta* / d.
        for (std::size_t i = 0; i < d; ++i)
            CHECK(fit.theta_hat.values()[i] == doctest::Approx(star.values()[i] / (1.0 + tau * d)).epsilon(1e-12));
    }
    CHECK(mixed_norm(fit_ridge_dense(inst, 1e12).theta_hat, NormKind::one_two) < 1e-9);
    auto zero = inst;
    std::fill(zero.y.begin(), zero.y.end(), 0.0);
    CHECK(mixed_norm(fit_ridge_dense(zero, 0.1).theta_hat, NormKind::one_two) == 0.0);
    CHECK_THROWS_AS(fit_ridge_dense(inst, 0.0), InvalidInput);

    // Both primal (T >= d) and dual (T < d) paths: residual of the linear system and agreement with RidgePath.
    for (std::size_t T : {200u, 30u}) {
        const auto g = gauss(20, 3, 4, T, 6);
        const RidgePath path(g);
        const Eigen::MatrixXd W = dense(g);
        const Eigen::VectorXd Y = Eigen::Map<const Eigen::VectorXd>(g.y.data(), static_cast<Eigen::Index>(T));
        for (double tau : {1e-3, 0.1, 2.0}) {
            const auto fit = fit_ridge_dense(g, tau);
            const Eigen::VectorXd th = vec(fit.theta_hat);
            const Eigen::VectorXd rhs = W.transpose() * Y / static_cast<double>(T);
            const Eigen::VectorXd res = W.transpose() * (W * th) / static_cast<double>(T) + tau * th - rhs;
            CHECK(res.norm() <= 1e-10 * rhs.norm());
            CHECK((vec(path.solve(tau)) - th).norm() <= 1e-8 * (1.0 + th.norm()));
        }
    }
}

TEST_CASE("solvers accept every step rule and restart setting") {
    const auto inst = gauss(30, 2, 3, 90, 12);
    BlockParam ref;
    for (auto rule : {StepRule::fixed_lipschitz, StepRule::backtracking})
        for (bool restart : {true, false}) {
            auto c = tight(0.05);
            c.step_rule = rule;
            c.restart = restart;
            const auto f = fit_group_lasso(inst, c);
            REQUIRE(f.converged);
            if (restart) CHECK(monotone(f.objective_trace));
            if (ref.size() == 0) ref = f.theta_hat;
            CHECK((vec(f.theta_hat) - vec(ref)).norm() <= 1e-8);
        }
}

}
