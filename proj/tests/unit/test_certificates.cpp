#include <doctest.h>

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "../oracles/oracles.hpp"
#include "saclab/certificates.hpp"
#include "saclab/errors.hpp"
#include "saclab/rng.hpp"
#include "saclab/stats.hpp"

using namespace saclab;

namespace {

GenConfig base(std::size_t M, std::size_t k, std::size_t T, std::uint64_t seed) {
    GenConfig g;
    g.M = M;
    g.q = 1;
    g.k = k;
    g.T = T;
    g.seed = seed;
    return g;
}

ProblemInstance permuted(const ProblemInstance& inst, const std::vector<std::size_t>& perm) {
    // new block a holds old block perm[a]
    std::vector<std::size_t> cols;
    for (std::size_t a : perm)
        for (std::size_t c = 0; c < inst.q(); ++c) cols.push_back(a * inst.q() + c);
    BlockParam star(inst.M(), inst.q());
    for (std::size_t a = 0; a < perm.size(); ++a) {
        auto src = inst.theta_star.block(perm[a]);
        std::copy(src.begin(), src.end(), star.block(a).begin());
    }
    return make_custom_instance(inst.M(), inst.q(), inst.w.select_columns(cols), inst.y, star);
}

} // namespace

TEST_SUITE("certificates") {

TEST_CASE("gradient deviation") {
    auto g = base(20, 3, 100, 1);
    g.noise_sigma = 0;
    const auto quiet = gen_linear_instance(g);
    CHECK(grad_supnorm_at(quiet, quiet.theta_star) <= 1e-14);

    DesignMatrix w(1, 1, {1.0});
    const auto one = make_custom_instance(1, 1, w, {1.0}, BlockParam(1, 1));
    CHECK(grad_supnorm_at(one, BlockParam(1, 1)) == doctest::Approx(1.0));

    std::vector<double> a, b;
    for (std::uint64_t s = 0; s < 200; ++s) {
        auto c = base(20, 3, 100, 1000 + s);
        c.noise_sigma = 1;
        const auto i1 = gen_linear_instance(c);
        a.push_back(grad_supnorm_at(i1, i1.theta_star));
        c.noise_sigma = 2;
        c.seed = 5000 + s;
        const auto i2 = gen_linear_instance(c);
        b.push_back(grad_supnorm_at(i2, i2.theta_star));
    }
    CHECK(stats::median(b) / stats::median(a) == doctest::Approx(2.0).epsilon(0.15));
}

TEST_CASE("restricted curvature estimate") {
    GenConfig g = base(6, 2, 1000, 3);
    g.design = DesignKind::orthogonal;
    g.T = 6;
    const auto orth = gen_linear_instance(g);
    const double s = orth.orthogonal_scale;
    CHECK(rsc_estimate(orth, orth.s_star, 50, 1) == doctest::Approx(s).epsilon(1e-12));
    CHECK_THROWS_AS(rsc_estimate(orth, orth.s_star, 0, 1), ConfigError);

    // Rayleigh bound on a generic design
    const auto inst = gen_linear_instance(base(10, 3, 40, 4));
    Eigen::MatrixXd W(40, 10);
    for (std::size_t t = 0; t < 40; ++t)
        for (std::size_t c = 0; c < 10; ++c) W(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = inst.w(t, c);
    const Eigen::MatrixXd H = W.transpose() * W / 40.0;
    const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(H).eigenvalues().minCoeff();
    CHECK(rsc_estimate(inst, inst.s_star, 300, 2) >= lmin - 1e-12);

    // Third column copies the first; Delta = (1, 0, -1) lies in the cone of S = {0} and in the null space.
    Rng rng(9);
    DesignMatrix w(50, 3);
    for (std::size_t t = 0; t < 50; ++t) {
        w(t, 0) = standard_normal(rng) / 2;
        w(t, 1) = standard_normal(rng) / 2;
        w(t, 2) = w(t, 0);
    }
    BlockParam star(3, 1, {1, 0, 0});
    const auto deg = make_custom_instance(3, 1, w, std::vector<double>(50, 0.0), star);
    const double coarse = rsc_estimate(deg, support_of(star), 10, 5);
    const double fine = rsc_estimate(deg, support_of(star), 20000, 5);
    CHECK(fine < coarse);
    CHECK(fine < 1e-3);
}

TEST_CASE("irrepresentability on known designs") {
    GenConfig g = base(40, 5, 40, 2);
    g.design = DesignKind::orthogonal;
    const auto orth = gen_linear_instance(g);
    CHECK(irrepresentability_constant(orth, orth.s_star) == doctest::Approx(0.0).scale(1));

    g.design = DesignKind::duplicated_column;
    g.T = 200;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        g.seed = seed;
        const auto dup = gen_linear_instance(g);
        CHECK(irrepresentability_constant(dup, dup.s_star) == doctest::Approx(1.0).epsilon(1e-12));
    }

    g.design = DesignKind::equicorrelated;
    for (double rho : {0.1, 0.3, 0.6}) {
        for (std::size_t k : {1u, 3u, 6u}) {
            g.rho = rho;
            g.k = k;
            g.M = 12;
            const auto inst = gen_linear_instance(g);
            // direct matrix evaluation of H_{S^c S} H_SS^{-1} with H = (1 - rho) I + rho 11^T
            Eigen::MatrixXd H = Eigen::MatrixXd::Constant(12, 12, rho);
            H.diagonal().setOnes();
            const auto S = inst.s_star.indices();
            std::vector<std::size_t> Sc;
            for (std::size_t j = 0; j < 12; ++j)
                if (!inst.s_star.contains(j)) Sc.push_back(j);
            Eigen::MatrixXd hss(S.size(), S.size()), hcs(Sc.size(), S.size());
            for (std::size_t a = 0; a < S.size(); ++a) {
                for (std::size_t b = 0; b < S.size(); ++b) hss(a, b) = H(S[a], S[b]);
                for (std::size_t c = 0; c < Sc.size(); ++c) hcs(c, a) = H(Sc[c], S[a]);
            }
            const double direct = (hcs * hss.inverse()).rowwise().lpNorm<1>().maxCoeff();
            const double formula = k * rho / (1.0 + (k - 1.0) * rho);
            CHECK(direct == doctest::Approx(formula).epsilon(1e-12));
            CHECK(irrepresentability_constant(inst, inst.s_star) == doctest::Approx(formula).epsilon(1e-10));
        }
    }
}

TEST_CASE("irrepresentability is invariant under column permutation") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = gen_linear_instance(base(15, 3, 60, seed));
        std::vector<std::size_t> perm(15);
        for (std::size_t a = 0; a < 15; ++a) perm[a] = (a * 4 + seed) % 15;
        const auto p = permuted(inst, perm);
        const double a = irrepresentability(inst, inst.s_star, HessianSource::empirical).value;
        const auto r = irrepresentability(p, p.s_star);
        CHECK(r.proxy);
        CHECK(r.value == doctest::Approx(a).epsilon(1e-10));
    }
}

TEST_CASE("singular restricted Hessian is reported") {
    DesignMatrix w(10, 2);
    for (std::size_t t = 0; t < 10; ++t) w(t, 0) = w(t, 1) = (t % 3) * 0.2;
    const auto inst = make_custom_instance(2, 1, w, std::vector<double>(10, 0.0), BlockParam(2, 1, {1, 1}));
    const auto three = make_custom_instance(2, 1, w, std::vector<double>(10, 0.0), BlockParam(2, 1, {1, 1}));
    CHECK(irrepresentability_constant(inst, inst.s_star) == 0.0);  // empty complement
    DesignMatrix w3(10, 3);
    for (std::size_t t = 0; t < 10; ++t) w3(t, 0) = w3(t, 1) = w3(t, 2) = (t % 3) * 0.2;
    const auto s3 = make_custom_instance(3, 1, w3, std::vector<double>(10, 0.0), BlockParam(3, 1, {1, 1, 0}));
    CHECK_THROWS_AS(irrepresentability_constant(s3, s3.s_star), SingularityError);
    (void)three;
}

TEST_CASE("Hessian stability") {
    GenConfig g = base(8, 2, 8, 1);
    g.design = DesignKind::orthogonal;
    const auto orth = gen_linear_instance(g);
    CHECK(hessian_stability(orth, orth.theta_star, BlockParam(8, 1)).eta <= 1e-14);

    const auto iso = gen_linear_instance(base(10, 3, 50, 2));
    const auto hs = hessian_stability(iso, iso.theta_star, iso.theta_star);
    CHECK(hs.kappa_min == doctest::Approx(1.0));

    std::vector<double> med;
    for (std::size_t T : {100u, 400u, 1600u}) {
        std::vector<double> eta;
        for (std::uint64_t s = 0; s < 100; ++s) {
            const auto inst = gen_linear_instance(base(10, 3, T, 300 + s));
            eta.push_back(hessian_stability(inst, inst.theta_star, inst.theta_star).eta);
        }
        med.push_back(stats::median(eta));
    }
    CHECK(med[1] < med[0]);
    CHECK(med[2] < med[1]);
}

TEST_CASE("KKT residual from the data") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t M = 3 + static_cast<std::size_t>(trial % 5), T = 12;
        DesignMatrix w(T, M);
        std::vector<double> y(T);
        Eigen::MatrixXd W(T, M);
        Eigen::VectorXd Y(T);
        for (std::size_t t = 0; t < T; ++t) {
            for (std::size_t j = 0; j < M; ++j) W(t, j) = w(t, j) = standard_normal(rng) / 2;
            Y[t] = y[t] = standard_normal(rng);
        }
        const double lam = 0.1;
        const Eigen::VectorXd sol = oracle::exhaustive_lasso(W, Y, lam);
        const auto inst = make_custom_instance(M, 1, std::move(w), std::move(y), BlockParam(M, 1));
        CHECK(kkt_residual(inst, BlockParam(M, 1, std::vector<double>(sol.data(), sol.data() + M)), lam) <= 1e-8);
        const double g0 = (W.transpose() * Y / static_cast<double>(T)).cwiseAbs().maxCoeff();
        CHECK(kkt_residual(inst, BlockParam(M, 1), g0) <= 1e-14);
    }
    const auto noisy = gen_linear_instance(base(20, 3, 80, 6));
    CHECK(kkt_residual(noisy, noisy.theta_star, 0.0) == doctest::Approx(grad_supnorm_at(noisy, noisy.theta_star)));
    CHECK_THROWS_AS(kkt_residual(noisy, BlockParam(3, 1), 0.1), InvalidInput);

    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto inst = gen_linear_instance(base(40, 4, 150, seed));
        SolverConfig c;
        c.lambda = lambda_rate(40, 150, 1, 1);
        const auto fit = fit_group_lasso(inst, c);
        if (fit.converged) CHECK(kkt_residual(inst, fit.theta_hat, *c.lambda) <= c.kkt_tol);
    }
}

TEST_CASE("primal-dual witness on an orthogonal design") {
    int pass = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        GenConfig g = base(64, 4, 512, seed);
        g.design = DesignKind::orthogonal;
        g.signal_magnitude = 50;
        const auto inst = gen_linear_instance(g);
        const double lam = lambda_rate(64, 512, 1, 1);
        SolverConfig c;
        c.lambda = lam;
        const auto fit = fit_group_lasso(inst, c);
        const auto rep = pdw_verify(inst, fit, lam);
        if (rep.pdw_pass) {
            ++pass;
            CHECK(rep.dual_max < 1.0);
            CHECK(support_of(fit.theta_hat) == inst.s_star);
            CHECK(rep.support_match);
        }
        CHECK(rep.irrep_gap <= 1.0);
    }
    CHECK(pass >= 95);
}

TEST_CASE("primal-dual witness fails on a duplicated relevant column") {
    int fail = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        GenConfig g = base(30, 3, 200, seed);
        g.design = DesignKind::duplicated_column;
        const auto inst = gen_linear_instance(g);
        const double lam = lambda_rate(30, 200, 1, 1);
        SolverConfig c;
        c.lambda = lam;
        const auto rep = pdw_verify(inst, fit_group_lasso(inst, c), lam);
        if (!rep.pdw_pass && rep.dual_max >= 1.0 - 1e-6) ++fail;
    }
    CHECK(fail == 100);
}

TEST_CASE("primal-dual witness flags false exclusion at a huge penalty") {
    const auto inst = gen_linear_instance(base(20, 3, 100, 1));
    SolverConfig c;
    c.lambda = 1e6;
    const auto fit = fit_group_lasso(inst, c);
    CHECK(mixed_norm(fit.theta_hat, NormKind::one_two) == 0.0);
    const auto rep = pdw_verify(inst, fit, 1e6);
    CHECK_FALSE(rep.pdw_pass);
    CHECK_FALSE(rep.no_false_exclusion);
    CHECK(rep.beta_min_margin < 1e-5);
}

TEST_CASE("cone condition holds whenever the penalty dominates the gradient") {
    int applicable = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
        GenConfig g = base(80, 4, 120 + 10 * seed, seed);
        g.q = 1 + seed % 2;
        const auto inst = gen_linear_instance(g);
        const double lam = lambda_rate(80, g.T, 1.2 + 0.1 * static_cast<double>(seed % 10), 1);
        SolverConfig c;
        c.lambda = lam;
        const auto fit = fit_group_lasso(inst, c);
        if (!fit.converged || lam < 2.0 * grad_supnorm_at(inst, inst.theta_star)) continue;
        ++applicable;
        CHECK(cone_ratio(fit.theta_hat - inst.theta_star, inst.s_star) <= 3.0 + 1e-6);
    }
    CHECK(applicable >= 10);
}

TEST_CASE("population Hessian blocks") {
    GenConfig g = base(6, 2, 30, 1);
    g.q = 2;
    g.design = DesignKind::equicorrelated;
    g.rho = 0.4;
    g.feature_scale = 0.5;
    const auto inst = gen_linear_instance(g);
    const PopulationHessian h(inst);
    CHECK(h.exact());
    CHECK(h.block(1, 1)(0, 0) == doctest::Approx(0.125));
    CHECK(h.block(1, 2)(1, 1) == doctest::Approx(0.05));
    CHECK(h.block(1, 2)(0, 1) == 0.0);
    CHECK_FALSE(h.block_diagonal_except_duplicate());
}

}
