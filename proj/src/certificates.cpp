#include "saclab/certificates.hpp"

#include <algorithm>
#include <cmath>

#include "saclab/errors.hpp"
#include "saclab/rng.hpp"

namespace saclab {

namespace {

double l2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

std::vector<double> full_gradient(const ProblemInstance& inst, std::span<const double> theta) {
    // (1/T) sum_t w_t (<theta, w_t> - y_t), sequential over t
    const std::size_t T = inst.T(), d = inst.dim();
    std::vector<double> g(d, 0.0);
    for (std::size_t t = 0; t < T; ++t) {
        const auto row = inst.w.row(t);
        double r = -inst.y[t];
        for (std::size_t c = 0; c < d; ++c) r += row[c] * theta[c];
        if (r == 0.0) continue;
        for (std::size_t c = 0; c < d; ++c) g[c] += r * row[c];
    }
    for (double& v : g) v /= static_cast<double>(T);
    return g;
}

double spectral_norm(const Eigen::MatrixXd& a) {
    if (a.size() == 0) return 0.0;
    if (a.rows() == 1 || a.cols() == 1) return a.norm();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
    return svd.singularValues()(0);
}

// ||A||_{inf,2 -> inf,2} for a matrix partitioned into q x q blocks: exact
// max abs row sum when q = 1, otherwise max_i sum_j ||A_ij||_2 (an upper bound).
double block_inf_norm(const Eigen::MatrixXd& a, std::size_t q) {
    double worst = 0.0;
    const auto qi = static_cast<Eigen::Index>(q);
    for (Eigen::Index r = 0; r < a.rows(); r += qi) {
        double s = 0.0;
        for (Eigen::Index c = 0; c < a.cols(); c += qi) {
            s += q == 1 ? std::abs(a(r, c)) : spectral_norm(a.block(r, c, qi, qi));
        }
        worst = std::max(worst, s);
    }
    return worst;
}

std::vector<std::size_t> complement(const SupportSet& s, std::size_t M) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < M; ++j)
        if (!s.contains(j)) out.push_back(j);
    return out;
}

} // namespace

PopulationHessian::PopulationHessian(const ProblemInstance& inst) : inst_(&inst) {
    const auto& cfg = inst.config;
    const double fs2q = cfg.feature_scale * cfg.feature_scale / static_cast<double>(inst.q());
    switch (cfg.design) {
    case DesignKind::gaussian_normalized:
    case DesignKind::duplicated_column: diag_ = fs2q; break;
    case DesignKind::orthogonal: diag_ = inst.orthogonal_scale; break;
    case DesignKind::equicorrelated:
        diag_ = fs2q;
        off_ = fs2q * cfg.rho;
        break;
    case DesignKind::custom: exact_ = false; break;
    }
}

bool PopulationHessian::block_diagonal_except_duplicate() const { return exact_ && off_ == 0.0; }

Eigen::MatrixXd PopulationHessian::block(std::size_t i, std::size_t j) const {
    const std::size_t q = inst_->q();
    if (!exact_) {
        const std::size_t r[1] = {i}, c[1] = {j};
        return empirical_hessian_blocks(*inst_, r, c);
    }
    const auto qi = static_cast<Eigen::Index>(q);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(qi, qi);
    if (i == j) return diag_ * I;
    if (inst_->duplicate) {
        const auto& dp = *inst_->duplicate;
        if ((i == dp.copy && j == dp.source) || (i == dp.source && j == dp.copy)) return diag_ * I;
    }
    return off_ * I;
}

Eigen::MatrixXd PopulationHessian::submatrix(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const {
    if (!exact_) return empirical_hessian_blocks(*inst_, rows, cols);
    const auto q = static_cast<Eigen::Index>(inst_->q());
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()) * q, static_cast<Eigen::Index>(cols.size()) * q);
    for (std::size_t a = 0; a < rows.size(); ++a)
        for (std::size_t b = 0; b < cols.size(); ++b)
            out.block(static_cast<Eigen::Index>(a) * q, static_cast<Eigen::Index>(b) * q, q, q) = block(rows[a], cols[b]);
    return out;
}

Eigen::MatrixXd empirical_hessian_blocks(const ProblemInstance& inst, std::span<const std::size_t> rows,
                                         std::span<const std::size_t> cols) {
    const std::size_t q = inst.q(), T = inst.T();
    auto gather = [&](std::span<const std::size_t> blocks) {
        std::vector<std::size_t> idx;
        for (std::size_t j : blocks) {
            if (j >= inst.M()) throw InvalidInput("hessian block index out of range");
            for (std::size_t i = 0; i < q; ++i) idx.push_back(j * q + i);
        }
        return idx;
    };
    const auto ri = gather(rows), ci = gather(cols);
    Eigen::MatrixXd wr(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(ri.size()));
    Eigen::MatrixXd wc(static_cast<Eigen::Index>(T), static_cast<Eigen::Index>(ci.size()));
    for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t a = 0; a < ri.size(); ++a) wr(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(a)) = inst.w(t, ri[a]);
        for (std::size_t b = 0; b < ci.size(); ++b) wc(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(b)) = inst.w(t, ci[b]);
    }
    return wr.transpose() * wc / static_cast<double>(T);
}

double grad_supnorm_at(const ProblemInstance& inst, const BlockParam& theta) {
    if (theta.size() != inst.dim()) throw InvalidInput("grad_supnorm_at: theta has wrong shape");
    const auto g = full_gradient(inst, theta.values());
    double worst = 0.0;
    for (std::size_t off = 0; off < g.size(); off += inst.q()) worst = std::max(worst, l2(std::span(g).subspan(off, inst.q())));
    return worst;
}

double rsc_estimate(const ProblemInstance& inst, const SupportSet& s_star, std::size_t num_dirs, std::uint64_t seed) {
    if (num_dirs < 1) throw ConfigError("num_dirs: must be >= 1");
    if (s_star.empty()) throw InvalidInput("rsc_estimate: the cone of an empty support is {0}");
    const std::size_t M = inst.M(), q = inst.q(), d = inst.dim();
    const auto in_s = s_star.mask(M);
    QuadraticModel model(inst.w, inst.y);
    Rng rng(derive_seed(seed, "rsc"));
    std::vector<double> delta(d);
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < num_dirs; ++n) {
        // alternate between support-concentrated and unrestricted draws
        const double off_weight = (n % 2 == 0) ? 0.25 * uniform01(rng) : 1.0;
        double on = 0.0, off = 0.0;
        for (std::size_t j = 0; j < M; ++j) {
            auto b = std::span(delta).subspan(j * q, q);
            const double w = in_s[j] ? 1.0 : off_weight;
            for (double& v : b) v = w * standard_normal(rng);
            (in_s[j] ? on : off) += l2(b);
        }
        if (on == 0.0) continue;
        if (off > 3.0 * on) {
            const double s = 3.0 * on / off;
            for (std::size_t j = 0; j < M; ++j)
                if (!in_s[j])
                    for (std::size_t i = 0; i < q; ++i) delta[j * q + i] *= s;
        }
        const double nrm = l2(delta);
        for (double& v : delta) v /= nrm;
        best = std::min(best, model.curvature(delta));
    }
    return std::max(best, 0.0);
}

IrrepResult irrepresentability(const ProblemInstance& inst, const SupportSet& s_star, HessianSource source) {
    const std::size_t M = inst.M(), q = inst.q();
    IrrepResult res;
    res.upper_bound = q > 1;
    const auto& S = s_star.indices();
    const auto Sc = complement(s_star, M);
    if (S.empty() || Sc.empty()) return res;

    PopulationHessian pop(inst);
    const bool empirical = source == HessianSource::empirical || !pop.exact();
    res.proxy = source == HessianSource::population && !pop.exact();
    const Eigen::MatrixXd hss = empirical ? empirical_hessian_blocks(inst, S, S) : pop.submatrix(S, S);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hss, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() <= 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff()))
        throw SingularityError("irrepresentability: H_SS is singular");
    const Eigen::LLT<Eigen::MatrixXd> llt(hss);

    double worst = 0.0;
    const std::size_t chunk = 256;
    for (std::size_t start = 0; start < Sc.size(); start += chunk) {
        std::span<const std::size_t> rows(Sc.data() + start, std::min(chunk, Sc.size() - start));
        const Eigen::MatrixXd hcs = empirical ? empirical_hessian_blocks(inst, rows, S) : pop.submatrix(rows, S);
        // A = H_{S^c S} H_SS^{-1}, via the symmetric solve H_SS A^T = H_{S S^c}
        const Eigen::MatrixXd at = llt.solve(hcs.transpose());
        worst = std::max(worst, block_inf_norm(at.transpose(), q));
    }
    res.value = worst;
    return res;
}

double irrepresentability_constant(const ProblemInstance& inst, const SupportSet& s_star) {
    return irrepresentability(inst, s_star).value;
}

HessianStability hessian_stability(const ProblemInstance& inst, const BlockParam& theta_a, const BlockParam& theta_b) {
    if (theta_a.size() != inst.dim() || theta_b.size() != inst.dim())
        throw InvalidInput("hessian_stability: parameters have wrong shape");
    // quadratic loss: the Hessian is the same at every point of the segment
    const std::size_t M = inst.M(), q = inst.q();
    HessianStability out;
    PopulationHessian pop(inst);
    out.proxy = !pop.exact();
    out.upper_bound = q > 1;
    std::vector<std::size_t> all(M);
    for (std::size_t j = 0; j < M; ++j) all[j] = j;

    double worst = 0.0;
    if (pop.exact()) {
        const std::size_t chunk = 128;
        for (std::size_t start = 0; start < M; start += chunk) {
            std::span<const std::size_t> rows(all.data() + start, std::min(chunk, M - start));
            const Eigen::MatrixXd diff = empirical_hessian_blocks(inst, rows, all) - pop.submatrix(rows, all);
            worst = std::max(worst, block_inf_norm(diff, q));
        }
    }
    out.eta = worst;

    const auto& S = inst.s_star.indices();
    if (!S.empty()) {
        const Eigen::MatrixXd hss = pop.submatrix(S, S);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hss, Eigen::EigenvaluesOnly);
        out.kappa_min = std::max(0.0, es.eigenvalues().minCoeff());
        try {
            out.alpha = 1.0 - irrepresentability(inst, inst.s_star).value;
        } catch (const SingularityError&) {
            out.alpha = 0.0;
        }
    }
    out.threshold_ok = out.eta <= (out.alpha / 4.0) * out.kappa_min / (1.0 + out.kappa_min);
    return out;
}

double kkt_residual(const ProblemInstance& inst, const BlockParam& theta, double lambda) {
    if (theta.size() != inst.dim()) throw InvalidInput("kkt_residual: theta has wrong shape");
    if (!(lambda >= 0.0)) throw InvalidInput("kkt_residual: lambda must be >= 0");
    const auto g = full_gradient(inst, theta.values());
    return block_kkt_residual(g, theta.values(), inst.q(), lambda);
}

CertificateReport pdw_verify(const ProblemInstance& inst, const FitResult& fit, double lambda,
                             const CertificateOptions& opts) {
    if (!(lambda >= 0.0)) throw InvalidInput("pdw_verify: lambda must be >= 0");
    const std::size_t M = inst.M(), q = inst.q();
    const auto& S = inst.s_star.indices();
    CertificateReport rep;
    rep.lambda = lambda;
    rep.grad_supnorm = grad_supnorm_at(inst, inst.theta_star);
    rep.upper_bound = q > 1;
    rep.support_match = support_of(fit.theta_hat) == inst.s_star;

    double bmin = std::numeric_limits<double>::infinity();
    for (std::size_t j : S) bmin = std::min(bmin, inst.theta_star.block_norm(j));
    rep.beta_min_margin = S.empty() ? 0.0 : (lambda > 0.0 ? bmin / lambda : std::numeric_limits<double>::infinity());

    // restricted problem on S*
    std::vector<double> tilde(inst.dim(), 0.0);
    bool restricted_ok = true;
    rep.no_false_exclusion = true;
    if (!S.empty()) {
        std::vector<std::size_t> cols;
        for (std::size_t j : S)
            for (std::size_t i = 0; i < q; ++i) cols.push_back(j * q + i);
        auto ws = std::make_shared<const DesignMatrix>(inst.w.select_columns(cols));
        QuadraticModel model(ws, inst.y);
        SolverConfig sc;
        sc.lambda = lambda;
        sc.kkt_tol = 1e-10;
        sc.max_iters = 50000;
        BlockParam init(S.size(), q);
        for (std::size_t a = 0; a < S.size(); ++a) {
            auto src = fit.theta_hat.block(S[a]);
            std::copy(src.begin(), src.end(), init.block(a).begin());
        }
        const auto rfit = solve_group_lasso(model, q, lambda, sc, &init);
        if (!rfit.converged) {
            restricted_ok = false;
            rep.reason = "restricted problem did not converge";
        }
        for (std::size_t a = 0; a < S.size(); ++a) {
            if (rfit.theta_hat.block_norm(a) <= kDefaultSupportTol) rep.no_false_exclusion = false;
            auto b = rfit.theta_hat.block(a);
            std::copy(b.begin(), b.end(), tilde.begin() + static_cast<std::ptrdiff_t>(S[a] * q));
        }
    }
    const auto g = full_gradient(inst, tilde);
    double dual = 0.0;
    for (std::size_t j = 0; j < M; ++j) {
        if (inst.s_star.contains(j)) continue;
        const double n = l2(std::span<const double>(g).subspan(j * q, q));
        const double ratio = lambda > 0.0 ? n / lambda : (n > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
        dual = std::max(dual, ratio);
    }
    rep.dual_max = dual;
    const bool strict = dual <= 1.0 - 1e-6;
    if (rep.reason.empty()) {
        if (!rep.no_false_exclusion) rep.reason = "false exclusion";
        else if (!strict) rep.reason = "dual feasibility violated";
    }
    rep.pdw_pass = restricted_ok && rep.no_false_exclusion && strict;

    if (opts.irrep && !S.empty() && S.size() < M) {
        try {
            const auto ir = irrepresentability(inst, inst.s_star);
            rep.irrep_gap = 1.0 - ir.value;
            rep.hessian_proxy = ir.proxy;
        } catch (const SingularityError&) {
            rep.irrep_gap = -std::numeric_limits<double>::infinity();
        }
    }
    if (!S.empty()) {
        PopulationHessian pop(inst);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(pop.submatrix(S, S), Eigen::EigenvaluesOnly);
        rep.kappa_min = std::max(0.0, es.eigenvalues().minCoeff());
    }
    if (opts.hessian) {
        const auto hs = hessian_stability(inst, fit.theta_hat, inst.theta_star);
        rep.hessian_eta = hs.eta;
        rep.kappa_min = hs.kappa_min;
        rep.hessian_threshold_ok = hs.threshold_ok;
        rep.hessian_proxy = rep.hessian_proxy || hs.proxy;
    }
    if (opts.rsc && !S.empty()) {
        rep.rsc_mu = rsc_estimate(inst, inst.s_star, opts.rsc_dirs, opts.seed);
        rep.rsc_dirs = opts.rsc_dirs;
    }
    return rep;
}

} // namespace saclab
