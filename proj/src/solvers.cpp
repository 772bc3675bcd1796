#include "saclab/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include <Eigen/Dense>

#include "saclab/errors.hpp"

namespace saclab {

namespace {

double l2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double sum_block_norms(std::span<const double> v, std::size_t q) {
    double s = 0.0;
    for (std::size_t off = 0; off < v.size(); off += q) s += l2(v.subspan(off, q));
    return s;
}

struct Penalty {
    std::function<void(std::span<double>, double)> prox;  // in place, argument is the step 1/L
    std::function<double(std::span<const double>)> value;
    std::function<double(std::span<const double>, std::span<const double>, double)> residual;  // (x, grad, L)
};

Penalty group_penalty(std::size_t q, double lambda) {
    Penalty p;
    p.prox = [q, lambda](std::span<double> v, double step) { block_soft_threshold_inplace(v, q, step * lambda); };
    p.value = [q, lambda](std::span<const double> v) { return lambda * sum_block_norms(v, q); };
    p.residual = [q, lambda](std::span<const double> x, std::span<const double> g, double) {
        return block_kkt_residual(g, x, q, lambda);
    };
    return p;
}

// Accelerated proximal gradient with function-value restart. The gradient of a
// quadratic is affine, so the gradient at the extrapolated point is the same
// combination of the last two gradients and costs no model evaluation.
FitResult run_fista(const QuadraticModel& model, std::size_t q, const Penalty& pen, const SolverConfig& cfg,
                    std::vector<double> x) {
    const std::size_t d = model.dim();
    const bool fixed = cfg.step_rule == StepRule::fixed_lipschitz;
    std::vector<double> gx(d), xp(d), gxp(d), y(d), gy(d), z(d), gz(d);

    double fx = model.eval(x, gx);
    double Fx = fx + pen.value(x);
    double L = 1.0;
    if (fixed) {
        L = model.lipschitz();
    } else {
        const double gg = std::inner_product(gx.begin(), gx.end(), gx.begin(), 0.0);
        L = gg > 0.0 ? std::max(model.curvature(gx) / gg, 1e-12) : 1.0;
    }
    xp = x;
    gxp = gx;

    FitResult res;
    res.objective_trace.push_back(Fx);
    double kkt = pen.residual(x, gx, L);
    double t = 1.0;

    // One proximal step from (base, gbase); backtracking grows L until the quadratic bound holds.
    auto prox_step = [&](const std::vector<double>& base, const std::vector<double>& gbase, double fbase) {
        for (;;) {
            for (std::size_t i = 0; i < d; ++i) z[i] = base[i] - gbase[i] / L;
            pen.prox(z, 1.0 / L);
            const double fz = model.eval(z, gz);
            if (fixed) return fz;
            double lin = 0.0, sq = 0.0;
            for (std::size_t i = 0; i < d; ++i) {
                const double dz = z[i] - base[i];
                lin += gbase[i] * dz;
                sq += dz * dz;
            }
            if (fz <= fbase + lin + 0.5 * L * sq + 1e-14 * std::abs(fbase)) return fz;
            L *= 2.0;
        }
    };

    std::size_t it = 0;
    while (kkt > cfg.kkt_tol && it < cfg.max_iters) {
        ++it;
        double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double beta = (t - 1.0) / tn;
        for (std::size_t i = 0; i < d; ++i) {
            y[i] = x[i] + beta * (x[i] - xp[i]);
            gy[i] = gx[i] + beta * (gx[i] - gxp[i]);
        }
        double fy = fx;
        if (!fixed && beta != 0.0) fy = model.eval(y, gy);
        double fz = prox_step(y, gy, fy);
        double Fz = fz + pen.value(z);

        if (cfg.restart && Fz > Fx) {
            tn = 1.0;
            const double slack = 1e-12 * std::max(1.0, std::abs(Fx));
            for (int tries = 0;; ++tries) {
                fz = prox_step(x, gx, fx);
                Fz = fz + pen.value(z);
                if (Fz <= Fx + slack || tries >= 60) break;
                L *= 2.0;  // step estimate too optimistic
            }
        }
        xp.swap(x);
        gxp.swap(gx);
        x.swap(z);
        gx.swap(gz);
        fx = fz;
        Fx = Fz;
        t = tn;
        res.objective_trace.push_back(Fx);
        kkt = pen.residual(x, gx, L);
    }

    res.iterations = it;
    res.kkt_residual = kkt;
    res.converged = kkt <= cfg.kkt_tol;
    res.theta_hat = BlockParam(d / q, q, std::move(x));
    return res;
}

} // namespace

std::string to_string(StepRule r) { return r == StepRule::fixed_lipschitz ? "fixed_lipschitz" : "backtracking"; }

StepRule step_rule_from_string(const std::string& s) {
    if (s == "fixed_lipschitz") return StepRule::fixed_lipschitz;
    if (s == "backtracking") return StepRule::backtracking;
    throw ConfigError("step_rule: unknown value '" + s + "'");
}

std::vector<std::string> validate(const SolverConfig& cfg) {
    std::vector<std::string> errs;
    if (cfg.lambda && !(*cfg.lambda >= 0.0 && std::isfinite(*cfg.lambda))) errs.push_back("lambda: must be >= 0");
    if (cfg.lambda_group && !(*cfg.lambda_group >= 0.0 && std::isfinite(*cfg.lambda_group)))
        errs.push_back("lambda_group: must be >= 0");
    if (cfg.max_iters < 1) errs.push_back("max_iters: must be >= 1");
    if (!(cfg.kkt_tol > 0.0)) errs.push_back("kkt_tol: must be > 0");
    if (!(cfg.c0 >= 0.0)) errs.push_back("c0: must be >= 0");
    if (cfg.sigma_g && !(*cfg.sigma_g > 0.0)) errs.push_back("sigma_g: must be > 0");
    if (!(cfg.sn_c > 0.0)) errs.push_back("sn_c: must be > 0");
    if (!(cfg.sn_delta > 0.0 && cfg.sn_delta < 1.0)) errs.push_back("sn_delta: must lie in (0, 1)");
    return errs;
}

double lambda_rate(std::size_t M, std::size_t T, double c0, double sigma_g) {
    if (M < 2) throw InvalidInput("lambda_rate: M must be >= 2");
    if (T < 1) throw InvalidInput("lambda_rate: T must be >= 1");
    return 2.0 * c0 * sigma_g * std::sqrt(std::log(static_cast<double>(M)) / static_cast<double>(T));
}

double lambda_sn_default(std::size_t M, std::size_t T, double c, double delta) {
    if (M < 1 || T < 1) throw InvalidInput("lambda_sn_default: M and T must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidInput("lambda_sn_default: delta must lie in (0, 1)");
    return c * std::sqrt((std::log(static_cast<double>(M)) + std::log(1.0 / delta)) / static_cast<double>(T));
}

double resolve_sigma(const ProblemInstance& inst, const SolverConfig& cfg) {
    if (cfg.sigma_g) return *cfg.sigma_g;
    SolverConfig sc = cfg;
    sc.sigma_g = 1.0;  // unused by the square-root fit, avoids recursion
    const auto fit = fit_sqrt_group_lasso(inst, lambda_sn_default(inst.M(), inst.T(), cfg.sn_c, cfg.sn_delta), sc);
    QuadraticModel model(inst.w, inst.y);
    return std::sqrt(2.0 * model.loss(fit.theta_hat.values()));
}

double resolve_lambda(const ProblemInstance& inst, const SolverConfig& cfg) {
    if (cfg.lambda) return *cfg.lambda;
    return lambda_rate(inst.M(), inst.T(), cfg.c0, resolve_sigma(inst, cfg));
}

double block_kkt_residual(std::span<const double> grad, std::span<const double> theta, std::size_t q, double lambda) {
    if (grad.size() != theta.size() || q == 0 || theta.size() % q != 0)
        throw InvalidInput("block_kkt_residual: shape mismatch");
    double worst = 0.0;
    for (std::size_t off = 0; off < theta.size(); off += q) {
        const auto th = theta.subspan(off, q);
        const auto g = grad.subspan(off, q);
        const double n = l2(th);
        double r;
        if (n > 0.0) {
            double s = 0.0;
            for (std::size_t i = 0; i < q; ++i) {
                const double v = g[i] + lambda * th[i] / n;
                s += v * v;
            }
            r = std::sqrt(s);
        } else {
            r = std::max(0.0, l2(g) - lambda);
        }
        worst = std::max(worst, r);
    }
    return worst;
}

FitResult solve_group_lasso(const QuadraticModel& model, std::size_t q, double lambda, const SolverConfig& cfg,
                            const BlockParam* init) {
    if (!(lambda >= 0.0)) throw InvalidInput("group lasso: lambda must be >= 0");
    if (q == 0 || model.dim() % q != 0) throw InvalidInput("group lasso: block size does not divide dimension");
    std::vector<double> x0(model.dim(), 0.0);
    if (init) {
        if (init->size() != model.dim()) throw InvalidInput("group lasso: warm start has wrong shape");
        std::copy(init->values().begin(), init->values().end(), x0.begin());
    }
    return run_fista(model, q, group_penalty(q, lambda), cfg, std::move(x0));
}

FitResult fit_group_lasso(const ProblemInstance& inst, const SolverConfig& cfg) {
    const double lambda = resolve_lambda(inst, cfg);
    QuadraticModel model(inst.w, inst.y);
    return solve_group_lasso(model, inst.q(), lambda, cfg);
}

FitResult fit_sqrt_group_lasso(const ProblemInstance& inst, double lambda_sn, const SolverConfig& cfg) {
    if (!(lambda_sn >= 0.0)) throw InvalidInput("square-root fit: lambda_sn must be >= 0");
    const std::size_t M = inst.M(), q = inst.q();
    QuadraticModel model(inst.w, inst.y);
    BlockParam theta(M, q);
    FitResult out;
    double loss = model.loss(theta.values());
    if (loss == 0.0) {
        out.theta_hat = theta;
        out.objective_trace.push_back(0.0);
        out.converged = true;
        return out;
    }
    // sqrt(a) = min_s a/s + s/4 at s = 2 sqrt(a): alternate s with a group lasso at lambda_sn * s
    double sigma = std::sqrt(2.0 * loss);
    out.objective_trace.push_back(std::sqrt(loss));
    std::vector<double> grad(model.dim());
    for (int outer = 0; outer < 200; ++outer) {
        const double lam = lambda_sn * std::sqrt(2.0) * sigma;
        auto fit = solve_group_lasso(model, q, lam, cfg, &theta);
        theta = std::move(fit.theta_hat);
        out.iterations += fit.iterations;
        loss = model.eval(theta.values(), grad);
        const double sigma_new = std::sqrt(2.0 * loss);
        out.objective_trace.push_back(std::sqrt(loss) + lambda_sn * mixed_norm(theta, NormKind::one_two));
        out.kkt_residual = block_kkt_residual(grad, theta.values(), q, lambda_sn * 2.0 * std::sqrt(loss));
        const bool stable = std::abs(sigma_new - sigma) < 1e-8 * sigma;
        sigma = sigma_new;
        if (sigma == 0.0 || (stable && out.kkt_residual <= cfg.kkt_tol)) break;
    }
    out.converged = out.kkt_residual <= cfg.kkt_tol;
    out.theta_hat = std::move(theta);
    return out;
}

BlockParam online_prox_step(const BlockParam& theta, const BlockParam& grad, double eta, double lambda) {
    if (!theta.same_shape(grad)) throw InvalidInput("online_prox_step: theta and grad differ in shape");
    if (!(eta >= 0.0) || !(lambda >= 0.0)) throw InvalidInput("online_prox_step: eta and lambda must be >= 0");
    std::vector<double> v(theta.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = theta.values()[i] - eta * grad.values()[i];
    block_soft_threshold_inplace(v, theta.block_dim(), eta * lambda);
    return BlockParam(theta.num_blocks(), theta.block_dim(), std::move(v));
}

std::size_t median_block(std::span<const double> losses) {
    if (losses.empty()) throw InvalidInput("median_block: no blocks");
    std::vector<std::size_t> order(losses.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return losses[a] < losses[b] || (losses[a] == losses[b] && a < b);
    });
    return order[(losses.size() - 1) / 2];
}

FitResult fit_mom(const ProblemInstance& inst, std::size_t B, const SolverConfig& cfg) {
    const std::size_t T = inst.T();
    if (B == 0 || B > T) throw ConfigError("B: must lie in [1, T]");
    if (T % B != 0) throw ConfigError("B: must divide T");
    if (B % 2 == 0) throw ConfigError("B: must be odd");
    if (B == 1) return fit_group_lasso(inst, cfg);

    const std::size_t q = inst.q(), d = inst.dim(), m = T / B;
    const double lambda = resolve_lambda(inst, cfg);
    std::vector<QuadraticModel> blocks;
    blocks.reserve(B);
    double L = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        blocks.emplace_back(inst.w, inst.y, b * m, (b + 1) * m, QuadraticModel::Backend::design);
        L = std::max(L, blocks.back().lipschitz());
    }

    FitResult out;
    std::vector<double> x(d, 0.0), g(d), losses(B);
    double kkt = std::numeric_limits<double>::infinity();
    std::size_t it = 0;
    for (;; ++it) {
        for (std::size_t b = 0; b < B; ++b) losses[b] = blocks[b].loss(x);
        const std::size_t med = median_block(losses);
        const double f = blocks[med].eval(x, g);
        out.objective_trace.push_back(f + lambda * sum_block_norms(x, q));
        kkt = block_kkt_residual(g, x, q, lambda);
        if (kkt <= cfg.kkt_tol || it >= cfg.max_iters) break;
        for (std::size_t i = 0; i < d; ++i) x[i] -= g[i] / L;
        block_soft_threshold_inplace(x, q, lambda / L);
    }
    out.iterations = it;
    out.kkt_residual = kkt;
    out.converged = kkt <= cfg.kkt_tol;
    out.theta_hat = BlockParam(inst.M(), q, std::move(x));
    return out;
}

void sparse_group_prox_inplace(std::span<double> values, std::size_t q, std::span<const std::size_t> group_map,
                               std::size_t num_groups, double tau_block, double tau_group) {
    if (q == 0 || values.size() != group_map.size() * q) throw InvalidInput("sparse_group_prox: shape mismatch");
    if (!(tau_block >= 0.0) || !(tau_group >= 0.0)) throw InvalidInput("sparse_group_prox: thresholds must be >= 0");
    block_soft_threshold_inplace(values, q, tau_block);
    if (tau_group == 0.0) return;
    std::vector<double> sq(num_groups, 0.0);
    for (std::size_t j = 0; j < group_map.size(); ++j) {
        if (group_map[j] >= num_groups) throw InvalidInput("sparse_group_prox: group id out of range");
        const double n = l2(values.subspan(j * q, q));
        sq[group_map[j]] += n * n;
    }
    std::vector<double> scale(num_groups);
    for (std::size_t g = 0; g < num_groups; ++g) {
        const double n = std::sqrt(sq[g]);
        scale[g] = n <= tau_group ? 0.0 : 1.0 - tau_group / n;
    }
    for (std::size_t j = 0; j < group_map.size(); ++j)
        for (std::size_t i = 0; i < q; ++i) values[j * q + i] *= scale[group_map[j]];
}

FitResult fit_sparse_group(const ProblemInstance& inst, const SolverConfig& cfg) {
    if (!inst.group_map) throw ConfigError("group_map: sparse-group fit needs a group partition");
    const std::size_t q = inst.q();
    const std::size_t G = inst.num_groups;
    const std::vector<std::size_t> gmap = *inst.group_map;
    const double l2_pen = resolve_lambda(inst, cfg);
    double l1_pen = 0.0;
    if (cfg.lambda_group) {
        l1_pen = *cfg.lambda_group;
    } else if (G >= 2) {
        l1_pen = lambda_rate(G, inst.T(), cfg.c0, resolve_sigma(inst, cfg));
    }

    Penalty p;
    p.prox = [=](std::span<double> v, double step) {
        sparse_group_prox_inplace(v, q, gmap, G, step * l2_pen, step * l1_pen);
    };
    p.value = [=](std::span<const double> v) {
        std::vector<double> sq(G, 0.0);
        double blocks = 0.0;
        for (std::size_t j = 0; j < gmap.size(); ++j) {
            const double n = l2(v.subspan(j * q, q));
            blocks += n;
            sq[gmap[j]] += n * n;
        }
        double groups = 0.0;
        for (double s : sq) groups += std::sqrt(s);
        return l1_pen * groups + l2_pen * blocks;
    };
    // Gradient-mapping norm L * ||x - prox(x - g/L)||_{inf,2}
    p.residual = [=](std::span<const double> x, std::span<const double> g, double L) {
        std::vector<double> z(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] - g[i] / L;
        sparse_group_prox_inplace(z, q, gmap, G, l2_pen / L, l1_pen / L);
        double worst = 0.0;
        for (std::size_t off = 0; off < x.size(); off += q) {
            double s = 0.0;
            for (std::size_t i = 0; i < q; ++i) s += (x[off + i] - z[off + i]) * (x[off + i] - z[off + i]);
            worst = std::max(worst, L * std::sqrt(s));
        }
        return worst;
    };
    QuadraticModel model(inst.w, inst.y);
    return run_fista(model, q, p, cfg, std::vector<double>(inst.dim(), 0.0));
}

BlockParam HierarchicalFit::main_effects() const {
    const std::size_t q = fit.theta_hat.block_dim();
    auto v = fit.theta_hat.values();
    return BlockParam(num_main, q, std::vector<double>(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(num_main * q)));
}

std::vector<std::pair<std::size_t, std::size_t>> HierarchicalFit::interaction_support(double tol) const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t p = 0; p < pairs.size(); ++p)
        if (fit.theta_hat.block_norm(num_main + p) > tol) out.push_back(pairs[p]);
    return out;
}

bool HierarchicalFit::heredity_holds(double tol) const {
    for (const auto& [i, j] : interaction_support(tol))
        if (fit.theta_hat.block_norm(i) <= tol || fit.theta_hat.block_norm(j) <= tol) return false;
    return true;
}

HierarchicalFit fit_hierarchical(const ProblemInstance& inst, const SolverConfig& cfg) {
    if (!inst.interactions) throw ConfigError("interactions: hierarchical fit needs an interaction instance");
    const std::size_t M = inst.M(), q = inst.q(), T = inst.T();
    const double lambda = resolve_lambda(inst, cfg);
    SolverConfig c = cfg;
    c.lambda = lambda;

    HierarchicalFit out;
    out.num_main = M;
    FitResult stage1 = fit_group_lasso(inst, c);
    out.stage1_support = support_of(stage1.theta_hat);
    std::vector<std::size_t> S = out.stage1_support.indices();

    std::vector<std::pair<std::size_t, std::size_t>> cand;
    for (std::size_t a = 0; a < S.size(); ++a)
        for (std::size_t b = a + 1; b < S.size(); ++b) cand.emplace_back(S[a], S[b]);
    out.pairs = cand;

    FitResult stage2 = stage1;
    std::vector<double> expanded;
    std::size_t iters = stage1.iterations;
    // Refit until no selected interaction has a vanished main effect; S shrinks every round.
    while (!S.empty()) {
        const std::size_t nb = S.size() + cand.size();
        auto w2 = std::make_shared<DesignMatrix>(T, nb * q);
        std::vector<double> u(q);
        for (std::size_t t = 0; t < T; ++t) {
            auto src = inst.w.row(t);
            auto dst = w2->row(t);
            for (std::size_t a = 0; a < S.size(); ++a)
                std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(S[a] * q), q, dst.begin() + static_cast<std::ptrdiff_t>(a * q));
            for (std::size_t p = 0; p < cand.size(); ++p) {
                interaction_feature(src, q, cand[p].first, cand[p].second, u);
                std::copy(u.begin(), u.end(), dst.begin() + static_cast<std::ptrdiff_t>((S.size() + p) * q));
            }
        }
        QuadraticModel model(std::shared_ptr<const DesignMatrix>(w2), inst.y);
        stage2 = solve_group_lasso(model, q, lambda, c);
        iters += stage2.iterations;

        std::vector<std::size_t> keep;
        for (std::size_t a = 0; a < S.size(); ++a)
            if (stage2.theta_hat.block_norm(a) > kDefaultSupportTol) keep.push_back(S[a]);
        bool violated = false;
        for (std::size_t p = 0; p < cand.size(); ++p) {
            if (stage2.theta_hat.block_norm(S.size() + p) <= kDefaultSupportTol) continue;
            auto in_keep = [&](std::size_t j) { return std::binary_search(keep.begin(), keep.end(), j); };
            if (!in_keep(cand[p].first) || !in_keep(cand[p].second)) violated = true;
        }

        expanded.assign((M + out.pairs.size()) * q, 0.0);
        auto v = stage2.theta_hat.values();
        for (std::size_t a = 0; a < S.size(); ++a)
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(a * q), q, expanded.begin() + static_cast<std::ptrdiff_t>(S[a] * q));
        for (std::size_t p = 0; p < cand.size(); ++p) {
            const auto pos = std::find(out.pairs.begin(), out.pairs.end(), cand[p]) - out.pairs.begin();
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>((S.size() + p) * q), q,
                        expanded.begin() + static_cast<std::ptrdiff_t>((M + static_cast<std::size_t>(pos)) * q));
        }
        if (!violated) break;
        std::vector<std::pair<std::size_t, std::size_t>> next;
        for (const auto& pr : cand)
            if (std::binary_search(keep.begin(), keep.end(), pr.first) && std::binary_search(keep.begin(), keep.end(), pr.second))
                next.push_back(pr);
        S = std::move(keep);
        cand = std::move(next);
        expanded.clear();
    }

    if (expanded.empty()) {
        // empty support: main effects only, no interactions
        expanded.assign((M + out.pairs.size()) * q, 0.0);
        auto v = stage1.theta_hat.values();
        std::copy(v.begin(), v.end(), expanded.begin());
        stage2 = stage1;
    }
    out.fit.theta_hat = BlockParam(M + out.pairs.size(), q, std::move(expanded));
    out.fit.iterations = iters;
    out.fit.kkt_residual = stage2.kkt_residual;
    out.fit.converged = stage2.converged;
    out.fit.objective_trace = std::move(stage2.objective_trace);
    return out;
}

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> design_map(const ProblemInstance& inst) {
    return {inst.w.data(), static_cast<Eigen::Index>(inst.T()), static_cast<Eigen::Index>(inst.dim())};
}

// Relative residual of (W^T W / T + tau I) theta = W^T y / T, evaluated through W.
double ridge_residual(const ProblemInstance& inst, const Eigen::VectorXd& theta, double tau) {
    const auto W = design_map(inst);
    Eigen::Map<const Eigen::VectorXd> y(inst.y.data(), static_cast<Eigen::Index>(inst.T()));
    const double invT = 1.0 / static_cast<double>(inst.T());
    const Eigen::VectorXd rhs = W.transpose() * y * invT;
    const Eigen::VectorXd lhs = W.transpose() * (W * theta) * invT + tau * theta;
    const double nb = rhs.norm();
    return nb == 0.0 ? (lhs - rhs).norm() : (lhs - rhs).norm() / nb;
}

} // namespace

FitResult fit_ridge_dense(const ProblemInstance& inst, double tau) {
    if (!(tau > 0.0) || !std::isfinite(tau)) throw InvalidInput("fit_ridge_dense: tau must be > 0");
    const auto W = design_map(inst);
    const Eigen::Index T = W.rows(), d = W.cols();
    Eigen::Map<const Eigen::VectorXd> y(inst.y.data(), T);
    const double invT = 1.0 / static_cast<double>(T);
    Eigen::VectorXd theta;
    if (d <= T) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(d, d);
        A.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose(), invT);
        A.diagonal().array() += tau;
        theta = A.selfadjointView<Eigen::Lower>().llt().solve(W.transpose() * y * invT);
    } else {
        // dual form: theta = W^T (W W^T / T + tau I)^{-1} y / T
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(T, T);
        K.selfadjointView<Eigen::Lower>().rankUpdate(W, invT);
        K.diagonal().array() += tau;
        const Eigen::VectorXd alpha = K.selfadjointView<Eigen::Lower>().llt().solve(y * invT);
        theta = W.transpose() * alpha;
    }
    FitResult out;
    out.iterations = 1;
    out.kkt_residual = ridge_residual(inst, theta, tau);
    out.converged = out.kkt_residual <= 1e-10;
    std::vector<double> v(theta.data(), theta.data() + d);
    const double loss = 0.5 * (y - W * theta).squaredNorm() * invT;
    out.objective_trace.push_back(loss + 0.5 * tau * theta.squaredNorm());
    out.theta_hat = BlockParam(inst.M(), inst.q(), std::move(v));
    return out;
}

RidgePath::RidgePath(const ProblemInstance& inst) : m_(inst.M()), q_(inst.q()), inst_(&inst) {
    const auto W = design_map(inst);
    const Eigen::Index T = W.rows(), d = W.cols();
    Eigen::Map<const Eigen::VectorXd> y(inst.y.data(), T);
    const double invT = 1.0 / static_cast<double>(T);
    dual_ = d > T;
    const Eigen::Index n = dual_ ? T : d;
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(n, n);
    if (dual_) {
        G.selfadjointView<Eigen::Lower>().rankUpdate(W, invT);
    } else {
        G.selfadjointView<Eigen::Lower>().rankUpdate(W.transpose(), invT);
    }
    G.triangularView<Eigen::StrictlyUpper>() = G.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const Eigen::VectorXd rhs = dual_ ? Eigen::VectorXd(y * invT) : Eigen::VectorXd(W.transpose() * y * invT);
    const Eigen::VectorXd proj = es.eigenvectors().transpose() * rhs;
    evecs_.assign(es.eigenvectors().data(), es.eigenvectors().data() + n * n);
    evals_.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
    proj_.assign(proj.data(), proj.data() + n);
}

BlockParam RidgePath::solve(double tau) const {
    if (!(tau > 0.0)) throw InvalidInput("RidgePath::solve: tau must be > 0");
    const Eigen::Index n = static_cast<Eigen::Index>(evals_.size());
    Eigen::Map<const Eigen::MatrixXd> V(evecs_.data(), n, n);
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) c[i] = proj_[static_cast<std::size_t>(i)] / (std::max(evals_[static_cast<std::size_t>(i)], 0.0) + tau);
    Eigen::VectorXd sol = V * c;
    if (dual_) sol = design_map(*inst_).transpose() * sol;
    return BlockParam(m_, q_, std::vector<double>(sol.data(), sol.data() + sol.size()));
}

} // namespace saclab
