#include "oracles.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace saclab::oracle {

namespace {

double smoothed(std::span<const double> x, std::span<const double> z, std::span<const NormTerm> terms, double mu) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) f += 0.5 * (x[i] - z[i]) * (x[i] - z[i]);
    for (const auto& t : terms) {
        double s = mu * mu;
        for (auto i : t.indices) s += x[i] * x[i];
        f += t.weight * std::sqrt(s);
    }
    return f;
}

} // namespace

double prox_objective(std::span<const double> x, std::span<const double> z, std::span<const NormTerm> terms) {
    return smoothed(x, z, terms, 0.0);
}

std::vector<double> numeric_prox(std::span<const double> z, std::span<const NormTerm> terms) {
    const auto n = static_cast<Eigen::Index>(z.size());
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
    for (double mu = 1e-1; mu >= 1e-14; mu *= 0.1) {
        for (int it = 0; it < 200; ++it) {
            Eigen::VectorXd g = x - Eigen::Map<const Eigen::VectorXd>(z.data(), n);
            Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
            for (const auto& t : terms) {
                double s = mu * mu;
                for (auto i : t.indices) s += x[i] * x[i];
                const double r = std::sqrt(s);
                for (auto i : t.indices) {
                    g[i] += t.weight * x[i] / r;
                    for (auto j : t.indices) h(i, j) -= t.weight * x[i] * x[j] / (r * r * r);
                    h(i, i) += t.weight / r;
                }
            }
            if (g.norm() < 1e-15) break;
            const Eigen::VectorXd step = h.ldlt().solve(g);
            const double f0 = smoothed({x.data(), z.size()}, z, terms, mu);
            double a = 1.0;
            Eigen::VectorXd cand = x - step;
            while (smoothed({cand.data(), z.size()}, z, terms, mu) > f0 - 1e-4 * a * g.dot(step) && a > 1e-12) {
                a *= 0.5;
                cand = x - a * step;
            }
            if ((cand - x).norm() < 1e-17) break;
            x = cand;
        }
    }
    return {x.data(), x.data() + n};
}

std::vector<NormTerm> block_terms(std::size_t num_blocks, std::size_t q, double tau) {
    std::vector<NormTerm> out(num_blocks);
    for (std::size_t j = 0; j < num_blocks; ++j) {
        out[j].weight = tau;
        for (std::size_t c = 0; c < q; ++c) out[j].indices.push_back(j * q + c);
    }
    return out;
}

double lasso_objective(const Eigen::MatrixXd& w, const Eigen::VectorXd& y, const Eigen::VectorXd& theta, double lambda) {
    const double T = static_cast<double>(w.rows());
    return (y - w * theta).squaredNorm() / (2.0 * T) + lambda * theta.lpNorm<1>();
}

Eigen::VectorXd exhaustive_lasso(const Eigen::MatrixXd& w, const Eigen::VectorXd& y, double lambda) {
    const auto M = w.cols();
    if (M > 12) throw std::invalid_argument("exhaustive_lasso: too many columns");
    const double T = static_cast<double>(w.rows());
    const Eigen::MatrixXd H = w.transpose() * w / T;
    const Eigen::VectorXd c = w.transpose() * y / T;

    Eigen::VectorXd best = Eigen::VectorXd::Zero(M);
    double best_obj = std::numeric_limits<double>::infinity();
    std::vector<int> sign(static_cast<std::size_t>(M), -1);
    long total = 1;
    for (Eigen::Index j = 0; j < M; ++j) total *= 3;
    for (long code = 0; code < total; ++code) {
        long v = code;
        std::vector<Eigen::Index> S;
        for (Eigen::Index j = 0; j < M; ++j) {
            sign[j] = static_cast<int>(v % 3) - 1;
            v /= 3;
            if (sign[j] != 0) S.push_back(j);
        }
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(M);
        if (!S.empty()) {
            const auto k = static_cast<Eigen::Index>(S.size());
            Eigen::MatrixXd hs(k, k);
            Eigen::VectorXd rhs(k);
            for (Eigen::Index a = 0; a < k; ++a) {
                rhs[a] = c[S[a]] - lambda * sign[S[a]];
                for (Eigen::Index b = 0; b < k; ++b) hs(a, b) = H(S[a], S[b]);
            }
            Eigen::FullPivLU<Eigen::MatrixXd> lu(hs);
            if (lu.rank() < k) continue;
            const Eigen::VectorXd ts = lu.solve(rhs);
            bool signs_ok = true;
            for (Eigen::Index a = 0; a < k; ++a) {
                if (ts[a] * sign[S[a]] <= 0.0) signs_ok = false;
                theta[S[a]] = ts[a];
            }
            if (!signs_ok) continue;
        }
        // Off-support subgradient condition.
        const Eigen::VectorXd grad = H * theta - c;
        bool ok = true;
        for (Eigen::Index j = 0; j < M; ++j)
            if (sign[j] == 0 && std::abs(grad[j]) > lambda * (1.0 + 1e-10) + 1e-12) ok = false;
        if (!ok) continue;
        const double obj = lasso_objective(w, y, theta, lambda);
        if (obj < best_obj) {
            best_obj = obj;
            best = theta;
        }
    }
    if (!std::isfinite(best_obj)) throw std::runtime_error("exhaustive_lasso: no certified candidate");
    return best;
}

GibbsBrute brute_gibbs(std::span<const double> tool_scores, std::size_t B) {
    const std::size_t M = tool_scores.size();
    if (M > 20) throw std::invalid_argument("brute_gibbs: too many tools");
    GibbsBrute out;
    double total = 0.0;
    for (unsigned mask = 0; mask < (1u << M); ++mask) {
        if (static_cast<std::size_t>(std::popcount(mask)) > B) continue;
        double s = 0.0;
        for (std::size_t j = 0; j < M; ++j)
            if (mask & (1u << j)) s += tool_scores[j];
        out.masks.push_back(mask);
        out.probs.push_back(std::exp(s));
        total += out.probs.back();
    }
    for (double& p : out.probs) p /= total;
    return out;
}

} // namespace saclab::oracle
