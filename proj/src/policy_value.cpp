#include "saclab/policy_value.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saclab/errors.hpp"
#include "saclab/rng.hpp"

namespace saclab {

namespace {

double inner(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_psi(const BlockParam& theta, std::span<const double> psi) {
    if (psi.size() != theta.block_dim()) throw InvalidInput("context feature length must equal the block dimension");
}

} // namespace

void CostModel::check(std::size_t M) const {
    if (per_tool_costs.size() != M) throw InvalidInput("CostModel: one cost per tool");
    for (double c : per_tool_costs)
        if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidInput("CostModel: costs must be finite and >= 0");
}

double set_score(const BlockParam& theta, std::span<const double> psi, const ActionSet& a) {
    check_psi(theta, psi);
    double s = 0.0;
    for (std::size_t j : a.tools) {
        if (j >= theta.num_blocks()) throw InvalidInput("set_score: tool index out of range");
        s += inner(theta.block(j), psi);
    }
    return s;
}

ActionSet select_top_b(const BlockParam& theta, std::span<const double> psi, const CostModel& costs, std::size_t B,
                       std::span<const std::size_t> candidates) {
    check_psi(theta, psi);
    costs.check(theta.num_blocks());
    std::vector<std::pair<double, std::size_t>> pos;
    for (std::size_t j : candidates) {
        if (j >= theta.num_blocks()) throw InvalidInput("select_top_b: candidate out of range");
        const double m = inner(theta.block(j), psi) - costs.per_tool_costs[j];
        if (m > 0.0) pos.emplace_back(m, j);
    }
    std::sort(pos.begin(), pos.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    ActionSet out;
    out.budget = B;
    for (std::size_t i = 0; i < std::min(B, pos.size()); ++i) out.tools.push_back(pos[i].second);
    std::sort(out.tools.begin(), out.tools.end());
    return out;
}

ActionSet select_top_b(const BlockParam& theta, std::span<const double> psi, const CostModel& costs, std::size_t B) {
    std::vector<std::size_t> all(theta.num_blocks());
    std::iota(all.begin(), all.end(), std::size_t{0});
    return select_top_b(theta, psi, costs, B, all);
}

std::uint64_t count_actions(std::size_t M, std::size_t B, std::uint64_t cap) {
    std::uint64_t total = 0;
    std::uint64_t c = 1;  // C(M, b)
    for (std::size_t b = 0; b <= std::min(B, M); ++b) {
        if (b > 0) {
            // c * (M - b + 1) / b is exact; guard the product against overflow
            const std::uint64_t num = M - b + 1;
            if (c > (cap + 1) * static_cast<std::uint64_t>(b) / num + 1) return cap + 1;
            c = c * num / b;
        }
        total += c;
        if (total > cap) return cap + 1;
    }
    return total;
}

GibbsTable gibbs_distribution(const BlockParam& theta, std::span<const double> psi, std::size_t B, std::uint64_t cap) {
    check_psi(theta, psi);
    const std::size_t M = theta.num_blocks();
    const std::uint64_t n = count_actions(M, B, cap);
    if (n > cap)
        throw TooLargeError("gibbs_distribution: more than " + std::to_string(cap) +
                            " actions; use select_top_b for large action classes");
    std::vector<double> s(M);
    for (std::size_t j = 0; j < M; ++j) s[j] = inner(theta.block(j), psi);

    GibbsTable tab;
    std::vector<double> logw;
    tab.actions.reserve(n);
    logw.reserve(n);
    const std::size_t bmax = std::min(B, M);
    for (std::size_t b = 0; b <= bmax; ++b) {
        std::vector<std::size_t> idx(b);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        for (;;) {
            double score = 0.0;
            for (std::size_t j : idx) score += s[j];
            tab.actions.push_back({idx, B});
            logw.push_back(score);
            // next combination in lexicographic order
            std::size_t i = b;
            while (i > 0 && idx[i - 1] == M - b + i - 1) --i;
            if (i == 0) break;
            ++idx[i - 1];
            for (std::size_t r = i; r < b; ++r) idx[r] = idx[r - 1] + 1;
        }
    }
    const double mx = *std::max_element(logw.begin(), logw.end());
    double total = 0.0, comp = 0.0;
    tab.probs.resize(logw.size());
    for (std::size_t i = 0; i < logw.size(); ++i) {
        tab.probs[i] = std::exp(logw[i] - mx);
        const double yv = tab.probs[i] - comp;
        const double tv = total + yv;
        comp = (tv - total) - yv;
        total = tv;
    }
    for (double& p : tab.probs) p /= total;
    return tab;
}

std::vector<double> draw_context(const GenConfig& cfg, std::uint64_t seed, std::size_t index) {
    Rng rng(derive_seed(seed, index, 0x636f6e74657874ULL));
    std::vector<double> psi(cfg.q);
    if (cfg.q == 1) {
        psi[0] = rademacher(rng);
    } else {
        double n = 0.0;
        while (n == 0.0) {
            n = 0.0;
            for (double& v : psi) {
                v = standard_normal(rng);
                n += v * v;
            }
        }
        n = std::sqrt(n);
        for (double& v : psi) v /= n;
    }
    for (double& v : psi) v *= cfg.feature_scale;
    return psi;
}

std::vector<double> context_rewards(const BlockParam& theta, const ProblemInstance& inst, const CostModel& costs,
                                    std::size_t B, std::size_t num_contexts, std::uint64_t seed) {
    if (!theta.same_shape(inst.theta_star)) throw InvalidInput("one_step_value: theta has wrong shape");
    costs.check(inst.M());
    std::vector<double> out(num_contexts);
    for (std::size_t c = 0; c < num_contexts; ++c) {
        const auto psi = draw_context(inst.config, seed, c);
        const auto a = select_top_b(theta, psi, costs, B);
        double r = set_score(inst.theta_star, psi, a);
        for (std::size_t j : a.tools) r -= costs.per_tool_costs[j];
        out[c] = r;
    }
    return out;
}

double one_step_value(const BlockParam& theta, const ProblemInstance& inst, const CostModel& costs, std::size_t B,
                      std::size_t num_contexts, std::uint64_t seed) {
    if (num_contexts == 0) throw InvalidInput("one_step_value: need at least one context");
    const auto r = context_rewards(theta, inst, costs, B, num_contexts, seed);
    return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(num_contexts);
}

std::vector<BlockParam> value_probes(const ProblemInstance& inst, std::size_t num_probes, double radius,
                                     std::uint64_t seed) {
    if (!(radius > 0.0)) throw InvalidInput("value probes: radius must be > 0");
    const std::size_t M = inst.M(), q = inst.q();
    Rng rng(derive_seed(seed, "probes"));
    std::vector<BlockParam> out;
    for (std::size_t p = 0; p < num_probes; ++p) {
        BlockParam delta(M, q);
        // support blocks always perturbed, plus a few random off-support blocks
        std::vector<std::size_t> blocks = inst.s_star.indices();
        const std::size_t extra = uniform_index(rng, std::max<std::size_t>(inst.s_star.size(), 1) + 1);
        for (std::size_t e = 0; e < extra; ++e) blocks.push_back(uniform_index(rng, M));
        for (std::size_t j : blocks)
            for (double& v : delta.block(j)) v = standard_normal(rng);
        const double n = mixed_norm(delta, NormKind::one_two);
        if (n == 0.0) continue;
        const double target = radius * static_cast<double>(p + 1) / static_cast<double>(num_probes);
        out.push_back(inst.theta_star + (target / n) * delta);
    }
    return out;
}

double value_sensitivity_from_probes(const ProblemInstance& inst, const CostModel& costs, std::size_t B,
                                     std::span<const BlockParam> probes, std::size_t num_contexts,
                                     std::uint64_t seed) {
    const double v_star = one_step_value(inst.theta_star, inst, costs, B, num_contexts, seed);
    double best = 0.0;
    for (const auto& th : probes) {
        const double dn = mixed_norm(th - inst.theta_star, NormKind::one_two);
        if (dn == 0.0) continue;
        const double v = one_step_value(th, inst, costs, B, num_contexts, seed);
        best = std::max(best, std::abs(v - v_star) / dn);
    }
    return best;
}

double value_sensitivity_estimate(const ProblemInstance& inst, const CostModel& costs, std::size_t B,
                                  std::size_t num_probes, double radius, std::uint64_t seed,
                                  std::size_t num_contexts) {
    const auto probes = value_probes(inst, num_probes, radius, seed);
    return value_sensitivity_from_probes(inst, costs, B, probes, num_contexts, seed);
}

} // namespace saclab
