#pragma once
// Decision layer: set scores, budgeted top-B selection under additive costs,
// the exact Gibbs policy on enumerable action classes and Monte Carlo values.

#include <cstdint>
#include <span>
#include <vector>

#include "saclab/block_param.hpp"
#include "saclab/problem_gen.hpp"

namespace saclab {

struct ActionSet {
    std::vector<std::size_t> tools;  // sorted, 0-based
    std::size_t budget = 0;
    friend bool operator==(const ActionSet&, const ActionSet&) = default;
};

struct CostModel {
    std::vector<double> per_tool_costs;

    static CostModel zeros(std::size_t M) { return {std::vector<double>(M, 0.0)}; }
    /// Throws InvalidInput on negative or non-finite costs or size mismatch.
    void check(std::size_t M) const;
};

double set_score(const BlockParam& theta, std::span<const double> psi, const ActionSet& a);

/// Margins <theta_j, psi> - c_j; positive ones kept, at most B by descending margin, ties to the smaller index.
ActionSet select_top_b(const BlockParam& theta, std::span<const double> psi, const CostModel& costs, std::size_t B);
/// Same rule restricted to the listed candidate tools.
ActionSet select_top_b(const BlockParam& theta, std::span<const double> psi, const CostModel& costs, std::size_t B,
                       std::span<const std::size_t> candidates);

struct GibbsTable {
    std::vector<ActionSet> actions;  // by size, then lexicographic
    std::vector<double> probs;
};

/// Number of subsets of size <= B of M tools, saturating at cap + 1.
std::uint64_t count_actions(std::size_t M, std::size_t B, std::uint64_t cap);
inline constexpr std::uint64_t kDefaultGibbsCap = 1000000;
/// Throws TooLargeError when the class exceeds cap (use select_top_b instead).
GibbsTable gibbs_distribution(const BlockParam& theta, std::span<const double> psi, std::size_t B,
                              std::uint64_t cap = kDefaultGibbsCap);

/// Context feature psi drawn like a design block (unit direction scaled by feature_scale).
std::vector<double> draw_context(const GenConfig& cfg, std::uint64_t seed, std::size_t index);

/// Per-context net reward of the top-B rule driven by theta, true reward from theta*.
std::vector<double> context_rewards(const BlockParam& theta, const ProblemInstance& inst, const CostModel& costs,
                                    std::size_t B, std::size_t num_contexts, std::uint64_t seed);
double one_step_value(const BlockParam& theta, const ProblemInstance& inst, const CostModel& costs, std::size_t B,
                      std::size_t num_contexts, std::uint64_t seed);

/// Random perturbations of theta* with ||Delta||_{1,2} on an even grid in (0, radius].
std::vector<BlockParam> value_probes(const ProblemInstance& inst, std::size_t num_probes, double radius,
                                     std::uint64_t seed);
/// max over nonzero probes of |V(theta* + Delta) - V(theta*)| / ||Delta||_{1,2}, shared contexts.
double value_sensitivity_from_probes(const ProblemInstance& inst, const CostModel& costs, std::size_t B,
                                     std::span<const BlockParam> probes, std::size_t num_contexts, std::uint64_t seed);
double value_sensitivity_estimate(const ProblemInstance& inst, const CostModel& costs, std::size_t B,
                                  std::size_t num_probes, double radius, std::uint64_t seed,
                                  std::size_t num_contexts = 2000);

} // namespace saclab
