#pragma once
// Finite POMDPs with an exact Bayes filter, controlled belief corruption,
// discounted Monte Carlo evaluation of a linear belief router and the
// belief-error constants.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "saclab/block_param.hpp"
#include "saclab/problem_gen.hpp"

namespace saclab {

struct PomdpModel {
    std::size_t num_states = 0;
    std::size_t num_obs = 0;
    std::vector<std::string> actions;
    /// Tool subset behind each action (router scores sum over it); singletons by default.
    std::vector<std::vector<std::size_t>> action_tools;
    std::vector<std::vector<double>> transition;  // per action, S x S row-major
    std::vector<double> observation;              // S x O row-major
    std::vector<double> reward;                   // S x A row-major
    std::vector<double> initial;                  // length S
    double gamma = 0.9;

    std::size_t num_actions() const { return actions.size(); }
    std::size_t num_tools() const;
    double P(std::size_t a, std::size_t s, std::size_t s2) const { return transition[a][s * num_states + s2]; }
    double O(std::size_t s, std::size_t o) const { return observation[s * num_obs + o]; }
    double r(std::size_t s, std::size_t a) const { return reward[s * num_actions() + a]; }
    double r_max() const;

    /// Every violation as "path: message" (JSON-pointer style paths).
    std::vector<std::string> validate() const;
    /// Throws ConfigError carrying all violations.
    void require_valid() const;
};

/// Built-ins: "tiger" (2 states), "chain4", "grid6".
PomdpModel builtin_pomdp(const std::string& name);
std::vector<std::string> builtin_pomdp_names();

struct Belief {
    std::vector<double> probs;
    /// Throws InvalidInput unless probs lies on the simplex within tol.
    void check(double tol = 1e-12) const;
};

Belief belief_update(const PomdpModel& model, const Belief& b, std::size_t a, std::size_t o);

enum class CorruptionMode { uniform_mix, adversarial_mass };
std::string to_string(CorruptionMode m);
CorruptionMode corruption_from_string(const std::string& s);

struct CorruptedBelief {
    Belief belief;
    double achieved_eps = 0.0;  // exact l1 distance to the input
    bool infeasible = false;    // target exceeded what the mode can reach
};
CorruptedBelief corrupt_belief(const Belief& b, double eps_target, CorruptionMode mode);

struct BeliefMode {
    bool corrupted = false;
    double eps = 0.0;
    CorruptionMode mode = CorruptionMode::uniform_mix;

    static BeliefMode exact() { return {}; }
    static BeliefMode corrupt(double eps, CorruptionMode m) { return {true, eps, m}; }
};

/// Action whose tool set has the largest score sum_{j in tools} <theta_j, b>; ties to the smaller index.
std::size_t router_action(const PomdpModel& model, const BlockParam& router, std::span<const double> belief);

/// Smallest horizon with gamma^H * R_max / (1 - gamma) <= tol.
std::size_t required_horizon(const PomdpModel& model, double tol = 1e-6);

struct RolloutStats {
    std::vector<double> returns;  // per rollout
    double max_eps = 0.0;         // largest achieved per-step corruption
    double mean() const;
    double stderr_mean() const;
};
/// Rollouts draw their randomness from (seed, rollout, step), so exact and
/// corrupted runs with one seed share all random numbers.
RolloutStats policy_rollouts(const PomdpModel& model, const BlockParam& router, const BeliefMode& mode,
                             std::size_t horizon, std::size_t num_rollouts, std::uint64_t seed);
double policy_eval_discounted(const PomdpModel& model, const BlockParam& router, const BeliefMode& mode,
                              std::size_t horizon, std::size_t num_rollouts, std::uint64_t seed);

double c_bel_constant(double L_r, double L_P, double R_max, double gamma);

struct LipschitzEstimate {
    double L_r = 0.0;
    double L_P = 0.0;
    std::size_t grid_resolution = 0;
    std::size_t grid_points = 0;
};
/// L_P from belief pairs on the simplex grid with spacing 1/resolution; 0 picks a resolution automatically.
LipschitzEstimate lipschitz_constants(const PomdpModel& model, std::size_t resolution = 0);

/// Router whose block for each tool is the reward column of that tool's singleton action.
BlockParam reward_router(const PomdpModel& model);

struct BeliefTraceConfig {
    std::size_t num_tools = 64;  // M
    std::size_t k = 3;
    std::size_t set_size = 8;    // tools attached to each sample
    std::size_t T = 800;
    double noise_sigma = 0.1;
    double signal_magnitude = 5.0;
    double eps = 0.0;
    CorruptionMode mode = CorruptionMode::uniform_mix;
    std::uint64_t seed = 0;
};
struct BeliefTraces {
    ProblemInstance exact;      // features from exact beliefs
    ProblemInstance corrupted;  // same targets, features from corrupted beliefs
    double achieved_eps = 0.0;
};
/// Belief-feature regression traces: w_t carries b_t in the blocks of a random tool set.
BeliefTraces generate_belief_traces(const PomdpModel& model, const BeliefTraceConfig& cfg);

double belief_grad_perturbation(const ProblemInstance& trace_b, const ProblemInstance& trace_bhat,
                                const BlockParam& theta_star);

} // namespace saclab
