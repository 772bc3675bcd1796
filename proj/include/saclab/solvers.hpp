#pragma once
// Estimators for the quadratic surrogate: accelerated proximal group lasso,
// square-root, online proximal steps, median-of-means, sparse-group,
// two-stage hierarchical and the dense ridge baseline.

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "saclab/block_param.hpp"
#include "saclab/problem_gen.hpp"
#include "saclab/quadratic_model.hpp"

namespace saclab {

enum class StepRule { fixed_lipschitz, backtracking };

std::string to_string(StepRule r);
StepRule step_rule_from_string(const std::string& s);

struct SolverConfig {
    /// Penalty level; unset means lambda_rate(M, T, c0, sigma) with sigma from a square-root fit.
    std::optional<double> lambda;
    /// Group penalty of the sparse-group objective; unset means the same rate over G groups.
    std::optional<double> lambda_group;
    std::size_t max_iters = 5000;
    double kkt_tol = 1e-8;
    StepRule step_rule = StepRule::fixed_lipschitz;
    bool restart = true;
    double c0 = 1.0;
    /// Noise scale in the rate; unset means estimated by a square-root fit.
    std::optional<double> sigma_g;
    /// Square-root tuning lambda_sn = sn_c * sqrt((ln M + ln(1/sn_delta)) / T).
    double sn_c = 1.1;
    double sn_delta = 0.05;
};

std::vector<std::string> validate(const SolverConfig& cfg);

struct FitResult {
    BlockParam theta_hat;
    std::size_t iterations = 0;
    double kkt_residual = 0.0;
    std::vector<double> objective_trace;
    bool converged = false;
};

/// 2 * c0 * sigma_g * sqrt(ln M / T); throws InvalidInput for M < 2 or T < 1.
double lambda_rate(std::size_t M, std::size_t T, double c0, double sigma_g);
double lambda_sn_default(std::size_t M, std::size_t T, double c, double delta);
/// cfg.lambda if set, else the rate with the noise scale taken from a square-root fit.
double resolve_lambda(const ProblemInstance& inst, const SolverConfig& cfg);
/// cfg.sigma_g if set, else sqrt(2 * loss) at the default square-root fit.
double resolve_sigma(const ProblemInstance& inst, const SolverConfig& cfg);

/// Block KKT residual of L + lambda*||.||_{1,2} given the gradient of L at theta:
/// active blocks ||g_j + lambda theta_j/||theta_j|| ||, inactive max(0, ||g_j|| - lambda).
double block_kkt_residual(std::span<const double> grad, std::span<const double> theta, std::size_t q, double lambda);

/// Group lasso on an explicit model; blocks of length q, optional warm start.
FitResult solve_group_lasso(const QuadraticModel& model, std::size_t q, double lambda, const SolverConfig& cfg,
                            const BlockParam* init = nullptr);

FitResult fit_group_lasso(const ProblemInstance& inst, const SolverConfig& cfg);
FitResult fit_sqrt_group_lasso(const ProblemInstance& inst, double lambda_sn, const SolverConfig& cfg);
BlockParam online_prox_step(const BlockParam& theta, const BlockParam& grad, double eta, double lambda);
FitResult fit_mom(const ProblemInstance& inst, std::size_t B, const SolverConfig& cfg);
/// Index of the median loss (losses.size() odd); ties by smaller index.
std::size_t median_block(std::span<const double> losses);

/// Prox of eta*(l1*sum_g ||theta_g|| + l2*sum_j ||theta_j||) for a block -> group map.
void sparse_group_prox_inplace(std::span<double> values, std::size_t q, std::span<const std::size_t> group_map,
                               std::size_t num_groups, double tau_block, double tau_group);
FitResult fit_sparse_group(const ProblemInstance& inst, const SolverConfig& cfg);

struct HierarchicalFit {
    /// Expanded parameter: M main-effect blocks followed by one block per candidate pair.
    FitResult fit;
    std::size_t num_main = 0;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;  // candidate pairs (i < j) within the stage-1 support
    SupportSet stage1_support;

    BlockParam main_effects() const;
    /// Pairs whose interaction block is above tol.
    std::vector<std::pair<std::size_t, std::size_t>> interaction_support(double tol = kDefaultSupportTol) const;
    /// Every selected interaction has both main effects selected.
    bool heredity_holds(double tol = kDefaultSupportTol) const;
};
HierarchicalFit fit_hierarchical(const ProblemInstance& inst, const SolverConfig& cfg);

FitResult fit_ridge_dense(const ProblemInstance& inst, double tau);

/// Ridge solutions for many tau from one eigendecomposition of the smaller Gram matrix.
class RidgePath {
public:
    explicit RidgePath(const ProblemInstance& inst);
    BlockParam solve(double tau) const;

private:
    std::size_t m_ = 0;
    std::size_t q_ = 0;
    bool dual_ = false;
    std::vector<double> evecs_;  // n x n column-major
    std::vector<double> evals_;
    std::vector<double> proj_;   // eigen-coordinates of the right-hand side
    const ProblemInstance* inst_ = nullptr;
};

} // namespace saclab
