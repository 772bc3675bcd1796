#pragma once
// Measurable diagnostics for the recovery conditions: gradient deviation,
// restricted curvature, irrepresentability, beta-min, Hessian stability and
// the primal-dual witness check of exact support recovery.

#include <cstdint>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "saclab/block_param.hpp"
#include "saclab/problem_gen.hpp"
#include "saclab/solvers.hpp"

namespace saclab {

struct CertificateReport {
    static constexpr double kSkipped = std::numeric_limits<double>::quiet_NaN();

    double lambda = 0.0;
    double grad_supnorm = 0.0;
    double rsc_mu = kSkipped;  // sampled upper estimate
    std::size_t rsc_dirs = 0;
    double irrep_gap = kSkipped;  // 1 - irrepresentability constant
    double beta_min_margin = 0.0;
    double hessian_eta = kSkipped;
    double kappa_min = kSkipped;
    bool hessian_threshold_ok = false;
    bool pdw_pass = false;
    double dual_max = 0.0;
    bool no_false_exclusion = false;
    bool support_match = false;
    /// Block operator norms replaced by the spectral row-sum upper bound (q > 1).
    bool upper_bound = false;
    /// Population Hessian replaced by the empirical one (custom designs).
    bool hessian_proxy = false;
    std::string reason;
};

/// Blocks of the population Hessian H* of the instance's design; for custom
/// designs the empirical Hessian stands in and exact() is false.
class PopulationHessian {
public:
    explicit PopulationHessian(const ProblemInstance& inst);
    Eigen::MatrixXd block(std::size_t i, std::size_t j) const;
    /// Rows and columns restricted to the listed blocks.
    Eigen::MatrixXd submatrix(std::span<const std::size_t> rows, std::span<const std::size_t> cols) const;
    bool exact() const { return exact_; }
    /// True when H*_{ij} = 0 for i != j outside the duplicate pair.
    bool block_diagonal_except_duplicate() const;

private:
    const ProblemInstance* inst_;
    bool exact_ = true;
    double diag_ = 0.0;  // scale of the identity part
    double off_ = 0.0;   // equicorrelated off-diagonal scale
};

/// (1/n) sum_t w_t w_t^T restricted to blocks (rows, cols).
Eigen::MatrixXd empirical_hessian_blocks(const ProblemInstance& inst, std::span<const std::size_t> rows,
                                         std::span<const std::size_t> cols);

double grad_supnorm_at(const ProblemInstance& inst, const BlockParam& theta);
double rsc_estimate(const ProblemInstance& inst, const SupportSet& s_star, std::size_t num_dirs, std::uint64_t seed);

enum class HessianSource { population, empirical };

struct IrrepResult {
    double value = 0.0;
    bool upper_bound = false;
    bool proxy = false;
};
IrrepResult irrepresentability(const ProblemInstance& inst, const SupportSet& s_star,
                               HessianSource source = HessianSource::population);
/// ||H_{S^c S} H_{SS}^{-1}||_{inf,2 -> inf,2}; throws SingularityError if H_SS is singular.
double irrepresentability_constant(const ProblemInstance& inst, const SupportSet& s_star);

struct HessianStability {
    double eta = 0.0;
    double kappa_min = 0.0;
    double alpha = 0.0;
    bool threshold_ok = false;  // eta <= (alpha/4) kappa/(1+kappa)
    bool upper_bound = false;
    bool proxy = false;
};
HessianStability hessian_stability(const ProblemInstance& inst, const BlockParam& theta_a, const BlockParam& theta_b);

/// Block KKT residual at theta, computed directly from the data.
double kkt_residual(const ProblemInstance& inst, const BlockParam& theta, double lambda);

struct CertificateOptions {
    bool rsc = false;
    std::size_t rsc_dirs = 200;
    bool irrep = true;
    bool hessian = false;
    std::uint64_t seed = 0;
};
CertificateReport pdw_verify(const ProblemInstance& inst, const FitResult& fit, double lambda,
                             const CertificateOptions& opts = {});

} // namespace saclab
