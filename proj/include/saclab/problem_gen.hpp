#pragma once
// Seeded synthetic regimes for the quadratic surrogate
//   y_t = <theta*, w_t> + xi_t,  ||w_t||_{inf,2} <= 1,
// plus grouped tools, pairwise interactions, drifting supports and
// contamination. Every generator is a pure function of its config and seed.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saclab/block_param.hpp"

namespace saclab {

enum class DesignKind { gaussian_normalized, orthogonal, equicorrelated, duplicated_column, custom };

std::string to_string(DesignKind d);
DesignKind design_from_string(const std::string& s);  // throws ConfigError

struct GenConfig {
    std::size_t M = 100;
    std::size_t q = 1;
    std::size_t k = 5;
    std::size_t T = 200;
    double noise_sigma = 1.0;
    double feature_scale = 1.0;  // every design block has norm <= feature_scale <= 1
    DesignKind design = DesignKind::gaussian_normalized;
    double rho = 0.0;  // equicorrelated only
    double signal_magnitude = 1.0;
    std::uint64_t seed = 0;

    std::size_t dim() const { return M * q; }
    friend bool operator==(const GenConfig&, const GenConfig&) = default;
};

/// Every violation as "field: message"; empty when the config is valid.
std::vector<std::string> validate(const GenConfig& cfg);
/// Throws ConfigError carrying all violations.
void require_valid(const GenConfig& cfg);

/// Row-major T x d matrix of design points.
class DesignMatrix {
public:
    DesignMatrix() = default;
    DesignMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    DesignMatrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::span<const double> row(std::size_t t) const { return {data_.data() + t * cols_, cols_}; }
    std::span<double> row(std::size_t t) { return {data_.data() + t * cols_, cols_}; }
    double operator()(std::size_t t, std::size_t c) const { return data_[t * cols_ + c]; }
    double& operator()(std::size_t t, std::size_t c) { return data_[t * cols_ + c]; }
    const double* data() const { return data_.data(); }
    double* data() { return data_.data(); }

    /// Copy of the given columns, in the given order.
    DesignMatrix select_columns(std::span<const std::size_t> cols) const;

    friend bool operator==(const DesignMatrix&, const DesignMatrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct Interaction {
    std::size_t i = 0;  // i < j
    std::size_t j = 0;
    std::vector<double> beta;  // length q
    friend bool operator==(const Interaction&, const Interaction&) = default;
};

struct DriftSegment {
    std::size_t start = 0;  // first sample index of the segment
    BlockParam theta;
    friend bool operator==(const DriftSegment&, const DriftSegment&) = default;
};

struct DuplicatePair {
    std::size_t copy = 0;    // irrelevant block holding the copy
    std::size_t source = 0;  // relevant block that was copied
    friend bool operator==(const DuplicatePair&, const DuplicatePair&) = default;
};

struct ProblemInstance {
    GenConfig config;
    DesignMatrix w;
    std::vector<double> y;
    BlockParam theta_star;
    SupportSet s_star;

    std::optional<std::vector<std::size_t>> group_map;  // block -> group id
    std::size_t num_groups = 0;
    std::optional<std::vector<Interaction>> interactions;
    std::optional<std::vector<DriftSegment>> drift_schedule;
    std::vector<std::size_t> contamination_mask;  // sorted
    std::optional<DuplicatePair> duplicate;
    /// For orthogonal designs W^T W / T = orthogonal_scale * I exactly.
    double orthogonal_scale = 0.0;

    std::size_t T() const { return w.rows(); }
    std::size_t M() const { return theta_star.num_blocks(); }
    std::size_t q() const { return theta_star.block_dim(); }
    std::size_t dim() const { return w.cols(); }

    /// Comparator in force at sample t (theta_star unless a drift schedule exists).
    const BlockParam& theta_at(std::size_t t) const;
    /// Total 1,2-variation of the drift schedule (0 when stationary).
    double variation() const;

    friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

/// (u_t)_{ij} = (w_t)_i (.) (w_t)_j; norm <= ||(w_t)_i|| ||(w_t)_j|| <= 1.
void interaction_feature(std::span<const double> w_row, std::size_t q, std::size_t i, std::size_t j,
                         std::span<double> out);

ProblemInstance gen_linear_instance(const GenConfig& cfg);
ProblemInstance gen_grouped_instance(const GenConfig& cfg, std::size_t num_groups, std::size_t active_groups);
ProblemInstance gen_interaction_instance(const GenConfig& cfg, std::size_t k2);
ProblemInstance gen_drift_sequence(const GenConfig& cfg, std::size_t num_segments);

/// Replaces floor(eps*T) responses, a contiguous (cyclic) run of samples whose
/// start is drawn from seed, by magnitude * sign(-<theta*_t, w_t>).
ProblemInstance inject_contamination(const ProblemInstance& inst, double eps, double magnitude, std::uint64_t seed);

/// Wraps explicit data; theta_star may be all zero. design is set to custom.
ProblemInstance make_custom_instance(std::size_t M, std::size_t q, DesignMatrix w, std::vector<double> y,
                                     BlockParam theta_star);

/// Uniform k-subset of 0..M-1, sorted.
std::vector<std::size_t> sample_support(std::size_t M, std::size_t k, std::uint64_t seed);

} // namespace saclab
