#pragma once
// Block-structured parameters theta = (theta_1, ..., theta_M), theta_j in R^q,
// stored as M contiguous blocks. Block indices are 0-based throughout.

#include <cstddef>
#include <span>
#include <vector>

namespace saclab {

enum class NormKind { one_two, two_two, inf_two };

class BlockParam {
public:
    BlockParam() = default;
    /// Zero parameter with M blocks of length q.
    BlockParam(std::size_t num_blocks, std::size_t block_dim);
    /// Takes ownership of M*q values; throws InvalidInput on size mismatch or non-finite entries.
    BlockParam(std::size_t num_blocks, std::size_t block_dim, std::vector<double> values);

    std::size_t num_blocks() const { return m_; }
    std::size_t block_dim() const { return q_; }
    std::size_t size() const { return values_.size(); }

    std::span<const double> values() const { return values_; }
    std::span<double> values() { return values_; }
    std::span<const double> block(std::size_t j) const { return {values_.data() + j * q_, q_}; }
    std::span<double> block(std::size_t j) { return {values_.data() + j * q_, q_}; }

    double block_norm(std::size_t j) const;
    bool same_shape(const BlockParam& other) const { return m_ == other.m_ && q_ == other.q_; }

    friend bool operator==(const BlockParam&, const BlockParam&) = default;

private:
    std::size_t m_ = 0;
    std::size_t q_ = 0;
    std::vector<double> values_;
};

/// Sorted, unique block indices.
class SupportSet {
public:
    SupportSet() = default;
    /// Sorts and deduplicates.
    explicit SupportSet(std::vector<std::size_t> indices);

    const std::vector<std::size_t>& indices() const { return idx_; }
    std::size_t size() const { return idx_.size(); }
    bool empty() const { return idx_.empty(); }
    bool contains(std::size_t j) const;
    bool is_subset_of(const SupportSet& other) const;
    /// Boolean membership mask over 0..M-1; throws InvalidInput if an index is >= M.
    std::vector<bool> mask(std::size_t num_blocks) const;

    friend bool operator==(const SupportSet&, const SupportSet&) = default;

private:
    std::vector<std::size_t> idx_;
};

inline constexpr double kDefaultSupportTol = 1e-8;

double mixed_norm(const BlockParam& theta, NormKind kind);

/// Proximal map of tau*||.||_{1,2}: each block scaled by max(0, 1 - tau/||z_j||).
BlockParam block_soft_threshold(const BlockParam& z, double tau);
/// In-place variant used by solvers.
void block_soft_threshold_inplace(std::span<double> values, std::size_t block_dim, double tau);

SupportSet support_of(const BlockParam& theta, double tol = kDefaultSupportTol);

/// ||delta_{S^c}||_{1,2} / ||delta_S||_{1,2}; +inf when only the off-support part
/// is nonzero, 0 when both vanish. delta lies in the sparse cone iff the ratio <= 3.
double cone_ratio(const BlockParam& delta, const SupportSet& s_star);

BlockParam operator-(const BlockParam& a, const BlockParam& b);
BlockParam operator+(const BlockParam& a, const BlockParam& b);
BlockParam operator*(double c, const BlockParam& a);

} // namespace saclab
