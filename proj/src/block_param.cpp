#include "saclab/block_param.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "saclab/errors.hpp"

namespace saclab {

namespace {
double l2(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}
} // namespace

BlockParam::BlockParam(std::size_t num_blocks, std::size_t block_dim)
    : m_(num_blocks), q_(block_dim), values_(num_blocks * block_dim, 0.0) {
    if (block_dim == 0) throw InvalidInput("BlockParam: block_dim must be positive");
}

BlockParam::BlockParam(std::size_t num_blocks, std::size_t block_dim, std::vector<double> values)
    : m_(num_blocks), q_(block_dim), values_(std::move(values)) {
    if (block_dim == 0) throw InvalidInput("BlockParam: block_dim must be positive");
    if (values_.size() != m_ * q_) {
        throw InvalidInput("BlockParam: expected " + std::to_string(m_ * q_) + " values, got " +
                           std::to_string(values_.size()));
    }
    for (double v : values_) {
        if (!std::isfinite(v)) throw InvalidInput("BlockParam: non-finite entry");
    }
}

double BlockParam::block_norm(std::size_t j) const { return l2(block(j)); }

SupportSet::SupportSet(std::vector<std::size_t> indices) : idx_(std::move(indices)) {
    std::sort(idx_.begin(), idx_.end());
    idx_.erase(std::unique(idx_.begin(), idx_.end()), idx_.end());
}

bool SupportSet::contains(std::size_t j) const { return std::binary_search(idx_.begin(), idx_.end(), j); }

bool SupportSet::is_subset_of(const SupportSet& other) const {
    return std::includes(other.idx_.begin(), other.idx_.end(), idx_.begin(), idx_.end());
}

std::vector<bool> SupportSet::mask(std::size_t num_blocks) const {
    std::vector<bool> m(num_blocks, false);
    for (auto j : idx_) {
        if (j >= num_blocks) throw InvalidInput("SupportSet: index " + std::to_string(j) + " out of range");
        m[j] = true;
    }
    return m;
}

double mixed_norm(const BlockParam& theta, NormKind kind) {
    double acc = 0.0;
    for (std::size_t j = 0; j < theta.num_blocks(); ++j) {
        const auto b = theta.block(j);
        for (double v : b) {
            if (!std::isfinite(v)) throw InvalidInput("mixed_norm: non-finite entry");
        }
        const double n = l2(b);
        switch (kind) {
        case NormKind::one_two: acc += n; break;
        case NormKind::two_two: acc += n * n; break;
        case NormKind::inf_two: acc = std::max(acc, n); break;
        }
    }
    return kind == NormKind::two_two ? std::sqrt(acc) : acc;
}

void block_soft_threshold_inplace(std::span<double> values, std::size_t block_dim, double tau) {
    if (!(tau >= 0.0)) throw InvalidInput("block_soft_threshold: tau must be >= 0");
    if (tau == 0.0) return;
    for (std::size_t off = 0; off < values.size(); off += block_dim) {
        auto b = values.subspan(off, block_dim);
        const double n = l2(b);
        if (n <= tau) {
            std::fill(b.begin(), b.end(), 0.0);
        } else {
            const double scale = 1.0 - tau / n;
            for (double& v : b) v *= scale;
        }
    }
}

BlockParam block_soft_threshold(const BlockParam& z, double tau) {
    BlockParam out = z;
    block_soft_threshold_inplace(out.values(), z.block_dim(), tau);
    return out;
}

SupportSet support_of(const BlockParam& theta, double tol) {
    if (!(tol >= 0.0)) throw InvalidInput("support_of: tol must be >= 0");
    std::vector<std::size_t> idx;
    for (std::size_t j = 0; j < theta.num_blocks(); ++j) {
        if (theta.block_norm(j) > tol) idx.push_back(j);
    }
    return SupportSet(std::move(idx));
}

double cone_ratio(const BlockParam& delta, const SupportSet& s_star) {
    const auto in_s = s_star.mask(delta.num_blocks());
    double on = 0.0, off = 0.0;
    for (std::size_t j = 0; j < delta.num_blocks(); ++j) {
        (in_s[j] ? on : off) += delta.block_norm(j);
    }
    if (on == 0.0) return off == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return off / on;
}

BlockParam operator-(const BlockParam& a, const BlockParam& b) {
    if (!a.same_shape(b)) throw InvalidInput("BlockParam shape mismatch");
    BlockParam out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return out;
}

BlockParam operator+(const BlockParam& a, const BlockParam& b) {
    if (!a.same_shape(b)) throw InvalidInput("BlockParam shape mismatch");
    BlockParam out = a;
    auto o = out.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return out;
}

BlockParam operator*(double c, const BlockParam& a) {
    BlockParam out = a;
    for (double& v : out.values()) v *= c;
    return out;
}

} // namespace saclab
