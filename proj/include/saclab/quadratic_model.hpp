#pragma once
// Quadratic surrogate L(theta) = (1/2n) sum_t (y_t - <theta, w_t>)^2 over a row
// range of a design matrix. Gradients go through the SIMD kernels; when the
// range is tall relative to its width the Gram form H = W^T W / n is cached.

#include <memory>
#include <span>
#include <vector>

#include "saclab/problem_gen.hpp"

namespace saclab {

class QuadraticModel {
public:
    enum class Backend { automatic, design, gram };

    /// Borrows w; the caller keeps it alive for the model's lifetime.
    QuadraticModel(const DesignMatrix& w, std::span<const double> y, Backend backend = Backend::automatic);
    /// Rows [row_begin, row_end) only.
    QuadraticModel(const DesignMatrix& w, std::span<const double> y, std::size_t row_begin, std::size_t row_end,
                   Backend backend = Backend::automatic);
    /// Owning variant for derived designs (restricted or expanded columns).
    QuadraticModel(std::shared_ptr<const DesignMatrix> w, std::vector<double> y, Backend backend = Backend::automatic);

    std::size_t dim() const { return w_->cols(); }
    std::size_t num_rows() const { return end_ - begin_; }
    bool uses_gram() const { return !gram_.empty(); }

    /// Returns L(x) and writes grad L(x).
    double eval(std::span<const double> x, std::span<double> grad) const;
    double loss(std::span<const double> x) const;
    /// Largest eigenvalue of W^T W / n by power iteration (cached).
    double lipschitz() const;
    /// x^T H x
    double curvature(std::span<const double> x) const;

    const DesignMatrix& design() const { return *w_; }
    std::span<const double> responses() const { return {y_.data() + begin_, end_ - begin_}; }

private:
    void init(Backend backend);

    std::shared_ptr<const DesignMatrix> w_;
    std::vector<double> y_;
    std::size_t begin_ = 0;
    std::size_t end_ = 0;
    std::vector<double> gram_;  // d x d, row-major, empty in design mode
    std::vector<double> wty_;   // W^T y / n (gram mode)
    double yty_ = 0.0;          // y^T y / (2n) (gram mode)
    mutable double lipschitz_ = -1.0;
    mutable std::vector<double> scratch_;
};

} // namespace saclab
