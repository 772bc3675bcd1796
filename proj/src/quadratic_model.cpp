#include "saclab/quadratic_model.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "saclab/errors.hpp"
#include "saclab/rng.hpp"
#include "saclab/simd/kernels.hpp"

namespace saclab {

QuadraticModel::QuadraticModel(const DesignMatrix& w, std::span<const double> y, Backend backend)
    : QuadraticModel(w, y, 0, w.rows(), backend) {}

QuadraticModel::QuadraticModel(const DesignMatrix& w, std::span<const double> y, std::size_t row_begin,
                               std::size_t row_end, Backend backend)
    : w_(std::shared_ptr<const DesignMatrix>(std::shared_ptr<void>{}, &w)),
      y_(y.begin(), y.end()),
      begin_(row_begin),
      end_(row_end) {
    if (y.size() != w.rows()) throw InvalidInput("QuadraticModel: one response per design row");
    if (row_begin >= row_end || row_end > w.rows()) throw InvalidInput("QuadraticModel: bad row range");
    init(backend);
}

QuadraticModel::QuadraticModel(std::shared_ptr<const DesignMatrix> w, std::vector<double> y, Backend backend)
    : w_(std::move(w)), y_(std::move(y)), begin_(0), end_(w_->rows()) {
    if (y_.size() != w_->rows()) throw InvalidInput("QuadraticModel: one response per design row");
    if (end_ == 0) throw InvalidInput("QuadraticModel: empty design");
    init(backend);
}

void QuadraticModel::init(Backend backend) {
    const std::size_t n = num_rows();
    const std::size_t d = dim();
    scratch_.resize(n);
    bool gram = false;
    if (backend == Backend::gram) gram = true;
    if (backend == Backend::automatic) gram = n >= 2 * d && d <= 2048;
    if (!gram) return;

    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    Eigen::Map<const RowMat> wm(w_->data() + begin_ * d, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    h.selfadjointView<Eigen::Lower>().rankUpdate(wm.transpose(), 1.0 / static_cast<double>(n));
    h.triangularView<Eigen::StrictlyUpper>() = h.transpose();
    gram_.resize(d * d);
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) gram_[r * d + c] = h(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));

    wty_.assign(d, 0.0);
    simd::kernels().gemv_t(w_->data() + begin_ * d, n, d, y_.data() + begin_, wty_.data());
    double yy = 0.0;
    for (std::size_t t = begin_; t < end_; ++t) yy += y_[t] * y_[t];
    const double inv_n = 1.0 / static_cast<double>(n);
    for (double& v : wty_) v *= inv_n;
    yty_ = 0.5 * yy * inv_n;
}

double QuadraticModel::eval(std::span<const double> x, std::span<double> grad) const {
    const std::size_t n = num_rows();
    const std::size_t d = dim();
    const auto& k = simd::kernels();
    if (!gram_.empty()) {
        k.gemv(gram_.data(), d, d, x.data(), grad.data());
        const double quad = k.dot(x.data(), grad.data(), d);
        const double lin = k.dot(x.data(), wty_.data(), d);
        for (std::size_t j = 0; j < d; ++j) grad[j] -= wty_[j];
        return 0.5 * quad - lin + yty_;
    }
    const double* wb = w_->data() + begin_ * d;
    k.gemv(wb, n, d, x.data(), scratch_.data());
    double rss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        scratch_[t] -= y_[begin_ + t];
        rss += scratch_[t] * scratch_[t];
    }
    k.gemv_t(wb, n, d, scratch_.data(), grad.data());
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t j = 0; j < d; ++j) grad[j] *= inv_n;
    return 0.5 * rss * inv_n;
}

double QuadraticModel::loss(std::span<const double> x) const {
    const std::size_t n = num_rows();
    const std::size_t d = dim();
    const auto& k = simd::kernels();
    const double* wb = w_->data() + begin_ * d;
    k.gemv(wb, n, d, x.data(), scratch_.data());
    double rss = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
        const double r = scratch_[t] - y_[begin_ + t];
        rss += r * r;
    }
    return 0.5 * rss / static_cast<double>(n);
}

double QuadraticModel::curvature(std::span<const double> x) const {
    const std::size_t n = num_rows();
    const std::size_t d = dim();
    const auto& k = simd::kernels();
    if (!gram_.empty()) {
        std::vector<double> hx(d);
        k.gemv(gram_.data(), d, d, x.data(), hx.data());
        return k.dot(x.data(), hx.data(), d);
    }
    k.gemv(w_->data() + begin_ * d, n, d, x.data(), scratch_.data());
    return k.sum_squares(scratch_.data(), n) / static_cast<double>(n);
}

double QuadraticModel::lipschitz() const {
    if (lipschitz_ >= 0.0) return lipschitz_;
    const std::size_t n = num_rows();
    const std::size_t d = dim();
    const auto& k = simd::kernels();
    std::vector<double> v(d), hv(d);
    Rng rng(0x5eedULL);
    for (double& x : v) x = standard_normal(rng);
    auto apply = [&](const std::vector<double>& in, std::vector<double>& out) {
        if (!gram_.empty()) {
            k.gemv(gram_.data(), d, d, in.data(), out.data());
            return;
        }
        const double* wb = w_->data() + begin_ * d;
        k.gemv(wb, n, d, in.data(), scratch_.data());
        k.gemv_t(wb, n, d, scratch_.data(), out.data());
        for (double& x : out) x /= static_cast<double>(n);
    };
    double nv = std::sqrt(k.sum_squares(v.data(), d));
    for (double& x : v) x /= nv;
    double mu = 0.0;
    for (int it = 0; it < 100; ++it) {
        apply(v, hv);
        const double mu_new = k.dot(v.data(), hv.data(), d);
        const double nh = std::sqrt(k.sum_squares(hv.data(), d));
        if (nh == 0.0) {
            mu = 0.0;
            break;
        }
        for (std::size_t j = 0; j < d; ++j) v[j] = hv[j] / nh;
        const bool done = std::abs(mu_new - mu) <= 1e-10 * std::max(1.0, std::abs(mu_new));
        mu = mu_new;
        if (done) break;
    }
    // Rayleigh quotient plus the eigen-residual bound, so the step 1/L never overshoots
    apply(v, hv);
    mu = k.dot(v.data(), hv.data(), d);
    double res2 = 0.0;
    for (std::size_t j = 0; j < d; ++j) res2 += (hv[j] - mu * v[j]) * (hv[j] - mu * v[j]);
    lipschitz_ = mu + std::sqrt(res2);
    if (lipschitz_ <= 0.0) lipschitz_ = 1.0;  // zero design: any step works
    return lipschitz_;
}

} // namespace saclab
