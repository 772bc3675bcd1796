#include "saclab/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "saclab/errors.hpp"

namespace saclab::stats {

double mean(std::span<const double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double stderr_mean(std::span<const double> v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

double quantile(std::span<const double> v, double p) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("quantile: p must lie in [0, 1]");
    std::vector<double> s(v.begin(), v.end());
    std::sort(s.begin(), s.end());
    const double pos = p * static_cast<double>(s.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, s.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return s[lo] + frac * (s[hi] - s[lo]);
}

double median(std::span<const double> v) { return quantile(v, 0.5); }

LinearFit ols(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidInput("ols: need at least two paired points");
    LinearFit f;
    f.n = x.size();
    const double n = static_cast<double>(x.size());
    const double mx = mean(x), my = mean(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw InvalidInput("ols: x values are all equal");
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    double rss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += r * r;
    }
    f.r2 = syy > 0.0 ? 1.0 - rss / syy : 1.0;
    if (x.size() > 2) {
        const double s2 = rss / (n - 2.0);
        f.slope_se = std::sqrt(s2 / sxx);
        f.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / sxx));
    }
    return f;
}

std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> weights) {
    if (!weights.empty() && weights.size() != y.size()) throw InvalidInput("isotonic: weights must match values");
    struct Pool {
        double sum_wy, sum_w;
        std::size_t count;
    };
    std::vector<Pool> pools;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double w = weights.empty() ? 1.0 : weights[i];
        pools.push_back({w * y[i], w, 1});
        while (pools.size() > 1) {
            const auto& b = pools.back();
            const auto& a = pools[pools.size() - 2];
            if (a.sum_wy / a.sum_w <= b.sum_wy / b.sum_w) break;
            Pool merged{a.sum_wy + b.sum_wy, a.sum_w + b.sum_w, a.count + b.count};
            pools.pop_back();
            pools.back() = merged;
        }
    }
    std::vector<double> out;
    out.reserve(y.size());
    for (const auto& p : pools) out.insert(out.end(), p.count, p.sum_wy / p.sum_w);
    return out;
}

double first_crossing(std::span<const double> x, std::span<const double> y, double level) {
    if (x.size() != y.size()) throw InvalidInput("first_crossing: size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (y[i] < level) continue;
        if (i == 0 || y[i] == y[i - 1]) return x[i];
        const double f = (level - y[i - 1]) / (y[i] - y[i - 1]);
        return x[i - 1] + f * (x[i] - x[i - 1]);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

} // namespace saclab::stats
