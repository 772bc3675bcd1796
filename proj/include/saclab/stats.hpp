#pragma once
// Small summary statistics used by the sweep harness.

#include <span>
#include <vector>

namespace saclab::stats {

double mean(std::span<const double> v);
/// Standard error of the mean (sample standard deviation / sqrt(n)).
double stderr_mean(std::span<const double> v);
/// NaN for an empty input.
double median(std::span<const double> v);
/// Linear interpolation between order statistics, p in [0, 1].
double quantile(std::span<const double> v, double p);

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_se = 0.0;
    double intercept_se = 0.0;
    double r2 = 0.0;
    std::size_t n = 0;
};
/// Ordinary least squares of y on x; needs at least two distinct x.
LinearFit ols(std::span<const double> x, std::span<const double> y);

/// Pool-adjacent-violators fit of a non-decreasing sequence.
std::vector<double> isotonic_increasing(std::span<const double> y, std::span<const double> weights = {});

/// Smallest x at which the piecewise-linear curve (x, y), x increasing, first reaches level; NaN if never.
double first_crossing(std::span<const double> x, std::span<const double> y, double level);

} // namespace saclab::stats
