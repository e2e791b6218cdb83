#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace warp::num {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

inline double log_add(double a, double b) {
    if (a < b) std::swap(a, b);
    if (b == kNegInf) return a;
    return a + std::log1p(std::exp(b - a));
}

inline double log_sum(std::span<const double> xs) {
    double hi = kNegInf;
    for (double x : xs) hi = std::max(hi, x);
    if (hi == kNegInf) return kNegInf;
    double s = 0.0;
    for (double x : xs) s += std::exp(x - hi);
    return hi + std::log(s);
}

/// log of a probability, mapping 0 to -inf without a floating point trap.
inline double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

inline double log_normal_pdf(double x, double sd) {
    double z = x / sd;
    return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

/// log Phi(z) for the standard normal CDF, accurate far into the lower tail.
inline double log_ndtr(double z) {
    if (z > -30.0) return std::log(0.5 * std::erfc(-z / std::numbers::sqrt2));
    // asymptotic Mills-ratio expansion
    double z2 = z * z, inv = 1.0 / z2;
    double series = 1.0 + inv * (-1.0 + inv * (3.0 + inv * (-15.0 + inv * (105.0 + inv * (-945.0)))));
    return -0.5 * z2 - kLogSqrt2Pi - std::log(-z) + std::log(series);
}

}  // namespace warp::num
