#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "block_stats.hpp"
#include "error.hpp"
#include "index_space.hpp"
#include "rng.hpp"

namespace warp::synth {

/// Quadratic bowl plus the indicator of a cube and a cylinder.
inline double f1(double x, double y, double z) {
    double dx = x - 0.5, dy = y - 0.5, dz = z - 0.5;
    bool cube = std::abs(dx) <= 0.25 && std::abs(dy) <= 0.25 && std::abs(dz) <= 0.25;
    bool cyl = dx * dx + dy * dy <= 0.15 * 0.15 && std::abs(dz) <= 0.35;
    return -(dx * dx) - dy * dy - dz * dz + ((cube || cyl) ? 1.0 : 0.0);
}

/// Plane wave plus the indicator of a cone and a truncated spherical shell.
inline double f2(double x, double y, double z) {
    double dx = x - 0.5, dy = y - 0.5, dz = z - 0.5;
    double r2 = dx * dx + dy * dy;
    bool cone = r2 <= 0.25 * dz * dz && z >= 0.2 && z <= 0.5;
    double s2 = r2 + dz * dz;
    bool shell = s2 >= 0.2 * 0.2 && s2 <= 0.4 * 0.4 && z < 0.45;
    return 0.25 * std::sin(2.0 * std::numbers::pi * (x + y + z) + 1.0) + 0.25 + ((cone || shell) ? 1.0 : 0.0);
}

/// Samples f on an n x n x n grid at cell centres (i + 0.5) / n; dimension
/// order is (x, y, z) with z fastest.
template <class F>
std::vector<double> volume(std::size_t n, F&& f) {
    std::vector<double> out;
    out.reserve(n * n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t k = 0; k < n; ++k)
                out.push_back(f((i + 0.5) / n, (j + 0.5) / n, (k + 0.5) / n));
    return out;
}

/// Modified Shepp-Logan head phantom with intensities in [0, 1]; row 0 is the top.
inline std::vector<double> phantom(std::size_t n) {
    struct Ellipse {
        double A, a, b, x0, y0, phi;
    };
    static constexpr std::array<Ellipse, 10> E{{
        {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},
        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
        {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},
        {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
        {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},
        {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
        {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},
        {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
        {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},
        {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
    }};
    std::vector<double> out(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) {
            double x = (2.0 * c + 1.0) / n - 1.0;
            double y = 1.0 - (2.0 * r + 1.0) / n;
            double v = 0.0;
            for (const auto& e : E) {
                double th = e.phi * std::numbers::pi / 180.0;
                double xr = (x - e.x0) * std::cos(th) + (y - e.y0) * std::sin(th);
                double yr = -(x - e.x0) * std::sin(th) + (y - e.y0) * std::cos(th);
                if ((xr * xr) / (e.a * e.a) + (yr * yr) / (e.b * e.b) <= 1.0) v += e.A;
            }
            out[r * n + c] = std::clamp(v, 0.0, 1.0);
        }
    return out;
}

/// Rows grouped into horizontal bands with boundaries off the dyadic grid;
/// band intensities alternate between 0.2 and 0.8.
inline std::vector<double> layered(std::size_t rows, std::size_t cols) {
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
        double t = (r + 0.5) / rows;
        int band = static_cast<int>(std::floor(t * 5.3 + 0.37 * std::sin(7.0 * t)));
        double v = band % 2 == 0 ? 0.2 : 0.8;
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = v;
    }
    return out;
}

/// Constant along rows with a single jump between columns `at - 1` and `at`.
inline std::vector<double> step(std::size_t rows, std::size_t cols, std::size_t at, double lo = 0.0, double hi = 1.0) {
    std::vector<double> out(rows * cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = c < at ? lo : hi;
    return out;
}

inline std::vector<double> add_noise(std::vector<double> v, double sigma, std::uint64_t seed) {
    if (sigma < 0.0) throw InputError("noise level must be nonnegative");
    if (sigma == 0.0) return v;
    Rng rng(seed);
    std::normal_distribution<double> nd(0.0, sigma);
    for (double& x : v) x += nd(rng);
    return v;
}

inline double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("images differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

inline double mae(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw InputError("images differ in size");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

}  // namespace warp::synth
