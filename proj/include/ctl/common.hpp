#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ctl {

using Index = std::uint32_t;
using Point = std::array<double, 3>;

/// Error raised for invalid input or a failed numerical precondition.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Configuration problems; the CLI maps these to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string& msg)
{
    if (!cond) throw Error(msg);
}

// ---------------------------------------------------------------------------
// small vector helpers on Point

inline Point operator+(const Point& a, const Point& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
inline Point operator-(const Point& a, const Point& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
inline Point operator*(double s, const Point& a) { return {s * a[0], s * a[1], s * a[2]}; }
inline double dot(const Point& a, const Point& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
inline Point cross(const Point& a, const Point& b)
{
    return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
inline double norm(const Point& a) { return std::sqrt(dot(a, a)); }
inline Point normalized(const Point& a)
{
    const double n = norm(a);
    return n > 0 ? (1.0 / n) * a : a;
}
inline Point midpoint(const Point& a, const Point& b) { return 0.5 * (a + b); }

/// Geodesic distance on the unit sphere between the radial projections of a and b.
inline double geodesic_distance(const Point& a, const Point& b)
{
    const double c = dot(normalized(a), normalized(b));
    return std::acos(std::clamp(c, -1.0, 1.0));
}

/// Pairwise (cascade) summation in a fixed order; result depends only on the input sequence.
inline double pairwise_sum(std::span<const double> xs)
{
    constexpr std::size_t block = 32;
    if (xs.size() <= block) {
        double s = 0.0;
        for (double x : xs) s += x;
        return s;
    }
    const std::size_t half = xs.size() / 2;
    return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

/// Measure of the unit sphere S^{d-1} in R^d.
inline double unit_sphere_measure(int d)
{
    return 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
}

/// Volume of the unit ball in R^d.
inline double unit_ball_volume(int d) { return unit_sphere_measure(d) / d; }

// ---------------------------------------------------------------------------
// logging, level from CTL_LOG in {error, info, debug}

enum class LogLevel { error = 0, info = 1, debug = 2 };

inline LogLevel log_level()
{
    static const LogLevel level = [] {
        const char* env = std::getenv("CTL_LOG");
        if (!env) return LogLevel::error;
        const std::string_view v(env);
        if (v == "debug") return LogLevel::debug;
        if (v == "info") return LogLevel::info;
        return LogLevel::error;
    }();
    return level;
}

inline void log(LogLevel level, const std::string& msg)
{
    static constexpr const char* names[] = {"error", "info", "debug"};
    if (static_cast<int>(level) <= static_cast<int>(log_level()))
        std::cerr << "[ctl:" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

}  // namespace ctl
