#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace aprol {

    /// Point (or displacement) in the task-space, meters.
    using TaskPoint = Eigen::VectorXd;
    /// Elementary policy parameters, every component in [0,1].
    using PolicyParams = Eigen::VectorXd;

    using CellId = std::size_t;
    using RepertoireId = std::size_t;

    /// 64-bit engine shared by every stochastic component.
    using Rng = std::mt19937_64;

    constexpr double pi = 3.14159265358979323846;

    /// Uniform double in [0,1) built from the top 53 bits of one draw, so
    /// sequences do not depend on the standard library's distribution code.
    inline double unit_real(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

    inline double uniform_real(Rng& rng, double lo, double hi) { return lo + (hi - lo) * unit_real(rng); }

    /// Index in [0, n).
    inline std::size_t uniform_index(Rng& rng, std::size_t n)
    {
        auto i = static_cast<std::size_t>(unit_real(rng) * static_cast<double>(n));
        return i < n ? i : n - 1;
    }

    /// Standard normal draw (Box-Muller, one value per call).
    inline double standard_normal(Rng& rng)
    {
        double u1 = unit_real(rng);
        while (u1 <= 0.)
            u1 = unit_real(rng);
        const double u2 = unit_real(rng);
        return std::sqrt(-2. * std::log(u1)) * std::cos(2. * pi * u2);
    }

    /// FNV-1a, stable across platforms (std::hash is not).
    inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull)
    {
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    /// splitmix64 finalizer, used to decorrelate derived seeds.
    inline std::uint64_t mix64(std::uint64_t x)
    {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    /// Wraps an angle to (-pi, pi].
    inline double wrap_angle(double a)
    {
        a = std::remainder(a, 2. * pi);
        if (a <= -pi)
            a += 2. * pi;
        return a;
    }

    inline Eigen::Matrix2d rotation(double angle)
    {
        Eigen::Matrix2d r;
        const double c = std::cos(angle), s = std::sin(angle);
        r << c, -s, s, c;
        return r;
    }

    inline bool exactly_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b)
    {
        return a.size() == b.size() && (a.array() == b.array()).all();
    }

} // namespace aprol
