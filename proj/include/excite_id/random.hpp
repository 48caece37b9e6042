#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

#include <Eigen/Dense>

namespace excite {

namespace detail {
constexpr std::uint64_t splitmix_finalize(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based 64-bit generator: output i is a bijective hash of (key, i).
///
/// A stream is identified by a key derived from the root seed and a path of
/// integers (e.g. {purpose, center index, trial}). Draws therefore depend only
/// on that path, never on the order in which streams are consumed, which is
/// what keeps parallel runs bit-identical to serial ones.
class RandomStream {
public:
    constexpr explicit RandomStream(std::uint64_t key) noexcept : key_(key) {}

    static constexpr RandomStream derive(std::uint64_t seed, std::initializer_list<std::uint64_t> path) noexcept {
        std::uint64_t key = detail::splitmix_finalize(seed ^ 0x6a09e667f3bcc909ULL);
        for (auto p : path) key = detail::splitmix_finalize(key + 0x9e3779b97f4a7c15ULL * (p + 1));
        return RandomStream(key);
    }

    constexpr std::uint64_t next_u64() noexcept {
        ++counter_;
        return detail::splitmix_finalize(key_ + counter_ * 0x9e3779b97f4a7c15ULL);
    }

    // Uniform on [0, 1) with 53 random bits.
    constexpr double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    constexpr double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    double normal() noexcept {
        // Box-Muller; 1 - uniform() lies in (0, 1].
        const double r = std::sqrt(-2.0 * std::log(1.0 - uniform()));
        return r * std::cos(2.0 * std::numbers::pi * uniform());
    }

    Eigen::VectorXd uniform_box(Eigen::Index dim, double lo, double hi) {
        Eigen::VectorXd v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v[i] = uniform(lo, hi);
        return v;
    }

    Eigen::VectorXd normal_vector(Eigen::Index dim) {
        Eigen::VectorXd v(dim);
        for (Eigen::Index i = 0; i < dim; ++i) v[i] = normal();
        return v;
    }

    // Uniform on the sphere of the given radius.
    Eigen::VectorXd on_sphere(Eigen::Index dim, double radius) {
        Eigen::VectorXd v;
        do {
            v = normal_vector(dim);
        } while (v.norm() == 0.0);
        return radius * v / v.norm();
    }

    // Uniform in the closed Euclidean ball, by rejection from the bounding cube.
    Eigen::VectorXd in_ball_rejection(Eigen::Index dim, double radius) {
        for (;;) {
            Eigen::VectorXd v = uniform_box(dim, -1.0, 1.0);
            if (v.squaredNorm() <= 1.0) return radius * v;
        }
    }

    // Uniform on the closed disk {u in R^2 : |u| <= radius} via the sqrt radius transform.
    Eigen::Vector2d in_disk(double radius) {
        const double r = radius * std::sqrt(uniform());
        const double phi = 2.0 * std::numbers::pi * uniform();
        return {r * std::cos(phi), r * std::sin(phi)};
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace excite
