#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>

#include "lysep/activation.hpp"

namespace lysep {

namespace detail {

inline constexpr std::array<int, 16> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19,
                                                23, 29, 31, 37, 41, 43, 47, 53};

inline int nth_prime(int k) {
    if (k < 0 || k >= static_cast<int>(kPrimes.size()))
        throw std::invalid_argument("halton: dimension too large");
    return kPrimes[static_cast<std::size_t>(k)];
}

}  // namespace detail

/// Van der Corput radical inverse of `index` in `base`.
inline double radical_inverse(std::uint64_t index, int base) {
    const double inv = 1.0 / base;
    double f = inv;
    double r = 0.0;
    while (index > 0) {
        r += f * static_cast<double>(index % static_cast<std::uint64_t>(base));
        index /= static_cast<std::uint64_t>(base);
        f *= inv;
    }
    return r;
}

/// Accepted points plus the first raw stream index not consumed, so a second
/// draw starting there never overlaps the first.
struct HaltonDraw {
    Matrix points;
    std::uint64_t next_skip = 0;
};

/// Halton points (bases = first d primes, stream indices skip+1, skip+2, ...)
/// mapped from [0,1]^d to [-1,1]^d and rejection-filtered to the unit ball.
/// With `time_horizon` set, an extra coordinate from the (d+1)-th prime base
/// is scaled to [0, T] and stored in row 0.
inline HaltonDraw halton_draw(int d, Eigen::Index count, std::uint64_t skip,
                              std::optional<double> time_horizon = std::nullopt) {
    if (d < 1 || count < 1) throw std::invalid_argument("halton: need d >= 1 and count >= 1");
    const int off = time_horizon ? 1 : 0;
    HaltonDraw out;
    out.points.resize(d + off, count);
    Vector x(d);
    std::uint64_t idx = skip;
    Eigen::Index got = 0;
    while (got < count) {
        ++idx;
        for (int i = 0; i < d; ++i) x(i) = 2.0 * radical_inverse(idx, detail::nth_prime(i)) - 1.0;
        if (x.squaredNorm() > 1.0) continue;
        if (time_horizon) out.points(0, got) = *time_horizon * radical_inverse(idx, detail::nth_prime(d));
        out.points.col(got).tail(d) = x;
        ++got;
    }
    out.next_skip = idx;
    return out;
}

inline Matrix halton_ball(int d, Eigen::Index count, std::uint64_t skip) {
    return halton_draw(d, count, skip).points;
}

/// Row 0 holds t in [0, T]; rows 1..d a ball point.
inline Matrix halton_timespace(int d, double T, Eigen::Index count, std::uint64_t skip) {
    if (T < 0.0) throw std::invalid_argument("halton: negative horizon");
    return halton_draw(d, count, skip, T).points;
}

/// |psi - u|_2 / |u|_2.
inline double l2_relative_error(const RowVector& psi, const RowVector& u) {
    if (psi.size() != u.size()) throw std::invalid_argument("l2 error: size mismatch");
    const double den = u.norm();
    if (!(den > 0.0)) throw std::domain_error("l2 error: true solution vanishes on the test set");
    return (psi - u).norm() / den;
}

}  // namespace lysep
