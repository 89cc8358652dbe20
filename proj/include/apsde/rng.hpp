#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "apsde/types.hpp"

namespace apsde {

// ---------------------------------------------------------------------------
// Philox4x32-10 (Salmon et al., SC'11). Counter-based: the output is a pure
// function of (counter, key), so draws never depend on scheduling.

using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
    constexpr std::uint32_t kM0 = 0xD2511F53u;
    constexpr std::uint32_t kM1 = 0xCD9E8D57u;
    constexpr std::uint32_t kW0 = 0x9E3779B9u;
    constexpr std::uint32_t kW1 = 0xBB67AE85u;
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kW0;
            key[1] += kW1;
        }
        const std::uint64_t p0 = static_cast<std::uint64_t>(kM0) * ctr[0];
        const std::uint64_t p1 = static_cast<std::uint64_t>(kM1) * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

/// Standard normal quantile, Wichura's AS241 (PPND16); relative accuracy
/// about 1e-16 on (0, 1).
inline double normal_quantile(double p) {
    const double q = p - 0.5;
    if (std::fabs(q) <= 0.425) {
        const double r = 0.180625 - q * q;
        return q *
               (((((((2509.0809287301226727 * r + 33430.575583588128105) * r +
                     67265.770927008700853) * r + 45921.953931549871457) * r +
                   13731.693765509461125) * r + 1971.5909503065514427) * r +
                 133.14166789178437745) * r + 3.387132872796366608) /
               (((((((5226.495278852545925 * r + 28729.085735721942674) * r +
                     39307.89580009271061) * r + 21213.794301586595867) * r +
                   5394.1960214247511077) * r + 687.1870074920579083) * r +
                 42.313330701600911252) * r + 1.0);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = (((((((7.7454501427834140764e-4 * r + 0.0227238449892691845833) * r +
                    0.24178072517745061177) * r + 1.27045825245236838258) * r +
                  3.64784832476320460504) * r + 5.7694972214606914055) * r +
                4.6303378461565452959) * r + 1.42343711074968357734) /
              (((((((1.05075007164441684324e-9 * r + 5.475938084995344946e-4) * r +
                    0.0151986665636164571966) * r + 0.14810397642748007459) * r +
                  0.68976733498510000455) * r + 1.6763848301838038494) * r +
                2.05319162663775882187) * r + 1.0);
    } else {
        r -= 5.0;
        val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                    0.0012426609473880784386) * r + 0.026532189526576123093) * r +
                  0.29656057182850489123) * r + 1.7848265399172913358) * r +
                5.4637849111641143699) * r + 6.6579046435011037772) /
              (((((((2.04426310338993978564e-15 * r + 1.4215117583164458887e-7) * r +
                    1.8463183175100546818e-5) * r + 7.868691311456132591e-4) * r +
                  0.0148753612908506148525) * r + 0.13692988092273580531) * r +
                0.59983220655588793769) * r + 1.0);
    }
    return q < 0.0 ? -val : val;
}

/// 64 random bits -> uniform on the open interval (0, 1), 52-bit resolution.
/// Extremes are 2^-53 and 1 - 2^-53, both exactly representable.
inline double bits_to_open_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

namespace detail {

inline PhiloxCounter philox_block(std::uint64_t seed, std::uint64_t trajectory_id,
                                  std::uint64_t block) {
    const PhiloxCounter ctr = {static_cast<std::uint32_t>(block),
                               static_cast<std::uint32_t>(block >> 32),
                               static_cast<std::uint32_t>(trajectory_id),
                               static_cast<std::uint32_t>(trajectory_id >> 32)};
    const PhiloxKey key = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
    return philox4x32_10(ctr, key);
}

inline double gaussian_from_block(const PhiloxCounter& out, unsigned half) {
    const std::uint64_t bits =
        (static_cast<std::uint64_t>(out[2 * half]) << 32) | out[2 * half + 1];
    return normal_quantile(bits_to_open_unit(bits));
}

} // namespace detail

/// The k-th standard normal draw of trajectory `trajectory_id` under `seed`.
/// Philox block k/2 with key = seed and counter = (k/2, trajectory_id) yields
/// 128 bits; draw k uses the 64-bit half k mod 2.
inline double gaussian_at(std::uint64_t seed, std::uint64_t trajectory_id, std::uint64_t k) {
    return detail::gaussian_from_block(detail::philox_block(seed, trajectory_id, k >> 1),
                                       static_cast<unsigned>(k & 1u));
}

/// Reproducible per-trajectory source of standard normals. A value type: copy
/// it to replay the same draws.
///
/// Draw-order contract used by every scheme: per step, gamma first, then the
/// Gamma components in index order. Unused draws are still consumed.
class GaussianStream {
public:
    GaussianStream() = default;
    GaussianStream(std::uint64_t seed, std::uint64_t trajectory_id)
        : seed_(seed), trajectory_id_(trajectory_id) {}

    double next_gaussian() {
        const std::uint64_t k = counter_++;
        const std::uint64_t block = k >> 1;
        if (!cached_ || cached_index_ != block) {
            cache_ = detail::philox_block(seed_, trajectory_id_, block);
            cached_index_ = block;
            cached_ = true;
        }
        return detail::gaussian_from_block(cache_, static_cast<unsigned>(k & 1u));
    }

    Vec next_gaussian_vec(int size) {
        Vec out(size);
        for (int i = 0; i < size; ++i) {
            out(i) = next_gaussian();
        }
        return out;
    }

    /// Advances the counter without evaluating the draws: the skipped values
    /// are consumed exactly as if they had been generated.
    void skip(std::uint64_t count) { counter_ += count; }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t trajectory_id() const { return trajectory_id_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t trajectory_id_ = 0;
    std::uint64_t counter_ = 0;
    PhiloxCounter cache_{};
    std::uint64_t cached_index_ = 0;
    bool cached_ = false;
};

} // namespace apsde
