#pragma once

#include <cmath>
#include <cstdint>
#include <utility>

// Counter-based random number generation (Threefry2x64-20).
//
// Every random quantity in the library is a pure function of
// (key, counter); nothing is stateful. This is what makes replica- and
// thread-order independence possible: a disorder value at (replica, n, x)
// is obtained by hashing those integers, so any worker can evaluate any
// site in any order and get identical bits.

namespace polymer {
namespace rng {

struct u128 {
    std::uint64_t x0;
    std::uint64_t x1;
};

namespace detail {

inline std::uint64_t rotl64(std::uint64_t x, int r) {
    return (x << r) | (x >> (64 - r));
}

} // namespace detail

// Threefry2x64, 20 rounds. Rotation schedule and key injection follow the
// Salmon et al. reference implementation; known-answer vectors are checked
// in the test suite.
inline u128 threefry2x64(std::uint64_t k0, std::uint64_t k1,
                         std::uint64_t c0, std::uint64_t c1) {
    using detail::rotl64;
    constexpr std::uint64_t kParity = 0x1BD11BDAA9FC1A22ull;
    const std::uint64_t ks0 = k0, ks1 = k1, ks2 = kParity ^ k0 ^ k1;
    std::uint64_t x0 = c0 + ks0;
    std::uint64_t x1 = c1 + ks1;

    auto round4 = [&](int r0, int r1, int r2, int r3) {
        x0 += x1; x1 = rotl64(x1, r0); x1 ^= x0;
        x0 += x1; x1 = rotl64(x1, r1); x1 ^= x0;
        x0 += x1; x1 = rotl64(x1, r2); x1 ^= x0;
        x0 += x1; x1 = rotl64(x1, r3); x1 ^= x0;
    };

    round4(16, 42, 12, 31);
    x0 += ks1; x1 += ks2 + 1;
    round4(16, 32, 24, 21);
    x0 += ks2; x1 += ks0 + 2;
    round4(16, 42, 12, 31);
    x0 += ks0; x1 += ks1 + 3;
    round4(16, 32, 24, 21);
    x0 += ks1; x1 += ks2 + 4;
    round4(16, 42, 12, 31);
    x0 += ks2; x1 += ks0 + 5;
    return {x0, x1};
}

// Map the high 53 bits of a word into (0,1). The 2^-54 offset keeps the
// value strictly positive so it is safe under log().
inline double to_unit_open(std::uint64_t w) {
    return static_cast<double>(w >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

// Distinct purpose tags keep independent uses of the same master seed from
// ever sharing a counter stream.
enum class Stream : std::uint64_t {
    disorder      = 0x9E3779B97F4A7C15ull,
    overlap_walk  = 0xC2B2AE3D27D4EB4Full,
    limit_sampler = 0x165667B19E3779F9ull,
    coefficients  = 0xD6E8FEB86659FD93ull,
};

inline std::uint64_t stream_key(std::uint64_t master_seed, Stream s) {
    return master_seed ^ static_cast<std::uint64_t>(s);
}

// A small stateful convenience wrapper for sequential draws (samplers,
// random walks). Internally it just advances a counter, so two streams
// with different (key0,key1) are independent.
class Sequence {
public:
    Sequence(std::uint64_t key0, std::uint64_t key1)
        : key0_(key0), key1_(key1), ctr_(0), have_word_(false), spare_(0) {}

    std::uint64_t next_u64() {
        if (have_word_) {
            have_word_ = false;
            return spare_;
        }
        u128 r = threefry2x64(key0_, key1_, ctr_++, 0);
        spare_ = r.x1;
        have_word_ = true;
        return r.x0;
    }

    double next_unit() { return to_unit_open(next_u64()); }

    // Standard normal via Box-Muller on one 128-bit block.
    double next_normal();

private:
    std::uint64_t key0_, key1_, ctr_;
    bool have_word_;
    std::uint64_t spare_;
};

inline double Sequence::next_normal() {
    // Both words of one block; the cached spare word (if any) is dropped so
    // a normal draw is always a pure function of the counter it consumes.
    have_word_ = false;
    u128 r = threefry2x64(key0_, key1_, ctr_++, 0);
    const double u1 = to_unit_open(r.x0);
    const double u2 = to_unit_open(r.x1);
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
}

} // namespace rng
} // namespace polymer
