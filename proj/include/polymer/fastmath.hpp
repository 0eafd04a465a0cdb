#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>

// Compensated summation plus branch-free exp/log/trig polynomials for the
// inner DP loops. The polynomial routines keep relative error below ~1e-12,
// which is far inside every statistical tolerance used by the experiments;
// they exist because the slice pipelines evaluate hundreds of millions of
// transcendentals per replica and must auto-vectorize.

namespace polymer {
namespace fm {

// Kahan-compensated accumulator for long sums of small terms.
class KahanSum {
public:
    KahanSum() : sum_(0.0), c_(0.0) {}
    explicit KahanSum(double init) : sum_(init), c_(0.0) {}

    void add(double x) {
        const double y = x - c_;
        const double t = sum_ + y;
        c_ = (t - sum_) - y;
        sum_ = t;
    }
    double value() const { return sum_; }

private:
    double sum_;
    double c_;
};

namespace detail {

inline double bits_to_double(std::uint64_t b) {
    double d;
    std::memcpy(&d, &b, sizeof d);
    return d;
}

inline std::uint64_t double_to_bits(double d) {
    std::uint64_t b;
    std::memcpy(&b, &d, sizeof b);
    return b;
}

} // namespace detail

// exp(x) for |x| <= 700. Cody-Waite reduction, degree-10 Taylor core.
inline double fast_exp(double x) {
    constexpr double kInvLn2 = 1.4426950408889634074;
    constexpr double kLn2Hi = 6.93147180369123816490e-01;
    constexpr double kLn2Lo = 1.90821492927058770002e-10;
    const double kd = std::nearbyint(x * kInvLn2);
    const double r = (x - kd * kLn2Hi) - kd * kLn2Lo;
    // Taylor to r^10; |r| <= ln2/2 keeps the truncation below 1e-14.
    double p = 1.0 / 3628800.0;
    p = p * r + 1.0 / 362880.0;
    p = p * r + 1.0 / 40320.0;
    p = p * r + 1.0 / 5040.0;
    p = p * r + 1.0 / 720.0;
    p = p * r + 1.0 / 120.0;
    p = p * r + 1.0 / 24.0;
    p = p * r + 1.0 / 6.0;
    p = p * r + 0.5;
    p = p * r + 1.0;
    p = p * r + 1.0;
    const std::int64_t k = static_cast<std::int64_t>(kd);
    const std::uint64_t scale = static_cast<std::uint64_t>(k + 1023) << 52;
    return p * detail::bits_to_double(scale);
}

// log(x) for finite normal x > 0. Branch-free so it vectorizes.
inline double fast_log(double x) {
    constexpr double kLn2Hi = 6.93147180369123816490e-01;
    constexpr double kLn2Lo = 1.90821492927058770002e-10;
    const std::uint64_t bits = detail::double_to_bits(x);
    double e = double(static_cast<std::int64_t>(bits >> 52) - 1023);
    double m = detail::bits_to_double(
        (bits & 0x000FFFFFFFFFFFFFull) | 0x3FF0000000000000ull); // [1,2)
    const double shrink = (m > 1.4142135623730951) ? 0.5 : 1.0;
    m *= shrink;
    e += (shrink == 0.5) ? 1.0 : 0.0;
    const double z = (m - 1.0) / (m + 1.0);
    const double z2 = z * z;
    // atanh series: ln m = 2z(1 + z^2/3 + z^4/5 + ...), |z| <= 0.1716.
    double p = 1.0 / 15.0;
    p = p * z2 + 1.0 / 13.0;
    p = p * z2 + 1.0 / 11.0;
    p = p * z2 + 1.0 / 9.0;
    p = p * z2 + 1.0 / 7.0;
    p = p * z2 + 1.0 / 5.0;
    p = p * z2 + 1.0 / 3.0;
    p = p * z2 + 1.0;
    const double lnm = 2.0 * z * p;
    return (e * kLn2Hi + lnm) + e * kLn2Lo;
}

// cos(2*pi*u) and sin(2*pi*u). Quadrant reduction done arithmetically so
// the whole body is branch-free.
inline void fast_sincos_2pi(double u, double* s, double* c) {
    const double a = 4.0 * (u - std::nearbyint(u)); // a in [-2,2]
    const double qd = std::nearbyint(a);
    const double phi = (a - qd) * 1.5707963267948966192;
    const double p2 = phi * phi;

    double ce = -1.0 / 479001600.0;
    ce = ce * p2 + 1.0 / 3628800.0;
    ce = ce * p2 - 1.0 / 40320.0;
    ce = ce * p2 + 1.0 / 720.0;
    ce = ce * p2 - 1.0 / 24.0;
    ce = ce * p2 + 0.5;
    const double cosv = 1.0 - p2 * ce;

    double se = 1.0 / 6227020800.0;
    se = se * p2 - 1.0 / 39916800.0;
    se = se * p2 + 1.0 / 362880.0;
    se = se * p2 - 1.0 / 5040.0;
    se = se * p2 + 1.0 / 120.0;
    se = se * p2 - 1.0 / 6.0;
    const double sinv = phi + phi * p2 * se;

    // quadrant qm in {0,1,2,3}: swap = qm mod 2, flip sign when qm >= 2
    const double qm = qd - 4.0 * std::floor(0.25 * qd);
    const double big = std::floor(0.5 * qm); // 0 or 1
    const double sw = qm - 2.0 * big;        // 0 or 1
    const double sgn = 1.0 - 2.0 * big;
    *c = (cosv * (1.0 - sw) - sinv * sw) * sgn;
    *s = (sinv * (1.0 - sw) + cosv * sw) * sgn;
}

} // namespace fm
} // namespace polymer
