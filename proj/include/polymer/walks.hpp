#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "polymer/fastmath.hpp"
#include "polymer/rng.hpp"

// Simple symmetric random walk on Z^2: exact transition kernels, the
// expected two-replica overlap R_N, overlap sampling, and the exact
// moment generating function of the overlap via a transfer recursion on
// the difference walk.

namespace polymer {
namespace walks {

// Exact kernel q_n(x) = P(S_n = x) on the box |x|_inf <= radius, built by
// the one-step convolution recursion. Immutable after construction.
class KernelTable {
public:
    // Throws std::length_error if the table would exceed max_bytes.
    KernelTable(int n_max, int radius,
                std::size_t max_bytes = std::size_t(1) << 31)
        : n_max_(n_max), radius_(radius) {
        if (n_max < 0 || radius <= 0)
            throw std::invalid_argument("KernelTable: bad n_max/radius");
        side_ = 2 * radius_ + 1;
        const std::size_t bytes =
            std::size_t(n_max_ + 1) * side_ * side_ * sizeof(double);
        if (bytes > max_bytes)
            throw std::length_error("KernelTable: memory budget exceeded");
        q_.assign(std::size_t(n_max_ + 1) * side_ * side_, 0.0);
        at(0, 0, 0) = 1.0;
        for (int n = 0; n < n_max_; ++n) {
            for (int x1 = -radius_; x1 <= radius_; ++x1) {
                for (int x2 = -radius_; x2 <= radius_; ++x2) {
                    double s = 0.0;
                    s += get(n, x1 - 1, x2);
                    s += get(n, x1 + 1, x2);
                    s += get(n, x1, x2 - 1);
                    s += get(n, x1, x2 + 1);
                    at(n + 1, x1, x2) = 0.25 * s;
                }
            }
        }
    }

    int n_max() const { return n_max_; }
    int radius() const { return radius_; }

    // q_n(x); zero outside the box.
    double q(int n, int x1, int x2) const {
        if (n < 0 || n > n_max_) throw std::out_of_range("KernelTable::q: n");
        return get(n, x1, x2);
    }

    // Mass retained inside the box at step n (1 exactly when radius >= n).
    double mass(int n) const {
        fm::KahanSum s;
        for (int x1 = -radius_; x1 <= radius_; ++x1)
            for (int x2 = -radius_; x2 <= radius_; ++x2)
                s.add(get(n, x1, x2));
        return s.value();
    }

private:
    double& at(int n, int x1, int x2) {
        return q_[(std::size_t(n) * side_ + (x1 + radius_)) * side_ +
                  (x2 + radius_)];
    }
    double get(int n, int x1, int x2) const {
        if (x1 < -radius_ || x1 > radius_ || x2 < -radius_ || x2 > radius_)
            return 0.0;
        return q_[(std::size_t(n) * side_ + (x1 + radius_)) * side_ +
                  (x2 + radius_)];
    }

    int n_max_, radius_, side_;
    std::vector<double> q_;
};

// 1D simple random walk return probability p_{2n}(0) = C(2n,n) 4^{-n},
// advanced by the exact ratio recurrence. The 2D walk splits into two
// independent 1D walks along the diagonals, so q_{2n}(0) = p_{2n}(0)^2.
inline std::vector<double> return_probabilities(std::int64_t n_max) {
    std::vector<double> q(static_cast<std::size_t>(n_max) + 1, 0.0);
    double p = 1.0; // p_0(0)
    for (std::int64_t n = 1; n <= n_max; ++n) {
        p *= (2.0 * n - 1.0) / (2.0 * n);
        q[static_cast<std::size_t>(n)] = p * p;
    }
    return q;
}

// Expected overlap R_N = sum_{n=1}^N q_{2n}(0).
inline double expected_overlap(std::int64_t N) {
    if (N < 1) throw std::invalid_argument("expected_overlap: N >= 1");
    fm::KahanSum s;
    double p = 1.0;
    for (std::int64_t n = 1; n <= N; ++n) {
        p *= (2.0 * n - 1.0) / (2.0 * n);
        s.add(p * p);
    }
    return s.value();
}

// Running R_n for every n <= N (used by trend checks).
inline std::vector<double> expected_overlap_curve(std::int64_t N) {
    std::vector<double> r(static_cast<std::size_t>(N) + 1, 0.0);
    fm::KahanSum s;
    double p = 1.0;
    for (std::int64_t n = 1; n <= N; ++n) {
        p *= (2.0 * n - 1.0) / (2.0 * n);
        s.add(p * p);
        r[static_cast<std::size_t>(n)] = s.value();
    }
    return r;
}

// beta_N = beta_hat / sqrt(R_N).
inline double beta_N(double beta_hat, std::int64_t N) {
    if (!(beta_hat > 0.0))
        throw std::domain_error("beta_N: beta_hat must be > 0");
    return beta_hat / std::sqrt(expected_overlap(N));
}

struct OverlapSample {
    std::int64_t N;
    std::int64_t value; // number of coincidence times in 1..N
};

// Step law of the difference walk X = S - S~. In halved diagonal
// coordinates each axis is an independent lazy walk {1/4, 1/2, 1/4}.
struct DifferenceStepLaw {
    double p_stay = 0.25;       // X unchanged
    double p_axis2 = 1.0 / 16.0; // each of the four moves +-2 e_i
    double p_diag = 1.0 / 8.0;  // each of the four moves (+-1, +-1)
};

// Count returns to zero of the difference walk over 1..N.
inline OverlapSample sample_overlap(std::int64_t N, rng::Sequence& seq) {
    std::int64_t a = 0, b = 0, count = 0;
    for (std::int64_t n = 0; n < N; ++n) {
        const std::uint64_t w = seq.next_u64();
        // Two independent lazy-walk steps from 4 bits: P(-1)=P(+1)=1/4.
        const unsigned ua = static_cast<unsigned>(w) & 3u;
        const unsigned ub = static_cast<unsigned>(w >> 2) & 3u;
        a += (ua == 0) - (ua == 1);
        b += (ub == 0) - (ub == 1);
        count += (a == 0 && b == 0);
    }
    return {N, count};
}

// Exact E[exp(gamma * L_N)] via the transfer recursion on the difference
// walk, in halved diagonal coordinates: two separable lazy-walk stencils
// per step, then the origin entry picks up the factor e^gamma.
//
// radius < 0 selects the default policy: exact (radius = N) for N <= 512,
// otherwise a growing window that keeps the absorbed mass below ~1e-13.
// Throws std::overflow_error if a slice entry leaves the double range.
inline double overlap_mgf_exact(std::int64_t N, double gamma,
                                std::int64_t radius = -1) {
    if (N < 0) throw std::invalid_argument("overlap_mgf_exact: N >= 0");
    if (N == 0) return 1.0;
    const double eg = std::exp(gamma);
    const bool exact = (radius < 0 && N <= 512);
    auto slice_radius = [&](std::int64_t n) -> std::int64_t {
        if (radius >= 0) return std::min<std::int64_t>(radius, n);
        if (exact) return n;
        const std::int64_t grow =
            6 + static_cast<std::int64_t>(std::ceil(9.5 * std::sqrt(0.5 * n)));
        return std::min<std::int64_t>(n, grow);
    };

    const std::int64_t rmax = slice_radius(N);
    const std::size_t side = static_cast<std::size_t>(2 * rmax + 1);
    std::vector<double> w(side * side, 0.0), tmp(side * side, 0.0);
    const std::int64_t c = rmax; // index of the origin
    w[static_cast<std::size_t>(c) * side + c] = 1.0;

    std::int64_t r = 0;
    for (std::int64_t n = 1; n <= N; ++n) {
        const std::int64_t rn = slice_radius(n);
        // Axis pass along the second index.
        for (std::int64_t i = c - rn; i <= c + rn; ++i) {
            double* wi = &w[static_cast<std::size_t>(i) * side];
            double* ti = &tmp[static_cast<std::size_t>(i) * side];
            for (std::int64_t j = c - rn; j <= c + rn; ++j) {
                ti[j] = 0.25 * ((j - 1 >= 0) ? wi[j - 1] : 0.0) +
                        0.5 * wi[j] +
                        0.25 * ((j + 1 < static_cast<std::int64_t>(side)) ? wi[j + 1] : 0.0);
            }
        }
        // Axis pass along the first index.
        for (std::int64_t i = c - rn; i <= c + rn; ++i) {
            const double* up =
                (i - 1 >= 0) ? &tmp[static_cast<std::size_t>(i - 1) * side] : nullptr;
            const double* mid = &tmp[static_cast<std::size_t>(i) * side];
            const double* dn =
                (i + 1 < static_cast<std::int64_t>(side))
                    ? &tmp[static_cast<std::size_t>(i + 1) * side]
                    : nullptr;
            double* wi = &w[static_cast<std::size_t>(i) * side];
            for (std::int64_t j = c - rn; j <= c + rn; ++j) {
                wi[j] = 0.25 * (up ? up[j] : 0.0) + 0.5 * mid[j] +
                        0.25 * (dn ? dn[j] : 0.0);
            }
        }
        r = rn;
        double& origin = w[static_cast<std::size_t>(c) * side + c];
        origin *= eg;
        if (!(origin < 1e300))
            throw std::overflow_error("overlap_mgf_exact: slice overflow");
    }

    fm::KahanSum s;
    for (std::int64_t i = c - r; i <= c + r; ++i)
        for (std::int64_t j = c - r; j <= c + r; ++j)
            s.add(w[static_cast<std::size_t>(i) * side + j]);
    return s.value();
}

// Per-slice total mass of the gamma = 0 recursion, n = 0..N. Used to
// verify that the truncation policy conserves mass.
inline std::vector<double> overlap_walk_mass_curve(std::int64_t N,
                                                   std::int64_t radius = -1) {
    std::vector<double> masses(static_cast<std::size_t>(N) + 1, 1.0);
    if (N == 0) return masses;
    const bool exact = (radius < 0 && N <= 512);
    auto slice_radius = [&](std::int64_t n) -> std::int64_t {
        if (radius >= 0) return std::min<std::int64_t>(radius, n);
        if (exact) return n;
        const std::int64_t grow =
            6 + static_cast<std::int64_t>(std::ceil(9.5 * std::sqrt(0.5 * n)));
        return std::min<std::int64_t>(n, grow);
    };
    const std::int64_t rmax = slice_radius(N);
    const std::size_t side = static_cast<std::size_t>(2 * rmax + 1);
    std::vector<double> w(side * side, 0.0), tmp(side * side, 0.0);
    const std::int64_t c = rmax;
    w[static_cast<std::size_t>(c) * side + c] = 1.0;
    for (std::int64_t n = 1; n <= N; ++n) {
        const std::int64_t rn = slice_radius(n);
        for (std::int64_t i = c - rn; i <= c + rn; ++i) {
            double* wi = &w[static_cast<std::size_t>(i) * side];
            double* ti = &tmp[static_cast<std::size_t>(i) * side];
            for (std::int64_t j = c - rn; j <= c + rn; ++j)
                ti[j] = 0.25 * ((j - 1 >= 0) ? wi[j - 1] : 0.0) + 0.5 * wi[j] +
                        0.25 * ((j + 1 < static_cast<std::int64_t>(side)) ? wi[j + 1] : 0.0);
        }
        for (std::int64_t i = c - rn; i <= c + rn; ++i) {
            const double* up =
                (i - 1 >= 0) ? &tmp[static_cast<std::size_t>(i - 1) * side] : nullptr;
            const double* mid = &tmp[static_cast<std::size_t>(i) * side];
            const double* dn =
                (i + 1 < static_cast<std::int64_t>(side))
                    ? &tmp[static_cast<std::size_t>(i + 1) * side]
                    : nullptr;
            double* wi = &w[static_cast<std::size_t>(i) * side];
            for (std::int64_t j = c - rn; j <= c + rn; ++j)
                wi[j] = 0.25 * (up ? up[j] : 0.0) + 0.5 * mid[j] +
                        0.25 * (dn ? dn[j] : 0.0);
        }
        fm::KahanSum s;
        for (std::int64_t i = c - rn; i <= c + rn; ++i)
            for (std::int64_t j = c - rn; j <= c + rn; ++j)
                s.add(w[static_cast<std::size_t>(i) * side + j]);
        masses[static_cast<std::size_t>(n)] = s.value();
    }
    return masses;
}

} // namespace walks
} // namespace polymer
