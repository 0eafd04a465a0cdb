#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <vector>

#include "polymer/disorder.hpp"
#include "polymer/fastmath.hpp"
#include "polymer/walks.hpp"

// Transfer-matrix evaluation of windowed partition functions.
//
// All slice dynamic programs run in diagonal coordinates u = y1+y2,
// v = y1-y2, where one walk step is a pair of independent +-1 moves. On
// the occupied parity class the natural index i = (u - u0 + n)/2 is
// contiguous, so a step is two separable two-point stencils. Disorder
// multipliers exp(beta*omega - lambda) are generated per row from the
// counter RNG; a window mask restricts them to the region where disorder
// is sampled.

namespace polymer {
namespace partition {

// Space-time windows restricting where disorder is sampled. a_N is the
// vanishing scale 1/(log N)^{1-gamma}; the local window around the start
// keeps times n <= N^{1-a_N} and offsets |z - x| < N^{1/2 - a_N/4}.
struct WindowSpec {
    enum class Kind { full, A, B, Bgeq, C, complementA };

    Kind kind = Kind::full;
    std::int64_t N = 0;
    double gamma = 0.2;
    std::int64_t x1 = 0, x2 = 0; // center, used by A and C

    double a_N = 0.0;
    std::int64_t t_local = 0;    // floor(N^{1 - a_N})
    double r_local = 0.0;        // N^{1/2 - a_N/4}
    std::int64_t t_bgeq = 0;     // floor(N^{1 - 9 a_N / 40})

    static double scale_a(std::int64_t N, double gamma) {
        if (N < 2) return 1.0;
        return 1.0 / std::pow(std::log(double(N)), 1.0 - gamma);
    }

    static WindowSpec make(Kind kind, std::int64_t N, double gamma,
                           std::int64_t x1 = 0, std::int64_t x2 = 0) {
        if (N < 1) throw std::invalid_argument("WindowSpec: N >= 1");
        if (!(gamma > 0.0 && gamma < 1.0))
            throw std::invalid_argument("WindowSpec: gamma in (0,1)");
        WindowSpec w;
        w.kind = kind;
        w.N = N;
        w.gamma = gamma;
        w.x1 = x1;
        w.x2 = x2;
        w.a_N = scale_a(N, gamma);
        const double logN = std::log(double(N));
        w.t_local = std::min<std::int64_t>(
            N, static_cast<std::int64_t>(
                   std::floor(std::exp((1.0 - w.a_N) * logN))));
        w.r_local = std::exp((0.5 - w.a_N / 4.0) * logN);
        w.t_bgeq = std::min<std::int64_t>(
            N, static_cast<std::int64_t>(std::floor(
                   std::exp((1.0 - 9.0 * w.a_N / 40.0) * logN))));
        return w;
    }

    static WindowSpec full(std::int64_t N) {
        WindowSpec w = make(Kind::full, N, 0.2);
        return w;
    }
    static WindowSpec window_A(std::int64_t N, std::int64_t x1,
                               std::int64_t x2, double gamma) {
        return make(Kind::A, N, gamma, x1, x2);
    }
    static WindowSpec window_B(std::int64_t N, double gamma) {
        return make(Kind::B, N, gamma);
    }
    static WindowSpec window_Bgeq(std::int64_t N, double gamma) {
        return make(Kind::Bgeq, N, gamma);
    }
    static WindowSpec window_C(std::int64_t N, std::int64_t x1,
                               std::int64_t x2, double gamma) {
        return make(Kind::C, N, gamma, x1, x2);
    }
    static WindowSpec complement_A(std::int64_t N, std::int64_t x1,
                                   std::int64_t x2, double gamma) {
        return make(Kind::complementA, N, gamma, x1, x2);
    }
    // Explicit local geometry, for degenerate-case tests.
    static WindowSpec custom_A(std::int64_t N, std::int64_t x1,
                               std::int64_t x2, std::int64_t t_local,
                               double r_local) {
        WindowSpec w = make(Kind::A, N, 0.2, x1, x2);
        w.t_local = std::min(N, t_local);
        w.r_local = r_local;
        return w;
    }

    bool x_dependent() const { return kind == Kind::A || kind == Kind::C ||
                                      kind == Kind::complementA; }

    bool contains(std::int64_t n, std::int64_t y1, std::int64_t y2) const {
        if (n < 1 || n > N) return false;
        const double d1 = double(y1 - x1), d2 = double(y2 - x2);
        const bool in_disc = d1 * d1 + d2 * d2 < r_local * r_local;
        switch (kind) {
            case Kind::full: return true;
            case Kind::A: return n <= t_local && in_disc;
            case Kind::B: return n > t_local;
            case Kind::Bgeq: return n > t_bgeq;
            case Kind::C: return n <= t_local && !in_disc;
            case Kind::complementA: return n > t_local || !in_disc;
        }
        return false;
    }

    enum class SliceMode { none, all, inside_disc, outside_disc };

    SliceMode slice_mode(std::int64_t n) const {
        if (n < 1 || n > N) return SliceMode::none;
        switch (kind) {
            case Kind::full: return SliceMode::all;
            case Kind::A:
                return n <= t_local ? SliceMode::inside_disc : SliceMode::none;
            case Kind::B:
                return n > t_local ? SliceMode::all : SliceMode::none;
            case Kind::Bgeq:
                return n > t_bgeq ? SliceMode::all : SliceMode::none;
            case Kind::C:
                return n <= t_local ? SliceMode::outside_disc
                                    : SliceMode::none;
            case Kind::complementA:
                return n <= t_local ? SliceMode::outside_disc
                                    : SliceMode::all;
        }
        return SliceMode::none;
    }

    std::int64_t first_disorder_time() const {
        switch (kind) {
            case Kind::B: return t_local + 1;
            case Kind::Bgeq: return t_bgeq + 1;
            default: return 1;
        }
    }
    std::int64_t last_disorder_time() const {
        switch (kind) {
            case Kind::A:
            case Kind::C: return t_local;
            default: return N;
        }
    }

    const char* name() const {
        switch (kind) {
            case Kind::full: return "full";
            case Kind::A: return "A";
            case Kind::B: return "B";
            case Kind::Bgeq: return "Bgeq";
            case Kind::C: return "C";
            case Kind::complementA: return "complementA";
        }
        return "?";
    }
};

// Truncation policy of the slice DP. The active window per axis grows as
// c_grow * sqrt(n) + pad (the u and v axes have per-step variance 1), and
// is capped by twice the spatial radius in original coordinates.
struct TransferOpts {
    double c_grow = 7.0;
    std::int64_t pad = 6;
    std::int64_t y_radius = -1; // -1: default policy below
    bool exact = false;         // no truncation at all
    double leak_abort = 1e-9;   // abort when relative lost mass exceeds this
    std::int64_t time_offset = 0; // absolute time of relative slice 0

    static std::int64_t default_y_radius(std::int64_t N) {
        const double l = std::max(1.0, std::log(double(N)));
        return static_cast<std::int64_t>(std::ceil(4.0 * std::sqrt(double(N) * l)));
    }

    std::int64_t window_radius(std::int64_t n, std::int64_t N) const {
        if (exact) return n;
        const std::int64_t cap =
            2 * (y_radius >= 0 ? y_radius : default_y_radius(N));
        const std::int64_t grow =
            pad + static_cast<std::int64_t>(
                      std::ceil(c_grow * std::sqrt(double(std::max<std::int64_t>(n, 1)))));
        return std::min<std::int64_t>(n, std::min(cap, grow));
    }
};

struct PartitionValue {
    double value = 1.0;
    double log_value = 0.0;
    double lost_mass = 0.0;
};

namespace detail {

// 1D walk kernel row p_n(d) for d = -n..n (same parity as n), indexed by
// k = (d + n)/2 in [0, n]. Computed through log-gamma; relative error is a
// few 1e-14 even at n ~ 1e5.
inline std::vector<double> binomial_row(std::int64_t n) {
    std::vector<double> p(static_cast<std::size_t>(n) + 1);
    const double lg_n = std::lgamma(double(n) + 1.0);
    const double ln2n = double(n) * 0.6931471805599453094;
    for (std::int64_t k = 0; k <= n; ++k) {
        const double lp = lg_n - std::lgamma(double(k) + 1.0) -
                          std::lgamma(double(n - k) + 1.0) - ln2n;
        p[static_cast<std::size_t>(k)] = std::exp(lp);
    }
    return p;
}

// Natural index range [lo, hi] of the active window at slice n.
inline void natural_range(std::int64_t n, std::int64_t r, std::int64_t* lo,
                          std::int64_t* hi) {
    if (r >= n) {
        *lo = 0;
        *hi = n;
        return;
    }
    *lo = (n - r + 1) / 2;
    *hi = (n + r) / 2;
}

// One forward step of a slice matrix in natural coordinates.
// src covers [lo_s, hi_s]^2 at slice n, dst covers [lo_d, hi_d]^2 at n+1.
// Both stencils take natural entries {t-1, t} of the previous axis index.
inline void step_matrix(const std::vector<double>& src, std::int64_t lo_s,
                        std::int64_t hi_s, std::vector<double>& tmp,
                        std::vector<double>& dst, std::int64_t lo_d,
                        std::int64_t hi_d) {
    const std::int64_t ws = hi_s - lo_s + 1;
    const std::int64_t wd = hi_d - lo_d + 1;
    tmp.resize(static_cast<std::size_t>(wd) * ws);
    dst.resize(static_cast<std::size_t>(wd) * wd);
    // axis u: rows of dst from row pairs of src
    for (std::int64_t i = 0; i < wd; ++i) {
        const std::int64_t na = lo_d + i - 1 - lo_s; // natural - 1
        const std::int64_t nb = na + 1;
        const double* ra =
            (na >= 0 && na < ws) ? &src[static_cast<std::size_t>(na) * ws] : nullptr;
        const double* rb =
            (nb >= 0 && nb < ws) ? &src[static_cast<std::size_t>(nb) * ws] : nullptr;
        double* t = &tmp[static_cast<std::size_t>(i) * ws];
        if (ra && rb) {
            for (std::int64_t j = 0; j < ws; ++j) t[j] = 0.5 * (ra[j] + rb[j]);
        } else if (ra) {
            for (std::int64_t j = 0; j < ws; ++j) t[j] = 0.5 * ra[j];
        } else if (rb) {
            for (std::int64_t j = 0; j < ws; ++j) t[j] = 0.5 * rb[j];
        } else {
            std::memset(t, 0, sizeof(double) * static_cast<std::size_t>(ws));
        }
    }
    // axis v within each row
    for (std::int64_t i = 0; i < wd; ++i) {
        const double* t = &tmp[static_cast<std::size_t>(i) * ws];
        double* d = &dst[static_cast<std::size_t>(i) * wd];
        for (std::int64_t j = 0; j < wd; ++j) {
            const std::int64_t na = lo_d + j - 1 - lo_s;
            const std::int64_t nb = na + 1;
            double acc = 0.0;
            if (na >= 0 && na < ws) acc += t[na];
            if (nb >= 0 && nb < ws) acc += t[nb];
            d[j] = 0.5 * acc;
        }
    }
}

inline double matrix_sum(const std::vector<double>& m, std::size_t count) {
    fm::KahanSum s;
    for (std::size_t i = 0; i < count; ++i) s.add(m[i]);
    return s.value();
}

// Plain vectorizable sums per row, compensated across rows.
inline double matrix_sum_rows(const double* m, std::int64_t rows,
                              std::int64_t width) {
    fm::KahanSum s;
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* r = m + i * width;
        double acc = 0.0;
        for (std::int64_t j = 0; j < width; ++j) acc += r[j];
        s.add(acc);
    }
    return s.value();
}

// Interval of natural j indices whose site lies strictly inside the disc
// |y - center|^2 < r^2, along the row with natural u index I at slice n.
// dy1 = I + J - n_c, dy2 = I - J + d_c for constants depending on the start
// offset; the quadratic in J is solved directly.
struct RowDisc {
    std::int64_t j_lo, j_hi; // inclusive; empty when j_lo > j_hi
};

inline RowDisc disc_row_range(double A, double B, double r2) {
    // Solve (A + J)^2 + (B - J)^2 < r2 for real J, then round inward.
    // 2 J^2 + 2(A - B) J + A^2 + B^2 - r2 < 0
    const double a = 2.0, b = 2.0 * (A - B), c = A * A + B * B - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc <= 0.0) return {0, -1};
    const double sq = std::sqrt(disc);
    const double lo = (-b - sq) / (2.0 * a);
    const double hi = (-b + sq) / (2.0 * a);
    // strict inequality: take the open interval
    std::int64_t jl = static_cast<std::int64_t>(std::floor(lo)) + 1;
    std::int64_t jh = static_cast<std::int64_t>(std::ceil(hi)) - 1;
    return {jl, jh};
}

} // namespace detail

// Forward slice DP for a single start site. Evaluates
// Z_{window}(x) = E_x[ prod_{n} exp((beta w(n,S_n) - lambda) 1_window) ].
inline PartitionValue compute_Z(const disorder::FieldGen& gen, double beta,
                                const WindowSpec& win, std::int64_t x1,
                                std::int64_t x2, std::int64_t N,
                                const TransferOpts& opts = {}) {
    using detail::natural_range;
    if (N < 0) throw std::invalid_argument("compute_Z: N >= 0");
    const double lambda = disorder::log_mgf(gen.law(), beta);
    const std::int64_t u0 = x1 + x2;
    const std::int64_t v0 = x1 - x2;

    const std::int64_t t_end = std::min<std::int64_t>(N, win.last_disorder_time());
    std::int64_t n_start = 0;

    std::vector<double> cur(1, 1.0), tmp, nxt, mult;
    std::int64_t lo = 0, hi = 0;
    double leak = 0.0;
    int log2_offset = 0;
    double running_sum = 1.0;

    // Skip a leading disorder-free segment by planting the exact kernel.
    const std::int64_t first_active =
        std::max<std::int64_t>(1, win.first_disorder_time());
    if (first_active > 33 && t_end >= first_active) {
        const std::int64_t m = first_active - 1;
        const std::int64_t r = opts.window_radius(m, N);
        natural_range(m, r, &lo, &hi);
        const std::int64_t w = hi - lo + 1;
        const std::vector<double> row = detail::binomial_row(m);
        cur.assign(static_cast<std::size_t>(w) * w, 0.0);
        for (std::int64_t i = 0; i < w; ++i)
            for (std::int64_t j = 0; j < w; ++j)
                cur[static_cast<std::size_t>(i) * w + j] =
                    row[static_cast<std::size_t>(lo + i)] *
                    row[static_cast<std::size_t>(lo + j)];
        n_start = m;
        running_sum = detail::matrix_sum(cur, cur.size());
        leak += std::max(0.0, 1.0 - running_sum);
    }

    for (std::int64_t n = n_start + 1; n <= t_end; ++n) {
        const std::int64_t r = opts.window_radius(n, N);
        std::int64_t nlo, nhi;
        natural_range(n, r, &nlo, &nhi);
        detail::step_matrix(cur, lo, hi, tmp, nxt, nlo, nhi);
        cur.swap(nxt);
        lo = nlo;
        hi = nhi;
        const std::int64_t w = hi - lo + 1;

        // absorb sites outside the original-coordinate box when the
        // diagonal window is wider than the requested y-radius
        if (opts.y_radius >= 0 && r > opts.y_radius) {
            const std::int64_t R = opts.y_radius;
            for (std::int64_t i = 0; i < w; ++i) {
                const std::int64_t I = lo + i;
                // |dy1| = |I + J - n| <= R and |dy2| = |I - J| <= R
                const std::int64_t jl =
                    std::max({lo, n - I - R, I - R}) - lo;
                const std::int64_t jh =
                    std::min({hi, n - I + R, I + R}) - lo;
                double* rowp = &cur[static_cast<std::size_t>(i) * w];
                for (std::int64_t j = 0; j < w; ++j)
                    if (j < jl || j > jh) rowp[j] = 0.0;
            }
        }

        const double s_stencil = detail::matrix_sum_rows(cur.data(), w, w);
        leak += std::max(0.0, running_sum - s_stencil);

        const std::int64_t n_abs = n + opts.time_offset;
        const WindowSpec::SliceMode mode = win.slice_mode(n_abs);
        double slice_max = 0.0;
        if (mode == WindowSpec::SliceMode::none) {
            running_sum = s_stencil;
        } else {
            mult.resize(static_cast<std::size_t>(w));
            fm::KahanSum ks;
            for (std::int64_t i = 0; i < w; ++i) {
                const std::int64_t I = lo + i; // natural u index
                const std::int64_t u = u0 + 2 * I - n;
                const std::int64_t v_first = v0 + 2 * lo - n;
                double* rowp = &cur[static_cast<std::size_t>(i) * w];

                std::int64_t a_lo = 0, a_hi = w - 1;
                bool complement = false;
                if (mode != WindowSpec::SliceMode::all) {
                    // Row sites have dy1 = x1 + I + J - n - win.x1 and
                    // dy2 = x2 + I - J - win.x2 as functions of the natural
                    // index J; the disc condition is a quadratic in J.
                    const double A1 = double(x1 - win.x1 + I - n);
                    const double B1 = double(x2 - win.x2 + I);
                    const detail::RowDisc rd = detail::disc_row_range(
                        A1, B1, win.r_local * win.r_local);
                    a_lo = std::max<std::int64_t>(rd.j_lo - lo, 0);
                    a_hi = std::min<std::int64_t>(rd.j_hi - lo, w - 1);
                    complement = (mode == WindowSpec::SliceMode::outside_disc);
                }

                if (!complement) {
                    if (a_lo <= a_hi) {
                        gen.fill_multipliers(
                            n_abs, u, v_first + 2 * a_lo,
                            static_cast<std::size_t>(a_hi - a_lo + 1), beta,
                            lambda, mult.data());
                        for (std::int64_t j = a_lo; j <= a_hi; ++j)
                            rowp[j] *= mult[j - a_lo];
                    }
                } else if (a_lo > a_hi) {
                    // disc misses the row: the whole row is outside
                    gen.fill_multipliers(n_abs, u, v_first,
                                         static_cast<std::size_t>(w), beta,
                                         lambda, mult.data());
                    for (std::int64_t j = 0; j < w; ++j) rowp[j] *= mult[j];
                } else {
                    if (a_lo > 0) {
                        gen.fill_multipliers(n_abs, u, v_first,
                                             static_cast<std::size_t>(a_lo),
                                             beta, lambda, mult.data());
                        for (std::int64_t j = 0; j < a_lo; ++j)
                            rowp[j] *= mult[j];
                    }
                    if (a_hi < w - 1) {
                        gen.fill_multipliers(
                            n_abs, u, v_first + 2 * (a_hi + 1),
                            static_cast<std::size_t>(w - 1 - a_hi), beta,
                            lambda, mult.data());
                        for (std::int64_t j = a_hi + 1; j < w; ++j)
                            rowp[j] *= mult[j - a_hi - 1];
                    }
                }
                double acc = 0.0, rmax = 0.0;
                for (std::int64_t j = 0; j < w; ++j) {
                    acc += rowp[j];
                    rmax = std::max(rmax, rowp[j]);
                }
                ks.add(acc);
                slice_max = std::max(slice_max, rmax);
            }
            running_sum = ks.value();
        }

        // renormalize when entries threaten the double range
        if (slice_max > 1e100) {
            const double sc = 0x1.0p-512;
            for (double& v : cur) v *= sc;
            leak *= sc;
            running_sum *= sc;
            log2_offset += 512;
        }
    }

    PartitionValue out;
    const double total = detail::matrix_sum(cur, cur.size());
    out.log_value = std::log(total) + log2_offset * 0.6931471805599453094;
    out.value = std::ldexp(total, log2_offset);
    out.lost_mass = std::ldexp(leak, log2_offset);
    if (out.lost_mass > opts.leak_abort * (out.value + out.lost_mass))
        throw std::runtime_error(
            "compute_Z: lost mass exceeds the truncation budget");
    return out;
}

namespace detail {

// Exact leak accounting for compute_Z is awkward once multipliers rescale
// the mass, so the geometric (beta = 0) deficit of the same truncation
// policy is computed separately and cached by callers.
inline double kernel_mass_deficit(std::int64_t N, const TransferOpts& opts) {
    std::vector<double> cur(1, 1.0), tmp, nxt;
    std::int64_t lo = 0, hi = 0;
    for (std::int64_t n = 1; n <= N; ++n) {
        const std::int64_t r = opts.window_radius(n, N);
        std::int64_t nlo, nhi;
        natural_range(n, r, &nlo, &nhi);
        step_matrix(cur, lo, hi, tmp, nxt, nlo, nhi);
        cur.swap(nxt);
        lo = nlo;
        hi = nhi;
    }
    return 1.0 - matrix_sum(cur, cur.size());
}

} // namespace detail

// -------------------------------------------------------------------------
// Whole-field evaluation (backward recursion).
//
// For windows that do not depend on the start site (full, B, Bgeq), the
// adjoint recursion G_{n-1}(z) = sum_{y ~ z} (1/4) m(n,y) G_n(y) run from
// G_N = 1 yields Z(x) = G_0(x) for every x at the cost of one DP.

struct FieldBox {
    std::int64_t y1_lo, y1_hi, y2_lo, y2_hi; // inclusive target box

    std::int64_t count() const {
        return (y1_hi - y1_lo + 1) * (y2_hi - y2_lo + 1);
    }
};

struct FieldResult {
    FieldBox box;
    std::vector<double> z; // row-major over (y1, y2)
    double mass_deficit = 0.0; // beta = 0 deficit of the same geometry

    double at(std::int64_t y1, std::int64_t y2) const {
        return z[static_cast<std::size_t>(y1 - box.y1_lo) *
                     (box.y2_hi - box.y2_lo + 1) +
                 static_cast<std::size_t>(y2 - box.y2_lo)];
    }
};

namespace detail {

// Backward field engine state: two parity classes stored on a common
// rectangle [plo, phi] x [qlo, qhi] in halved coordinates.
// class 0 ("even"): (u, v) = (2p, 2q); class 1: (u, v) = (2p+1, 2q+1).
struct ClassGrid {
    std::int64_t plo, phi, qlo, qhi;
    std::vector<double> a;

    std::int64_t pw() const { return phi - plo + 1; }
    std::int64_t qw() const { return qhi - qlo + 1; }
    double* row(std::int64_t p) {
        return &a[static_cast<std::size_t>(p - plo) * qw()];
    }
    const double* row(std::int64_t p) const {
        return &a[static_cast<std::size_t>(p - plo) * qw()];
    }
    void alloc_fill(double v) {
        a.assign(static_cast<std::size_t>(pw()) * qw(), v);
    }
};

} // namespace detail

// Backward evaluation of Z_window(x) for every x in `box`. The window must
// not depend on the start site. Set with_disorder = false to obtain the
// beta = 0 retained-mass field of the identical truncation geometry.
inline FieldResult compute_field(const disorder::FieldGen& gen, double beta,
                                 const WindowSpec& win, std::int64_t N,
                                 const FieldBox& box,
                                 const TransferOpts& opts = {},
                                 bool with_disorder = true) {
    if (win.x_dependent())
        throw std::invalid_argument(
            "compute_field: window must be start-independent");
    const double lambda = disorder::log_mgf(gen.law(), beta);

    // (u,v) rectangle of the targets
    const std::int64_t Ulo = box.y1_lo + box.y2_lo, Uhi = box.y1_hi + box.y2_hi;
    const std::int64_t Vlo = box.y1_lo - box.y2_hi, Vhi = box.y1_hi - box.y2_lo;

    const std::int64_t first_active =
        std::max<std::int64_t>(1, win.first_disorder_time());
    const std::int64_t t_end = std::min<std::int64_t>(N, win.last_disorder_time());

    auto growth = [&](std::int64_t n) { return opts.window_radius(n, N); };

    // Active rectangle at slice n (sites needed to reach the targets).
    auto active = [&](std::int64_t n, std::int64_t* ulo, std::int64_t* uhi,
                      std::int64_t* vlo, std::int64_t* vhi) {
        const std::int64_t r = growth(n);
        *ulo = Ulo - r;
        *uhi = Uhi + r;
        *vlo = Vlo - r;
        *vhi = Vhi + r;
    };

    std::int64_t ulo, uhi, vlo, vhi;
    active(t_end, &ulo, &uhi, &vlo, &vhi);

    // Persistent double buffers at the largest (slice t_end) extent; the
    // logical bounds shrink as the recursion walks backward, so stale
    // entries outside the current bounds are never read again.
    detail::ClassGrid bufA[2], bufB[2];
    std::int64_t b_plo[2], b_phi[2], b_qlo[2], b_qhi[2]; // logical bounds
    for (int c = 0; c < 2; ++c) {
        bufA[c].plo = static_cast<std::int64_t>(std::floor((double(ulo) - c) / 2.0));
        bufA[c].phi = static_cast<std::int64_t>(std::floor((double(uhi) - c) / 2.0));
        bufA[c].qlo = static_cast<std::int64_t>(std::floor((double(vlo) - c) / 2.0));
        bufA[c].qhi = static_cast<std::int64_t>(std::floor((double(vhi) - c) / 2.0));
        bufA[c].alloc_fill(1.0);
        bufB[c] = bufA[c];
        bufB[c].alloc_fill(0.0);
        b_plo[c] = bufA[c].plo;
        b_phi[c] = bufA[c].phi;
        b_qlo[c] = bufA[c].qlo;
        b_qhi[c] = bufA[c].qhi;
    }
    detail::ClassGrid* cls = bufA;
    detail::ClassGrid* nxt = bufB;

    std::vector<double> mult;
    std::vector<double> tmp;

    // Multiply slice-n values by the disorder factor, then contract one
    // backward step.
    for (std::int64_t n = t_end; n >= first_active; --n) {
        if (with_disorder && win.slice_mode(n) != WindowSpec::SliceMode::none) {
            for (int c = 0; c < 2; ++c) {
                detail::ClassGrid& g = cls[c];
                const std::int64_t qn = b_qhi[c] - b_qlo[c] + 1;
                mult.resize(static_cast<std::size_t>(qn));
                for (std::int64_t p = b_plo[c]; p <= b_phi[c]; ++p) {
                    const std::int64_t u = 2 * p + c;
                    const std::int64_t v_first = 2 * b_qlo[c] + c;
                    gen.fill_multipliers(n, u, v_first,
                                         static_cast<std::size_t>(qn), beta,
                                         lambda, mult.data());
                    double* r = g.row(p) + (b_qlo[c] - g.qlo);
                    for (std::int64_t j = 0; j < qn; ++j) r[j] *= mult[j];
                }
            }
        }

        std::int64_t nulo, nuhi, nvlo, nvhi;
        active(n - 1, &nulo, &nuhi, &nvlo, &nvhi);

        // class 0 at n-1 pulls from class 1 at n with offsets {-1, 0}:
        //   E[p][q] = 1/4 (O[p-1][q-1] + O[p-1][q] + O[p][q-1] + O[p][q])
        // class 1 at n-1 pulls from class 0 at n with offsets {0, +1}.
        std::int64_t n_plo[2], n_phi[2], n_qlo[2], n_qhi[2];
        for (int c = 0; c < 2; ++c) {
            n_plo[c] = std::max(nxt[c].plo, static_cast<std::int64_t>(
                std::floor((double(nulo) - c) / 2.0)));
            n_phi[c] = std::min(nxt[c].phi, static_cast<std::int64_t>(
                std::floor((double(nuhi) - c) / 2.0)));
            n_qlo[c] = std::max(nxt[c].qlo, static_cast<std::int64_t>(
                std::floor((double(nvlo) - c) / 2.0)));
            n_qhi[c] = std::min(nxt[c].qhi, static_cast<std::int64_t>(
                std::floor((double(nvhi) - c) / 2.0)));
        }
        for (int c = 0; c < 2; ++c) {
            detail::ClassGrid& dst = nxt[c];
            const detail::ClassGrid& src = cls[1 - c];
            const int cs = 1 - c;
            const std::int64_t off = (c == 0) ? -1 : 0;
            const std::int64_t qw_s = src.qw();
            tmp.resize(static_cast<std::size_t>(qw_s));
            for (std::int64_t p = n_plo[c]; p <= n_phi[c]; ++p) {
                const std::int64_t pa = p + off, pb = p + off + 1;
                const double* ra =
                    (pa >= b_plo[cs] && pa <= b_phi[cs]) ? src.row(pa) : nullptr;
                const double* rb =
                    (pb >= b_plo[cs] && pb <= b_phi[cs]) ? src.row(pb) : nullptr;
                const std::int64_t jlo = b_qlo[cs] - src.qlo;
                const std::int64_t jhi = b_qhi[cs] - src.qlo;
                if (ra && rb) {
                    for (std::int64_t j = jlo; j <= jhi; ++j)
                        tmp[static_cast<std::size_t>(j)] = ra[j] + rb[j];
                } else if (ra) {
                    for (std::int64_t j = jlo; j <= jhi; ++j)
                        tmp[static_cast<std::size_t>(j)] = ra[j];
                } else if (rb) {
                    for (std::int64_t j = jlo; j <= jhi; ++j)
                        tmp[static_cast<std::size_t>(j)] = rb[j];
                } else {
                    for (std::int64_t j = jlo; j <= jhi; ++j)
                        tmp[static_cast<std::size_t>(j)] = 0.0;
                }
                double* d = dst.row(p);
                for (std::int64_t q = n_qlo[c]; q <= n_qhi[c]; ++q) {
                    const std::int64_t qa = q + off - src.qlo;
                    const std::int64_t qb = qa + 1;
                    double acc = 0.0;
                    if (qa >= jlo && qa <= jhi) acc += tmp[static_cast<std::size_t>(qa)];
                    if (qb >= jlo && qb <= jhi) acc += tmp[static_cast<std::size_t>(qb)];
                    d[q - dst.qlo] = 0.25 * acc;
                }
            }
        }
        std::swap(cls, nxt);
        for (int c = 0; c < 2; ++c) {
            b_plo[c] = n_plo[c];
            b_phi[c] = n_phi[c];
            b_qlo[c] = n_qlo[c];
            b_qhi[c] = n_qhi[c];
        }
    }

    // Free tail: propagate from slice (first_active - 1) to 0 with the
    // exact kernel, evaluated only at the targets.
    const std::int64_t T = first_active - 1;
    FieldResult out;
    out.box = box;
    out.z.assign(static_cast<std::size_t>(box.count()), 0.0);

    if (T == 0) {
        for (std::int64_t y1 = box.y1_lo; y1 <= box.y1_hi; ++y1)
            for (std::int64_t y2 = box.y2_lo; y2 <= box.y2_hi; ++y2) {
                const std::int64_t u = y1 + y2, v = y1 - y2;
                const int c = static_cast<int>(((u % 2) + 2) % 2);
                const detail::ClassGrid& g = cls[c];
                const std::int64_t p = (u - c) / 2, q = (v - c) / 2;
                double val = 0.0;
                if (p >= b_plo[c] && p <= b_phi[c] && q >= b_qlo[c] &&
                    q <= b_qhi[c])
                    val = g.row(p)[q - g.qlo];
                out.z[static_cast<std::size_t>(y1 - box.y1_lo) *
                          (box.y2_hi - box.y2_lo + 1) +
                      static_cast<std::size_t>(y2 - box.y2_lo)] = val;
            }
        return out;
    }

    // kernel row p_T(d), d = 2k - T
    const std::vector<double> prow = detail::binomial_row(T);
    // For q_T(y - x) = p_T(u - u0) p_T(v - v0): contract v first for the
    // needed v0 values, then u.
    std::vector<std::int64_t> v0s, u0s;
    for (std::int64_t y1 = box.y1_lo; y1 <= box.y1_hi; ++y1)
        for (std::int64_t y2 = box.y2_lo; y2 <= box.y2_hi; ++y2) {
            const std::int64_t u = y1 + y2, v = y1 - y2;
            if (std::find(u0s.begin(), u0s.end(), u) == u0s.end()) u0s.push_back(u);
            if (std::find(v0s.begin(), v0s.end(), v) == v0s.end()) v0s.push_back(v);
        }

    // partial[u][v0 index] = sum_v p_T(v - v0) G_T(u, v)
    const std::int64_t n_v0 = static_cast<std::int64_t>(v0s.size());
    const std::int64_t u_span_lo =
        std::min(b_plo[0] * 2, b_plo[1] * 2 + 1);
    const std::int64_t u_span_hi =
        std::max(b_phi[0] * 2, b_phi[1] * 2 + 1);
    std::vector<double> partial(
        static_cast<std::size_t>(u_span_hi - u_span_lo + 1) * n_v0, 0.0);
    for (std::int64_t u = u_span_lo; u <= u_span_hi; ++u) {
        const int c = static_cast<int>(((u % 2) + 2) % 2);
        const detail::ClassGrid& g = cls[c];
        const std::int64_t p = (u - c) / 2;
        if (p < b_plo[c] || p > b_phi[c]) continue;
        const double* row = g.row(p);
        for (std::int64_t vi = 0; vi < n_v0; ++vi) {
            const std::int64_t v0 = v0s[static_cast<std::size_t>(vi)];
            // v = 2q + c, kernel index k = (v - v0 + T)/2 must be integral:
            // parity matches when (c - v0 + T) is even; otherwise q_T = 0.
            if ((((2 * b_qlo[c] + c - v0 + T) % 2) + 2) % 2 != 0) continue;
            fm::KahanSum acc;
            for (std::int64_t q = b_qlo[c]; q <= b_qhi[c]; ++q) {
                const std::int64_t v = 2 * q + c;
                const std::int64_t k2 = v - v0 + T;
                if (k2 < 0 || k2 > 2 * T) continue;
                acc.add(prow[static_cast<std::size_t>(k2 / 2)] * row[q - g.qlo]);
            }
            partial[static_cast<std::size_t>(u - u_span_lo) * n_v0 + vi] =
                acc.value();
        }
    }

    for (std::int64_t y1 = box.y1_lo; y1 <= box.y1_hi; ++y1)
        for (std::int64_t y2 = box.y2_lo; y2 <= box.y2_hi; ++y2) {
            const std::int64_t u0 = y1 + y2, v0 = y1 - y2;
            const std::int64_t vi = static_cast<std::int64_t>(
                std::find(v0s.begin(), v0s.end(), v0) - v0s.begin());
            fm::KahanSum acc;
            for (std::int64_t u = u_span_lo; u <= u_span_hi; ++u) {
                const std::int64_t k2 = u - u0 + T;
                if (k2 < 0 || k2 > 2 * T || (k2 % 2) != 0) continue;
                acc.add(prow[static_cast<std::size_t>(k2 / 2)] *
                        partial[static_cast<std::size_t>(u - u_span_lo) * n_v0 +
                                vi]);
            }
            out.z[static_cast<std::size_t>(y1 - box.y1_lo) *
                      (box.y2_hi - box.y2_lo + 1) +
                  static_cast<std::size_t>(y2 - box.y2_lo)] = acc.value();
        }
    return out;
}

// -------------------------------------------------------------------------
// Decomposition diagnostics for a single site.

struct Decomposition {
    PartitionValue z_full;
    PartitionValue z_local;   // window A
    double z_hat;             // Z - Z^A, same disorder realization
    double ratio;             // Z_hat / Z^A
    double remainder;         // log Z - log Z^A - ratio
};

inline Decomposition decompose_A(const disorder::FieldGen& gen, double beta,
                                 std::int64_t x1, std::int64_t x2,
                                 std::int64_t N, double gamma,
                                 const TransferOpts& opts = {}) {
    Decomposition d;
    const WindowSpec full = WindowSpec::full(N);
    const WindowSpec wa = WindowSpec::window_A(N, x1, x2, gamma);
    d.z_full = compute_Z(gen, beta, full, x1, x2, N, opts);
    d.z_local = compute_Z(gen, beta, wa, x1, x2, N, opts);
    d.z_hat = d.z_full.value - d.z_local.value;
    d.ratio = d.z_hat / d.z_local.value;
    d.remainder = d.z_full.log_value - d.z_local.log_value - d.ratio;
    return d;
}

// Point-to-point partition function inside the window A: the sum over
// chaos sets whose final element is (t, w), i.e. the windowed transfer
// value propagated one step to w times the forced factor sigma*xi(t,w).
inline double point_to_point_Z(const disorder::FieldGen& gen, double beta,
                               std::int64_t x1, std::int64_t x2,
                               std::int64_t t, std::int64_t w1,
                               std::int64_t w2, double gamma, std::int64_t N,
                               const TransferOpts& opts = {}) {
    const WindowSpec wa = WindowSpec::window_A(N, x1, x2, gamma);
    if (t == 0) {
        if (w1 == x1 && w2 == x2) return 1.0;
        throw std::domain_error("point_to_point_Z: (0,w) must equal (0,x)");
    }
    if (!wa.contains(t, w1, w2))
        throw std::domain_error("point_to_point_Z: (t,w) outside window");
    // parity: unreachable endpoints carry no chaos set
    if ((((w1 + w2 - x1 - x2 - t) % 2) + 2) % 2 != 0) return 0.0;

    const double lambda = disorder::log_mgf(gen.law(), beta);
    // evolve the windowed DP through slice t-1, then one kernel step to w
    std::vector<double> cur(1, 1.0), tmp, nxt, mult;
    std::int64_t lo = 0, hi = 0;
    const std::int64_t u0 = x1 + x2, v0 = x1 - x2;
    for (std::int64_t n = 1; n < t; ++n) {
        const std::int64_t r = opts.window_radius(n, N);
        std::int64_t nlo, nhi;
        detail::natural_range(n, r, &nlo, &nhi);
        detail::step_matrix(cur, lo, hi, tmp, nxt, nlo, nhi);
        cur.swap(nxt);
        lo = nlo;
        hi = nhi;
        const std::int64_t w = hi - lo + 1;
        mult.resize(static_cast<std::size_t>(w));
        for (std::int64_t i = 0; i < w; ++i) {
            const std::int64_t I = lo + i;
            const std::int64_t u = u0 + 2 * I - n;
            const std::int64_t v_first = v0 + 2 * lo - n;
            const double A1 = double(x1 - wa.x1 + I - n);
            const double B1 = double(x2 - wa.x2 + I);
            const detail::RowDisc rd =
                detail::disc_row_range(A1, B1, wa.r_local * wa.r_local);
            std::int64_t jl = std::max<std::int64_t>(rd.j_lo - lo, 0);
            std::int64_t jh = std::min<std::int64_t>(rd.j_hi - lo, w - 1);
            if (jl > jh) continue;
            double* rowp = &cur[static_cast<std::size_t>(i) * w];
            gen.fill_multipliers(n, u, v_first + 2 * jl,
                                 static_cast<std::size_t>(jh - jl + 1), beta,
                                 lambda, mult.data());
            for (std::int64_t j = jl; j <= jh; ++j)
                rowp[j] *= mult[j - jl];
        }
    }
    // one clean kernel step, read off the natural index of w
    const std::int64_t iu = (w1 + w2 - u0 + t) / 2;
    const std::int64_t iv = (w1 - w2 - v0 + t) / 2;
    if (iu < 0 || iu > t || iv < 0 || iv > t) return 0.0;
    std::int64_t nlo, nhi;
    detail::natural_range(t, t, &nlo, &nhi); // untruncated final step
    detail::step_matrix(cur, lo, hi, tmp, nxt, nlo, nhi);
    const std::int64_t w = nhi - nlo + 1;
    const double prop = nxt[static_cast<std::size_t>(iu - nlo) * w + (iv - nlo)];
    const double om = gen.omega(t, w1, w2);
    return prop * std::expm1(beta * om - lambda);
}

// Point-to-plane partition function from (r, z) to time N with full
// disorder on slices r+1..N.
inline double point_to_plane_Z(const disorder::FieldGen& gen, double beta,
                               std::int64_t r, std::int64_t z1,
                               std::int64_t z2, std::int64_t N,
                               const TransferOpts& opts = {}) {
    if (r < 0 || r > N)
        throw std::invalid_argument("point_to_plane_Z: 0 <= r <= N");
    if (r == N) return 1.0;
    TransferOpts o = opts;
    o.time_offset = r;
    const WindowSpec full = WindowSpec::full(N); // absolute times 1..N
    return compute_Z(gen, beta, full, z1, z2, N - r, o).value;
}

} // namespace partition
} // namespace polymer
