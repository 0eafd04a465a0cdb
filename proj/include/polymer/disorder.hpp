#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymer/fastmath.hpp"
#include "polymer/rng.hpp"

// Disorder laws (mean 0, variance 1, finite exponential moments), their
// log moment generating function lambda(beta), the normalized chaos scale
// sigma_N, and reproducible field sampling keyed by (seed, replica, n, x).

namespace polymer {
namespace disorder {

enum class Law { gaussian, rademacher, uniform };

inline const char* law_name(Law l) {
    switch (l) {
        case Law::gaussian: return "gaussian";
        case Law::rademacher: return "rademacher";
        default: return "uniform";
    }
}

inline Law law_from_name(const std::string& s) {
    if (s == "gaussian") return Law::gaussian;
    if (s == "rademacher") return Law::rademacher;
    if (s == "uniform") return Law::uniform;
    throw std::invalid_argument("unknown disorder law: " + s);
}

// Whether the law is in the class for which the concentration hypothesis
// is known to hold (bounded or Gaussian). Recorded as metadata only.
inline bool satisfies_concentration(Law l) {
    return l == Law::gaussian || l == Law::rademacher || l == Law::uniform;
}

constexpr double kSqrt3 = 1.7320508075688772935;

// lambda(beta) = log E[exp(beta * omega)]; closed form for all three laws.
inline double log_mgf(Law law, double beta) {
    if (!std::isfinite(beta)) throw std::domain_error("log_mgf: beta");
    switch (law) {
        case Law::gaussian:
            return 0.5 * beta * beta;
        case Law::rademacher: {
            // log cosh, stable for large |beta|
            const double a = std::fabs(beta);
            return a + std::log1p(std::exp(-2.0 * a)) - 0.6931471805599453094;
        }
        case Law::uniform: {
            const double z = kSqrt3 * beta;
            const double az = std::fabs(z);
            if (az < 1e-3) {
                // log(sinh z / z) = z^2/6 - z^4/180 + O(z^6)
                const double z2 = z * z;
                return z2 / 6.0 - z2 * z2 / 180.0;
            }
            return std::log(std::sinh(az) / az);
        }
    }
    return 0.0;
}

struct SigmaN {
    double beta;
    double value;          // sqrt(exp(lambda(2b) - 2 lambda(b)) - 1)
    double ratio_to_beta;  // value / beta (-> 1 as beta -> 0)
};

inline SigmaN sigma_N(Law law, double beta) {
    if (beta == 0.0) return {0.0, 0.0, 1.0};
    const double gap = log_mgf(law, 2.0 * beta) - 2.0 * log_mgf(law, beta);
    const double v = std::sqrt(std::expm1(gap));
    return {beta, v, v / beta};
}

struct Window {
    std::int64_t n_lo, n_hi;   // inclusive time range
    std::int64_t x1_lo, x1_hi; // inclusive spatial box
    std::int64_t x2_lo, x2_hi;

    std::size_t volume() const {
        return std::size_t(n_hi - n_lo + 1) * std::size_t(x1_hi - x1_lo + 1) *
               std::size_t(x2_hi - x2_lo + 1);
    }
};

// Pure per-site generator. omega(n, x) depends only on
// (master_seed, replica, n, x, law); batch fills reproduce the scalar
// path bit for bit.
class FieldGen {
public:
    FieldGen(Law law, std::uint64_t master_seed, std::uint64_t replica = 0)
        : law_(law),
          key0_(rng::stream_key(master_seed, rng::Stream::disorder)),
          key1_(replica) {}

    Law law() const { return law_; }

    // Raw disorder value at a lattice site.
    double omega(std::int64_t n, std::int64_t x1, std::int64_t x2) const {
        const std::int64_t u = x1 + x2;
        const std::int64_t v = x1 - x2;
        const std::int64_t vk = floor_div2(v);
        switch (law_) {
            case Law::gaussian: {
                const std::int64_t m = floor_div2(vk);
                const rng::u128 r = block(n, u, m);
                double s, c;
                const double radius =
                    std::sqrt(-2.0 * fm::fast_log(rng::to_unit_open(r.x0)));
                fm::fast_sincos_2pi(rng::to_unit_open(r.x1), &s, &c);
                return (vk - 2 * m == 0) ? radius * c : radius * s;
            }
            case Law::rademacher: {
                const std::int64_t blk = floor_div(vk, 128);
                const std::int64_t off = vk - 128 * blk;
                const rng::u128 r = block(n, u, blk);
                const std::uint64_t word = (off < 64) ? r.x0 : r.x1;
                return ((word >> (off & 63)) & 1u) ? 1.0 : -1.0;
            }
            default: {
                const std::int64_t m = floor_div2(vk);
                const rng::u128 r = block(n, u, m);
                const std::uint64_t w = (vk - 2 * m == 0) ? r.x0 : r.x1;
                return (2.0 * rng::to_unit_open(w) - 1.0) * kSqrt3;
            }
        }
    }

    // Fill multipliers exp(beta*omega - lambda) for `count` sites along a
    // fixed (n, u) row, v = v0, v0+2, ..., matching omega() exactly.
    void fill_multipliers(std::int64_t n, std::int64_t u, std::int64_t v0,
                          std::size_t count, double beta, double lambda,
                          double* out) const {
        if (count == 0) return;
        switch (law_) {
            case Law::gaussian:
                fill_gaussian(n, u, v0, count, beta, lambda, out);
                return;
            case Law::rademacher:
                fill_rademacher(n, u, v0, count, beta, lambda, out);
                return;
            default:
                fill_uniform(n, u, v0, count, beta, lambda, out);
        }
    }

private:
    static std::int64_t floor_div2(std::int64_t v) {
        return (v >> 1); // arithmetic shift: floor division by 2
    }
    static std::int64_t floor_div(std::int64_t v, std::int64_t d) {
        std::int64_t q = v / d;
        if (v % d != 0 && ((v < 0) != (d < 0))) --q;
        return q;
    }

    rng::u128 block(std::int64_t n, std::int64_t u, std::int64_t b) const {
        const std::uint64_t c0 =
            (static_cast<std::uint64_t>(n) << 32) ^
            static_cast<std::uint64_t>(static_cast<std::uint32_t>(u));
        return rng::threefry2x64(key0_, key1_, c0,
                                 static_cast<std::uint64_t>(b));
    }

    // Eight independent generator calls with lane arrays; the lane loops
    // auto-vectorize (full-width rotates on AVX-512).
    void block8(std::int64_t n, std::int64_t u, std::int64_t b0,
                std::uint64_t* w0, std::uint64_t* w1) const {
        constexpr std::uint64_t kParity = 0x1BD11BDAA9FC1A22ull;
        const std::uint64_t ks0 = key0_, ks1 = key1_,
                            ks2 = kParity ^ key0_ ^ key1_;
        const std::uint64_t c0 =
            (static_cast<std::uint64_t>(n) << 32) ^
            static_cast<std::uint64_t>(static_cast<std::uint32_t>(u));
        std::uint64_t x0[8], x1[8];
        for (int l = 0; l < 8; ++l) {
            x0[l] = c0 + ks0;
            x1[l] = static_cast<std::uint64_t>(b0 + l) + ks1;
        }
        auto quad = [&](int r0, int r1, int r2, int r3) {
            for (int l = 0; l < 8; ++l) {
                x0[l] += x1[l]; x1[l] = (x1[l] << r0) | (x1[l] >> (64 - r0)); x1[l] ^= x0[l];
                x0[l] += x1[l]; x1[l] = (x1[l] << r1) | (x1[l] >> (64 - r1)); x1[l] ^= x0[l];
                x0[l] += x1[l]; x1[l] = (x1[l] << r2) | (x1[l] >> (64 - r2)); x1[l] ^= x0[l];
                x0[l] += x1[l]; x1[l] = (x1[l] << r3) | (x1[l] >> (64 - r3)); x1[l] ^= x0[l];
            }
        };
        quad(16, 42, 12, 31);
        for (int l = 0; l < 8; ++l) { x0[l] += ks1; x1[l] += ks2 + 1; }
        quad(16, 32, 24, 21);
        for (int l = 0; l < 8; ++l) { x0[l] += ks2; x1[l] += ks0 + 2; }
        quad(16, 42, 12, 31);
        for (int l = 0; l < 8; ++l) { x0[l] += ks0; x1[l] += ks1 + 3; }
        quad(16, 32, 24, 21);
        for (int l = 0; l < 8; ++l) { x0[l] += ks1; x1[l] += ks2 + 4; }
        quad(16, 42, 12, 31);
        for (int l = 0; l < 8; ++l) {
            x0[l] += ks2; x1[l] += ks0 + 5;
            w0[l] = x0[l]; w1[l] = x1[l];
        }
    }

    void fill_gaussian(std::int64_t n, std::int64_t u, std::int64_t v0,
                       std::size_t count, double beta, double lambda,
                       double* out) const {
        const std::int64_t vk0 = floor_div2(v0);
        const std::int64_t m0 = floor_div2(vk0);
        // pairs m0 .. m_last cover sites vk0 .. vk0+count-1
        const std::int64_t m_last = floor_div2(vk0 + std::int64_t(count) - 1);
        const std::size_t npairs = static_cast<std::size_t>(m_last - m0 + 1);

        constexpr std::size_t kChunk = 256;
        std::uint64_t w0[kChunk + 8], w1[kChunk + 8];
        double ev[kChunk], od[kChunk];

        std::size_t done = 0;
        std::int64_t oi = 2 * m0 - vk0; // output index of the first cos slot
        while (done < npairs) {
            const std::size_t batch = std::min(kChunk, npairs - done);
            for (std::size_t p = 0; p < batch; p += 8)
                block8(n, u, m0 + std::int64_t(done + p), &w0[p], &w1[p]);
            for (std::size_t t = 0; t < batch; ++t) {
                const double radius = std::sqrt(
                    -2.0 * fm::fast_log(rng::to_unit_open(w0[t])));
                double s, c;
                fm::fast_sincos_2pi(rng::to_unit_open(w1[t]), &s, &c);
                ev[t] = fm::fast_exp(beta * (radius * c) - lambda);
                od[t] = fm::fast_exp(beta * (radius * s) - lambda);
            }
            if (oi >= 0 && oi + 2 * std::int64_t(batch) <= std::int64_t(count)) {
                for (std::size_t t = 0; t < batch; ++t) {
                    out[oi + 2 * std::int64_t(t)] = ev[t];
                    out[oi + 2 * std::int64_t(t) + 1] = od[t];
                }
            } else {
                for (std::size_t t = 0; t < batch; ++t) {
                    const std::int64_t i0 = oi + 2 * std::int64_t(t);
                    if (i0 >= 0 && i0 < std::int64_t(count)) out[i0] = ev[t];
                    const std::int64_t i1 = i0 + 1;
                    if (i1 >= 0 && i1 < std::int64_t(count)) out[i1] = od[t];
                }
            }
            done += batch;
            oi += 2 * std::int64_t(batch);
        }
    }

    void fill_rademacher(std::int64_t n, std::int64_t u, std::int64_t v0,
                         std::size_t count, double beta, double lambda,
                         double* out) const {
        const double up = std::exp(beta - lambda);
        const double dn = std::exp(-beta - lambda);
        const std::int64_t vk0 = floor_div2(v0);
        std::int64_t i = 0;
        while (i < std::int64_t(count)) {
            const std::int64_t vk = vk0 + i;
            const std::int64_t blk = floor_div(vk, 128);
            const std::int64_t off0 = vk - 128 * blk;
            const rng::u128 r = block(n, u, blk);
            const std::int64_t take =
                std::min<std::int64_t>(128 - off0, std::int64_t(count) - i);
            for (std::int64_t t = 0; t < take; ++t) {
                const std::int64_t off = off0 + t;
                const std::uint64_t word = (off < 64) ? r.x0 : r.x1;
                out[i + t] = ((word >> (off & 63)) & 1u) ? up : dn;
            }
            i += take;
        }
    }

    void fill_uniform(std::int64_t n, std::int64_t u, std::int64_t v0,
                      std::size_t count, double beta, double lambda,
                      double* out) const {
        const std::int64_t vk0 = floor_div2(v0);
        for (std::int64_t i = 0; i < std::int64_t(count); ++i) {
            const std::int64_t vk = vk0 + i;
            const std::int64_t m = floor_div2(vk);
            const rng::u128 r = block(n, u, m);
            const std::uint64_t w = (vk - 2 * m == 0) ? r.x0 : r.x1;
            const double om = (2.0 * rng::to_unit_open(w) - 1.0) * kSqrt3;
            out[i] = fm::fast_exp(beta * om - lambda);
        }
    }

    Law law_;
    std::uint64_t key0_, key1_;
};

// Materialized disorder window, regenerable from (seed, replica, window).
struct DisorderField {
    Law law;
    std::uint64_t seed;
    std::uint64_t replica;
    Window window;
    std::vector<double> values; // [n][x1][x2], row-major

    double at(std::int64_t n, std::int64_t x1, std::int64_t x2) const {
        const std::size_t sx1 = std::size_t(window.x1_hi - window.x1_lo + 1);
        const std::size_t sx2 = std::size_t(window.x2_hi - window.x2_lo + 1);
        return values[(std::size_t(n - window.n_lo) * sx1 +
                       std::size_t(x1 - window.x1_lo)) *
                          sx2 +
                      std::size_t(x2 - window.x2_lo)];
    }
};

inline DisorderField sample_field(Law law, const Window& win,
                                  std::uint64_t seed,
                                  std::uint64_t replica = 0,
                                  std::size_t max_values = std::size_t(1)
                                                           << 28) {
    if (win.n_hi < win.n_lo || win.x1_hi < win.x1_lo || win.x2_hi < win.x2_lo)
        throw std::invalid_argument("sample_field: empty window");
    if (win.volume() > max_values)
        throw std::length_error("sample_field: window exceeds memory budget");
    DisorderField f{law, seed, replica, win, {}};
    f.values.reserve(win.volume());
    FieldGen gen(law, seed, replica);
    for (std::int64_t n = win.n_lo; n <= win.n_hi; ++n)
        for (std::int64_t x1 = win.x1_lo; x1 <= win.x1_hi; ++x1)
            for (std::int64_t x2 = win.x2_lo; x2 <= win.x2_hi; ++x2)
                f.values.push_back(gen.omega(n, x1, x2));
    return f;
}

// xi = sigma_N^{-1} (exp(beta*omega - lambda(beta)) - 1), applied pointwise.
inline std::vector<double> xi_transform(const DisorderField& f, double beta) {
    const double lam = log_mgf(f.law, beta);
    const double sig = sigma_N(f.law, beta).value;
    if (!(sig > 0.0)) throw std::domain_error("xi_transform: sigma_N == 0");
    std::vector<double> xi;
    xi.reserve(f.values.size());
    for (double om : f.values)
        xi.push_back(std::expm1(beta * om - lam) / sig);
    return xi;
}

} // namespace disorder
} // namespace polymer
