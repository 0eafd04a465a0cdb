#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "polymer/analytic.hpp"
#include "polymer/disorder.hpp"
#include "polymer/partition.hpp"
#include "polymer/walks.hpp"

// Truncated polynomial chaos evaluation of the partition function, exact
// per-order variances, and the block variances of the time-scale
// decomposition whose sum reproduces the Edwards-Wilkinson variance.

namespace polymer {
namespace chaos {

// Per-order values X_0..X_K of the multilinear expansion, computed by the
// ladder recursion V_{k,n+1} = P V_{k,n} + (m_{n+1} - 1) P V_{k-1,n},
// where m - 1 = sigma_N xi pointwise. X_k sums the k-th ladder at time N.
struct ChaosLadder {
    std::int64_t N;
    int k_max;
    std::vector<double> X; // X[0..k_max]
};

inline ChaosLadder chaos_eval(const disorder::FieldGen& gen, double beta,
                              std::int64_t x1, std::int64_t x2,
                              std::int64_t N, int k_max,
                              const partition::TransferOpts& opts = {}) {
    using partition::detail::natural_range;
    using partition::detail::step_matrix;
    if (k_max < 0) throw std::invalid_argument("chaos_eval: k_max >= 0");
    const double lambda = disorder::log_mgf(gen.law(), beta);
    const std::int64_t u0 = x1 + x2, v0 = x1 - x2;

    std::vector<std::vector<double>> V(static_cast<std::size_t>(k_max) + 1),
        stepped(static_cast<std::size_t>(k_max) + 1);
    for (auto& m : V) m.assign(1, 0.0);
    V[0][0] = 1.0;
    std::vector<double> tmp, mult;
    std::int64_t lo = 0, hi = 0;

    for (std::int64_t n = 1; n <= N; ++n) {
        const std::int64_t r = opts.window_radius(n, N);
        std::int64_t nlo, nhi;
        natural_range(n, r, &nlo, &nhi);
        for (int k = 0; k <= k_max; ++k)
            step_matrix(V[static_cast<std::size_t>(k)], lo, hi, tmp,
                        stepped[static_cast<std::size_t>(k)], nlo, nhi);
        lo = nlo;
        hi = nhi;
        const std::int64_t w = hi - lo + 1;
        mult.resize(static_cast<std::size_t>(w));
        // V_k = P V_k + (m - 1) .* P V_{k-1}, rows filled once per slice
        for (std::int64_t i = 0; i < w; ++i) {
            const std::int64_t I = lo + i;
            const std::int64_t u = u0 + 2 * I - n;
            const std::int64_t v_first = v0 + 2 * lo - n;
            gen.fill_multipliers(n, u, v_first, static_cast<std::size_t>(w),
                                 beta, lambda, mult.data());
            for (int k = k_max; k >= 0; --k) {
                double* dst = &stepped[static_cast<std::size_t>(k)]
                                      [static_cast<std::size_t>(i) * w];
                if (k > 0) {
                    const double* low = &stepped[static_cast<std::size_t>(k - 1)]
                                                [static_cast<std::size_t>(i) * w];
                    for (std::int64_t j = 0; j < w; ++j)
                        dst[j] += (mult[j] - 1.0) * low[j];
                }
            }
        }
        for (int k = 0; k <= k_max; ++k)
            V[static_cast<std::size_t>(k)].swap(
                stepped[static_cast<std::size_t>(k)]);
    }

    ChaosLadder out;
    out.N = N;
    out.k_max = k_max;
    out.X.resize(static_cast<std::size_t>(k_max) + 1);
    for (int k = 0; k <= k_max; ++k)
        out.X[static_cast<std::size_t>(k)] = partition::detail::matrix_sum(
            V[static_cast<std::size_t>(k)], V[static_cast<std::size_t>(k)].size());
    return out;
}

// Exact E[X_k^2] = sigma_N^{2k} sum over ordered k-tuples of return
// probabilities, via the 1D prefix DP f_j(m) = sum_{l<m} f_{j-1}(l) q_{2(m-l)}(0).
inline double order_variance_exact(std::int64_t N, disorder::Law law,
                                   double beta, int k) {
    if (k < 1) throw std::invalid_argument("order_variance_exact: k >= 1");
    const std::vector<double> q = walks::return_probabilities(N);
    std::vector<double> f(static_cast<std::size_t>(N) + 1, 0.0);
    for (std::int64_t m = 1; m <= N; ++m) f[static_cast<std::size_t>(m)] = q[static_cast<std::size_t>(m)];
    for (int j = 2; j <= k; ++j) {
        std::vector<double> g(static_cast<std::size_t>(N) + 1, 0.0);
        for (std::int64_t m = 2; m <= N; ++m) {
            fm::KahanSum acc;
            for (std::int64_t l = j - 1; l < m; ++l)
                acc.add(f[static_cast<std::size_t>(l)] *
                        q[static_cast<std::size_t>(m - l)]);
            g[static_cast<std::size_t>(m)] = acc.value();
        }
        f.swap(g);
    }
    fm::KahanSum total;
    for (std::int64_t m = 1; m <= N; ++m) total.add(f[static_cast<std::size_t>(m)]);
    const double s2 = disorder::sigma_N(law, beta).value;
    return std::pow(s2 * s2, k) * total.value();
}

// E[(Z - sum_{k<=K} X_k)^2] = E[Z^2] - 1 - sum_{k<=K} E[X_k^2], clipped at 0.
// E[Z^2] defaults to the overlap MGF at gamma = lambda(2b) - 2 lambda(b).
inline double residual_L2(std::int64_t N, disorder::Law law, double beta,
                          int K, double ez2 = -1.0) {
    if (ez2 < 0.0) {
        const double gamma =
            disorder::log_mgf(law, 2.0 * beta) - 2.0 * disorder::log_mgf(law, beta);
        ez2 = walks::overlap_mgf_exact(N, gamma);
    }
    double res = ez2 - 1.0;
    for (int k = 1; k <= K; ++k) res -= order_variance_exact(N, law, beta, k);
    if (res < -1e-9) return 0.0; // orthogonality forbids this; clip
    return std::max(0.0, res);
}

// ---------------------------------------------------------------------
// Time-scale blocks: intervals I_i = (N^{(i-1)/M}, N^{i/M}], index tuples
// with pairwise gaps >= 2, and the exact variance of the space-averaged
// block statistic.

struct ThetaBlockSpec {
    int M;
    std::vector<int> indices; // (i_1 ... i_k)
    bool dominated;           // i_1 strictly above the rest

    static ThetaBlockSpec make(int M, std::vector<int> idx) {
        if (M < 1) throw std::invalid_argument("ThetaBlockSpec: M >= 1");
        if (idx.empty()) throw std::invalid_argument("ThetaBlockSpec: k >= 1");
        for (std::size_t a = 0; a < idx.size(); ++a) {
            if (idx[a] < 1 || idx[a] > M)
                throw std::invalid_argument("ThetaBlockSpec: index range");
            for (std::size_t b = a + 1; b < idx.size(); ++b)
                if (std::abs(idx[a] - idx[b]) < 2)
                    throw std::invalid_argument(
                        "ThetaBlockSpec: indices need pairwise gaps >= 2");
        }
        ThetaBlockSpec s;
        s.M = M;
        s.indices = std::move(idx);
        s.dominated = true;
        for (std::size_t a = 1; a < s.indices.size(); ++a)
            if (s.indices[a] >= s.indices[0]) s.dominated = false;
        return s;
    }
};

// Interval boundaries: I_i covers integers floor(N^{(i-1)/M})+1 ... floor(N^{i/M}).
inline void interval_bounds(std::int64_t N, int M, int i, std::int64_t* lo,
                            std::int64_t* hi) {
    const double logN = std::log(double(N));
    const double a = std::exp(logN * double(i - 1) / double(M));
    const double b = std::exp(logN * double(i) / double(M));
    *lo = static_cast<std::int64_t>(std::floor(a + 1e-9)) + 1;
    *hi = std::min<std::int64_t>(N, static_cast<std::int64_t>(std::floor(b + 1e-9)));
}

// Interval sums r_i = sum_{dn in I_i} q_{2 dn}(0).
inline std::vector<double> interval_return_sums(std::int64_t N, int M) {
    const std::vector<double> q = walks::return_probabilities(N);
    std::vector<double> r(static_cast<std::size_t>(M) + 1, 0.0);
    for (int i = 1; i <= M; ++i) {
        std::int64_t lo, hi;
        interval_bounds(N, M, i, &lo, &hi);
        fm::KahanSum s;
        for (std::int64_t m = lo; m <= hi; ++m)
            if (m >= 1 && m <= N) s.add(q[static_cast<std::size_t>(m)]);
        r[static_cast<std::size_t>(i)] = s.value();
    }
    return r;
}

// Kernel pairing curve: curve[n] = (1/N^2) sum_{x,y} phi(x/sqrt N)
// phi(y/sqrt N) q_{2n}(x - y) = ||Q^n phi_N||^2 / N^2, by evolving the
// grid-sampled test function with the one-step walk operator.
inline std::vector<double> kernel_pairing_curve(std::int64_t N,
                                                const analytic::TestFunction& phi,
                                                const partition::TransferOpts& opts = {}) {
    using partition::detail::ClassGrid;
    const double sqrtN = std::sqrt(double(N));
    const std::int64_t L =
        static_cast<std::int64_t>(std::floor(phi.support_radius() * sqrtN));
    const std::int64_t Ulo = -2 * L, Uhi = 2 * L, Vlo = -2 * L, Vhi = 2 * L;

    auto growth = [&](std::int64_t n) { return opts.window_radius(n, N); };
    const std::int64_t rmax = growth(N);

    ClassGrid cls[2], nxt[2];
    for (int c = 0; c < 2; ++c) {
        cls[c].plo = static_cast<std::int64_t>(std::floor((double(Ulo - rmax) - c) / 2.0));
        cls[c].phi = static_cast<std::int64_t>(std::floor((double(Uhi + rmax) - c) / 2.0));
        cls[c].qlo = static_cast<std::int64_t>(std::floor((double(Vlo - rmax) - c) / 2.0));
        cls[c].qhi = static_cast<std::int64_t>(std::floor((double(Vhi + rmax) - c) / 2.0));
        cls[c].alloc_fill(0.0);
        nxt[c] = cls[c];
        nxt[c].alloc_fill(0.0);
    }
    // plant phi on lattice sites: site (y1, y2) -> class by parity of u
    for (int c = 0; c < 2; ++c) {
        ClassGrid& g = cls[c];
        for (std::int64_t p = g.plo; p <= g.phi; ++p) {
            double* row = g.row(p);
            for (std::int64_t q = g.qlo; q <= g.qhi; ++q) {
                const std::int64_t u = 2 * p + c, v = 2 * q + c;
                const std::int64_t y1_2 = u + v, y2_2 = u - v; // 2*y
                row[q - g.qlo] =
                    phi(double(y1_2) / (2.0 * sqrtN), double(y2_2) / (2.0 * sqrtN));
            }
        }
    }

    std::vector<double> curve(static_cast<std::size_t>(N) + 1, 0.0);
    {
        fm::KahanSum s0;
        for (int c = 0; c < 2; ++c)
            for (double v : cls[c].a) s0.add(v * v);
        curve[0] = s0.value() / (double(N) * double(N));
    }
    std::vector<double> tmp;
    for (std::int64_t n = 1; n <= N; ++n) {
        // only the window reachable in n steps from the support is active
        const std::int64_t rn = growth(n);
        for (int c = 0; c < 2; ++c) {
            ClassGrid& dst = nxt[c];
            const ClassGrid& src = cls[1 - c];
            const std::int64_t plo_n = std::max(
                dst.plo, static_cast<std::int64_t>(
                             std::floor((double(Ulo - rn) - c) / 2.0)));
            const std::int64_t phi_n = std::min(
                dst.phi, static_cast<std::int64_t>(
                             std::floor((double(Uhi + rn) - c) / 2.0)));
            const std::int64_t qlo_n = std::max(
                dst.qlo, static_cast<std::int64_t>(
                             std::floor((double(Vlo - rn) - c) / 2.0)));
            const std::int64_t qhi_n = std::min(
                dst.qhi, static_cast<std::int64_t>(
                             std::floor((double(Vhi + rn) - c) / 2.0)));
            const std::int64_t off = (c == 0) ? -1 : 0;
            const std::int64_t qw_s = src.qw();
            tmp.resize(static_cast<std::size_t>(qw_s));
            fm::KahanSum s;
            for (std::int64_t p = plo_n; p <= phi_n; ++p) {
                const std::int64_t pa = p + off, pb = pa + 1;
                const double* ra =
                    (pa >= src.plo && pa <= src.phi) ? src.row(pa) : nullptr;
                const double* rb =
                    (pb >= src.plo && pb <= src.phi) ? src.row(pb) : nullptr;
                if (ra && rb) {
                    for (std::int64_t j = 0; j < qw_s; ++j)
                        tmp[static_cast<std::size_t>(j)] = ra[j] + rb[j];
                } else if (ra) {
                    for (std::int64_t j = 0; j < qw_s; ++j)
                        tmp[static_cast<std::size_t>(j)] = ra[j];
                } else if (rb) {
                    for (std::int64_t j = 0; j < qw_s; ++j)
                        tmp[static_cast<std::size_t>(j)] = rb[j];
                } else {
                    std::fill(tmp.begin(), tmp.end(), 0.0);
                }
                double* d = dst.row(p);
                double racc = 0.0;
                for (std::int64_t q = qlo_n; q <= qhi_n; ++q) {
                    const std::int64_t qa = q + off - src.qlo;
                    const std::int64_t qb = qa + 1;
                    double acc = 0.0;
                    if (qa >= 0 && qa < qw_s) acc += tmp[static_cast<std::size_t>(qa)];
                    if (qb >= 0 && qb < qw_s) acc += tmp[static_cast<std::size_t>(qb)];
                    const double val = 0.25 * acc;
                    d[q - dst.qlo] = val;
                    racc += val * val;
                }
                s.add(racc);
            }
            curve[static_cast<std::size_t>(n)] += s.value();
        }
        for (int c = 0; c < 2; ++c) cls[c].a.swap(nxt[c].a);
        curve[static_cast<std::size_t>(n)] /= double(N) * double(N);
    }
    return curve;
}

// Var of the space-averaged block statistic: the outer pairing factor over
// n_1 in I_{i_1} times the normalized product of interval return sums for
// the remaining increments.
inline double theta_block_variance(std::int64_t N, const ThetaBlockSpec& spec,
                                   const std::vector<double>& pairing_curve,
                                   const std::vector<double>& interval_sums,
                                   double R_N) {
    const int k = static_cast<int>(spec.indices.size());
    std::int64_t lo, hi;
    interval_bounds(N, spec.M, spec.indices[0], &lo, &hi);
    fm::KahanSum outer;
    for (std::int64_t n = std::max<std::int64_t>(lo, 1); n <= hi; ++n)
        outer.add(pairing_curve[static_cast<std::size_t>(n)]);
    double inner = 1.0;
    for (int j = 1; j < k; ++j)
        inner *= (double(spec.M) / R_N) *
                 interval_sums[static_cast<std::size_t>(spec.indices[static_cast<std::size_t>(j)])];
    return outer.value() * inner;
}

// Number of tuples in {1..M}^k with pairwise gaps >= 2 and i_1 = M.
inline std::int64_t dominated_top_tuple_count(int M, int k) {
    std::vector<int> chosen{M};
    std::function<std::int64_t(int)> rec = [&](int depth) -> std::int64_t {
        if (depth == k) return 1;
        std::int64_t total = 0;
        for (int i = 1; i <= M; ++i) {
            bool ok = true;
            for (int c : chosen)
                if (std::abs(c - i) < 2) ok = false;
            if (!ok) continue;
            chosen.push_back(i);
            total += rec(depth + 1);
            chosen.pop_back();
        }
        return total;
    };
    return rec(1);
}

struct EwChaosPrediction {
    double value = 0.0;             // assembled finite-N variance
    double matched_analytic = 0.0;  // same truncation, blocks at their limits
    int k_used = 0;
};

// Finite-N assembly of the Edwards-Wilkinson pairing variance from the
// dominated blocks with the leading index at the top scale:
//   sum_k (bh^2/M)^{k-1} sum_{tuples} Var[Theta_tuple].
// matched_analytic replaces each block variance by its limit 2 sigma_phi^2.
inline EwChaosPrediction ew_variance_prediction_via_chaos(
    std::int64_t N, double beta_hat, int M, const analytic::TestFunction& phi,
    double sigma_phi_limit, const std::vector<double>& pairing_curve,
    int k_cap = 4) {
    if (M < 3) throw std::invalid_argument("ew_variance_prediction: M >= 3");
    const double R_N = walks::expected_overlap(N);
    const std::vector<double> rsums = interval_return_sums(N, M);

    EwChaosPrediction out;
    std::vector<int> chosen{M};
    double weight = 1.0; // (bh^2 / M)^{k-1}
    for (int k = 1; k <= k_cap; ++k) {
        if (k > 1) weight *= beta_hat * beta_hat / double(M);
        // enumerate tuples (M, i_2..i_k) with pairwise gaps >= 2
        std::function<void(int)> rec = [&](int depth) {
            if (depth == k) {
                const ThetaBlockSpec spec =
                    ThetaBlockSpec::make(M, chosen);
                out.value += weight * theta_block_variance(N, spec,
                                                           pairing_curve,
                                                           rsums, R_N);
                out.matched_analytic += weight * 2.0 * sigma_phi_limit;
                return;
            }
            for (int i = 1; i <= M; ++i) {
                bool ok = true;
                for (int c : chosen)
                    if (std::abs(c - i) < 2) ok = false;
                if (!ok) continue;
                chosen.push_back(i);
                rec(depth + 1);
                chosen.pop_back();
            }
        };
        std::int64_t cnt = dominated_top_tuple_count(M, k);
        if (cnt == 0) break;
        rec(1);
        out.k_used = k;
    }
    return out;
}

} // namespace chaos
} // namespace polymer
