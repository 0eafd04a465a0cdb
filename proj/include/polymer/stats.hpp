#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "polymer/fastmath.hpp"

// Estimators with standard errors, the Kolmogorov-Smirnov distance,
// trend reports, a deterministic replica runner, and the stretched
// exponential left-tail fit. Every estimate carries an SE; replica
// outputs are a pure function of (plan, replica index), so the runner is
// scheduling independent by construction.

namespace polymer {
namespace stats {

struct EstimatorResult {
    double estimate = 0.0;
    double std_error = 0.0;
    std::int64_t n = 0;
};

inline EstimatorResult mean_se(const std::vector<double>& xs) {
    const std::int64_t n = static_cast<std::int64_t>(xs.size());
    if (n == 0) return {0.0, 0.0, 0};
    fm::KahanSum s;
    for (double x : xs) s.add(x);
    const double m = s.value() / double(n);
    if (n == 1) return {m, 0.0, 1};
    fm::KahanSum q;
    for (double x : xs) q.add((x - m) * (x - m));
    const double var = q.value() / double(n - 1);
    return {m, std::sqrt(var / double(n)), n};
}

// Sample variance with a moment-based standard error
// SE^2 = (m4 - (n-3)/(n-1) s^4) / n.
inline EstimatorResult variance_se(const std::vector<double>& xs) {
    const std::int64_t n = static_cast<std::int64_t>(xs.size());
    if (n < 2) return {0.0, 0.0, n};
    fm::KahanSum s;
    for (double x : xs) s.add(x);
    const double m = s.value() / double(n);
    fm::KahanSum q2, q4;
    for (double x : xs) {
        const double d = (x - m) * (x - m);
        q2.add(d);
        q4.add(d * d);
    }
    const double s2 = q2.value() / double(n - 1);
    const double m4 = q4.value() / double(n);
    const double v = std::max(0.0, m4 - (double(n - 3) / double(n - 1)) * s2 * s2);
    return {s2, std::sqrt(v / double(n)), n};
}

// Pearson correlation with SE ~ (1 - r^2)/sqrt(n).
inline EstimatorResult correlation_se(const std::vector<double>& a,
                                      const std::vector<double>& b) {
    const std::int64_t n = static_cast<std::int64_t>(a.size());
    if (n < 3 || b.size() != a.size())
        throw std::invalid_argument("correlation_se: need equal sizes >= 3");
    const double ma = mean_se(a).estimate, mb = mean_se(b).estimate;
    fm::KahanSum sab, saa, sbb;
    for (std::int64_t i = 0; i < n; ++i) {
        sab.add((a[i] - ma) * (b[i] - mb));
        saa.add((a[i] - ma) * (a[i] - ma));
        sbb.add((b[i] - mb) * (b[i] - mb));
    }
    const double r = sab.value() / std::sqrt(saa.value() * sbb.value());
    return {r, (1.0 - r * r) / std::sqrt(double(n)), n};
}

inline double normal_cdf(double x, double mu = 0.0, double sigma = 1.0) {
    return 0.5 * std::erfc(-(x - mu) / (sigma * 1.4142135623730951));
}

inline double exponential_cdf(double x) {
    return x <= 0.0 ? 0.0 : -std::expm1(-x);
}

// Sup-distance between the empirical CDF of `samples` and `cdf`.
inline double ks_distance(std::vector<double> samples,
                          const std::function<double(double)>& cdf) {
    const std::size_t n = samples.size();
    if (n == 0) throw std::invalid_argument("ks_distance: empty sample");
    std::sort(samples.begin(), samples.end());
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double F = cdf(samples[i]);
        d = std::max(d, std::fabs(F - double(i + 1) / double(n)));
        d = std::max(d, std::fabs(F - double(i) / double(n)));
    }
    return d;
}

struct TrendReport {
    std::vector<std::int64_t> Ns;
    std::vector<double> values;
    std::vector<double> ses;
    bool strictly_decreasing = false;
    std::vector<double> slopes; // per-step differences

    static TrendReport make(std::vector<std::int64_t> Ns,
                            std::vector<double> values,
                            std::vector<double> ses = {}) {
        TrendReport t;
        t.Ns = std::move(Ns);
        t.values = std::move(values);
        t.ses = std::move(ses);
        t.strictly_decreasing = t.values.size() >= 2;
        for (std::size_t i = 1; i < t.values.size(); ++i) {
            t.slopes.push_back(t.values[i] - t.values[i - 1]);
            if (!(t.values[i] < t.values[i - 1])) t.strictly_decreasing = false;
        }
        return t;
    }
};

// Run f(replica) for replica in [0, n_replicas) on a small thread pool.
// Results must be written into per-replica slots by the caller's closure;
// the work distribution cannot affect any output value.
inline void parallel_replicas(std::int64_t n_replicas, int n_workers,
                              const std::function<void(std::int64_t)>& f) {
    if (n_replicas <= 0) return;
    n_workers = std::max(1, n_workers);
    if (n_workers == 1) {
        for (std::int64_t i = 0; i < n_replicas; ++i) f(i);
        return;
    }
    std::atomic<std::int64_t> next(0);
    std::vector<std::thread> pool;
    std::exception_ptr err = nullptr;
    std::mutex err_mu;
    for (int t = 0; t < n_workers; ++t) {
        pool.emplace_back([&]() {
            for (;;) {
                const std::int64_t i = next.fetch_add(1);
                if (i >= n_replicas) return;
                try {
                    f(i);
                } catch (...) {
                    std::lock_guard<std::mutex> g(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------
// Left-tail envelope: fit P(log Z <= -t) ~ c exp(-t^g / c) by least
// squares on log-exceedances, restricted to t with at least `min_count`
// exceedances.

struct TailFit {
    double c = 1.0;
    double g = 1.0;          // fitted exponent
    std::vector<double> ts;  // fitted grid
    std::vector<double> emp; // empirical exceedance
    bool under_envelope = true; // all points <= 1.5 x fitted curve
    double worst_ratio = 0.0;
};

inline TailFit fit_left_tail(const std::vector<double>& log_z,
                             double t_step = 0.1, int min_count = 20) {
    const std::int64_t n = static_cast<std::int64_t>(log_z.size());
    if (n < 100) throw std::invalid_argument("fit_left_tail: need >= 100");
    TailFit fit;
    for (double t = 0.0;; t += t_step) {
        std::int64_t count = 0;
        for (double v : log_z) count += (v <= -t);
        if (count < min_count) break;
        fit.ts.push_back(t);
        fit.emp.push_back(double(count) / double(n));
        if (fit.ts.size() > 400) break;
    }
    if (fit.ts.size() < 3)
        throw std::runtime_error("fit_left_tail: not enough tail points");

    auto sse = [&](double c, double g) {
        double acc = 0.0;
        for (std::size_t i = 0; i < fit.ts.size(); ++i) {
            const double model = std::log(c) - std::pow(fit.ts[i], g) / c;
            const double d = std::log(fit.emp[i]) - model;
            acc += d * d;
        }
        return acc;
    };

    double best = 1e300;
    for (int gi = 0; gi <= 120; ++gi) {
        const double g = 1.005 + gi * 0.025;
        for (int ci = 0; ci <= 120; ++ci) {
            const double c = std::exp(-2.5 + ci * 0.05);
            const double v = sse(c, g);
            if (v < best) {
                best = v;
                fit.c = c;
                fit.g = g;
            }
        }
    }
    // local refinement
    double step_c = fit.c * 0.05, step_g = 0.0125;
    for (int it = 0; it < 60; ++it) {
        bool moved = false;
        for (int dc = -1; dc <= 1; ++dc)
            for (int dg = -1; dg <= 1; ++dg) {
                if (!dc && !dg) continue;
                const double c = fit.c + dc * step_c;
                const double g = fit.g + dg * step_g;
                if (c <= 0.0 || g <= 1.0) continue;
                const double v = sse(c, g);
                if (v < best) {
                    best = v;
                    fit.c = c;
                    fit.g = g;
                    moved = true;
                }
            }
        if (!moved) {
            step_c *= 0.5;
            step_g *= 0.5;
        }
    }

    fit.worst_ratio = 0.0;
    for (std::size_t i = 0; i < fit.ts.size(); ++i) {
        const double env = fit.c * std::exp(-std::pow(fit.ts[i], fit.g) / fit.c);
        fit.worst_ratio = std::max(fit.worst_ratio, fit.emp[i] / env);
    }
    fit.under_envelope = fit.worst_ratio <= 1.5;
    return fit;
}

} // namespace stats
} // namespace polymer
