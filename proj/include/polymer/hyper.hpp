#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "polymer/disorder.hpp"
#include "polymer/rng.hpp"

// Numerical determination of the optimal hypercontractivity constant c_p:
// the smallest c >= 1 with ||a + xi/c||_p <= ||a + xi||_2 for all real a,
// together with a direct check of the moment bound
// E|sum X_k|^p <= (sum c_p^{2k} E[X_k^2])^{p/2} on small multilinear
// instances.

namespace polymer {
namespace hyper {

namespace detail {

// Adaptive Simpson on [lo, hi].
inline double adaptive_simpson(const std::function<double(double)>& f,
                               double lo, double hi, double tol, int depth,
                               double flo, double fmid, double fhi) {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    const double two = left + right;
    if (depth <= 0 || std::fabs(two - whole) < 15.0 * tol)
        return two + (two - whole) / 15.0;
    return adaptive_simpson(f, lo, mid, 0.5 * tol, depth - 1, flo, flm, fmid) +
           adaptive_simpson(f, mid, hi, 0.5 * tol, depth - 1, fmid, frm, fhi);
}

inline double integrate(const std::function<double(double)>& f, double lo,
                        double hi, double tol) {
    if (hi <= lo) return 0.0;
    const double mid = 0.5 * (lo + hi);
    return adaptive_simpson(f, lo, hi, tol, 48, f(lo), f(mid), f(hi));
}

} // namespace detail

// E|a + s*xi|^p for xi distributed by `law` (mean 0, variance 1).
inline double abs_moment(disorder::Law law, double a, double s, double p) {
    using disorder::Law;
    const double as = std::fabs(s);
    switch (law) {
        case Law::rademacher:
            return 0.5 * std::pow(std::fabs(a + as), p) +
                   0.5 * std::pow(std::fabs(a - as), p);
        case Law::uniform: {
            // density 1/(2 sqrt 3) on [-sqrt3, sqrt3]; antiderivative of
            // |y|^p is sign(y) |y|^{p+1} / (p+1).
            const double w = as * disorder::kSqrt3;
            auto F = [p](double y) {
                return (y >= 0 ? 1.0 : -1.0) * std::pow(std::fabs(y), p + 1.0) /
                       (p + 1.0);
            };
            return (F(a + w) - F(a - w)) / (2.0 * w);
        }
        case Law::gaussian: {
            // integrate |a + s z|^p phi(z) dz, splitting at the kink.
            const double kink = (as > 0.0) ? -a / as : 0.0;
            const double zmax = 13.0;
            auto f = [&](double z) {
                return std::pow(std::fabs(a + as * z), p) *
                       std::exp(-0.5 * z * z) * 0.39894228040143267794;
            };
            const double scale =
                std::pow(std::fabs(a) + as * zmax, p) + 1e-12;
            const double tol = 1e-13 * scale;
            double total = 0.0;
            if (kink > -zmax && kink < zmax) {
                total += detail::integrate(f, -zmax, kink, tol);
                total += detail::integrate(f, kink, zmax, tol);
            } else {
                total += detail::integrate(f, -zmax, zmax, tol);
            }
            return total;
        }
    }
    return 0.0;
}

// ||a + s*xi||_p
inline double lp_norm(disorder::Law law, double a, double s, double p) {
    return std::pow(abs_moment(law, a, s, p), 1.0 / p);
}

struct HoldsReport {
    bool holds;
    double worst_margin; // min over the grid of ||a+xi||_2 - ||a+xi/c||_p
    double worst_a;
    bool asymptotic_ok;  // (p-1)/c^2 <= 1
};

// Check (2, p, 1/c)-hypercontractivity of the law on a symmetric a-grid,
// plus the exact large-|a| criterion (p-1)/c^2 <= 1 coming from the
// second-order expansion of the norm ratio.
inline HoldsReport hyper_holds(disorder::Law law, double c, double p,
                               double a_range = 20.0, int a_steps = 801) {
    if (!(c >= 1.0)) throw std::domain_error("hyper_holds: c >= 1");
    if (!(p > 2.0)) throw std::domain_error("hyper_holds: p > 2");
    HoldsReport rep;
    rep.asymptotic_ok = (p - 1.0) <= c * c * (1.0 + 1e-12);
    rep.worst_margin = std::numeric_limits<double>::infinity();
    rep.worst_a = 0.0;
    for (int i = 0; i < a_steps; ++i) {
        const double a = -a_range + 2.0 * a_range * i / (a_steps - 1);
        const double lhs = lp_norm(law, a, 1.0 / c, p);
        const double rhs = std::sqrt(a * a + 1.0);
        const double margin = rhs - lhs;
        if (margin < rep.worst_margin) {
            rep.worst_margin = margin;
            rep.worst_a = a;
        }
    }
    rep.holds = rep.asymptotic_ok && rep.worst_margin >= -1e-11;
    return rep;
}

struct HyperEstimate {
    disorder::Law law;
    double p;
    double c_p;
    double a_range;
    int a_steps;
    double worst_margin; // margin at the returned c_p
};

// Bisection for c_p = inf{c >= 1 : hyper_holds}. The lower bracket fails
// and the upper holds before refinement starts.
inline HyperEstimate estimate_cp(disorder::Law law, double p,
                                 double tol = 1e-4, double a_range = 20.0,
                                 int a_steps = 801) {
    if (!(p > 2.0)) throw std::domain_error("estimate_cp: p > 2");
    double lo = 1.0;
    if (hyper_holds(law, lo, p, a_range, a_steps).holds)
        return {law, p, lo, a_range, a_steps,
                hyper_holds(law, lo, p, a_range, a_steps).worst_margin};
    double hi = 2.0;
    while (!hyper_holds(law, hi, p, a_range, a_steps).holds) {
        hi *= 2.0;
        if (hi > 64.0) throw std::runtime_error("estimate_cp: no upper bracket");
    }
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (hyper_holds(law, mid, p, a_range, a_steps).holds)
            hi = mid;
        else
            lo = mid;
    }
    HyperEstimate est{law, p, hi, a_range, a_steps, 0.0};
    est.worst_margin = hyper_holds(law, hi, p, a_range, a_steps).worst_margin;
    return est;
}

// A random sparse multilinear polynomial of degree <= 3 over n_vars
// Rademacher variables.
struct MultilinearInstance {
    int n_vars;
    // term = (coefficient, variable index bitmask)
    std::vector<std::pair<double, std::uint32_t>> terms;
};

inline MultilinearInstance random_instance(int n_vars, rng::Sequence& seq) {
    if (n_vars > 12) throw std::invalid_argument("random_instance: <= 12 vars");
    MultilinearInstance inst;
    inst.n_vars = n_vars;
    const int per_degree = 6;
    for (int k = 1; k <= 3; ++k) {
        for (int t = 0; t < per_degree; ++t) {
            std::uint32_t mask = 0;
            bool fresh = false;
            while (!fresh) {
                mask = 0;
                while (static_cast<int>(__builtin_popcount(mask)) < k)
                    mask |= 1u << (seq.next_u64() % n_vars);
                fresh = true;
                // distinct subsets keep the per-order second moments a plain
                // sum of squared coefficients
                for (const auto& term : inst.terms)
                    if (term.second == mask) fresh = false;
            }
            const double coef = 2.0 * seq.next_unit() - 1.0;
            inst.terms.emplace_back(coef, mask);
        }
    }
    return inst;
}

struct MomentBoundReport {
    int n_instances;
    int n_satisfied;
    double worst_ratio; // max over instances of LHS / RHS (<= 1 means pass)
};

// Exact verification of the moment bound on Rademacher instances: the
// p-th moment is enumerated over all 2^n sign patterns, the second moments
// per degree are exact by orthogonality.
inline MomentBoundReport verify_moment_bound(disorder::Law law, double p,
                                             double c_p, int n_instances,
                                             std::uint64_t seed) {
    if (law != disorder::Law::rademacher)
        throw std::invalid_argument(
            "verify_moment_bound: exact enumeration requires rademacher");
    rng::Sequence seq(rng::stream_key(seed, rng::Stream::coefficients), 7);
    MomentBoundReport rep{n_instances, 0, 0.0};
    for (int inst_i = 0; inst_i < n_instances; ++inst_i) {
        const MultilinearInstance inst = random_instance(12, seq);
        const int n = inst.n_vars;
        const std::uint32_t total = 1u << n;
        double acc = 0.0;
        for (std::uint32_t sgn = 0; sgn < total; ++sgn) {
            double x = 0.0;
            for (const auto& [coef, mask] : inst.terms) {
                const int par = __builtin_popcount(sgn & mask) & 1;
                x += par ? -coef : coef;
            }
            acc += std::pow(std::fabs(x), p);
        }
        const double lhs = acc / total;
        double rhs_inner = 0.0;
        for (const auto& [coef, mask] : inst.terms) {
            const int k = __builtin_popcount(mask);
            rhs_inner += std::pow(c_p, 2.0 * k) * coef * coef;
        }
        const double rhs = std::pow(rhs_inner, 0.5 * p);
        const double ratio = (rhs > 0.0) ? lhs / rhs : (lhs > 0.0 ? 2.0 : 0.0);
        if (ratio <= 1.0 + 1e-10) ++rep.n_satisfied;
        if (ratio > rep.worst_ratio) rep.worst_ratio = ratio;
    }
    return rep;
}

} // namespace hyper
} // namespace polymer
