#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "polymer/fastmath.hpp"
#include "polymer/rng.hpp"

// Analytic limit objects: the one-point log-normal parameters, the additive
// heat-equation noise strength, the covariance kernel K_t (an exponential
// integral), test-function quadrature for sigma_phi^2, and samplers for the
// limiting Gaussian laws.

namespace polymer {
namespace analytic {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEulerGamma = 0.57721566490153286061;

// Exponential integral E1(x) = int_x^inf e^-z / z dz, x > 0.
// Series for x <= 1, modified Lentz continued fraction for x > 1.
inline double expint_E1(double x) {
    if (!(x > 0.0)) throw std::domain_error("expint_E1: x must be > 0");
    if (x <= 1.0) {
        double term = 1.0;
        double sum = 0.0;
        for (int k = 1; k < 40; ++k) {
            term *= -x / k;
            const double add = -term / k; // (-1)^{k+1} x^k / (k k!)
            sum += add;
            if (std::fabs(add) < 1e-18 * (std::fabs(sum) + 1e-300)) break;
        }
        return -kEulerGamma - std::log(x) + sum;
    }
    if (x > 700.0) return 0.0;
    // E1(x) = e^{-x} / (x + 1 - 1/(x + 3 - 4/(x + 5 - 9/(...))))
    const double tiny = 1e-300;
    double b = x + 1.0;
    double c = 1.0 / tiny;
    double d = 1.0 / b;
    double h = d;
    for (int i = 1; i <= 200; ++i) {
        const double a = -double(i) * double(i);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        if (c == 0.0) c = tiny;
        const double del = c * d;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    return h * std::exp(-x);
}

// Covariance kernel K_t(d) = (1/4pi) E1(d^2 / 4t) of the additive SHE
// pairing; logarithmically singular at d = 0.
inline double kernel_K(double t, double d) {
    if (!(t > 0.0)) throw std::domain_error("kernel_K: t must be > 0");
    if (d < 0.0) throw std::domain_error("kernel_K: d must be >= 0");
    if (d == 0.0) return std::numeric_limits<double>::infinity();
    const double arg = d * d / (4.0 * t);
    if (arg > 700.0) return 0.0;
    return expint_E1(arg) / (4.0 * kPi);
}

// Heat kernel g_t(x), covariance t*I per coordinate pair.
inline double heat_kernel(double t, double r2) {
    return std::exp(-r2 / (2.0 * t)) / (2.0 * kPi * t);
}

// Test functions phi: a truncated Gaussian bump (g_s cut at 6 sqrt(s),
// which enables the closed-form quadrature oracle) or a compactly
// supported smooth bump.
struct TestFunction {
    enum class Kind { gaussian_bump, compact_bump };
    Kind kind;
    double param; // scale s for gaussian_bump, radius R for compact_bump

    static TestFunction gaussian(double s) {
        if (!(s > 0.0)) throw std::invalid_argument("TestFunction: s > 0");
        return {Kind::gaussian_bump, s};
    }
    static TestFunction bump(double R) {
        if (!(R > 0.0)) throw std::invalid_argument("TestFunction: R > 0");
        return {Kind::compact_bump, R};
    }

    double support_radius() const {
        return kind == Kind::gaussian_bump ? 6.0 * std::sqrt(param) : param;
    }

    // Gaussian mass outside the truncation radius (zero for the bump).
    double truncated_tail_mass() const {
        return kind == Kind::gaussian_bump ? std::exp(-18.0) : 0.0;
    }

    double operator()(double x, double y) const {
        const double r2 = x * x + y * y;
        if (kind == Kind::gaussian_bump) {
            const double R = support_radius();
            if (r2 >= R * R) return 0.0;
            return heat_kernel(param, r2);
        }
        const double R2 = param * param;
        if (r2 >= R2) return 0.0;
        return std::exp(1.0 - 1.0 / (1.0 - r2 / R2));
    }

    std::string describe() const {
        return (kind == Kind::gaussian_bump ? "gauss:" : "bump:") +
               std::to_string(param);
    }
};

// Riemann sum of |phi| on a midpoint grid; must be stable under h -> h/2.
inline double grid_l1_norm(const TestFunction& phi, double h) {
    const double L = phi.support_radius();
    const long m = static_cast<long>(std::ceil(L / h));
    fm::KahanSum s;
    for (long i = -m; i < m; ++i)
        for (long j = -m; j < m; ++j)
            s.add(std::fabs(phi((i + 0.5) * h, (j + 0.5) * h)));
    return s.value() * h * h;
}

namespace detail {

// Integral of K_t over a disc of radius R around the singularity:
// 2pi int_0^R K_t(rho) rho drho, with
// int_0^R E1(a rho^2) rho drho = [R^2 E1(aR^2) + (1 - e^{-aR^2})/a] / 2.
inline double kernel_disc_integral(double t, double R) {
    const double a = 1.0 / (4.0 * t);
    const double aR2 = a * R * R;
    return 0.25 * (R * R * expint_E1(aR2) + -std::expm1(-aR2) / a);
}

inline double sigma_phi_sq_grid(const TestFunction& phi, double t, double h) {
    const double L = phi.support_radius();
    const long m = static_cast<long>(std::ceil(L / h));
    const long G = 2 * m; // grid points per axis, centers (i+0.5)h, i in [-m, m)
    std::vector<double> w(static_cast<std::size_t>(G) * G);
    for (long i = 0; i < G; ++i)
        for (long j = 0; j < G; ++j)
            w[static_cast<std::size_t>(i) * G + j] =
                phi((i - m + 0.5) * h, (j - m + 0.5) * h);

    // Kernel value per offset; diagonal cell replaced by its exact average
    // over the equal-area disc.
    std::vector<double> K(static_cast<std::size_t>(G) * G);
    for (long di = 0; di < G; ++di)
        for (long dj = 0; dj < G; ++dj) {
            if (di == 0 && dj == 0) continue;
            const double d = h * std::sqrt(double(di) * di + double(dj) * dj);
            K[static_cast<std::size_t>(di) * G + dj] = kernel_K(t, d);
        }
    const double R0 = h / std::sqrt(kPi);
    K[0] = kernel_disc_integral(t, R0) / (h * h);

    // sum_{i,j} w_i w_j K(i-j) h^4, folding the offset symmetry.
    fm::KahanSum total;
    // zero offset
    {
        double s = 0.0;
        for (double v : w) s += v * v;
        total.add(s * K[0]);
    }
    // offsets (di, dj) != (0,0): accumulate correlation sums
    for (long di = 0; di < G; ++di) {
        for (long dj = (di == 0 ? 1 : -G + 1); dj < G; ++dj) {
            // each unordered offset pair counted once; x2 multiplicity
            double s = 0.0;
            const long ilo = std::max(0L, -di), ihi = G - std::max(0L, di);
            const long jlo = std::max(0L, -dj), jhi = G - std::max(0L, dj);
            for (long i = ilo; i < ihi; ++i) {
                const double* a = &w[static_cast<std::size_t>(i) * G];
                const double* b = &w[static_cast<std::size_t>(i + di) * G + dj];
                for (long j = jlo; j < jhi; ++j) s += a[j] * b[j];
            }
            const long adi = std::labs(di), adj = std::labs(dj);
            total.add(2.0 * s * K[static_cast<std::size_t>(adi) * G + adj]);
        }
    }
    return total.value() * h * h * h * h;
}

} // namespace detail

// sigma_phi^2(t) = <phi, K_t phi> by midpoint quadrature with a
// singularity-corrected diagonal cell. Refines h -> h/2 once and fails if
// the two estimates disagree by more than 1e-3 relative.
inline double sigma_phi_sq(const TestFunction& phi, double t,
                           double h = -1.0) {
    if (!(t > 0.0)) throw std::domain_error("sigma_phi_sq: t must be > 0");
    if (h <= 0.0) {
        h = 0.1;
        if (phi.kind == TestFunction::Kind::gaussian_bump)
            h = std::min(0.1, std::sqrt(phi.param) / 10.0);
        else
            h = std::min(0.1, phi.param / 40.0);
    }
    const double coarse = detail::sigma_phi_sq_grid(phi, t, h);
    const double fine = detail::sigma_phi_sq_grid(phi, t, 0.5 * h);
    if (std::fabs(fine - coarse) >
        1e-3 * std::max(std::fabs(fine), 1e-300))
        throw std::runtime_error("sigma_phi_sq: quadrature did not converge");
    return fine;
}

// Closed form for phi = g_s (untruncated): (1/4pi) log(1 + t/s).
inline double sigma_phi_sq_heat_oracle(double s, double t) {
    return std::log1p(t / s) / (4.0 * kPi);
}

enum class Target { kpz, polymer };

struct PredictionSet {
    double beta_hat;
    double sigma_hat_sq;          // log 1/(1 - bh^2)
    double c_hat;                 // sqrt(1/(1 - bh^2))
    double sigma_phi_sq;          // <phi, K_t phi> at the target's t
    double predicted_variance;    // pairing variance of the limit field
    double phi_tail_mass;
    double t_kernel;              // t used inside K_t
    std::string phi_spec;
};

// Limit predictions for the averaged fluctuation field at t = 1.
// polymer: Var = 2 c^2 sigma_phi^2(K_{1/2});  kpz: Var = c^2 sigma_phi^2(K_1).
inline PredictionSet predict(double beta_hat, const TestFunction& phi,
                             Target target) {
    if (!(beta_hat > 0.0 && beta_hat < 1.0))
        throw std::domain_error("predict: requires beta_hat in (0,1)");
    PredictionSet p;
    p.beta_hat = beta_hat;
    const double om = 1.0 - beta_hat * beta_hat;
    p.sigma_hat_sq = std::log(1.0 / om);
    p.c_hat = std::sqrt(1.0 / om);
    p.t_kernel = (target == Target::polymer) ? 0.5 : 1.0;
    p.sigma_phi_sq = sigma_phi_sq(phi, p.t_kernel);
    const double mult = (target == Target::polymer) ? 2.0 : 1.0;
    p.predicted_variance = mult * p.c_hat * p.c_hat * p.sigma_phi_sq;
    p.phi_tail_mass = phi.truncated_tail_mass();
    p.phi_spec = phi.describe();
    return p;
}

// One draw of the one-point limit sigma Z - sigma^2/2; exp of it has mean 1.
inline double sample_one_point_limit(double beta_hat, rng::Sequence& seq) {
    if (!(beta_hat >= 0.0 && beta_hat < 1.0))
        throw std::domain_error("sample_one_point_limit: beta_hat in [0,1)");
    const double s2 = std::log(1.0 / (1.0 - beta_hat * beta_hat));
    return std::sqrt(s2) * seq.next_normal() - 0.5 * s2;
}

// One draw of <v^{(c)}(t, .), phi>: centered Gaussian, variance c^2 sigma_phi^2.
inline double sample_limit_pairing(double c, double t, const TestFunction& phi,
                                   rng::Sequence& seq) {
    const double var = c * c * sigma_phi_sq(phi, t);
    return std::sqrt(var) * seq.next_normal();
}

} // namespace analytic
} // namespace polymer
