#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>

#include "errors.hpp"

namespace twisted {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using State = std::vector<double>;

constexpr double kPi = 3.14159265358979323846;

inline double sqr(double x) { return x * x; }

inline std::vector<double> uniform_grid(int nodes, double a = 0.0, double b = 1.0) {
    if (nodes < 2) throw ConfigurationError("grid needs at least two nodes");
    std::vector<double> g(nodes);
    for (int i = 0; i < nodes; ++i) g[i] = a + (b - a) * double(i) / double(nodes - 1);
    g.back() = b;
    return g;
}

// Dormand-Prince 5(4) with step control, landing exactly on every requested
// time. hmax caps the step so that the global error varies smoothly between
// nodes, which keeps finite differences of the output clean.
template <class Rhs>
std::vector<State> integrate_nodes(Rhs&& rhs, State y0, const std::vector<double>& times,
                                   double tol = 1e-12, double hmax = 0.0) {
    namespace ode = boost::numeric::odeint;
    using Stepper = ode::runge_kutta_dopri5<State>;
    if (hmax <= 0.0) hmax = std::abs(times.back() - times.front());
    auto stepper = ode::make_controlled(tol, tol, hmax, Stepper());
    std::vector<State> out;
    out.reserve(times.size());
    double dt0 = std::min(hmax, std::abs(times.back() - times.front()) / 64.0);
    if (dt0 <= 0.0) dt0 = 1e-3;
    auto sys = [&](const State& y, State& dy, double t) { rhs(y, dy, t); };
    ode::integrate_times(stepper, sys, y0, times.begin(), times.end(), dt0,
                         [&](const State& y, double) { out.push_back(y); },
                         ode::max_step_checker(1000000));
    return out;
}

// Adaptive Gauss-Kronrod (15-point) to an absolute tolerance. The relative
// target is floored at 1e-13, below which rounding dominates the error estimate.
template <class F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-10) {
    if (a == b) return 0.0;
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    double first = GK::integrate(f, a, b, 0);
    double rel = std::max(1e-13, abs_tol / std::max(std::abs(first), 1e-300));
    if (rel >= 1.0) return first;
    return GK::integrate(f, a, b, 15, rel);
}

// Fixed 20-point Gauss-Legendre rule; exact to rounding for smooth integrands
// on short intervals.
template <class F>
double integrate_fixed(F&& f, double a, double b) {
    if (a == b) return 0.0;
    return boost::math::quadrature::gauss<double, 20>::integrate(f, a, b);
}

// Fourth-order finite-difference first derivative on a uniform grid; the two
// nodes at each end use one-sided fourth-order stencils.
inline std::vector<double> derivative4(const std::vector<double>& f, double h) {
    const int n = static_cast<int>(f.size());
    if (n < 5) throw ConfigurationError("derivative stencil needs five nodes");
    std::vector<double> d(n);
    for (int i = 2; i < n - 2; ++i) d[i] = (-f[i + 2] + 8 * f[i + 1] - 8 * f[i - 1] + f[i - 2]) / (12 * h);
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * h);
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * h);
    d[n - 1] = (25 * f[n - 1] - 48 * f[n - 2] + 36 * f[n - 3] - 16 * f[n - 4] + 3 * f[n - 5]) / (12 * h);
    d[n - 2] = (3 * f[n - 1] + 10 * f[n - 2] - 18 * f[n - 3] + 6 * f[n - 4] - f[n - 5]) / (12 * h);
    return d;
}

// Fourth-order central second derivative; NaN on the two nodes at each end.
inline std::vector<double> second_derivative4(const std::vector<double>& f, double h) {
    const int n = static_cast<int>(f.size());
    std::vector<double> d(n, std::numeric_limits<double>::quiet_NaN());
    for (int i = 2; i < n - 2; ++i)
        d[i] = (-f[i + 2] + 16 * f[i + 1] - 30 * f[i] + 16 * f[i - 1] - f[i - 2]) / (12 * h * h);
    return d;
}

struct PolyFit {
    Vec coeffs;        // ascending powers
    double condition;  // 2-norm condition number of the design matrix
};

inline PolyFit polyfit(const std::vector<double>& x, const std::vector<double>& y, int degree) {
    const int m = static_cast<int>(x.size());
    if (m <= degree) throw ConfigurationError("polynomial fit needs more samples than coefficients");
    // Abscissae scaled to [-1, 1]; the condition number refers to the scaled basis.
    double scale = 0.0;
    for (double v : x) scale = std::max(scale, std::abs(v));
    if (scale == 0.0) scale = 1.0;
    Mat V(m, degree + 1);
    Vec b(m);
    for (int i = 0; i < m; ++i) {
        double p = 1.0;
        for (int k = 0; k <= degree; ++k, p *= x[i] / scale) V(i, k) = p;
        b[i] = y[i];
    }
    Eigen::JacobiSVD<Mat> svd(V, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const auto& s = svd.singularValues();
    double cond = s[s.size() - 1] > 0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
    Vec c = svd.solve(b);
    double p = 1.0;
    for (int k = 0; k <= degree; ++k, p *= scale) c[k] /= p;
    return {c, cond};
}

// Richardson table for samples at h, h/2, h/4 of Q(h) = Q0 + c1 h + c2 h^2 + ...
struct Extrapolation {
    double value;      // second-level estimate
    double first;      // first-level estimate from the two finest samples
    double spread;     // |value - first|
};

inline Extrapolation richardson3(double q_h, double q_h2, double q_h4) {
    double r1a = 2 * q_h2 - q_h;
    double r1b = 2 * q_h4 - q_h2;
    double r2 = (4 * r1b - r1a) / 3.0;
    return {r2, r1b, std::abs(r2 - r1b)};
}

} // namespace twisted
