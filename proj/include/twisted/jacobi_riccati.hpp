#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "model.hpp"
#include "report.hpp"
#include "twisted_coeffs.hpp"

namespace twisted {

// Synthetic potential at the base point: ∇φ(x) as an ambient tangent vector
// and ∇²φ(x) as an n×n matrix in the model's tangent_basis(x).
struct PotentialSpec {
    Vec grad;
    Mat hess;
};

// Per-node scalars along the ray t ↦ F_t(x) = exp_x(-t∇φ(x)).
struct RayScalars {
    std::vector<double> t;
    std::vector<double> det;     // det(dF_t)_x
    std::vector<double> a_nn;    // nn-entry of Y'Y^{-1} in the parallel frame
    std::vector<double> int_a;   // ∫_0^t a_nn
    std::vector<double> h, l, D, Dbar, J;
    std::vector<double> f;       // f(γ(t))
    std::vector<double> fprime;  // d/dt f(γ(t))
    std::vector<double> ric;     // Ric_g(γ'(t))
    std::vector<double> ric1;    // Ric^1_f(γ'(t))
    std::vector<double> speed;   // |γ'(t)|_g
};

struct TransportRay {
    ManifoldModel model;
    Vec x, y;          // base point and F_1(x)
    Vec velocity;      // γ'(0) = -∇φ(x)
    Mat frame;         // ambient × n; last column along the ray
    Mat hess_frame;    // ∇²φ(x) in that frame
    RayScalars s;

    int dim() const { return model.dim(); }
    double length() const { return model.geometry().norm(x, velocity); }
    GeodesicPath path() const { return GeodesicPath(model, x, y); }
};

// Orthonormal frame of T_x with the last vector along `dir` (any frame if dir = 0).
inline Mat ray_frame(const Geometry& g, const Vec& x, const Vec& dir, Mat* coeffs = nullptr) {
    const int n = g.dim();
    Mat E = g.tangent_basis(x);
    Vec c(n);
    for (int i = 0; i < n; ++i) c[i] = g.inner(x, E.col(i), dir);
    Mat Q(n, n);
    if (c.norm() == 0.0) {
        Q.setIdentity();
    } else {
        Q.col(n - 1) = c / c.norm();
        int col = 0;
        for (int k = 0; k < n && col < n - 1; ++k) {
            Vec w = Vec::Unit(n, k);
            w -= Q.col(n - 1).dot(w) * Q.col(n - 1);
            for (int j = 0; j < col; ++j) w -= Q.col(j).dot(w) * Q.col(j);
            if (w.norm() < 1e-8) continue;
            Q.col(col++) = w / w.norm();
        }
    }
    if (coeffs) *coeffs = Q;
    return E * Q;
}

// Rays whose det(dF_t) drops below this are rejected.
inline constexpr double kDetFloor = 1e-10;

// Integrates the Jacobi equation Y'' + K|γ'|² (I - e_n e_nᵀ) Y = 0 in the
// parallel orthonormal frame with Y(0) = I, Y'(0) = -∇²φ, jointly with the
// geodesic and ∫ a_nn.
inline TransportRay propagate_ray(const ManifoldModel& m, const Vec& x, const PotentialSpec& phi, int nodes = 129,
                                  double tol = 1e-12) {
    m.require_statement_dimension();
    if (nodes < 5) throw ConfigurationError("ray grids need at least five nodes");
    const auto& g = m.geometry();
    const int n = m.dim(), amb = g.ambient_dim();
    if (phi.hess.rows() != n || phi.hess.cols() != n) throw InputDomainError("potential Hessian must be n×n");
    Vec v0 = -g.project_tangent(x, phi.grad);
    double d = g.norm(x, v0);
    if (d >= g.safe_radius()) throw DegeneratePairError("transport ray reaches the cut-locus margin");

    Mat Q;
    Mat frame = ray_frame(g, x, v0, &Q);
    Mat Hs = 0.5 * (phi.hess + phi.hess.transpose());
    Mat Hf = Q.transpose() * Hs * Q;

    const int off_u = amb, off_Y = 2 * amb, off_Yp = off_Y + n * n, off_I = off_Yp + n * n;
    State y0(off_I + 1, 0.0);
    for (int i = 0; i < amb; ++i) {
        y0[i] = x[i];
        y0[off_u + i] = v0[i];
    }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            y0[off_Y + i * n + j] = i == j ? 1.0 : 0.0;
            y0[off_Yp + i * n + j] = -Hf(i, j);
        }

    auto rhs = [&](const State& s, State& ds, double) {
        Vec p = Eigen::Map<const Vec>(s.data(), amb);
        Vec u = Eigen::Map<const Vec>(s.data() + off_u, amb);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(s.data() + off_Y, n, n);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Yp(s.data() + off_Yp, n, n);
        Vec acc = g.second_form(p, u, u);
        double k = g.sectional(p) * g.inner(p, u, u);
        for (int i = 0; i < amb; ++i) {
            ds[i] = u[i];
            ds[off_u + i] = acc[i];
        }
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                ds[off_Y + i * n + j] = Yp(i, j);
                ds[off_Yp + i * n + j] = (i == n - 1) ? 0.0 : -k * Y(i, j);
            }
        // a_nn is singular where det Y vanishes; the hypothesis is violated there.
        // Below kDetFloor the log-quantities carry no digits, so reject early.
        auto lu = Y.partialPivLu();
        if (!(lu.determinant() > kDetFloor)) throw RejectedRayError("det(dF_t) <= 0 along the ray");
        Vec w = lu.solve(Vec::Unit(n, n - 1));
        ds[off_I] = Yp.row(n - 1).dot(w);
    };

    std::vector<double> ts = uniform_grid(nodes);
    std::vector<State> out;
    try {
        out = integrate_nodes(rhs, y0, ts, tol, 0.25 / (nodes - 1));
    } catch (const boost::numeric::odeint::odeint_error& e) {
        // step control collapses approaching a focal point
        throw RejectedRayError(std::string("integration stalled along the ray: ") + e.what());
    }

    TransportRay ray{m, x, g.canonical(g.exp(x, v0).point), v0, frame, Hf, {}};
    if (d == 0.0) ray.y = x;
    RayScalars& r = ray.s;
    r.t = ts;
    const double f0 = m.f(x);
    for (int k = 0; k < nodes; ++k) {
        const State& s = out[k];
        Vec p = Eigen::Map<const Vec>(s.data(), amb);
        Vec u = Eigen::Map<const Vec>(s.data() + off_u, amb);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Y(s.data() + off_Y, n, n);
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> Yp(s.data() + off_Yp, n, n);
        double det = Y.determinant();
        if (!(det > 0.0)) throw RejectedRayError("det(dF_t) <= 0 on the ray grid");
        Vec w = Y.partialPivLu().solve(Vec::Unit(n, n - 1));
        double ia = s[off_I];
        double fv = k == 0 ? f0 : m.f(k == nodes - 1 ? ray.y : p);
        r.det.push_back(det);
        r.a_nn.push_back(Yp.row(n - 1).dot(w));
        r.int_a.push_back(ia);
        double h = std::log(det) - ia;
        double l = h - fv + f0;
        r.h.push_back(h);
        r.l.push_back(l);
        r.D.push_back(std::exp(l / (n - 1)));
        r.Dbar.push_back(std::exp(ia));
        r.J.push_back(std::exp(-fv + f0) * det);
        r.f.push_back(fv);
        r.fprime.push_back(m.df(p, u));
        r.ric.push_back((n - 1) * g.sectional(p) * g.inner(p, u, u));
        r.ric1.push_back(m.ric1(p, u));
        r.speed.push_back(g.norm(p, u));
    }
    r.h[0] = r.l[0] = 0.0;
    r.D[0] = r.Dbar[0] = r.J[0] = 1.0;
    return ray;
}

namespace detail {

inline void require_grid(const RayScalars& s) {
    if (s.t.size() < 33) throw ConfigurationError("second differences need at least 33 ray nodes");
}

inline VerificationReport min_margin_report(const char* id, const std::vector<double>& margins, int lo, int hi, double tol) {
    VerificationReport r;
    r.id = id;
    r.tol_analytic = tol;
    r.margin = std::numeric_limits<double>::infinity();
    int at = lo;
    for (int i = lo; i <= hi; ++i)
        if (margins[i] < r.margin) {
            r.margin = margins[i];
            at = i;
        }
    r.details["argmin_node"] = at;
    return r;
}

// Unit-speed curvature hypothesis along the ray nodes. A zero-length ray
// only sees the base point, tested along the frame's first vector.
inline double ray_curvature_margin(const TransportRay& ray, double kappa) {
    const int n = ray.dim();
    const auto& g = ray.model.geometry();
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < ray.s.t.size(); ++k) {
        double sp2 = sqr(ray.s.speed[k]);
        double ric1;
        if (sp2 > 0) {
            ric1 = ray.s.ric1[k] / sp2;
        } else {
            Vec e = ray.frame.col(0);
            ric1 = ray.model.weighted_ricci(ray.x, e / g.norm(ray.x, e), 1.0);
        }
        worst = std::min(worst, ric1 - (n - 1) * kappa * std::exp(-4.0 * ray.s.f[k] / (n - 1)));
    }
    return worst;
}

} // namespace detail

// h'' <= -h'^2/(n-1) - Ric_g(γ') on the open interval.
inline VerificationReport check_riccati_unweighted(const TransportRay& ray) {
    const auto& s = ray.s;
    detail::require_grid(s);
    const int N = static_cast<int>(s.t.size()), n = ray.dim();
    double h = s.t[1] - s.t[0];
    auto d1 = derivative4(s.h, h);
    auto d2 = second_derivative4(s.h, h);
    std::vector<double> m(N);
    double scale = 1.0;
    for (int i = 0; i < N; ++i) {
        m[i] = (-sqr(d1[i]) / (n - 1) - s.ric[i]) - d2[i];
        scale = std::max(scale, std::abs(s.ric[i]));
    }
    auto r = detail::min_margin_report("riccati_unweighted", m, 2, N - 3, 1e-5 * scale);
    return r.decide();
}

// (e^{2f/(n-1)} l')' <= -e^{2f/(n-1)} (l'^2/(n-1) + Ric^1_f(γ')).
inline VerificationReport check_riccati_weighted(const TransportRay& ray) {
    const auto& s = ray.s;
    detail::require_grid(s);
    const int N = static_cast<int>(s.t.size()), n = ray.dim();
    double h = s.t[1] - s.t[0];
    auto d1 = derivative4(s.l, h);
    auto d2 = second_derivative4(s.l, h);
    std::vector<double> m(N);
    double scale = 1.0;
    for (int i = 0; i < N; ++i) {
        double e = std::exp(2.0 * s.f[i] / (n - 1));
        double Lp = e * (d2[i] + 2.0 * s.fprime[i] * d1[i] / (n - 1));
        double rhs = -e * (sqr(d1[i]) / (n - 1) + s.ric1[i]);
        m[i] = rhs - Lp;
        scale = std::max(scale, std::abs(e * s.ric1[i]));
    }
    auto r = detail::min_margin_report("riccati_weighted", m, 2, N - 3, 1e-5 * scale);
    return r.decide();
}

// D(t) >= s_κ(d_{f,1-t}(F_1x,x))/s_κ(d_f) D(0) + s_κ(d_{f,t}(x,F_1x))/s_κ(d_f) D(1).
inline VerificationReport check_D_concavity(const TransportRay& ray, double kappa) {
    VerificationReport r;
    r.id = "d_concavity";
    double cm = detail::ray_curvature_margin(ray, kappa);
    r.details["curvature_margin"] = encode_real(cm);
    if (cm < -1e-9 * (1 + std::abs(kappa))) return r.unmet("curvature bound fails along the ray");
    TwistedCoefficients tc(ray.path(), kappa);
    KappaProfile K(kappa);
    double df = tc.d_f();
    if (df >= K.C()) return r.unmet("d_f reaches C_kappa");
    const auto& s = ray.s;
    const int N = static_cast<int>(s.t.size());
    std::vector<double> m(N);
    for (int i = 1; i < N - 1; ++i) {
        double t = s.t[i];
        double a, b;
        if (df == 0.0) {
            a = 1 - t;
            b = t;
        } else {
            a = K.s(tc.d_ft_reverse(1 - t)) / K.s(df);
            b = K.s(tc.d_ft(t)) / K.s(df);
        }
        m[i] = s.D[i] - (a * s.D.front() + b * s.D.back());
    }
    auto rr = detail::min_margin_report("d_concavity", m, 1, N - 2, 1e-6);
    rr.details = r.details;
    return rr.decide();
}

// D̄(t) >= (1-t) D̄(0) + t D̄(1).
inline VerificationReport check_Dbar_concavity(const TransportRay& ray) {
    const auto& s = ray.s;
    const int N = static_cast<int>(s.t.size());
    std::vector<double> m(N);
    for (int i = 1; i < N - 1; ++i) m[i] = s.Dbar[i] - ((1 - s.t[i]) * s.Dbar.front() + s.t[i] * s.Dbar.back());
    return detail::min_margin_report("dbar_concavity", m, 1, N - 2, 1e-6).decide();
}

// J_t^{1/n} >= (1-t) β̄_{1-t}^{1/n} J_0^{1/n} + t β_t^{1/n} J_1^{1/n}.
inline VerificationReport check_jacobian_inequality(const TransportRay& ray, double kappa) {
    VerificationReport r;
    r.id = "jacobian_inequality";
    double cm = detail::ray_curvature_margin(ray, kappa);
    r.details["curvature_margin"] = encode_real(cm);
    if (cm < -1e-9 * (1 + std::abs(kappa))) return r.unmet("curvature bound fails along the ray");
    TwistedCoefficients tc(ray.path(), kappa);
    if (tc.infinite()) return r.inapplicable("twisted coefficients are infinite");
    const auto& s = ray.s;
    const int N = static_cast<int>(s.t.size()), n = ray.dim();
    std::vector<double> m(N);
    double scale = 0;
    double j0 = std::pow(s.J.front(), 1.0 / n), j1 = std::pow(s.J.back(), 1.0 / n);
    for (int i = 1; i < N - 1; ++i) {
        double t = s.t[i];
        double bb = tc.beta_bar_t(1 - t).pow(1.0 / n).value();
        double b = tc.beta_t(t).pow(1.0 / n).value();
        double lhs = std::pow(s.J[i], 1.0 / n);
        scale = std::max(scale, lhs);
        m[i] = lhs - ((1 - t) * bb * j0 + t * b * j1);
    }
    auto rr = detail::min_margin_report("jacobian_inequality", m, 1, N - 2, 1e-6 * (1 + scale));
    rr.details = r.details;
    return rr.decide();
}

// D'' + κd²D <= 0 on (0,a) implies the sine-type interpolation bound. D is
// sampled on a uniform grid over [0,a]; the bound is tested for node triples.
inline VerificationReport check_comparison_lemma(const std::vector<double>& D, double a, double kappa, double d,
                                                 double tol = 1e-6, int stride = 0) {
    VerificationReport r;
    r.id = "comparison_lemma";
    r.tol_analytic = tol;
    if (D.size() < 33) throw ConfigurationError("comparison lemma needs at least 33 samples");
    if (kappa * d * d * a * a >= kPi * kPi) return r.unmet("kappa d^2 >= pi^2 / a^2");
    const int N = static_cast<int>(D.size());
    double h = a / (N - 1);
    auto d2 = second_derivative4(D, h);
    double premise = -std::numeric_limits<double>::infinity();
    for (int i = 2; i < N - 2; ++i) premise = std::max(premise, d2[i] + kappa * d * d * D[i]);
    r.details["premise_max"] = encode_real(premise);
    if (premise > tol * (1 + std::abs(kappa) * d * d)) return r.inapplicable("D'' + kappa d^2 D <= 0 is not certified on the grid");
    KappaProfile K(kappa);
    if (stride <= 0) stride = std::max(1, (N - 1) / 32);
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < N; i += stride)
        for (int j = i + 2 * stride; j < N; j += stride)
            for (int k = i + stride; k < j; k += stride) {
                double s0 = i * h, s1 = j * h, lam = double(k - i) / double(j - i);
                double L = (s1 - s0) * d;
                double rhs = L == 0 ? D[i] : K.s((1 - lam) * L) / K.s(L) * D[i] + K.s(lam * L) / K.s(L) * D[j];
                worst = std::min(worst, D[k] - rhs);
            }
    r.margin = worst;
    return r.decide();
}

} // namespace twisted
