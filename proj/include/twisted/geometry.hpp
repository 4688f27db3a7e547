#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "numerics.hpp"

namespace twisted {

enum class ModelKind { euclidean, sphere, hyperbolic, circle, flat_torus, surface_of_revolution };

inline const char* to_string(ModelKind k) {
    switch (k) {
    case ModelKind::euclidean: return "euclidean";
    case ModelKind::sphere: return "sphere";
    case ModelKind::hyperbolic: return "hyperbolic";
    case ModelKind::circle: return "circle";
    case ModelKind::flat_torus: return "flat_torus";
    case ModelKind::surface_of_revolution: return "surface_of_revolution";
    }
    return "?";
}

struct ChartAxis {
    double lo, hi;
    bool periodic;
};

// Point and velocity at the end of a geodesic segment.
struct GeodesicState {
    Vec point, velocity;
};

// Unweighted Riemannian geometry in ambient coordinates. Every catalog model
// has isotropic sectional curvature K(x), so Ric_g(v) = (n-1) K(x) g(v,v).
class Geometry {
public:
    virtual ~Geometry() = default;

    virtual ModelKind kind() const = 0;
    virtual int dim() const = 0;
    virtual int ambient_dim() const = 0;
    virtual nlohmann::json params() const = 0;

    virtual double inner(const Vec&, const Vec& u, const Vec& v) const { return u.dot(v); }
    double norm(const Vec& x, const Vec& v) const { return std::sqrt(std::max(0.0, inner(x, v, v))); }

    // ambient_dim × dim, g-orthonormal columns spanning T_x.
    virtual Mat tangent_basis(const Vec& x) const = 0;
    virtual Vec project_tangent(const Vec& x, const Vec& v) const {
        Mat E = tangent_basis(x);
        Vec w = Vec::Zero(ambient_dim());
        for (int i = 0; i < dim(); ++i) w += inner(x, E.col(i), v) * E.col(i);
        return w;
    }

    // Acceleration term of the geodesic equation x'' = II(x', x'); also the
    // ambient correction of the covariant Hessian.
    virtual Vec second_form(const Vec& x, const Vec&, const Vec&) const { return Vec::Zero(x.size()); }

    virtual double sectional(const Vec& x) const = 0;
    virtual double max_sectional() const = 0;

    virtual GeodesicState exp(const Vec& x, const Vec& v) const = 0;
    virtual std::vector<GeodesicState> geodesic_states(const Vec& x, const Vec& v, const std::vector<double>& ts) const {
        std::vector<GeodesicState> out;
        out.reserve(ts.size());
        for (double t : ts) {
            auto s = exp(x, t * v);
            if (t != 0.0) s.velocity /= t;
            else s.velocity = v;
            out.push_back(s);
        }
        return out;
    }

    // Initial velocity of the unique minimal geodesic on [0,1]; throws
    // DegeneratePairError within the safety margin of the cut locus.
    virtual Vec log(const Vec& x, const Vec& y) const = 0;
    virtual double distance(const Vec& x, const Vec& y) const = 0;

    // Largest length for which geodesics from any point are accepted.
    virtual double safe_radius() const { return std::numeric_limits<double>::infinity(); }

    virtual bool compact() const = 0;
    virtual double volume() const { return std::numeric_limits<double>::infinity(); }
    virtual Vec base_point() const { return Vec::Zero(ambient_dim()); }
    virtual Vec canonical(const Vec& x) const { return x; }
    virtual double manifold_residual(const Vec&) const { return 0.0; }

    // Chart with dim() coordinates; non-compact models use [-r, r]^n boxes.
    virtual std::vector<ChartAxis> chart_axes() const = 0;
    virtual Vec from_chart(const Vec& q) const = 0;
    virtual Vec to_chart(const Vec& x) const = 0;
    virtual double volume_density(const Vec& q) const = 0;

    virtual Vec sample_point(std::mt19937_64& rng) const = 0;

    Vec sample_unit_tangent(const Vec& x, std::mt19937_64& rng) const {
        std::normal_distribution<double> g;
        Mat E = tangent_basis(x);
        Vec c(dim());
        do {
            for (int i = 0; i < dim(); ++i) c[i] = g(rng);
        } while (c.norm() < 1e-8);
        return E * (c / c.norm());
    }

    // Chart metric from finite differences of the embedding; used to check
    // positive definiteness.
    Mat chart_metric(const Vec& q) const {
        const int n = dim();
        Mat J(ambient_dim(), n);
        for (int i = 0; i < n; ++i) {
            Vec a = q, b = q;
            double h = 1e-6 * (1 + std::abs(q[i]));
            a[i] += h;
            b[i] -= h;
            J.col(i) = (from_chart(a) - from_chart(b)) / (2 * h);
        }
        Vec x = from_chart(q);
        Mat G(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) G(i, j) = inner(x, J.col(i), J.col(j));
        return G;
    }

};

using GeometryPtr = std::shared_ptr<const Geometry>;

// R^n -------------------------------------------------------------------

class Euclidean final : public Geometry {
public:
    explicit Euclidean(int n, double sample_radius = 1.0) : n_(n), r_(sample_radius) {
        if (n < 1) throw InputDomainError("euclidean dimension must be positive");
    }
    ModelKind kind() const override { return ModelKind::euclidean; }
    int dim() const override { return n_; }
    int ambient_dim() const override { return n_; }
    nlohmann::json params() const override { return {{"n", n_}, {"sample_radius", r_}}; }
    Mat tangent_basis(const Vec&) const override { return Mat::Identity(n_, n_); }
    Vec project_tangent(const Vec&, const Vec& v) const override { return v; }
    double sectional(const Vec&) const override { return 0.0; }
    double max_sectional() const override { return 0.0; }
    GeodesicState exp(const Vec& x, const Vec& v) const override { return {x + v, v}; }
    Vec log(const Vec& x, const Vec& y) const override { return y - x; }
    double distance(const Vec& x, const Vec& y) const override { return (y - x).norm(); }
    bool compact() const override { return false; }
    std::vector<ChartAxis> chart_axes() const override { return std::vector<ChartAxis>(n_, {-r_, r_, false}); }
    Vec from_chart(const Vec& q) const override { return q; }
    Vec to_chart(const Vec& x) const override { return x; }
    double volume_density(const Vec&) const override { return 1.0; }
    Vec sample_point(std::mt19937_64& rng) const override {
        std::normal_distribution<double> g;
        std::uniform_real_distribution<double> u;
        Vec v(n_);
        for (int i = 0; i < n_; ++i) v[i] = g(rng);
        return v / v.norm() * r_ * std::pow(u(rng), 1.0 / n_);
    }
    double sample_radius() const { return r_; }

private:
    int n_;
    double r_;
};

// Round sphere of radius R in R^{n+1}; north pole R·e_{n+1}. --------------

class Sphere final : public Geometry {
public:
    Sphere(int n, double radius, double cut_margin = 1e-4) : n_(n), R_(radius), margin_(cut_margin * radius) {
        if (n < 1 || !(radius > 0)) throw InputDomainError("sphere needs n >= 1 and radius > 0");
    }
    ModelKind kind() const override { return ModelKind::sphere; }
    int dim() const override { return n_; }
    int ambient_dim() const override { return n_ + 1; }
    nlohmann::json params() const override { return {{"n", n_}, {"radius", R_}}; }
    double radius() const { return R_; }

    Mat tangent_basis(const Vec& x) const override {
        Vec nrm = x / x.norm();
        Mat E(n_ + 1, n_);
        int col = 0;
        // Skip the coordinate axis most aligned with the normal.
        Eigen::Index skip;
        nrm.cwiseAbs().maxCoeff(&skip);
        for (int k = 0; k <= n_ && col < n_; ++k) {
            if (k == skip) continue;
            Vec v = Vec::Unit(n_ + 1, k);
            v -= nrm.dot(v) * nrm;
            for (int j = 0; j < col; ++j) v -= E.col(j).dot(v) * E.col(j);
            E.col(col++) = v / v.norm();
        }
        return E;
    }
    Vec project_tangent(const Vec& x, const Vec& v) const override { return v - x.dot(v) / x.squaredNorm() * x; }
    Vec second_form(const Vec& x, const Vec& u, const Vec& v) const override { return -(u.dot(v) / (R_ * R_)) * x; }
    double sectional(const Vec&) const override { return 1.0 / (R_ * R_); }
    double max_sectional() const override { return 1.0 / (R_ * R_); }

    GeodesicState exp(const Vec& x, const Vec& v) const override {
        double s = v.norm();
        if (s == 0.0) return {x, v};
        double a = s / R_;
        Vec p = std::cos(a) * x + (R_ * std::sin(a) / s) * v;
        Vec w = -(s * std::sin(a) / R_) * x + std::cos(a) * v;
        return {p, w};
    }
    double angle(const Vec& x, const Vec& y) const {
        return 2.0 * std::atan2((x - y).norm(), (x + y).norm());
    }
    Vec log(const Vec& x, const Vec& y) const override {
        double th = angle(x, y);
        if (R_ * th > safe_radius())
            throw DegeneratePairError("sphere pair within the cut-locus margin (near antipodal)");
        if (th == 0.0) return Vec::Zero(n_ + 1);
        Vec w = y - (x.dot(y) / (R_ * R_)) * x;
        return (R_ * th / w.norm()) * w;
    }
    double distance(const Vec& x, const Vec& y) const override { return R_ * angle(x, y); }
    double safe_radius() const override { return kPi * R_ - margin_; }
    bool compact() const override { return true; }
    double volume() const override {
        // |S^n_R| = 2 π^{(n+1)/2} R^n / Γ((n+1)/2)
        return 2.0 * std::pow(kPi, 0.5 * (n_ + 1)) * std::pow(R_, n_) / std::tgamma(0.5 * (n_ + 1));
    }
    Vec base_point() const override { return R_ * Vec::Unit(n_ + 1, n_); }
    Vec canonical(const Vec& x) const override { return R_ * x / x.norm(); }
    double manifold_residual(const Vec& x) const override { return std::abs(x.norm() - R_); }

    // (θ_1, ..., θ_{n-1}, φ): θ_1 is the polar angle from the north pole.
    std::vector<ChartAxis> chart_axes() const override {
        std::vector<ChartAxis> ax(n_, {0.0, kPi, false});
        ax.back() = {0.0, 2 * kPi, true};
        return ax;
    }
    Vec from_chart(const Vec& q) const override {
        Vec x(n_ + 1);
        double r = R_;
        int idx = n_;
        for (int k = 0; k < n_ - 1; ++k) {
            x[idx--] = r * std::cos(q[k]);
            r *= std::sin(q[k]);
        }
        x[1] = r * std::sin(q[n_ - 1]);
        x[0] = r * std::cos(q[n_ - 1]);
        return x;
    }
    Vec to_chart(const Vec& x) const override {
        Vec q(n_);
        int idx = n_;
        for (int k = 0; k < n_ - 1; ++k) {
            double rest = x.head(idx).norm();
            q[k] = std::atan2(rest, x[idx]);
            --idx;
        }
        double phi = std::atan2(x[1], x[0]);
        q[n_ - 1] = phi < 0 ? phi + 2 * kPi : phi;
        return q;
    }
    double volume_density(const Vec& q) const override {
        double d = std::pow(R_, n_);
        for (int k = 0; k < n_ - 1; ++k) d *= std::pow(std::sin(q[k]), n_ - 1 - k);
        return d;
    }
    Vec sample_point(std::mt19937_64& rng) const override {
        std::normal_distribution<double> g;
        Vec v(n_ + 1);
        for (int i = 0; i <= n_; ++i) v[i] = g(rng);
        return R_ * v / v.norm();
    }

private:
    int n_;
    double R_, margin_;
};

// Hyperboloid model {<x,x>_L = -s^2, x_0 > 0}, sectional curvature -1/s^2. --

class Hyperbolic final : public Geometry {
public:
    Hyperbolic(int n, double scale, double sample_radius = 1.0) : n_(n), s_(scale), r_(sample_radius) {
        if (n < 1 || !(scale > 0)) throw InputDomainError("hyperbolic needs n >= 1 and scale > 0");
    }
    ModelKind kind() const override { return ModelKind::hyperbolic; }
    int dim() const override { return n_; }
    int ambient_dim() const override { return n_ + 1; }
    nlohmann::json params() const override { return {{"n", n_}, {"curvature_scale", s_}, {"sample_radius", r_}}; }

    static double lorentz(const Vec& u, const Vec& v) { return -u[0] * v[0] + u.tail(u.size() - 1).dot(v.tail(v.size() - 1)); }
    double inner(const Vec&, const Vec& u, const Vec& v) const override { return lorentz(u, v); }

    Mat tangent_basis(const Vec& x) const override {
        Mat E(n_ + 1, n_);
        for (int k = 0; k < n_; ++k) {
            Vec v = Vec::Unit(n_ + 1, k + 1);
            v += (lorentz(v, x) / (s_ * s_)) * x;
            for (int j = 0; j < k; ++j) v -= lorentz(E.col(j), v) * E.col(j);
            E.col(k) = v / std::sqrt(lorentz(v, v));
        }
        return E;
    }
    Vec project_tangent(const Vec& x, const Vec& v) const override { return v + (lorentz(v, x) / (s_ * s_)) * x; }
    Vec second_form(const Vec& x, const Vec& u, const Vec& v) const override { return (lorentz(u, v) / (s_ * s_)) * x; }
    double sectional(const Vec&) const override { return -1.0 / (s_ * s_); }
    double max_sectional() const override { return -1.0 / (s_ * s_); }

    GeodesicState exp(const Vec& x, const Vec& v) const override {
        double sp = std::sqrt(std::max(0.0, lorentz(v, v)));
        if (sp == 0.0) return {x, v};
        double a = sp / s_;
        Vec p = std::cosh(a) * x + (s_ * std::sinh(a) / sp) * v;
        Vec w = (sp * std::sinh(a) / s_) * x + std::cosh(a) * v;
        return {p, w};
    }
    double distance(const Vec& x, const Vec& y) const override {
        Vec d = y - x;
        double c = std::sqrt(std::max(0.0, lorentz(d, d)));
        return 2.0 * s_ * std::asinh(c / (2.0 * s_));
    }
    Vec log(const Vec& x, const Vec& y) const override {
        double d = distance(x, y);
        if (d == 0.0) return Vec::Zero(n_ + 1);
        Vec w = y + (lorentz(x, y) / (s_ * s_)) * x;
        return (d / std::sqrt(std::max(1e-300, lorentz(w, w)))) * w;
    }
    bool compact() const override { return false; }
    Vec base_point() const override { return s_ * Vec::Unit(n_ + 1, 0); }
    Vec canonical(const Vec& x) const override { return from_chart(x.tail(n_)); }
    double manifold_residual(const Vec& x) const override { return std::abs(lorentz(x, x) + s_ * s_) / s_; }

    std::vector<ChartAxis> chart_axes() const override { return std::vector<ChartAxis>(n_, {-r_, r_, false}); }
    Vec from_chart(const Vec& q) const override {
        Vec x(n_ + 1);
        x[0] = std::sqrt(s_ * s_ + q.squaredNorm());
        x.tail(n_) = q;
        return x;
    }
    Vec to_chart(const Vec& x) const override { return x.tail(n_); }
    double volume_density(const Vec& q) const override { return s_ / std::sqrt(s_ * s_ + q.squaredNorm()); }
    Vec sample_point(std::mt19937_64& rng) const override {
        std::normal_distribution<double> g;
        std::uniform_real_distribution<double> u;
        Vec v(n_);
        for (int i = 0; i < n_; ++i) v[i] = g(rng);
        return from_chart(v / v.norm() * r_ * std::pow(u(rng), 1.0 / n_));
    }

private:
    int n_;
    double s_, r_;
};

// Flat torus R^n / (L_1 Z × ... × L_n Z); the circle is the n = 1 case. ---

class FlatTorus final : public Geometry {
public:
    FlatTorus(std::vector<double> periods, double cut_margin = 1e-4, bool circle = false)
        : L_(std::move(periods)), margin_(cut_margin), circle_(circle) {
        if (L_.empty()) throw InputDomainError("torus needs at least one period");
        for (double l : L_)
            if (!(l > 0)) throw InputDomainError("torus periods must be positive");
    }
    ModelKind kind() const override { return circle_ ? ModelKind::circle : ModelKind::flat_torus; }
    int dim() const override { return static_cast<int>(L_.size()); }
    int ambient_dim() const override { return dim(); }
    nlohmann::json params() const override {
        if (circle_) return {{"length", L_[0]}};
        return {{"n", dim()}, {"periods", L_}};
    }
    const std::vector<double>& periods() const { return L_; }

    Mat tangent_basis(const Vec&) const override { return Mat::Identity(dim(), dim()); }
    Vec project_tangent(const Vec&, const Vec& v) const override { return v; }
    double sectional(const Vec&) const override { return 0.0; }
    double max_sectional() const override { return 0.0; }
    GeodesicState exp(const Vec& x, const Vec& v) const override { return {x + v, v}; }

    Vec displacement(const Vec& x, const Vec& y) const {
        Vec d = y - x;
        for (int i = 0; i < dim(); ++i) d[i] -= L_[i] * std::round(d[i] / L_[i]);
        return d;
    }
    Vec log(const Vec& x, const Vec& y) const override {
        Vec d = displacement(x, y);
        for (int i = 0; i < dim(); ++i)
            if (std::abs(d[i]) > 0.5 * L_[i] - margin_ * L_[i])
                throw DegeneratePairError("torus pair within the cut-locus margin");
        return d;
    }
    double distance(const Vec& x, const Vec& y) const override { return displacement(x, y).norm(); }
    double safe_radius() const override {
        double m = L_[0];
        for (double l : L_) m = std::min(m, l);
        return 0.5 * m * (1 - 2 * margin_);
    }
    bool compact() const override { return true; }
    double volume() const override {
        double v = 1;
        for (double l : L_) v *= l;
        return v;
    }
    Vec canonical(const Vec& x) const override {
        Vec y = x;
        for (int i = 0; i < dim(); ++i) {
            y[i] = std::fmod(y[i], L_[i]);
            if (y[i] < 0) y[i] += L_[i];
        }
        return y;
    }
    std::vector<ChartAxis> chart_axes() const override {
        std::vector<ChartAxis> ax;
        for (double l : L_) ax.push_back({0.0, l, true});
        return ax;
    }
    Vec from_chart(const Vec& q) const override { return q; }
    Vec to_chart(const Vec& x) const override { return canonical(x); }
    double volume_density(const Vec&) const override { return 1.0; }
    Vec sample_point(std::mt19937_64& rng) const override {
        std::uniform_real_distribution<double> u;
        Vec v(dim());
        for (int i = 0; i < dim(); ++i) v[i] = L_[i] * u(rng);
        return v;
    }

private:
    std::vector<double> L_;
    double margin_;
    bool circle_;
};

// Spheroid ρ²/a² + z²/c² = 1 in R^3 (surface of revolution of an ellipse).
// Geodesics are integrated; minimal ones are found by shooting inside the
// injectivity radius π/√Kmax.
class Spheroid final : public Geometry {
public:
    Spheroid(double a, double c, double cut_margin = 1e-3) : a_(a), c_(c), margin_(cut_margin) {
        if (!(a > 0 && c > 0)) throw InputDomainError("spheroid semi-axes must be positive");
    }
    ModelKind kind() const override { return ModelKind::surface_of_revolution; }
    int dim() const override { return 2; }
    int ambient_dim() const override { return 3; }
    nlohmann::json params() const override { return {{"profile", "spheroid"}, {"a", a_}, {"c", c_}}; }

    Vec grad_F(const Vec& x) const { return Vec((Eigen::Vector3d() << 2 * x[0] / (a_ * a_), 2 * x[1] / (a_ * a_), 2 * x[2] / (c_ * c_)).finished()); }
    double hess_F(const Vec& u, const Vec& v) const {
        return 2 * (u[0] * v[0] + u[1] * v[1]) / (a_ * a_) + 2 * u[2] * v[2] / (c_ * c_);
    }

    Mat tangent_basis(const Vec& x) const override {
        Vec nrm = grad_F(x).normalized();
        Mat E(3, 2);
        Eigen::Index skip;
        nrm.cwiseAbs().maxCoeff(&skip);
        int col = 0;
        for (int k = 0; k < 3 && col < 2; ++k) {
            if (k == skip) continue;
            Vec v = Vec::Unit(3, k);
            v -= nrm.dot(v) * nrm;
            if (col == 1) v -= E.col(0).dot(v) * E.col(0);
            E.col(col++) = v.normalized();
        }
        return E;
    }
    Vec project_tangent(const Vec& x, const Vec& v) const override {
        Vec nrm = grad_F(x).normalized();
        return v - nrm.dot(v) * nrm;
    }
    Vec second_form(const Vec& x, const Vec& u, const Vec& v) const override {
        Vec g = grad_F(x);
        return -(hess_F(u, v) / g.squaredNorm()) * g;
    }
    double sectional(const Vec& x) const override {
        double q = (x[0] * x[0] + x[1] * x[1]) / std::pow(a_, 4) + x[2] * x[2] / std::pow(c_, 4);
        return 1.0 / (std::pow(a_, 4) * c_ * c_ * q * q);
    }
    double max_sectional() const override { return std::max(1.0 / (c_ * c_), c_ * c_ / std::pow(a_, 4)); }
    double safe_radius() const override { return kPi / std::sqrt(max_sectional()) * (1 - margin_); }

    std::vector<GeodesicState> integrate(const Vec& x, const Vec& v, const std::vector<double>& ts) const {
        State y0(6);
        for (int i = 0; i < 3; ++i) {
            y0[i] = x[i];
            y0[3 + i] = v[i];
        }
        auto rhs = [this](const State& y, State& dy, double) {
            Vec p(3), u(3);
            for (int i = 0; i < 3; ++i) {
                p[i] = y[i];
                u[i] = y[3 + i];
            }
            Vec acc = second_form(p, u, u);
            for (int i = 0; i < 3; ++i) {
                dy[i] = u[i];
                dy[3 + i] = acc[i];
            }
        };
        std::vector<double> times = ts;
        bool prepend = times.empty() || times.front() != 0.0;
        if (prepend) times.insert(times.begin(), 0.0);
        auto raw = integrate_nodes(rhs, y0, times, 1e-13);
        std::vector<GeodesicState> out;
        for (std::size_t k = prepend ? 1 : 0; k < raw.size(); ++k) {
            Vec p(3), u(3);
            for (int i = 0; i < 3; ++i) {
                p[i] = raw[k][i];
                u[i] = raw[k][3 + i];
            }
            out.push_back({p, u});
        }
        return out;
    }
    GeodesicState exp(const Vec& x, const Vec& v) const override {
        if (v.norm() == 0.0) return {x, v};
        return integrate(x, v, {1.0}).front();
    }
    std::vector<GeodesicState> geodesic_states(const Vec& x, const Vec& v, const std::vector<double>& ts) const override {
        if (v.norm() == 0.0) return std::vector<GeodesicState>(ts.size(), GeodesicState{x, v});
        return integrate(x, v, ts);
    }

    Vec log(const Vec& x, const Vec& y) const override {
        if ((y - x).norm() == 0.0) return Vec::Zero(3);
        Mat E = tangent_basis(x);
        // Initial guess: chord projected to T_x, stretched to an arc estimate.
        Vec chord = y - x;
        Eigen::Vector2d c = E.transpose() * chord;
        double Rm = 0.5 * (a_ + c_);
        double arc = 2 * Rm * std::asin(std::min(1.0, chord.norm() / (2 * Rm)));
        if (c.norm() < 1e-14) throw DegeneratePairError("spheroid shooting: chord normal to the surface");
        c *= arc / c.norm();
        for (int it = 0; it < 60; ++it) {
            Vec r = exp(x, E * c).point - y;
            if (r.norm() < 1e-13 * (1 + Rm)) break;
            Eigen::Matrix<double, 3, 2> J;
            for (int k = 0; k < 2; ++k) {
                Eigen::Vector2d dc = Eigen::Vector2d::Zero();
                double h = 1e-7 * (1 + c.norm());
                dc[k] = h;
                J.col(k) = (exp(x, E * (c + dc)).point - exp(x, E * (c - dc)).point) / (2 * h);
            }
            Eigen::Vector2d step = J.colPivHouseholderQr().solve(-r);
            double lim = 0.25 * (1 + c.norm());
            if (step.norm() > lim) step *= lim / step.norm();
            c += step;
            if (it == 59) throw DegeneratePairError("spheroid shooting did not converge");
        }
        if (c.norm() > safe_radius()) throw DegeneratePairError("spheroid pair beyond the injectivity radius margin");
        return E * c;
    }
    double distance(const Vec& x, const Vec& y) const override { return log(x, y).norm(); }
    bool compact() const override { return true; }
    double volume() const override {
        auto f = [this](double u) { return 2 * kPi * area_factor(u); };
        return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, kPi, 15, 1e-14);
    }
    Vec base_point() const override { return c_ * Vec::Unit(3, 2); }
    Vec canonical(const Vec& x) const override { return from_chart(to_chart(x)); }
    double manifold_residual(const Vec& x) const override {
        return std::abs((x[0] * x[0] + x[1] * x[1]) / (a_ * a_) + x[2] * x[2] / (c_ * c_) - 1.0);
    }
    std::vector<ChartAxis> chart_axes() const override { return {{0.0, kPi, false}, {0.0, 2 * kPi, true}}; }
    Vec from_chart(const Vec& q) const override {
        return Vec((Eigen::Vector3d() << a_ * std::sin(q[0]) * std::cos(q[1]), a_ * std::sin(q[0]) * std::sin(q[1]), c_ * std::cos(q[0])).finished());
    }
    Vec to_chart(const Vec& x) const override {
        double rho = std::hypot(x[0], x[1]);
        double u = std::atan2(rho / a_, x[2] / c_);
        double phi = std::atan2(x[1], x[0]);
        return Vec((Eigen::Vector2d() << u, phi < 0 ? phi + 2 * kPi : phi).finished());
    }
    double area_factor(double u) const {
        return a_ * std::sin(u) * std::sqrt(a_ * a_ * sqr(std::cos(u)) + c_ * c_ * sqr(std::sin(u)));
    }
    double volume_density(const Vec& q) const override { return area_factor(q[0]); }
    Vec sample_point(std::mt19937_64& rng) const override {
        std::uniform_real_distribution<double> u;
        double bound = std::max(a_, c_) * a_;
        for (;;) {
            double z = 2 * u(rng) - 1;
            double th = std::acos(z);
            double phi = 2 * kPi * u(rng);
            Vec q(2);
            q << th, phi;
            // Accept with probability density / (bound·sin θ).
            if (u(rng) * bound * std::sin(th) <= area_factor(th)) return from_chart(q);
        }
    }

private:
    double a_, c_, margin_;
};

} // namespace twisted
