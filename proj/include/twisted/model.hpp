#pragma once

#include <cmath>
#include <limits>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "numerics.hpp"
#include "weight.hpp"

namespace twisted {

// Weighted Riemannian manifold (M, g, e^{-f} vol) from the closed catalog.
class ManifoldModel {
public:
    ManifoldModel(GeometryPtr g, WeightFunction f = {}) : g_(std::move(g)), f_(std::move(f)) {}

    static ManifoldModel euclidean(int n, double sample_radius = 1.0) { return {std::make_shared<Euclidean>(n, sample_radius)}; }
    static ManifoldModel sphere(int n, double radius = 1.0) { return {std::make_shared<Sphere>(n, radius)}; }
    static ManifoldModel hyperbolic(int n, double scale = 1.0, double sample_radius = 1.0) {
        return {std::make_shared<Hyperbolic>(n, scale, sample_radius)};
    }
    static ManifoldModel circle(double length) { return {std::make_shared<FlatTorus>(std::vector<double>{length}, 1e-4, true)}; }
    static ManifoldModel flat_torus(std::vector<double> periods) { return {std::make_shared<FlatTorus>(std::move(periods))}; }
    static ManifoldModel spheroid(double a, double c) { return {std::make_shared<Spheroid>(a, c)}; }

    ManifoldModel with_weight(WeightFunction f) const { return {g_, std::move(f)}; }

    const Geometry& geometry() const { return *g_; }
    GeometryPtr geometry_ptr() const { return g_; }
    const WeightFunction& weight() const { return f_; }
    int dim() const { return g_->dim(); }
    ModelKind kind() const { return g_->kind(); }

    // The inequalities are stated for n >= 2 only.
    void require_statement_dimension() const {
        if (dim() < 2) throw InputDomainError("inequality checks need n >= 2; the circle is an OT oracle only");
    }

    double f(const Vec& x) const { return f_(x); }
    double df(const Vec& x, const Vec& v) const { return f_.is_constant() ? 0.0 : f_.gradient(x).dot(v); }
    Vec grad_f(const Vec& x) const {
        Mat E = g_->tangent_basis(x);
        Vec dfx = f_.gradient(x);
        Vec g = Vec::Zero(g_->ambient_dim());
        for (int i = 0; i < dim(); ++i) g += dfx.dot(E.col(i)) * E.col(i);
        return g;
    }
    double hess_f(const Vec& x, const Vec& u, const Vec& v) const {
        if (f_.is_constant()) return 0.0;
        return u.dot(f_.hessian(x) * v) + f_.gradient(x).dot(g_->second_form(x, u, v));
    }

    void require_unit(const Vec& x, const Vec& v) const {
        double nv = g_->inner(x, v, v);
        if (std::abs(nv - 1.0) > 2e-10) throw InputDomainError("tangent vector is not unit length");
    }

    // Ric_g(v) for a unit tangent v.
    double ricci_g(const Vec& x, const Vec& v) const {
        require_unit(x, v);
        return (dim() - 1) * g_->sectional(x);
    }

    // Ric^N_f(v) = Ric_g(v) + Hess f(v,v) - df(v)^2/(N-n); N = +inf drops the last term.
    double weighted_ricci(const Vec& x, const Vec& v, double N) const {
        if (N == double(dim())) throw InputDomainError("weighted Ricci curvature needs N != n");
        double ric = ricci_g(x, v) + hess_f(x, v, v);
        if (std::isinf(N)) return ric;
        return ric - sqr(df(x, v)) / (N - dim());
    }

    // Ric^1_f(w) for any tangent w (quadratic in w).
    double ric1(const Vec& x, const Vec& w) const {
        double ww = g_->inner(x, w, w);
        return (dim() - 1) * g_->sectional(x) * ww + hess_f(x, w, w) + sqr(df(x, w)) / (dim() - 1);
    }

    // ∫ e^{-f} dvol by the chart midpoint rule (exact for constant weights
    // on models with a known volume).
    double total_mass(int resolution = 257) const {
        if (f_.is_constant() && g_->compact()) return std::exp(-f_.constant_value()) * g_->volume();
        if (!g_->compact()) return std::numeric_limits<double>::infinity();
        return chart_integral([this](const Vec& x) { return std::exp(-f_(x)); }, resolution);
    }

    template <class F>
    double chart_integral(F&& fn, int resolution) const {
        auto ax = g_->chart_axes();
        const int n = dim();
        std::vector<double> h(n);
        for (int k = 0; k < n; ++k) h[k] = (ax[k].hi - ax[k].lo) / resolution;
        std::vector<int> idx(n, 0);
        double sum = 0;
        Vec q(n);
        for (;;) {
            double cell = 1;
            for (int k = 0; k < n; ++k) {
                q[k] = ax[k].lo + (idx[k] + 0.5) * h[k];
                cell *= h[k];
            }
            sum += fn(g_->from_chart(q)) * g_->volume_density(q) * cell;
            int k = 0;
            while (k < n && ++idx[k] == resolution) idx[k++] = 0;
            if (k == n) break;
        }
        return sum;
    }

    // Shifts f by a constant so that ∫ e^{-f} dvol = 1.
    ManifoldModel normalized(int resolution = 257) const {
        if (!g_->compact()) throw InputDomainError("only compact models can be normalized");
        return with_weight(f_.shifted(std::log(total_mass(resolution))));
    }

    nlohmann::json spec() const {
        nlohmann::json j = g_->params();
        j["kind"] = to_string(kind());
        j["weight"] = f_.spec();
        return j;
    }

private:
    GeometryPtr g_;
    WeightFunction f_;
};

// Minimal geodesic γ(t) = exp_x(t v) on [0,1] with cached nodes, f∘γ and the
// cumulative re-parametrization integrals S(t_k) = ∫_0^{t_k} d e^{-2f(γ)/(n-1)}.
class GeodesicPath {
public:
    GeodesicPath(ManifoldModel model, Vec x, Vec y, int nodes = 129)
        : m_(std::move(model)), x_(std::move(x)), y_(std::move(y)) {
        v_ = m_.geometry().log(x_, y_);
        build(nodes);
    }

    const ManifoldModel& model() const { return m_; }
    const Vec& x() const { return x_; }
    const Vec& y() const { return y_; }
    const Vec& velocity() const { return v_; }
    double length() const { return d_; }
    int node_count() const { return static_cast<int>(t_.size()); }
    const std::vector<double>& nodes() const { return t_; }
    const std::vector<GeodesicState>& states() const { return s_; }
    const std::vector<double>& f_nodes() const { return fv_; }

    Vec point(double t) const {
        if (t == 0.0) return x_;
        if (t == 1.0) return y_;
        int k = locate(t);
        double dt = t - t_[k];
        if (dt == 0.0) return s_[k].point;
        return m_.geometry().exp(s_[k].point, dt * s_[k].velocity).point;
    }

    // d_{f,t}(x,y): integral of e^{-2f/(n-1)} over the first t-fraction of the arc.
    double reparam(double t) const {
        if (!(t >= 0.0 && t <= 1.0)) throw InputDomainError("re-parametrization fraction must lie in [0,1]");
        m_.require_statement_dimension();
        if (t == 0.0) return 0.0;
        if (t == 1.0) return cum_.back();
        if (const_factor_ >= 0) return t * d_ * const_factor_;
        int k = locate(t);
        return cum_[k] + segment(t_[k], t);
    }
    double reparam_full() const { return reparam(1.0); }

    // ∫_t^1 of the same integrand: d_{f,1-t}(y,x) along this path reversed.
    double reparam_tail(double t) const {
        if (!(t >= 0.0 && t <= 1.0)) throw InputDomainError("re-parametrization fraction must lie in [0,1]");
        m_.require_statement_dimension();
        if (t == 1.0) return 0.0;
        if (t == 0.0) return cum_.back();
        if (const_factor_ >= 0) return (1.0 - t) * d_ * const_factor_;
        int k = locate(t);
        int k1 = std::min(k + 1, node_count() - 1);
        return (cum_.back() - cum_[k1]) + segment(t, t_[k1]);
    }

    double speed_at(int k) const { return m_.geometry().norm(s_[k].point, s_[k].velocity); }

private:
    ManifoldModel m_;
    Vec x_, y_, v_;
    double d_ = 0.0;
    double const_factor_ = -1.0;
    std::vector<double> t_;
    std::vector<GeodesicState> s_;
    std::vector<double> fv_, cum_;

    int locate(double t) const {
        int k = static_cast<int>(std::floor(t * (node_count() - 1)));
        return std::clamp(k, 0, node_count() - 2);
    }

    double integrand(double s) const {
        return d_ * std::exp(-2.0 * m_.f(point(s)) / (m_.dim() - 1));
    }
    double segment(double a, double b) const {
        if (a >= b) return 0.0;
        return integrate([this](double s) { return integrand(s); }, a, b, 1e-10 * (1 + d_) / node_count());
    }

    void build(int nodes) {
        if (nodes < 5) throw ConfigurationError("geodesic paths need at least five nodes");
        const auto& g = m_.geometry();
        d_ = g.norm(x_, v_);
        t_ = uniform_grid(nodes);
        s_ = g.geodesic_states(x_, v_, t_);
        s_.front().point = x_;
        s_.back().point = y_;
        fv_.resize(nodes);
        for (int k = 0; k < nodes; ++k) fv_[k] = m_.f(s_[k].point);
        if (m_.dim() < 2) return;
        cum_.assign(nodes, 0.0);
        if (m_.weight().is_constant()) {
            const_factor_ = std::exp(-2.0 * m_.weight().constant_value() / (m_.dim() - 1));
            for (int k = 0; k < nodes; ++k) cum_[k] = t_[k] * d_ * const_factor_;
            cum_.back() = d_ * const_factor_;
            return;
        }
        for (int k = 1; k < nodes; ++k) cum_[k] = cum_[k - 1] + segment(t_[k - 1], t_[k]);
    }
};

inline GeodesicPath geodesic(const ManifoldModel& m, const Vec& x, const Vec& y, int nodes = 129) {
    return GeodesicPath(m, x, y, nodes);
}

inline double ricci_g(const ManifoldModel& m, const Vec& x, const Vec& v) { return m.ricci_g(x, v); }
inline double weighted_ricci(const ManifoldModel& m, const Vec& x, const Vec& v, double N) { return m.weighted_ricci(x, v, N); }

struct CurvatureSample {
    double margin = std::numeric_limits<double>::infinity();
    Vec point, tangent;
    int samples = 0;
};

// min over sampled (x, v) of Ric^1_f(v) - (n-1) κ e^{-4f(x)/(n-1)}. The base
// point with the first frame vector is always the first sample.
inline CurvatureSample curvature_margin_sample(const ManifoldModel& m, double kappa, int sample_budget, std::uint64_t seed = 1) {
    if (sample_budget < 1) throw InputDomainError("sample budget must be at least 1");
    m.require_statement_dimension();
    const auto& g = m.geometry();
    std::mt19937_64 rng(seed);
    CurvatureSample best;
    const int n = m.dim();
    for (int s = 0; s < sample_budget; ++s) {
        Vec x = s == 0 ? g.base_point() : g.sample_point(rng);
        Vec v = s == 0 ? Vec(g.tangent_basis(x).col(0)) : g.sample_unit_tangent(x, rng);
        double val = m.weighted_ricci(x, v, 1.0) - (n - 1) * kappa * std::exp(-4.0 * m.f(x) / (n - 1));
        if (val < best.margin) {
            best.margin = val;
            best.point = x;
            best.tangent = v;
        }
        ++best.samples;
    }
    return best;
}

inline double curvature_margin(const ManifoldModel& m, double kappa, int sample_budget, std::uint64_t seed = 1) {
    return curvature_margin_sample(m, kappa, sample_budget, seed).margin;
}

// Largest κ with a nonnegative curvature margin on the sample set.
inline double admissible_kappa(const ManifoldModel& m, int sample_budget, std::uint64_t seed = 1) {
    m.require_statement_dimension();
    const auto& g = m.geometry();
    std::mt19937_64 rng(seed);
    const int n = m.dim();
    double best = std::numeric_limits<double>::infinity();
    for (int s = 0; s < sample_budget; ++s) {
        Vec x = s == 0 ? g.base_point() : g.sample_point(rng);
        Vec v = s == 0 ? Vec(g.tangent_basis(x).col(0)) : g.sample_unit_tangent(x, rng);
        best = std::min(best, m.weighted_ricci(x, v, 1.0) / ((n - 1) * std::exp(-4.0 * m.f(x) / (n - 1))));
    }
    return best;
}

} // namespace twisted
