#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "expression.hpp"
#include "numerics.hpp"

namespace twisted {

// Smooth function on the ambient space, restricted to the manifold.
// Derivatives are ambient partials; model_manifold turns them into df, the
// Riemannian gradient and the covariant Hessian.
class ScalarField {
public:
    using ValueFn = std::function<double(const Vec&)>;
    using GradFn = std::function<Vec(const Vec&)>;
    using HessFn = std::function<Mat(const Vec&)>;

    ScalarField() : ScalarField("zero", {}, [](const Vec&) { return 0.0; },
                                [](const Vec& x) { return Vec::Zero(x.size()).eval(); },
                                [](const Vec& x) { return Mat::Zero(x.size(), x.size()).eval(); }) {
        constant_ = true;
    }

    ScalarField(std::string kind, nlohmann::json params, ValueFn f, GradFn g = {}, HessFn h = {})
        : kind_(std::move(kind)), params_(std::move(params)), f_(std::move(f)), g_(std::move(g)), h_(std::move(h)) {}

    double operator()(const Vec& x) const { return f_(x) + shift_; }

    // Missing analytic derivatives fall back to central differences with
    // step 1e-5·(1+|x_i|).
    Vec gradient(const Vec& x) const { return g_ ? g_(x) : fd_gradient(x); }
    Mat hessian(const Vec& x) const {
        if (h_) return h_(x);
        if (g_) return fd_jacobian_of_gradient(x);
        return fd_hessian(x);
    }

    Vec fd_gradient(const Vec& x) const {
        Vec g(x.size());
        Vec p = x;
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            double h = 1e-5 * (1.0 + std::abs(x[i]));
            p[i] = x[i] + h;
            double fp = f_(p);
            p[i] = x[i] - h;
            double fm = f_(p);
            p[i] = x[i];
            g[i] = (fp - fm) / (2 * h);
        }
        return g;
    }

    Mat fd_jacobian_of_gradient(const Vec& x) const {
        const auto m = x.size();
        Mat H(m, m);
        Vec p = x;
        for (Eigen::Index i = 0; i < m; ++i) {
            double h = 1e-5 * (1.0 + std::abs(x[i]));
            p[i] = x[i] + h;
            Vec gp = gradient(p);
            p[i] = x[i] - h;
            Vec gm = gradient(p);
            p[i] = x[i];
            H.col(i) = (gp - gm) / (2 * h);
        }
        return 0.5 * (H + H.transpose());
    }

    Mat fd_hessian(const Vec& x) const {
        const auto m = x.size();
        Mat H(m, m);
        Vec p = x;
        double f0 = f_(x);
        for (Eigen::Index i = 0; i < m; ++i) {
            double hi = 1e-4 * (1.0 + std::abs(x[i]));
            p[i] = x[i] + hi;
            double fp = f_(p);
            p[i] = x[i] - hi;
            double fm = f_(p);
            p[i] = x[i];
            H(i, i) = (fp - 2 * f0 + fm) / (hi * hi);
            for (Eigen::Index j = 0; j < i; ++j) {
                double hj = 1e-4 * (1.0 + std::abs(x[j]));
                auto at = [&](double si, double sj) {
                    Vec q = x;
                    q[i] += si * hi;
                    q[j] += sj * hj;
                    return f_(q);
                };
                H(i, j) = H(j, i) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4 * hi * hj);
            }
        }
        return H;
    }

    bool is_constant() const { return constant_; }
    bool has_analytic_gradient() const { return static_cast<bool>(g_); }
    const std::string& kind() const { return kind_; }

    nlohmann::json spec() const {
        nlohmann::json j = params_;
        j["kind"] = kind_;
        if (shift_ != 0.0) j["shift"] = shift_;
        return j;
    }

    // Adds a constant; used to normalize the total weighted mass.
    ScalarField shifted(double c) const {
        ScalarField s = *this;
        s.shift_ += c;
        return s;
    }

    double constant_value() const { return constant_ ? f_(Vec::Zero(1)) + shift_ : std::nan(""); }

    // Catalog ------------------------------------------------------------

    static ScalarField zero() { return ScalarField(); }

    static ScalarField constant(double c) {
        ScalarField s("constant", {{"value", c}}, [c](const Vec&) { return c; },
                      [](const Vec& x) { return Vec::Zero(x.size()).eval(); },
                      [](const Vec& x) { return Mat::Zero(x.size(), x.size()).eval(); });
        s.constant_ = true;
        return s;
    }

    // f(x) = b + <a, x> in ambient coordinates.
    static ScalarField linear(Vec a, double b = 0.0) {
        std::vector<double> av(a.data(), a.data() + a.size());
        return ScalarField(
            "linear", {{"coefficients", av}, {"offset", b}},
            [a, b](const Vec& x) { return b + a.dot(x.head(a.size())); },
            [a](const Vec& x) {
                Vec g = Vec::Zero(x.size());
                g.head(a.size()) = a;
                return g;
            },
            [](const Vec& x) { return Mat::Zero(x.size(), x.size()).eval(); });
    }

    // f(x) = c + (s/2)|x - p|^2.
    static ScalarField radial_quadratic(double s, Vec p, double c = 0.0) {
        std::vector<double> pv(p.data(), p.data() + p.size());
        return ScalarField(
            "radial_quadratic", {{"scale", s}, {"center", pv}, {"offset", c}},
            [=](const Vec& x) { return c + 0.5 * s * (x - p).squaredNorm(); },
            [=](const Vec& x) { return (s * (x - p)).eval(); },
            [=](const Vec& x) { return (s * Mat::Identity(x.size(), x.size())).eval(); });
    }

    // f(x) = c + a·cos(2π x_k / period); periodic on flat tori.
    static ScalarField cosine(double a, int axis, double period, double c = 0.0) {
        double w = 2 * kPi / period;
        return ScalarField(
            "cosine", {{"amplitude", a}, {"axis", axis}, {"period", period}, {"offset", c}},
            [=](const Vec& x) { return c + a * std::cos(w * x[axis]); },
            [=](const Vec& x) {
                Vec g = Vec::Zero(x.size());
                g[axis] = -a * w * std::sin(w * x[axis]);
                return g;
            },
            [=](const Vec& x) {
                Mat h = Mat::Zero(x.size(), x.size());
                h(axis, axis) = -a * w * w * std::cos(w * x[axis]);
                return h;
            });
    }

    // f(x) = c + a·exp(-|x - p|^2 / (2 w^2)).
    static ScalarField bump(double a, Vec p, double w, double c = 0.0) {
        std::vector<double> pv(p.data(), p.data() + p.size());
        double iw2 = 1.0 / (w * w);
        return ScalarField(
            "bump", {{"amplitude", a}, {"center", pv}, {"width", w}, {"offset", c}},
            [=](const Vec& x) { return c + a * std::exp(-0.5 * (x - p).squaredNorm() * iw2); },
            [=](const Vec& x) {
                double e = a * std::exp(-0.5 * (x - p).squaredNorm() * iw2);
                return (-e * iw2 * (x - p)).eval();
            },
            [=](const Vec& x) {
                double e = a * std::exp(-0.5 * (x - p).squaredNorm() * iw2);
                Vec d = x - p;
                return (e * iw2 * (iw2 * d * d.transpose() - Mat::Identity(x.size(), x.size()))).eval();
            });
    }

    // f(x) = c + a·exp(s (cos(2π (x_k - p)/period) - 1)); smooth periodic bump.
    static ScalarField periodic_bump(double a, int axis, double period, double p, double s, double c = 0.0) {
        double w = 2 * kPi / period;
        return ScalarField(
            "periodic_bump", {{"amplitude", a}, {"axis", axis}, {"period", period}, {"center", p}, {"sharpness", s}, {"offset", c}},
            [=](const Vec& x) { return c + a * std::exp(s * (std::cos(w * (x[axis] - p)) - 1)); },
            [=](const Vec& x) {
                Vec g = Vec::Zero(x.size());
                double th = w * (x[axis] - p);
                g[axis] = -a * s * w * std::sin(th) * std::exp(s * (std::cos(th) - 1));
                return g;
            },
            [=](const Vec& x) {
                Mat h = Mat::Zero(x.size(), x.size());
                double th = w * (x[axis] - p);
                double e = a * std::exp(s * (std::cos(th) - 1));
                h(axis, axis) = e * w * w * (s * s * std::sin(th) * std::sin(th) - s * std::cos(th));
                return h;
            });
    }

    // User closed form; derivatives by finite differences.
    static ScalarField expression(const std::string& text) {
        auto e = std::make_shared<Expression>(text);
        return ScalarField("expression", {{"text", text}}, [e](const Vec& x) { return (*e)(x.data(), x.size()); });
    }

private:
    std::string kind_ = "zero";
    nlohmann::json params_ = nlohmann::json::object();
    ValueFn f_;
    GradFn g_;
    HessFn h_;
    double shift_ = 0.0;
    bool constant_ = false;
};

using WeightFunction = ScalarField;

} // namespace twisted
