#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discrete_ot.hpp"
#include "errors.hpp"
#include "expression.hpp"
#include "model.hpp"
#include "twisted_coeffs.hpp"
#include "weight.hpp"

namespace twisted {

struct DCCheck {
    bool u_zero_at_origin = false;
    bool u_convex = false;
    bool phi_convex = false;
    bool phi_nonincreasing = false;
    double worst_u = 0, worst_phi = 0, worst_slope = 0;
    bool ok() const { return u_zero_at_origin && u_convex && phi_convex && phi_nonincreasing; }
};

// U: [0,∞) → R, convex with U(0) = 0, and its companion φ_U(r) = rⁿ U(r⁻ⁿ).
class DCFunction {
public:
    using Fn = std::function<double(double)>;

    DCFunction(std::string name, nlohmann::json params, int n, Fn U, Fn phi = {})
        : name_(std::move(name)), params_(std::move(params)), n_(n), U_(std::move(U)), phi_(std::move(phi)) {
        if (n < 1) throw InputDomainError("DC functions need a dimension n >= 1");
    }

    // H(r) = n r (1 - r^{-1/n}); φ_H(r) = n(1 - r).
    static DCFunction renyi(int n) { return renyi_N(n, n); }

    // N r (1 - r^{-1/N}) with N >= n; φ(r) = N(1 - r^{n/N}).
    static DCFunction renyi_N(int n, double N) {
        if (!(N >= n)) throw InputDomainError("Renyi parameter N must be at least n");
        std::string name = (N == n) ? "renyi" : "renyi_N";
        nlohmann::json p = (N == n) ? nlohmann::json::object() : nlohmann::json{{"N", N}};
        return DCFunction(
            name, p, n, [N](double r) { return r <= 0.0 ? 0.0 : N * (r - std::pow(r, 1.0 - 1.0 / N)); },
            [N, n](double r) { return N * (1.0 - std::pow(r, double(n) / N)); });
    }

    // (r^m - r)/(m - 1), m >= 1 - 1/n, m != 1; φ(r) = (r^{n(1-m)} - 1)/(m - 1).
    static DCFunction porous_medium(int n, double m) {
        if (m == 1.0 || m < 1.0 - 1.0 / n) throw InputDomainError("porous-medium exponent needs m >= 1 - 1/n and m != 1");
        return DCFunction(
            "porous_medium", {{"m", m}}, n,
            [m](double r) { return r <= 0.0 ? 0.0 : (std::pow(r, m) - r) / (m - 1.0); },
            [m, n](double r) { return (std::pow(r, n * (1.0 - m)) - 1.0) / (m - 1.0); });
    }

    static DCFunction zero(int n) {
        return DCFunction("zero", nlohmann::json::object(), n, [](double) { return 0.0; }, [](double) { return 0.0; });
    }

    // Closed form in the variable r (written x in the expression).
    static DCFunction user(int n, const std::string& text) {
        auto e = std::make_shared<Expression>(text);
        return DCFunction("user", {{"expression", text}}, n, [e](double r) {
            if (r == 0.0) return 0.0;
            return (*e)(&r, 1);
        });
    }

    const std::string& name() const { return name_; }
    const nlohmann::json& params() const { return params_; }
    int dim() const { return n_; }

    double U(double r) const {
        if (r < 0.0) throw InputDomainError("DC functions are defined on [0, inf)");
        return U_(r);
    }
    double phi(double r) const {
        if (!(r > 0.0)) throw InputDomainError("phi_U is evaluated at r > 0");
        if (phi_) return phi_(r);
        return std::pow(r, n_) * U_(std::pow(r, -n_));
    }

    nlohmann::json spec() const { return {{"name", name_}, {"params", params_}}; }

    // Necessary-condition grid test on 512 log-spaced points of [1e-6, 1e6]:
    // second divided differences of U and φ_U, first differences of φ_U.
    DCCheck check(double tol = 1e-9) const {
        DCCheck c;
        c.u_zero_at_origin = (U_(0.0) == 0.0);
        const int N = 512;
        std::vector<double> r(N), u(N), p(N);
        for (int i = 0; i < N; ++i) {
            r[i] = std::pow(10.0, -6.0 + 12.0 * i / (N - 1));
            u[i] = U(r[i]);
            p[i] = phi(r[i]);
        }
        auto convexity = [&](const std::vector<double>& v) {
            double worst = 0;
            for (int i = 1; i + 1 < N; ++i) {
                double s1 = (v[i] - v[i - 1]) / (r[i] - r[i - 1]);
                double s2 = (v[i + 1] - v[i]) / (r[i + 1] - r[i]);
                double scale = std::abs(s1) + std::abs(s2) + 1.0;
                // rounding in the divided differences
                double noise = 64 * std::numeric_limits<double>::epsilon() * (std::abs(v[i - 1]) + 2 * std::abs(v[i]) + std::abs(v[i + 1])) /
                               std::min(r[i] - r[i - 1], r[i + 1] - r[i]);
                worst = std::min(worst, std::min(0.0, s2 - s1 + noise) / scale);
            }
            return worst;
        };
        c.worst_u = convexity(u);
        c.worst_phi = convexity(p);
        double slope = 0;
        for (int i = 1; i < N; ++i) slope = std::max(slope, (p[i] - p[i - 1]) / (1.0 + std::abs(p[i]) + std::abs(p[i - 1])));
        c.worst_slope = slope;
        c.u_convex = c.worst_u >= -tol;
        c.phi_convex = c.worst_phi >= -tol;
        c.phi_nonincreasing = slope <= tol;
        return c;
    }

private:
    std::string name_;
    nlohmann::json params_;
    int n_;
    Fn U_, phi_;
};

inline DCFunction dc_from_spec(const std::string& name, const nlohmann::json& params, int n) {
    if (name == "renyi") return DCFunction::renyi(n);
    if (name == "renyi_N") return DCFunction::renyi_N(n, params.at("N").get<double>());
    if (name == "porous_medium") return DCFunction::porous_medium(n, params.at("m").get<double>());
    if (name == "zero") return DCFunction::zero(n);
    if (name == "user") return DCFunction::user(n, params.at("expression").get<std::string>());
    throw ConfigurationError("unknown DC function '" + name + "'");
}

inline std::vector<std::pair<std::string, std::string>> dc_catalog() {
    return {{"renyi", "H(r) = n r (1 - r^{-1/n})"},
            {"renyi_N", "N r (1 - r^{-1/N}), N >= n"},
            {"porous_medium", "(r^m - r)/(m - 1), m >= 1 - 1/n, m != 1"},
            {"zero", "U = 0"},
            {"user", "closed-form expression in x"}};
}

// μ = ρ m at the discrete level: atoms carry ρ and the quadrature weight of m
// at their cell. `density` is the closed form of ρ when one is known.
struct DensityMeasure {
    DiscreteMeasure measure;
    std::vector<double> ref_mass;
    std::shared_ptr<const ScalarField> density;

    const std::vector<double>& rho() const {
        if (!measure.rho) throw InputDomainError("measure carries no density values");
        return *measure.rho;
    }

    double normalization() const {
        const auto& r = rho();
        double s = 0;
        for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * ref_mass[i];
        return s;
    }

    void validate(double tol = 1e-9) const {
        const auto& r = rho();
        if (ref_mass.size() != r.size()) throw InputDomainError("reference masses must align with atoms");
        if (std::abs(normalization() - 1.0) > tol) throw InputDomainError("density does not integrate to 1 against m");
    }

    // Atoms from cell centers with masses ρ·ref; ρ is rescaled so that Σ ρ ref = 1.
    static DensityMeasure from_cells(const std::vector<Vec>& pts, const std::vector<double>& ref, std::vector<double> rho,
                                     std::shared_ptr<const ScalarField> field = nullptr) {
        if (pts.size() != ref.size() || pts.size() != rho.size()) throw InputDomainError("cell arrays must align");
        double z = 0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            if (!(rho[i] >= 0.0)) throw InputDomainError("densities must be nonnegative");
            z += rho[i] * ref[i];
        }
        if (!(z > 0)) throw InputDomainError("density has zero mass");
        DensityMeasure d;
        d.ref_mass = ref;
        std::vector<double> mass;
        std::vector<Vec> kept;
        for (auto& r : rho) r /= z;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            kept.push_back(pts[i]);
            mass.push_back(rho[i] * ref[i]);
        }
        d.measure = {std::move(kept), std::move(mass), std::move(rho)};
        d.density = std::move(field);
        d.scale = 1.0 / z;
        return d;
    }

    // ρ_field · scale is the normalized density.
    double scale = 1.0;
};

// U_m(μ) ≈ Σ U(ρ_i) · ref_i.
inline double entropy_U(const DensityMeasure& mu, const DCFunction& U) {
    const auto& r = mu.rho();
    if (mu.ref_mass.size() != r.size()) throw InputDomainError("reference masses must align with atoms");
    double s = 0;
    for (std::size_t i = 0; i < r.size(); ++i) s += U.U(r[i]) * mu.ref_mass[i];
    return s;
}

inline double renyi_entropy(const DensityMeasure& mu, int n) { return entropy_U(mu, DCFunction::renyi(n)); }

// |∇ρ|_g at x from the ambient gradient of the closed-form density.
inline double density_gradient_norm(const ManifoldModel& m, const ScalarField& rho, double scale, const Vec& x) {
    Mat E = m.geometry().tangent_basis(x);
    Vec g = rho.gradient(x);
    double s = 0;
    for (int i = 0; i < m.dim(); ++i) s += sqr(scale * g.dot(E.col(i)));
    return std::sqrt(s);
}

// I_m(μ) = ∫ |∇ρ^{1-1/n}|² / ρ dm = (1-1/n)² ∫ ρ^{-2/n} |∇ρ|² / ρ dm.
inline double fisher_information(const DensityMeasure& mu, const ManifoldModel& m) {
    if (!mu.density) throw ConfigurationError("Fisher information needs a closed-form density; grid gradients are not supported");
    const auto& r = mu.rho();
    const double n = m.dim();
    const double k = sqr(1.0 - 1.0 / n);
    double s = 0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        if (!(r[i] > 0.0)) continue;
        double gn = density_gradient_norm(m, *mu.density, mu.scale, mu.measure.points[i]);
        s += mu.ref_mass[i] * k * std::pow(r[i], -2.0 / n) * gn * gn / r[i];
    }
    return s;
}

// M^p_t(a,b) with the limits p = 0 (geometric), p = ±inf (min/max) and 0 when ab = 0.
inline double generalized_mean(double p, double t, double a, double b) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputDomainError("mean weight t must lie in [0,1]");
    if (a < 0.0 || b < 0.0) throw InputDomainError("means take nonnegative arguments");
    if (a * b == 0.0) return 0.0;
    if (std::isinf(p)) return p < 0 ? std::min(a, b) : std::max(a, b);
    if (p == 0.0) return std::pow(a, 1.0 - t) * std::pow(b, t);
    return std::pow((1.0 - t) * std::pow(a, p) + t * std::pow(b, p), 1.0 / p);
}

// One coupling atom for the convexity right-hand side.
struct ConvexityTerm {
    double mass;
    double rho0, rho1;
    Extended beta_bar;  // β̄_{κ,f,1-t}(x,y)
    Extended beta;      // β_{κ,f,t}(x,y)
};

struct ConvexitySum {
    double value = 0;
    int tiny_density_atoms = 0;  // atoms with ρ < 1e-12
};

// (1-t) Σ m φ_U((β̄/ρ₀)^{1/n}) + t Σ m φ_U((β/ρ₁)^{1/n}); φ-form is U(ρ/β)β/ρ.
inline ConvexitySum convexity_sum(const std::vector<ConvexityTerm>& terms, double t, const DCFunction& U) {
    ConvexitySum out;
    const double n = U.dim();
    for (auto& e : terms) {
        double bb = e.beta_bar.value(), b = e.beta.value();
        if (e.rho0 < 1e-12 || e.rho1 < 1e-12) ++out.tiny_density_atoms;
        if (t < 1.0) out.value += (1.0 - t) * e.mass * U.phi(std::pow(bb / e.rho0, 1.0 / n));
        if (t > 0.0) out.value += t * e.mass * U.phi(std::pow(b / e.rho1, 1.0 / n));
    }
    return out;
}

// β̄_{κ,f,1-t} and β_{κ,f,t} for one pair. The t = 0 and t = 1 ends carry zero
// weight in the sum and are reported as 1.
inline std::pair<Extended, Extended> pair_betas(const ManifoldModel& m, const Vec& x, const Vec& y, double kappa, double t, int nodes = 33) {
    if (m.geometry().distance(x, y) >= m.geometry().safe_radius()) throw DegeneratePairError("pair is on or near the cut locus");
    TwistedCoefficients tc(geodesic(m, x, y, nodes), kappa);
    Extended bb = t < 1.0 ? tc.beta_bar_t(1.0 - t) : Extended(1.0);
    Extended b = t > 0.0 ? tc.beta_t(t) : Extended(1.0);
    return {bb, b};
}

// Right-hand side of the twisted displacement-convexity inequality.
inline double convexity_rhs(const ManifoldModel& m, const DensityMeasure& mu0, const DensityMeasure& mu1, const Coupling& pi,
                            double kappa, double t, const DCFunction& U, int nodes = 33) {
    if (U.dim() != m.dim()) throw InputDomainError("DC function dimension differs from the model dimension");
    const auto& r0 = mu0.rho();
    const auto& r1 = mu1.rho();
    std::vector<ConvexityTerm> terms;
    terms.reserve(pi.support.size());
    for (auto& e : pi.support) {
        auto [bb, b] = pair_betas(m, mu0.measure.points[e.i], mu1.measure.points[e.j], kappa, t, nodes);
        terms.push_back({e.mass, r0[e.i], r1[e.j], bb, b});
    }
    return convexity_sum(terms, t, U).value;
}

} // namespace twisted
