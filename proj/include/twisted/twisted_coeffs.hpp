#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <vector>

#include "extended_real.hpp"
#include "model.hpp"
#include "report.hpp"

namespace twisted {

// s_κ solves ψ'' + κψ = 0, ψ(0) = 0, ψ'(0) = 1; c_κ = s_κ'; C_κ = π/√κ or +inf.
class KappaProfile {
public:
    explicit KappaProfile(double kappa) : k_(kappa), r_(std::sqrt(std::abs(kappa))) {}

    double kappa() const { return k_; }
    double s(double th) const {
        if (k_ > 0) return std::sin(r_ * th) / r_;
        if (k_ < 0) return std::sinh(r_ * th) / r_;
        return th;
    }
    double c(double th) const {
        if (k_ > 0) return std::cos(r_ * th);
        if (k_ < 0) return std::cosh(r_ * th);
        return 1.0;
    }
    double C() const { return k_ > 0 ? kPi / r_ : std::numeric_limits<double>::infinity(); }

private:
    double k_, r_;
};

inline double reparam_length(const GeodesicPath& p, double t) { return p.reparam(t); }

// β_{κ,f,t}(x,y) = (s_κ(d_{f,t}) / (t s_κ(d_f)))^{n-1}, +inf when d_f >= C_κ.
inline Extended beta(const GeodesicPath& p, double kappa, double t) {
    if (!(t > 0.0 && t <= 1.0)) throw InputDomainError("beta needs t in (0,1]; the t -> 0 limit is beta_hat");
    KappaProfile K(kappa);
    const int n = p.model().dim();
    double df = p.reparam_full();
    if (df >= K.C()) return Extended::infinity();
    if (df == 0.0) return 1.0;
    return std::pow(K.s(p.reparam(t)) / (t * K.s(df)), n - 1);
}

// β̄_{κ,f,t}(x,y) = β_{κ,f,t}(y,x).
inline Extended beta_bar(const GeodesicPath& p, double kappa, double t) {
    return beta(geodesic(p.model(), p.y(), p.x(), p.node_count()), kappa, t);
}

// β̂ = (e^{-2f(x)/(n-1)} d / s_κ(d_f))^{n-1}.
inline Extended beta_hat(const GeodesicPath& p, double kappa) {
    KappaProfile K(kappa);
    const int n = p.model().dim();
    double df = p.reparam_full();
    if (df >= K.C()) return Extended::infinity();
    if (df == 0.0) return 1.0;
    double e = std::exp(-2.0 * p.f_nodes().front() / (n - 1));
    return std::pow(e * p.length() / K.s(df), n - 1);
}

// β̃ = ((n-1)/n)(e^{-2f(x)/(n-1)} d c_κ(d_f)/s_κ(d_f) - 1).
inline Extended beta_tilde(const GeodesicPath& p, double kappa) {
    KappaProfile K(kappa);
    const int n = p.model().dim();
    double df = p.reparam_full();
    if (df >= K.C()) return Extended::infinity();
    if (df == 0.0) return 0.0;
    double e = std::exp(-2.0 * p.f_nodes().front() / (n - 1));
    return (double(n - 1) / n) * (e * p.length() * K.c(df) / K.s(df) - 1.0);
}

// The coefficient bundle for one ordered pair; β̄ is evaluated on the
// reversed geodesic so that the swap identity holds bit for bit.
class TwistedCoefficients {
public:
    TwistedCoefficients(const GeodesicPath& forward, double kappa)
        : fwd_(forward), bwd_(geodesic(forward.model(), forward.y(), forward.x(), forward.node_count())), kappa_(kappa) {}

    Extended beta_t(double t) const { return beta(fwd_, kappa_, t); }
    Extended beta_bar_t(double t) const { return beta(bwd_, kappa_, t); }
    Extended beta_hat() const { return twisted::beta_hat(fwd_, kappa_); }
    Extended beta_tilde() const { return twisted::beta_tilde(fwd_, kappa_); }
    double d_f() const { return fwd_.reparam_full(); }
    double d_ft(double t) const { return fwd_.reparam(t); }
    double d_ft_reverse(double t) const { return bwd_.reparam(t); }
    bool infinite() const { return d_f() >= KappaProfile(kappa_).C(); }

    const GeodesicPath& forward() const { return fwd_; }
    const GeodesicPath& backward() const { return bwd_; }
    double kappa() const { return kappa_; }

private:
    GeodesicPath fwd_, bwd_;
    double kappa_;
};

// Curvature hypothesis on the sample set, with a relative slack for roundoff
// in equality cases.
inline bool curvature_hypothesis(const ManifoldModel& m, double kappa, int budget, std::uint64_t seed, double* margin_out = nullptr) {
    auto s = curvature_margin_sample(m, kappa, budget, seed);
    if (margin_out) *margin_out = s.margin;
    double scale = 1.0 + std::abs(kappa) * (m.dim() - 1) + (m.dim() - 1) * std::abs(m.geometry().max_sectional());
    return s.margin >= -1e-10 * scale;
}

// sup d_f over sampled pairs against π/√κ. Pairs include points pushed to the
// cut-locus safety margin so that the supremum is approached on compact models.
inline VerificationReport diameter_check(const ManifoldModel& m, double kappa, int sample_budget, std::uint64_t seed = 1) {
    if (!(kappa > 0)) throw InputDomainError("diameter comparison needs kappa > 0");
    m.require_statement_dimension();
    VerificationReport r;
    r.id = "diameter";
    r.seed = seed;
    r.rhs = kPi / std::sqrt(kappa);
    double cm = 0;
    if (!curvature_hypothesis(m, kappa, sample_budget, seed, &cm)) {
        r.details["curvature_margin"] = encode_real(cm);
        return r.unmet("curvature bound fails on the sample set");
    }
    const auto& g = m.geometry();
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    double best = 0.0;
    int used = 0, rejected = 0;
    for (int s = 0; s < sample_budget; ++s) {
        Vec x = s == 0 ? g.base_point() : g.sample_point(rng);
        Vec y;
        if (g.compact() && s % 2 == 0) {
            Vec u = s == 0 ? Vec(g.tangent_basis(x).col(0)) : g.sample_unit_tangent(x, rng);
            y = g.exp(x, g.safe_radius() * (1 - 1e-9) * u).point;
            y = g.canonical(y);
        } else {
            y = g.sample_point(rng);
        }
        try {
            GeodesicPath p(m, x, y);
            best = std::max(best, p.reparam_full());
            ++used;
        } catch (const DegeneratePairError&) {
            ++rejected;
        }
    }
    r.lhs = best;
    r.margin = r.rhs - r.lhs;
    r.tol_analytic = 1e-6;
    r.details["pairs"] = used;
    r.details["rejected_pairs"] = rejected;
    r.details["curvature_margin"] = encode_real(cm);
    return r.decide();
}

} // namespace twisted
