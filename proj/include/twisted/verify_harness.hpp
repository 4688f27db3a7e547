#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "discrete_ot.hpp"
#include "entropies.hpp"
#include "jacobi_riccati.hpp"
#include "model.hpp"
#include "report.hpp"
#include "transport.hpp"
#include "twisted_coeffs.hpp"

namespace twisted {

// ε_disc from margins on a refinement ladder. When both steps share a sign
// and shrink, the limit is extrapolated geometrically and ε_k = |M_k - M*|;
// otherwise every ε_k is the largest step and the ladder is flagged, unless
// the steps are at rounding level.
struct Ladder {
    std::vector<int> resolutions;
    std::vector<double> margins, eps;
    double limit = std::nan("");
    double order = std::nan("");
    bool regular = true;

    nlohmann::json to_json() const {
        nlohmann::json m = nlohmann::json::array(), e = nlohmann::json::array();
        for (double v : margins) m.push_back(encode_real(v));
        for (double v : eps) e.push_back(encode_real(v));
        return {{"resolutions", resolutions}, {"margins", m}, {"eps_disc", e}, {"limit", encode_real(limit)},
                {"observed_order", encode_real(order)}, {"regular", regular}};
    }
};

inline Ladder refinement_ladder(const std::vector<int>& res, const std::vector<double>& margins) {
    Ladder L{res, margins, std::vector<double>(margins.size(), 0.0)};
    const std::size_t k = margins.size();
    if (k == 0) throw ConfigurationError("refinement ladder is empty");
    L.limit = margins.back();
    if (k < 3) {
        if (k == 2) std::fill(L.eps.begin(), L.eps.end(), std::abs(margins[1] - margins[0]));
        L.regular = false;
        return L;
    }
    double d1 = margins[k - 2] - margins[k - 3], d2 = margins[k - 1] - margins[k - 2];
    if (d1 == 0.0 && d2 == 0.0) return L;
    double big = 0;
    for (double v : margins) big = std::max(big, std::abs(v));
    if (std::max(std::abs(d1), std::abs(d2)) <= 1e-10 * (1 + big)) {
        // converged to rounding: no rate to estimate
        std::fill(L.eps.begin(), L.eps.end(), std::max(std::abs(d1), std::abs(d2)));
        return L;
    }
    if (d1 * d2 > 0 && std::abs(d2) < std::abs(d1)) {
        double r = d2 / d1;
        L.limit = margins[k - 1] + d2 * r / (1 - r);
        for (std::size_t i = 0; i < k; ++i) L.eps[i] = std::abs(margins[i] - L.limit);
        L.order = std::log(std::abs(d1 / d2)) / std::log(double(res[k - 1] - 1) / double(res[k - 2] - 1));
    } else {
        L.regular = false;
        double e = std::max(std::abs(d1), std::abs(d2));
        std::fill(L.eps.begin(), L.eps.end(), e);
    }
    return L;
}

struct LevelResult {
    double lhs = 0, rhs = 0, margin = 0;
    nlohmann::json details = nlohmann::json::object();
};

// Runs `level` on each resolution; the report carries the finest level and
// tol_disc = ε_disc at the finest resolution.
template <class F>
VerificationReport run_ladder(VerificationReport r, const std::vector<int>& res, F&& level) {
    if (res.empty()) throw ConfigurationError("resolution ladder is empty");
    std::vector<double> margins;
    LevelResult last;
    for (int N : res) {
        last = level(N);
        margins.push_back(last.margin);
    }
    Ladder L = refinement_ladder(res, margins);
    r.lhs = last.lhs;
    r.rhs = last.rhs;
    r.margin = last.margin;
    r.tol_disc = L.eps.back();
    for (auto& [k, v] : last.details.items()) r.details[k] = v;
    r.details["ladder"] = L.to_json();
    if (!L.regular && res.size() >= 3) r.notes.push_back("refinement ladder is not monotone; eps_disc uses the largest step");
    return r.decide();
}

struct CheckOptions {
    std::vector<int> ladder = {33, 65, 129};
    int sample_budget = 256;
    std::uint64_t seed = 1;
    int lp_cap = 512;
};

namespace detail {

inline double hypothesis_scale(const ManifoldModel& m, double kappa) {
    return 1.0 + std::abs(kappa) * (m.dim() - 1) + (m.dim() - 1) * std::abs(m.geometry().max_sectional());
}

// Returns false (and marks the report) when the curvature bound fails on samples.
inline bool require_curvature(VerificationReport& r, const ManifoldModel& m, double kappa, const CheckOptions& opt) {
    double cm = 0;
    bool ok = curvature_hypothesis(m, kappa, opt.sample_budget, opt.seed, &cm);
    r.details["curvature_margin"] = encode_real(cm);
    if (!ok) r.unmet("curvature bound Ric^1_f >= (n-1) kappa e^{-4f/(n-1)} fails on the sample set");
    return ok;
}

inline VerificationReport start(const char* id, const CheckOptions& opt) {
    VerificationReport r;
    r.id = id;
    r.seed = opt.seed;
    return r;
}

} // namespace detail

// Displacement convexity ---------------------------------------------------

struct ConvexityInput {
    Region region;       // support of μ₀
    ScalarField rho0;    // unnormalized closed-form density of μ₀
    ScalarField potential;
    int ray_nodes = 17;  // t-grid k/(ray_nodes - 1)
};

inline VerificationReport check_displacement_convexity(const ManifoldModel& m, double kappa, const ConvexityInput& in,
                                                       const DCFunction& U, const std::vector<double>& t_grid,
                                                       const CheckOptions& opt = {}) {
    auto r = detail::start("displacement_convexity", opt);
    m.require_statement_dimension();
    if (U.dim() != m.dim()) throw InputDomainError("DC function dimension differs from the model dimension");
    if (t_grid.empty()) throw ConfigurationError("t-grid is empty");
    auto dc = U.check();
    if (!dc.ok()) return r.unmet("U fails the DC grid test");
    if (!detail::require_curvature(r, m, kappa, opt)) return r;
    const int n = m.dim();
    const int path_nodes = m.weight().is_constant() ? 5 : 33;
    try {
        return run_ladder(r, opt.ladder, [&](int N) {
            PotentialPlan plan(m, in.region, in.rho0, in.potential, N, in.ray_nodes);
            auto cert = plan.certificate(opt.lp_cap);
            if (!cert.certified()) throw RejectedRayError("map-induced coupling is not optimal on the LP sample");
            std::vector<TwistedCoefficients> tcs;
            tcs.reserve(plan.size());
            for (auto& ray : plan.rays()) {
                if (m.geometry().distance(ray.x, ray.y) >= m.geometry().safe_radius()) throw DegeneratePairError("ray reaches the cut locus");
                tcs.emplace_back(geodesic(m, ray.x, ray.y, path_nodes), kappa);
            }
            LevelResult out;
            out.margin = std::numeric_limits<double>::infinity();
            nlohmann::json per_t = nlohmann::json::array();
            for (double t : t_grid) {
                if (!(t > 0 && t < 1)) throw ConfigurationError("t-grid values must lie in (0,1)");
                std::vector<ConvexityTerm> terms;
                terms.reserve(plan.size());
                for (std::size_t i = 0; i < plan.size(); ++i)
                    terms.push_back({plan.mass(i), plan.rho0(i), plan.rho1(i), tcs[i].beta_bar_t(1 - t), tcs[i].beta_t(t)});
                double rhs = convexity_sum(terms, t, U).value;
                double lhs = plan.entropy_at(t, U);
                per_t.push_back({{"t", t}, {"lhs", lhs}, {"rhs", rhs}, {"margin", rhs - lhs}});
                if (rhs - lhs < out.margin) {
                    out.margin = rhs - lhs;
                    out.lhs = lhs;
                    out.rhs = rhs;
                }
            }
            out.details["per_t"] = per_t;
            out.details["lp_certificate"] = cert.to_json();
            out.details["atoms"] = plan.size();
            out.details["n"] = n;
            return out;
        });
    } catch (const NotApplicable& e) {
        return r.inapplicable(e.what());
    } catch (const RejectedRayError& e) {
        return r.unmet(e.what());
    }
}

// Brunn-Minkowski -------------------------------------------------------------

struct BetaInfimum {
    double beta_bar = std::numeric_limits<double>::infinity();
    double beta = std::numeric_limits<double>::infinity();
    long pairs = 0, rejected = 0;
    bool sampled = false;
};

// inf over X×Y of β̄_{κ,f,1-t} and β_{κ,f,t}. Constant weights use the closed
// form in d; other weights integrate along a stride sample of pairs.
inline BetaInfimum beta_infimum(const ManifoldModel& m, const std::vector<Vec>& X, const std::vector<Vec>& Y, double kappa, double t) {
    BetaInfimum b;
    const auto& g = m.geometry();
    const int n = m.dim();
    KappaProfile K(kappa);
    const bool closed = m.weight().is_constant();
    const double e = closed ? std::exp(-2.0 * m.weight().constant_value() / (n - 1)) : 1.0;
    const long total = long(X.size()) * long(Y.size());
    const long stride = closed ? 1 : std::max(1L, total / 4000);
    b.sampled = stride > 1;
    long idx = 0;
    for (auto& x : X)
        for (auto& y : Y) {
            if (idx++ % stride) continue;
            double d = g.distance(x, y);
            if (d >= g.safe_radius()) {
                ++b.rejected;
                continue;
            }
            ++b.pairs;
            double bb, bt;
            if (closed) {
                double df = d * e;
                if (df >= K.C()) throw NotApplicable("twisted coefficients are infinite on X×Y");
                if (df == 0) {
                    bb = bt = 1;
                } else {
                    bt = std::pow(K.s(t * df) / (t * K.s(df)), n - 1);
                    bb = std::pow(K.s((1 - t) * df) / ((1 - t) * K.s(df)), n - 1);
                }
            } else {
                TwistedCoefficients tc(geodesic(m, x, y, 9), kappa);
                bb = tc.beta_bar_t(1 - t).value();
                bt = tc.beta_t(t).value();
            }
            b.beta_bar = std::min(b.beta_bar, bb);
            b.beta = std::min(b.beta, bt);
        }
    return b;
}

namespace detail {

// Midpoints of X×Y in chart coordinates; cut-locus pairs are skipped and counted.
inline std::vector<Vec> chart_midpoints(const ManifoldModel& m, const std::vector<Vec>& X, const std::vector<Vec>& Y, double t,
                                        long* rejected, std::vector<std::pair<int, int>>* pairs = nullptr) {
    const auto& g = m.geometry();
    detail::PointMerger merger(kMergeTolerance);
    std::vector<Vec> q;
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < Y.size(); ++j) {
            if (g.distance(X[i], Y[j]) >= g.safe_radius()) {
                ++*rejected;
                continue;
            }
            Vec z = geodesic_point(m, X[i], Y[j], t);
            if (pairs) {
                q.push_back(g.to_chart(z));
                pairs->emplace_back(int(i), int(j));
            } else {
                std::size_t before = merger.points().size();
                int id = merger.add(z);
                if (std::size_t(id) == before) q.push_back(g.to_chart(z));
            }
        }
    return q;
}

} // namespace detail

inline VerificationReport check_brunn_minkowski(const ManifoldModel& m, double kappa, const Region& X, const Region& Y, double t,
                                                CheckOptions opt = {}) {
    if (opt.ladder == CheckOptions{}.ladder) opt.ladder = {9, 17, 33};
    auto r = detail::start("brunn_minkowski", opt);
    m.require_statement_dimension();
    if (!(t > 0 && t < 1)) throw InputDomainError("t must lie in (0,1)");
    if (!detail::require_curvature(r, m, kappa, opt)) return r;
    const double n = m.dim();
    try {
        return run_ladder(r, opt.ladder, [&](int N) {
            auto gx = discretize(m, X, N), gy = discretize(m, Y, N);
            if (double(gx.points.size()) * double(gy.points.size()) > 2e7) throw ConfigurationError("too many cell pairs for the midpoint set");
            long rejected = 0;
            auto q = detail::chart_midpoints(m, gx.points, gy.points, t, &rejected);
            Vec half = ((1 - t) * gx.spacing + t * gy.spacing) / 2.0;
            Vec raster = gx.spacing.cwiseMin(gy.spacing) / 4.0;
            double mz = union_box_measure(m, q, half, raster);
            auto b = beta_infimum(m, gx.points, gy.points, kappa, t);
            LevelResult out;
            out.lhs = std::pow(mz, 1.0 / n);
            out.rhs = (1 - t) * std::pow(b.beta_bar, 1.0 / n) * std::pow(gx.mass(), 1.0 / n) +
                      t * std::pow(b.beta, 1.0 / n) * std::pow(gy.mass(), 1.0 / n);
            out.margin = out.lhs - out.rhs;
            out.details = {{"m_Z", mz},           {"m_X", gx.mass()},     {"m_Y", gy.mass()},
                           {"inf_beta_bar", b.beta_bar}, {"inf_beta", b.beta}, {"midpoints", q.size()},
                           {"rejected_pairs", rejected}, {"beta_sampled", b.sampled}};
            return out;
        });
    } catch (const NotApplicable& e) {
        return r.inapplicable(e.what());
    }
}

// Taylor expansion at a midpoint ---------------------------------------------------

struct TaylorFit {
    Vec coeffs;           // fitted, ascending
    Vec expected;         // orders 0, 1, 2 from the closed form
    double discrepancy = 0;
    double fit_spread = 0;  // change of the first three coefficients between fit degrees 6 and 7
    double condition = 0;
};

// Symmetric δ-grid ±{h, 2h, ..., k h}.
inline std::vector<double> symmetric_grid(double h, int k) {
    std::vector<double> g;
    for (int i = k; i >= 1; --i) g.push_back(-i * h);
    for (int i = 1; i <= k; ++i) g.push_back(i * h);
    return g;
}

inline GeodesicState unit_geodesic(const ManifoldModel& m, const Vec& x, const Vec& v, double s) {
    auto st = m.geometry().exp(x, s * v);
    st.point = m.geometry().canonical(st.point);
    return st;
}

// β̄_{κ,f,1/2}(γ(-δ), γ(δ)) fitted by a degree-6 polynomial in δ; the spread
// against degree 7 estimates the truncation error of the low coefficients.
inline TaylorFit taylor_fit(const ManifoldModel& m, const Vec& x, const Vec& v, double kappa, const std::vector<double>& deltas) {
    m.require_unit(x, v);
    const int n = m.dim();
    std::vector<double> vals;
    for (double d : deltas) {
        if (d == 0.0) throw ConfigurationError("the delta grid must exclude 0");
        Vec a = unit_geodesic(m, x, v, -d).point, b = unit_geodesic(m, x, v, d).point;
        if (2 * std::abs(d) >= m.geometry().safe_radius()) throw InputDomainError("delta reaches the cut locus");
        TwistedCoefficients tc(geodesic(m, a, b, 65), kappa);
        vals.push_back(tc.beta_bar_t(0.5).value());
    }
    auto p6 = polyfit(deltas, vals, 6);
    auto p7 = polyfit(deltas, vals, 7);
    if (p6.condition > 1e8 || p7.condition > 1e8) throw ConfigurationError("Taylor fit is ill-conditioned (condition number > 1e8)");
    TaylorFit t;
    t.coeffs = p6.coeffs;
    t.condition = p6.condition;
    double a = m.df(x, v);
    double f = m.f(x);
    t.expected = Vec(3);
    t.expected << 1.0, -a, 0.5 * ((n - 1) * kappa * std::exp(-4 * f / (n - 1)) + double(n - 2) / (n - 1) * a * a);
    for (int k = 0; k < 3; ++k) {
        t.discrepancy = std::max(t.discrepancy, std::abs(t.coeffs[k] - t.expected[k]));
        t.fit_spread = std::max(t.fit_spread, std::abs(p6.coeffs[k] - p7.coeffs[k]));
    }
    return t;
}

inline std::vector<double> default_delta_grid(const ManifoldModel& m) {
    double h = 0.025;
    double cap = 0.2 * m.geometry().safe_radius();
    if (8 * h > cap) h = cap / 8;
    return symmetric_grid(h, 8);
}

inline VerificationReport check_taylor_expansion(const ManifoldModel& m, const Vec& x, const Vec& v, double kappa,
                                                 std::vector<double> delta_grid = {}, const CheckOptions& opt = {}) {
    auto r = detail::start("taylor_expansion", opt);
    m.require_statement_dimension();
    if (delta_grid.empty()) delta_grid = default_delta_grid(m);
    auto fit = taylor_fit(m, x, v, kappa, delta_grid);
    r.lhs = fit.coeffs[2];
    r.rhs = fit.expected[2];
    r.margin = -fit.discrepancy;
    r.tol_disc = fit.fit_spread;
    r.tol_analytic = 1e-4;
    r.details = {{"fitted", {fit.coeffs[0], fit.coeffs[1], fit.coeffs[2]}},
                 {"expected", {fit.expected[0], fit.expected[1], fit.expected[2]}},
                 {"condition", fit.condition},
                 {"deltas", delta_grid}};
    return r.decide();
}

// Prékopa-Leindler -----------------------------------------------------------------

struct PrekopaInput {
    ScalarField psi0, psi1;
    Region X, Y;                     // supports of ψ₀, ψ₁
    std::optional<ScalarField> psi;  // absent: the hypothesis envelope is built with equality
};

inline VerificationReport check_prekopa_leindler(const ManifoldModel& m, double kappa, const PrekopaInput& in, double p, double t,
                                                 CheckOptions opt = {}) {
    if (opt.ladder == CheckOptions{}.ladder) opt.ladder = {9, 17, 33};
    auto r = detail::start("prekopa_leindler", opt);
    m.require_statement_dimension();
    const int n = m.dim();
    if (!(t > 0 && t < 1)) throw InputDomainError("t must lie in (0,1)");
    if (p < -1.0 / n) throw InputDomainError("p must be at least -1/n");
    if (!detail::require_curvature(r, m, kappa, opt)) return r;
    const double q = (1 + n * p == 0) ? -std::numeric_limits<double>::infinity() : p / (1 + n * p);
    r.details["p"] = encode_real(p);
    r.details["q"] = encode_real(q);
    try {
        return run_ladder(r, opt.ladder, [&](int N) {
            auto gx = discretize(m, in.X, N), gy = discretize(m, in.Y, N);
            if (double(gx.points.size()) * double(gy.points.size()) > 2e7) throw ConfigurationError("too many cell pairs");
            const auto& g = m.geometry();
            double I0 = 0, I1 = 0;
            std::vector<double> v0(gx.points.size()), v1(gy.points.size());
            for (std::size_t i = 0; i < v0.size(); ++i) I0 += (v0[i] = in.psi0(gx.points[i])) * gx.cell_mass[i];
            for (std::size_t j = 0; j < v1.size(); ++j) I1 += (v1[j] = in.psi1(gy.points[j])) * gy.cell_mass[j];
            // Pointwise hypothesis values M^p_t(ψ₀/β̄, ψ₁/β) at every midpoint.
            long rejected = 0;
            std::vector<std::pair<int, int>> pairs;
            auto qz = detail::chart_midpoints(m, gx.points, gy.points, t, &rejected, &pairs);
            const bool closed = m.weight().is_constant();
            const double e = closed ? std::exp(-2.0 * m.weight().constant_value() / (n - 1)) : 1.0;
            KappaProfile K(kappa);
            std::vector<double> need(qz.size());
            for (std::size_t k = 0; k < qz.size(); ++k) {
                const Vec& x = gx.points[pairs[k].first];
                const Vec& y = gy.points[pairs[k].second];
                double bb, bt;
                if (closed) {
                    double df = g.distance(x, y) * e;
                    if (df >= K.C()) throw NotApplicable("twisted coefficients are infinite");
                    bb = df == 0 ? 1 : std::pow(K.s((1 - t) * df) / ((1 - t) * K.s(df)), n - 1);
                    bt = df == 0 ? 1 : std::pow(K.s(t * df) / (t * K.s(df)), n - 1);
                } else {
                    TwistedCoefficients tc(geodesic(m, x, y, 9), kappa);
                    bb = tc.beta_bar_t(1 - t).value();
                    bt = tc.beta_t(t).value();
                }
                need[k] = generalized_mean(p, t, v0[pairs[k].first] / bb, v1[pairs[k].second] / bt);
            }
            Vec half = ((1 - t) * gx.spacing + t * gy.spacing) / 2.0;
            Vec raster = gx.spacing.cwiseMin(gy.spacing) / 4.0;
            double lhs = 0;
            double worst_hyp = 0;
            if (in.psi) {
                for (std::size_t k = 0; k < qz.size(); ++k) {
                    double val = (*in.psi)(g.from_chart(qz[k]));
                    worst_hyp = std::min(worst_hyp, val - need[k]);
                }
                // ∫ψ over the rasterized Z_t bounds ∫_M ψ from below.
                lhs = union_box_integral(m, qz, half, raster, [&](const Vec& c) { return (*in.psi)(g.from_chart(c)); });
            } else {
                lhs = union_box_integral(m, qz, half, raster, nullptr, &need);
            }
            LevelResult out;
            out.lhs = lhs;
            out.rhs = generalized_mean(q, t, I0, I1);
            out.margin = out.lhs - out.rhs;
            out.details = {{"int_psi0", I0}, {"int_psi1", I1}, {"hypothesis_min_slack", worst_hyp}, {"rejected_pairs", rejected},
                           {"envelope", !in.psi.has_value()}};
            if (worst_hyp < -1e-9 * (1 + out.rhs)) throw RejectedRayError("pointwise hypothesis fails at a grid midpoint");
            return out;
        });
    } catch (const NotApplicable& e) {
        return r.inapplicable(e.what());
    } catch (const RejectedRayError& e) {
        return r.unmet(e.what());
    }
}

// Functional inequalities on constant-weight compact models --------------------

namespace detail {

// Upper bound of f on the sample set; δ defaults to sup f/(n-1).
inline double sup_weight(const ManifoldModel& m, const CheckOptions& opt) {
    if (m.weight().is_constant()) return m.weight().constant_value();
    std::mt19937_64 rng(opt.seed ^ 0x51ed270b7a1f3c2dULL);
    double s = m.f(m.geometry().base_point());
    for (int i = 0; i < opt.sample_budget; ++i) s = std::max(s, m.f(m.geometry().sample_point(rng)));
    return s;
}

// μ-constancy on the optimal coupling of coarse discretizations of μ and m.
// With a constant weight it holds identically.
inline bool mu_constant(const ManifoldModel& m, const ScalarField& rho, nlohmann::json& details) {
    if (m.weight().is_constant()) {
        details["mu_constant"] = "identically (constant weight)";
        return true;
    }
    const int n = m.dim();
    int cells = std::max(2, int(std::floor(std::pow(200.0, 1.0 / n))));
    auto axes = m.geometry().chart_axes();
    Vec lo(n), hi(n);
    for (int k = 0; k < n; ++k) {
        lo[k] = axes[k].lo;
        hi[k] = axes[k].hi;
    }
    auto grid = discretize(m, Region::box(lo, hi), cells);
    std::vector<double> r(grid.points.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = rho(grid.points[i]);
    auto mu = DensityMeasure::from_cells(grid.points, grid.cell_mass, r).measure;
    auto ref = grid.measure();
    auto pi = solve_ot(m, mu, ref);
    double worst = 0;
    for (auto& e : pi.support) {
        const Vec& x = mu.points[e.i];
        const Vec& y = ref.points[e.j];
        double d = m.geometry().distance(x, y);
        if (d == 0 || d >= m.geometry().safe_radius()) continue;
        double df = geodesic(m, x, y, 17).reparam_full();
        double target = std::exp(-2.0 * m.f(x) / (n - 1)) * d;
        worst = std::max(worst, std::abs(df - target) / target);
    }
    details["mu_constant_deviation"] = worst;
    return worst <= 1e-6;
}

struct FunctionalSetup {
    double delta = 0;
    bool ok = false;
};

inline FunctionalSetup functional_hypotheses(VerificationReport& r, const ManifoldModel& m, double kappa, const ScalarField& rho,
                                             double delta_bound, const CheckOptions& opt, bool need_mu_constant) {
    FunctionalSetup s;
    m.require_statement_dimension();
    if (!m.geometry().compact()) throw InputDomainError("functional inequalities need a compact model");
    if (!(kappa > 0)) throw InputDomainError("functional inequalities need kappa > 0");
    double total = m.total_mass();
    r.details["reference_mass"] = total;
    if (std::abs(total - 1.0) > 1e-9) {
        r.unmet("reference measure is not a probability measure");
        return s;
    }
    if (!require_curvature(r, m, kappa, opt)) return s;
    const int n = m.dim();
    double fsup = sup_weight(m, opt);
    s.delta = std::isnan(delta_bound) ? fsup / (n - 1) : delta_bound;
    r.details["delta"] = s.delta;
    if (fsup > (n - 1) * s.delta + 1e-12 * (1 + std::abs(fsup))) {
        r.unmet("f <= (n-1) delta fails on the sample set");
        return s;
    }
    if (need_mu_constant && !mu_constant(m, rho, r.details)) {
        r.unmet("m is not mu-constant on the discrete optimal coupling");
        return s;
    }
    s.ok = true;
    return s;
}

inline double max_density(const DensityMeasure& d) {
    double s = 0;
    for (double r : d.rho()) s = std::max(s, r);
    return s;
}

} // namespace detail

inline VerificationReport check_hwi(const ManifoldModel& m, double kappa, const ScalarField& rho, double delta_bound = std::nan(""),
                                    const CheckOptions& opt = {}) {
    auto r = detail::start("hwi", opt);
    auto setup = detail::functional_hypotheses(r, m, kappa, rho, delta_bound, opt, true);
    if (!setup.ok) return r;
    if (!m.weight().is_constant()) return r.inapplicable("transport plans are available for constant weights only");
    const int n = m.dim();
    const double K = (n - 1) * kappa * std::exp(-4 * setup.delta);
    return run_ladder(r, opt.ladder, [&](int N) {
        AxialPlan plan(m, rho, ScalarField::constant(1.0), N);
        auto mu = plan.source();
        double H = renyi_entropy(mu, n), I = fisher_information(mu, m), W = plan.w2();
        double cap = std::max(1.0, detail::max_density(mu));
        LevelResult out;
        out.lhs = H;
        out.rhs = std::sqrt(I) * W - K / 6.0 * std::pow(cap, -1.0 / n) * W * W;
        out.margin = out.rhs - out.lhs;
        out.details = {{"H", H}, {"I", I}, {"W2", W}, {"sup_rho", cap}, {"lp_certificate", plan.certificate(opt.lp_cap).to_json()}};
        return out;
    });
}

inline VerificationReport check_log_sobolev(const ManifoldModel& m, double kappa, const ScalarField& rho,
                                            double delta_bound = std::nan(""), const CheckOptions& opt = {}) {
    auto r = detail::start("log_sobolev", opt);
    auto setup = detail::functional_hypotheses(r, m, kappa, rho, delta_bound, opt, true);
    if (!setup.ok) return r;
    if (!m.weight().is_constant()) return r.inapplicable("transport plans are available for constant weights only");
    const int n = m.dim();
    const double K = (n - 1) * kappa * std::exp(-4 * setup.delta);
    return run_ladder(r, opt.ladder, [&](int N) {
        AxialPlan plan(m, rho, ScalarField::constant(1.0), N);
        auto mu = plan.source();
        double H = renyi_entropy(mu, n), I = fisher_information(mu, m), W = plan.w2();
        double cap = std::max(1.0, detail::max_density(mu));
        double lsi = 3 * std::pow(cap, 1.0 / n) / (2 * K) * I;
        double hwi = std::sqrt(I) * W - K / 6.0 * std::pow(cap, -1.0 / n) * W * W;
        LevelResult out;
        out.lhs = H;
        out.rhs = lsi;
        out.margin = lsi - H;
        // Young step: √I W <= (3 c^{1/n}/(2K)) I + (K/6) c^{-1/n} W².
        out.details = {{"H", H}, {"I", I}, {"W2", W}, {"sup_rho", cap}, {"young_gap", lsi - hwi},
                       {"young_ok", lsi - hwi >= -1e-12 * (1 + std::abs(lsi))}};
        return out;
    });
}

inline VerificationReport check_transport_energy(const ManifoldModel& m, double kappa, const ScalarField& rho,
                                                 const CheckOptions& opt = {}) {
    auto r = detail::start("transport_energy", opt);
    auto setup = detail::functional_hypotheses(r, m, kappa, rho, std::nan(""), opt, false);
    if (!setup.ok) return r;
    if (!m.weight().is_constant()) return r.inapplicable("transport plans are available for constant weights only");
    const int n = m.dim();
    KappaProfile Kp(kappa);
    try {
        return run_ladder(r, opt.ladder, [&](int N) {
            AxialPlan plan(m, ScalarField::constant(1.0), rho, N);
            double lhs = 0, rhs = 0;
            for (auto& a : plan.atoms()) {
                GeodesicPath path = a.d == 0 ? geodesic(m, a.x, a.x, 5) : geodesic(m, a.x, a.y, 5);
                double bh = beta_hat(path, kappa).value();
                double df = path.reparam_full();
                // e^{-2f(x)/(n-1)} d / s_κ(d_f), with limit 1 at d = 0
                double ratio = std::pow(bh, 1.0 / (n - 1));
                lhs += a.mass * n * std::pow(bh, 1.0 / n) * (1 - std::pow(a.rho1, -1.0 / n));
                rhs += a.mass * (n * std::pow(ratio, 1.0 - 1.0 / n) - ((n - 1) * ratio * Kp.c(df) + 1));
            }
            LevelResult out;
            out.lhs = lhs;
            out.rhs = rhs;
            out.margin = lhs - rhs;
            out.details = {{"W2", plan.w2()}, {"lp_certificate", plan.certificate(opt.lp_cap).to_json()}};
            return out;
        });
    } catch (const NotApplicable& e) {
        return r.inapplicable(e.what());
    }
}

// One-sided derivative of H_m along the geodesic from ρ₀m to ρ₁m against the
// lower bound -√I W₂ and the upper bound built from β̂ and β̃.
inline VerificationReport check_entropy_derivative(const ManifoldModel& m, const ScalarField& rho0, const ScalarField& rho1,
                                                   double kappa = std::nan(""), const CheckOptions& opt = {}) {
    auto r = detail::start("entropy_derivative", opt);
    m.require_statement_dimension();
    if (!m.geometry().compact()) throw InputDomainError("entropy derivative check needs a compact model");
    if (std::isnan(kappa)) kappa = admissible_kappa(m, opt.sample_budget, opt.seed);
    r.details["kappa"] = kappa;
    if (!detail::require_curvature(r, m, kappa, opt)) return r;
    const int n = m.dim();
    try {
        return run_ladder(r, opt.ladder, [&](int N) {
            AxialPlan plan(m, rho0, rho1, N);
            auto mu = plan.source();
            double H = renyi_entropy(mu, n);
            auto quotient = [&](double t) {
                double s = 0;
                for (auto& a : plan.atoms())
                    s += a.mass * std::pow(a.rho0, -1.0 / n) * (std::pow(plan.jacobian(a, t), 1.0 / n) - 1.0);
                return -n * s / t;
            };
            auto ex = richardson3(quotient(0.02), quotient(0.01), quotient(0.005));
            if (ex.spread > 1e-3 * (1 + std::abs(ex.value))) throw ConfigurationError("difference-quotient extrapolation is unstable");
            double I = fisher_information(mu, m), W = plan.w2();
            double lower = -std::sqrt(I) * W;
            double upper = -H;
            for (auto& a : plan.atoms()) {
                GeodesicPath path = a.d == 0 ? geodesic(m, a.x, a.x, 5) : geodesic(m, a.x, a.y, 5);
                double bt = beta_tilde(path, kappa).value(), bh = beta_hat(path, kappa).value();
                double r1 = std::pow(a.rho1, -1.0 / n);
                upper += n * a.mass * (std::pow(a.rho0, -1.0 / n) * bt - r1 * (std::pow(bh, 1.0 / n) - 1) - (r1 - 1));
            }
            LevelResult out;
            out.lhs = ex.value;
            out.rhs = lower;
            out.margin = std::min(ex.value - lower, upper - ex.value);
            out.details = {{"derivative", ex.value}, {"extrapolation_spread", ex.spread}, {"lower_bound", lower},
                           {"upper_bound", upper},   {"lower_margin", ex.value - lower}, {"upper_margin", upper - ex.value},
                           {"I", I},                 {"W2", W},                         {"H", H}};
            return out;
        });
    } catch (const NotApplicable& e) {
        return r.inapplicable(e.what());
    }
}

// Second-order detection of a failing curvature bound ------------------------

// r_L + r_R for the scalar Jacobi problem j'' + K(γ(s)) j = 0 on [-δ, δ]
// with one end pinned to 0: the transverse scale factor of Z_{1/2} for two
// small balls centered at γ(∓δ).
inline double midpoint_spread(const ManifoldModel& m, const Vec& x, const Vec& v, double delta) {
    const auto& g = m.geometry();
    const int amb = g.ambient_dim();
    auto start = g.exp(x, -delta * v);
    State y0(2 * amb + 4, 0.0);
    for (int i = 0; i < amb; ++i) {
        y0[i] = start.point[i];
        y0[amb + i] = -start.velocity[i] / delta;
    }
    y0[2 * amb] = 1.0;      // u1(-δ) = 1, u1'(-δ) = 0
    y0[2 * amb + 3] = 1.0;  // u2(-δ) = 0, u2'(-δ) = 1
    auto rhs = [&](const State& s, State& ds, double) {
        Vec p = Eigen::Map<const Vec>(s.data(), amb);
        Vec u = Eigen::Map<const Vec>(s.data() + amb, amb);
        Vec acc = g.second_form(p, u, u);
        double K = g.sectional(p) * g.inner(p, u, u);
        for (int i = 0; i < amb; ++i) {
            ds[i] = u[i];
            ds[amb + i] = acc[i];
        }
        ds[2 * amb] = s[2 * amb + 1];
        ds[2 * amb + 1] = -K * s[2 * amb];
        ds[2 * amb + 2] = s[2 * amb + 3];
        ds[2 * amb + 3] = -K * s[2 * amb + 2];
    };
    auto out = integrate_nodes(rhs, y0, {-delta, 0.0, delta}, 1e-13);
    double u1_0 = out[1][2 * amb], u2_0 = out[1][2 * amb + 2];
    double u1_d = out[2][2 * amb], u2_d = out[2][2 * amb + 2];
    double rl = u1_0 - u1_d / u2_d * u2_0;
    double rr = u2_0 / u2_d;
    return rl + rr;
}

inline VerificationReport detect_curvature_violation(const ManifoldModel& m, double kappa, const CheckOptions& opt = {},
                                                     std::vector<double> delta_grid = {}) {
    auto r = detail::start("curvature_violation", opt);
    m.require_statement_dimension();
    const int n = m.dim();
    auto witness = curvature_margin_sample(m, kappa, opt.sample_budget, opt.seed);
    const Vec& x = witness.point;
    const Vec& v = witness.tangent;
    if (delta_grid.empty()) delta_grid = default_delta_grid(m);
    const double scale = detail::hypothesis_scale(m, kappa);
    const bool expected = witness.margin < -1e-9 * scale;

    const double f = m.f(x);
    std::vector<double> twisted, geometric;
    for (double d : delta_grid) {
        Vec a = unit_geodesic(m, x, v, -d).point, b = unit_geodesic(m, x, v, d).point;
        TwistedCoefficients tc(geodesic(m, a, b, 65), kappa);
        double bb = tc.beta_bar_t(0.5).value(), bt = tc.beta_t(0.5).value();
        double T = 0.5 * std::pow(std::exp(-m.f(a)) * bb, 1.0 / n) + 0.5 * std::pow(std::exp(-m.f(b)) * bt, 1.0 / n);
        twisted.push_back(std::pow(T, n));
        geometric.push_back(std::exp(-f) * std::pow(midpoint_spread(m, x, v, std::abs(d)), n - 1));
    }
    auto ft = polyfit(delta_grid, twisted, 4), fg = polyfit(delta_grid, geometric, 4);
    if (ft.condition > 1e8) throw ConfigurationError("Taylor fit is ill-conditioned (condition number > 1e8)");
    double fit_margin = fg.coeffs[2] - ft.coeffs[2];
    double predicted = 0.5 * std::exp(-f) * witness.margin;
    const double tol = 1e-4 * scale;
    const bool detected = fit_margin < -tol;

    r.lhs = fg.coeffs[2];
    r.rhs = ft.coeffs[2];
    r.tol_analytic = tol;
    // Oriented toward the expected verdict: pass iff detection agrees with the sampled curvature margin.
    r.margin = expected ? -fit_margin - 2 * tol : fit_margin;
    r.details = {{"curvature_margin", encode_real(witness.margin)},
                 {"witness_point", std::vector<double>(x.data(), x.data() + x.size())},
                 {"witness_tangent", std::vector<double>(v.data(), v.data() + v.size())},
                 {"second_order_margin", fit_margin},
                 {"predicted_second_order_margin", predicted},
                 {"violation_expected", expected},
                 {"violation_detected", detected},
                 {"samples", witness.samples}};
    r.notes.push_back(detected ? "violation detected" : "no violation detected");
    if (!expected && witness.margin >= 0) r.notes.push_back("no witness with a negative curvature margin in the sample budget");
    r.status = Status::pass;
    return r.decide();
}

// t -> 0 limits of the twisted coefficients -------------------------------------

struct AsymptoticsResult {
    double beta_limit, beta_hat, beta_rel_err;
    double tilde_limit, beta_tilde, tilde_rel_err;
};

inline AsymptoticsResult beta_asymptotics(const ManifoldModel& m, const Vec& x, const Vec& y, double kappa, int nodes = 129) {
    TwistedCoefficients tc(geodesic(m, x, y, nodes), kappa);
    const int n = m.dim();
    auto b = [&](double t) { return tc.beta_t(t).value(); };
    auto q = [&](double t) { return (1 - std::pow(tc.beta_bar_t(1 - t).value(), 1.0 / n)) / t; };
    auto eb = richardson3(b(1e-2), b(5e-3), b(2.5e-3));
    auto eq = richardson3(q(1e-2), q(5e-3), q(2.5e-3));
    AsymptoticsResult a;
    a.beta_limit = eb.value;
    a.beta_hat = tc.beta_hat().value();
    a.beta_rel_err = std::abs(a.beta_limit - a.beta_hat) / std::max(1e-300, std::abs(a.beta_hat));
    a.tilde_limit = eq.value;
    a.beta_tilde = tc.beta_tilde().value();
    a.tilde_rel_err = std::abs(a.tilde_limit - a.beta_tilde) / std::max(1e-12, std::abs(a.beta_tilde));
    return a;
}

inline VerificationReport check_beta_asymptotics(const ManifoldModel& m, const Vec& x, const Vec& y, double kappa,
                                                 const CheckOptions& opt = {}) {
    auto r = detail::start("beta_asymptotics", opt);
    m.require_statement_dimension();
    try {
        auto a = beta_asymptotics(m, x, y, kappa);
        r.lhs = a.beta_limit;
        r.rhs = a.beta_hat;
        r.margin = -std::max(a.beta_rel_err, a.tilde_rel_err);
        r.tol_analytic = 1e-4;
        r.details = {{"beta_limit", a.beta_limit}, {"beta_hat", a.beta_hat}, {"beta_rel_err", a.beta_rel_err},
                     {"tilde_limit", a.tilde_limit}, {"beta_tilde", a.beta_tilde}, {"tilde_rel_err", a.tilde_rel_err}};
        return r.decide();
    } catch (const NotApplicable& e) {
        return r.inapplicable(e.what());
    }
}

} // namespace twisted
