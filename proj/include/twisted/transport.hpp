#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include "discrete_ot.hpp"
#include "entropies.hpp"
#include "jacobi_riccati.hpp"
#include "model.hpp"
#include "twisted_coeffs.hpp"

namespace twisted {

// ∇φ and ∇²φ at x from the ambient derivatives of a potential field, in the
// model's tangent_basis(x).
inline PotentialSpec potential_at(const ManifoldModel& m, const ScalarField& phi, const Vec& x) {
    const auto& g = m.geometry();
    const int n = m.dim();
    Mat E = g.tangent_basis(x);
    Vec dphi = phi.gradient(x);
    Mat H = phi.hessian(x);
    PotentialSpec s{Vec::Zero(g.ambient_dim()), Mat(n, n)};
    for (int i = 0; i < n; ++i) s.grad += dphi.dot(E.col(i)) * E.col(i);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            s.hess(i, j) = E.col(i).dot(H * E.col(j)) + dphi.dot(g.second_form(x, E.col(i), E.col(j)));
    return s;
}

struct LpCertificate {
    double map_cost = 0, lp_cost = 0;
    int atoms = 0;
    double gap() const { return map_cost - lp_cost; }
    bool certified() const { return gap() <= 1e-9 * (1.0 + map_cost); }
    nlohmann::json to_json() const {
        return {{"atoms", atoms}, {"map_cost", map_cost}, {"lp_cost", lp_cost}, {"gap", gap()}, {"certified", certified()}};
    }
};

// Optimality of a map-induced coupling on a sample: the identity pairing of
// atoms with their images must already solve the discrete transport problem.
inline LpCertificate certify_pairing(const ManifoldModel& m, const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                                     const std::vector<double>& w, int cap = 512) {
    const int N = int(xs.size());
    const int stride = std::max(1, (N + cap - 1) / cap);
    DiscreteMeasure a, b;
    double tot = 0;
    for (int i = 0; i < N; i += stride) {
        a.points.push_back(xs[i]);
        b.points.push_back(ys[i]);
        a.mass.push_back(w[i]);
        tot += w[i];
    }
    for (auto& v : a.mass) v /= tot;
    b.mass = a.mass;
    LpCertificate c;
    c.atoms = int(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) c.map_cost += a.mass[i] * transport_cost(m, a.points[i], b.points[i]);
    c.lp_cost = solve_ot(m, a, b, {cap}).cost;
    return c;
}

// Transport along F(x) = exp_x(-∇φ(x)) of μ₀ = ρ₀ m restricted to a chart
// region. Each cell carries a ray with J_t on a uniform t-grid.
class PotentialPlan {
public:
    PotentialPlan(const ManifoldModel& m, const Region& region, const ScalarField& rho0, const ScalarField& phi, int cells,
                  int ray_nodes = 17)
        : m_(m), nodes_(ray_nodes) {
        auto grid = discretize(m, region, cells);
        std::vector<double> rho(grid.points.size());
        for (std::size_t i = 0; i < rho.size(); ++i) rho[i] = rho0(grid.points[i]);
        mu0_ = DensityMeasure::from_cells(grid.points, grid.cell_mass, rho, std::make_shared<ScalarField>(rho0));
        for (double r : mu0_.rho())
            if (!(r > 0)) throw InputDomainError("source density must be positive on its region");
        rays_.reserve(grid.points.size());
        for (auto& x : grid.points) rays_.push_back(propagate_ray(m, x, potential_at(m, phi, x), ray_nodes));
    }

    const ManifoldModel& model() const { return m_; }
    const DensityMeasure& source() const { return mu0_; }
    const std::vector<TransportRay>& rays() const { return rays_; }
    std::size_t size() const { return rays_.size(); }

    // J_t at a node of the ray grid.
    double jacobian(std::size_t i, double t) const { return rays_[i].s.J[node(t)]; }
    double rho0(std::size_t i) const { return mu0_.rho()[i]; }
    double rho1(std::size_t i) const { return rho0(i) / jacobian(i, 1.0); }
    double mass(std::size_t i) const { return mu0_.measure.mass[i]; }

    // U_m(μ_t) = Σ mass φ_U((J_t/ρ₀)^{1/n}).
    double entropy_at(double t, const DCFunction& U) const {
        double s = 0;
        for (std::size_t i = 0; i < size(); ++i) s += mass(i) * U.phi(std::pow(jacobian(i, t) / rho0(i), 1.0 / m_.dim()));
        return s;
    }

    double transport_cost() const {
        double c = 0;
        for (std::size_t i = 0; i < size(); ++i) c += mass(i) * 0.5 * sqr(rays_[i].length());
        return c;
    }

    LpCertificate certificate(int cap = 512) const {
        std::vector<Vec> xs, ys;
        std::vector<double> w;
        for (std::size_t i = 0; i < size(); ++i) {
            xs.push_back(rays_[i].x);
            ys.push_back(rays_[i].y);
            w.push_back(mass(i));
        }
        return certify_pairing(m_, xs, ys, w, cap);
    }

private:
    ManifoldModel m_;
    int nodes_;
    DensityMeasure mu0_;
    std::vector<TransportRay> rays_;

    int node(double t) const {
        double k = t * (nodes_ - 1);
        int r = int(std::lround(k));
        if (std::abs(k - r) > 1e-9) throw ConfigurationError("interpolation times must lie on the ray grid k/" + std::to_string(nodes_ - 1));
        return r;
    }
};

// Monotone transport between densities that depend on one coordinate only:
// zonal densities on a round sphere (functions of the polar angle from the
// north pole) or axial densities on a flat torus (functions of x_0). Rings of
// cells are represented by one point each.
class AxialPlan {
public:
    struct Atom {
        double s = 0, S = 0, dS = 1;  // coordinate, image Θ(s), Θ'(s)
        double ref = 0, mass = 0;     // m-mass of the ring, μ₀-mass
        double rho0 = 0, rho1 = 0;    // ρ₀(s) (grid-normalized), ρ₁(Θ(s)) (exactly normalized)
        Vec x, y;
        double d = 0;
    };

    AxialPlan(const ManifoldModel& m, const ScalarField& rho0, const ScalarField& rho1, int resolution)
        : m_(m), f0_(std::make_shared<ScalarField>(rho0)), f1_(std::make_shared<ScalarField>(rho1)) {
        if (!m.weight().is_constant()) throw InputDomainError("axial transport needs a constant weight");
        if (resolution < 4) throw ConfigurationError("axial transport needs at least four rings");
        n_ = m.dim();
        if (m.kind() == ModelKind::sphere) {
            sphere_ = true;
            R_ = static_cast<const Sphere&>(m.geometry()).radius();
            S_ = kPi;
        } else if (m.kind() == ModelKind::flat_torus) {
            auto& T = static_cast<const FlatTorus&>(m.geometry());
            S_ = T.periods()[0];
            periods_ = T.periods();
        } else {
            throw InputDomainError("axial transport is available on round spheres and flat tori");
        }
        check_symmetric(*f0_);
        check_symmetric(*f1_);
        identity_ = (rho0.spec() == rho1.spec());
        build_cdf(*f0_, cdf0_, z0_);
        build_cdf(*f1_, cdf1_, z1_);

        const double total = m.total_mass();
        std::vector<double> w(resolution);
        double wsum = 0;
        atoms_.resize(resolution);
        for (int i = 0; i < resolution; ++i) {
            atoms_[i].s = (i + 0.5) * S_ / resolution;
            w[i] = profile(atoms_[i].s);
            wsum += w[i];
        }
        double z = 0;
        for (int i = 0; i < resolution; ++i) {
            Atom& a = atoms_[i];
            a.ref = total * w[i] / wsum;
            a.x = point(a.s);
            a.rho0 = density(*f0_, a.s);
            if (!(a.rho0 > 0)) throw InputDomainError("densities must be strictly positive");
            z += a.rho0 * a.ref;
        }
        for (auto& a : atoms_) {
            a.rho0 /= z;
            a.mass = a.rho0 * a.ref;
        }
        if (sphere_ || identity_) {
            for (auto& a : atoms_) a.S = identity_ ? a.s : inverse_cdf1(cdf(cdf0_, *f0_, z0_, a.s));
        } else {
            solve_circle();
        }
        const double mass_scale = 1.0 / (std::exp(-m.weight().constant_value()) * cross());
        for (auto& a : atoms_) {
            double p0 = density(*f0_, a.s) / z0_, p1 = density(*f1_, wrap(a.S)) / z1_;
            a.dS = identity_ ? 1.0 : (p0 * profile(a.s)) / (p1 * profile(wrap(a.S)));
            a.rho1 = p1 * mass_scale;
            a.y = point(wrap(a.S));
            a.d = (sphere_ ? R_ : 1.0) * std::abs(a.S - a.s);
            if (a.d >= m.geometry().safe_radius()) throw DegeneratePairError("transport ray reaches the cut-locus margin");
        }
    }

    const ManifoldModel& model() const { return m_; }
    const std::vector<Atom>& atoms() const { return atoms_; }
    bool identity() const { return identity_; }

    // Weighted Jacobian of F_t = exp(t·log(x, F(x))) for a constant weight.
    double jacobian(const Atom& a, double t) const {
        double lin = 1.0 + t * (a.dS - 1.0);
        if (!sphere_ || identity_) return lin;
        double th = a.s + t * (a.S - a.s);
        return lin * std::pow(std::sin(th) / std::sin(a.s), n_ - 1);
    }

    double w2() const {
        double c = 0;
        for (auto& a : atoms_) c += a.mass * a.d * a.d;
        return std::sqrt(c);
    }

    // μ₀ as a density measure over the rings, with its closed form.
    DensityMeasure source() const {
        std::vector<Vec> pts;
        std::vector<double> ref, rho;
        for (auto& a : atoms_) {
            pts.push_back(a.x);
            ref.push_back(a.ref);
            rho.push_back(a.rho0);
        }
        auto d = DensityMeasure::from_cells(pts, ref, rho, f0_);
        d.scale = 1.0 / (z0_ * std::exp(-m_.weight().constant_value()) * cross());
        return d;
    }

    // Two-dimensional sample of the rings (sphere: meridians, torus: the
    // second axis) with the identity pairing, certified by the exact LP.
    LpCertificate certificate(int cap = 512) const {
        if (n_ != 2) return {};
        const int rings = int(atoms_.size());
        const int per = std::max(1, cap / rings);
        std::vector<Vec> xs, ys;
        std::vector<double> w;
        for (int i = 0; i < rings; ++i)
            for (int k = 0; k < per; ++k) {
                double u = (k + 0.5) / per;
                xs.push_back(rotate(atoms_[i].x, u));
                ys.push_back(rotate(atoms_[i].y, u));
                w.push_back(atoms_[i].mass / per);
            }
        return certify_pairing(m_, xs, ys, w, std::max(cap, int(xs.size())));
    }

private:
    ManifoldModel m_;
    std::shared_ptr<ScalarField> f0_, f1_;
    int n_ = 0;
    bool sphere_ = false, identity_ = false;
    double R_ = 1, S_ = 1;
    std::vector<double> periods_;
    std::vector<double> cdf0_, cdf1_;
    double z0_ = 1, z1_ = 1;
    std::vector<Atom> atoms_;
    static constexpr int kTable = 1024;

    double profile(double s) const { return sphere_ ? std::pow(std::sin(s), n_ - 1) : 1.0; }

    // Volume of M per unit of ∫ profile ds.
    double cross() const {
        if (!sphere_) {
            double c = 1;
            for (std::size_t k = 1; k < periods_.size(); ++k) c *= periods_[k];
            return c;
        }
        double omega = 2 * std::pow(kPi, n_ / 2.0) / boost::math::tgamma(n_ / 2.0);
        return std::pow(R_, n_) * omega;
    }

    double wrap(double s) const {
        if (sphere_) return s;
        double r = std::fmod(s, S_);
        return r < 0 ? r + S_ : r;
    }

    Vec point(double s) const {
        if (sphere_) {
            Vec x = Vec::Zero(n_ + 1);
            x[0] = R_ * std::sin(s);
            x[n_] = R_ * std::cos(s);
            return x;
        }
        Vec x(n_);
        x[0] = s;
        for (int k = 1; k < n_; ++k) x[k] = 0.5 * periods_[k];
        return x;
    }

    // Same ring, rotated by the fraction u of a turn.
    Vec rotate(const Vec& x, double u) const {
        Vec y = x;
        if (sphere_) {
            double a = 2 * kPi * u;
            y[0] = x[0] * std::cos(a);
            y[1] = x[0] * std::sin(a);
        } else {
            y[1] = u * periods_[1];
        }
        return y;
    }

    double density(const ScalarField& f, double s) const { return f(point(s)); }

    void check_symmetric(const ScalarField& f) const {
        std::mt19937_64 rng(12345);
        std::uniform_real_distribution<double> U(0, 1);
        for (int k = 0; k < 16; ++k) {
            double s = (k + 0.5) / 16 * S_;
            Vec x = point(s), y = x;
            if (sphere_) {
                Vec dir = Vec::Zero(n_ + 1);
                for (int i = 0; i < n_; ++i) dir[i] = U(rng) - 0.5;
                y = R_ * std::cos(s) * Vec::Unit(n_ + 1, n_) + R_ * std::sin(s) * dir / dir.norm();
            } else {
                for (int i = 1; i < n_; ++i) y[i] = U(rng) * periods_[i];
            }
            double a = f(x), b = f(y);
            if (std::abs(a - b) > 1e-12 * (1 + std::abs(a)))
                throw InputDomainError(sphere_ ? "density is not zonal about the north pole" : "density depends on more than x_0");
        }
    }

    void build_cdf(const ScalarField& f, std::vector<double>& table, double& z) const {
        table.assign(kTable + 1, 0.0);
        const double h = S_ / kTable;
        for (int k = 0; k < kTable; ++k)
            table[k + 1] = table[k] + integrate_fixed([&](double s) { return density(f, s) * profile(s); }, k * h, (k + 1) * h);
        z = table.back();
        if (!(z > 0)) throw InputDomainError("density has zero mass");
    }

    // Normalized cumulative mass of [0, s].
    double cdf(const std::vector<double>& table, const ScalarField& f, double z, double s) const {
        const double h = S_ / kTable;
        int k = std::clamp(int(s / h), 0, kTable - 1);
        double part = integrate_fixed([&](double u) { return density(f, u) * profile(u); }, k * h, s);
        return (table[k] + part) / z;
    }

    double inverse_cdf1(double u) const {
        if (u <= 0) return 0.0;
        if (u >= 1) return S_;
        auto it = std::upper_bound(cdf1_.begin(), cdf1_.end(), u * z1_);
        int k = std::clamp(int(it - cdf1_.begin()) - 1, 0, kTable - 1);
        const double h = S_ / kTable;
        auto g = [&](double s) { return cdf(cdf1_, *f1_, z1_, s) - u; };
        double lo = k * h, hi = (k + 1) * h;
        double glo = g(lo), ghi = g(hi);
        if (glo >= 0) return lo;
        if (ghi <= 0) return hi;
        std::uintmax_t iters = 100;
        auto r = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, boost::math::tools::eps_tolerance<double>(52), iters);
        return 0.5 * (r.first + r.second);
    }

    // Lifted inverse on the circle: G̃⁻¹(u) = floor(u) L + G⁻¹(u - floor(u)).
    double lifted_inverse(double u) const {
        double k = std::floor(u);
        return k * S_ + inverse_cdf1(u - k);
    }

    // Optimal circle map T(s) = G̃₁⁻¹(G₀(s) - α); the cost is convex in α.
    void solve_circle() {
        std::vector<double> g0(atoms_.size());
        for (std::size_t i = 0; i < atoms_.size(); ++i) g0[i] = cdf(cdf0_, *f0_, z0_, atoms_[i].s);
        auto cost = [&](double alpha) {
            double c = 0;
            for (std::size_t i = 0; i < atoms_.size(); ++i) c += atoms_[i].mass * sqr(lifted_inverse(g0[i] - alpha) - atoms_[i].s);
            return c;
        };
        std::uintmax_t iters = 200;
        auto best = boost::math::tools::brent_find_minima(cost, -1.0, 1.0, 40, iters);
        for (std::size_t i = 0; i < atoms_.size(); ++i) atoms_[i].S = lifted_inverse(g0[i] - best.first);
    }
};

} // namespace twisted
