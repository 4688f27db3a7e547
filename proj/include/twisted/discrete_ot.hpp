#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"
#include "model.hpp"
#include "network_simplex.hpp"
#include "numerics.hpp"

namespace twisted {

// Atomic probability measure in ambient coordinates. `rho` holds reference
// density values at the atoms when the measure approximates ρ·m.
struct DiscreteMeasure {
    std::vector<Vec> points;
    std::vector<double> mass;
    std::optional<std::vector<double>> rho;

    std::size_t size() const { return points.size(); }

    static DiscreteMeasure dirac(const Vec& x) { return {{x}, {1.0}, std::nullopt}; }
    static DiscreteMeasure uniform(std::vector<Vec> pts) {
        if (pts.empty()) throw InputDomainError("a measure needs at least one atom");
        std::vector<double> w(pts.size(), 1.0 / double(pts.size()));
        return {std::move(pts), std::move(w), std::nullopt};
    }

    double total() const {
        double s = 0;
        for (double w : mass) s += w;
        return s;
    }

    void validate(const ManifoldModel& m) const {
        if (points.empty() || points.size() != mass.size()) throw InputDomainError("atoms and masses must be non-empty and aligned");
        if (rho && rho->size() != points.size()) throw InputDomainError("density values must align with atoms");
        for (double w : mass)
            if (!(w > 0.0) || !std::isfinite(w)) throw InputDomainError("atom masses must be positive");
        if (std::abs(total() - 1.0) > 1e-12) throw InputDomainError("masses must sum to 1");
        const auto& g = m.geometry();
        for (auto& x : points) {
            if (x.size() != g.ambient_dim()) throw InputDomainError("atom has the wrong number of coordinates");
            if (g.manifold_residual(x) > 1e-9 * (1 + x.norm())) throw InputDomainError("atom does not lie on the model manifold");
        }
    }
};

// (coordinates..., mass) per line; '#' starts a comment.
inline std::string to_csv(const DiscreteMeasure& mu) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (int k = 0; k < mu.points[i].size(); ++k) os << mu.points[i][k] << ',';
        os << mu.mass[i] << '\n';
    }
    return os.str();
}

inline DiscreteMeasure measure_from_csv(const std::string& text) {
    DiscreteMeasure mu;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    while (std::getline(is, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::vector<double> vals;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                std::size_t used = 0;
                vals.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw InputDomainError("line " + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
        }
        if (vals.size() < 2) throw InputDomainError("line " + std::to_string(lineno) + ": need coordinates and a mass");
        if (width == 0) width = vals.size();
        if (vals.size() != width) throw InputDomainError("line " + std::to_string(lineno) + ": inconsistent column count");
        mu.points.push_back(Eigen::Map<Vec>(vals.data(), Eigen::Index(vals.size() - 1)));
        mu.mass.push_back(vals.back());
    }
    return mu;
}

inline nlohmann::json to_json(const DiscreteMeasure& mu) {
    nlohmann::json atoms = nlohmann::json::array();
    for (std::size_t i = 0; i < mu.size(); ++i)
        atoms.push_back({{"point", std::vector<double>(mu.points[i].data(), mu.points[i].data() + mu.points[i].size())},
                         {"mass", mu.mass[i]}});
    nlohmann::json j = {{"schema", "measure.v1"}, {"atoms", atoms}};
    if (mu.rho) j["rho"] = *mu.rho;
    return j;
}

inline DiscreteMeasure measure_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "measure.v1") throw InputDomainError("unsupported measure schema");
    DiscreteMeasure mu;
    for (auto& a : j.at("atoms")) {
        auto p = a.at("point").get<std::vector<double>>();
        mu.points.push_back(Eigen::Map<Vec>(p.data(), Eigen::Index(p.size())));
        mu.mass.push_back(a.at("mass").get<double>());
    }
    if (j.contains("rho")) mu.rho = j.at("rho").get<std::vector<double>>();
    return mu;
}

struct CouplingEntry {
    int i, j;
    double mass;
};

struct Coupling {
    std::vector<CouplingEntry> support;
    double cost = 0.0;  // Σ mass · d²/2
};

struct OtOptions {
    int cap = 512;
};

inline double transport_cost(const ManifoldModel& m, const Vec& x, const Vec& y) {
    return 0.5 * sqr(m.geometry().distance(x, y));
}

// Exact optimum of the discrete Kantorovich problem with cost d²/2.
inline Coupling solve_ot(const ManifoldModel& m, const DiscreteMeasure& mu, const DiscreteMeasure& nu, OtOptions opt = {}) {
    if (int(mu.size()) > opt.cap || int(nu.size()) > opt.cap)
        throw ConfigurationError("atom count exceeds the transport cap of " + std::to_string(opt.cap));
    mu.validate(m);
    nu.validate(m);
    const int a = int(mu.size()), b = int(nu.size());
    std::vector<double> cost(std::size_t(a) * b);
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j) cost[std::size_t(i) * b + j] = transport_cost(m, mu.points[i], nu.points[j]);

    // Scale the second marginal onto the first total so the LP is balanced exactly.
    std::vector<double> supply = mu.mass, demand = nu.mass;
    double sa = mu.total(), sb = nu.total();
    for (auto& w : demand) w *= sa / sb;

    TransportSimplex simplex;
    auto res = simplex.solve(supply, demand, cost);
    Coupling pi;
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j) {
            double w = res.flow[std::size_t(i) * b + j];
            if (w > 0.0) pi.support.push_back({i, j, w});
        }
    for (auto& e : pi.support) pi.cost += e.mass * cost[std::size_t(e.i) * b + e.j];
    return pi;
}

// max |marginal - mass| over both sides.
inline double marginal_error(const Coupling& pi, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    std::vector<double> a(mu.size(), 0.0), b(nu.size(), 0.0);
    for (auto& e : pi.support) {
        a[e.i] += e.mass;
        b[e.j] += e.mass;
    }
    double err = 0;
    for (std::size_t i = 0; i < a.size(); ++i) err = std::max(err, std::abs(a[i] - mu.mass[i]));
    for (std::size_t j = 0; j < b.size(); ++j) err = std::max(err, std::abs(b[j] - nu.mass[j]));
    return err;
}

inline double recompute_cost(const ManifoldModel& m, const Coupling& pi, const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    double c = 0;
    for (auto& e : pi.support) c += e.mass * transport_cost(m, mu.points[e.i], nu.points[e.j]);
    return c;
}

inline double wasserstein2(const ManifoldModel& m, const DiscreteMeasure& mu, const DiscreteMeasure& nu, OtOptions opt = {}) {
    return std::sqrt(std::max(0.0, 2.0 * solve_ot(m, mu, nu, opt).cost));
}

// γ(t) on the minimal geodesic from x to y; cut-locus pairs are rejected.
inline Vec geodesic_point(const ManifoldModel& m, const Vec& x, const Vec& y, double t) {
    if (!(t >= 0.0 && t <= 1.0)) throw InputDomainError("interpolation time must lie in [0,1]");
    const auto& g = m.geometry();
    if (g.distance(x, y) >= g.safe_radius()) throw DegeneratePairError("pair is on or near the cut locus");
    if (t == 0.0) return x;
    if (t == 1.0) return y;
    return g.canonical(g.exp(x, t * g.log(x, y)).point);
}

namespace detail {

// Points closer than `tol` in every coordinate collapse onto the first one seen.
class PointMerger {
public:
    explicit PointMerger(double tol) : tol_(tol) {}

    int add(const Vec& p) {
        std::vector<long long> key(p.size());
        for (int k = 0; k < p.size(); ++k) key[k] = std::llround(p[k] / tol_);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        // Neighbouring buckets catch pairs split by a rounding boundary.
        for (auto& [k2, id] : neighbours(key)) {
            (void)k2;
            if ((points_[id] - p).cwiseAbs().maxCoeff() <= tol_) return id;
        }
        int id = int(points_.size());
        points_.push_back(p);
        index_.emplace(std::move(key), id);
        return id;
    }
    const std::vector<Vec>& points() const { return points_; }

private:
    double tol_;
    std::vector<Vec> points_;
    std::map<std::vector<long long>, int> index_;

    std::vector<std::pair<std::vector<long long>, int>> neighbours(const std::vector<long long>& key) const {
        std::vector<std::pair<std::vector<long long>, int>> out;
        const int d = int(key.size());
        if (d > 6) return out;
        int total = 1;
        for (int k = 0; k < d; ++k) total *= 3;
        std::vector<long long> probe(d);
        for (int code = 0; code < total; ++code) {
            int c = code;
            for (int k = 0; k < d; ++k) {
                probe[k] = key[k] + (c % 3) - 1;
                c /= 3;
            }
            auto it = index_.find(probe);
            if (it != index_.end()) out.emplace_back(probe, it->second);
        }
        return out;
    }
};

} // namespace detail

constexpr double kMergeTolerance = 1e-12;

// Push-forward of π under (x,y) ↦ γ_{xy}(t); coincident atoms merged.
inline DiscreteMeasure displacement_interpolate(const ManifoldModel& m, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                                const Coupling& pi, double t) {
    detail::PointMerger merger(kMergeTolerance);
    std::vector<double> mass;
    for (auto& e : pi.support) {
        int id = merger.add(geodesic_point(m, mu.points[e.i], nu.points[e.j], t));
        if (id == int(mass.size())) mass.push_back(0.0);
        mass[id] += e.mass;
    }
    return {merger.points(), std::move(mass), std::nullopt};
}

// Z_t(X,Y) on finite sets, duplicates merged.
inline std::vector<Vec> midpoint_set(const ManifoldModel& m, const std::vector<Vec>& X, const std::vector<Vec>& Y, double t) {
    detail::PointMerger merger(kMergeTolerance);
    for (auto& x : X)
        for (auto& y : Y) merger.add(geodesic_point(m, x, y, t));
    return merger.points();
}

// Chart-lattice discretization of a region: cell centers, their chart
// coordinates and m-masses e^{-f}·(chart volume density)·(cell volume).
struct RegionGrid {
    std::vector<Vec> points;
    std::vector<Vec> chart;
    std::vector<double> cell_mass;
    Vec spacing;  // chart cell size per axis

    double mass() const {
        double s = 0;
        for (double w : cell_mass) s += w;
        return s;
    }
    // Uniform probability measure on the cells, weighted by cell mass.
    DiscreteMeasure measure() const {
        double tot = mass();
        std::vector<double> w(cell_mass.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = cell_mass[i] / tot;
        return {points, std::move(w), std::nullopt};
    }
};

struct Region {
    enum class Kind { box, ball } kind = Kind::box;
    Vec lo, hi;        // chart box (box), or chart bounding box (ball)
    Vec center;        // ambient center (ball)
    double radius = 0; // geodesic radius (ball)

    static Region box(Vec lo, Vec hi) { return {Kind::box, std::move(lo), std::move(hi), {}, 0.0}; }

    // Geodesic ball; the chart bounding box comes from the chart metric at the
    // center, clipped to the chart of a compact model (a full period when the
    // box would wrap, e.g. around a coordinate pole).
    static Region ball(const ManifoldModel& m, const Vec& center, double radius) {
        const auto& g = m.geometry();
        Vec q = g.to_chart(center);
        Mat G = g.chart_metric(q);
        auto axes = g.chart_axes();
        Vec lo(q.size()), hi(q.size());
        for (int k = 0; k < q.size(); ++k) {
            double half = 1.5 * radius / std::sqrt(G(k, k));
            lo[k] = q[k] - half;
            hi[k] = q[k] + half;
            if (!g.compact()) continue;
            const auto& a = axes[k];
            if (a.periodic) {
                if (!(2 * half < a.hi - a.lo)) {
                    lo[k] = a.lo;
                    hi[k] = a.hi;
                }
            } else {
                lo[k] = std::max(lo[k], a.lo);
                hi[k] = std::min(hi[k], a.hi);
            }
        }
        return {Kind::ball, lo, hi, center, radius};
    }
};

// `cells` per chart axis over the region's chart box; ball regions keep the
// cells whose centers lie inside the ball.
inline RegionGrid discretize(const ManifoldModel& m, const Region& r, int cells) {
    if (cells < 1) throw ConfigurationError("region grids need at least one cell per axis");
    const auto& g = m.geometry();
    const int n = m.dim();
    if (r.lo.size() != n || r.hi.size() != n) throw InputDomainError("region box has the wrong dimension");
    auto axes = g.chart_axes();
    for (int k = 0; k < n; ++k) {
        if (!(r.hi[k] > r.lo[k])) throw InputDomainError("region box is empty");
        if (g.compact() && !axes[k].periodic && (r.lo[k] < axes[k].lo - 1e-12 || r.hi[k] > axes[k].hi + 1e-12))
            throw InputDomainError("region box leaves the chart");
    }
    RegionGrid out;
    out.spacing = (r.hi - r.lo) / double(cells);
    const double vol = out.spacing.prod();
    std::vector<int> idx(n, 0);
    Vec q(n);
    for (;;) {
        for (int k = 0; k < n; ++k) q[k] = r.lo[k] + (idx[k] + 0.5) * out.spacing[k];
        Vec x = g.from_chart(q);
        if (r.kind == Region::Kind::box || g.distance(r.center, x) < r.radius) {
            out.points.push_back(x);
            out.chart.push_back(q);
            out.cell_mass.push_back(std::exp(-m.f(x)) * g.volume_density(q) * vol);
        }
        int k = 0;
        while (k < n && ++idx[k] == cells) idx[k++] = 0;
        if (k == n) break;
    }
    if (out.points.empty()) throw InputDomainError("region contains no grid cells");
    return out;
}

// ∫ v dm over the union of chart boxes of half-width `half` around the given
// points, rasterized on a lattice of spacing `raster` anchored at the union's
// lower corner. A cell counts when its center lies strictly inside a box. The
// cell value is field(center) when a field is given, else the largest of the
// per-point `values` over the boxes containing it, else 1.
inline double union_box_integral(const ManifoldModel& m, const std::vector<Vec>& chart_points, const Vec& half, const Vec& raster,
                                 const std::function<double(const Vec&)>& field = nullptr,
                                 const std::vector<double>* values = nullptr) {
    const auto& g = m.geometry();
    const int n = m.dim();
    if (chart_points.empty()) return 0.0;
    if (values && values->size() != chart_points.size()) throw InputDomainError("one value per point is required");
    Vec lo = chart_points.front(), hi = chart_points.front();
    for (auto& q : chart_points) {
        lo = lo.cwiseMin(q);
        hi = hi.cwiseMax(q);
    }
    lo -= half;
    hi += half;
    std::vector<long long> dims(n);
    long long total = 1;
    for (int k = 0; k < n; ++k) {
        dims[k] = static_cast<long long>(std::ceil((hi[k] - lo[k]) / raster[k] - 1e-9));
        total *= dims[k];
    }
    const bool valued = values != nullptr;
    if (total > (valued ? 50'000'000LL : 200'000'000LL)) throw ConfigurationError("raster for the midpoint set is too fine");
    std::vector<char> mark(valued ? 0 : static_cast<std::size_t>(total), 0);
    std::vector<double> best(valued ? static_cast<std::size_t>(total) : 0, -std::numeric_limits<double>::infinity());
    std::vector<long long> a(n), b(n), idx(n);
    for (std::size_t p = 0; p < chart_points.size(); ++p) {
        const Vec& q = chart_points[p];
        bool empty = false;
        for (int k = 0; k < n; ++k) {
            // centers c = lo + (i + 1/2) h strictly inside (q - half, q + half)
            double l = (q[k] - half[k] - lo[k]) / raster[k] - 0.5;
            double u = (q[k] + half[k] - lo[k]) / raster[k] - 0.5;
            a[k] = std::max<long long>(0, static_cast<long long>(std::floor(l)) + 1);
            b[k] = std::min<long long>(dims[k] - 1, static_cast<long long>(std::ceil(u)) - 1);
            if (a[k] > b[k]) empty = true;
        }
        if (empty) continue;
        idx = a;
        for (;;) {
            long long lin = 0;
            for (int k = n - 1; k >= 0; --k) lin = lin * dims[k] + idx[k];
            if (valued) {
                double& c = best[static_cast<std::size_t>(lin)];
                c = std::max(c, (*values)[p]);
            } else {
                mark[static_cast<std::size_t>(lin)] = 1;
            }
            int k = 0;
            while (k < n && ++idx[k] > b[k]) {
                idx[k] = a[k];
                ++k;
            }
            if (k == n) break;
        }
    }
    const double cell = raster.prod();
    double sum = 0;
    Vec c(n);
    for (long long lin = 0; lin < total; ++lin) {
        double v = 1.0;
        if (valued) {
            v = best[static_cast<std::size_t>(lin)];
            if (std::isinf(v)) continue;
        } else if (!mark[static_cast<std::size_t>(lin)]) {
            continue;
        }
        long long r = lin;
        for (int k = 0; k < n; ++k) {
            c[k] = lo[k] + (double(r % dims[k]) + 0.5) * raster[k];
            r /= dims[k];
        }
        if (field) v = field(c);
        sum += v * std::exp(-m.f(g.from_chart(c))) * g.volume_density(c) * cell;
    }
    return sum;
}

inline double union_box_measure(const ManifoldModel& m, const std::vector<Vec>& chart_points, const Vec& half, const Vec& raster) {
    return union_box_integral(m, chart_points, half, raster);
}

struct MidpointEstimate {
    double measure = 0;
    std::size_t points = 0;
};

// Estimate of m(Z_t(X,Y)) from two region grids: every midpoint of a cell
// pair owns a chart box interpolating the two cell sizes.
inline MidpointEstimate midpoint_set_measure(const ManifoldModel& m, const RegionGrid& X, const RegionGrid& Y, double t) {
    if (double(X.points.size()) * double(Y.points.size()) > 2e7) throw ConfigurationError("too many cell pairs for the midpoint set");
    auto Z = midpoint_set(m, X.points, Y.points, t);
    const auto& g = m.geometry();
    std::vector<Vec> q;
    q.reserve(Z.size());
    for (auto& z : Z) q.push_back(g.to_chart(z));
    Vec half = ((1 - t) * X.spacing + t * Y.spacing) / 2.0;
    Vec raster = X.spacing.cwiseMin(Y.spacing) / 4.0;
    return {union_box_measure(m, q, half, raster), Z.size()};
}

} // namespace twisted
