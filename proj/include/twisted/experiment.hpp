#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "jacobi_riccati.hpp"
#include "transport.hpp"
#include "twisted_coeffs.hpp"
#include "verify_harness.hpp"

namespace twisted {

// One unit of work: a check at one (κ, t, resolution) cell.
struct Cell {
    double kappa = 0;
    std::optional<double> t;           // absent: the configured t-grid
    std::optional<int> resolution;     // absent: the configured ladder
};

struct CheckEntry {
    std::string id;       // resolved statement id
    std::string pointer;  // location of the entry in the document
};

// Declarative experiment: model, κ, checks and sweep axes.
class ExperimentConfig {
public:
    static ExperimentConfig from_document(ConfigDocument doc) {
        ExperimentConfig c;
        c.doc_ = std::move(doc);
        c.validate();
        return c;
    }
    static ExperimentConfig load(const std::string& path) { return from_document(ConfigDocument::load(path)); }
    static ExperimentConfig parse(const std::string& text, const std::string& source = "<config>") {
        return from_document(ConfigDocument::parse(text, source));
    }

    ConfigNode root() const { return doc_.root(); }
    ConfigNode node(const std::string& pointer) const {
        ConfigNode n = root();
        if (pointer.empty()) return n;
        std::size_t pos = 1;
        while (pos <= pointer.size()) {
            auto next = pointer.find('/', pos);
            std::string tok = pointer.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
            n = n.is_list() ? n[std::size_t(std::stoul(tok))] : n[tok];
            if (next == std::string::npos) break;
            pos = next + 1;
        }
        return n;
    }

    const ManifoldModel& model() const { return *model_; }
    const std::vector<CheckEntry>& checks() const { return checks_; }
    std::uint64_t seed() const { return seed_; }
    int sample_budget() const { return budget_; }
    int lp_cap() const { return lp_cap_; }
    const std::vector<double>& t_grid() const { return t_grid_; }
    const std::vector<int>& ladder() const { return ladder_; }
    const std::string& output_dir() const { return out_dir_; }
    const std::string& output_format() const { return format_; }
    const std::string& source() const { return doc_.source(); }

    void set_seed(std::uint64_t s) {
        seed_ = s;
        doc_.json()["seed"] = s;
    }

    // Content hash of the canonical document (after command-line overrides).
    std::string digest() const { return doc_.digest(); }
    const nlohmann::json& canonical() const { return doc_.json(); }

    // Cartesian product of the sweep axes; a single cell when there is no sweep.
    std::vector<Cell> cells(bool sweep) const {
        std::vector<double> ks = kappas_;
        std::vector<std::optional<double>> ts{std::nullopt};
        std::vector<std::optional<int>> rs{std::nullopt};
        if (sweep) {
            if (!sweep_kappa_.empty()) ks = sweep_kappa_;
            if (!sweep_t_.empty()) ts.assign(sweep_t_.begin(), sweep_t_.end());
            if (!sweep_res_.empty()) rs.assign(sweep_res_.begin(), sweep_res_.end());
        }
        std::vector<Cell> out;
        for (double k : ks)
            for (auto& t : ts)
                for (auto& r : rs) out.push_back({k, t, r});
        return out;
    }

private:
    ConfigDocument doc_;
    std::optional<ManifoldModel> model_;
    std::vector<double> kappas_;
    std::vector<double> sweep_kappa_, sweep_t_;
    std::vector<int> sweep_res_;
    std::vector<CheckEntry> checks_;
    std::vector<double> t_grid_ = {0.25, 0.5, 0.75};
    std::vector<int> ladder_ = {33, 65, 129};
    std::uint64_t seed_ = 1;
    int budget_ = 256;
    int lp_cap_ = 512;
    std::string out_dir_, format_ = "json";

    static std::vector<int> parse_ladder(const ConfigNode& n) {
        std::vector<int> v;
        if (!n.is_list() || n.size() == 0) n.fail(n.where() + " must be a non-empty list of integers");
        for (std::size_t i = 0; i < n.size(); ++i) {
            long long r = n[i].integer();
            if (r < 2 || r > 4097) n[i].fail("resolutions must lie in [2, 4097]");
            if (!v.empty() && r <= v.back()) n[i].fail("resolutions must increase");
            v.push_back(int(r));
        }
        return v;
    }
    static std::vector<double> parse_ts(const ConfigNode& n) {
        auto ts = n.number_or_list();
        if (ts.empty()) n.fail(n.where() + " is empty");
        for (double t : ts)
            if (!(t > 0 && t < 1)) n.fail("t values must lie in (0,1)");
        return ts;
    }

    void validate() {
        auto r = root();
        r.allow_keys({"name", "model", "weight", "kappa", "seed", "sample_budget", "lp_cap", "t_grid", "ladder", "checks", "sweep", "output"});
        if (r.has("name")) r["name"].string();
        std::optional<ConfigNode> w;
        if (r.has("weight")) w = r["weight"];
        model_ = weighted_model_from_spec(r["model"], w);
        if (r.has("seed")) {
            long long s = r["seed"].integer();
            if (s < 0) r["seed"].fail("seed must be nonnegative");
            seed_ = std::uint64_t(s);
        }
        budget_ = int(r.integer("sample_budget", budget_));
        if (budget_ < 1 || budget_ > 1000000) r["sample_budget"].fail("sample_budget must lie in [1, 1e6]");
        lp_cap_ = int(r.integer("lp_cap", lp_cap_));
        if (lp_cap_ < 2 || lp_cap_ > 4096) r["lp_cap"].fail("lp_cap must lie in [2, 4096]");
        if (r.has("t_grid")) t_grid_ = parse_ts(r["t_grid"]);
        if (r.has("ladder")) ladder_ = parse_ladder(r["ladder"]);
        if (r.has("kappa")) {
            auto k = r["kappa"];
            if (k.json().is_string()) {
                if (k.string() != "admissible") k.fail("kappa must be a number, a list of numbers or 'admissible'");
                if (model_->dim() < 2) k.fail("'admissible' needs n >= 2");
                kappas_ = {admissible_kappa(*model_, budget_, seed_)};
            } else {
                kappas_ = k.number_or_list();
                if (kappas_.empty()) k.fail("kappa list is empty");
            }
        } else {
            kappas_ = {0.0};
        }
        if (r.has("sweep")) {
            auto s = r["sweep"];
            s.allow_keys({"kappa", "t", "resolution"});
            if (s.has("kappa")) sweep_kappa_ = s["kappa"].number_or_list();
            if (s.has("t")) sweep_t_ = s["t"].number_or_list();
            for (double t : sweep_t_)
                if (!(t > 0 && t < 1)) s["t"].fail("t values must lie in (0,1)");
            if (s.has("resolution")) {
                auto rr = s["resolution"];
                if (rr.is_list()) sweep_res_ = parse_ladder(rr);
                else sweep_res_ = {int(rr.integer())};
                for (int v : sweep_res_)
                    if (v < 9) rr.fail("sweep resolutions must be at least 9");
            }
        }
        if (r.has("output")) {
            auto o = r["output"];
            o.allow_keys({"dir", "format"});
            out_dir_ = o.string("dir", "");
            format_ = o.string("format", format_);
            if (format_ != "json" && format_ != "csv" && format_ != "text") o["format"].fail("format must be json, csv or text");
        }
        auto cl = r["checks"];
        if (!cl.is_list() || cl.size() == 0) cl.fail("'checks' must be a non-empty list");
        for (std::size_t i = 0; i < cl.size(); ++i) {
            auto e = cl[i];
            e.require_map();
            std::string raw = e["id"].string();
            std::string id = resolve_check_id(raw);
            if (id.empty()) e["id"].fail("unknown statement id '" + raw + "'");
            checks_.push_back({id, e.pointer()});
            // Build every input once so that malformed entries fail at parse time.
            prepare(id, e);
        }
    }

    void prepare(const std::string& id, const ConfigNode& e) const;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent seed of job k; the schedule never touches it.
inline std::uint64_t job_seed(std::uint64_t seed, std::size_t k) { return splitmix64(seed ^ splitmix64(k + 1)); }

// Worst report of a family: any fail, else the smallest passing margin.
inline VerificationReport combine(std::vector<VerificationReport> rs, const std::string& what) {
    if (rs.empty()) throw NotApplicable("no " + what + " passed the hypotheses");
    int counts[4] = {0, 0, 0, 0};
    std::size_t worst = 0;
    auto rank = [](Status s) {
        switch (s) {
        case Status::fail: return 0;
        case Status::pass: return 1;
        case Status::hypothesis_unmet: return 2;
        default: return 3;
        }
    };
    for (std::size_t i = 0; i < rs.size(); ++i) {
        counts[int(rs[i].status)]++;
        int a = rank(rs[i].status), b = rank(rs[worst].status);
        if (a < b || (a == b && rs[i].margin < rs[worst].margin)) worst = i;
    }
    VerificationReport r = rs[worst];
    r.details["instances"] = rs.size();
    r.details["worst_instance"] = worst;
    r.details["status_counts"] = {{"pass", counts[int(Status::pass)]},
                                  {"fail", counts[int(Status::fail)]},
                                  {"hypothesis-unmet", counts[int(Status::hypothesis_unmet)]},
                                  {"not-applicable", counts[int(Status::not_applicable)]}};
    return r;
}

// Ladder for a single sweep resolution N: N and two coarser dyadic levels.
inline std::vector<int> ladder_ending_at(int N) {
    int a = std::max(3, (N + 3) / 4), b = std::max(a + 1, (N + 1) / 2);
    return {a, b, std::max(b + 1, N)};
}

inline Vec point_or(const ConfigNode& e, const char* key, const Vec& fallback, int ambient) {
    if (!e.has(key)) return fallback;
    auto n = e[key];
    if (int(n.size()) != ambient) n.fail(std::string("'") + key + "' needs " + std::to_string(ambient) + " ambient coordinates");
    return n.vec();
}

} // namespace detail

// Everything a check needs at one cell.
struct RunContext {
    const ExperimentConfig& cfg;
    const ConfigNode& entry;
    Cell cell;
    std::uint64_t seed;

    const ManifoldModel& m() const { return cfg.model(); }

    CheckOptions options(bool set_ladder) const {
        CheckOptions o;
        o.seed = seed;
        o.sample_budget = cfg.sample_budget();
        o.lp_cap = cfg.lp_cap();
        if (entry.has("ladder")) {
            std::vector<int> v;
            auto l = entry["ladder"];
            for (std::size_t i = 0; i < l.size(); ++i) v.push_back(int(l[i].integer()));
            o.ladder = v;
        } else if (!set_ladder) {
            o.ladder = cfg.ladder();
        } else {
            o.ladder = {9, 17, 33};
        }
        if (cell.resolution) o.ladder = detail::ladder_ending_at(*cell.resolution);
        return o;
    }
    std::vector<double> ts() const { return cell.t ? std::vector<double>{*cell.t} : cfg.t_grid(); }
};

namespace detail {

// Keys each check entry may carry besides 'id' and 'ladder'.
inline std::vector<const char*> check_keys(const std::string& id) {
    if (id == "curvature_margin" || id == "diameter") return {};
    if (id == "riccati_unweighted" || id == "riccati_weighted" || id == "d_concavity" || id == "dbar_concavity" ||
        id == "jacobian_inequality" || id == "comparison_lemma")
        return {"rays", "potential", "nodes"};
    if (id == "displacement_convexity") return {"dc", "region", "rho0", "potential", "ray_nodes"};
    if (id == "brunn_minkowski") return {"X", "Y"};
    if (id == "prekopa_leindler") return {"X", "Y", "psi0", "psi1", "psi", "p"};
    if (id == "taylor_expansion") return {"point", "tangent", "delta_grid"};
    if (id == "entropy_derivative") return {"rho0", "rho1"};
    if (id == "hwi" || id == "log_sobolev") return {"rho", "delta"};
    if (id == "transport_energy") return {"rho"};
    if (id == "curvature_violation") return {"delta_grid"};
    if (id == "beta_asymptotics") return {"x", "y", "pairs"};
    return {};
}

inline void check_entry_keys(const std::string& id, const ConfigNode& e) {
    auto allowed = check_keys(id);
    for (auto& [k, v] : e.json().items()) {
        bool ok = k == "id" || k == "ladder";
        for (auto a : allowed) ok = ok || k == a;
        if (!ok) e[k].fail("unknown key '" + k + "' for check '" + id + "'");
    }
    if (e.has("ladder")) {
        auto l = e["ladder"];
        if (!l.is_list() || l.size() == 0) l.fail("'ladder' must be a non-empty list of integers");
        long long prev = 0;
        for (std::size_t i = 0; i < l.size(); ++i) {
            long long r = l[i].integer();
            if (r <= prev || r < 2) l[i].fail("ladder resolutions must increase from at least 2");
            prev = r;
        }
    }
}

inline std::vector<TransportRay> sample_rays(const RunContext& c, int* rejected) {
    const auto& m = c.m();
    auto e = c.entry;
    int count = int(e.integer("rays", 8));
    int nodes = int(e.integer("nodes", 129));
    ScalarField phi = field_from_spec(e["potential"]);
    std::mt19937_64 rng(c.seed);
    std::vector<TransportRay> rays;
    *rejected = 0;
    for (int k = 0; k < count; ++k) {
        Vec x = k == 0 ? m.geometry().base_point() : m.geometry().sample_point(rng);
        try {
            rays.push_back(propagate_ray(m, x, potential_at(m, phi, x), nodes));
        } catch (const RejectedRayError&) {
            ++*rejected;
        } catch (const DegeneratePairError&) {
            ++*rejected;
        }
    }
    return rays;
}

} // namespace detail

inline void ExperimentConfig::prepare(const std::string& id, const ConfigNode& e) const {
    detail::check_entry_keys(id, e);
    const auto& m = *model_;
    if (id == "riccati_unweighted" || id == "riccati_weighted" || id == "d_concavity" || id == "dbar_concavity" ||
        id == "jacobian_inequality" || id == "comparison_lemma") {
        field_from_spec(e["potential"]);
        if (e.integer("rays", 8) < 1) e["rays"].fail("'rays' must be positive");
        if (e.integer("nodes", 129) < 33) e["nodes"].fail("ray grids need at least 33 nodes");
    } else if (id == "displacement_convexity") {
        if (e.has("dc")) dc_from_node(e["dc"], m.dim());
        region_from_spec(e["region"], m);
        if (e.has("rho0")) field_from_spec(e["rho0"]);
        field_from_spec(e["potential"]);
        long long rn = e.integer("ray_nodes", 17);
        if (rn < 5 || (rn - 1) % 4 != 0) e["ray_nodes"].fail("ray_nodes must be 4k + 1 with k >= 1");
    } else if (id == "brunn_minkowski") {
        region_from_spec(e["X"], m);
        region_from_spec(e["Y"], m);
    } else if (id == "prekopa_leindler") {
        region_from_spec(e["X"], m);
        region_from_spec(e["Y"], m);
        field_from_spec(e["psi0"]);
        field_from_spec(e["psi1"]);
        if (e.has("psi")) field_from_spec(e["psi"]);
        double p = e.number("p", 0.0);
        if (!(p >= -1.0 / m.dim())) e["p"].fail("p must be at least -1/n");
    } else if (id == "taylor_expansion") {
        detail::point_or(e, "point", Vec(), m.geometry().ambient_dim());
        detail::point_or(e, "tangent", Vec(), m.geometry().ambient_dim());
        if (e.has("delta_grid")) e["delta_grid"].numbers();
    } else if (id == "entropy_derivative") {
        field_from_spec(e["rho0"]);
        field_from_spec(e["rho1"]);
    } else if (id == "hwi" || id == "log_sobolev" || id == "transport_energy") {
        field_from_spec(e["rho"]);
        if (e.has("delta")) e["delta"].number();
    } else if (id == "curvature_violation") {
        if (e.has("delta_grid")) e["delta_grid"].numbers();
    } else if (id == "beta_asymptotics") {
        if (e.has("x") != e.has("y")) e.fail("beta_asymptotics needs both 'x' and 'y', or 'pairs'");
        detail::point_or(e, "x", Vec(), m.geometry().ambient_dim());
        detail::point_or(e, "y", Vec(), m.geometry().ambient_dim());
        if (e.integer("pairs", 1) < 1) e["pairs"].fail("'pairs' must be positive");
    }
}

// Runs one check at one cell. Library errors propagate; an infinite twisted
// coefficient or an empty family becomes a not-applicable report.
inline VerificationReport run_check(const RunContext& c, const std::string& id) {
    const auto& m = c.m();
    const auto& e = c.entry;
    const double kappa = c.cell.kappa;
    const auto ts = c.ts();
    try {
        if (id == "curvature_margin") {
            VerificationReport r;
            r.id = id;
            r.seed = c.seed;
            auto s = curvature_margin_sample(m, kappa, c.cfg.sample_budget(), c.seed);
            r.lhs = s.margin;
            r.rhs = 0;
            r.margin = s.margin;
            r.tol_analytic = 1e-9 * detail::hypothesis_scale(m, kappa);
            r.details = {{"samples", s.samples},
                         {"witness_point", std::vector<double>(s.point.data(), s.point.data() + s.point.size())},
                         {"witness_tangent", std::vector<double>(s.tangent.data(), s.tangent.data() + s.tangent.size())}};
            r.status = Status::pass;
            if (s.margin < -r.tol_analytic) return r.unmet("curvature bound fails on the sample set (violation)");
            return r.decide();
        }
        if (id == "diameter") {
            if (!(kappa > 0)) {
                VerificationReport r;
                r.id = id;
                r.seed = c.seed;
                return r.inapplicable("diameter comparison needs kappa > 0");
            }
            return diameter_check(m, kappa, c.cfg.sample_budget(), c.seed);
        }
        if (id == "riccati_unweighted" || id == "riccati_weighted" || id == "d_concavity" || id == "dbar_concavity" ||
            id == "jacobian_inequality" || id == "comparison_lemma") {
            int rejected = 0;
            auto rays = detail::sample_rays(c, &rejected);
            std::vector<VerificationReport> rs;
            for (auto& ray : rays) {
                try {
                    if (id == "riccati_unweighted") rs.push_back(check_riccati_unweighted(ray));
                    else if (id == "riccati_weighted") rs.push_back(check_riccati_weighted(ray));
                    else if (id == "d_concavity") rs.push_back(check_D_concavity(ray, kappa));
                    else if (id == "dbar_concavity") rs.push_back(check_Dbar_concavity(ray));
                    else if (id == "jacobian_inequality") rs.push_back(check_jacobian_inequality(ray, kappa));
                    else rs.push_back(check_comparison_lemma(ray.s.D, 1.0, kappa, ray.length()));
                } catch (const DegeneratePairError&) {
                    ++rejected;
                }
            }
            auto r = detail::combine(rs, "ray");
            r.id = id;
            r.seed = c.seed;
            r.details["rejected_rays"] = rejected;
            return r;
        }
        if (id == "displacement_convexity") {
            ConvexityInput in{region_from_spec(e["region"], m), e.has("rho0") ? field_from_spec(e["rho0"]) : ScalarField::constant(1.0),
                              field_from_spec(e["potential"]), int(e.integer("ray_nodes", 17))};
            auto U = e.has("dc") ? dc_from_node(e["dc"], m.dim()) : DCFunction::renyi(m.dim());
            return check_displacement_convexity(m, kappa, in, U, ts, c.options(false));
        }
        if (id == "brunn_minkowski" || id == "prekopa_leindler") {
            std::vector<VerificationReport> rs;
            Region X = region_from_spec(e["X"], m), Y = region_from_spec(e["Y"], m);
            for (double t : ts) {
                if (id == "brunn_minkowski") {
                    rs.push_back(check_brunn_minkowski(m, kappa, X, Y, t, c.options(true)));
                } else {
                    PrekopaInput in{field_from_spec(e["psi0"]), field_from_spec(e["psi1"]), X, Y, std::nullopt};
                    if (e.has("psi")) in.psi = field_from_spec(e["psi"]);
                    rs.push_back(check_prekopa_leindler(m, kappa, in, e.number("p", 0.0), t, c.options(true)));
                }
                rs.back().details["t"] = t;
            }
            return detail::combine(rs, "t value");
        }
        if (id == "taylor_expansion") {
            const auto& g = m.geometry();
            Vec x = detail::point_or(e, "point", g.base_point(), g.ambient_dim());
            Vec v = detail::point_or(e, "tangent", Vec(g.tangent_basis(x).col(0)), g.ambient_dim());
            std::vector<double> grid = e.has("delta_grid") ? e["delta_grid"].numbers() : std::vector<double>{};
            return check_taylor_expansion(m, x, v, kappa, grid, c.options(false));
        }
        if (id == "entropy_derivative") {
            return check_entropy_derivative(m, field_from_spec(e["rho0"]), field_from_spec(e["rho1"]), kappa, c.options(false));
        }
        if (id == "hwi") return check_hwi(m, kappa, field_from_spec(e["rho"]), e.number("delta", std::nan("")), c.options(false));
        if (id == "log_sobolev")
            return check_log_sobolev(m, kappa, field_from_spec(e["rho"]), e.number("delta", std::nan("")), c.options(false));
        if (id == "transport_energy") return check_transport_energy(m, kappa, field_from_spec(e["rho"]), c.options(false));
        if (id == "curvature_violation") {
            std::vector<double> grid = e.has("delta_grid") ? e["delta_grid"].numbers() : std::vector<double>{};
            return detect_curvature_violation(m, kappa, c.options(false), grid);
        }
        if (id == "beta_asymptotics") {
            const auto& g = m.geometry();
            if (e.has("x")) return check_beta_asymptotics(m, e["x"].vec(), e["y"].vec(), kappa, c.options(false));
            std::mt19937_64 rng(c.seed);
            std::uniform_real_distribution<double> U(0.2, 0.8);
            std::vector<VerificationReport> rs;
            long long pairs = e.integer("pairs", 4);
            for (long long k = 0; k < pairs; ++k) {
                Vec x = g.sample_point(rng);
                Vec u = g.sample_unit_tangent(x, rng);
                double reach = std::min(g.safe_radius(), 2.0);
                Vec y = g.exp(x, U(rng) * reach * u).point;
                try {
                    rs.push_back(check_beta_asymptotics(m, x, y, kappa, c.options(false)));
                } catch (const DegeneratePairError&) {
                }
            }
            return detail::combine(rs, "pair");
        }
    } catch (const NotApplicable& ex) {
        VerificationReport r;
        r.id = id;
        r.seed = c.seed;
        return r.inapplicable(ex.what());
    }
    throw ConfigurationError("no runner for statement '" + id + "'");
}

// A report tagged with the cell it belongs to.
struct CellReport {
    std::size_t check_index;
    Cell cell;
    VerificationReport report;
};

// Error raised inside a check, anchored at the check's config line.
inline ConfigError anchored(const ExperimentConfig& cfg, const ConfigNode& entry, const std::string& id, const std::exception& e) {
    if (auto ce = dynamic_cast<const ConfigError*>(&e)) return *ce;
    return ConfigError(cfg.source(), entry.line(), "check '" + id + "': " + e.what());
}

// Runs every check over every cell with `jobs` workers. Results are ordered
// by (cell, check) and do not depend on the worker count.
inline std::vector<CellReport> run_experiment(const ExperimentConfig& cfg, bool sweep, int jobs = 1) {
    auto cells = cfg.cells(sweep);
    const auto& checks = cfg.checks();
    const std::size_t total = cells.size() * checks.size();
    std::vector<std::optional<CellReport>> out(total);
    std::vector<std::exception_ptr> errors(total);
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k; (k = next.fetch_add(1)) < total;) {
            std::size_t ci = k / checks.size(), qi = k % checks.size();
            ConfigNode entry = cfg.node(checks[qi].pointer);
            try {
                RunContext ctx{cfg, entry, cells[ci], detail::job_seed(cfg.seed(), k)};
                auto r = run_check(ctx, checks[qi].id);
                nlohmann::json cell = {{"kappa", encode_real(cells[ci].kappa)}};
                if (cells[ci].t) cell["t"] = *cells[ci].t;
                if (cells[ci].resolution) cell["resolution"] = *cells[ci].resolution;
                r.details["cell"] = cell;
                r.digest = digest_of({{"config", cfg.digest()}, {"check", qi}, {"cell", cell}});
                out[k] = CellReport{qi, cells[ci], std::move(r)};
            } catch (const Error& e) {
                errors[k] = std::make_exception_ptr(anchored(cfg, entry, checks[qi].id, e));
            } catch (const std::exception& e) {
                errors[k] = std::make_exception_ptr(anchored(cfg, entry, checks[qi].id, e));
            }
        }
    };
    jobs = std::max(1, std::min<int>(jobs, int(total)));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    std::vector<CellReport> res;
    for (auto& r : out) res.push_back(std::move(*r));
    return res;
}

// 0: every report passes, is hypothesis-unmet or not applicable; 1: any fail.
inline int exit_status(const std::vector<CellReport>& rs) {
    for (auto& r : rs)
        if (r.report.status == Status::fail) return 1;
    return 0;
}

// Rendering ---------------------------------------------------------------------

inline nlohmann::json render_json(const ExperimentConfig& cfg, const std::vector<CellReport>& rs, const std::string& command) {
    nlohmann::json reports = nlohmann::json::array();
    for (auto& r : rs) reports.push_back(to_json(r.report));
    return {{"schema", "report-bundle.v1"},
            {"command", command},
            {"config_digest", cfg.digest()},
            {"config", cfg.canonical()},
            {"model", cfg.model().spec()},
            {"reports", reports}};
}

inline std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

inline std::string render_csv(const std::vector<CellReport>& rs) {
    std::ostringstream s;
    s << "check,kappa,t,resolution,status,margin,lhs,rhs,tol_analytic,eps_disc,digest\n";
    for (auto& r : rs) {
        const auto& x = r.report;
        s << x.id << ',' << format_real(r.cell.kappa) << ',' << (r.cell.t ? format_real(*r.cell.t) : "") << ','
          << (r.cell.resolution ? std::to_string(*r.cell.resolution) : "") << ',' << to_string(x.status) << ','
          << format_real(x.margin) << ',' << format_real(x.lhs) << ',' << format_real(x.rhs) << ',' << format_real(x.tol_analytic) << ','
          << format_real(x.tol_disc) << ',' << x.digest << '\n';
    }
    return s.str();
}

inline std::string render_text(const std::vector<CellReport>& rs) {
    std::ostringstream s;
    for (auto& r : rs) {
        const auto& x = r.report;
        s << std::left << std::setw(17) << to_string(x.status) << std::setw(24) << x.id << "kappa=" << format_real(r.cell.kappa);
        if (r.cell.t) s << " t=" << format_real(*r.cell.t);
        if (r.cell.resolution) s << " N=" << *r.cell.resolution;
        s << " margin=" << format_real(x.margin) << " tol=" << format_real(x.tolerance());
        for (auto& n : x.notes) s << " [" << n << "]";
        s << '\n';
    }
    return s.str();
}

// Writes through a temporary file in the same directory and renames it into place.
inline void write_atomically(const std::filesystem::path& path, const std::string& bytes) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
        if (!o) throw ConfigurationError("cannot write " + tmp.string());
        o << bytes;
        o.flush();
        if (!o) throw ConfigurationError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

} // namespace twisted
