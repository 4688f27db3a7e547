#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "errors.hpp"

namespace twisted {

enum class Status { pass, fail, hypothesis_unmet, not_applicable };

inline const char* to_string(Status s) {
    switch (s) {
    case Status::pass: return "pass";
    case Status::fail: return "fail";
    case Status::hypothesis_unmet: return "hypothesis-unmet";
    case Status::not_applicable: return "not-applicable";
    }
    return "?";
}

inline Status status_from_string(const std::string& s) {
    if (s == "pass") return Status::pass;
    if (s == "fail") return Status::fail;
    if (s == "hypothesis-unmet") return Status::hypothesis_unmet;
    if (s == "not-applicable") return Status::not_applicable;
    throw ConfigurationError("unknown report status '" + s + "'");
}

struct StatementInfo {
    std::string id;
    std::string anchor;
};

// Every checkable statement with a descriptive anchor.
inline const std::vector<StatementInfo>& statement_catalog() {
    static const std::vector<StatementInfo> c = {
        {"curvature_margin", "weighted Ricci lower bound Ric^1_f >= (n-1) kappa e^{-4f/(n-1)}"},
        {"diameter", "comparison of the re-parametrized diameter with pi/sqrt(kappa)"},
        {"riccati_unweighted", "Riccati inequality for the log-Jacobian h_x"},
        {"riccati_weighted", "weighted Riccati inequality for L_x = e^{2f/(n-1)} l_x'"},
        {"comparison_lemma", "sine-type comparison for D'' + kappa d^2 D <= 0"},
        {"d_concavity", "twisted concavity of D_x"},
        {"dbar_concavity", "concavity of Dbar_x"},
        {"jacobian_inequality", "twisted concavity of J_t^{1/n}"},
        {"displacement_convexity", "twisted displacement convexity of U_m"},
        {"brunn_minkowski", "twisted Brunn-Minkowski inequality"},
        {"taylor_expansion", "second-order Taylor series of the twisted coefficient at a midpoint"},
        {"prekopa_leindler", "twisted Prekopa-Leindler inequality"},
        {"entropy_derivative", "first variation of the Renyi entropy along a Wasserstein geodesic"},
        {"hwi", "HWI inequality under the twisted curvature bound"},
        {"log_sobolev", "logarithmic Sobolev inequality under the twisted curvature bound"},
        {"transport_energy", "finite-dimensional transport energy inequality"},
        {"curvature_violation", "second-order detection of a failing curvature bound"},
        {"beta_asymptotics", "t -> 0 limits of the twisted coefficients"},
    };
    return c;
}

inline bool is_statement_id(const std::string& id) {
    for (auto& s : statement_catalog())
        if (s.id == id) return true;
    return false;
}

// Non-finite doubles are written as strings so that the JSON round trip is exact.
inline nlohmann::json encode_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double decode_real(const nlohmann::json& j) {
    if (j.is_string()) {
        auto s = j.get<std::string>();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        throw ConfigurationError("bad real literal '" + s + "'");
    }
    return j.get<double>();
}

struct VerificationReport {
    std::string id;
    std::string digest;
    double lhs = std::nan("");
    double rhs = std::nan("");
    double margin = std::nan("");
    double tol_analytic = 1e-6;
    double tol_disc = 0.0;
    Status status = Status::pass;
    std::uint64_t seed = 0;
    nlohmann::json details = nlohmann::json::object();
    std::vector<std::string> notes;

    double tolerance() const { return tol_analytic + tol_disc; }

    // pass iff margin >= -tolerance.
    VerificationReport& decide() {
        if (status == Status::hypothesis_unmet || status == Status::not_applicable) return *this;
        status = (margin >= -tolerance()) ? Status::pass : Status::fail;
        return *this;
    }
    VerificationReport& unmet(const std::string& why) {
        status = Status::hypothesis_unmet;
        notes.push_back(why);
        return *this;
    }
    VerificationReport& inapplicable(const std::string& why) {
        status = Status::not_applicable;
        notes.push_back(why);
        return *this;
    }
};

inline nlohmann::json to_json(const VerificationReport& r) {
    return {{"schema", "report.v1"},
            {"id", r.id},
            {"digest", r.digest},
            {"lhs", encode_real(r.lhs)},
            {"rhs", encode_real(r.rhs)},
            {"margin", encode_real(r.margin)},
            {"tolerance", {{"analytic", encode_real(r.tol_analytic)}, {"discretization", encode_real(r.tol_disc)}}},
            {"status", to_string(r.status)},
            {"seed", r.seed},
            {"details", r.details},
            {"notes", r.notes}};
}

inline VerificationReport report_from_json(const nlohmann::json& j) {
    if (j.value("schema", "") != "report.v1") throw ConfigurationError("unsupported report schema");
    VerificationReport r;
    r.id = j.at("id").get<std::string>();
    r.digest = j.at("digest").get<std::string>();
    r.lhs = decode_real(j.at("lhs"));
    r.rhs = decode_real(j.at("rhs"));
    r.margin = decode_real(j.at("margin"));
    r.tol_analytic = decode_real(j.at("tolerance").at("analytic"));
    r.tol_disc = decode_real(j.at("tolerance").at("discretization"));
    r.status = status_from_string(j.at("status").get<std::string>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.details = j.at("details");
    r.notes = j.at("notes").get<std::vector<std::string>>();
    return r;
}

} // namespace twisted
