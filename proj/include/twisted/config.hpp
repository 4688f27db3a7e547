#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "discrete_ot.hpp"
#include "entropies.hpp"
#include "errors.hpp"
#include "model.hpp"
#include "report.hpp"

namespace twisted {

// A configuration error tied to a source line (1-based; 0 when unknown).
class ConfigError : public ConfigurationError {
public:
    ConfigError(std::string source, int line, const std::string& msg)
        : ConfigurationError(format(source, line, msg)), line_(line), message_(msg) {}
    int line() const { return line_; }
    const std::string& message() const { return message_; }

private:
    int line_;
    std::string message_;
    static std::string format(const std::string& source, int line, const std::string& msg) {
        std::string s = source.empty() ? "<config>" : source;
        if (line > 0) s += ":" + std::to_string(line);
        return s + ": " + msg;
    }
};

// 64-bit FNV-1a, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// nlohmann::json keeps object keys sorted, so the dump is independent of the
// order in which fields were written.
inline std::string canonical_dump(const nlohmann::json& j) { return j.dump(); }

inline std::string digest_of(const nlohmann::json& j) { return fnv1a_hex(canonical_dump(j)); }

namespace detail {

using LineMap = std::map<std::string, int>;

inline nlohmann::json scalar_value(const YAML::Node& n) {
    const std::string& s = n.Scalar();
    if (n.Tag() == "!") return s;  // quoted
    if (s == "~" || s == "null") return nullptr;
    if (s == "true") return true;
    if (s == "false") return false;
    if (!s.empty()) {
        char* end = nullptr;
        long long i = std::strtoll(s.c_str(), &end, 10);
        if (*end == '\0') return i;
        double d = std::strtod(s.c_str(), &end);
        if (*end == '\0') return d;
        if (s == "inf" || s == ".inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf" || s == "-.inf") return -std::numeric_limits<double>::infinity();
    }
    return s;
}

inline std::string escape_pointer(const std::string& key) {
    std::string out;
    for (char c : key) {
        if (c == '~') out += "~0";
        else if (c == '/') out += "~1";
        else out += c;
    }
    return out;
}

inline nlohmann::json yaml_to_json(const YAML::Node& n, const std::string& ptr, LineMap& lines, const std::string& source) {
    lines[ptr] = n.Mark().line + 1;
    switch (n.Type()) {
    case YAML::NodeType::Null: return nullptr;
    case YAML::NodeType::Scalar: return scalar_value(n);
    case YAML::NodeType::Sequence: {
        nlohmann::json a = nlohmann::json::array();
        for (std::size_t i = 0; i < n.size(); ++i) a.push_back(yaml_to_json(n[i], ptr + "/" + std::to_string(i), lines, source));
        return a;
    }
    case YAML::NodeType::Map: {
        nlohmann::json o = nlohmann::json::object();
        for (auto it = n.begin(); it != n.end(); ++it) {
            std::string key = it->first.as<std::string>();
            if (o.contains(key)) throw ConfigError(source, it->first.Mark().line + 1, "duplicate key '" + key + "'");
            std::string child = ptr + "/" + escape_pointer(key);
            o[key] = yaml_to_json(it->second, child, lines, source);
            lines[child] = it->first.Mark().line + 1;
        }
        return o;
    }
    default: return nullptr;
    }
}

} // namespace detail

// Read-only view of a parsed document that reports errors at source lines.
class ConfigNode {
public:
    ConfigNode(const nlohmann::json* j, std::string ptr, const detail::LineMap* lines, const std::string* source)
        : j_(j), ptr_(std::move(ptr)), lines_(lines), source_(source) {}

    const nlohmann::json& json() const { return *j_; }
    const std::string& pointer() const { return ptr_; }
    int line() const {
        std::string p = ptr_;
        while (true) {
            auto it = lines_->find(p);
            if (it != lines_->end()) return it->second;
            auto cut = p.rfind('/');
            if (cut == std::string::npos) return 0;
            p = p.substr(0, cut);
        }
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(*source_, line(), msg); }

    std::string where() const { return ptr_.empty() ? "document" : "'" + ptr_.substr(1) + "'"; }

    bool is_map() const { return j_->is_object(); }
    bool is_list() const { return j_->is_array(); }
    bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

    ConfigNode operator[](const std::string& key) const {
        if (!j_->is_object()) fail(where() + " must be a mapping");
        auto it = j_->find(key);
        if (it == j_->end()) fail("missing key '" + key + "' in " + where());
        return {&*it, ptr_ + "/" + detail::escape_pointer(key), lines_, source_};
    }
    ConfigNode operator[](std::size_t i) const {
        if (!j_->is_array() || i >= j_->size()) fail(where() + " has no element " + std::to_string(i));
        return {&(*j_)[i], ptr_ + "/" + std::to_string(i), lines_, source_};
    }
    std::size_t size() const { return j_->is_array() || j_->is_object() ? j_->size() : 0; }

    void require_map() const {
        if (!j_->is_object()) fail(where() + " must be a mapping");
    }
    // Rejects keys outside `allowed`.
    void allow_keys(std::initializer_list<const char*> allowed) const {
        require_map();
        std::set<std::string> ok(allowed.begin(), allowed.end());
        for (auto& [k, v] : j_->items())
            if (!ok.count(k)) ConfigNode(&v, ptr_ + "/" + detail::escape_pointer(k), lines_, source_).fail("unknown key '" + k + "' in " + where());
    }

    double number() const {
        if (!j_->is_number()) fail(where() + " must be a number");
        return j_->get<double>();
    }
    double number(const std::string& key, double fallback) const { return has(key) ? (*this)[key].number() : fallback; }
    double positive(const std::string& key, double fallback) const {
        double v = number(key, fallback);
        if (!(v > 0)) (has(key) ? (*this)[key] : *this).fail("'" + key + "' must be positive");
        return v;
    }
    long long integer() const {
        if (!j_->is_number_integer()) fail(where() + " must be an integer");
        return j_->get<long long>();
    }
    long long integer(const std::string& key, long long fallback) const { return has(key) ? (*this)[key].integer() : fallback; }
    std::string string() const {
        if (!j_->is_string()) fail(where() + " must be a string");
        return j_->get<std::string>();
    }
    std::string string(const std::string& key, const std::string& fallback) const { return has(key) ? (*this)[key].string() : fallback; }
    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        auto n = (*this)[key];
        if (!n.j_->is_boolean()) n.fail(n.where() + " must be true or false");
        return n.j_->get<bool>();
    }
    std::vector<double> numbers() const {
        if (!j_->is_array()) fail(where() + " must be a list of numbers");
        std::vector<double> v;
        for (std::size_t i = 0; i < size(); ++i) v.push_back((*this)[i].number());
        return v;
    }
    Vec vec() const {
        auto v = numbers();
        return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
    // A scalar or a list of scalars.
    std::vector<double> number_or_list() const { return j_->is_array() ? numbers() : std::vector<double>{number()}; }

private:
    const nlohmann::json* j_;
    std::string ptr_;
    const detail::LineMap* lines_;
    const std::string* source_;
};

// Parsed config: the canonical JSON document plus source lines for diagnostics.
class ConfigDocument {
public:
    static ConfigDocument parse(const std::string& text, const std::string& source = "<config>") {
        ConfigDocument d;
        d.source_ = source;
        YAML::Node root;
        try {
            root = YAML::Load(text);
        } catch (const YAML::Exception& e) {
            throw ConfigError(source, e.mark.line + 1, e.msg);
        }
        if (!root.IsMap()) throw ConfigError(source, root.Mark().line + 1, "config must be a mapping");
        d.json_ = detail::yaml_to_json(root, "", d.lines_, source);
        return d;
    }
    static ConfigDocument load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError(path, 0, "cannot read config file");
        std::stringstream ss;
        ss << in.rdbuf();
        return parse(ss.str(), path);
    }

    ConfigNode root() const { return {&json_, "", &lines_, &source_}; }
    const nlohmann::json& json() const { return json_; }
    nlohmann::json& json() { return json_; }
    const std::string& source() const { return source_; }
    std::string digest() const { return digest_of(json_); }

private:
    nlohmann::json json_;
    detail::LineMap lines_;
    std::string source_;
};

// Catalog builders ------------------------------------------------------------

inline std::vector<std::pair<std::string, std::string>> model_catalog() {
    return {{"euclidean", "R^n; keys n, sample_radius"},
            {"sphere", "round sphere S^n(R); keys n, radius"},
            {"hyperbolic", "hyperboloid H^n; keys n, curvature_scale, sample_radius"},
            {"circle", "circle of given length (OT oracle only); key length"},
            {"flat_torus", "flat torus; key periods"},
            {"spheroid", "spheroid of revolution in R^3; keys a, c"}};
}

inline std::vector<std::pair<std::string, std::string>> field_catalog() {
    return {{"zero", "0"},
            {"constant", "value"},
            {"linear", "offset + <coefficients, x>"},
            {"radial_quadratic", "offset + scale |x - center|^2 / 2"},
            {"cosine", "offset + amplitude cos(2 pi x_axis / period)"},
            {"bump", "offset + amplitude exp(-|x - center|^2 / width^2)"},
            {"periodic_bump", "offset + amplitude exp(sharpness (cos(2 pi (x_axis - center)/period) - 1))"},
            {"expression", "closed form in x0, x1, ... (or x, y, z)"}};
}

inline ScalarField field_from_spec(const ConfigNode& n) {
    n.require_map();
    std::string kind = n.string("kind", "");
    if (kind.empty()) n.fail("field spec needs a 'kind'");
    ScalarField f;
    if (kind == "zero") {
        n.allow_keys({"kind", "shift"});
    } else if (kind == "constant") {
        n.allow_keys({"kind", "value", "shift"});
        f = ScalarField::constant(n["value"].number());
    } else if (kind == "linear") {
        n.allow_keys({"kind", "coefficients", "offset", "shift"});
        f = ScalarField::linear(n["coefficients"].vec(), n.number("offset", 0.0));
    } else if (kind == "radial_quadratic") {
        n.allow_keys({"kind", "scale", "center", "offset", "shift"});
        f = ScalarField::radial_quadratic(n["scale"].number(), n["center"].vec(), n.number("offset", 0.0));
    } else if (kind == "cosine") {
        n.allow_keys({"kind", "amplitude", "axis", "period", "offset", "shift"});
        f = ScalarField::cosine(n["amplitude"].number(), int(n["axis"].integer()), n.positive("period", 1.0), n.number("offset", 0.0));
    } else if (kind == "bump") {
        n.allow_keys({"kind", "amplitude", "center", "width", "offset", "shift"});
        f = ScalarField::bump(n["amplitude"].number(), n["center"].vec(), n.positive("width", 1.0), n.number("offset", 0.0));
    } else if (kind == "periodic_bump") {
        n.allow_keys({"kind", "amplitude", "axis", "period", "center", "sharpness", "offset", "shift"});
        f = ScalarField::periodic_bump(n["amplitude"].number(), int(n["axis"].integer()), n.positive("period", 1.0),
                                       n.number("center", 0.0), n.number("sharpness", 1.0), n.number("offset", 0.0));
    } else if (kind == "expression") {
        n.allow_keys({"kind", "text", "shift"});
        try {
            f = ScalarField::expression(n["text"].string());
        } catch (const Error& e) {
            n["text"].fail(e.what());
        }
    } else {
        n["kind"].fail("unknown field kind '" + kind + "'");
    }
    if (n.has("shift")) f = f.shifted(n["shift"].number());
    return f;
}

inline ScalarField field_from_json(const nlohmann::json& j) {
    detail::LineMap lines;
    std::string src = "<field>";
    return field_from_spec(ConfigNode(&j, "", &lines, &src));
}

inline ManifoldModel model_from_spec(const ConfigNode& n) {
    n.require_map();
    std::string kind = n.string("kind", "");
    if (kind.empty()) n.fail("model spec needs a 'kind'");
    auto dim = [&] {
        long long d = n["n"].integer();
        if (d < 1 || d > 8) n["n"].fail("dimension must lie in [1, 8]");
        return int(d);
    };
    try {
        if (kind == "euclidean") {
            n.allow_keys({"kind", "n", "sample_radius", "normalize"});
            return ManifoldModel::euclidean(dim(), n.positive("sample_radius", 1.0));
        }
        if (kind == "sphere") {
            n.allow_keys({"kind", "n", "radius", "normalize"});
            return ManifoldModel::sphere(dim(), n.positive("radius", 1.0));
        }
        if (kind == "hyperbolic") {
            n.allow_keys({"kind", "n", "curvature_scale", "sample_radius", "normalize"});
            return ManifoldModel::hyperbolic(dim(), n.positive("curvature_scale", 1.0), n.positive("sample_radius", 1.0));
        }
        if (kind == "circle") {
            n.allow_keys({"kind", "length", "normalize"});
            return ManifoldModel::circle(n.positive("length", 2 * kPi));
        }
        if (kind == "flat_torus") {
            n.allow_keys({"kind", "periods", "normalize"});
            return ManifoldModel::flat_torus(n["periods"].numbers());
        }
        if (kind == "spheroid") {
            n.allow_keys({"kind", "a", "c", "normalize"});
            return ManifoldModel::spheroid(n.positive("a", 1.0), n.positive("c", 1.0));
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        n.fail(e.what());
    }
    n["kind"].fail("unknown model '" + kind + "'");
}

// Full model: geometry, weight and optional normalization to unit mass.
inline ManifoldModel weighted_model_from_spec(const ConfigNode& model, const std::optional<ConfigNode>& weight) {
    ManifoldModel m = model_from_spec(model);
    if (weight) m = m.with_weight(field_from_spec(*weight));
    if (model.boolean("normalize", false)) {
        try {
            m = m.normalized();
        } catch (const Error& e) {
            model["normalize"].fail(e.what());
        }
    }
    return m;
}

inline Region region_from_spec(const ConfigNode& n, const ManifoldModel& m) {
    n.allow_keys({"box", "ball"});
    auto check_dim = [&](const ConfigNode& v, int want) {
        if (int(v.size()) != want) v.fail(v.where() + " needs " + std::to_string(want) + " entries");
    };
    if (n.has("box") == n.has("ball")) n.fail("region needs exactly one of 'box' or 'ball'");
    if (n.has("box")) {
        auto b = n["box"];
        b.allow_keys({"lo", "hi"});
        check_dim(b["lo"], m.dim());
        check_dim(b["hi"], m.dim());
        Vec lo = b["lo"].vec(), hi = b["hi"].vec();
        for (int k = 0; k < m.dim(); ++k)
            if (!(lo[k] < hi[k])) b.fail("box needs lo < hi on every axis");
        return Region::box(lo, hi);
    }
    auto b = n["ball"];
    b.allow_keys({"center", "radius"});
    check_dim(b["center"], m.geometry().ambient_dim());
    return Region::ball(m, b["center"].vec(), b.positive("radius", 1.0));
}

inline DCFunction dc_from_node(const ConfigNode& n, int dim) {
    n.allow_keys({"name", "N", "m", "expression"});
    std::string name = n.string("name", "renyi");
    nlohmann::json params = n.json();
    params.erase("name");
    try {
        return dc_from_spec(name, params, dim);
    } catch (const nlohmann::json::exception&) {
        n.fail("DC function '" + name + "' is missing a parameter");
    } catch (const Error& e) {
        n.fail(e.what());
    }
}

// Statement ids accepted in configs, with operation-name aliases.
inline std::string resolve_check_id(const std::string& id) {
    static const std::map<std::string, std::string> alias = {
        {"detect_curvature_violation", "curvature_violation"},
        {"diameter_check", "diameter"},
        {"curvature_hypothesis", "curvature_margin"},
    };
    auto it = alias.find(id);
    std::string r = it == alias.end() ? id : it->second;
    return is_statement_id(r) ? r : std::string();
}

} // namespace twisted
