#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "bml/analysis.hpp"
#include "bml/oracle.hpp"
#include "bml/solver.hpp"
#include "bml/spaces.hpp"

namespace bml::scenario {

using json = nlohmann::json;

inline constexpr const char* kToolName = "bmlfp";
inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr std::size_t kMaxListedViolations = 100;

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitFindings = 2 };

/// Schema violations, each prefixed with its field path.
class ScenarioError : public std::runtime_error {
public:
    explicit ScenarioError(std::vector<std::string> errors)
        : std::runtime_error(join(errors)), errors_(std::move(errors)) {}

    const std::vector<std::string>& errors() const noexcept { return errors_; }

private:
    static std::string join(const std::vector<std::string>& errors) {
        std::string out = "scenario schema errors:";
        for (const auto& e : errors) out += "\n  " + e;
        return out;
    }
    std::vector<std::string> errors_;
};

// ---------------------------------------------------------------------------
// Scenario model
// ---------------------------------------------------------------------------

struct SpaceSpec {
    std::string family;
    double k_const = 1.0;
    SpaceKind kind = SpaceKind::BMetricLike;
    std::optional<double> lower;
    std::optional<double> upper;  ///< absent means +infinity
    std::vector<double> points;   ///< abs_metric restricted to a finite set
    std::vector<std::string> labels;
    std::vector<std::vector<double>> matrix;
};

struct MapSpec {
    std::string type;
    double a = 1.0;
    std::vector<std::size_t> table;
};

struct HypothesisSpec {
    std::string type;  ///< "rl" or "phi"
    double r_const = 0.0;
    double l_const = 0.0;
    std::string family = "affine";
    double a = 0.0;
    double b = 0.0;
    std::string codomain = "k_squared";  ///< or "l_squared"
    double phi_l = 0.0;                  ///< L of the (L^2, inf) convention
};

struct RunSpec {
    std::string command = "solve";
    double x0 = 0.0;
    std::size_t max_steps = kDefaultMaxSteps;
    std::uint64_t seed = 1;
    std::size_t samples = 10000;
    double tol_axiom = kTolAxiom;
    double tol_point = kTolPoint;
    double tol_fix = kTolFix;
    double tol_convergence = 1e-6;
    std::optional<double> y_le_c_x;  ///< restrict audited pairs to y <= c x
};

struct Assumptions {
    bool complete = true;
    bool phi_limit_condition_attested = false;
};

struct OracleSpec {
    std::size_t n_max = oracle::kDefaultMaxCarrier;
    std::optional<oracle::SweepConfig> sweep;
};

struct Scenario {
    std::string name;
    SpaceSpec space;
    std::optional<std::pair<MapSpec, MapSpec>> maps;
    std::optional<HypothesisSpec> hypothesis;
    RunSpec run;
    Assumptions assumptions;
    OracleSpec oracle;
};

inline const std::vector<std::string>& known_families() {
    static const std::vector<std::string> names{"sqrt_square", "two_point_sigma", "abs_metric", "max_partial",
                                                "sum_metric_like", "squared_abs", "table"};
    return names;
}

inline const std::vector<std::string>& known_commands() {
    static const std::vector<std::string> names{"solve", "audit", "axioms", "oracle", "lemmas"};
    return names;
}

inline SpaceKind default_kind(const std::string& family) {
    if (family == "two_point_sigma" || family == "sum_metric_like") return SpaceKind::MetricLike;
    if (family == "abs_metric" || family == "squared_abs") return SpaceKind::BMetric;
    if (family == "max_partial") return SpaceKind::PartialMetric;
    return SpaceKind::BMetricLike;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

inline bool is_non_negative_integer(const json& v) {
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

class Reader {
public:
    std::vector<std::string> errors;

    const json* object(const json& parent, const std::string& key, const std::string& path, bool required) {
        if (!parent.contains(key)) {
            if (required) errors.push_back(path + ": required object missing");
            return nullptr;
        }
        const json& v = parent.at(key);
        if (!v.is_object()) {
            errors.push_back(path + ": expected an object");
            return nullptr;
        }
        return &v;
    }

    std::optional<double> number(const json& parent, const std::string& key, const std::string& path,
                                 bool required) {
        if (!parent.contains(key) || parent.at(key).is_null()) {
            if (required) errors.push_back(path + ": required number missing");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_number()) {
            errors.push_back(path + ": expected a number");
            return std::nullopt;
        }
        return v.get<double>();
    }

    double number_or(const json& parent, const std::string& key, const std::string& path, double fallback) {
        return number(parent, key, path, false).value_or(fallback);
    }

    std::optional<std::uint64_t> unsigned_int(const json& parent, const std::string& key, const std::string& path,
                                              bool required) {
        if (!parent.contains(key)) {
            if (required) errors.push_back(path + ": required integer missing");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!is_non_negative_integer(v)) {
            errors.push_back(path + ": expected a non-negative integer");
            return std::nullopt;
        }
        return v.get<std::uint64_t>();
    }

    std::optional<std::string> string(const json& parent, const std::string& key, const std::string& path,
                                      bool required) {
        if (!parent.contains(key)) {
            if (required) errors.push_back(path + ": required string missing");
            return std::nullopt;
        }
        const json& v = parent.at(key);
        if (!v.is_string()) {
            errors.push_back(path + ": expected a string");
            return std::nullopt;
        }
        return v.get<std::string>();
    }

    std::optional<bool> boolean(const json& parent, const std::string& key, const std::string& path) {
        if (!parent.contains(key)) return std::nullopt;
        const json& v = parent.at(key);
        if (!v.is_boolean()) {
            errors.push_back(path + ": expected a boolean");
            return std::nullopt;
        }
        return v.get<bool>();
    }

    std::vector<double> numbers(const json& parent, const std::string& key, const std::string& path,
                                std::vector<double> fallback) {
        if (!parent.contains(key)) return fallback;
        const json& v = parent.at(key);
        std::vector<double> out;
        if (!v.is_array()) {
            errors.push_back(path + ": expected an array of numbers");
            return fallback;
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!v[i].is_number()) {
                errors.push_back(path + "[" + std::to_string(i) + "]: expected a number");
                continue;
            }
            out.push_back(v[i].get<double>());
        }
        return out;
    }

    void only(const json& obj, const std::string& path, std::initializer_list<std::string_view> keys) {
        for (const auto& [key, _] : obj.items()) {
            if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
                errors.push_back((path.empty() ? key : path + "." + key) + ": unknown field");
            }
        }
    }

    void expect(bool condition, const std::string& message) {
        if (!condition) errors.push_back(message);
    }
};

inline SpaceSpec parse_space(Reader& rd, const json& j) {
    SpaceSpec s;
    rd.only(j, "space", {"family", "k", "kind", "lower", "upper", "points", "matrix", "labels"});
    s.family = rd.string(j, "family", "space.family", true).value_or("");
    const auto& families = known_families();
    if (!s.family.empty() && std::find(families.begin(), families.end(), s.family) == families.end()) {
        rd.errors.push_back("space.family: unresolved built-in '" + s.family + "'");
    }
    if (auto k = rd.number(j, "k", "space.k", true)) {
        s.k_const = *k;
        rd.expect(*k >= 1.0, "space.k: must be >= 1");
    }
    s.kind = default_kind(s.family);
    if (auto kind = rd.string(j, "kind", "space.kind", false)) {
        if (auto parsed = parse_space_kind(*kind)) {
            s.kind = *parsed;
        } else {
            rd.errors.push_back("space.kind: unresolved kind '" + *kind + "'");
        }
    }
    s.lower = rd.number(j, "lower", "space.lower", false);
    s.upper = rd.number(j, "upper", "space.upper", false);
    if (s.lower && s.upper) rd.expect(*s.lower < *s.upper, "space.upper: must exceed space.lower");
    s.points = rd.numbers(j, "points", "space.points", {});

    if (s.family == "table") {
        if (!j.contains("matrix") || !j.at("matrix").is_array()) {
            rd.errors.push_back("space.matrix: required n x n array for family 'table'");
        } else {
            const auto& m = j.at("matrix");
            for (std::size_t i = 0; i < m.size(); ++i) {
                const std::string path = "space.matrix[" + std::to_string(i) + "]";
                std::vector<double> row;
                if (!m[i].is_array()) {
                    rd.errors.push_back(path + ": expected an array");
                    continue;
                }
                for (std::size_t c = 0; c < m[i].size(); ++c) {
                    if (!m[i][c].is_number()) {
                        rd.errors.push_back(path + "[" + std::to_string(c) + "]: expected a number");
                        continue;
                    }
                    const double v = m[i][c].get<double>();
                    rd.expect(v >= 0, path + "[" + std::to_string(c) + "]: must be >= 0");
                    row.push_back(v);
                }
                rd.expect(row.size() == m.size(), path + ": matrix must be square");
                s.matrix.push_back(std::move(row));
            }
            for (std::size_t i = 0; i < s.matrix.size(); ++i) {
                for (std::size_t c = 0; c < s.matrix[i].size() && c < s.matrix.size(); ++c) {
                    if (s.matrix[c].size() > i && s.matrix[i][c] != s.matrix[c][i]) {
                        rd.errors.push_back("space.matrix: not symmetric at [" + std::to_string(i) + "][" +
                                            std::to_string(c) + "]");
                    }
                }
            }
        }
        if (j.contains("labels")) {
            const auto& l = j.at("labels");
            if (!l.is_array()) {
                rd.errors.push_back("space.labels: expected an array of strings");
            } else {
                for (const auto& v : l) {
                    if (v.is_string()) s.labels.push_back(v.get<std::string>());
                    else rd.errors.push_back("space.labels: expected strings");
                }
                rd.expect(s.labels.size() == s.matrix.size(), "space.labels: one label per matrix row");
            }
        }
    }
    return s;
}

inline MapSpec parse_map(Reader& rd, const json& j, const std::string& path) {
    MapSpec m;
    rd.only(j, path, {"type", "a", "table"});
    m.type = rd.string(j, "type", path + ".type", true).value_or("");
    if (m.type == "linear") {
        if (auto a = rd.number(j, "a", path + ".a", true)) {
            m.a = *a;
            rd.expect(*a > 0, path + ".a: must be > 0");
        }
    } else if (m.type == "permutation") {
        if (!j.contains("table") || !j.at("table").is_array()) {
            rd.errors.push_back(path + ".table: required array of indices");
        } else {
            for (const auto& v : j.at("table")) {
                if (is_non_negative_integer(v)) m.table.push_back(v.get<std::size_t>());
                else rd.errors.push_back(path + ".table: expected non-negative integers");
            }
        }
    } else if (m.type != "identity" && !m.type.empty()) {
        rd.errors.push_back(path + ".type: unresolved built-in map '" + m.type + "'");
    }
    return m;
}

inline HypothesisSpec parse_hypothesis(Reader& rd, const json& j, double k_const) {
    HypothesisSpec h;
    rd.only(j, "hypothesis", {"type", "r", "l", "family", "a", "b", "codomain"});
    h.type = rd.string(j, "type", "hypothesis.type", true).value_or("");
    if (h.type == "rl") {
        if (auto r = rd.number(j, "r", "hypothesis.r", true)) {
            h.r_const = *r;
            rd.expect(*r > k_const, "hypothesis.r: must exceed space.k");
        }
        h.l_const = rd.number_or(j, "l", "hypothesis.l", 0.0);
        rd.expect(h.l_const >= 0, "hypothesis.l: must be >= 0");
    } else if (h.type == "phi") {
        h.family = rd.string(j, "family", "hypothesis.family", false).value_or("affine");
        if (h.family != "affine") rd.errors.push_back("hypothesis.family: unresolved phi family '" + h.family + "'");
        h.a = rd.number(j, "a", "hypothesis.a", true).value_or(0.0);
        h.b = rd.number(j, "b", "hypothesis.b", true).value_or(0.0);
        h.codomain = rd.string(j, "codomain", "hypothesis.codomain", false).value_or("k_squared");
        if (h.codomain == "l_squared") {
            h.phi_l = rd.number(j, "l", "hypothesis.l", true).value_or(0.0);
            rd.expect(h.phi_l > 1, "hypothesis.l: must be > 1 for the l_squared codomain");
        } else if (h.codomain != "k_squared") {
            rd.errors.push_back("hypothesis.codomain: expected 'k_squared' or 'l_squared'");
        }
    } else if (!h.type.empty()) {
        rd.errors.push_back("hypothesis.type: expected 'rl' or 'phi'");
    }
    return h;
}

inline RunSpec parse_run(Reader& rd, const json& j) {
    RunSpec r;
    rd.only(j, "run", {"command", "x0", "max_steps", "seed", "samples", "tolerances", "pair_region"});
    r.command = rd.string(j, "command", "run.command", false).value_or("solve");
    const auto& commands = known_commands();
    if (std::find(commands.begin(), commands.end(), r.command) == commands.end()) {
        rd.errors.push_back("run.command: unknown command '" + r.command + "'");
    }
    r.x0 = rd.number_or(j, "x0", "run.x0", 0.0);
    r.max_steps = rd.unsigned_int(j, "max_steps", "run.max_steps", false).value_or(kDefaultMaxSteps);
    rd.expect(r.max_steps >= 2, "run.max_steps: must be >= 2");
    r.seed = rd.unsigned_int(j, "seed", "run.seed", false).value_or(1);
    r.samples = rd.unsigned_int(j, "samples", "run.samples", false).value_or(10000);
    rd.expect(r.samples >= 1, "run.samples: must be >= 1");
    if (const json* tol = rd.object(j, "tolerances", "run.tolerances", false)) {
        rd.only(*tol, "run.tolerances", {"axiom", "point", "fix", "convergence"});
        r.tol_axiom = rd.number_or(*tol, "axiom", "run.tolerances.axiom", kTolAxiom);
        r.tol_point = rd.number_or(*tol, "point", "run.tolerances.point", kTolPoint);
        r.tol_fix = rd.number_or(*tol, "fix", "run.tolerances.fix", kTolFix);
        r.tol_convergence = rd.number_or(*tol, "convergence", "run.tolerances.convergence", 1e-6);
    }
    for (auto [v, name] : {std::pair{r.tol_axiom, "axiom"}, {r.tol_point, "point"}, {r.tol_fix, "fix"},
                           {r.tol_convergence, "convergence"}}) {
        rd.expect(v > 0, std::string("run.tolerances.") + name + ": must be > 0");
    }
    if (const json* region = rd.object(j, "pair_region", "run.pair_region", false)) {
        rd.only(*region, "run.pair_region", {"y_le_c_x"});
        r.y_le_c_x = rd.number(*region, "y_le_c_x", "run.pair_region.y_le_c_x", true);
    }
    return r;
}

inline oracle::SweepConfig parse_sweep(Reader& rd, const json& j) {
    oracle::SweepConfig c;
    rd.only(j, "oracle.sweep", {"max_n", "grid", "k_values", "l_values", "r_offsets", "r_factors"});
    c.max_n = rd.unsigned_int(j, "max_n", "oracle.sweep.max_n", false).value_or(c.max_n);
    rd.expect(c.max_n >= 1 && c.max_n <= oracle::kDefaultMaxCarrier, "oracle.sweep.max_n: must be in [1, 4]");
    c.grid = rd.numbers(j, "grid", "oracle.sweep.grid", c.grid);
    rd.expect(!c.grid.empty(), "oracle.sweep.grid: must not be empty");
    c.k_values = rd.numbers(j, "k_values", "oracle.sweep.k_values", c.k_values);
    c.l_values = rd.numbers(j, "l_values", "oracle.sweep.l_values", c.l_values);
    c.r_offsets = rd.numbers(j, "r_offsets", "oracle.sweep.r_offsets", c.r_offsets);
    c.r_factors = rd.numbers(j, "r_factors", "oracle.sweep.r_factors", c.r_factors);
    for (double k : c.k_values) rd.expect(k >= 1, "oracle.sweep.k_values: entries must be >= 1");
    for (double o : c.r_offsets) rd.expect(o > 0, "oracle.sweep.r_offsets: entries must be > 0");
    for (double f : c.r_factors) rd.expect(f > 1, "oracle.sweep.r_factors: entries must be > 1");
    return c;
}

}  // namespace detail

inline Scenario parse_scenario(const json& j) {
    detail::Reader rd;
    Scenario sc;
    if (!j.is_object()) throw ScenarioError({"$: scenario must be a JSON object"});

    rd.only(j, "", {"name", "space", "maps", "hypothesis", "run", "assumptions", "oracle"});
    sc.name = rd.string(j, "name", "name", false).value_or("scenario");
    if (const json* space = rd.object(j, "space", "space", true)) sc.space = detail::parse_space(rd, *space);
    if (const json* maps = rd.object(j, "maps", "maps", false)) {
        rd.only(*maps, "maps", {"t", "s"});
        const json* t = rd.object(*maps, "t", "maps.t", true);
        const json* s = rd.object(*maps, "s", "maps.s", true);
        if (t && s) sc.maps = std::pair{detail::parse_map(rd, *t, "maps.t"), detail::parse_map(rd, *s, "maps.s")};
    }
    if (const json* hyp = rd.object(j, "hypothesis", "hypothesis", false)) {
        sc.hypothesis = detail::parse_hypothesis(rd, *hyp, sc.space.k_const);
    }
    if (const json* run = rd.object(j, "run", "run", false)) sc.run = detail::parse_run(rd, *run);
    if (const json* as = rd.object(j, "assumptions", "assumptions", false)) {
        rd.only(*as, "assumptions", {"complete", "phi_limit_condition_attested"});
        sc.assumptions.complete = rd.boolean(*as, "complete", "assumptions.complete").value_or(true);
        sc.assumptions.phi_limit_condition_attested =
            rd.boolean(*as, "phi_limit_condition_attested", "assumptions.phi_limit_condition_attested")
                .value_or(false);
    }
    if (const json* orc = rd.object(j, "oracle", "oracle", false)) {
        rd.only(*orc, "oracle", {"n_max", "sweep"});
        sc.oracle.n_max = rd.unsigned_int(*orc, "n_max", "oracle.n_max", false).value_or(oracle::kDefaultMaxCarrier);
        if (const json* sweep = rd.object(*orc, "sweep", "oracle.sweep", false)) {
            sc.oracle.sweep = detail::parse_sweep(rd, *sweep);
        }
    }

    const std::string& cmd = sc.run.command;
    if (cmd == "solve" || cmd == "audit" || cmd == "lemmas") {
        rd.expect(sc.maps.has_value(), "maps: required for command '" + cmd + "'");
        rd.expect(sc.hypothesis.has_value(), "hypothesis: required for command '" + cmd + "'");
    }
    if (cmd == "oracle" && !sc.oracle.sweep) {
        rd.expect(sc.hypothesis.has_value(), "hypothesis: required for command 'oracle' without a sweep");
    }
    if (!rd.errors.empty()) throw ScenarioError(std::move(rd.errors));
    return sc;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ScenarioError({"$: cannot read scenario file '" + path.string() + "'"});
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError({std::string("$: invalid JSON: ") + e.what()});
    }
    return parse_scenario(j);
}

// ---------------------------------------------------------------------------
// Echo
// ---------------------------------------------------------------------------

inline json to_json(const MapSpec& m) {
    json j{{"type", m.type}};
    if (m.type == "linear") j["a"] = m.a;
    if (m.type == "permutation") j["table"] = m.table;
    return j;
}

inline json to_json(const oracle::SweepConfig& c) {
    return {{"max_n", c.max_n},         {"grid", c.grid},           {"k_values", c.k_values},
            {"l_values", c.l_values},   {"r_offsets", c.r_offsets}, {"r_factors", c.r_factors}};
}

/// Normalized scenario with every default made explicit. Parsing the echo
/// reproduces the scenario.
inline json to_json(const Scenario& sc) {
    json space{{"family", sc.space.family}, {"k", sc.space.k_const}, {"kind", std::string(to_string(sc.space.kind))}};
    if (sc.space.lower) space["lower"] = *sc.space.lower;
    if (sc.space.upper) space["upper"] = *sc.space.upper;
    if (!sc.space.points.empty()) space["points"] = sc.space.points;
    if (sc.space.family == "table") {
        space["matrix"] = sc.space.matrix;
        if (!sc.space.labels.empty()) space["labels"] = sc.space.labels;
    }

    json run{{"command", sc.run.command},
             {"x0", sc.run.x0},
             {"max_steps", sc.run.max_steps},
             {"seed", sc.run.seed},
             {"samples", sc.run.samples},
             {"tolerances",
              {{"axiom", sc.run.tol_axiom},
               {"point", sc.run.tol_point},
               {"fix", sc.run.tol_fix},
               {"convergence", sc.run.tol_convergence}}}};
    if (sc.run.y_le_c_x) run["pair_region"] = {{"y_le_c_x", *sc.run.y_le_c_x}};

    json j{{"name", sc.name},
           {"space", space},
           {"run", run},
           {"assumptions",
            {{"complete", sc.assumptions.complete},
             {"phi_limit_condition_attested", sc.assumptions.phi_limit_condition_attested}}}};
    if (sc.maps) j["maps"] = {{"t", to_json(sc.maps->first)}, {"s", to_json(sc.maps->second)}};
    if (sc.hypothesis) {
        const auto& h = *sc.hypothesis;
        if (h.type == "rl") {
            j["hypothesis"] = {{"type", "rl"}, {"r", h.r_const}, {"l", h.l_const}};
        } else {
            j["hypothesis"] = {{"type", "phi"}, {"family", h.family}, {"a", h.a}, {"b", h.b}, {"codomain", h.codomain}};
            if (h.codomain == "l_squared") j["hypothesis"]["l"] = h.phi_l;
        }
    }
    json orc{{"n_max", sc.oracle.n_max}};
    if (sc.oracle.sweep) orc["sweep"] = to_json(*sc.oracle.sweep);
    j["oracle"] = orc;
    return j;
}

// ---------------------------------------------------------------------------
// Construction from specs
// ---------------------------------------------------------------------------

inline Space build_space(const SpaceSpec& s, bool complete = true) {
    const double inf = std::numeric_limits<double>::infinity();
    auto with_complete = [complete](Space sp) {
        return Space(sp.name(), sp.carrier(), [sp](Point x, Point y) { return sp(x, y); }, sp.k_const(), sp.kind(),
                     complete);
    };
    if (s.family == "sqrt_square") return with_complete(spaces::sqrt_square(s.k_const, s.kind));
    if (s.family == "two_point_sigma") return with_complete(spaces::two_point_sigma(s.k_const, s.kind));
    if (s.family == "max_partial") return with_complete(spaces::max_partial(s.k_const, s.kind));
    if (s.family == "sum_metric_like") return with_complete(spaces::sum_metric_like(s.k_const, s.kind));
    if (s.family == "squared_abs") return with_complete(spaces::squared_abs(s.k_const, s.kind));
    if (s.family == "abs_metric") {
        if (!s.points.empty()) return with_complete(spaces::abs_metric_finite(s.points, s.k_const, s.kind));
        return with_complete(spaces::abs_metric(s.lower.value_or(0.0), s.upper.value_or(inf), s.k_const, s.kind));
    }
    if (s.family == "table") return with_complete(spaces::table(s.labels, s.matrix, s.k_const, s.kind));
    throw ScenarioError({"space.family: unresolved built-in '" + s.family + "'"});
}

inline Map build_map(const MapSpec& m, const Space& space, const std::string& path) {
    if (m.type == "identity") return maps::identity();
    if (m.type == "linear") {
        if (space.finite()) throw ScenarioError({path + ": linear maps need an interval carrier"});
        const auto& iv = std::get<IntervalCarrier>(space.carrier());
        if (!iv.unbounded() || iv.lower != 0.0) throw ScenarioError({path + ": linear maps need the carrier [0, inf)"});
        return maps::linear(m.a);
    }
    if (m.type == "permutation") {
        if (!space.finite()) throw ScenarioError({path + ": permutation maps need a finite carrier"});
        try {
            return maps::permutation(space.finite_carrier(), m.table);
        } catch (const Error& e) {
            throw ScenarioError({path + ".table: " + e.what()});
        }
    }
    throw ScenarioError({path + ".type: unresolved built-in map '" + m.type + "'"});
}

inline ExpansionHypothesis build_hypothesis(const HypothesisSpec& h, const Space& space, bool attested) {
    if (h.type == "rl") return RLHypothesis{h.r_const, h.l_const};
    const double floor = h.codomain == "l_squared" ? h.phi_l * h.phi_l : space.k_const() * space.k_const();
    auto hyp = phi::affine(h.a, h.b, floor);
    hyp.limit_condition_attested = attested;
    return hyp;
}

// ---------------------------------------------------------------------------
// Deterministic emission
// ---------------------------------------------------------------------------

inline std::string format_double(double v) {
    if (!std::isfinite(v)) return "null";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    std::string s(buf);
    if (s.find_first_of(".eE") == std::string::npos) s += ".0";
    return s;
}

namespace detail {

inline void emit(std::ostringstream& os, const json& j, int indent) {
    const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
    const std::string close(static_cast<std::size_t>(indent), ' ');
    switch (j.type()) {
        case json::value_t::object: {
            if (j.empty()) {
                os << "{}";
                return;
            }
            os << "{\n";
            bool first = true;
            for (auto it = j.begin(); it != j.end(); ++it) {
                if (!first) os << ",\n";
                first = false;
                os << pad << json(it.key()).dump() << ": ";
                emit(os, it.value(), indent + 2);
            }
            os << "\n" << close << "}";
            return;
        }
        case json::value_t::array: {
            if (j.empty()) {
                os << "[]";
                return;
            }
            os << "[\n";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << ",\n";
                os << pad;
                emit(os, j[i], indent + 2);
            }
            os << "\n" << close << "]";
            return;
        }
        case json::value_t::number_float:
            os << format_double(j.get<double>());
            return;
        default:
            os << j.dump();
    }
}

}  // namespace detail

/// Sorted keys, two-space indent, doubles at 17 significant digits,
/// non-finite values as null.
inline std::string emit_report(const json& report) {
    std::ostringstream os;
    detail::emit(os, report, 0);
    os << "\n";
    return os.str();
}

inline std::string trace_csv(const OrbitTrace& trace) {
    std::ostringstream os;
    os << "step,point,dist_to_next,ratio\n";
    for (std::size_t i = 0; i < trace.points.size(); ++i) {
        os << i << "," << format_double(trace.points[i]) << ",";
        if (i < trace.successive_distances.size()) os << format_double(trace.successive_distances[i]);
        os << ",";
        if (i >= 1 && i - 1 < trace.cauchy.per_step_ratios.size()) {
            os << format_double(trace.cauchy.per_step_ratios[i - 1]);
        }
        os << "\n";
    }
    return os.str();
}

// ---------------------------------------------------------------------------
// Report fragments
// ---------------------------------------------------------------------------

inline json to_json(const AxiomReport& r) {
    json violations = json::array();
    for (std::size_t i = 0; i < r.violations.size() && i < kMaxListedViolations; ++i) {
        const auto& v = r.violations[i];
        violations.push_back({{"axiom", v.axiom_id}, {"witness", v.witness}, {"lhs", v.lhs}, {"rhs", v.rhs}});
    }
    return {{"passed", r.passed},
            {"checked_triples", r.checked_triples},
            {"violation_count", r.violations.size()},
            {"violations", violations}};
}

inline json to_json(const AuditReport& r) {
    json violations = json::array();
    for (std::size_t i = 0; i < r.violations.size() && i < kMaxListedViolations; ++i) {
        const auto& v = r.violations[i];
        violations.push_back({{"x", v.x}, {"y", v.y}, {"lhs", v.lhs}, {"rhs", v.rhs}});
    }
    return {{"passed", r.passed},
            {"checked_pairs", r.checked_pairs},
            {"violation_count", r.violations.size()},
            {"violations", violations}};
}

inline json to_json(const CauchyVerdict& c) {
    return {{"lambda_hat", c.lambda_hat},
            {"threshold", c.threshold},
            {"verdict", std::string(to_string(c.verdict))},
            {"divergent_step", c.divergent_step}};
}

inline json to_json(const SolveReport& r) {
    return {{"candidate", r.candidate},
            {"orbit_limit", r.orbit_limit},
            {"t_residual", r.t_residual},
            {"s_residual", r.s_residual},
            {"forward_fixed", r.forward_fixed},
            {"certified", r.certified},
            {"terminated_by", std::string(to_string(r.trace.terminated_by))},
            {"orbit_length", r.trace.points.size()},
            {"cauchy", to_json(r.trace.cauchy)},
            {"hypothesis_audit", to_json(r.hypothesis_audit)}};
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

struct Overrides {
    std::optional<std::string> command;
    std::optional<std::uint64_t> seed;
};

struct RunResult {
    int exit_code = kExitError;
    json report;
    std::optional<std::string> trace;  ///< CSV, solves only
};

namespace detail {

struct Built {
    Space space;
    std::optional<MapPair> maps;
    std::optional<ExpansionHypothesis> hyp;
};

inline Built build(const Scenario& sc) {
    Built b{build_space(sc.space, sc.assumptions.complete), std::nullopt, std::nullopt};
    if (sc.maps) {
        b.maps = MapPair{build_map(sc.maps->first, b.space, "maps.t"), build_map(sc.maps->second, b.space, "maps.s")};
    }
    if (sc.hypothesis) b.hyp = build_hypothesis(*sc.hypothesis, b.space, sc.assumptions.phi_limit_condition_attested);
    return b;
}

inline SampleStrategy pair_strategy(const Scenario& sc, const Space& space) {
    if (space.finite()) return Exhaustive{};
    return Sampled{sc.run.samples, sc.run.seed};
}

inline SolveConfig solve_config(const Scenario& sc) {
    return {sc.run.max_steps, {sc.run.tol_axiom, sc.run.tol_point, sc.run.tol_fix}};
}

inline json notes(const Scenario& sc) {
    json out = json::array();
    if (sc.hypothesis && sc.hypothesis->type == "phi") {
        out.push_back("phi codomain convention: " + sc.hypothesis->codomain);
        out.push_back(std::string("phi limit condition: ") +
                      (sc.assumptions.phi_limit_condition_attested ? "attested" : "not attested"));
    }
    out.push_back(std::string("completeness: ") + (sc.assumptions.complete ? "assumed" : "not assumed"));
    return out;
}

inline int run_solve(const Scenario& sc, const Built& b, RunResult& out) {
    const auto report = solve(b.space, *b.maps, *b.hyp, sc.run.x0, solve_config(sc));
    out.report["result"] = to_json(report);
    out.trace = trace_csv(report.trace);
    return report.certified ? kExitOk : kExitFindings;
}

inline int run_audit(const Scenario& sc, const Built& b, RunResult& out) {
    PairFilter filter;
    if (sc.run.y_le_c_x) filter = [c = *sc.run.y_le_c_x](Point x, Point y) { return y <= c * x; };
    const auto report = audit(b.space, *b.maps, *b.hyp, pair_strategy(sc, b.space), filter, sc.run.tol_axiom);
    out.report["result"] = to_json(report);
    return report.passed ? kExitOk : kExitFindings;
}

inline int run_axioms(const Scenario& sc, const Built& b, RunResult& out) {
    const SampleStrategy strategy =
        b.space.finite() ? SampleStrategy{Exhaustive{}} : SampleStrategy{Sampled{sc.run.samples, sc.run.seed}};
    const auto declared = check_axioms(b.space, strategy, sc.run.tol_axiom);
    const auto general = check_axioms(b.space.with_kind(SpaceKind::BMetricLike), strategy, sc.run.tol_axiom);
    json result{{"declared_kind", std::string(to_string(b.space.kind()))},
                {"declared", to_json(declared)},
                {"as_b_metric_like", to_json(general)},
                {"strategy", b.space.finite() ? "exhaustive" : "sampled"}};
    if (b.space.finite()) {
        try {
            result["min_valid_k"] = min_valid_k(b.space);
        } catch (const Error& e) {
            result["min_valid_k"] = nullptr;
            result["min_valid_k_error"] = e.what();
        }
    }
    out.report["result"] = result;
    return declared.passed && general.passed ? kExitOk : kExitFindings;
}

inline json theorem_audit_json(const oracle::TheoremAudit& a) {
    json ces = json::array();
    for (const auto& ce : a.counterexamples) {
        ces.push_back({{"t", ce.t}, {"s", ce.s}, {"fixed_points", ce.fixed_points}});
    }
    return {{"instances_checked", a.instances_checked},
            {"hypothesis_holders", a.hypothesis_holders},
            {"counterexamples", ces}};
}

inline int run_oracle(const Scenario& sc, const Built& b, RunResult& out) {
    bool clean = true;
    json result = json::object();
    if (b.hyp && b.space.finite()) {
        const auto audit_result = oracle::audit_theorem_finite(b.space, *b.hyp, sc.oracle.n_max, sc.run.tol_axiom);
        const bool agree = oracle::cross_validate(b.space, *b.hyp, std::nullopt, sc.oracle.n_max,
                                                  {std::min<std::size_t>(sc.run.max_steps, 64), solve_config(sc).tol});
        result["instance"] = theorem_audit_json(audit_result);
        result["instance"]["cross_validated"] = agree;
        clean = clean && audit_result.counterexamples.empty() && agree;
    }
    if (sc.oracle.sweep) {
        const auto sweep = oracle::falsification_sweep(*sc.oracle.sweep);
        json ces = json::array();
        for (const auto& ce : sweep.counterexamples) {
            ces.push_back({{"matrix", ce.matrix},
                           {"k", ce.k_const},
                           {"r", ce.r_const},
                           {"l", ce.l_const},
                           {"t", ce.instance.t},
                           {"s", ce.instance.s},
                           {"fixed_points", ce.instance.fixed_points}});
        }
        result["sweep"] = {{"matrices_enumerated", sweep.matrices_enumerated},
                           {"valid_spaces", sweep.valid_spaces},
                           {"instances_checked", sweep.instances_checked},
                           {"hypothesis_holders", sweep.hypothesis_holders},
                           {"cross_validation_failures", sweep.cross_validation_failures},
                           {"counterexamples", ces}};
        clean = clean && sweep.counterexamples.empty() && sweep.cross_validation_failures == 0;
    }
    if (result.empty()) throw ScenarioError({"oracle: needs a finite space with a hypothesis, or oracle.sweep"});
    out.report["result"] = result;
    return clean ? kExitOk : kExitFindings;
}

inline int run_lemmas(const Scenario& sc, const Built& b, RunResult& out) {
    const auto report = solve(b.space, *b.maps, *b.hyp, sc.run.x0, solve_config(sc));
    const auto& pts = report.trace.points;
    const double tol = sc.run.tol_convergence;
    bool ok = true;

    // Polygon inequality on orbit prefixes and on seeded random chains.
    std::size_t chains = 0;
    std::size_t polygon_failures = 0;
    for (std::size_t len = 2; len <= std::min<std::size_t>(pts.size(), 10); ++len) {
        ++chains;
        if (!polygon_bound(b.space, std::span(pts).first(len), sc.run.tol_axiom).holds) ++polygon_failures;
    }
    PointSampler sampler(b.space, sc.run.seed);
    std::mt19937_64 rng(sc.run.seed);
    const auto anchors = b.space.anchors();
    const std::size_t random_chains = std::min<std::size_t>(sc.run.samples, 1000);
    for (std::size_t i = 0; i < random_chains; ++i) {
        std::vector<Point> chain(2 + bml::detail::uniform_index(rng, 9));
        for (auto& p : chain) p = sampler.draw_mixed(anchors);
        ++chains;
        if (!polygon_bound(b.space, chain, sc.run.tol_axiom).holds) ++polygon_failures;
    }
    ok = ok && polygon_failures == 0;

    const auto conv = converges_to(b.space, pts, report.candidate, tol);
    ok = ok && conv.verdict == Convergence::Converged;
    ok = ok && report.trace.cauchy.verdict == CauchyStatus::CauchyCertified;

    json sandwich{{"hypothesis_met", true}};
    std::size_t sandwich_checked = 0;
    std::size_t sandwich_failures = 0;
    try {
        PointSampler ys(b.space, sc.run.seed + 1);
        const std::size_t n_y = std::min<std::size_t>(sc.run.samples, 100);
        for (std::size_t i = 0; i < n_y; ++i) {
            const Point y = i < anchors.size() ? anchors[i] : ys.draw();
            ++sandwich_checked;
            if (!limit_sandwich_check(b.space, pts, report.candidate, y, tol).holds) ++sandwich_failures;
        }
    } catch (const Error& e) {
        if (e.code() != ErrorCode::HypothesisNotMet) throw;
        sandwich["hypothesis_met"] = false;
    }
    sandwich["checked"] = sandwich_checked;
    sandwich["failures"] = sandwich_failures;
    ok = ok && sandwich_failures == 0;

    out.report["result"] = {
        {"candidate", report.candidate},
        {"polygon", {{"chains_checked", chains}, {"failures", polygon_failures}}},
        {"cauchy", to_json(report.trace.cauchy)},
        {"convergence",
         {{"verdict", std::string(to_string(conv.verdict))}, {"gap", conv.gap}, {"tail_window", conv.tail_window}}},
        {"sandwich", sandwich}};
    out.trace = trace_csv(report.trace);
    return ok ? kExitOk : kExitFindings;
}

inline json tolerances(const Scenario& sc) {
    return {{"axiom", sc.run.tol_axiom},
            {"point", sc.run.tol_point},
            {"fix", sc.run.tol_fix},
            {"convergence", sc.run.tol_convergence}};
}

}  // namespace detail

inline Scenario apply_overrides(Scenario sc, const Overrides& ov) {
    if (ov.command) {
        const auto& commands = known_commands();
        if (std::find(commands.begin(), commands.end(), *ov.command) == commands.end()) {
            throw ScenarioError({"--command: unknown command '" + *ov.command + "'"});
        }
        sc.run.command = *ov.command;
    }
    if (ov.seed) sc.run.seed = *ov.seed;
    // Re-validate command-dependent requirements.
    return parse_scenario(to_json(sc));
}

/// Executes one scenario. Library and schema errors become exit code 1 with
/// an error report; they never escape.
inline RunResult run_scenario(const Scenario& sc) {
    RunResult out;
    out.report = {{"tool", {{"name", kToolName}, {"version", kToolVersion}}},
                  {"command", sc.run.command},
                  {"seed", sc.run.seed},
                  {"tolerances", detail::tolerances(sc)},
                  {"scenario", to_json(sc)},
                  {"notes", detail::notes(sc)}};
    try {
        const auto built = detail::build(sc);
        const std::string& cmd = sc.run.command;
        if (cmd == "solve") out.exit_code = detail::run_solve(sc, built, out);
        else if (cmd == "audit") out.exit_code = detail::run_audit(sc, built, out);
        else if (cmd == "axioms") out.exit_code = detail::run_axioms(sc, built, out);
        else if (cmd == "oracle") out.exit_code = detail::run_oracle(sc, built, out);
        else if (cmd == "lemmas") out.exit_code = detail::run_lemmas(sc, built, out);
        else throw ScenarioError({"run.command: unknown command '" + cmd + "'"});
    } catch (const ScenarioError& e) {
        out.exit_code = kExitError;
        out.report["errors"] = e.errors();
    } catch (const Error& e) {
        out.exit_code = kExitError;
        out.report["errors"] = json::array({e.what()});
    }
    static constexpr const char* outcomes[] = {"passed", "error", "findings"};
    out.report["outcome"] = outcomes[out.exit_code];
    out.report["exit_code"] = out.exit_code;
    return out;
}

/// Loads, runs and writes report.json (plus trace.csv for solves) into
/// `out_dir`. Returns the exit code.
inline int run_scenario_file(const std::filesystem::path& path, const std::filesystem::path& out_dir,
                             const Overrides& ov = {}, std::ostream* log = nullptr) {
    RunResult result;
    try {
        result = run_scenario(apply_overrides(load_scenario(path), ov));
    } catch (const ScenarioError& e) {
        result.exit_code = kExitError;
        result.report = {{"tool", {{"name", kToolName}, {"version", kToolVersion}}},
                         {"errors", e.errors()},
                         {"outcome", "error"},
                         {"exit_code", kExitError}};
    }
    if (log && result.report.contains("errors")) {
        for (const auto& e : result.report["errors"]) *log << path.string() << ": " << e.get<std::string>() << "\n";
    }
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    std::ofstream report(out_dir / "report.json", std::ios::binary);
    report << emit_report(result.report);
    if (result.trace) {
        std::ofstream trace(out_dir / "trace.csv", std::ios::binary);
        trace << *result.trace;
    }
    if (!report) {
        if (log) *log << "cannot write report into '" << out_dir.string() << "'\n";
        return kExitError;
    }
    return result.exit_code;
}

}  // namespace bml::scenario
