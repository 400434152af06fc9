#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "bml/scenario.hpp"

using namespace bml;
using namespace bml::scenario;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = BML_SCENARIO_DIR;
const fs::path kGolden = BML_GOLDEN_DIR;

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("bml_scenario_test_" + name);
    fs::remove_all(dir);
    return dir;
}

json ninefold_identity() { return json::parse(slurp(kScenarios / "ninefold_identity.json")); }

std::vector<std::string> errors_of(const json& j) {
    try {
        parse_scenario(j);
    } catch (const ScenarioError& e) {
        return e.errors();
    }
    return {};
}

bool mentions(const std::vector<std::string>& errors, const std::string& needle) {
    return std::any_of(errors.begin(), errors.end(), [&](const auto& e) { return e.find(needle) != std::string::npos; });
}

}  // namespace

TEST(Scenario, EchoRoundTrips) {
    for (const auto& entry : fs::directory_iterator(kScenarios)) {
        const auto sc = load_scenario(entry.path());
        const json echo = to_json(sc);
        EXPECT_EQ(to_json(parse_scenario(echo)), echo) << entry.path();
    }
}

TEST(Scenario, SchemaErrorsCarryFieldPaths) {
    auto j = ninefold_identity();
    j["space"].erase("k");
    EXPECT_TRUE(mentions(errors_of(j), "space.k"));

    j = ninefold_identity();
    j["space"]["family"] = "nope";
    j["maps"]["t"]["type"] = "warp";
    j["hypothesis"]["r"] = 1.0;
    const auto errs = errors_of(j);
    EXPECT_TRUE(mentions(errs, "space.family: unresolved built-in 'nope'"));
    EXPECT_TRUE(mentions(errs, "maps.t.type: unresolved built-in map 'warp'"));
    EXPECT_TRUE(mentions(errs, "hypothesis.r"));

    j = ninefold_identity();
    j["hypothesis"]["l"] = -1;
    j["run"]["command"] = "dance";
    EXPECT_TRUE(mentions(errors_of(j), "hypothesis.l"));
    EXPECT_TRUE(mentions(errors_of(j), "run.command"));

    j = ninefold_identity();
    j["run"]["sample"] = 10;
    j["extra"] = true;
    EXPECT_TRUE(mentions(errors_of(j), "run.sample: unknown field"));
    EXPECT_TRUE(mentions(errors_of(j), "extra: unknown field"));

    j = ninefold_identity();
    j.erase("hypothesis");
    EXPECT_TRUE(mentions(errors_of(j), "hypothesis: required"));
}

TEST(Scenario, MissingKExitsOne) {
    auto j = ninefold_identity();
    j["space"].erase("k");
    const auto dir = temp_dir("missing_k");
    fs::create_directories(dir);
    std::ofstream(dir / "in.json") << j.dump();
    EXPECT_EQ(run_scenario_file(dir / "in.json", dir / "out"), kExitError);
    const auto report = json::parse(slurp(dir / "out" / "report.json"));
    EXPECT_EQ(report["exit_code"], 1);
    EXPECT_EQ(report["outcome"], "error");
    EXPECT_FALSE(report["errors"].empty());
}

TEST(Scenario, NinefoldIdentitySolve) {
    const auto r = run_scenario(parse_scenario(ninefold_identity()));
    EXPECT_EQ(r.exit_code, kExitOk);
    EXPECT_EQ(r.report["result"]["candidate"].get<double>(), 0.0);
    EXPECT_NEAR(r.report["result"]["cauchy"]["lambda_hat"].get<double>(), 4.0 / 9, 1e-9);
    EXPECT_EQ(r.report["tool"]["name"], kToolName);
    EXPECT_EQ(r.report["seed"], 1);
    EXPECT_TRUE(r.report["tolerances"].contains("fix"));
    ASSERT_TRUE(r.trace.has_value());
}

TEST(Scenario, NinefoldIdentityAuditFindsOriginPair) {
    auto sc = parse_scenario(ninefold_identity());
    sc = apply_overrides(sc, {std::string("audit"), std::nullopt});
    const auto r = run_scenario(sc);
    EXPECT_EQ(r.exit_code, kExitFindings);
    const auto& v = r.report["result"]["violations"];
    ASSERT_FALSE(v.empty());
    const auto it = std::find_if(v.begin(), v.end(), [](const json& e) { return e["x"] == 0.0 && e["y"] == 1.0; });
    ASSERT_NE(it, v.end());
    EXPECT_EQ((*it)["lhs"].get<double>(), 1.0);
    EXPECT_EQ((*it)["rhs"].get<double>(), 3.0);
    EXPECT_FALSE(r.trace.has_value());
}

TEST(Scenario, ExitCodesPerScenario) {
    const std::map<std::string, int> expected{
        {"ninefold_identity", 0},          {"ninefold_identity_audit", 2}, {"ninefold_identity_audit_region", 0},
        {"ninefold_identity_lemmas", 0},   {"sqrt_square_axioms", 0}, {"two_point_sigma_oracle", 0},
        {"scaling_by_four", 0},      {"phi_affine", 0},         {"partial_metric_max", 0},
        {"metric_like_sum", 0},      {"b_metric_squared", 0},   {"oracle_sweep", 0}};
    for (const auto& [name, code] : expected) {
        const auto r = run_scenario(load_scenario(kScenarios / (name + ".json")));
        EXPECT_EQ(r.exit_code, code) << name;
        EXPECT_EQ(r.report["exit_code"], code) << name;
    }
}

TEST(Scenario, AxiomsWithKOneFindsWitness) {
    auto j = json::parse(slurp(kScenarios / "sqrt_square_axioms.json"));
    j["space"]["k"] = 1;
    j["run"]["samples"] = 1000;
    const auto r = run_scenario(parse_scenario(j));
    EXPECT_EQ(r.exit_code, kExitFindings);
}

TEST(Scenario, TraceCsv) {
    const auto r = run_scenario(parse_scenario(ninefold_identity()));
    std::istringstream in(*r.trace);
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,point,dist_to_next,ratio");
    std::getline(in, line);
    EXPECT_EQ(line, "0,81.0,144.0,");
    std::getline(in, line);
    EXPECT_EQ(line, "1,9.0,36.0,0.25");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows + 2, r.report["result"]["orbit_length"].get<std::size_t>());
}

TEST(Scenario, ByteIdenticalReports) {
    for (const auto& entry : fs::directory_iterator(kScenarios)) {
        const auto stem = entry.path().stem().string();
        if (stem == "oracle_sweep") continue;  // covered by the acceptance run
        const auto a = temp_dir(stem + "_a"), b = temp_dir(stem + "_b");
        EXPECT_EQ(run_scenario_file(entry.path(), a), run_scenario_file(entry.path(), b));
        EXPECT_EQ(slurp(a / "report.json"), slurp(b / "report.json")) << stem;
        if (fs::exists(a / "trace.csv")) {
            EXPECT_EQ(slurp(a / "trace.csv"), slurp(b / "trace.csv")) << stem;
        }
    }
}

TEST(Scenario, SeedOverrideChangesSample) {
    const auto sc = load_scenario(kScenarios / "ninefold_identity_audit.json");
    const auto a = run_scenario(apply_overrides(sc, {std::nullopt, 11}));
    const auto b = run_scenario(apply_overrides(sc, {std::nullopt, 12}));
    EXPECT_EQ(a.report["seed"], 11);
    EXPECT_NE(emit_report(a.report), emit_report(b.report));
    EXPECT_EQ(emit_report(a.report), emit_report(run_scenario(apply_overrides(sc, {std::nullopt, 11})).report));
}

TEST(Scenario, SpecialisedKindGoldens) {
    for (const std::string name : {"partial_metric_max", "metric_like_sum", "b_metric_squared"}) {
        const auto r = run_scenario(load_scenario(kScenarios / (name + ".json")));
        EXPECT_EQ(emit_report(r.report), slurp(kGolden / (name + ".json"))) << name;
    }
}

TEST(Emit, FormatsDoubles) {
    EXPECT_EQ(format_double(0.0), "0.0");
    EXPECT_EQ(format_double(81.0), "81.0");
    EXPECT_EQ(format_double(0.1), "0.10000000000000001");
    EXPECT_EQ(emit_report(json{{"b", 1}, {"a", std::nan("")}}), "{\n  \"a\": null,\n  \"b\": 1\n}\n");
}
