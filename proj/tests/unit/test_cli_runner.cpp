#include <catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kinlevy/benchmarks.hpp"
#include "kinlevy/config.hpp"
#include "kinlevy/output.hpp"
#include "kinlevy/runner.hpp"

using namespace kinlevy;
using namespace kinlevy::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / "kinlevy_cli_test" / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Runs the CLI binary and returns its exit status; stdout and stderr go to dir/log.txt.
int run_cli_binary(const std::string& args, const fs::path& dir)
{
    const std::string cmd = std::string(KINLEVY_CLI_PATH) + " " + args + " > " + (dir / "log.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::string> problems_of(const Json& user)
{
    try {
        materialize(user);
    } catch (const ConfigError& e) {
        return e.problems();
    }
    return {};
}

}  // namespace

TEST_CASE("defaults materialize and echo every section", "[cli_runner]")
{
    const Json c = materialize(Json::object());
    CHECK(c == default_config());
    for (const char* s : {"noise", "drift", "domain", "grid", "sample", "simulate", "survival", "escape", "lyapunov",
                          "reach", "qsd_fv", "qsd_cond", "ulam", "duhamel", "bench"}) {
        CHECK(c.contains(s));
    }
    CHECK(noise_from(c).alpha() == 1.5);
    CHECK(drift_from(c.at("drift"), 1).name == "harmonic_damped");
    CHECK(domain_from(c).contains(Vec{0.5}));
    CHECK(grid_from(c).size() == 400);
}

TEST_CASE("schema violations are reported per field", "[cli_runner]")
{
    auto has = [](const std::vector<std::string>& v, const std::string& needle) {
        for (const auto& s : v) {
            if (s.find(needle) != std::string::npos) return true;
        }
        return false;
    };
    CHECK(has(problems_of({{"nosie", {{"alpha", 1.0}}}}), "nosie: unknown key"));
    CHECK(has(problems_of({{"noise", {{"alhpa", 1.0}}}}), "noise.alhpa: unknown key"));
    CHECK(has(problems_of({{"noise", {{"alpha", "fast"}}}}), "noise.alpha: expected number, got string"));
    CHECK(has(problems_of({{"sample", {{"paths", 1.5}}}}), "sample.paths: expected integer"));
    CHECK(has(problems_of({{"sample", {{"alphas", {0.8, "x"}}}}}), "sample.alphas[1]"));
    CHECK(has(problems_of({{"survival", {{"starts", {1.0, 2.0}}}}}), "survival.starts[0]"));
    CHECK(has(problems_of({{"noise", {{"alpha", 2.5}}}}), "noise.alpha"));
    CHECK(has(problems_of({{"threads", 0}}), "threads"));
    CHECK(has(problems_of({{"simulate", {{"noise", "loud"}}}}), "simulate.noise"));
    CHECK(has(problems_of(Json::array()), "<root>"));
    // Two unknown keys give two diagnostics.
    CHECK(problems_of({{"a", 1}, {"b", 2}}).size() == 2);
    // Drift parameters are free-form here and checked by the registry.
    const Json c = materialize({{"drift", {{"name", "harmonic_damped"}, {"params", {{"bogus", 1.0}}}}}});
    CHECK_THROWS_AS(drift_from(c.at("drift"), 1), Error);
}

TEST_CASE("overrides are parsed as JSON with a string fallback", "[cli_runner]")
{
    Json user = Json::object();
    apply_override(user, "noise.alpha=1.2");
    apply_override(user, "survival.starts=[[0,0],[0.1,0.2]]");
    apply_override(user, "drift.name=tanh_field");
    apply_override(user, "ulam.export_matrix=true");
    CHECK(user["noise"]["alpha"] == 1.2);
    CHECK(user["survival"]["starts"].size() == 2);
    CHECK(user["drift"]["name"] == "tanh_field");
    CHECK(user["ulam"]["export_matrix"] == true);
    const Json c = materialize(user);
    CHECK(c["noise"]["alpha"] == 1.2);
    CHECK(c["noise"]["dim"] == 1);
    CHECK_THROWS_AS(apply_override(user, "noise.alpha"), ConfigError);
    CHECK_THROWS_AS(apply_override(user, "noise..alpha=1"), ConfigError);
}

TEST_CASE("manifest hash ignores the worker count only", "[cli_runner]")
{
    const Json a = materialize({{"threads", 1}});
    const Json b = materialize({{"threads", 4}});
    const Json c = materialize({{"seed", 8}});
    CHECK(config_hash(a) == config_hash(b));
    CHECK(config_hash(a) != config_hash(c));
    CHECK(config_hash(a).size() == 16);
}

TEST_CASE("state lists and vectors", "[cli_runner]")
{
    const auto s = states_from(Json::parse("[[0.1, -0.2, 0.3, 0.4]]"), 2);
    REQUIRE(s.size() == 1);
    CHECK(s[0].x == Vec{0.1, -0.2});
    CHECK(s[0].v == Vec{0.3, 0.4});
    CHECK_THROWS_AS(states_from(Json::parse("[[0.1, 0.2, 0.3]]"), 2), ConfigError);
    CHECK_THROWS_AS(vec_from(Json::array()), ConfigError);
    CHECK_THROWS_AS(vec_from(Json::parse("[1,2,3,4]")), ConfigError);
    const Json box = materialize({{"noise", {{"dim", 2}}}, {"domain", {{"kind", "interval"}}}});
    CHECK_THROWS_AS(domain_from(box), ConfigError);
}

TEST_CASE("number formatting round-trips", "[cli_runner]")
{
    for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, 0.0}) CHECK(std::stod(format_number(x)) == x);
    CHECK(format_number(std::nan("")) == "nan");
    CHECK(format_number(-INFINITY) == "-inf");
}

TEST_CASE("csv writer enforces the header shape and stamps the manifest", "[cli_runner]")
{
    const auto dir = scratch("csv");
    const OutputDir out(dir, "0123456789abcdef");
    {
        auto w = out.csv("t.csv", {"a", "b"});
        w.cell(1.5).cell(static_cast<long long>(2)).end_row();
        w.cell(std::string("x"));
        CHECK_THROWS_AS(w.end_row(), Error);
    }
    CHECK(slurp(dir / "t.csv").rfind("# manifest 0123456789abcdef\na,b\n1.5,2\n", 0) == 0);
    out.json("j.json", {{"k", 1}});
    CHECK(Json::parse(slurp(dir / "j.json"))["manifest"] == "0123456789abcdef");
}

TEST_CASE("tasks run in-process at small scale", "[cli_runner]")
{
    Json user = Json::object();
    apply_override(user, "escape.paths=500");
    apply_override(user, "escape.x_points=[0.0]");
    const Json c = materialize(user);
    const auto dir = scratch("inproc");
    const OutputDir out(dir, config_hash(c));
    const TaskContext ctx{c, 7, 1, &out};
    const auto r = run_task("escape", ctx);
    CHECK(r.task == "escape");
    REQUIRE(r.checks.size() == 2);
    CHECK(r.checks[0].id == "escape.monotone");
    CHECK(r.checks[0].passed);
    CHECK(fs::exists(dir / "escape.csv"));
    const Json s = summary_json(r);
    CHECK(s["checks"].size() == 2);
    CHECK_THROWS_AS(run_task("nope", ctx), Error);
    CHECK(task_names().back() == "bench-all");
}

TEST_CASE("simulate with zero horizon writes single-point trajectories", "[cli_runner]")
{
    const auto dir = scratch("sim0");
    const int code = run_cli_binary("simulate --set simulate.horizon=0 --out " + (dir / "out").string(), dir);
    INFO(slurp(dir / "log.txt"));
    REQUIRE(code == kExitPassed);
    std::ifstream in(dir / "out" / "trajectories.jsonl");
    std::string line;
    REQUIRE(std::getline(in, line));
    const std::string hash = Json::parse(line)["manifest"];
    CHECK(hash.size() == 16);
    std::size_t paths = 0;
    while (std::getline(in, line)) {
        const Json rec = Json::parse(line);
        CHECK(rec["times"] == Json::array({0.0}));
        CHECK(rec["x"] == Json::parse("[[0.0]]"));
        ++paths;
    }
    CHECK(paths == 4);
    const Json summary = Json::parse(slurp(dir / "out" / "summary.json"));
    CHECK(summary["passed"] == true);
    CHECK(summary["manifest"] == hash);
    const Json manifest = Json::parse(slurp(dir / "out" / "manifest.json"));
    CHECK(manifest["config"]["simulate"]["horizon"] == 0);
    CHECK(manifest["seed"] == 7);
    CHECK(manifest["manifest"] == hash);
}

TEST_CASE("sample subcommand is reproducible across worker counts", "[cli_runner]")
{
    const auto dir = scratch("sample");
    const std::string common = "sample --seed 11 --set sample.paths=4000 --set sample.alphas=[1.5] ";
    REQUIRE(run_cli_binary(common + "--threads 1 --out " + (dir / "a").string(), dir) == kExitPassed);
    REQUIRE(run_cli_binary(common + "--threads 3 --out " + (dir / "b").string(), dir) == kExitPassed);
    for (const char* f : {"cf.csv", "decomposition.csv", "summary.json"}) {
        INFO(f);
        const std::string a = slurp(dir / "a" / f);
        CHECK(!a.empty());
        CHECK(a == slurp(dir / "b" / f));
    }
    const Json summary = Json::parse(slurp(dir / "a" / "summary.json"));
    CHECK(summary["checks"][0]["id"] == "sample.cf");
    CHECK(summary["checks"][0]["passed"] == true);
}

TEST_CASE("schema errors exit nonzero with field diagnostics", "[cli_runner]")
{
    const auto dir = scratch("schema");
    CHECK(run_cli_binary("sample --set sample.pathz=10 --out " + (dir / "o").string(), dir) == kExitSchema);
    CHECK(slurp(dir / "log.txt").find("sample.pathz: unknown key") != std::string::npos);
    CHECK_FALSE(fs::exists(dir / "o"));

    std::ofstream(dir / "bad.json") << "{\"noise\": {\"alpha\": \"x\"}}";
    CHECK(run_cli_binary("sample --config " + (dir / "bad.json").string(), dir) == kExitSchema);
    CHECK(slurp(dir / "log.txt").find("noise.alpha: expected number") != std::string::npos);

    CHECK(run_cli_binary("nosuchcommand", dir) == kExitUsage);
    CHECK(run_cli_binary("", dir) == kExitUsage);
}

TEST_CASE("runtime errors carry the module code", "[cli_runner]")
{
    const auto dir = scratch("runtime");
    // Outside the domain: the killed-process module rejects the start.
    const int code = run_cli_binary("qsd-cond --set qsd_cond.x0=[3.0] --set qsd_cond.paths=10 --out " +
                                        (dir / "o").string(),
                                    dir);
    CHECK(code == kExitRuntime);
    CHECK(slurp(dir / "log.txt").find("error [") != std::string::npos);
}
