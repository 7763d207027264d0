// Acceptance gate: runs bench-all twice with different worker counts and
// prints one line per criterion. Exit status is 0 only if every line passes.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_bench(const fs::path& out, unsigned threads)
{
    fs::remove_all(out);
    fs::create_directories(out);
    const std::string cmd = std::string(KINLEVY_CLI_PATH) + " bench-all --threads " + std::to_string(threads) +
                            " --out " + out.string() + " > " + (out / "log.txt").string() + " 2>&1";
    std::printf("running: %s\n", cmd.c_str());
    std::fflush(stdout);
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Files compared byte for byte; timings, manifest and the log carry wall
// times and the worker count.
std::map<std::string, std::string> numeric_outputs(const fs::path& dir)
{
    static const std::set<std::string> skip{"timings.json", "manifest.json", "log.txt"};
    std::map<std::string, std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (e.is_regular_file() && !skip.count(name)) files[name] = slurp(e.path());
    }
    return files;
}

}  // namespace

int main(int argc, char** argv)
{
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_out";
    const fs::path one = root / "threads1", two = root / "threads2";
    const int code1 = run_bench(one, 1);
    const int code2 = run_bench(two, 2);

    bool all = true;
    auto line = [&](const std::string& id, bool ok, const std::string& detail) {
        std::printf("%s %s %s\n", id.c_str(), ok ? "PASS" : "FAIL", detail.c_str());
        all = all && ok;
    };

    Json summary, timings;
    try {
        summary = Json::parse(slurp(one / "summary.json"));
        timings = Json::parse(slurp(one / "timings.json")).at("seconds");
    } catch (const std::exception& e) {
        std::printf("bench-all produced no summary (exit %d): %s\n%s", code1, e.what(), slurp(one / "log.txt").c_str());
        return 1;
    }
    std::map<std::string, Json> checks;
    for (const auto& c : summary.at("checks")) checks[c.at("id").get<std::string>()] = c;

    // Runtime budgets in seconds, summed over the named stages.
    const std::map<std::string, std::pair<std::vector<std::string>, double>> budgets{
        {"AC01", {{"noise_cf"}, 30.0}},
        {"AC02", {{"generator_oracle"}, 10.0}},
        {"AC04", {{"drift_condition"}, 120.0}},
        {"AC06", {{"lambda_mc", "ulam"}, 600.0}},
        {"AC10", {{"reach"}, 600.0}},
    };

    for (int k = 1; k <= 11; ++k) {
        char id[8];
        std::snprintf(id, sizeof id, "AC%02d", k);
        const auto it = checks.find(id);
        if (it == checks.end()) {
            line(id, false, "missing from summary");
            continue;
        }
        bool ok = it->second.at("passed").get<bool>();
        std::string detail = it->second.at("name").get<std::string>() + " " + it->second.at("metrics").dump();
        if (const auto b = budgets.find(id); b != budgets.end()) {
            double secs = 0.0;
            for (const auto& stage : b->second.first) secs += timings.value(stage, 1e9);
            char buf[96];
            std::snprintf(buf, sizeof buf, " runtime %.1f s (budget %.0f s)", secs, b->second.second);
            detail += buf;
            ok = ok && secs < b->second.second;
        }
        line(id, ok, detail);
    }

    const auto a = numeric_outputs(one);
    const auto b = numeric_outputs(two);
    std::string diff;
    for (const auto& [name, content] : a) {
        const auto jt = b.find(name);
        if (jt == b.end()) diff += " missing:" + name;
        else if (jt->second != content) diff += " differs:" + name;
    }
    for (const auto& [name, content] : b) {
        if (!a.count(name)) diff += " extra:" + name;
    }
    line("AC12", code2 == code1 && diff.empty() && !a.empty(),
         "byte-identical outputs for --threads 1 and 2 (" + std::to_string(a.size()) + " files)" + diff);

    std::printf("bench-all exit codes %d and %d; other checks:", code1, code2);
    for (const auto& [id, c] : checks) {
        if (id.rfind("AC", 0) != 0) std::printf(" %s=%s", id.c_str(), c.at("passed").get<bool>() ? "pass" : "fail");
    }
    std::printf("\n%s\n", all ? "ACCEPTANCE PASSED" : "ACCEPTANCE FAILED");
    return all ? 0 : 1;
}
