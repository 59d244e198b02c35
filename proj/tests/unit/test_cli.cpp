#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "../../tools/cli.hpp"
#include "stldac/json_io.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run call(std::vector<std::string> args) {
    args.insert(args.begin(), "stldac");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out, err;
    Run r;
    r.code = stldac::cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary);
    f << text;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream s;
    s << f.rdbuf();
    return s.str();
}

fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

}  // namespace

TEST_CASE("usage and config errors exit with 2") {
    const fs::path d = fresh_dir("stldac_cli_errors");
    CHECK(call({}).code == 2);
    CHECK(call({"frobnicate", "--config", "x.json"}).code == 2);
    CHECK(call({"simulate", "--config", (d / "absent.json").string()}).code == 2);

    write(d / "sim.json", R"({"preset": "paper-stlda", "V": 50, "num_users": 3, "docs_per_user": 4})");
    const auto no_seed = call({"simulate", "--config", (d / "sim.json").string(), "--out", (d / "o").string()});
    CHECK(no_seed.code == 2);
    CHECK(no_seed.err.find("seed") != std::string::npos);

    write(d / "fit.json", R"({"corpus": "nowhere.json"})");
    const auto missing = call({"fit-vb", "--config", (d / "fit.json").string(), "--seed", "1", "--out", (d / "o").string()});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("missing input") != std::string::npos);

    write(d / "bad.json", "{ not json");
    CHECK(call({"simulate", "--config", (d / "bad.json").string(), "--seed", "1"}).code == 2);
}

TEST_CASE("preprocess from raw records") {
    const fs::path d = fresh_dir("stldac_cli_pre");
    write(d / "raw.jsonl",
          "{\"user_id\": \"a\", \"doc_id\": \"1\", \"text\": \"Taxes and schools http://t.co/x\"}\n"
          "{\"user_id\": \"a\", \"doc_id\": \"2\", \"text\": \"schools and taxes again\"}\n"
          "{\"user_id\": \"b\", \"doc_id\": \"3\", \"text\": \"the game tonight\"}\n"
          "{\"user_id\": \"b\", \"doc_id\": \"4\", \"text\": \"game game schools\"}\n");
    write(d / "pre.json", R"({"input": "raw.jsonl", "stopwords": ["the", "and"]})");
    const auto r = call({"preprocess", "--config", (d / "pre.json").string(), "--out", (d / "o").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("D=4") != std::string::npos);
    const auto rep = stldac::io::read_json_file(d / "o" / "preprocess_report.json");
    CHECK(rep.at("V").get<int>() == 5);
    CHECK(fs::exists(d / "o" / "effective_config.json"));
}

TEST_CASE("simulate, fit, evaluate and echo end to end, twice") {
    const fs::path d = fresh_dir("stldac_cli_pipeline");
    write(d / "sim.json", R"({"preset": "paper-stldac", "V": 120, "users_per_cluster": [2, 2, 2, 2],
                             "docs_per_user": 8, "seed": 3})");
    write(d / "gibbs.json", R"({"corpus": "sim/corpus.json", "gibbs": {"n_sweeps": 20, "burn_in": 10, "thin": 2}})");
    write(d / "vb.json", R"({"corpus": "sim/corpus.json", "vb": {"max_outer_iters": 5}})");
    write(d / "eval.json", R"({"corpus": "sim/corpus.json", "summary": "gibbs/summary.json",
                              "truth": "sim/truth.json", "reference": {"n_docs": 5, "doc_len": 30}})");
    write(d / "echo.json", R"({"params": "vb/params.json", "cluster_sizes": [2, 2, 2, 2], "n_mc": 50, "cap": 100000})");

    auto pipeline = [&](const std::string& tag) {
        const std::vector<std::vector<std::string>> steps{
            {"simulate", "--config", (d / "sim.json").string(), "--out", (d / "sim").string()},
            {"fit-gibbs", "--config", (d / "gibbs.json").string(), "--seed", "4", "--out", (d / "gibbs").string()},
            {"fit-vb", "--config", (d / "vb.json").string(), "--seed", "4", "--out", (d / "vb").string()},
            {"evaluate", "--config", (d / "eval.json").string(), "--seed", "4", "--out", (d / "eval").string()},
            {"echo", "--config", (d / "echo.json").string(), "--seed", "4", "--out", (d / "echo").string()}};
        for (const auto& s : steps) {
            const auto r = call(s);
            INFO(tag << " " << s[0] << ": " << r.err);
            REQUIRE(r.code == 0);
        }
    };
    const std::vector<fs::path> files{"sim/corpus.json",  "sim/truth.json",      "gibbs/summary.json",
                                      "gibbs/trace.json", "gibbs/params.json",   "vb/params.json",
                                      "vb/elbo.csv",      "vb/variational.json", "eval/metrics.json",
                                      "eval/coherence.csv", "echo/echo_report.json", "echo/echo_report.csv"};
    pipeline("first");
    std::vector<std::string> first;
    for (const auto& f : files) {
        REQUIRE(fs::exists(d / f));
        first.push_back(slurp(d / f));
    }
    pipeline("second");
    for (std::size_t i = 0; i < files.size(); ++i) {
        INFO(files[i].string());
        CHECK(slurp(d / files[i]) == first[i]);
    }
    const auto metrics = stldac::io::read_json_file(d / "eval" / "metrics.json");
    CHECK(metrics.contains("doc_topic_nmi"));
}
