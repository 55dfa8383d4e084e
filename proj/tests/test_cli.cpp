#include <doctest.h>

#include <map>
#include <sstream>

#include "benign/cli.hpp"
#include "benign/core.hpp"
#include "benign/digest.hpp"
#include "support.hpp"

using namespace benign;
using testsupport::fixture;
using testsupport::lines_of;
using testsupport::slurp;
using testsupport::spit;
using testsupport::TempDir;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;

    std::string manifest_path() const {
        const std::string tag = "manifest: ";
        const auto at = err.rfind(tag);
        if (at == std::string::npos) return {};
        const auto end = err.find('\n', at);
        return err.substr(at + tag.size(), end - at - tag.size());
    }
    Json manifest() const { return Json::parse(slurp(manifest_path())); }
};

Outcome run(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
    std::ostringstream out, err;
    Outcome o;
    o.code = cli::run_cli(args, out, err, [env](const std::string& k) -> std::optional<std::string> {
        auto it = env.find(k);
        if (it == env.end()) return std::nullopt;
        return it->second;
    });
    o.out = out.str();
    o.err = err.str();
    return o;
}

std::vector<std::string> annotate_args(const TempDir& dir) {
    return {"--store", (dir / "store").string(), "--fixed-time", "2024-05-01T00:00:00Z",
            "--mock-rules", fixture("mock_rules_10.jsonl").string(), "annotate",
            "--in", fixture("records_10.jsonl").string(), "--out", (dir / "cand.jsonl").string()};
}

}  // namespace

TEST_CASE("exit codes") {
    CHECK(run({"--help"}).code == 0);
    CHECK(run({"--help"}).out.find("annotate") != std::string::npos);
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    CHECK(run({"annotate", "--out", "x.jsonl"}).code == 2);
    CHECK(run({"format", "--shape", "csv", "--in", "a", "--out", "b"}).code == 2);
    CHECK(run({"review"}).code == 2);

    TempDir dir;
    const auto missing = run({"--store", dir.path().string(), "report", "--in", (dir / "nope.json").string()});
    CHECK(missing.code == 1);
    CHECK(missing.err.rfind("error: ", 0) == 0);
}

TEST_CASE("emit-config prints to stdout and writes a manifest") {
    TempDir dir;
    const auto o = run({"--store", dir.path().string(), "--fixed-time", "2024-05-01T00:00:00Z", "emit-config"});
    REQUIRE(o.code == 0);
    CHECK(o.out.find("learning_rate = 2e-05\n") != std::string::npos);
    CHECK(o.out.find("lora_rank = 64\n") != std::string::npos);
    CHECK(o.out.find("optimizer = \"") != std::string::npos);
    const auto m = o.manifest();
    CHECK(m["stage"] == "format");
    CHECK(m["config"]["preset"] == "table");

    const auto prose = run({"--store", dir.path().string(), "emit-config", "--preset", "prose"});
    REQUIRE(prose.code == 0);
    CHECK(prose.out != o.out);
}

TEST_CASE("settings precedence: flag over env over config over default") {
    TempDir dir;
    spit(dir / "config.json", R"({"model": "from-config"})");

    auto base = annotate_args(dir);
    auto o = run(base);
    REQUIRE(o.code == 0);
    CHECK(o.manifest()["config"]["model"] == "annotator");

    auto with_config = base;
    with_config.insert(with_config.begin(), {"--config", (dir / "config.json").string()});
    o = run(with_config);
    REQUIRE(o.code == 0);
    CHECK(o.manifest()["config"]["model"] == "from-config");

    o = run(base, {{"BENIGN_CONFIG", (dir / "config.json").string()}});
    REQUIRE(o.code == 0);
    CHECK(o.manifest()["config"]["model"] == "from-config");

    o = run(with_config, {{"BENIGN_MODEL", "from-env"}});
    REQUIRE(o.code == 0);
    CHECK(o.manifest()["config"]["model"] == "from-env");

    auto with_flag = with_config;
    with_flag.insert(with_flag.begin(), {"--model", "from-flag"});
    o = run(with_flag, {{"BENIGN_MODEL", "from-env"}});
    REQUIRE(o.code == 0);
    CHECK(o.manifest()["config"]["model"] == "from-flag");
}

TEST_CASE("config errors exit 1") {
    TempDir dir;
    spit(dir / "bad.json", R"({"modle": "x"})");
    auto args = annotate_args(dir);
    args.insert(args.begin(), {"--config", (dir / "bad.json").string()});
    auto o = run(args);
    CHECK(o.code == 1);
    CHECK(o.err.find("config-error") != std::string::npos);

    spit(dir / "array.json", "[1]");
    args = annotate_args(dir);
    args.insert(args.begin(), {"--config", (dir / "array.json").string()});
    CHECK(run(args).code == 1);

    o = run(annotate_args(dir), {{"BENIGN_PARALLELISM", "four"}});
    CHECK(o.code == 1);
    CHECK(o.err.find("parallelism") != std::string::npos);

    args = annotate_args(dir);
    args.insert(args.begin(), {"--backend", "carrier-pigeon"});
    CHECK(run(args).code == 1);

    args = annotate_args(dir);
    args[3] = "yesterday";
    CHECK(run(args).code == 1);
}

TEST_CASE("annotate writes candidates, flagged file and manifest digests") {
    TempDir dir;
    const auto o = run(annotate_args(dir));
    REQUIRE(o.code == 0);
    CHECK(o.out.find("candidates: 10\n") != std::string::npos);
    CHECK(o.out.find("complete: yes") != std::string::npos);
    CHECK(lines_of(dir / "cand.jsonl").size() == 10);
    CHECK(std::filesystem::exists(dir / "cand.jsonl.flagged.jsonl"));
    const auto m = o.manifest();
    CHECK(m["stage"] == "annotate");
    REQUIRE(m["outputs"].size() == 2);
    CHECK(m["outputs"][0]["sha256"] == sha256_hex(slurp(dir / "cand.jsonl")));
    CHECK(m["inputs"].size() == 2);
}

TEST_CASE("format alpaca and listing1 from gold pairs") {
    TempDir dir;
    std::vector<Json> golds;
    for (int i = 1; i <= 6; ++i) {
        GoldPair g;
        g.record_id = "g" + std::to_string(i);
        g.unsafe_text = "Unsafe " + std::to_string(i) + ".";
        g.benign_text = "Benign " + std::to_string(i) + ".";
        g.vote_trail = {"a", "b", "c"};
        golds.push_back(to_json(g));
    }
    std::string text;
    for (const auto& g : golds) text += g.dump() + "\n";
    spit(dir / "gold.jsonl", text);

    auto o = run({"--store", dir.path().string(), "format", "--shape", "alpaca", "--in", (dir / "gold.jsonl").string(),
                  "--out", (dir / "alpaca.jsonl").string(), "--instruction", "Rewrite kindly."});
    REQUIRE(o.code == 0);
    const auto lines = lines_of(dir / "alpaca.jsonl");
    REQUIRE(lines.size() == 6);
    CHECK(lines[0] == R"({"instruction":"Rewrite kindly.","input":"Unsafe 1.","output":"Benign 1."})");
    CHECK(o.manifest()["config"]["instruction"] == "Rewrite kindly.");

    o = run({"--store", dir.path().string(), "format", "--shape", "listing1", "--in", (dir / "gold.jsonl").string(),
             "--out", (dir / "train.jsonl").string(), "--test-fraction", "0.5", "--seed", "7"});
    REQUIRE(o.code == 0);
    CHECK(o.out == "train: 3\ntest: 3\n");
    CHECK(lines_of(dir / "train.jsonl").size() + lines_of(dir / "train.jsonl.test.jsonl").size() == 6);
    CHECK(lines_of(dir / "train.jsonl")[0].rfind(R"({"ID":"g)", 0) == 0);

    o = run({"--store", dir.path().string(), "format", "--shape", "instruct", "--in", (dir / "gold.jsonl").string(),
             "--out", (dir / "inst.jsonl").string()});
    REQUIRE(o.code == 0);
    CHECK(lines_of(dir / "inst.jsonl")[0].find("[/INST] Benign 1. </s>") != std::string::npos);
}

TEST_CASE("evaluate is deterministic and the report command re-renders it") {
    TempDir dir;
    auto eval = [&](const std::string& name, const std::string& par) {
        return run({"--store", (dir / "store").string(), "--fixed-time", "2024-05-01T00:00:00Z", "--parallelism", par,
                    "evaluate", "--in", fixture("eval_60.jsonl").string(), "--out", (dir / name).string(),
                    "--lexicon", fixture("judge_lexicon.jsonl").string(), "--publish"});
    };
    const auto a = eval("a.json", "1");
    REQUIRE(a.code == 0);
    const auto b = eval("b.json", "4");
    REQUIRE(b.code == 0);
    CHECK(slurp(dir / "a.json") == slurp(dir / "b.json"));
    CHECK(slurp(dir / "a.json.details.jsonl") == slurp(dir / "b.json.details.jsonl"));
    CHECK(a.out == b.out);
    CHECK(a.out.find("31.67") != std::string::npos);
    CHECK(std::filesystem::exists(dir / "store" / "reports" / "latest.json"));

    const auto r = run({"--store", (dir / "store").string(), "report", "--in", (dir / "a.json").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out == a.out);
}

TEST_CASE("demographics ingest and human-eval length") {
    TempDir dir;
    auto o = run({"--store", dir.path().string(), "demographics", "ingest", "--in",
                  fixture("grouped_prompts_430.csv").string(), "--out", (dir / "prompts.jsonl").string()});
    REQUIRE(o.code == 0);
    CHECK(o.out == "records: 430\ngroups: 13\n");

    o = run({"--store", dir.path().string(), "human-eval", "length", "--in", fixture("eval_60.jsonl").string()});
    REQUIRE(o.code == 0);
    CHECK(o.out.find("flagged: ") != std::string::npos);
    CHECK(o.out.find("/60\n") != std::string::npos);
}

TEST_CASE("review serve refuses to start without a secret") {
    TempDir dir;
    const auto o = run({"--store", dir.path().string(), "review", "serve", "--port", "0"});
    CHECK(o.code == 1);
    CHECK(o.err.find("BENIGN_SERVICE_TOKEN") != std::string::npos);
}
