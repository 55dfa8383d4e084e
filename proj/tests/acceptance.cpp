// Acceptance gate. One PASS/FAIL line per criterion; nonzero exit on any
// failure.

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "benign/adjudication.hpp"
#include "benign/cli.hpp"
#include "benign/core.hpp"
#include "benign/demographics.hpp"
#include "benign/digest.hpp"
#include "benign/formatter.hpp"
#include "benign/json.hpp"
#include "benign/jsonl.hpp"
#include "benign/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace benign;
using testsupport::fixture;
using testsupport::slurp;
using testsupport::spit;
using testsupport::TempDir;

namespace {

// Budgets and tolerances.
constexpr double kMetricBudgetSec = 5.0;
constexpr double kVoteBudgetSec = 10.0;
constexpr double kPipelineBudgetSec = 30.0;
constexpr double kReductionTolerance = 0.01;
constexpr int kMinGroupsAbove75 = 9;
constexpr int kPipelineRuns = 5;
constexpr int kKillPoints = 10;
constexpr const char* kFixedTime = "2024-05-01T00:00:00Z";

struct Result {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    std::string name;
    std::function<Result()> check;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt_sec(double s) {
    std::ostringstream o;
    o.precision(2);
    o << std::fixed << s << "s";
    return o.str();
}

struct CliRun {
    int code = -1;
    std::string out;
    std::string err;
};

CliRun cli(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    CliRun r;
    r.code = cli::run_cli(args, out, err, [](const std::string&) -> std::optional<std::string> { return std::nullopt; });
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Runs a command with the shared global flags; throws on a nonzero exit.
std::string step(const std::filesystem::path& store, int parallelism, std::vector<std::string> args) {
    std::vector<std::string> full = {"--store", store.string(), "--fixed-time", kFixedTime, "--parallelism",
                                     std::to_string(parallelism)};
    full.insert(full.end(), args.begin(), args.end());
    const auto r = cli(full);
    if (r.code != 0) throw std::runtime_error(args.front() + " exited " + std::to_string(r.code) + ": " + r.err);
    return r.out;
}

// ---------------------------------------------------------------------------

Result metric_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    int mismatches = 0;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        std::mt19937_64 rng(seed);
        const auto details = oracle::random_details(rng);
        const auto report = metrics::aggregate(details);
        auto tally = oracle::recount(details);
        for (auto dim : kAllDimensions) {
            const auto& r = report.at(dim);
            if (r.numerator() != tally[dim].positive || r.denominator() != tally[dim].total ||
                r.percent_hundredths() != oracle::hundredths(tally[dim])) {
                ++mismatches;
            }
        }
    }
    const double took = seconds_since(t0);
    return {mismatches == 0 && took < kMetricBudgetSec,
            "1000 seeds, " + std::to_string(mismatches) + " mismatches, " + fmt_sec(took)};
}

Result vote_oracle() {
    const auto t0 = std::chrono::steady_clock::now();
    int cases = 0, mismatches = 0;
    for (int n : {3, 5}) {
        int combos = 1;
        for (int i = 0; i < n; ++i) combos *= 4;
        for (int combo = 0; combo < combos; ++combo) {
            std::vector<int> choices;
            for (int i = 0, c = combo; i < n; ++i, c /= 4) choices.push_back(c % 4);
            for (int mask = 0; mask < (1 << n); ++mask) {
                std::vector<bool> expert;
                for (int i = 0; i < n; ++i) expert.push_back((mask >> i) & 1);
                const auto vc = oracle::make_vote_case(choices, expert, static_cast<std::uint64_t>(combo ^ mask));
                const auto got = adjudication::majority_vote(vc.candidate, "unsafe", vc.decisions, vc.reviewers);
                const auto want = oracle::vote(choices, expert);
                if (got.benign_text != want.text || got.provenance != want.provenance) ++mismatches;
                ++cases;
            }
        }
    }
    const double took = seconds_since(t0);
    return {mismatches == 0 && cases == 512 + 32768 && took < kVoteBudgetSec,
            std::to_string(cases) + " cases, " + std::to_string(mismatches) + " mismatches, " + fmt_sec(took)};
}

Result instruction_template() {
    const std::string exemplar =
        "<s>[INST] You are a text debiasing bot, you take as input a text and you output its debiased version by "
        "rephrasing it to be free from any age, gender, political, social or socio-economic biases, without any "
        "extra outputs: \"How dumb can the school system get. Almost every day there is a column about the "
        "stupidity of the system.\" [/INST] The school system could use some improvement. It is concerning to see "
        "frequent criticisms of its effectiveness. </s>";
    const auto rendered = formatter::render_instruction(
        formatter::kDebiasingSystemMessage,
        "\"How dumb can the school system get. Almost every day there is a column about the stupidity of the system.\"",
        "The school system could use some improvement. It is concerning to see frequent criticisms of its "
        "effectiveness. ");
    const bool exact = rendered == exemplar;

    static const std::string alphabet =
        "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,;:!?'\"()/]>-_\\\t\n";
    const std::regex shape(R"(^<s>\[INST\] [\s\S]* \[/INST\] [\s\S]*</s>$)");
    std::mt19937_64 rng(4242);
    auto slot = [&] {
        std::string s;
        const auto len = rng() % 48;
        for (std::size_t i = 0; i < len; ++i) s += alphabet[rng() % alphabet.size()];
        return s;
    };
    int bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const formatter::InstructionSlots in{slot(), slot(), slot()};
        const auto s = formatter::render_instruction(in.sys_message, in.instruction, in.user_prompt);
        if (!std::regex_match(s, shape) || !(formatter::parse_instruction(s, in.sys_message) == in)) ++bad;
    }
    return {exact && bad == 0,
            std::string("exemplar ") + (exact ? "byte-exact" : "differs") + ", 1000 parses, " + std::to_string(bad) +
                " failures"};
}

Result schema_fidelity() {
    const auto path = fixture("listing1_100.jsonl");
    const auto original = slurp(path);
    std::string emitted;
    int key_errors = 0;
    const std::vector<std::string> keys = {"ID", "Text", "Benign Variation"};
    const auto lines = jsonl::read_all(path);
    for (const auto& j : lines) {
        const auto out = formatter::to_json(formatter::parse_dataset_record(j));
        std::vector<std::string> got;
        for (const auto& [k, _] : out.items()) got.push_back(k);
        if (got != keys) ++key_errors;
        emitted += dump_line(out) + "\n";
    }
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"Younger workers are more adaptable and quicker to learn new technology than older employees.",
         "All employees bring valuable skills and insights to technology."},
        {"Women often don't apply for high-level positions because they're not confident in leadership roles.",
         "All genders show varied confidence in leadership roles."},
        {"Migrants tend to send most of their earnings back home.", "Migrants contribute to economic diversity."},
        {"People with mental health issues are unreliable workers.",
         "Mental health conditions do not define work reliability."},
        {"Physically disabled people need constant assistance.", "Physical disabilities vary in independence needs."},
    };
    int pair_errors = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        GoldPair g{"d00" + std::to_string(i + 1), pairs[i].first, pairs[i].second, Provenance::majority, {}, {}};
        if (dump_line(formatter::to_dataset_record(g)) != dump_line(lines[i])) ++pair_errors;
    }
    const bool identical = emitted == original;
    return {identical && key_errors == 0 && pair_errors == 0 && lines.size() == 100,
            std::to_string(lines.size()) + " records, " + (identical ? "byte-identical" : "differs") + ", " +
                std::to_string(key_errors) + " key-order errors, " + std::to_string(pair_errors) +
                " reference-pair errors"};
}

Result training_config() {
    TempDir dir;
    const auto r = cli({"--store", dir.path().string(), "--fixed-time", kFixedTime, "emit-config"});
    const std::vector<std::string> expected = {
        "train_batch = 8",      "eval_batch = 4",           "grad_accum_steps = 1",
        "max_grad_norm = 0.3",  "learning_rate = 2e-05",    "weight_decay = 0.001",
        "optimizer = \"paged_adamw_8bit\"",                 "lr_scheduler = \"constant\"",
        "warmup_ratio = 0.05",  "max_seq_len = 2048",       "epochs = 2",
        "lora_rank = 64",       "lora_alpha = 16",          "lora_dropout = 0.2",
    };
    std::string want;
    for (const auto& l : expected) want += l + "\n";
    const bool ok = r.code == 0 && r.out == want;
    return {ok, ok ? "14 values verbatim" : "exit " + std::to_string(r.code) + ", output:\n" + r.out};
}

Result demographic_reduction() {
    // Bias rate per group before and after rewriting, in hundredths of a percent.
    struct Row {
        DemographicGroup::Kind kind;
        std::uint64_t original;
        std::uint64_t post;
    };
    const std::vector<Row> rows = {
        {DemographicGroup::Kind::Women, 9260, 2769},          {DemographicGroup::Kind::MentalDisability, 9045, 147},
        {DemographicGroup::Kind::LGBTQ, 8658, 1439},          {DemographicGroup::Kind::Black, 9048, 1364},
        {DemographicGroup::Kind::Chinese, 8652, 2829},        {DemographicGroup::Kind::Asian, 9919, 1471},
        {DemographicGroup::Kind::NativeAmerican, 9827, 1698}, {DemographicGroup::Kind::MiddleEastern, 9154, 2157},
        {DemographicGroup::Kind::Muslim, 9446, 1205},         {DemographicGroup::Kind::PhysicalDisability, 8284, 737},
        {DemographicGroup::Kind::Mexican, 8748, 2192},        {DemographicGroup::Kind::Jewish, 8196, 1034},
        {DemographicGroup::Kind::Latino, 8484, 1524},
    };
    constexpr std::uint64_t kUnits = 10000;
    auto detail = [&](const Row& row, std::uint64_t positives) {
        metrics::SampleDetail d;
        d.sample_id = DemographicGroup(row.kind).name();
        d.groups = {DemographicGroup(row.kind)};
        for (auto dim : kAllDimensions) {
            auto& list = d.verdicts[dim];
            const std::uint64_t units = dim == Dimension::bias ? kUnits : 1;
            for (std::uint64_t u = 0; u < units; ++u) {
                list.push_back({"u" + std::to_string(u), dim, dim == Dimension::bias && u < positives, ""});
            }
        }
        return d;
    };
    std::vector<metrics::SampleDetail> post, base;
    for (const auto& row : rows) {
        post.push_back(detail(row, row.post));
        base.push_back(detail(row, row.original));
    }
    std::map<std::string, double> reduction;
    for (const auto& r : demographics::per_group_report(post, base)) {
        reduction[r.group.name()] = std::stod(demographics::to_json(r)["bias_reduction"].get<std::string>());
    }
    const std::map<std::string, double> reported = {
        {DemographicGroup(DemographicGroup::Kind::MentalDisability).name(), 98.37},
        {DemographicGroup(DemographicGroup::Kind::Women).name(), 70.10},
        {DemographicGroup(DemographicGroup::Kind::Asian).name(), 85.17},
    };
    bool ok = reduction.size() == rows.size();
    std::ostringstream detail_text;
    detail_text.precision(2);
    detail_text << std::fixed;
    for (const auto& [name, want] : reported) {
        const double got = reduction.count(name) ? reduction[name] : -1.0;
        ok &= std::abs(got - want) <= kReductionTolerance + 1e-9;
        detail_text << name << " " << got << ", ";
    }
    int above = 0;
    for (const auto& [_, v] : reduction) above += v > 75.0 ? 1 : 0;
    ok &= above >= kMinGroupsAbove75;
    detail_text << above << "/" << rows.size() << " groups above 75%";
    return {ok, detail_text.str()};
}

// ---------------------------------------------------------------------------
// Full pipeline

std::map<std::string, std::string> run_pipeline(const std::filesystem::path& dir, int parallelism) {
    std::filesystem::create_directories(dir);
    const auto store = dir / "store";
    auto p = [&](const std::string& name) { return (dir / name).string(); };
    const auto records = fixture("pipeline_records.jsonl").string();
    const auto reviewers = fixture("reviewers.jsonl").string();

    step(store, parallelism,
         {"--mock-rules", fixture("pipeline_mock_rules.jsonl").string(), "annotate", "--in", records, "--out",
          p("candidates.jsonl")});
    step(store, parallelism,
         {"review", "assign", "--in", p("candidates.jsonl"), "--reviewers", reviewers, "--out", p("assignments.jsonl"),
          "--seed", "11"});

    std::map<std::string, adjudication::ReviewerRole> roles;
    for (const auto& j : jsonl::read_all(reviewers)) {
        const auto r = adjudication::reviewer_profile_from_json(j);
        roles[r.id] = r.role;
    }
    // Scripted reviewers: unanimous approvals, a lone dissent, an agreeing
    // correction majority and a three-way split settled by the expert.
    std::string decisions;
    std::size_t index = 0;
    for (const auto& j : jsonl::read_all(p("assignments.jsonl"))) {
        const auto a = adjudication::assignment_from_json(j);
        const auto pattern = index++ % 4;
        std::size_t student = 0;
        for (const auto& rid : a.reviewer_ids) {
            const bool expert = roles.at(rid) == adjudication::ReviewerRole::expert;
            auto verdict = adjudication::Verdict::approve();
            if (pattern == 1 && !expert && student == 0) {
                verdict = adjudication::Verdict::correct("A lone edit for " + a.record_id + ".");
            } else if (pattern == 2 && (expert || student == 0)) {
                verdict = adjudication::Verdict::correct("Everyone deserves respect (" + a.record_id + ").");
            } else if (pattern == 3 && expert) {
                verdict = adjudication::Verdict::correct("Expert wording for " + a.record_id + ".");
            } else if (pattern == 3 && student == 1) {
                verdict = adjudication::Verdict::correct("Another wording for " + a.record_id + ".");
            }
            if (!expert) ++student;
            decisions += dump_line(adjudication::to_json(adjudication::ReviewDecision{rid, a.record_id, verdict, kFixedTime})) + "\n";
        }
    }
    spit(dir / "decisions.jsonl", decisions);

    step(store, parallelism,
         {"vote", "--records", records, "--candidates", p("candidates.jsonl"), "--decisions", p("decisions.jsonl"),
          "--reviewers", reviewers, "--assignments", p("assignments.jsonl"), "--out", p("gold.jsonl")});
    step(store, parallelism,
         {"format", "--shape", "listing1", "--in", p("gold.jsonl"), "--out", p("train.jsonl"), "--test-fraction",
          "0.1", "--seed", "5"});
    step(store, parallelism, {"format", "--shape", "instruct", "--in", p("gold.jsonl"), "--out", p("instruct.jsonl")});
    step(store, parallelism, {"format", "--shape", "alpaca", "--in", p("gold.jsonl"), "--out", p("alpaca.jsonl")});
    step(store, parallelism, {"emit-config", "--out", p("training.cfg")});
    const auto lexicon = fixture("judge_lexicon.jsonl").string();
    step(store, parallelism,
         {"evaluate", "--in", p("gold.jsonl"), "--records", records, "--lexicon", lexicon, "--out", p("post.json")});
    step(store, parallelism,
         {"evaluate", "--in", p("gold.jsonl"), "--records", records, "--lexicon", lexicon, "--score-original", "--out",
          p("baseline.json")});
    step(store, parallelism,
         {"demographics", "report", "--details", p("post.json.details.jsonl"), "--baseline",
          p("baseline.json.details.jsonl"), "--out", p("groups.txt"), "--json", p("groups.json")});

    std::map<std::string, std::string> digests;
    for (const auto& name : {"candidates.jsonl", "candidates.jsonl.flagged.jsonl", "assignments.jsonl", "gold.jsonl",
                             "gold.jsonl.escalated.jsonl", "train.jsonl", "train.jsonl.test.jsonl", "instruct.jsonl",
                             "alpaca.jsonl", "training.cfg", "post.json", "post.json.details.jsonl", "baseline.json",
                             "baseline.json.details.jsonl", "groups.txt", "groups.json"}) {
        digests[name] = sha256_file(dir / name);
    }
    return digests;
}

Result end_to_end() {
    const auto t0 = std::chrono::steady_clock::now();
    TempDir root("benign-accept");
    std::vector<std::map<std::string, std::string>> runs;
    const int parallelism[kPipelineRuns] = {1, 4, 1, 4, 2};
    for (int i = 0; i < kPipelineRuns; ++i) {
        runs.push_back(run_pipeline(root / ("run" + std::to_string(i)), parallelism[i]));
    }
    int differing = 0;
    for (const auto& r : runs) differing += r == runs.front() ? 0 : 1;

    const auto dir = root / "run0";
    const auto gold = jsonl::read_all(dir / "gold.jsonl");
    const auto candidates = jsonl::read_all(dir / "candidates.jsonl");
    const auto escalated = jsonl::read_all(dir / "gold.jsonl.escalated.jsonl");
    std::map<std::string, int> provenance;
    for (const auto& g : gold) provenance[g["provenance"].get<std::string>()] += 1;
    const auto post = metric_report_from_json(Json::parse(slurp(dir / "post.json")));
    const auto base = metric_report_from_json(Json::parse(slurp(dir / "baseline.json")));
    const bool lowered = post.at(Dimension::bias).value() < base.at(Dimension::bias).value();
    const double took = seconds_since(t0);

    const bool ok = differing == 0 && !gold.empty() && gold.size() == candidates.size() && escalated.empty() &&
                    provenance.size() == 3 && lowered && took < kPipelineBudgetSec;
    std::ostringstream d;
    d << kPipelineRuns << " runs (parallelism 1/4/1/4/2), " << differing << " differing, " << runs.front().size()
      << " artifacts, gold " << gold.size() << "/" << candidates.size() << ", bias "
      << base.at(Dimension::bias).percent_string() << " -> " << post.at(Dimension::bias).percent_string() << ", "
      << fmt_sec(took);
    return {ok, d.str()};
}

Result resumability() {
    TempDir root("benign-resume");
    const auto records = fixture("pipeline_records.jsonl").string();
    const auto rules = fixture("pipeline_mock_rules.jsonl").string();
    auto annotate = [&](const std::filesystem::path& dir, int parallelism, std::optional<std::size_t> limit) {
        std::vector<std::string> args = {"--mock-rules", rules, "annotate", "--in", records, "--out",
                                         (dir / "candidates.jsonl").string()};
        if (limit) {
            args.push_back("--limit");
            args.push_back(std::to_string(*limit));
        }
        return step(dir / "store", parallelism, args);
    };
    std::filesystem::create_directories(root / "reference");
    annotate(root / "reference", 1, std::nullopt);
    const auto want = slurp(root / "reference" / "candidates.jsonl");
    const auto want_flagged = slurp(root / "reference" / "candidates.jsonl.flagged.jsonl");
    const std::size_t total = jsonl::read_all(records).size();

    std::mt19937_64 rng(20240501);
    int failures = 0;
    std::string points;
    for (int trial = 0; trial < kKillPoints; ++trial) {
        const auto dir = root / ("kill" + std::to_string(trial));
        std::filesystem::create_directories(dir);
        const std::size_t k = 1 + rng() % (total - 1);
        const int parallelism = 1 + static_cast<int>(rng() % 4);
        annotate(dir, parallelism, k);
        std::size_t expect_resumed = k;
        if (trial % 2 == 1) {
            // Cut the last checkpoint line short, as a crash mid-write would.
            const auto ckpt = dir / "candidates.jsonl.checkpoint.jsonl";
            const auto size = std::filesystem::file_size(ckpt);
            std::filesystem::resize_file(ckpt, size - 7);
            expect_resumed = k - 1;
        }
        const auto out = annotate(dir, parallelism, std::nullopt);
        const bool same = slurp(dir / "candidates.jsonl") == want &&
                          slurp(dir / "candidates.jsonl.flagged.jsonl") == want_flagged &&
                          out.find("resumed: " + std::to_string(expect_resumed) + "\n") != std::string::npos &&
                          out.find("complete: yes") != std::string::npos;
        if (!same) ++failures;
        points += (points.empty() ? "" : ",") + std::to_string(k) + (trial % 2 == 1 ? "t" : "");
    }
    return {failures == 0, std::to_string(kKillPoints) + " kill points [" + points + "], " + std::to_string(failures) +
                               " mismatches"};
}

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"metric-aggregation-oracle", metric_oracle},
        {"majority-vote-exhaustive-oracle", vote_oracle},
        {"instruction-template-exemplar-and-inverse", instruction_template},
        {"dataset-schema-fidelity", schema_fidelity},
        {"training-config-values", training_config},
        {"demographic-bias-reduction", demographic_reduction},
        {"end-to-end-determinism", end_to_end},
        {"annotation-resumability", resumability},
    };
    int failed = 0;
    for (const auto& c : criteria) {
        Result r;
        try {
            r = c.check();
        } catch (const std::exception& e) {
            r = {false, std::string("threw: ") + e.what()};
        }
        if (!r.pass) ++failed;
        std::cout << (r.pass ? "PASS " : "FAIL ") << c.name << ": " << r.detail << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? EXIT_SUCCESS : EXIT_FAILURE;
}
