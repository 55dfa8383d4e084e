#include "benign/cli.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "benign/adjudication.hpp"
#include "benign/annotator.hpp"
#include "benign/core.hpp"
#include "benign/demographics.hpp"
#include "benign/formatter.hpp"
#include "benign/gateway.hpp"
#include "benign/human_eval.hpp"
#include "benign/jsonl.hpp"
#include "benign/metrics.hpp"
#include "benign/orchestrator.hpp"
#include "benign/service.hpp"
#include "benign/text.hpp"

namespace benign::cli {

namespace fs = std::filesystem;
using orchestrator::RunManifest;
using orchestrator::Stage;

EnvLookup process_env() {
    return [](const std::string& name) -> std::optional<std::string> {
        const char* v = std::getenv(name.c_str());
        if (v == nullptr) return std::nullopt;
        return std::string(v);
    };
}

namespace {

// ---------------------------------------------------------------------------
// Settings

struct SettingSpec {
    const char* key;
    const char* flag;
    const char* fallback;
    const char* help;
};

constexpr SettingSpec kSettings[] = {
    {"store", "--store", ".benign", "Store directory"},
    {"backend", "--backend", "mock", "Annotator backend: mock or http"},
    {"endpoint", "--endpoint", "", "Chat-completions endpoint URL"},
    {"token_env", "--token-env", "BENIGN_API_TOKEN", "Environment variable holding the backend token"},
    {"mock_rules", "--mock-rules", "", "Mock backend rule file"},
    {"model", "--model", "annotator", "Annotator model id"},
    {"judge", "--judge", "mock", "Judge backend: mock or http"},
    {"judge_model", "--judge-model", "judge", "Judge model id"},
    {"parallelism", "--parallelism", "1", "Concurrent requests"},
    {"rpm", "--rpm", "600", "Requests per minute"},
    {"max_retries", "--max-retries", "3", "Retries per request"},
    {"timeout_ms", "--timeout-ms", "60000", "Request timeout"},
    {"reviewers_per_record", "-k,--reviewers-per-record", "3", "Reviewers per record"},
    {"fixed_time", "--fixed-time", "", "Use this UTC instant for every timestamp"},
    {"manifest_dir", "--manifest-dir", "", "Where run manifests go (default <store>/manifests)"},
    {"service_token_env", "--service-token-env", "BENIGN_SERVICE_TOKEN",
     "Environment variable holding the review service secret"},
};

std::string env_name(std::string_view key) {
    std::string out = "BENIGN_";
    for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    return out;
}

class Settings {
public:
    Settings(const std::map<std::string, std::optional<std::string>>& flags, const EnvLookup& env,
             const std::optional<std::string>& config_flag) {
        std::optional<std::string> config_path = config_flag;
        if (!config_path) config_path = env("BENIGN_CONFIG");
        Json config = Json::object();
        if (config_path && !config_path->empty()) {
            config = parse_json(jsonl::read_text(*config_path));
            if (!config.is_object()) throw Error(Errc::config_error, "config file must hold a JSON object");
        }
        for (const auto& spec : kSettings) {
            std::string value = spec.fallback;
            std::string source = "default";
            if (auto it = config.find(spec.key); it != config.end()) {
                value = it->is_string() ? it->get<std::string>() : it->dump();
                source = "config";
            }
            if (auto e = env(env_name(spec.key))) {
                value = *e;
                source = "env";
            }
            if (auto f = flags.at(spec.key)) {
                value = *f;
                source = "flag";
            }
            values_[spec.key] = value;
            sources_[spec.key] = source;
        }
        for (const auto& [key, _] : config.items()) {
            if (!values_.contains(key)) throw Error(Errc::config_error, "unknown config key: " + key);
        }
    }

    const std::string& get(const std::string& key) const { return values_.at(key); }
    const std::string& source(const std::string& key) const { return sources_.at(key); }

    int get_int(const std::string& key) const {
        const auto& v = get(key);
        try {
            std::size_t used = 0;
            const int n = std::stoi(v, &used);
            if (used != v.size()) throw std::invalid_argument(v);
            return n;
        } catch (const std::exception&) {
            throw Error(Errc::config_error, key + " must be an integer, got \"" + v + "\"");
        }
    }

    fs::path store() const { return get("store"); }
    fs::path manifest_dir() const {
        const auto& d = get("manifest_dir");
        return d.empty() ? store() / "manifests" : fs::path(d);
    }

    Json snapshot(std::initializer_list<const char*> keys) const {
        Json j = Json::object();
        for (const char* k : keys) j[k] = get(k);
        return j;
    }

private:
    std::map<std::string, std::string> values_;
    std::map<std::string, std::string> sources_;
};

// ---------------------------------------------------------------------------
// Shared helpers

struct Context {
    const Settings& settings;
    Clock& clock;
    std::ostream& out;
    std::ostream& err;

    void finish(RunManifest& m) {
        m.seal(clock.utc_now());
        const auto path = m.write(settings.manifest_dir());
        err << "manifest: " << path.generic_string() << "\n";
    }
};

std::vector<gateway::MockRule> rules_or_empty(const std::string& path) {
    if (path.empty()) return {};
    return gateway::load_mock_rules(path);
}

gateway::BackendConfig backend_config(const Settings& s) {
    gateway::BackendConfig c;
    c.endpoint_url = s.get("endpoint");
    c.auth_token_env_name = s.get("token_env");
    c.timeout_ms = s.get_int("timeout_ms");
    c.max_retries = s.get_int("max_retries");
    c.requests_per_minute = s.get_int("rpm");
    return c;
}

std::unique_ptr<gateway::ChatClient> make_client(const Settings& s, const std::string& backend,
                                                 std::shared_ptr<gateway::Transport> mock) {
    auto config = backend_config(s);
    if (backend == "mock") {
        return std::make_unique<gateway::ChatClient>(config, std::move(mock),
                                                     std::make_shared<gateway::VirtualTicker>());
    }
    if (backend == "http") {
        gateway::validate(config);
        return std::make_unique<gateway::ChatClient>(config, std::make_shared<gateway::HttpTransport>(config));
    }
    throw Error(Errc::config_error, "backend must be mock or http, got \"" + backend + "\"");
}

void write_lines(const fs::path& path, const std::vector<Json>& lines) { jsonl::write_all(path, lines); }

template <typename T>
std::vector<Json> as_json_lines(const std::vector<T>& items) {
    std::vector<Json> out;
    out.reserve(items.size());
    for (const auto& i : items) out.push_back(to_json(i));
    return out;
}

// EvalSample lines, Listing-1 dataset lines or GoldPair lines.
std::vector<metrics::EvalSample> load_samples(const fs::path& path, const std::string& records_path,
                                              bool score_original) {
    std::map<std::string, std::vector<DemographicGroup>> groups;
    if (!records_path.empty()) {
        for (const auto& j : jsonl::read_all(records_path)) {
            auto r = source_record_from_json(j);
            groups[r.id] = r.groups;
        }
    }
    std::vector<metrics::EvalSample> out;
    for (const auto& j : jsonl::read_all(path)) {
        metrics::EvalSample s;
        if (j.contains("sample_id")) {
            s = metrics::eval_sample_from_json(j);
        } else if (j.contains("ID")) {
            const auto r = formatter::parse_dataset_record(j);
            s = metrics::EvalSample{r.id, r.text, r.benign_variation, {}};
        } else if (j.contains("record_id")) {
            const auto g = gold_pair_from_json(j);
            if (!g.finalized()) throw Error(Errc::unfinalized_gold, g.record_id + " has no gold text yet");
            s = metrics::EvalSample{g.record_id, g.unsafe_text, *g.benign_text, {}};
        } else {
            throw Error(Errc::parse_error, "unrecognized sample line in " + path.string());
        }
        if (auto it = groups.find(s.sample_id); it != groups.end() && s.groups.empty()) s.groups = it->second;
        if (score_original) s.output_text = s.input_text;
        metrics::validate(s);
        out.push_back(std::move(s));
    }
    if (out.empty()) throw Error(Errc::empty_input, path.string() + " holds no samples");
    return out;
}

std::vector<metrics::SampleDetail> load_details(const fs::path& path) {
    std::vector<metrics::SampleDetail> out;
    for (const auto& j : jsonl::read_all(path)) out.push_back(metrics::sample_detail_from_json(j));
    return out;
}

void write_or_print(Context& ctx, const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        ctx.out << content;
    } else {
        jsonl::write_text(out_path, content);
    }
}

std::atomic<service::ReviewService*> g_serving{nullptr};

extern "C" void stop_serving(int) {
    if (auto* s = g_serving.load()) s->stop();
}

}  // namespace

// ---------------------------------------------------------------------------
// Entry point

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
    CLI::App app{"Debiasing data pipeline: annotate, review, vote, format, evaluate, report.", "benign"};
    app.require_subcommand(1);
    app.fallthrough();

    std::map<std::string, std::optional<std::string>> flags;
    for (const auto& spec : kSettings) flags[spec.key] = std::nullopt;
    for (const auto& spec : kSettings) app.add_option(spec.flag, flags[spec.key], spec.help);
    std::optional<std::string> config_flag;
    app.add_option("--config", config_flag, "JSON config file");

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Generate benign candidates for unsafe records");
    std::string ann_in, ann_out, ann_flagged, ann_checkpoint, ann_demos = "default";
    std::optional<std::size_t> ann_limit;
    annotate->add_option("--in", ann_in, "Source records (one JSON object per line)")->required();
    annotate->add_option("--out", ann_out, "Candidate output file")->required();
    annotate->add_option("--flagged", ann_flagged, "Flagged records file (default <out>.flagged.jsonl)");
    annotate->add_option("--checkpoint", ann_checkpoint, "Checkpoint log (default <out>.checkpoint.jsonl)");
    annotate->add_option("--demos", ann_demos, "Demonstrations: default, appendix or zero-shot")
        ->check(CLI::IsMember({"default", "appendix", "zero-shot"}));
    annotate->add_option("--limit", ann_limit, "Stop after this many new requests");

    // review
    auto* review = app.add_subcommand("review", "Reviewer assignment and the review service");
    review->require_subcommand(1);
    auto* assign = review->add_subcommand("assign", "Assign each candidate to k reviewers");
    std::string as_in, as_reviewers, as_out;
    std::uint64_t as_seed = 0;
    assign->add_option("--in", as_in, "Candidate file")->required();
    assign->add_option("--reviewers", as_reviewers, "Reviewer profiles")->required();
    assign->add_option("--out", as_out, "Assignment file")->required();
    assign->add_option("--seed", as_seed, "Shuffle seed");
    auto* serve = review->add_subcommand("serve", "Run the HTTP review service over the store");
    std::string sv_host = "127.0.0.1";
    int sv_port = 8080;
    serve->add_option("--host", sv_host, "Bind address");
    serve->add_option("--port", sv_port, "Port (0 picks one)");

    // vote
    auto* vote = app.add_subcommand("vote", "Finalize gold labels by majority vote");
    std::string vt_records, vt_candidates, vt_decisions, vt_reviewers, vt_assignments, vt_out, vt_escalated;
    vote->add_option("--records", vt_records, "Source records")->required();
    vote->add_option("--candidates", vt_candidates, "Candidate file")->required();
    vote->add_option("--decisions", vt_decisions, "Decision log")->required();
    vote->add_option("--reviewers", vt_reviewers, "Reviewer profiles")->required();
    vote->add_option("--assignments", vt_assignments, "Only vote records whose assigned reviewers all decided");
    vote->add_option("--out", vt_out, "Gold output")->required();
    vote->add_option("--escalated", vt_escalated, "Escalated pairs (default <out>.escalated.jsonl)");

    // format
    auto* format = app.add_subcommand("format", "Emit training data from gold pairs");
    std::string fm_shape, fm_in, fm_out, fm_test_out, fm_instruction = formatter::kDebiasingSystemMessage;
    std::optional<double> fm_fraction;
    std::uint64_t fm_seed = 0;
    format->add_option("--shape", fm_shape, "listing1, alpaca or instruct")
        ->required()
        ->check(CLI::IsMember({"listing1", "alpaca", "instruct"}));
    format->add_option("--in", fm_in, "Gold pairs")->required();
    format->add_option("--out", fm_out, "Output (train part when splitting)")->required();
    format->add_option("--test-fraction", fm_fraction, "Hold out this fraction as a test split");
    format->add_option("--test-out", fm_test_out, "Test split output (default <out>.test.jsonl)");
    format->add_option("--seed", fm_seed, "Split seed");
    format->add_option("--instruction", fm_instruction, "Alpaca instruction text");

    // emit-config
    auto* emit = app.add_subcommand("emit-config", "Write the fine-tuning hyperparameters");
    std::string ec_preset = "table", ec_out;
    emit->add_option("--preset", ec_preset, "table or prose")->check(CLI::IsMember({"table", "prose"}));
    emit->add_option("--out", ec_out, "Output file (stdout when omitted)");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score rewrites with the judge");
    std::string ev_in, ev_records, ev_out, ev_details, ev_judge_rules, ev_lexicon, ev_templates;
    std::size_t ev_batch = 16;
    bool ev_no_fallback = false, ev_original = false, ev_publish = false;
    evaluate->add_option("--in", ev_in, "Samples, dataset records or gold pairs")->required();
    evaluate->add_option("--records", ev_records, "Source records supplying demographic groups");
    evaluate->add_option("--out", ev_out, "Report file")->required();
    evaluate->add_option("--details", ev_details, "Per-sample verdicts (default <out>.details.jsonl)");
    evaluate->add_option("--judge-rules", ev_judge_rules, "Rule file consulted before the offline judge");
    evaluate->add_option("--lexicon", ev_lexicon, "Offline judge lexicon");
    evaluate->add_option("--templates", ev_templates, "Directory of judge prompt templates");
    evaluate->add_option("--classify-batch", ev_batch, "Units per classification call");
    evaluate->add_flag("--no-fallback", ev_no_fallback, "Fail samples whose bias/toxicity extraction is empty");
    evaluate->add_flag("--score-original", ev_original, "Judge the input text itself (baseline run)");
    evaluate->add_flag("--publish", ev_publish, "Also publish as the store's latest report");

    // demographics
    auto* demo = app.add_subcommand("demographics", "Group-labelled prompts and per-group reports");
    demo->require_subcommand(1);
    auto* ingest = demo->add_subcommand("ingest", "Read an id,text,group table into source records");
    std::string dg_in, dg_out;
    ingest->add_option("--in", dg_in, "Delimited file")->required();
    ingest->add_option("--out", dg_out, "Source records output")->required();
    auto* dreport = demo->add_subcommand("report", "Per-group metrics from evaluation details");
    std::string dr_details, dr_baseline, dr_out, dr_json;
    dreport->add_option("--details", dr_details, "Details of the rewrite run")->required();
    dreport->add_option("--baseline", dr_baseline, "Details of the baseline run");
    dreport->add_option("--out", dr_out, "Table output (stdout when omitted)");
    dreport->add_option("--json", dr_json, "JSON output");

    // human-eval
    auto* human = app.add_subcommand("human-eval", "Likert sheets");
    human->require_subcommand(1);
    auto* submit = human->add_subcommand("submit", "Submit sheets to the store");
    std::string he_in, he_out, he_json;
    submit->add_option("--in", he_in, "Sheets file")->required();
    auto* hagg = human->add_subcommand("aggregate", "Per-sample and overall rubric means");
    std::string ha_in;
    hagg->add_option("--in", ha_in, "Sheets file (default: the store's current sheets)");
    hagg->add_option("--out", he_out, "Table output (stdout when omitted)");
    hagg->add_option("--json", he_json, "JSON output");
    auto* hlen = human->add_subcommand("length", "Output/input length ratios");
    std::string hl_in;
    double hl_min = 0.5, hl_max = 1.5;
    hlen->add_option("--in", hl_in, "Samples")->required();
    hlen->add_option("--min", hl_min, "Lower band edge");
    hlen->add_option("--max", hl_max, "Upper band edge");

    // report
    auto* report = app.add_subcommand("report", "Render a metric report");
    std::string rp_in, rp_out;
    report->add_option("--in", rp_in, "Report file")->required();
    report->add_option("--out", rp_out, "Output (stdout when omitted)");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "usage error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        const Settings settings(flags, env, config_flag);
        const std::string& fixed = settings.get("fixed_time");
        std::unique_ptr<Clock> clock;
        if (fixed.empty()) {
            clock = std::make_unique<SystemClock>();
        } else {
            if (!is_iso8601_utc(fixed)) throw Error(Errc::config_error, "fixed time is not UTC ISO-8601: " + fixed);
            clock = std::make_unique<FixedClock>(fixed);
        }
        Context ctx{settings, *clock, out, err};
        const int parallelism = settings.get_int("parallelism");

        if (*annotate) {
            RunManifest m(Stage::annotate, clock->utc_now());
            RecordValidator validator(false, clock.get());
            std::vector<SourceRecord> records;
            for (const auto& j : jsonl::read_all(ann_in)) records.push_back(validator.validate(j));
            m.add_input(ann_in);
            const auto& rules_path = settings.get("mock_rules");
            if (settings.get("backend") == "mock" && !rules_path.empty()) m.add_input(rules_path);
            auto client = make_client(settings, settings.get("backend"),
                                      std::make_shared<gateway::MockTransport>(rules_or_empty(rules_path)));

            annotator::AnnotateOptions opts;
            opts.demos = ann_demos == "appendix"    ? annotator::appendix_demos()
                         : ann_demos == "zero-shot" ? annotator::zero_shot()
                                                    : annotator::default_demos();
            opts.model_id = settings.get("model");
            opts.parallelism = parallelism;
            opts.checkpoint_path = ann_checkpoint.empty() ? fs::path(ann_out + ".checkpoint.jsonl")
                                                          : fs::path(ann_checkpoint);
            opts.limit = ann_limit;
            const auto result = annotator::annotate_corpus(records, *client, opts, *clock);
            if (result.torn_lines_dropped > 0) {
                err << "warning: dropped " << result.torn_lines_dropped << " torn checkpoint line(s)\n";
            }
            const fs::path flagged_path = ann_flagged.empty() ? fs::path(ann_out + ".flagged.jsonl") : fs::path(ann_flagged);
            write_lines(ann_out, as_json_lines(result.candidates));
            std::vector<Json> flagged;
            for (const auto& f : result.flagged) flagged.push_back(annotator::to_json(f));
            write_lines(flagged_path, flagged);
            out << "candidates: " << result.candidates.size() << "\nflagged: " << result.flagged.size()
                << "\nresumed: " << result.resumed << "\nrequested: " << result.requested
                << "\ncomplete: " << (result.complete ? "yes" : "no") << "\n";
            Json config = settings.snapshot({"backend", "model"});
            config["demos"] = ann_demos;
            m.set_config(config);
            m.add_output(ann_out);
            m.add_output(flagged_path);
            ctx.finish(m);
            return 0;
        }

        if (*assign) {
            RunManifest m(Stage::review, clock->utc_now());
            std::vector<std::string> ids;
            for (const auto& j : jsonl::read_all(as_in)) ids.push_back(benign_candidate_from_json(j).record_id);
            std::vector<adjudication::ReviewerProfile> reviewers;
            for (const auto& j : jsonl::read_all(as_reviewers)) {
                reviewers.push_back(adjudication::reviewer_profile_from_json(j));
            }
            const int k = settings.get_int("reviewers_per_record");
            const auto plan = adjudication::assign_reviews(ids, reviewers, k, as_seed);
            write_lines(as_out, as_json_lines(plan));
            out << "assignments: " << plan.size() << "\n";
            m.add_input(as_in);
            m.add_input(as_reviewers);
            m.set_config(Json{{"k", k}, {"seed", as_seed}});
            m.add_output(as_out);
            ctx.finish(m);
            return 0;
        }

        if (*serve) {
            const auto token = env(settings.get("service_token_env"));
            if (!token || token->empty()) {
                throw Error(Errc::config_error, "set " + settings.get("service_token_env") + " to the shared secret");
            }
            service::ReviewService svc(service::ServiceOptions{settings.store(), *token}, *clock,
                                       [&](const std::string& w) { err << "warning: " << w << "\n"; });
            const int port = svc.bind(sv_host, sv_port);
            out << "serving on " << sv_host << ":" << port << "\n" << std::flush;
            g_serving = &svc;
            std::signal(SIGINT, stop_serving);
            std::signal(SIGTERM, stop_serving);
            svc.serve();
            g_serving = nullptr;
            return 0;
        }

        if (*vote) {
            RunManifest m(Stage::review, clock->utc_now());
            std::map<std::string, SourceRecord> records;
            for (const auto& j : jsonl::read_all(vt_records)) {
                auto r = source_record_from_json(j);
                const std::string id = r.id;
                records.emplace(id, std::move(r));
            }
            std::vector<adjudication::ReviewerProfile> reviewers;
            for (const auto& j : jsonl::read_all(vt_reviewers)) {
                reviewers.push_back(adjudication::reviewer_profile_from_json(j));
            }
            std::map<std::string, std::vector<adjudication::ReviewDecision>> by_record;
            const auto log = jsonl::read_log(vt_decisions, false);
            for (const auto& j : log.entries) {
                auto d = adjudication::review_decision_from_json(j);
                const std::string id = d.record_id;
                by_record[id].push_back(std::move(d));
            }
            std::map<std::string, std::size_t> required;
            if (!vt_assignments.empty()) {
                for (const auto& j : jsonl::read_all(vt_assignments)) {
                    const auto a = adjudication::assignment_from_json(j);
                    required[a.record_id] = a.reviewer_ids.size();
                }
            }
            std::vector<Json> gold, escalated;
            std::size_t pending = 0;
            std::map<std::string, std::size_t> provenance_counts;
            for (const auto& j : jsonl::read_all(vt_candidates)) {
                const auto c = benign_candidate_from_json(j);
                auto it = by_record.find(c.record_id);
                const std::size_t have = it == by_record.end() ? 0 : it->second.size();
                const auto need = required.find(c.record_id);
                if (have == 0 || (need != required.end() && have < need->second)) {
                    ++pending;
                    continue;
                }
                auto rec = records.find(c.record_id);
                if (rec == records.end()) throw Error(Errc::not_found, "no source record for " + c.record_id);
                const GoldPair g = adjudication::majority_vote(c, rec->second.text, it->second, reviewers);
                ++provenance_counts[std::string(to_string(g.provenance))];
                (g.finalized() ? gold : escalated).push_back(to_json(g));
            }
            const fs::path escalated_path = vt_escalated.empty() ? fs::path(vt_out + ".escalated.jsonl") : fs::path(vt_escalated);
            write_lines(vt_out, gold);
            write_lines(escalated_path, escalated);
            const auto stats = adjudication::agreement_stats(by_record);
            out << "gold: " << gold.size() << "\nescalated: " << escalated.size() << "\npending: " << pending << "\n";
            for (const auto& [p, n] : provenance_counts) out << "  " << p << ": " << n << "\n";
            if (stats.total_pairs > 0) {
                out << "pairwise agreement: " << stats.agreeing_pairs << "/" << stats.total_pairs << " ("
                    << format_hundredths(Ratio::make(stats.agreeing_pairs, stats.total_pairs).percent_hundredths())
                    << "%)\n";
            }
            for (const auto& p : {vt_records, vt_candidates, vt_decisions, vt_reviewers}) m.add_input(p);
            if (!vt_assignments.empty()) m.add_input(vt_assignments);
            m.set_config(Json::object());
            m.add_output(vt_out);
            m.add_output(escalated_path);
            ctx.finish(m);
            return 0;
        }

        if (*format) {
            RunManifest m(Stage::format, clock->utc_now());
            std::vector<GoldPair> golds;
            for (const auto& j : jsonl::read_all(fm_in)) golds.push_back(gold_pair_from_json(j));
            auto shape = [&](const std::vector<GoldPair>& part) {
                std::vector<Json> lines;
                for (const auto& g : part) {
                    if (fm_shape == "listing1") {
                        lines.push_back(formatter::to_dataset_record(g));
                    } else if (fm_shape == "alpaca") {
                        lines.push_back(formatter::to_json(formatter::to_alpaca(g, fm_instruction)));
                    } else {
                        if (!g.finalized()) throw Error(Errc::unfinalized_gold, g.record_id + " has no gold text yet");
                        lines.push_back(Json{{"text", formatter::render_instruction(formatter::kDebiasingSystemMessage,
                                                                                   "\"" + g.unsafe_text + "\"",
                                                                                   *g.benign_text + " ")}});
                    }
                }
                return lines;
            };
            Json config{{"shape", fm_shape}};
            if (fm_shape == "alpaca") config["instruction"] = fm_instruction;
            m.add_input(fm_in);
            if (fm_fraction) {
                const auto parts = formatter::split<GoldPair>(golds, *fm_fraction, fm_seed);
                const fs::path test_path = fm_test_out.empty() ? fs::path(fm_out + ".test.jsonl") : fs::path(fm_test_out);
                write_lines(fm_out, shape(parts.train));
                write_lines(test_path, shape(parts.test));
                out << "train: " << parts.train.size() << "\ntest: " << parts.test.size() << "\n";
                config["test_fraction"] = *fm_fraction;
                config["seed"] = fm_seed;
                m.set_config(config);
                m.add_output(fm_out);
                m.add_output(test_path);
            } else {
                write_lines(fm_out, shape(golds));
                out << "records: " << golds.size() << "\n";
                m.set_config(config);
                m.add_output(fm_out);
            }
            ctx.finish(m);
            return 0;
        }

        if (*emit) {
            const auto profile = ec_preset == "prose" ? HyperparameterProfile::prose_preset() : HyperparameterProfile{};
            const std::string text = formatter::emit_training_config(profile);
            RunManifest m(Stage::format, clock->utc_now());
            write_or_print(ctx, ec_out, text);
            m.set_config(Json{{"preset", ec_preset}});
            if (!ec_out.empty()) m.add_output(ec_out);
            ctx.finish(m);
            return 0;
        }

        if (*evaluate) {
            RunManifest m(Stage::evaluate, clock->utc_now());
            const auto samples = load_samples(ev_in, ev_records, ev_original);
            m.add_input(ev_in);
            if (!ev_records.empty()) m.add_input(ev_records);
            metrics::JudgeOptions jo;
            jo.model_id = settings.get("judge_model");
            if (!ev_templates.empty()) jo.templates = metrics::load_templates(ev_templates);
            jo.classify_batch = ev_batch;
            jo.whole_output_fallback = !ev_no_fallback;
            std::shared_ptr<gateway::Transport> mock;
            if (settings.get("judge") == "mock") {
                auto lexicon = ev_lexicon.empty() ? metrics::default_lexicon() : metrics::load_lexicon(ev_lexicon);
                if (!ev_lexicon.empty()) m.add_input(ev_lexicon);
                if (!ev_judge_rules.empty()) m.add_input(ev_judge_rules);
                mock = metrics::make_mock_judge(rules_or_empty(ev_judge_rules), std::move(lexicon));
            }
            auto client = make_client(settings, settings.get("judge"), mock);
            metrics::Judge judge(*client, jo);
            const auto run = metrics::evaluate_run(samples, judge, parallelism, *clock);
            const fs::path details_path = ev_details.empty() ? fs::path(ev_out + ".details.jsonl") : fs::path(ev_details);
            jsonl::write_text(ev_out, to_json(run.report).dump(2) + "\n");
            std::vector<Json> details;
            for (const auto& d : run.details) details.push_back(metrics::to_json(d));
            write_lines(details_path, details);
            if (ev_publish) jsonl::write_text(service::StoreLayout{settings.store()}.latest_report(),
                                              to_json(run.report).dump(2) + "\n");
            out << metrics::render_report_table(run.report);
            Json config = settings.snapshot({"judge", "judge_model"});
            config["classify_batch"] = ev_batch;
            config["whole_output_fallback"] = !ev_no_fallback;
            config["score_original"] = ev_original;
            m.set_config(config);
            m.add_output(ev_out);
            m.add_output(details_path);
            ctx.finish(m);
            return 0;
        }

        if (*ingest) {
            RunManifest m(Stage::demographics, clock->utc_now());
            const auto records = demographics::ingest_grouped_prompts(
                dg_in, [&](const std::string& w) { err << "warning: " << w << "\n"; }, clock.get());
            write_lines(dg_out, as_json_lines(records));
            std::set<DemographicGroup> distinct;
            for (const auto& r : records) distinct.insert(r.groups.begin(), r.groups.end());
            out << "records: " << records.size() << "\ngroups: " << distinct.size() << "\n";
            m.add_input(dg_in);
            m.set_config(Json::object());
            m.add_output(dg_out);
            ctx.finish(m);
            return 0;
        }

        if (*dreport) {
            RunManifest m(Stage::demographics, clock->utc_now());
            const auto details = load_details(dr_details);
            m.add_input(dr_details);
            std::optional<std::vector<metrics::SampleDetail>> baseline;
            if (!dr_baseline.empty()) {
                baseline = load_details(dr_baseline);
                m.add_input(dr_baseline);
            }
            const auto reports = demographics::per_group_report(details, baseline);
            const std::string table = demographics::render_group_table(reports);
            write_or_print(ctx, dr_out, table);
            if (!dr_out.empty()) m.add_output(dr_out);
            if (!dr_json.empty()) {
                Json arr = Json::array();
                for (const auto& r : reports) arr.push_back(demographics::to_json(r));
                jsonl::write_text(dr_json, arr.dump(2) + "\n");
                m.add_output(dr_json);
            }
            m.set_config(Json::object());
            ctx.finish(m);
            return 0;
        }

        if (*submit) {
            RunManifest m(Stage::human_eval, clock->utc_now());
            const service::StoreLayout layout{settings.store()};
            human_eval::SheetStore store(*clock, layout.sheets());
            for (const auto& j : jsonl::read_all(he_in)) {
                const auto sheet = likert_sheet_from_json(j);
                out << sheet.sample_id << " " << sheet.evaluator_id << ": "
                    << human_eval::to_string(store.submit(sheet)) << "\n";
            }
            m.add_input(he_in);
            m.set_config(Json::object());
            m.add_output(layout.sheets());
            ctx.finish(m);
            return 0;
        }

        if (*hagg) {
            RunManifest m(Stage::human_eval, clock->utc_now());
            std::vector<LikertSheet> sheets;
            if (ha_in.empty()) {
                const service::StoreLayout layout{settings.store()};
                sheets = human_eval::SheetStore(*clock, layout.sheets()).sheets();
                if (fs::exists(layout.sheets())) m.add_input(layout.sheets());
            } else {
                for (const auto& j : jsonl::read_all(ha_in)) sheets.push_back(likert_sheet_from_json(j));
                m.add_input(ha_in);
            }
            const auto agg = human_eval::aggregate_sheets(sheets);
            write_or_print(ctx, he_out, human_eval::render_rubric_table(agg));
            if (!he_out.empty()) m.add_output(he_out);
            if (!he_json.empty()) {
                jsonl::write_text(he_json, human_eval::to_json(agg).dump(2) + "\n");
                m.add_output(he_json);
            }
            m.set_config(Json::object());
            ctx.finish(m);
            return 0;
        }

        if (*hlen) {
            RunManifest m(Stage::human_eval, clock->utc_now());
            const auto samples = load_samples(hl_in, {}, false);
            std::size_t flagged = 0;
            for (const auto& s : samples) {
                const auto c = human_eval::length_ratio(s, {hl_min, hl_max});
                if (c.flagged) ++flagged;
                std::ostringstream ratio;
                ratio.precision(3);
                ratio << std::fixed << c.ratio;
                out << s.sample_id << " " << ratio.str() << (c.flagged ? " flagged" : "") << "\n";
            }
            out << "flagged: " << flagged << "/" << samples.size() << "\n";
            m.add_input(hl_in);
            m.set_config(Json{{"min", hl_min}, {"max", hl_max}});
            ctx.finish(m);
            return 0;
        }

        if (*report) {
            RunManifest m(Stage::evaluate, clock->utc_now());
            const auto r = metric_report_from_json(parse_json(jsonl::read_text(rp_in)));
            write_or_print(ctx, rp_out, metrics::render_report_table(r));
            m.add_input(rp_in);
            if (!rp_out.empty()) m.add_output(rp_out);
            m.set_config(Json::object());
            ctx.finish(m);
            return 0;
        }
    } catch (const Error& e) {
        err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    err << app.help();
    return 2;
}

}  // namespace benign::cli
