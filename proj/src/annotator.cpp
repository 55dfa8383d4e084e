#include "benign/annotator.hpp"

#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <thread>

#include "benign/jsonl.hpp"
#include "benign/text.hpp"

namespace benign::annotator {

namespace {

constexpr std::string_view kInstructionExamples =
    "Please rewrite the following text to create a benign variation that eliminates all forms of bias, "
    "toxicity, stereotyping, and harm, such as gender, age, race, political, and socio-economic biases. "
    "Ensure the revised text promotes inclusivity and neutrality without sacrificing the original message "
    "essence.";

constexpr std::string_view kInstructionRevised =
    "Please rewrite the following text to create a benign variation that eliminates all forms of bias, "
    "toxicity, stereotyping, and harm. Ensure the revised text promotes neutrality without sacrificing the "
    "original message's essence.";

std::string wrap_quotes(std::string_view s) { return "\"" + std::string(s) + "\""; }

}  // namespace

DemoSet default_demos() {
    return DemoSet{PromptFraming::example_response,
                   {{"Men are naturally better leaders than women",
                     "Leadership skills are not determined by gender. Anyone can be a great leader."},
                    {"Young people are too inexperienced to lead effectively",
                     "Leadership effectiveness is not limited by age. People of any age can lead well."}}};
}

DemoSet appendix_demos() {
    return DemoSet{PromptFraming::original_revised,
                   {{"Only young people understand technology.",
                     "Proficiency with technology is not age-specific. It depends on individual interest and "
                     "experience."},
                    {"Wealthy individuals have a better work ethic.",
                     "Work ethic is a personal trait that varies among individuals, irrespective of their "
                     "economic status."}}};
}

DemoSet zero_shot(PromptFraming framing) { return DemoSet{framing, {}}; }

std::string instruction_paragraph(PromptFraming framing) {
    return std::string(framing == PromptFraming::example_response ? kInstructionExamples : kInstructionRevised);
}

gateway::ChatRequest build_annotation_prompt(const std::string& unsafe_text, const DemoSet& demos,
                                             const std::string& model_id) {
    if (text::is_blank(unsafe_text)) throw Error(Errc::empty_input, "nothing to rewrite");
    for (const auto& d : demos.demos) {
        if (text::is_blank(d.example_text) || text::is_blank(d.response_text)) {
            throw Error(Errc::invalid_argument, "demonstration pair has an empty side");
        }
    }

    std::string prompt = instruction_paragraph(demos.framing);
    if (demos.framing == PromptFraming::example_response) {
        std::size_t k = 1;
        for (const auto& d : demos.demos) {
            prompt += "\n\nExample " + std::to_string(k) + ": " + wrap_quotes(d.example_text);
            prompt += "\nResponse " + std::to_string(k) + ": " + d.response_text;
            ++k;
        }
        prompt += "\n\nExample " + std::to_string(k) + ": " + wrap_quotes(unsafe_text);
        prompt += "\nResponse " + std::to_string(k) + ": Your Turn";
    } else {
        if (!demos.demos.empty()) prompt += "\n";
        for (const auto& d : demos.demos) {
            prompt += "\nOriginal Statement: " + wrap_quotes(d.example_text);
            prompt += "\nRevised Statement: " + d.response_text;
        }
        prompt += demos.demos.empty() ? "\n\nRevise the following sentence:\n"
                                      : "\n\nNow, based on this revise the following sentence:\n";
        prompt += wrap_quotes(unsafe_text);
    }

    gateway::ChatRequest request;
    request.model_id = model_id;
    request.messages.push_back({gateway::Role::user, std::move(prompt)});
    return request;
}

std::string strip_completion(std::string_view completion) {
    std::string s = text::trim(completion);
    static constexpr std::pair<std::string_view, std::string_view> kPairs[] = {
        {"\"", "\""}, {"'", "'"}, {"“", "”"}, {"‘", "’"}};
    for (const auto& [open, close] : kPairs) {
        if (s.size() >= open.size() + close.size() && s.starts_with(open) && s.ends_with(close)) {
            s = s.substr(open.size(), s.size() - open.size() - close.size());
            return text::trim(s);
        }
    }
    return s;
}

BenignCandidate generate_benign(const SourceRecord& record, gateway::ChatClient& client, const DemoSet& demos,
                                const std::string& model_id, Clock& clock) {
    const auto request = build_annotation_prompt(record.text, demos, model_id);
    const auto completion = client.complete(request);
    std::string candidate = strip_completion(completion.text);
    if (candidate.empty()) throw Error(Errc::empty_completion, "annotator returned nothing for " + record.id);
    return BenignCandidate{record.id, std::move(candidate), model_id, clock.utc_now()};
}

std::string_view to_string(FlagReason r) noexcept {
    switch (r) {
        case FlagReason::no_change: return "no-change";
        case FlagReason::refusal: return "refusal";
        case FlagReason::length_ratio: return "length-ratio";
    }
    return "no-change";
}

std::vector<std::string> default_refusal_patterns() {
    return {"i'm sorry",
            "i am sorry",
            "i can't help",
            "i cannot help",
            "i can't assist",
            "i cannot assist",
            "i won't be able to",
            "i'm unable to",
            "i am unable to",
            "as an ai",
            "i cannot comply",
            "i can't comply",
            "i must decline"};
}

std::vector<std::string> load_refusal_patterns(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::unreadable_file, path.string());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        line = text::trim(line);
        if (line.empty() || line.starts_with('#')) continue;
        out.push_back(text::to_lower(line));
    }
    return out;
}

CandidateGuard default_guard() {
    CandidateGuard g;
    g.refusal_patterns = default_refusal_patterns();
    return g;
}

CandidateCheck validate_candidate(const BenignCandidate& candidate, const SourceRecord& record,
                                  const CandidateGuard& guard) {
    if (text::normalize_ws(candidate.candidate_text) == text::normalize_ws(record.text)) {
        return {FlagReason::no_change};
    }
    for (const auto& pattern : guard.refusal_patterns) {
        if (text::contains_ci(candidate.candidate_text, pattern)) return {FlagReason::refusal};
    }
    const double original = static_cast<double>(text::char_count(record.text));
    const double ratio = static_cast<double>(text::char_count(candidate.candidate_text)) / original;
    if (ratio < guard.min_length_ratio || ratio > guard.max_length_ratio) return {FlagReason::length_ratio};
    return {};
}

Json to_json(const FlaggedRecord& f) {
    return Json{{"record_id", f.record_id}, {"reason", f.reason}, {"detail", f.detail}};
}

FlaggedRecord flagged_record_from_json(const Json& j) {
    return FlaggedRecord{require_string(j, "record_id"), require_string(j, "reason"), optional_string(j, "detail")};
}

namespace {

struct Outcome {
    std::optional<BenignCandidate> candidate;
    std::optional<FlaggedRecord> flag;
    bool persist = true;
};

Json checkpoint_entry(const Outcome& o) {
    if (o.candidate) return Json{{"status", "candidate"}, {"candidate", to_json(*o.candidate)}};
    return Json{{"status", "flagged"}, {"flag", to_json(*o.flag)}};
}

std::map<std::string, Outcome> load_checkpoint(const std::filesystem::path& path, std::size_t& torn) {
    std::map<std::string, Outcome> done;
    if (path.empty()) return done;
    jsonl::LogContents log;
    try {
        log = jsonl::read_log(path, /*repair=*/true);
    } catch (const Error& e) {
        if (e.code() == Errc::corrupt_log) throw Error(Errc::checkpoint_corrupt, e.what());
        throw;
    }
    torn = log.torn_tail ? 1 : 0;
    for (const auto& entry : log.entries) {
        try {
            Outcome o;
            const std::string status = require_string(entry, "status");
            if (status == "candidate") {
                o.candidate = benign_candidate_from_json(require(entry, "candidate"));
                done[o.candidate->record_id] = std::move(o);
            } else if (status == "flagged") {
                o.flag = flagged_record_from_json(require(entry, "flag"));
                done[o.flag->record_id] = std::move(o);
            } else {
                throw Error(Errc::parse_error, "unknown status " + status);
            }
        } catch (const Error& e) {
            throw Error(Errc::checkpoint_corrupt, e.what());
        }
    }
    return done;
}

}  // namespace

AnnotationResult annotate_corpus(const std::vector<SourceRecord>& records, gateway::ChatClient& client,
                                 const AnnotateOptions& options, Clock& clock) {
    if (options.parallelism < 1) throw Error(Errc::config_error, "parallelism must be >= 1");
    AnnotationResult result;
    auto done = load_checkpoint(options.checkpoint_path, result.torn_lines_dropped);

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (done.contains(records[i].id)) {
            ++result.resumed;
        } else {
            pending.push_back(i);
        }
    }
    if (options.limit && pending.size() > *options.limit) pending.resize(*options.limit);
    result.requested = pending.size();

    std::unique_ptr<jsonl::Appender> writer;
    if (!options.checkpoint_path.empty()) writer = std::make_unique<jsonl::Appender>(options.checkpoint_path);

    std::vector<Outcome> fresh(pending.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::exception_ptr fatal;
    std::mutex fatal_mu;

    auto process = [&](std::size_t slot) {
        const SourceRecord& record = records[pending[slot]];
        Outcome o;
        try {
            auto candidate = generate_benign(record, client, options.demos, options.model_id, clock);
            auto check = validate_candidate(candidate, record, options.guard);
            if (check.passed()) {
                o.candidate = std::move(candidate);
            } else {
                o.flag = FlaggedRecord{record.id, std::string(to_string(*check.flag)), candidate.candidate_text};
            }
        } catch (const Error& e) {
            if (e.code() == Errc::config_error) throw;
            o.flag = FlaggedRecord{record.id, std::string(benign::to_string(e.code())), e.what()};
            // Transient failures are retried on the next run rather than pinned.
            o.persist = !e.retryable();
        }
        if (writer && o.persist) writer->append(checkpoint_entry(o));
        fresh[slot] = std::move(o);
    };

    auto worker = [&] {
        for (std::size_t s = next.fetch_add(1); s < pending.size() && !abort.load(); s = next.fetch_add(1)) {
            try {
                process(s);
            } catch (...) {
                std::lock_guard lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                abort.store(true);
            }
        }
    };
    {
        const auto threads = std::min<std::size_t>(static_cast<std::size_t>(options.parallelism), pending.size());
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
        worker();
    }
    if (fatal) std::rethrow_exception(fatal);

    for (std::size_t s = 0; s < pending.size(); ++s) done[records[pending[s]].id] = std::move(fresh[s]);

    result.complete = true;
    for (const auto& record : records) {
        auto it = done.find(record.id);
        if (it == done.end()) {
            result.complete = false;
            continue;
        }
        if (it->second.candidate) {
            result.candidates.push_back(*it->second.candidate);
        } else {
            result.flagged.push_back(*it->second.flag);
        }
    }
    return result;
}

}  // namespace benign::annotator
