#include "benign/core.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <regex>

#include "benign/digest.hpp"
#include "benign/text.hpp"

namespace benign {

std::string_view to_string(Errc code) noexcept {
    switch (code) {
        case Errc::invalid_argument: return "invalid-argument";
        case Errc::empty_text: return "empty-text";
        case Errc::duplicate_id: return "duplicate-id";
        case Errc::unknown_demographic: return "unknown-demographic-name";
        case Errc::parse_error: return "parse-error";
        case Errc::transport_failure: return "transport-failure";
        case Errc::rate_limited: return "rate-limited";
        case Errc::malformed_response: return "malformed-response";
        case Errc::refusal: return "refusal";
        case Errc::config_error: return "config-error";
        case Errc::empty_input: return "empty-input";
        case Errc::empty_completion: return "empty-completion";
        case Errc::checkpoint_corrupt: return "checkpoint-corrupt";
        case Errc::insufficient_reviewers: return "insufficient-reviewers";
        case Errc::duplicate_reviewer: return "duplicate-reviewer";
        case Errc::cross_record_decisions: return "cross-record-decisions";
        case Errc::unknown_reviewer: return "unknown-reviewer";
        case Errc::invalid_correction: return "invalid-correction";
        case Errc::stale_version: return "stale-version";
        case Errc::not_finalized: return "not-finalized";
        case Errc::unfinalized_gold: return "unfinalized-gold";
        case Errc::delimiter_collision: return "delimiter-collision";
        case Errc::too_few_records: return "too-few-records";
        case Errc::judge_output_unparseable: return "judge-output-unparseable";
        case Errc::empty_extraction: return "empty-extraction";
        case Errc::zero_denominator: return "zero-denominator";
        case Errc::unreadable_file: return "unreadable-file";
        case Errc::empty_file: return "empty-file";
        case Errc::zero_original: return "zero-original";
        case Errc::mismatched_ids: return "mismatched-ids";
        case Errc::out_of_range_score: return "out-of-range-score";
        case Errc::missing_score: return "missing-score";
        case Errc::corrupt_log: return "corrupt-log";
        case Errc::not_found: return "not-found";
        case Errc::sealed_manifest: return "sealed-manifest";
        case Errc::io_error: return "io-error";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// Time

std::string SystemClock::utc_now() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

bool is_iso8601_utc(std::string_view ts) {
    static const std::regex kPattern(R"(^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?Z$)");
    return std::regex_match(ts.begin(), ts.end(), kPattern);
}

// ---------------------------------------------------------------------------
// Demographic groups

namespace {

struct GroupName {
    DemographicGroup::Kind kind;
    std::string_view canonical;
};

constexpr std::array<GroupName, DemographicGroup::kClosedSetSize> kGroupNames = {{
    {DemographicGroup::Kind::Women, "Women"},
    {DemographicGroup::Kind::MentalDisability, "Mental Disability"},
    {DemographicGroup::Kind::LGBTQ, "LGBTQ"},
    {DemographicGroup::Kind::Black, "Black"},
    {DemographicGroup::Kind::Chinese, "Chinese"},
    {DemographicGroup::Kind::Asian, "Asian"},
    {DemographicGroup::Kind::NativeAmerican, "Native American"},
    {DemographicGroup::Kind::MiddleEastern, "Middle Eastern"},
    {DemographicGroup::Kind::Muslim, "Muslim"},
    {DemographicGroup::Kind::PhysicalDisability, "Physical Disability"},
    {DemographicGroup::Kind::Mexican, "Mexican"},
    {DemographicGroup::Kind::Jewish, "Jewish"},
    {DemographicGroup::Kind::Latino, "Latino"},
}};

// Spellings seen in group-labelled prompt sets, already lowercased with
// '_' and '-' mapped to spaces.
constexpr std::array<std::pair<std::string_view, DemographicGroup::Kind>, 7> kAliases = {{
    {"mental dis", DemographicGroup::Kind::MentalDisability},
    {"physical dis", DemographicGroup::Kind::PhysicalDisability},
    {"middle east", DemographicGroup::Kind::MiddleEastern},
    {"lgbtq+", DemographicGroup::Kind::LGBTQ},
    {"lgbt", DemographicGroup::Kind::LGBTQ},
    {"native american", DemographicGroup::Kind::NativeAmerican},
    {"woman", DemographicGroup::Kind::Women},
}};

std::string fold(std::string_view name) {
    std::string s = text::to_lower(text::normalize_ws(name));
    std::replace(s.begin(), s.end(), '_', ' ');
    std::replace(s.begin(), s.end(), '-', ' ');
    return text::normalize_ws(s);
}

}  // namespace

DemographicGroup DemographicGroup::other(std::string label) {
    return DemographicGroup(Kind::Other, text::normalize_ws(label));
}

DemographicGroup DemographicGroup::parse(std::string_view name, bool strict) {
    const std::string folded = fold(name);
    for (const auto& g : kGroupNames) {
        if (folded == fold(g.canonical)) return DemographicGroup(g.kind);
    }
    for (const auto& [alias, kind] : kAliases) {
        if (folded == alias) return DemographicGroup(kind);
    }
    if (strict) throw Error(Errc::unknown_demographic, std::string(name));
    const std::string label = text::normalize_ws(name);
    if (label.empty()) throw Error(Errc::invalid_argument, "empty demographic name");
    return other(label);
}

std::string DemographicGroup::name() const {
    if (kind_ == Kind::Other) return label_;
    return std::string(kGroupNames[static_cast<std::size_t>(kind_)].canonical);
}

const std::array<DemographicGroup::Kind, DemographicGroup::kClosedSetSize>&
DemographicGroup::closed_set() {
    static const auto kinds = [] {
        std::array<Kind, kClosedSetSize> out{};
        for (std::size_t i = 0; i < kClosedSetSize; ++i) out[i] = kGroupNames[i].kind;
        return out;
    }();
    return kinds;
}

// ---------------------------------------------------------------------------
// SourceRecord

Json to_json(const SourceRecord& r) {
    Json groups = Json::array();
    for (const auto& g : r.groups) groups.push_back(g.name());
    return Json{{"id", r.id},
                {"text", r.text},
                {"source_tag", r.source_tag},
                {"groups", groups},
                {"created_at", r.created_at}};
}

SourceRecord source_record_from_json(const Json& j) {
    SourceRecord r;
    r.id = require_string(j, "id");
    r.text = require_string(j, "text");
    r.source_tag = optional_string(j, "source_tag");
    r.created_at = optional_string(j, "created_at");
    if (auto it = j.find("groups"); it != j.end() && !it->is_null()) {
        if (!it->is_array()) throw Error(Errc::parse_error, "groups must be an array");
        for (const auto& g : *it) r.groups.push_back(DemographicGroup::parse(g.get<std::string>()));
    }
    return r;
}

SourceRecord RecordValidator::validate(const Json& raw) {
    if (!raw.is_object()) throw Error(Errc::parse_error, "record must be an object");
    SourceRecord r;
    r.text = optional_string(raw, "text");
    if (r.text.empty() || text::is_blank(r.text)) throw Error(Errc::empty_text, "record text is empty");
    r.id = optional_string(raw, "id");
    if (r.id.empty()) r.id = content_id(r.text);
    if (seen_.contains(r.id)) throw Error(Errc::duplicate_id, r.id);
    r.source_tag = optional_string(raw, "source_tag");
    r.created_at = optional_string(raw, "created_at");
    if (r.created_at.empty() && clock_ != nullptr) r.created_at = clock_->utc_now();
    if (!r.created_at.empty() && !is_iso8601_utc(r.created_at)) {
        throw Error(Errc::parse_error, "created_at is not UTC ISO-8601: " + r.created_at);
    }

    std::vector<std::string> names;
    if (auto it = raw.find("groups"); it != raw.end() && !it->is_null()) {
        if (!it->is_array()) throw Error(Errc::parse_error, "groups must be an array");
        for (const auto& g : *it) names.push_back(g.get<std::string>());
    } else if (auto single = raw.find("group"); single != raw.end() && single->is_string()) {
        names.push_back(single->get<std::string>());
    }
    for (const auto& n : names) {
        auto g = DemographicGroup::parse(n, strict_);
        if (std::find(r.groups.begin(), r.groups.end(), g) == r.groups.end()) r.groups.push_back(g);
    }

    seen_.insert(r.id);
    return r;
}

// ---------------------------------------------------------------------------
// BenignCandidate

Json to_json(const BenignCandidate& c) {
    return Json{{"record_id", c.record_id},
                {"candidate_text", c.candidate_text},
                {"producer", c.producer},
                {"created_at", c.created_at}};
}

BenignCandidate benign_candidate_from_json(const Json& j) {
    BenignCandidate c{require_string(j, "record_id"), require_string(j, "candidate_text"),
                      optional_string(j, "producer"), optional_string(j, "created_at")};
    validate(c);
    return c;
}

void validate(const BenignCandidate& c) {
    if (c.record_id.empty()) throw Error(Errc::invalid_argument, "candidate without record id");
    if (text::is_blank(c.candidate_text)) throw Error(Errc::empty_text, "candidate text is blank");
}

// ---------------------------------------------------------------------------
// GoldPair

std::string_view to_string(Provenance p) noexcept {
    switch (p) {
        case Provenance::unanimous: return "unanimous";
        case Provenance::majority: return "majority";
        case Provenance::expert_tiebreak: return "expert-tiebreak";
        case Provenance::escalated_manual: return "escalated-manual";
    }
    return "unanimous";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "unanimous") return Provenance::unanimous;
    if (s == "majority") return Provenance::majority;
    if (s == "expert-tiebreak") return Provenance::expert_tiebreak;
    if (s == "escalated-manual") return Provenance::escalated_manual;
    throw Error(Errc::parse_error, "unknown provenance: " + std::string(s));
}

Json to_json(const GoldPair& g) {
    Json j{{"record_id", g.record_id},
           {"unsafe_text", g.unsafe_text},
           {"benign_text", g.benign_text ? Json(*g.benign_text) : Json(nullptr)},
           {"provenance", to_string(g.provenance)},
           {"vote_trail", g.vote_trail}};
    if (g.manual_note) j["manual_note"] = *g.manual_note;
    return j;
}

GoldPair gold_pair_from_json(const Json& j) {
    GoldPair g;
    g.record_id = require_string(j, "record_id");
    g.unsafe_text = require_string(j, "unsafe_text");
    if (auto it = j.find("benign_text"); it != j.end() && !it->is_null()) {
        g.benign_text = it->get<std::string>();
    }
    g.provenance = provenance_from_string(require_string(j, "provenance"));
    if (auto it = j.find("vote_trail"); it != j.end()) {
        g.vote_trail = it->get<std::vector<std::string>>();
    }
    if (auto it = j.find("manual_note"); it != j.end() && !it->is_null()) {
        g.manual_note = it->get<std::string>();
    }
    validate(g);
    return g;
}

void validate(const GoldPair& g) {
    if (g.benign_text && text::is_blank(*g.benign_text)) {
        throw Error(Errc::empty_text, "gold benign text is blank for " + g.record_id);
    }
    if (!g.benign_text && g.provenance != Provenance::escalated_manual) {
        throw Error(Errc::invalid_argument, "only escalated pairs may lack gold text: " + g.record_id);
    }
    if (g.provenance == Provenance::escalated_manual && g.benign_text &&
        (!g.manual_note || text::is_blank(*g.manual_note))) {
        throw Error(Errc::invalid_argument, "manual resolution requires a note: " + g.record_id);
    }
}

GoldPair resolve_manually(GoldPair gold, std::string benign_text, std::string note) {
    if (gold.provenance != Provenance::escalated_manual) {
        throw Error(Errc::invalid_argument, "only escalated pairs are resolved manually");
    }
    if (text::is_blank(note)) throw Error(Errc::invalid_argument, "manual resolution note is empty");
    if (text::is_blank(benign_text)) throw Error(Errc::empty_text, "manual gold text is blank");
    gold.benign_text = std::move(benign_text);
    gold.manual_note = std::move(note);
    return gold;
}

// ---------------------------------------------------------------------------
// Verdicts and reports

std::string_view to_string(Dimension d) noexcept {
    switch (d) {
        case Dimension::bias: return "bias";
        case Dimension::toxicity: return "toxicity";
        case Dimension::knowledge_retention: return "knowledge-retention";
        case Dimension::faithfulness: return "faithfulness";
        case Dimension::relevancy: return "relevancy";
    }
    return "bias";
}

Dimension dimension_from_string(std::string_view s) {
    for (Dimension d : kAllDimensions) {
        if (to_string(d) == s) return d;
    }
    throw Error(Errc::parse_error, "unknown metric dimension: " + std::string(s));
}

bool lower_is_better(Dimension d) noexcept {
    return d == Dimension::bias || d == Dimension::toxicity;
}

Json to_json(const JudgeVerdict& v) {
    return Json{{"unit", v.unit_text},
                {"dimension", to_string(v.dimension)},
                {"positive", v.positive},
                {"rationale", v.rationale}};
}

JudgeVerdict judge_verdict_from_json(const Json& j) {
    JudgeVerdict v;
    v.unit_text = require_string(j, "unit");
    v.dimension = dimension_from_string(require_string(j, "dimension"));
    const Json& p = require(j, "positive");
    if (!p.is_boolean()) throw Error(Errc::parse_error, "positive must be boolean");
    v.positive = p.get<bool>();
    v.rationale = optional_string(j, "rationale");
    return v;
}

Ratio Ratio::make(std::uint64_t numerator, std::uint64_t denominator) {
    if (denominator == 0) throw Error(Errc::zero_denominator, "ratio with zero denominator");
    if (numerator > denominator) throw Error(Errc::invalid_argument, "numerator exceeds denominator");
    return Ratio(numerator, denominator);
}

std::uint64_t Ratio::percent_hundredths() const noexcept {
    // round_half_up(num * 10000 / den) in integers
    return (num_ * 20000 + den_) / (2 * den_);
}

std::string Ratio::percent_string() const { return format_hundredths(percent_hundredths()) + "%"; }

std::string format_hundredths(std::uint64_t hundredths) {
    std::string frac = std::to_string(hundredths % 100);
    if (frac.size() < 2) frac.insert(frac.begin(), '0');
    return std::to_string(hundredths / 100) + "." + frac;
}

const Ratio& MetricReport::at(Dimension d) const {
    auto it = ratios.find(d);
    if (it == ratios.end()) throw Error(Errc::not_found, "report lacks " + std::string(to_string(d)));
    return it->second;
}

Json to_json(const MetricReport& r) {
    Json dims = Json::object();
    for (Dimension d : kAllDimensions) {
        auto it = r.ratios.find(d);
        if (it == r.ratios.end()) continue;
        dims[std::string(to_string(d))] = Json{{"numerator", it->second.numerator()},
                                               {"denominator", it->second.denominator()},
                                               {"percent", format_hundredths(it->second.percent_hundredths())}};
    }
    return Json{{"judge_model", r.judge_model},
                {"timestamp", r.timestamp},
                {"sample_count", r.sample_count},
                {"failed_count", r.failed_count},
                {"dimensions", dims}};
}

MetricReport metric_report_from_json(const Json& j) {
    MetricReport r;
    r.judge_model = optional_string(j, "judge_model");
    r.timestamp = optional_string(j, "timestamp");
    r.sample_count = require(j, "sample_count").get<std::uint64_t>();
    r.failed_count = require(j, "failed_count").get<std::uint64_t>();
    for (const auto& [key, value] : require(j, "dimensions").items()) {
        r.ratios[dimension_from_string(key)] =
            Ratio::make(require(value, "numerator").get<std::uint64_t>(),
                        require(value, "denominator").get<std::uint64_t>());
    }
    return r;
}

// ---------------------------------------------------------------------------
// HyperparameterProfile

HyperparameterProfile HyperparameterProfile::prose_preset() {
    HyperparameterProfile p;
    p.train_batch = 16;
    p.eval_batch = 8;
    return p;
}

void validate(const HyperparameterProfile& p) {
    auto positive = [](int v, const char* name) {
        if (v <= 0) throw Error(Errc::invalid_argument, std::string(name) + " must be a positive integer");
    };
    auto unit_interval = [](double v, const char* name) {
        if (!(v > 0.0 && v <= 1.0)) throw Error(Errc::invalid_argument, std::string(name) + " must be in (0,1]");
    };
    positive(p.train_batch, "train_batch");
    positive(p.eval_batch, "eval_batch");
    positive(p.grad_accum_steps, "grad_accum_steps");
    positive(p.max_seq_len, "max_seq_len");
    positive(p.epochs, "epochs");
    positive(p.lora_rank, "lora_rank");
    positive(p.lora_alpha, "lora_alpha");
    unit_interval(p.max_grad_norm, "max_grad_norm");
    unit_interval(p.learning_rate, "learning_rate");
    unit_interval(p.weight_decay, "weight_decay");
    unit_interval(p.warmup_ratio, "warmup_ratio");
    if (!(p.lora_dropout >= 0.0 && p.lora_dropout < 1.0)) {
        throw Error(Errc::invalid_argument, "lora_dropout must be in [0,1)");
    }
    if (p.optimizer.empty() || p.lr_scheduler.empty()) {
        throw Error(Errc::invalid_argument, "optimizer and lr_scheduler are required");
    }
}

// ---------------------------------------------------------------------------
// LikertSheet

std::string_view to_string(RubricDimension d) noexcept {
    switch (d) {
        case RubricDimension::ContentNeutrality: return "ContentNeutrality";
        case RubricDimension::Inclusivity: return "Inclusivity";
        case RubricDimension::RespectfulInteraction: return "RespectfulInteraction";
        case RubricDimension::ContentRetention: return "ContentRetention";
        case RubricDimension::OutputLength: return "OutputLength";
    }
    return "ContentNeutrality";
}

RubricDimension rubric_dimension_from_string(std::string_view s) {
    for (auto d : kAllRubricDimensions) {
        if (to_string(d) == s) return d;
    }
    throw Error(Errc::parse_error, "unknown rubric dimension: " + std::string(s));
}

bool rubric_required(RubricDimension d) noexcept { return d != RubricDimension::Inclusivity; }

Json to_json(const LikertSheet& s) {
    Json scores = Json::object();
    for (auto d : kAllRubricDimensions) {
        if (auto it = s.scores.find(d); it != s.scores.end()) scores[std::string(to_string(d))] = it->second;
    }
    return Json{{"sample_id", s.sample_id}, {"evaluator_id", s.evaluator_id}, {"scores", scores}};
}

LikertSheet likert_sheet_from_json(const Json& j) {
    LikertSheet s;
    s.sample_id = require_string(j, "sample_id");
    s.evaluator_id = require_string(j, "evaluator_id");
    const Json& scores = require(j, "scores");
    if (!scores.is_object()) throw Error(Errc::parse_error, "scores must be an object");
    for (const auto& [key, value] : scores.items()) {
        const auto dim = rubric_dimension_from_string(key);
        if (!value.is_number_integer()) {
            throw Error(Errc::out_of_range_score, key + " is not an integer score");
        }
        const auto v = value.get<std::int64_t>();
        if (v < 1 || v > 5) throw Error(Errc::out_of_range_score, key + " = " + std::to_string(v));
        s.scores[dim] = static_cast<int>(v);
    }
    validate(s);
    return s;
}

void validate(const LikertSheet& s) {
    if (s.sample_id.empty() || s.evaluator_id.empty()) {
        throw Error(Errc::invalid_argument, "sheet needs sample_id and evaluator_id");
    }
    for (const auto& [dim, v] : s.scores) {
        if (v < 1 || v > 5) {
            throw Error(Errc::out_of_range_score, std::string(to_string(dim)) + " = " + std::to_string(v));
        }
    }
    for (auto d : kAllRubricDimensions) {
        if (rubric_required(d) && !s.scores.contains(d)) {
            throw Error(Errc::missing_score, std::string(to_string(d)));
        }
    }
}

}  // namespace benign
