#pragma once

// Shared domain values. Everything here is an immutable value type and may be
// copied across threads freely.

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "benign/error.hpp"
#include "benign/json.hpp"

namespace benign {

// ---------------------------------------------------------------------------
// Time

// UTC ISO-8601 timestamps ("2024-05-01T12:00:00Z"). Kept as strings so they
// compare lexicographically and serialize byte-stably.
class Clock {
public:
    virtual ~Clock() = default;
    virtual std::string utc_now() = 0;
};

class SystemClock final : public Clock {
public:
    std::string utc_now() override;
};

// Always returns the same instant. Used for reproducible pipeline runs.
class FixedClock final : public Clock {
public:
    explicit FixedClock(std::string instant) : instant_(std::move(instant)) {}
    std::string utc_now() override { return instant_; }

private:
    std::string instant_;
};

bool is_iso8601_utc(std::string_view ts);

// ---------------------------------------------------------------------------
// Demographic groups

class DemographicGroup {
public:
    enum class Kind : std::uint8_t {
        Women,
        MentalDisability,
        LGBTQ,
        Black,
        Chinese,
        Asian,
        NativeAmerican,
        MiddleEastern,
        Muslim,
        PhysicalDisability,
        Mexican,
        Jewish,
        Latino,
        Other,
    };

    static constexpr std::size_t kClosedSetSize = 13;

    explicit DemographicGroup(Kind kind) : kind_(kind) {}
    static DemographicGroup other(std::string label);

    // Resolves a free-form name. Closed-set names match case-insensitively
    // (plus a few dataset aliases such as "mental_dis"); anything else becomes
    // Other(label) unless strict, in which case Errc::unknown_demographic.
    static DemographicGroup parse(std::string_view name, bool strict = false);

    Kind kind() const noexcept { return kind_; }
    bool is_other() const noexcept { return kind_ == Kind::Other; }
    std::string name() const;

    DemographicGroup normalized() const { return parse(name()); }

    static const std::array<Kind, kClosedSetSize>& closed_set();

    friend bool operator==(const DemographicGroup&, const DemographicGroup&) = default;
    friend auto operator<=>(const DemographicGroup&, const DemographicGroup&) = default;

private:
    DemographicGroup(Kind kind, std::string label) : kind_(kind), label_(std::move(label)) {}

    Kind kind_;
    std::string label_;
};

// ---------------------------------------------------------------------------
// Records and candidates

struct SourceRecord {
    std::string id;
    std::string text;
    std::string source_tag;
    std::vector<DemographicGroup> groups;
    std::string created_at;

    friend bool operator==(const SourceRecord&, const SourceRecord&) = default;
};

Json to_json(const SourceRecord& r);
SourceRecord source_record_from_json(const Json& j);

// Turns untyped input into SourceRecords, tracking id uniqueness across calls.
class RecordValidator {
public:
    explicit RecordValidator(bool strict_groups = false, Clock* clock = nullptr)
        : strict_(strict_groups), clock_(clock) {}

    // Errors: empty_text, duplicate_id, unknown_demographic (strict only).
    // A missing id is replaced by content_id(text).
    SourceRecord validate(const Json& raw);

private:
    bool strict_;
    Clock* clock_;
    std::set<std::string> seen_;
};

struct BenignCandidate {
    std::string record_id;
    std::string candidate_text;
    std::string producer;
    std::string created_at;

    friend bool operator==(const BenignCandidate&, const BenignCandidate&) = default;
};

Json to_json(const BenignCandidate& c);
BenignCandidate benign_candidate_from_json(const Json& j);
void validate(const BenignCandidate& c);

// ---------------------------------------------------------------------------
// Gold labels

enum class Provenance { unanimous, majority, expert_tiebreak, escalated_manual };

std::string_view to_string(Provenance p) noexcept;
Provenance provenance_from_string(std::string_view s);

struct GoldPair {
    std::string record_id;
    std::string unsafe_text;
    // Empty while escalated and awaiting manual resolution.
    std::optional<std::string> benign_text;
    Provenance provenance = Provenance::unanimous;
    std::vector<std::string> vote_trail;
    std::optional<std::string> manual_note;

    bool finalized() const noexcept { return benign_text.has_value(); }

    friend bool operator==(const GoldPair&, const GoldPair&) = default;
};

Json to_json(const GoldPair& g);
GoldPair gold_pair_from_json(const Json& j);
void validate(const GoldPair& g);

// Finalizes an escalated pair by hand. The note is mandatory.
GoldPair resolve_manually(GoldPair gold, std::string benign_text, std::string note);

// ---------------------------------------------------------------------------
// Judge output and metric reports

enum class Dimension { bias, toxicity, knowledge_retention, faithfulness, relevancy };

inline constexpr std::array<Dimension, 5> kAllDimensions = {
    Dimension::bias, Dimension::toxicity, Dimension::knowledge_retention,
    Dimension::faithfulness, Dimension::relevancy};

std::string_view to_string(Dimension d) noexcept;
Dimension dimension_from_string(std::string_view s);
// True for bias and toxicity, where a lower ratio is the better outcome.
bool lower_is_better(Dimension d) noexcept;

struct JudgeVerdict {
    std::string unit_text;
    Dimension dimension = Dimension::bias;
    bool positive = false;
    std::string rationale;

    friend bool operator==(const JudgeVerdict&, const JudgeVerdict&) = default;
};

Json to_json(const JudgeVerdict& v);
JudgeVerdict judge_verdict_from_json(const Json& j);

// numerator/denominator with exact percent rounding.
class Ratio {
public:
    Ratio() = default;
    // Errc::zero_denominator when denominator is 0, invalid_argument when
    // numerator exceeds it.
    static Ratio make(std::uint64_t numerator, std::uint64_t denominator);

    std::uint64_t numerator() const noexcept { return num_; }
    std::uint64_t denominator() const noexcept { return den_; }
    double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    // Percentage in hundredths, rounded half-up: 19/60 -> 3167.
    std::uint64_t percent_hundredths() const noexcept;
    std::string percent_string() const;

    friend bool operator==(const Ratio&, const Ratio&) = default;

private:
    Ratio(std::uint64_t n, std::uint64_t d) : num_(n), den_(d) {}
    std::uint64_t num_ = 0;
    std::uint64_t den_ = 1;
};

// Formats a hundredths count as "31.67".
std::string format_hundredths(std::uint64_t hundredths);

struct MetricReport {
    std::map<Dimension, Ratio> ratios;
    std::string judge_model;
    std::string timestamp;
    std::uint64_t sample_count = 0;
    std::uint64_t failed_count = 0;

    const Ratio& at(Dimension d) const;

    friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

Json to_json(const MetricReport& r);
MetricReport metric_report_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Training configuration

struct HyperparameterProfile {
    int train_batch = 8;
    int eval_batch = 4;
    int grad_accum_steps = 1;
    double max_grad_norm = 0.3;
    double learning_rate = 2e-05;
    double weight_decay = 0.001;
    std::string optimizer = "paged_adamw_8bit";
    std::string lr_scheduler = "constant";
    double warmup_ratio = 0.05;
    int max_seq_len = 2048;
    int epochs = 2;
    int lora_rank = 64;
    int lora_alpha = 16;
    double lora_dropout = 0.2;

    // The experimental-setup prose quotes 16/8 batches; kept as an alternate.
    static HyperparameterProfile prose_preset();

    friend bool operator==(const HyperparameterProfile&, const HyperparameterProfile&) = default;
};

void validate(const HyperparameterProfile& p);

// ---------------------------------------------------------------------------
// Human evaluation sheets

enum class RubricDimension {
    ContentNeutrality,
    Inclusivity,
    RespectfulInteraction,
    ContentRetention,
    OutputLength,
};

inline constexpr std::array<RubricDimension, 5> kAllRubricDimensions = {
    RubricDimension::ContentNeutrality, RubricDimension::Inclusivity,
    RubricDimension::RespectfulInteraction, RubricDimension::ContentRetention,
    RubricDimension::OutputLength};

std::string_view to_string(RubricDimension d) noexcept;
RubricDimension rubric_dimension_from_string(std::string_view s);
// Inclusivity may be left out of a sheet; the other four are required.
bool rubric_required(RubricDimension d) noexcept;

struct LikertSheet {
    std::string sample_id;
    std::string evaluator_id;
    std::map<RubricDimension, int> scores;

    friend bool operator==(const LikertSheet&, const LikertSheet&) = default;
};

Json to_json(const LikertSheet& s);
// Rejects fractional or out-of-range scores with Errc::out_of_range_score.
LikertSheet likert_sheet_from_json(const Json& j);
void validate(const LikertSheet& s);

}  // namespace benign
