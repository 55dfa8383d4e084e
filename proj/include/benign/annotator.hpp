#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "benign/core.hpp"
#include "benign/gateway.hpp"

namespace benign::annotator {

struct DemoPair {
    std::string example_text;
    std::string response_text;
};

// "Example k / Response k" or "Original Statement / Revised Statement".
enum class PromptFraming { example_response, original_revised };

struct DemoSet {
    PromptFraming framing = PromptFraming::example_response;
    std::vector<DemoPair> demos;
};

// The two worked leadership pairs (gender, age); the target text takes the
// following example slot.
DemoSet default_demos();
// Technology/age and wealth/work-ethic pairs with Original/Revised framing.
DemoSet appendix_demos();
// No demonstrations; the instruction paragraph plus the target only.
DemoSet zero_shot(PromptFraming framing = PromptFraming::example_response);

std::string instruction_paragraph(PromptFraming framing);

// Errc::empty_input for a blank text, invalid_argument for an empty demo field.
gateway::ChatRequest build_annotation_prompt(const std::string& unsafe_text, const DemoSet& demos,
                                             const std::string& model_id);

// Removes surrounding whitespace and at most one matched pair of straight or
// curly quotes.
std::string strip_completion(std::string_view completion);

BenignCandidate generate_benign(const SourceRecord& record, gateway::ChatClient& client, const DemoSet& demos,
                                const std::string& model_id, Clock& clock);

enum class FlagReason { no_change, refusal, length_ratio };

std::string_view to_string(FlagReason r) noexcept;

struct CandidateCheck {
    std::optional<FlagReason> flag;
    bool passed() const noexcept { return !flag.has_value(); }
};

struct CandidateGuard {
    double min_length_ratio = 0.3;
    double max_length_ratio = 3.0;
    std::vector<std::string> refusal_patterns;
};

// Case-insensitive refusal boilerplate substrings.
std::vector<std::string> default_refusal_patterns();
std::vector<std::string> load_refusal_patterns(const std::filesystem::path& path);
CandidateGuard default_guard();

CandidateCheck validate_candidate(const BenignCandidate& candidate, const SourceRecord& record,
                                  const CandidateGuard& guard = default_guard());

struct FlaggedRecord {
    std::string record_id;
    std::string reason;
    std::string detail;

    friend bool operator==(const FlaggedRecord&, const FlaggedRecord&) = default;
};

Json to_json(const FlaggedRecord& f);
FlaggedRecord flagged_record_from_json(const Json& j);

struct AnnotateOptions {
    DemoSet demos = default_demos();
    std::string model_id = "annotator";
    int parallelism = 1;
    std::filesystem::path checkpoint_path;
    CandidateGuard guard = default_guard();
    // Stop after this many newly processed records (simulates an interrupted run).
    std::optional<std::size_t> limit;
};

struct AnnotationResult {
    // Both in input record order.
    std::vector<BenignCandidate> candidates;
    std::vector<FlaggedRecord> flagged;
    std::size_t resumed = 0;         // records taken from the checkpoint
    std::size_t requested = 0;       // records sent to the backend this run
    std::size_t torn_lines_dropped = 0;
    bool complete = false;
};

// Every record ends with exactly one candidate or one flag. Completed ids in
// the checkpoint are skipped; new outcomes are appended through one writer.
// Errors: checkpoint_corrupt, config_error.
AnnotationResult annotate_corpus(const std::vector<SourceRecord>& records, gateway::ChatClient& client,
                                 const AnnotateOptions& options, Clock& clock);

}  // namespace benign::annotator
