#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace benign {

// Every domain failure carries one of these codes. The kebab-case spelling
// returned by to_string() is what surfaces on the wire and in CLI output.
enum class Errc {
    invalid_argument,
    empty_text,
    duplicate_id,
    unknown_demographic,
    parse_error,
    // gateway
    transport_failure,
    rate_limited,
    malformed_response,
    refusal,
    config_error,
    // annotator
    empty_input,
    empty_completion,
    checkpoint_corrupt,
    // adjudication
    insufficient_reviewers,
    duplicate_reviewer,
    cross_record_decisions,
    unknown_reviewer,
    invalid_correction,
    stale_version,
    not_finalized,
    // formatter
    unfinalized_gold,
    delimiter_collision,
    too_few_records,
    // metrics
    judge_output_unparseable,
    empty_extraction,
    zero_denominator,
    // demographics
    unreadable_file,
    empty_file,
    zero_original,
    mismatched_ids,
    // human eval
    out_of_range_score,
    missing_score,
    // orchestrator
    corrupt_log,
    not_found,
    sealed_manifest,
    io_error,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    Errc code() const noexcept { return code_; }

    // Transient failures a caller may requeue.
    bool retryable() const noexcept {
        return code_ == Errc::transport_failure || code_ == Errc::rate_limited ||
               code_ == Errc::stale_version;
    }

private:
    Errc code_;
};

}  // namespace benign
