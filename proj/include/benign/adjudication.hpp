#pragma once

// Human review of annotator candidates and gold-label finalization.

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "benign/core.hpp"

namespace benign::adjudication {

enum class ReviewerRole { expert, student };

std::string_view to_string(ReviewerRole r) noexcept;

struct ReviewerProfile {
    std::string id;
    ReviewerRole role = ReviewerRole::student;
    std::string display_name;

    friend bool operator==(const ReviewerProfile&, const ReviewerProfile&) = default;
};

Json to_json(const ReviewerProfile& r);
ReviewerProfile reviewer_profile_from_json(const Json& j);

struct Verdict {
    // Empty means Approve.
    std::optional<std::string> corrected_text;

    static Verdict approve() { return {}; }
    static Verdict correct(std::string text) { return Verdict{std::move(text)}; }
    bool is_approve() const noexcept { return !corrected_text.has_value(); }

    friend bool operator==(const Verdict&, const Verdict&) = default;
};

struct ReviewDecision {
    std::string reviewer_id;
    std::string record_id;
    Verdict verdict;
    std::string submitted_at;

    // Unique per (record, reviewer).
    std::string id() const { return record_id + "/" + reviewer_id; }

    friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

Json to_json(const ReviewDecision& d);
ReviewDecision review_decision_from_json(const Json& j);

// A correction must be non-blank and differ from the candidate once
// whitespace is normalized (Errc::invalid_correction).
void validate_decision(const ReviewDecision& d, const BenignCandidate& candidate);

struct Assignment {
    std::string record_id;
    std::vector<std::string> reviewer_ids;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

Json to_json(const Assignment& a);
Assignment assignment_from_json(const Json& j);

inline constexpr int kDefaultReviewersPerRecord = 3;

// Each record gets k distinct reviewers; per-reviewer load differs by at most
// one. Deterministic for a given seed. Errc::insufficient_reviewers when k
// exceeds the pool.
std::vector<Assignment> assign_reviews(const std::vector<std::string>& record_ids,
                                       const std::vector<ReviewerProfile>& reviewers, int k, std::uint64_t seed);

// Finalizes a gold label:
//  (a) strict majority approve -> candidate text (unanimous or majority);
//  (b) strict majority of corrections with the same normalized text -> that text;
//  (c) otherwise, when every expert in the set has the same effective text,
//      that text wins (expert-tiebreak); with no expert or disagreeing experts
//      the pair is escalated for manual resolution without gold text.
// Errors: invalid_argument (no decisions), duplicate_reviewer,
// cross_record_decisions, unknown_reviewer.
GoldPair majority_vote(const BenignCandidate& candidate, const std::string& unsafe_text,
                       const std::vector<ReviewDecision>& decisions, const std::vector<ReviewerProfile>& reviewers);

struct AgreementStats {
    double overall_percent = 0.0;
    std::uint64_t agreeing_pairs = 0;
    std::uint64_t total_pairs = 0;
    // Keyed by (lower id, higher id): {agreeing, compared}.
    std::map<std::pair<std::string, std::string>, std::pair<std::uint64_t, std::uint64_t>> per_pair;

    double pair_percent(const std::string& a, const std::string& b) const;
};

// Two decisions agree when both approve, or both correct to the same
// whitespace-normalized (case-sensitive) text. Records with fewer than two
// decisions are skipped.
AgreementStats agreement_stats(const std::map<std::string, std::vector<ReviewDecision>>& by_record);

// Concurrent decision intake. Each record has a version that advances on
// every accepted decision; a submission carrying an older version is rejected
// with Errc::stale_version.
class DecisionBook {
public:
    struct Submitted {
        std::uint64_t version;
        std::size_t decisions_for_record;
    };

    void load(std::vector<ReviewDecision> decisions);

    // Errors: duplicate_reviewer, stale_version.
    Submitted submit(const ReviewDecision& decision, std::optional<std::uint64_t> expected_version);

    std::uint64_t version(const std::string& record_id) const;
    std::vector<ReviewDecision> for_record(const std::string& record_id) const;
    std::map<std::string, std::vector<ReviewDecision>> snapshot() const;
    bool has_decided(const std::string& record_id, const std::string& reviewer_id) const;

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<ReviewDecision>> by_record_;
};

}  // namespace benign::adjudication
