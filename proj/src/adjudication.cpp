#include "benign/adjudication.hpp"

#include <algorithm>
#include <set>

#include "benign/shuffle.hpp"
#include "benign/text.hpp"

namespace benign::adjudication {

std::string_view to_string(ReviewerRole r) noexcept { return r == ReviewerRole::expert ? "expert" : "student"; }

Json to_json(const ReviewerProfile& r) {
    return Json{{"id", r.id}, {"role", to_string(r.role)}, {"display_name", r.display_name}};
}

ReviewerProfile reviewer_profile_from_json(const Json& j) {
    ReviewerProfile r;
    r.id = require_string(j, "id");
    const std::string role = require_string(j, "role");
    if (role == "expert") {
        r.role = ReviewerRole::expert;
    } else if (role == "student") {
        r.role = ReviewerRole::student;
    } else {
        throw Error(Errc::parse_error, "unknown reviewer role: " + role);
    }
    r.display_name = optional_string(j, "display_name", r.id);
    return r;
}

Json to_json(const ReviewDecision& d) {
    Json j{{"reviewer_id", d.reviewer_id},
           {"record_id", d.record_id},
           {"verdict", d.verdict.is_approve() ? "approve" : "correct"}};
    if (d.verdict.corrected_text) j["corrected_text"] = *d.verdict.corrected_text;
    j["submitted_at"] = d.submitted_at;
    return j;
}

ReviewDecision review_decision_from_json(const Json& j) {
    ReviewDecision d;
    d.reviewer_id = require_string(j, "reviewer_id");
    d.record_id = require_string(j, "record_id");
    const std::string verdict = require_string(j, "verdict");
    if (verdict == "correct") {
        d.verdict = Verdict::correct(require_string(j, "corrected_text"));
    } else if (verdict != "approve") {
        throw Error(Errc::parse_error, "verdict must be approve or correct");
    }
    d.submitted_at = optional_string(j, "submitted_at");
    if (d.reviewer_id.empty() || d.record_id.empty()) {
        throw Error(Errc::invalid_argument, "decision needs reviewer_id and record_id");
    }
    return d;
}

void validate_decision(const ReviewDecision& d, const BenignCandidate& candidate) {
    if (d.record_id != candidate.record_id) {
        throw Error(Errc::cross_record_decisions, d.id() + " is not about " + candidate.record_id);
    }
    if (!d.verdict.corrected_text) return;
    const std::string corrected = text::normalize_ws(*d.verdict.corrected_text);
    if (corrected.empty()) throw Error(Errc::invalid_correction, "correction text is blank: " + d.id());
    if (corrected == text::normalize_ws(candidate.candidate_text)) {
        throw Error(Errc::invalid_correction, "correction repeats the candidate: " + d.id());
    }
}

Json to_json(const Assignment& a) { return Json{{"record_id", a.record_id}, {"reviewer_ids", a.reviewer_ids}}; }

Assignment assignment_from_json(const Json& j) {
    return Assignment{require_string(j, "record_id"), require(j, "reviewer_ids").get<std::vector<std::string>>()};
}

std::vector<Assignment> assign_reviews(const std::vector<std::string>& record_ids,
                                       const std::vector<ReviewerProfile>& reviewers, int k, std::uint64_t seed) {
    if (k < 1) throw Error(Errc::invalid_argument, "reviewers per record must be positive");
    std::vector<std::string> pool;
    for (const auto& r : reviewers) pool.push_back(r.id);
    std::sort(pool.begin(), pool.end());
    if (std::adjacent_find(pool.begin(), pool.end()) != pool.end()) {
        throw Error(Errc::duplicate_id, "reviewer ids must be unique");
    }
    const auto n = pool.size();
    if (n < static_cast<std::size_t>(k)) {
        throw Error(Errc::insufficient_reviewers,
                    std::to_string(n) + " reviewers cannot cover " + std::to_string(k) + " per record");
    }
    seeded_shuffle(pool, seed);

    // Walk the shuffled pool cyclically: consecutive slots are distinct while
    // k <= n, and every reviewer receives floor or ceil of total/n.
    std::vector<Assignment> out;
    out.reserve(record_ids.size());
    std::size_t cursor = 0;
    for (const auto& id : record_ids) {
        Assignment a{id, {}};
        for (int j = 0; j < k; ++j) {
            a.reviewer_ids.push_back(pool[cursor % n]);
            ++cursor;
        }
        out.push_back(std::move(a));
    }
    return out;
}

GoldPair majority_vote(const BenignCandidate& candidate, const std::string& unsafe_text,
                       const std::vector<ReviewDecision>& decisions, const std::vector<ReviewerProfile>& reviewers) {
    if (decisions.empty()) throw Error(Errc::invalid_argument, "no decisions for " + candidate.record_id);

    std::set<std::string> seen;
    std::vector<std::string> trail;
    std::size_t approvals = 0;
    std::map<std::string, std::size_t> corrections;
    std::vector<const ReviewDecision*> expert_votes;
    for (const auto& d : decisions) {
        validate_decision(d, candidate);
        if (!seen.insert(d.reviewer_id).second) {
            throw Error(Errc::duplicate_reviewer, d.reviewer_id + " voted twice on " + d.record_id);
        }
        auto profile = std::find_if(reviewers.begin(), reviewers.end(),
                                    [&](const ReviewerProfile& p) { return p.id == d.reviewer_id; });
        if (profile == reviewers.end()) throw Error(Errc::unknown_reviewer, d.reviewer_id);
        if (profile->role == ReviewerRole::expert) expert_votes.push_back(&d);
        if (d.verdict.is_approve()) {
            ++approvals;
        } else {
            ++corrections[text::normalize_ws(*d.verdict.corrected_text)];
        }
        trail.push_back(d.id());
    }
    std::sort(trail.begin(), trail.end());

    GoldPair gold;
    gold.record_id = candidate.record_id;
    gold.unsafe_text = unsafe_text;
    gold.vote_trail = std::move(trail);

    const std::size_t n = decisions.size();
    if (2 * approvals > n) {
        gold.benign_text = candidate.candidate_text;
        gold.provenance = approvals == n ? Provenance::unanimous : Provenance::majority;
        return gold;
    }
    for (const auto& [corrected, count] : corrections) {
        if (2 * count > n) {
            gold.benign_text = corrected;
            gold.provenance = count == n ? Provenance::unanimous : Provenance::majority;
            return gold;
        }
    }
    auto effective = [&](const ReviewDecision& d) {
        return d.verdict.is_approve() ? candidate.candidate_text : text::normalize_ws(*d.verdict.corrected_text);
    };
    if (!expert_votes.empty()) {
        const std::string text = effective(*expert_votes.front());
        const bool agree = std::all_of(expert_votes.begin(), expert_votes.end(),
                                       [&](const ReviewDecision* d) { return effective(*d) == text; });
        if (agree) {
            gold.benign_text = text;
            gold.provenance = Provenance::expert_tiebreak;
            return gold;
        }
    }
    gold.provenance = Provenance::escalated_manual;
    return gold;
}

double AgreementStats::pair_percent(const std::string& a, const std::string& b) const {
    auto key = a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    auto it = per_pair.find(key);
    if (it == per_pair.end() || it->second.second == 0) return 0.0;
    return 100.0 * static_cast<double>(it->second.first) / static_cast<double>(it->second.second);
}

namespace {

bool agree(const ReviewDecision& a, const ReviewDecision& b) {
    if (a.verdict.is_approve() || b.verdict.is_approve()) return a.verdict.is_approve() && b.verdict.is_approve();
    return text::normalize_ws(*a.verdict.corrected_text) == text::normalize_ws(*b.verdict.corrected_text);
}

}  // namespace

AgreementStats agreement_stats(const std::map<std::string, std::vector<ReviewDecision>>& by_record) {
    AgreementStats stats;
    for (const auto& [record, decisions] : by_record) {
        if (decisions.size() < 2) continue;
        for (std::size_t i = 0; i < decisions.size(); ++i) {
            for (std::size_t j = i + 1; j < decisions.size(); ++j) {
                const bool same = agree(decisions[i], decisions[j]);
                const auto& a = decisions[i].reviewer_id;
                const auto& b = decisions[j].reviewer_id;
                auto& cell = stats.per_pair[a < b ? std::make_pair(a, b) : std::make_pair(b, a)];
                cell.first += same ? 1 : 0;
                cell.second += 1;
                stats.agreeing_pairs += same ? 1 : 0;
                stats.total_pairs += 1;
            }
        }
    }
    if (stats.total_pairs > 0) {
        stats.overall_percent =
            100.0 * static_cast<double>(stats.agreeing_pairs) / static_cast<double>(stats.total_pairs);
    }
    return stats;
}

void DecisionBook::load(std::vector<ReviewDecision> decisions) {
    std::lock_guard lock(mu_);
    by_record_.clear();
    for (auto& d : decisions) by_record_[d.record_id].push_back(std::move(d));
}

DecisionBook::Submitted DecisionBook::submit(const ReviewDecision& decision,
                                             std::optional<std::uint64_t> expected_version) {
    std::lock_guard lock(mu_);
    auto& list = by_record_[decision.record_id];
    const auto current = static_cast<std::uint64_t>(list.size());
    if (expected_version && *expected_version != current) {
        throw Error(Errc::stale_version, decision.record_id + " is at version " + std::to_string(current));
    }
    for (const auto& d : list) {
        if (d.reviewer_id == decision.reviewer_id) {
            throw Error(Errc::duplicate_reviewer, decision.reviewer_id + " already decided " + decision.record_id);
        }
    }
    list.push_back(decision);
    return Submitted{current + 1, list.size()};
}

std::uint64_t DecisionBook::version(const std::string& record_id) const {
    std::lock_guard lock(mu_);
    auto it = by_record_.find(record_id);
    return it == by_record_.end() ? 0 : static_cast<std::uint64_t>(it->second.size());
}

std::vector<ReviewDecision> DecisionBook::for_record(const std::string& record_id) const {
    std::lock_guard lock(mu_);
    auto it = by_record_.find(record_id);
    return it == by_record_.end() ? std::vector<ReviewDecision>{} : it->second;
}

std::map<std::string, std::vector<ReviewDecision>> DecisionBook::snapshot() const {
    std::lock_guard lock(mu_);
    return by_record_;
}

bool DecisionBook::has_decided(const std::string& record_id, const std::string& reviewer_id) const {
    std::lock_guard lock(mu_);
    auto it = by_record_.find(record_id);
    if (it == by_record_.end()) return false;
    return std::any_of(it->second.begin(), it->second.end(),
                       [&](const ReviewDecision& d) { return d.reviewer_id == reviewer_id; });
}

}  // namespace benign::adjudication
