#pragma once

// HTTP JSON API behind the review UI.
//
//   GET  /queue/{reviewer_id}   pending assignments for a reviewer
//   GET  /records/{id}          unsafe text, candidate, vote status
//   POST /decisions             ReviewDecision; optional If-Match: <version>
//   GET  /gold                  finalized GoldPairs
//   POST /likert                LikertSheet
//   GET  /reports/latest        last published MetricReport
//
// Every request carries the shared secret in X-Review-Token.

#include <filesystem>
#include <memory>
#include <string>

#include "benign/core.hpp"
#include "benign/orchestrator.hpp"

namespace benign::service {

inline constexpr const char* kTokenHeader = "X-Review-Token";

// Store directory layout. The first four files are read at startup; the rest
// are append-only logs (or, for the report, a published snapshot).
struct StoreLayout {
    std::filesystem::path dir;

    std::filesystem::path records() const { return dir / "records.jsonl"; }
    std::filesystem::path candidates() const { return dir / "candidates.jsonl"; }
    std::filesystem::path reviewers() const { return dir / "reviewers.jsonl"; }
    std::filesystem::path assignments() const { return dir / "assignments.jsonl"; }
    std::filesystem::path decisions() const { return dir / "decisions.jsonl"; }
    std::filesystem::path gold() const { return dir / "gold.jsonl"; }
    std::filesystem::path sheets() const { return dir / "sheets.jsonl"; }
    std::filesystem::path latest_report() const { return dir / "reports" / "latest.json"; }
};

struct ServiceOptions {
    std::filesystem::path store_dir;
    std::string token;
};

class ReviewService {
public:
    // Errc::config_error for an empty token; load errors from the store.
    ReviewService(ServiceOptions options, Clock& clock, const orchestrator::WarningSink& warn = {});
    ~ReviewService();

    ReviewService(const ReviewService&) = delete;
    ReviewService& operator=(const ReviewService&) = delete;

    // Binds and returns the port (an ephemeral one when port is 0).
    int bind(const std::string& host, int port);
    // Blocks serving requests until stop().
    void serve();
    void stop();

    std::size_t decision_count() const;
    std::size_t gold_count() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace benign::service
