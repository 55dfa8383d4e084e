#pragma once

// Likert-sheet capture and aggregation.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "benign/core.hpp"
#include "benign/jsonl.hpp"
#include "benign/metrics.hpp"

namespace benign::human_eval {

// Exact non-negative fraction, always in lowest terms.
class Rational {
public:
    Rational() = default;
    Rational(std::uint64_t num, std::uint64_t den);

    std::uint64_t num() const noexcept { return num_; }
    std::uint64_t den() const noexcept { return den_; }

    Rational operator+(const Rational& o) const;
    Rational divided_by(std::uint64_t n) const;

    // Half-up to hundredths: 14/3 -> 467.
    std::uint64_t hundredths() const noexcept;
    std::string to_fixed2() const { return format_hundredths(hundredths()); }

    friend bool operator==(const Rational&, const Rational&) = default;
    friend bool operator<(const Rational& a, const Rational& b) {
        return static_cast<unsigned __int128>(a.num_) * b.den_ < static_cast<unsigned __int128>(b.num_) * a.den_;
    }

private:
    std::uint64_t num_ = 0;
    std::uint64_t den_ = 1;
};

enum class SubmitOutcome { accepted, replaced };

std::string_view to_string(SubmitOutcome o) noexcept;

struct AuditEntry {
    SubmitOutcome outcome = SubmitOutcome::accepted;
    LikertSheet sheet;
    std::string recorded_at;
};

Json to_json(const AuditEntry& e);
AuditEntry audit_entry_from_json(const Json& j);

// One sheet per (sample, evaluator). Every submission lands in the audit log;
// a resubmission replaces the current sheet. With a path, the audit log is an
// append-only file replayed on open.
class SheetStore {
public:
    explicit SheetStore(Clock& clock);
    SheetStore(Clock& clock, const std::filesystem::path& audit_path);

    // Errc::out_of_range_score / missing_score via validate(sheet).
    SubmitOutcome submit(const LikertSheet& sheet);

    std::vector<LikertSheet> sheets() const;
    std::vector<AuditEntry> audit() const;
    std::size_t audit_count(const std::string& sample_id, const std::string& evaluator_id) const;
    bool torn_tail_repaired() const noexcept { return torn_tail_; }

private:
    void apply(const AuditEntry& e);

    Clock& clock_;
    std::unique_ptr<jsonl::Appender> appender_;
    mutable std::mutex mu_;
    std::map<std::pair<std::string, std::string>, LikertSheet> current_;
    std::vector<AuditEntry> audit_;
    bool torn_tail_ = false;
};

struct RubricAggregate {
    std::map<RubricDimension, Rational> overall;
    std::map<std::string, std::map<RubricDimension, Rational>> per_sample;
    std::uint64_t sheet_count = 0;
};

// Per-sample mean over evaluators, then the mean of those per-sample means.
// A dimension nobody scored for a sample is left out of that sample.
// Errc::empty_input when sheets is empty.
RubricAggregate aggregate_sheets(const std::vector<LikertSheet>& sheets);

Json to_json(const RubricAggregate& a);
// Rows keyed by sample id plus an Overall row; "-" for unscored cells.
std::string render_rubric_table(const RubricAggregate& a);

struct LengthBand {
    double min = 0.5;
    double max = 1.5;
};

struct LengthCheck {
    double ratio = 0.0;
    bool flagged = false;
};

// Character-count ratio output/input, flagged outside the inclusive band.
// Errc::empty_input when the input is empty.
LengthCheck length_ratio(const metrics::EvalSample& sample, LengthBand band = {});

}  // namespace benign::human_eval
