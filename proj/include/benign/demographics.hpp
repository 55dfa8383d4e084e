#pragma once

// Group-labelled prompt sets and per-group metric slices.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "benign/core.hpp"
#include "benign/metrics.hpp"

namespace benign::demographics {

using WarningSink = std::function<void(const std::string&)>;

// Delimited text with a header naming id, text and group columns (any order,
// extra columns ignored). Tab-delimited when the header contains a tab,
// comma-delimited otherwise; quoted fields follow RFC 4180. A blank id is
// replaced by content_id(text). Unknown group names become Other(label) and
// are reported through warn.
// Errors: unreadable_file, empty_file, parse_error, empty_text, duplicate_id.
std::vector<SourceRecord> ingest_grouped_prompts(const std::filesystem::path& path, const WarningSink& warn = {},
                                                 Clock* clock = nullptr);

// Splits delimited text into rows of fields.
std::vector<std::vector<std::string>> parse_delimited(std::string_view content, char delimiter);

struct GroupReport {
    DemographicGroup group{DemographicGroup::Kind::Other};
    std::optional<Ratio> original_bias;
    MetricReport metrics;
    std::uint64_t sample_count = 0;
};

// One report per group with at least one judged sample, closed-set order first
// then Other labels alphabetically. A sample tagged with several groups counts
// in each. When a baseline is given, its judged ids must equal the treatment's
// (Errc::mismatched_ids) and original_bias is the baseline's bias ratio over
// the same slice.
std::vector<GroupReport> per_group_report(const std::vector<metrics::SampleDetail>& details,
                                          const std::optional<std::vector<metrics::SampleDetail>>& baseline = {});

// 100 * (original - post) / original. Errc::zero_original when original <= 0,
// invalid_argument when either value is outside [0, 100].
double reduction(double original_pct, double post_pct);

// Half-up to two decimals: 98.3748 -> "98.37".
std::string format_percent(double pct);

// Columns: Group, Original Bias, Bias, Toxicity, KR, Faith., Rel., n.
std::string render_group_table(const std::vector<GroupReport>& reports);

Json to_json(const GroupReport& r);

}  // namespace benign::demographics
