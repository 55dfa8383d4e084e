#include "benign/demographics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "benign/jsonl.hpp"
#include "benign/text.hpp"

namespace benign::demographics {

std::vector<std::vector<std::string>> parse_delimited(std::string_view content, char delimiter) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        const bool blank = row.size() == 1 && text::is_blank(row.front());
        if (!blank) rows.push_back(std::move(row));
        row.clear();
    };
    for (std::size_t i = 0; i < content.size(); ++i) {
        const char c = content[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < content.size() && content[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
        } else if (c == delimiter) {
            end_field();
        } else if (c == '\r') {
            continue;
        } else if (c == '\n') {
            end_row();
        } else {
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) throw Error(Errc::parse_error, "unterminated quoted field");
    if (field_started || !field.empty() || !row.empty()) end_row();
    return rows;
}

std::vector<SourceRecord> ingest_grouped_prompts(const std::filesystem::path& path, const WarningSink& warn,
                                                 Clock* clock) {
    const std::string content = jsonl::read_text(path);
    if (text::is_blank(content)) throw Error(Errc::empty_file, path.string() + " is empty");
    const auto first_line = content.substr(0, content.find('\n'));
    const char delimiter = first_line.find('\t') != std::string::npos ? '\t' : ',';
    auto rows = parse_delimited(content, delimiter);

    const auto& header = rows.front();
    auto column = [&](std::string_view name) -> std::size_t {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (text::to_lower(text::trim(header[i])) == name) return i;
        }
        throw Error(Errc::parse_error, "missing column \"" + std::string(name) + "\" in " + path.string());
    };
    const std::size_t id_col = column("id");
    const std::size_t text_col = column("text");
    const std::size_t group_col = column("group");
    if (rows.size() == 1) throw Error(Errc::empty_file, path.string() + " has a header but no rows");

    RecordValidator validator(false, clock);
    std::vector<SourceRecord> out;
    out.reserve(rows.size() - 1);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto need = std::max({id_col, text_col, group_col});
        if (row.size() <= need) {
            throw Error(Errc::parse_error, "row " + std::to_string(r + 1) + " has too few fields");
        }
        if (text::is_blank(row[group_col])) {
            throw Error(Errc::parse_error, "row " + std::to_string(r + 1) + " has no group");
        }
        Json raw{{"text", row[text_col]}, {"source_tag", "grouped-prompts"}, {"group", text::trim(row[group_col])}};
        if (!text::is_blank(row[id_col])) raw["id"] = text::trim(row[id_col]);
        SourceRecord record = validator.validate(raw);
        if (record.groups.size() != 1) {
            throw Error(Errc::parse_error, "row " + std::to_string(r + 1) + " needs exactly one group");
        }
        if (record.groups.front().is_other() && warn) {
            warn("unknown group \"" + record.groups.front().name() + "\" for " + record.id + ", kept as Other");
        }
        out.push_back(std::move(record));
    }
    return out;
}

namespace {

using DetailIndex = std::map<std::string, const metrics::SampleDetail*>;

DetailIndex judged_index(const std::vector<metrics::SampleDetail>& details) {
    DetailIndex index;
    for (const auto& d : details) {
        if (d.failed) continue;
        if (!index.emplace(d.sample_id, &d).second) throw Error(Errc::duplicate_id, d.sample_id);
    }
    return index;
}

}  // namespace

std::vector<GroupReport> per_group_report(const std::vector<metrics::SampleDetail>& details,
                                          const std::optional<std::vector<metrics::SampleDetail>>& baseline) {
    const DetailIndex treated = judged_index(details);
    std::optional<DetailIndex> base;
    if (baseline) {
        base = judged_index(*baseline);
        std::set<std::string> a;
        std::set<std::string> b;
        for (const auto& [id, _] : treated) a.insert(id);
        for (const auto& [id, _] : *base) b.insert(id);
        if (a != b) throw Error(Errc::mismatched_ids, "baseline and treatment cover different samples");
    }

    std::map<DemographicGroup, std::vector<std::string>> slices;
    for (const auto& [id, d] : treated) {
        for (const auto& g : d->groups) slices[g].push_back(id);
    }

    std::vector<GroupReport> out;
    for (const auto& [group, ids] : slices) {
        std::vector<metrics::SampleDetail> slice;
        slice.reserve(ids.size());
        for (const auto& id : ids) slice.push_back(*treated.at(id));
        GroupReport report;
        report.group = group;
        report.metrics = metrics::aggregate(slice);
        report.sample_count = ids.size();
        if (base) {
            std::vector<metrics::SampleDetail> base_slice;
            for (const auto& id : ids) base_slice.push_back(*base->at(id));
            report.original_bias = metrics::aggregate(base_slice).at(Dimension::bias);
        }
        out.push_back(std::move(report));
    }
    return out;
}

double reduction(double original_pct, double post_pct) {
    if (!(original_pct > 0.0)) throw Error(Errc::zero_original, "original percentage must be positive");
    if (original_pct > 100.0 || post_pct < 0.0 || post_pct > 100.0) {
        throw Error(Errc::invalid_argument, "percentages must lie in [0, 100]");
    }
    return 100.0 * (original_pct - post_pct) / original_pct;
}

std::string format_percent(double pct) {
    const auto hundredths = static_cast<long long>(std::floor(pct * 100.0 + 0.5 + 1e-9));
    const bool negative = hundredths < 0;
    const auto mag = static_cast<std::uint64_t>(negative ? -hundredths : hundredths);
    return (negative ? "-" : "") + format_hundredths(mag);
}

namespace {

std::string pad(std::string s, std::size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
    return s;
}

}  // namespace

std::string render_group_table(const std::vector<GroupReport>& reports) {
    std::size_t name_width = 5;
    for (const auto& r : reports) name_width = std::max(name_width, r.group.name().size());
    name_width += 2;
    std::ostringstream out;
    out << pad("Group", name_width) << pad("Original Bias", 15) << pad("Bias", 9) << pad("Toxicity", 10)
        << pad("KR", 9) << pad("Faith.", 9) << pad("Rel.", 9) << "n\n";
    for (const auto& r : reports) {
        out << pad(r.group.name(), name_width)
            << pad(r.original_bias ? r.original_bias->percent_string() : std::string("-"), 15)
            << pad(r.metrics.at(Dimension::bias).percent_string(), 9)
            << pad(r.metrics.at(Dimension::toxicity).percent_string(), 10)
            << pad(r.metrics.at(Dimension::knowledge_retention).percent_string(), 9)
            << pad(r.metrics.at(Dimension::faithfulness).percent_string(), 9)
            << pad(r.metrics.at(Dimension::relevancy).percent_string(), 9) << r.sample_count << "\n";
    }
    return out.str();
}

Json to_json(const GroupReport& r) {
    Json j{{"group", r.group.name()}};
    if (r.original_bias) {
        j["original_bias"] = Json{{"numerator", r.original_bias->numerator()},
                                  {"denominator", r.original_bias->denominator()},
                                  {"percent", r.original_bias->percent_string()}};
    } else {
        j["original_bias"] = nullptr;
    }
    j["metrics"] = to_json(r.metrics)["dimensions"];
    j["sample_count"] = r.sample_count;
    if (r.original_bias) {
        const double original = 100.0 * r.original_bias->value();
        const double post = 100.0 * r.metrics.at(Dimension::bias).value();
        j["bias_reduction"] = original > 0.0 ? Json(format_percent(reduction(original, post))) : Json(nullptr);
    }
    return j;
}

}  // namespace benign::demographics
