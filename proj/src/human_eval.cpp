#include "benign/human_eval.hpp"

#include <numeric>
#include <sstream>

#include "benign/text.hpp"

namespace benign::human_eval {

Rational::Rational(std::uint64_t num, std::uint64_t den) {
    if (den == 0) throw Error(Errc::zero_denominator, "rational with zero denominator");
    const auto g = std::gcd(num, den);
    num_ = num / (g == 0 ? 1 : g);
    den_ = den / (g == 0 ? 1 : g);
}

Rational Rational::operator+(const Rational& o) const {
    const auto g = std::gcd(den_, o.den_);
    const auto lcm = den_ / g * o.den_;
    return Rational(num_ * (lcm / den_) + o.num_ * (lcm / o.den_), lcm);
}

Rational Rational::divided_by(std::uint64_t n) const {
    if (n == 0) throw Error(Errc::zero_denominator, "division by zero");
    return Rational(num_, den_ * n);
}

std::uint64_t Rational::hundredths() const noexcept { return (num_ * 200 + den_) / (2 * den_); }

std::string_view to_string(SubmitOutcome o) noexcept {
    return o == SubmitOutcome::accepted ? "accepted" : "replaced";
}

Json to_json(const AuditEntry& e) {
    return Json{{"outcome", to_string(e.outcome)}, {"recorded_at", e.recorded_at}, {"sheet", to_json(e.sheet)}};
}

AuditEntry audit_entry_from_json(const Json& j) {
    AuditEntry e;
    const auto outcome = require_string(j, "outcome");
    if (outcome == "accepted") {
        e.outcome = SubmitOutcome::accepted;
    } else if (outcome == "replaced") {
        e.outcome = SubmitOutcome::replaced;
    } else {
        throw Error(Errc::parse_error, "unknown audit outcome: " + outcome);
    }
    e.recorded_at = optional_string(j, "recorded_at");
    e.sheet = likert_sheet_from_json(require(j, "sheet"));
    return e;
}

SheetStore::SheetStore(Clock& clock) : clock_(clock) {}

SheetStore::SheetStore(Clock& clock, const std::filesystem::path& audit_path) : clock_(clock) {
    auto log = jsonl::read_log(audit_path, true);
    torn_tail_ = log.torn_tail;
    for (const auto& j : log.entries) apply(audit_entry_from_json(j));
    appender_ = std::make_unique<jsonl::Appender>(audit_path);
}

void SheetStore::apply(const AuditEntry& e) {
    current_[{e.sheet.sample_id, e.sheet.evaluator_id}] = e.sheet;
    audit_.push_back(e);
}

SubmitOutcome SheetStore::submit(const LikertSheet& sheet) {
    validate(sheet);
    std::lock_guard lock(mu_);
    AuditEntry entry;
    entry.sheet = sheet;
    entry.recorded_at = clock_.utc_now();
    entry.outcome = current_.contains({sheet.sample_id, sheet.evaluator_id}) ? SubmitOutcome::replaced
                                                                            : SubmitOutcome::accepted;
    if (appender_) appender_->append(to_json(entry));
    apply(entry);
    return entry.outcome;
}

std::vector<LikertSheet> SheetStore::sheets() const {
    std::lock_guard lock(mu_);
    std::vector<LikertSheet> out;
    out.reserve(current_.size());
    for (const auto& [_, s] : current_) out.push_back(s);
    return out;
}

std::vector<AuditEntry> SheetStore::audit() const {
    std::lock_guard lock(mu_);
    return audit_;
}

std::size_t SheetStore::audit_count(const std::string& sample_id, const std::string& evaluator_id) const {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& e : audit_) {
        if (e.sheet.sample_id == sample_id && e.sheet.evaluator_id == evaluator_id) ++n;
    }
    return n;
}

RubricAggregate aggregate_sheets(const std::vector<LikertSheet>& sheets) {
    if (sheets.empty()) throw Error(Errc::empty_input, "no sheets to aggregate");
    std::map<std::string, std::map<RubricDimension, std::pair<std::uint64_t, std::uint64_t>>> sums;
    for (const auto& s : sheets) {
        validate(s);
        auto& row = sums[s.sample_id];
        for (const auto& [dim, score] : s.scores) {
            row[dim].first += static_cast<std::uint64_t>(score);
            row[dim].second += 1;
        }
    }
    RubricAggregate out;
    out.sheet_count = sheets.size();
    std::map<RubricDimension, std::pair<Rational, std::uint64_t>> totals;
    for (const auto& [sample, row] : sums) {
        auto& means = out.per_sample[sample];
        for (const auto& [dim, sum_count] : row) {
            const Rational mean(sum_count.first, sum_count.second);
            means[dim] = mean;
            auto& t = totals[dim];
            t.first = t.first + mean;
            t.second += 1;
        }
    }
    for (const auto& [dim, t] : totals) out.overall[dim] = t.first.divided_by(t.second);
    return out;
}

Json to_json(const RubricAggregate& a) {
    auto row_json = [](const std::map<RubricDimension, Rational>& row) {
        Json j = Json::object();
        for (RubricDimension d : kAllRubricDimensions) {
            auto it = row.find(d);
            if (it != row.end()) j[std::string(to_string(d))] = it->second.to_fixed2();
        }
        return j;
    };
    Json samples = Json::object();
    for (const auto& [id, row] : a.per_sample) samples[id] = row_json(row);
    return Json{{"sheet_count", a.sheet_count}, {"overall", row_json(a.overall)}, {"per_sample", samples}};
}

std::string render_rubric_table(const RubricAggregate& a) {
    std::size_t id_width = 7;
    for (const auto& [id, _] : a.per_sample) id_width = std::max(id_width, id.size());
    id_width += 2;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.append(w - s.size(), ' ');
        return s;
    };
    auto cells = [&](const std::map<RubricDimension, Rational>& row) {
        std::string line;
        for (RubricDimension d : kAllRubricDimensions) {
            auto it = row.find(d);
            line += pad(it == row.end() ? std::string("-") : it->second.to_fixed2(),
                        to_string(d).size() + 2);
        }
        return line;
    };
    std::ostringstream out;
    out << pad("Sample", id_width);
    for (RubricDimension d : kAllRubricDimensions) out << pad(std::string(to_string(d)), to_string(d).size() + 2);
    out << "\n";
    for (const auto& [id, row] : a.per_sample) out << pad(id, id_width) << cells(row) << "\n";
    out << pad("Overall", id_width) << cells(a.overall) << "\n";
    return out.str();
}

LengthCheck length_ratio(const metrics::EvalSample& sample, LengthBand band) {
    const auto in = text::char_count(sample.input_text);
    if (in == 0) throw Error(Errc::empty_input, "input text is empty");
    LengthCheck c;
    c.ratio = static_cast<double>(text::char_count(sample.output_text)) / static_cast<double>(in);
    c.flagged = c.ratio < band.min || c.ratio > band.max;
    return c;
}

}  // namespace benign::human_eval
