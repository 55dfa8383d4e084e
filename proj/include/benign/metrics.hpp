#pragma once

// LLM-as-judge scoring. The judge extracts units (texts, claims, statements)
// from a rewrite and classifies each one; aggregation then reduces the
// verdicts to five exact ratios:
//
//   bias                = biased units / units
//   toxicity            = toxic units / units
//   knowledge retention = samples without knowledge attrition / samples
//   faithfulness        = truthful claims / claims
//   relevancy           = relevant statements / statements
//
// The input text doubles as the retrieval context for the last three.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "benign/core.hpp"
#include "benign/gateway.hpp"

namespace benign::metrics {

struct EvalSample {
    std::string sample_id;
    std::string input_text;
    std::string output_text;
    std::vector<DemographicGroup> groups;

    friend bool operator==(const EvalSample&, const EvalSample&) = default;
};

Json to_json(const EvalSample& s);
EvalSample eval_sample_from_json(const Json& j);
void validate(const EvalSample& s);

struct SampleDetail {
    std::string sample_id;
    std::vector<DemographicGroup> groups;
    std::map<Dimension, std::vector<JudgeVerdict>> verdicts;
    bool failed = false;
    std::string error;

    std::uint64_t positives(Dimension d) const;
    std::uint64_t units(Dimension d) const;
    // Response-level view: at least one positive unit.
    bool any_positive(Dimension d) const;

    friend bool operator==(const SampleDetail&, const SampleDetail&) = default;
};

Json to_json(const SampleDetail& d);
SampleDetail sample_detail_from_json(const Json& j);
// Every verdict must sit in the list of its own dimension.
void validate(const SampleDetail& d);

// Prompt text for one dimension: an optional extraction prompt and the
// classification prompt. Placeholders: {{input}}, {{output}}, {{units}}.
struct DimensionTemplate {
    std::string extract;
    std::string classify;
};

using JudgeTemplates = std::map<Dimension, DimensionTemplate>;

JudgeTemplates default_templates();
// Reads <dir>/<dimension>.txt files with [extract] / [classify] sections.
JudgeTemplates load_templates(const std::filesystem::path& dir);
DimensionTemplate parse_template_file(std::string_view content);

struct JudgeOptions {
    std::string model_id = "judge";
    JudgeTemplates templates = default_templates();
    // Units per classification call.
    std::size_t classify_batch = 16;
    // Bias/toxicity only: score the whole output as one unit when extraction
    // finds nothing. When off, an empty extraction is Errc::empty_extraction.
    bool whole_output_fallback = true;
};

// Pulls the JSON payload out of the first fenced block in a judge reply.
// Errc::judge_output_unparseable when there is none or it is not JSON.
Json parse_fenced_json(std::string_view reply);

class Judge {
public:
    Judge(gateway::ChatClient& client, JudgeOptions options = {});

    std::vector<JudgeVerdict> judge_bias(const std::string& output_text);
    std::vector<JudgeVerdict> judge_toxicity(const std::string& output_text);
    JudgeVerdict judge_knowledge_retention(const EvalSample& sample);
    std::vector<JudgeVerdict> judge_faithfulness(const EvalSample& sample);
    std::vector<JudgeVerdict> judge_relevancy(const EvalSample& sample);

    SampleDetail judge_sample(const EvalSample& sample);

    const JudgeOptions& options() const noexcept { return options_; }

private:
    std::vector<std::string> extract_units(Dimension d, const std::string& input, const std::string& output);
    std::vector<JudgeVerdict> classify_units(Dimension d, const std::string& input, const std::string& output,
                                             const std::vector<std::string>& units);
    std::vector<JudgeVerdict> unit_level(Dimension d, const std::string& input, const std::string& output,
                                         bool allow_fallback);
    // Sends the prompt; on an unparseable reply asks once for a reformat.
    Json ask_structured(const std::string& prompt);

    gateway::ChatClient& client_;
    JudgeOptions options_;
};

// Errors: invalid_argument (no usable samples), zero_denominator.
MetricReport aggregate(const std::vector<SampleDetail>& details, const std::string& judge_model = {},
                       const std::string& timestamp = {});

struct RunResult {
    MetricReport report;
    std::vector<SampleDetail> details;  // input order
};

// Judges every sample on all five dimensions. A sample whose judging fails is
// kept in the details (failed=true), excluded from the ratios and counted in
// report.failed_count.
RunResult evaluate_run(const std::vector<EvalSample>& samples, Judge& judge, int parallelism, Clock& clock);

std::string render_report_table(const MetricReport& report);

// ---------------------------------------------------------------------------
// Offline judge

struct LexiconEntry {
    Dimension dimension;
    std::string term;
};

std::vector<LexiconEntry> default_lexicon();
// Line-delimited {"dimension": ..., "term": ...}.
std::vector<LexiconEntry> load_lexicon(const std::filesystem::path& path);

// A rule-table mock whose fallthrough plays the judge deterministically:
// sentence-split extraction, lexicon hits for bias/toxicity, and content-word
// overlap with the input for the other three dimensions.
std::shared_ptr<gateway::MockTransport> make_mock_judge(std::vector<gateway::MockRule> rules,
                                                        std::vector<LexiconEntry> lexicon);

// Sentence split on '.', '!' or '?' followed by whitespace or end of text.
std::vector<std::string> split_sentences(std::string_view text);
// Lowercased tokens of four or more letters, minus common function words.
std::vector<std::string> content_words(std::string_view text);

}  // namespace benign::metrics
