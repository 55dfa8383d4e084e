#pragma once

// Training-data emission: dataset records, Alpaca records, the chat
// instruction template, train/test splits and the training config file.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "benign/core.hpp"
#include "benign/shuffle.hpp"

namespace benign::formatter {

// The debiasing system message; also the default Alpaca instruction.
extern const std::string kDebiasingSystemMessage;

// {"ID", "Text", "Benign Variation"} in that order. Errc::unfinalized_gold for
// escalated pairs.
Json to_dataset_record(const GoldPair& gold);
std::string to_dataset_line(const GoldPair& gold);

struct DatasetRecord {
    std::string id;
    std::string text;
    std::string benign_variation;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

DatasetRecord parse_dataset_record(const Json& j);
Json to_json(const DatasetRecord& r);

struct AlpacaRecord {
    std::string instruction;
    std::string input;
    std::string output;

    friend bool operator==(const AlpacaRecord&, const AlpacaRecord&) = default;
};

Json to_json(const AlpacaRecord& r);
AlpacaRecord alpaca_record_from_json(const Json& j);

// Errors: unfinalized_gold, invalid_argument (blank instruction).
AlpacaRecord to_alpaca(const GoldPair& gold, const std::string& instruction_text = kDebiasingSystemMessage);
std::vector<AlpacaRecord> to_alpaca(const std::vector<GoldPair>& golds,
                                    const std::string& instruction_text = kDebiasingSystemMessage);

// "<s>[INST] {sys} {instruction} [/INST] {user}</s>". Any slot containing a
// reserved token ("[INST]", "[/INST]", "<s>", "</s>") is
// Errc::delimiter_collision; there is no escaping.
std::string render_instruction(std::string_view sys_message, std::string_view instruction,
                               std::string_view user_prompt);

struct InstructionSlots {
    std::string sys_message;
    std::string instruction;
    std::string user_prompt;

    friend bool operator==(const InstructionSlots&, const InstructionSlots&) = default;
};

// Inverts render_instruction. The system message is supplied because the
// single space between it and the instruction cannot otherwise be located.
// Errc::parse_error when the structure does not match.
InstructionSlots parse_instruction(std::string_view rendered, std::string_view sys_message);

template <typename T>
struct Split {
    std::vector<T> train;
    std::vector<T> test;
};

// Deterministic per seed; |test| = round(fraction * N); both parts keep input
// order. Errors: too_few_records (N < 2), invalid_argument (fraction outside (0,1)).
template <typename T>
Split<T> split(std::span<const T> records, double test_fraction, std::uint64_t seed) {
    if (records.size() < 2) throw Error(Errc::too_few_records, "need at least two records to split");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw Error(Errc::invalid_argument, "test fraction must be in (0,1)");
    }
    const auto n = records.size();
    const auto test_size = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    seeded_shuffle(order, seed);
    std::vector<bool> in_test(n, false);
    for (std::size_t i = 0; i < test_size; ++i) in_test[order[i]] = true;
    Split<T> out;
    for (std::size_t i = 0; i < n; ++i) (in_test[i] ? out.test : out.train).push_back(records[i]);
    return out;
}

// Flat `key = value` lines in fixed key order. Doubles use the shortest
// round-tripping form (2e-05, 0.001).
std::string emit_training_config(const HyperparameterProfile& profile);
HyperparameterProfile parse_training_config(std::string_view content);

}  // namespace benign::formatter
