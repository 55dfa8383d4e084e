#include "benign/formatter.hpp"

#include <array>
#include <charconv>
#include <functional>
#include <map>

#include "benign/text.hpp"

namespace benign::formatter {

const std::string kDebiasingSystemMessage =
    "You are a text debiasing bot, you take as input a text and you output its debiased version by rephrasing "
    "it to be free from any age, gender, political, social or socio-economic biases, without any extra "
    "outputs:";

namespace {

constexpr std::array<std::string_view, 4> kReservedTokens = {"[INST]", "[/INST]", "<s>", "</s>"};
constexpr std::string_view kOpen = "<s>[INST] ";
constexpr std::string_view kClose = "</s>";
constexpr std::string_view kMid = "[/INST]";

const std::string& finalized_text(const GoldPair& gold) {
    if (!gold.finalized()) throw Error(Errc::unfinalized_gold, gold.record_id + " has no gold text yet");
    return *gold.benign_text;
}

void check_slot(std::string_view slot, const char* name) {
    for (auto token : kReservedTokens) {
        if (slot.find(token) != std::string_view::npos) {
            throw Error(Errc::delimiter_collision, std::string(name) + " contains " + std::string(token));
        }
    }
}

}  // namespace

Json to_dataset_record(const GoldPair& gold) {
    const std::string& benign = finalized_text(gold);
    return Json{{"ID", gold.record_id}, {"Text", gold.unsafe_text}, {"Benign Variation", benign}};
}

std::string to_dataset_line(const GoldPair& gold) { return dump_line(to_dataset_record(gold)); }

DatasetRecord parse_dataset_record(const Json& j) {
    if (!j.is_object() || j.size() != 3) throw Error(Errc::parse_error, "dataset record must have exactly three keys");
    auto it = j.begin();
    if (it.key() != "ID" || (++it).key() != "Text" || (++it).key() != "Benign Variation") {
        throw Error(Errc::parse_error, "dataset record keys must be ID, Text, Benign Variation in order");
    }
    return DatasetRecord{require_string(j, "ID"), require_string(j, "Text"), require_string(j, "Benign Variation")};
}

Json to_json(const DatasetRecord& r) {
    return Json{{"ID", r.id}, {"Text", r.text}, {"Benign Variation", r.benign_variation}};
}

Json to_json(const AlpacaRecord& r) {
    return Json{{"instruction", r.instruction}, {"input", r.input}, {"output", r.output}};
}

AlpacaRecord alpaca_record_from_json(const Json& j) {
    AlpacaRecord r{require_string(j, "instruction"), require_string(j, "input"), require_string(j, "output")};
    if (r.output.empty()) throw Error(Errc::parse_error, "alpaca output is empty");
    return r;
}

AlpacaRecord to_alpaca(const GoldPair& gold, const std::string& instruction_text) {
    if (text::is_blank(instruction_text)) throw Error(Errc::invalid_argument, "instruction text is required");
    return AlpacaRecord{instruction_text, gold.unsafe_text, finalized_text(gold)};
}

std::vector<AlpacaRecord> to_alpaca(const std::vector<GoldPair>& golds, const std::string& instruction_text) {
    std::vector<AlpacaRecord> out;
    out.reserve(golds.size());
    for (const auto& g : golds) out.push_back(to_alpaca(g, instruction_text));
    return out;
}

std::string render_instruction(std::string_view sys_message, std::string_view instruction,
                               std::string_view user_prompt) {
    check_slot(sys_message, "sys_message");
    check_slot(instruction, "instruction");
    check_slot(user_prompt, "user_prompt");
    std::string out;
    out.reserve(kOpen.size() + sys_message.size() + instruction.size() + user_prompt.size() + 16);
    out += kOpen;
    out += sys_message;
    out += ' ';
    out += instruction;
    out += " [/INST] ";
    out += user_prompt;
    out += kClose;
    return out;
}

InstructionSlots parse_instruction(std::string_view rendered, std::string_view sys_message) {
    auto fail = [](const char* why) { return Error(Errc::parse_error, std::string("instruction string: ") + why); };
    if (!rendered.starts_with(kOpen)) throw fail("missing <s>[INST] prefix");
    if (!rendered.ends_with(kClose)) throw fail("missing </s> suffix");
    std::string_view body = rendered.substr(kOpen.size(), rendered.size() - kOpen.size() - kClose.size());
    if (!body.starts_with(sys_message) || body.size() <= sys_message.size() || body[sys_message.size()] != ' ') {
        throw fail("system message does not match");
    }
    body.remove_prefix(sys_message.size() + 1);
    const auto mid = body.find(kMid);
    if (mid == std::string_view::npos || mid == 0 || body[mid - 1] != ' ') throw fail("missing [/INST] delimiter");
    if (body.find(kMid, mid + 1) != std::string_view::npos) throw fail("repeated [/INST] delimiter");
    const auto after = mid + kMid.size();
    if (after >= body.size() || body[after] != ' ') throw fail("no space after [/INST]");
    return InstructionSlots{std::string(sys_message), std::string(body.substr(0, mid - 1)),
                            std::string(body.substr(after + 1))};
}

// ---------------------------------------------------------------------------
// Training config

namespace {

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw Error(Errc::invalid_argument, "unformattable value");
    return std::string(buf.data(), ptr);
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

double parse_double(std::string_view v) {
    double out = 0.0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw Error(Errc::parse_error, "not a number: " + std::string(v));
    }
    return out;
}

int parse_int(std::string_view v) {
    int out = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw Error(Errc::parse_error, "not an integer: " + std::string(v));
    }
    return out;
}

std::string parse_string(std::string_view v) {
    if (v.size() < 2 || v.front() != '"' || v.back() != '"') {
        throw Error(Errc::parse_error, "expected a quoted string: " + std::string(v));
    }
    return std::string(v.substr(1, v.size() - 2));
}

using Field = std::pair<std::function<std::string(const HyperparameterProfile&)>,
                        std::function<void(HyperparameterProfile&, std::string_view)>>;

const std::vector<std::pair<std::string_view, Field>>& config_fields() {
    using P = HyperparameterProfile;
    static const std::vector<std::pair<std::string_view, Field>> fields = {
        {"train_batch", {[](const P& p) { return std::to_string(p.train_batch); },
                         [](P& p, std::string_view v) { p.train_batch = parse_int(v); }}},
        {"eval_batch", {[](const P& p) { return std::to_string(p.eval_batch); },
                        [](P& p, std::string_view v) { p.eval_batch = parse_int(v); }}},
        {"grad_accum_steps", {[](const P& p) { return std::to_string(p.grad_accum_steps); },
                              [](P& p, std::string_view v) { p.grad_accum_steps = parse_int(v); }}},
        {"max_grad_norm", {[](const P& p) { return format_double(p.max_grad_norm); },
                           [](P& p, std::string_view v) { p.max_grad_norm = parse_double(v); }}},
        {"learning_rate", {[](const P& p) { return format_double(p.learning_rate); },
                           [](P& p, std::string_view v) { p.learning_rate = parse_double(v); }}},
        {"weight_decay", {[](const P& p) { return format_double(p.weight_decay); },
                          [](P& p, std::string_view v) { p.weight_decay = parse_double(v); }}},
        {"optimizer", {[](const P& p) { return quote(p.optimizer); },
                       [](P& p, std::string_view v) { p.optimizer = parse_string(v); }}},
        {"lr_scheduler", {[](const P& p) { return quote(p.lr_scheduler); },
                          [](P& p, std::string_view v) { p.lr_scheduler = parse_string(v); }}},
        {"warmup_ratio", {[](const P& p) { return format_double(p.warmup_ratio); },
                          [](P& p, std::string_view v) { p.warmup_ratio = parse_double(v); }}},
        {"max_seq_len", {[](const P& p) { return std::to_string(p.max_seq_len); },
                         [](P& p, std::string_view v) { p.max_seq_len = parse_int(v); }}},
        {"epochs", {[](const P& p) { return std::to_string(p.epochs); },
                    [](P& p, std::string_view v) { p.epochs = parse_int(v); }}},
        {"lora_rank", {[](const P& p) { return std::to_string(p.lora_rank); },
                       [](P& p, std::string_view v) { p.lora_rank = parse_int(v); }}},
        {"lora_alpha", {[](const P& p) { return std::to_string(p.lora_alpha); },
                        [](P& p, std::string_view v) { p.lora_alpha = parse_int(v); }}},
        {"lora_dropout", {[](const P& p) { return format_double(p.lora_dropout); },
                          [](P& p, std::string_view v) { p.lora_dropout = parse_double(v); }}},
    };
    return fields;
}

}  // namespace

std::string emit_training_config(const HyperparameterProfile& profile) {
    validate(profile);
    std::string out;
    for (const auto& [key, field] : config_fields()) {
        out += std::string(key) + " = " + field.first(profile) + "\n";
    }
    return out;
}

HyperparameterProfile parse_training_config(std::string_view content) {
    HyperparameterProfile p;
    for (const auto& raw : text::split_lines(content)) {
        const std::string line = text::trim(raw);
        if (line.empty() || line.starts_with('#')) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(Errc::parse_error, "expected key = value: " + line);
        const std::string key = text::trim(std::string_view(line).substr(0, eq));
        const std::string value = text::trim(std::string_view(line).substr(eq + 1));
        const auto& fields = config_fields();
        auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) { return f.first == key; });
        if (it == fields.end()) throw Error(Errc::parse_error, "unknown config key: " + key);
        it->second.second(p, value);
    }
    validate(p);
    return p;
}

}  // namespace benign::formatter
