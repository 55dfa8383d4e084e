#include "benign/orchestrator.hpp"

#include <algorithm>
#include <tuple>

#include "benign/digest.hpp"

namespace benign::orchestrator {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// JsonlLog

JsonlLog::JsonlLog(fs::path path, const WarningSink& warn) : path_(std::move(path)) {
    auto contents = jsonl::read_log(path_, true);
    if (contents.torn_tail && warn) warn(path_.string() + ": torn final line dropped");
    snapshot_ = std::make_shared<const std::vector<Json>>(std::move(contents.entries));
    appender_ = std::make_unique<jsonl::Appender>(path_);
    writer_ = std::jthread([this](std::stop_token stop) { run(stop); });
}

JsonlLog::~JsonlLog() {
    writer_.request_stop();
    queue_cv_.notify_all();
}

void JsonlLog::append(Json entry) {
    std::future<void> done;
    {
        std::lock_guard lock(queue_mu_);
        Pending p{std::move(entry), {}};
        done = p.done.get_future();
        queue_.push_back(std::move(p));
    }
    queue_cv_.notify_one();
    done.get();
}

std::shared_ptr<const std::vector<Json>> JsonlLog::snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snapshot_;
}

void JsonlLog::run(std::stop_token stop) {
    for (;;) {
        Pending job;
        {
            std::unique_lock lock(queue_mu_);
            queue_cv_.wait(lock, stop, [&] { return !queue_.empty(); });
            if (queue_.empty()) return;
            job = std::move(queue_.front());
            queue_.pop_front();
        }
        try {
            appender_->append(job.entry);
            auto next = std::make_shared<std::vector<Json>>(*snapshot());
            next->push_back(std::move(job.entry));
            {
                std::lock_guard lock(snap_mu_);
                snapshot_ = std::move(next);
            }
            job.done.set_value();
        } catch (...) {
            job.done.set_exception(std::current_exception());
        }
    }
}

// ---------------------------------------------------------------------------
// Manifests

std::string_view to_string(Stage s) noexcept {
    switch (s) {
        case Stage::annotate: return "annotate";
        case Stage::review: return "review";
        case Stage::format: return "format";
        case Stage::evaluate: return "evaluate";
        case Stage::demographics: return "demographics";
        case Stage::human_eval: return "human-eval";
    }
    return "annotate";
}

Stage stage_from_string(std::string_view s) {
    for (Stage st : {Stage::annotate, Stage::review, Stage::format, Stage::evaluate, Stage::demographics,
                     Stage::human_eval}) {
        if (to_string(st) == s) return st;
    }
    throw Error(Errc::parse_error, "unknown stage: " + std::string(s));
}

namespace {

Json digests_json(const std::vector<FileDigest>& ds) {
    Json out = Json::array();
    for (const auto& d : ds) out.push_back(Json{{"path", d.path}, {"sha256", d.sha256}});
    return out;
}

std::vector<FileDigest> digests_from(const Json& j) {
    std::vector<FileDigest> out;
    for (const auto& d : j) out.push_back(FileDigest{require_string(d, "path"), require_string(d, "sha256")});
    return out;
}

}  // namespace

RunManifest::RunManifest(Stage stage, std::string started_at) : stage_(stage), started_at_(std::move(started_at)) {}

void RunManifest::check_open() const {
    if (sealed()) throw Error(Errc::sealed_manifest, "manifest " + run_id_ + " is sealed");
}

void RunManifest::add_input(const fs::path& path) {
    check_open();
    inputs_.push_back(FileDigest{path.generic_string(), sha256_file(path)});
}

void RunManifest::add_output(const fs::path& path) {
    check_open();
    outputs_.push_back(FileDigest{path.generic_string(), sha256_file(path)});
}

void RunManifest::set_config(Json config) {
    check_open();
    config_ = std::move(config);
}

Json RunManifest::body() const {
    return Json{{"run_id", run_id_},
                {"stage", to_string(stage_)},
                {"inputs", digests_json(inputs_)},
                {"config", config_},
                {"outputs", digests_json(outputs_)},
                {"started_at", started_at_},
                {"finished_at", finished_at_}};
}

void RunManifest::seal(std::string finished_at) {
    check_open();
    finished_at_ = std::move(finished_at);
    Json identity{{"stage", to_string(stage_)}, {"inputs", digests_json(inputs_)}, {"config", config_}};
    run_id_ = std::string(to_string(stage_)) + "-" + sha256_hex(identity.dump()).substr(0, 16);
    seal_ = sha256_hex(body().dump());
}

bool RunManifest::verify() const { return seal_.has_value() && *seal_ == sha256_hex(body().dump()); }

Json RunManifest::to_json() const {
    Json j = body();
    j["seal"] = seal_ ? Json(*seal_) : Json(nullptr);
    return j;
}

RunManifest RunManifest::from_json(const Json& j) {
    RunManifest m(stage_from_string(require_string(j, "stage")), optional_string(j, "started_at"));
    m.run_id_ = require_string(j, "run_id");
    m.inputs_ = digests_from(require(j, "inputs"));
    m.outputs_ = digests_from(require(j, "outputs"));
    m.config_ = require(j, "config");
    m.finished_at_ = optional_string(j, "finished_at");
    if (auto it = j.find("seal"); it != j.end() && it->is_string()) m.seal_ = it->get<std::string>();
    return m;
}

fs::path RunManifest::write(const fs::path& dir) const {
    if (!sealed()) throw Error(Errc::invalid_argument, "only sealed manifests are written");
    const fs::path path = dir / (run_id_ + ".json");
    jsonl::write_text(path, to_json().dump(2) + "\n");
    return path;
}

std::vector<RunManifest> load_manifests(const fs::path& dir) {
    std::vector<fs::path> files;
    if (!fs::exists(dir)) return {};
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::vector<RunManifest> out;
    for (const auto& f : files) out.push_back(RunManifest::from_json(parse_json(jsonl::read_text(f))));
    std::stable_sort(out.begin(), out.end(), [](const RunManifest& a, const RunManifest& b) {
        return std::tie(a.finished_at(), a.run_id()) < std::tie(b.finished_at(), b.run_id());
    });
    return out;
}

std::vector<std::string> verify_chain(const std::vector<RunManifest>& manifests,
                                      const std::set<std::string>& external_digests) {
    std::vector<std::string> problems;
    std::set<std::string> known = external_digests;
    std::vector<const RunManifest*> pending;
    for (const auto& m : manifests) {
        if (!m.verify()) problems.push_back(m.run_id() + ": seal does not match contents");
        pending.push_back(&m);
    }
    // Settle the order by dependency; fixed-clock runs share timestamps.
    bool progressed = true;
    while (!pending.empty() && progressed) {
        progressed = false;
        for (auto it = pending.begin(); it != pending.end();) {
            const auto& ins = (*it)->inputs();
            const bool ready = std::all_of(ins.begin(), ins.end(),
                                           [&](const FileDigest& d) { return known.contains(d.sha256); });
            if (ready) {
                for (const auto& out : (*it)->outputs()) known.insert(out.sha256);
                it = pending.erase(it);
                progressed = true;
            } else {
                ++it;
            }
        }
    }
    for (const auto* m : pending) {
        for (const auto& in : m->inputs()) {
            if (!known.contains(in.sha256)) problems.push_back(m->run_id() + ": input " + in.path + " has no known origin");
        }
    }
    return problems;
}

}  // namespace benign::orchestrator
