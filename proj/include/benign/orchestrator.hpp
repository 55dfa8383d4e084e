#pragma once

// Persistence and run manifests.

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "benign/core.hpp"
#include "benign/jsonl.hpp"

namespace benign::orchestrator {

using WarningSink = std::function<void(const std::string&)>;

// Append-only line-delimited log with one writer thread. On open a torn final
// line is truncated (and reported through warn); a malformed line anywhere
// else is Errc::corrupt_log. append() returns once the line is flushed.
class JsonlLog {
public:
    explicit JsonlLog(std::filesystem::path path, const WarningSink& warn = {});
    ~JsonlLog();

    JsonlLog(const JsonlLog&) = delete;
    JsonlLog& operator=(const JsonlLog&) = delete;

    void append(Json entry);
    std::shared_ptr<const std::vector<Json>> snapshot() const;
    std::size_t size() const { return snapshot()->size(); }
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    struct Pending {
        Json entry;
        std::promise<void> done;
    };

    void run(std::stop_token stop);

    std::filesystem::path path_;
    std::unique_ptr<jsonl::Appender> appender_;
    mutable std::mutex snap_mu_;
    std::shared_ptr<const std::vector<Json>> snapshot_;
    std::mutex queue_mu_;
    std::condition_variable_any queue_cv_;
    std::deque<Pending> queue_;
    std::jthread writer_;
};

enum class Stage { annotate, review, format, evaluate, demographics, human_eval };

std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view s);

struct FileDigest {
    std::string path;
    std::string sha256;

    friend bool operator==(const FileDigest&, const FileDigest&) = default;
};

// Inputs, config and outputs of one stage run. Sealing fixes the run id and a
// digest over the whole manifest; any later mutation is Errc::sealed_manifest.
class RunManifest {
public:
    RunManifest(Stage stage, std::string started_at);

    void add_input(const std::filesystem::path& path);
    void add_output(const std::filesystem::path& path);
    void set_config(Json config);
    void seal(std::string finished_at);

    bool sealed() const noexcept { return seal_.has_value(); }
    // True when sealed and the seal digest matches the contents.
    bool verify() const;

    Stage stage() const noexcept { return stage_; }
    const std::string& run_id() const noexcept { return run_id_; }
    const std::vector<FileDigest>& inputs() const noexcept { return inputs_; }
    const std::vector<FileDigest>& outputs() const noexcept { return outputs_; }
    const Json& config() const noexcept { return config_; }
    const std::string& started_at() const noexcept { return started_at_; }
    const std::string& finished_at() const noexcept { return finished_at_; }

    Json to_json() const;
    static RunManifest from_json(const Json& j);

    // Writes <dir>/<run_id>.json and returns the path. Requires a seal.
    std::filesystem::path write(const std::filesystem::path& dir) const;

private:
    void check_open() const;
    Json body() const;

    Stage stage_;
    std::string run_id_;
    std::vector<FileDigest> inputs_;
    std::vector<FileDigest> outputs_;
    Json config_ = Json::object();
    std::string started_at_;
    std::string finished_at_;
    std::optional<std::string> seal_;
};

std::vector<RunManifest> load_manifests(const std::filesystem::path& dir);

// Every input digest must be the output of another manifest that can itself be
// traced back, or one of the declared external digests. Returns one message per
// broken link and per manifest that fails verify(); empty means the chain holds.
std::vector<std::string> verify_chain(const std::vector<RunManifest>& manifests,
                                      const std::set<std::string>& external_digests);

}  // namespace benign::orchestrator
