#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "benign/gateway.hpp"

namespace testsupport {

inline std::filesystem::path fixture(const std::string& name) {
    return std::filesystem::path(BENIGN_FIXTURE_DIR) / name;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "benign") {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                (tag + "-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << content;
}

inline std::vector<std::string> lines_of(const std::filesystem::path& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

// Replays a fixed sequence of replies, then repeats the last one.
class ScriptedTransport final : public benign::gateway::Transport {
public:
    explicit ScriptedTransport(std::vector<benign::gateway::HttpReply> replies) : replies_(std::move(replies)) {}

    benign::gateway::HttpReply post(const std::string&) override {
        std::lock_guard lock(mu_);
        const auto i = std::min(calls_, replies_.size() - 1);
        ++calls_;
        return replies_[i];
    }

    std::size_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

private:
    std::vector<benign::gateway::HttpReply> replies_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
};

inline benign::gateway::BackendConfig mock_config() {
    benign::gateway::BackendConfig c;
    c.endpoint_url = "mock://";
    c.max_retries = 3;
    c.requests_per_minute = 100000;
    return c;
}

}  // namespace testsupport
