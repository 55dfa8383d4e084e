#pragma once

// Line-delimited JSON files: strict readers for inputs, a crash-tolerant
// reader for append-only logs, and a serialized appender.

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include "benign/json.hpp"

namespace benign::jsonl {

// Every non-blank line must parse (Errc::parse_error names the line).
// Missing file is Errc::unreadable_file.
std::vector<Json> read_all(const std::filesystem::path& path);

struct LogContents {
    std::vector<Json> entries;
    // Set when a partially written final line was found (and dropped if repaired).
    bool torn_tail = false;
};

// Reads an append-only log. A malformed final line counts as a torn write;
// when `repair` is true the file is truncated back to the last complete line.
// A malformed line anywhere else is Errc::corrupt_log. A missing file reads
// as empty.
LogContents read_log(const std::filesystem::path& path, bool repair);

// Writes the whole file via a temporary and rename.
void write_all(const std::filesystem::path& path, const std::vector<Json>& entries);
void write_text(const std::filesystem::path& path, const std::string& content);
std::string read_text(const std::filesystem::path& path);

// Appends one line per call, flushed before returning. Thread-safe.
class Appender {
public:
    explicit Appender(const std::filesystem::path& path);

    void append(const Json& entry);
    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mu_;
    std::ofstream out_;
};

}  // namespace benign::jsonl
