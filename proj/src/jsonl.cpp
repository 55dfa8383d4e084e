#include "benign/jsonl.hpp"

#include <sstream>

#include "benign/error.hpp"
#include "benign/text.hpp"

namespace benign::jsonl {

namespace fs = std::filesystem;

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::unreadable_file, path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<Json> read_all(const fs::path& path) {
    const std::string content = read_text(path);
    std::vector<Json> out;
    std::size_t line_no = 0;
    for (const auto& line : text::split_lines(content)) {
        ++line_no;
        if (text::is_blank(line)) continue;
        try {
            out.push_back(parse_json(line));
        } catch (const Error& e) {
            throw Error(Errc::parse_error, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

LogContents read_log(const fs::path& path, bool repair) {
    LogContents result;
    if (!fs::exists(path)) return result;
    const std::string content = read_text(path);

    std::size_t pos = 0;
    std::size_t good_end = 0;  // byte offset just past the last complete line
    std::size_t line_no = 0;
    bool needs_newline = false;
    while (pos < content.size()) {
        const auto nl = content.find('\n', pos);
        const bool last = nl == std::string::npos;
        const std::string_view line(content.data() + pos, (last ? content.size() : nl) - pos);
        ++line_no;
        if (text::is_blank(line)) {
            if (!last) good_end = nl + 1;
            pos = last ? content.size() : nl + 1;
            continue;
        }
        try {
            result.entries.push_back(parse_json(line));
            good_end = last ? content.size() : nl + 1;
            needs_newline = last;
        } catch (const Error&) {
            const bool final_line = last || text::is_blank(std::string_view(content).substr(nl + 1));
            if (!final_line) {
                throw Error(Errc::corrupt_log, path.string() + ": malformed line " + std::to_string(line_no));
            }
            result.torn_tail = true;
            break;
        }
        pos = last ? content.size() : nl + 1;
    }

    if (repair && (result.torn_tail || needs_newline)) {
        std::string kept = content.substr(0, good_end);
        if (!kept.empty() && kept.back() != '\n') kept.push_back('\n');
        write_text(path, kept);
    }
    return result;
}

void write_text(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error(Errc::io_error, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw Error(Errc::io_error, "write failed for " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_all(const fs::path& path, const std::vector<Json>& entries) {
    std::string content;
    for (const auto& e : entries) {
        content += dump_line(e);
        content.push_back('\n');
    }
    write_text(path, content);
}

Appender::Appender(const fs::path& path) : path_(path) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error(Errc::io_error, "cannot open " + path_.string() + " for append");
}

void Appender::append(const Json& entry) {
    const std::string line = dump_line(entry) + "\n";
    std::lock_guard lock(mu_);
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
    out_.flush();
    if (!out_) throw Error(Errc::io_error, "append failed for " + path_.string());
}

}  // namespace benign::jsonl
