#pragma once

// Shared plumbing: error type, string helpers, and round-trip-exact
// decimal rendering used by every serializer in the library.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace hondge {

// ─── Errors ──────────────────────────────────────────────────────
// Two kinds so the CLI can map them to distinct exit codes:
//   validation → bad input (flags, malformed data files, bad config) → exit 1
//   runtime    → I/O failures and internal faults                    → exit 2
struct Error : std::runtime_error {
    enum class Kind { validation, runtime };
    Kind kind;
    Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline Error validation_error(const std::string& msg) {
    return Error(Error::Kind::validation, msg);
}
inline Error runtime_error(const std::string& msg) {
    return Error(Error::Kind::runtime, msg);
}

// ─── String helpers ──────────────────────────────────────────────

inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

inline std::vector<std::string_view> split_char(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == sep) {
            out.push_back(s.substr(start, i - start));
            start = i + 1;
        }
    }
    return out;
}

inline std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

template <typename It>
std::string join(It first, It last, const std::string& sep) {
    std::string out;
    for (It it = first; it != last; ++it) {
        if (it != first) out += sep;
        out += *it;
    }
    return out;
}

// ─── Numbers ─────────────────────────────────────────────────────
// Shortest decimal that round-trips to the exact same double, so that
// serialize → deserialize is bit-identical (graph weights, checkpoints).

inline std::string render_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& what) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw validation_error("bad number for " + what + ": '" + std::string(s) + "'");
    return v;
}

inline long parse_long(std::string_view s, const std::string& what) {
    long v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
        throw validation_error("bad integer for " + what + ": '" + std::string(s) + "'");
    return v;
}

// ─── Files ───────────────────────────────────────────────────────

inline std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw runtime_error("cannot open file: " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    if (in.bad()) throw runtime_error("I/O error reading: " + path);
    return lines;
}

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw runtime_error("cannot open file for writing: " + path);
    out << content;
    if (!out) throw runtime_error("I/O error writing: " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw runtime_error("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw runtime_error("I/O error reading: " + path);
    return ss.str();
}

} // namespace hondge
