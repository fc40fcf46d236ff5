#pragma once

// Dataset manifest CSV:
//
//   id,wav_path,age,sex,severity,breathiness,pitch,loudness,roughness,strain[,embedding_path]
//
// sex is M or F; scores are the rater-averaged CAPE-V values on 0-100.
// Relative paths resolve against the manifest's directory. Fields are plain
// comma-separated values (no quoting).

#include "capev/error.hpp"
#include "capev/features.hpp"
#include "capev/report.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace capev {

struct ManifestRow {
    std::string id;
    std::filesystem::path wav_path;
    double age = 0.0;
    Sex sex = Sex::Male;
    CapevScores scores;
    std::filesystem::path embedding_path; // empty when absent
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    for (auto& f : out) {
        const auto b = f.find_first_not_of(" \t");
        const auto e = f.find_last_not_of(" \t");
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    if (s.empty()) return false;
    const char* first = s.data();
    if (*first == '+') ++first;
    const auto [end, ec] = std::from_chars(first, s.data() + s.size(), out);
    return ec == std::errc{} && end == s.data() + s.size() && std::isfinite(out);
}

/// Shortest text that parses back to the same double.
inline std::string exact(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace detail

inline constexpr std::string_view kManifestHeader =
    "id,wav_path,age,sex,severity,breathiness,pitch,loudness,roughness,strain";

/// Validates everything except file existence (checked when the row is used).
inline std::vector<ManifestRow> parse_manifest(std::istream& in, const std::filesystem::path& base_dir) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ManifestInvalid, "manifest is empty");
    const auto header = detail::split_csv(line);
    const auto expected = detail::split_csv(std::string(kManifestHeader));
    const bool with_embedding = header.size() == expected.size() + 1 && header.back() == "embedding_path";
    if (!std::equal(expected.begin(), expected.end(), header.begin(), header.begin() + static_cast<std::ptrdiff_t>(std::min(header.size(), expected.size()))) ||
        !(header.size() == expected.size() || with_embedding))
        throw Error(ErrorCode::ManifestInvalid, "manifest header must be '" + std::string(kManifestHeader) + "[,embedding_path]'");

    std::vector<ManifestRow> rows;
    std::set<std::string> seen;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = detail::split_csv(line);
        const std::string where = "manifest line " + std::to_string(lineno) + ": ";
        if (f.size() != header.size())
            throw Error(ErrorCode::ManifestInvalid, where + "expected " + std::to_string(header.size()) + " fields, got " +
                                                        std::to_string(f.size()));
        ManifestRow r;
        r.id = f[0];
        if (r.id.empty()) throw Error(ErrorCode::ManifestInvalid, where + "empty id");
        if (!seen.insert(r.id).second) throw Error(ErrorCode::ManifestInvalid, where + "duplicate id '" + r.id + "'");
        if (f[1].empty()) throw Error(ErrorCode::ManifestInvalid, where + "empty wav_path");
        r.wav_path = base_dir / f[1];
        if (!detail::parse_double(f[2], r.age) || r.age < 0.0)
            throw Error(ErrorCode::ManifestInvalid, where + "bad age '" + f[2] + "'");
        if (f[3] == "M" || f[3] == "m") r.sex = Sex::Male;
        else if (f[3] == "F" || f[3] == "f") r.sex = Sex::Female;
        else throw Error(ErrorCode::ManifestInvalid, where + "sex must be M or F, got '" + f[3] + "'");
        for (std::size_t a = 0; a < kAttributes.size(); ++a) {
            double v = 0.0;
            if (!detail::parse_double(f[4 + a], v) || v < 0.0 || v > 100.0)
                throw Error(ErrorCode::ManifestInvalid,
                            where + std::string(kAttributes[a]) + " must be a number in [0, 100], got '" + f[4 + a] + "'");
            r.scores[a] = v;
        }
        if (with_embedding && !f[10].empty()) r.embedding_path = base_dir / f[10];
        rows.push_back(std::move(r));
    }
    if (rows.empty()) throw Error(ErrorCode::ManifestInvalid, "manifest has no rows");
    return rows;
}

inline std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ManifestInvalid, "cannot open manifest " + path.string());
    return parse_manifest(in, path.parent_path());
}

/// Paths are written relative to `base_dir` when they live below it.
inline std::string format_manifest(const std::vector<ManifestRow>& rows, const std::filesystem::path& base_dir) {
    bool any_embedding = false;
    for (const auto& r : rows) any_embedding |= !r.embedding_path.empty();
    auto rel = [&](const std::filesystem::path& p) {
        const auto r = p.lexically_relative(base_dir);
        return (r.empty() || *r.begin() == "..") ? p.generic_string() : r.generic_string();
    };
    std::string s(kManifestHeader);
    if (any_embedding) s += ",embedding_path";
    s += "\n";
    for (const auto& r : rows) {
        s += r.id + "," + rel(r.wav_path) + "," + detail::exact(r.age) + "," + (r.sex == Sex::Female ? "F" : "M");
        for (double v : r.scores.values) s += "," + detail::exact(v);
        if (any_embedding) s += "," + (r.embedding_path.empty() ? std::string() : rel(r.embedding_path));
        s += "\n";
    }
    return s;
}

} // namespace capev
