#pragma once

// Text embedding files:
//
//   embedding rows=2 cols=3 source=wav2vec2
//   1 2 3
//   4 5 6
//
// One frame per line; pooled embeddings use rows=1.

#include "capev/error.hpp"
#include "capev/standardizer.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace capev {

struct EmbeddingMatrix {
    Matrix values; // frames x channels
    std::string source;

    Eigen::Index frames() const noexcept { return values.rows(); }
    Eigen::Index channels() const noexcept { return values.cols(); }
};

namespace detail {

inline long header_field(const std::string& header, const std::string& key) {
    const auto pos = header.find(" " + key + "=");
    if (pos == std::string::npos) throw Error(ErrorCode::BadFormat, "embedding header lacks '" + key + "='");
    const char* first = header.data() + pos + key.size() + 2;
    long v = 0;
    const auto [end, ec] = std::from_chars(first, header.data() + header.size(), v);
    if (ec != std::errc{} || v < 1 || (end != header.data() + header.size() && *end != ' '))
        throw Error(ErrorCode::BadFormat, "bad '" + key + "' in embedding header");
    return v;
}

} // namespace detail

inline EmbeddingMatrix parse_embedding(std::istream& in, Eigen::Index expected_channels = 0,
                                       const std::string& what = "embedding") {
    std::string header;
    if (!std::getline(in, header) || header.rfind("embedding ", 0) != 0)
        throw Error(ErrorCode::BadFormat, what + ": missing 'embedding' header line");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    const long rows = detail::header_field(header, "rows");
    const long cols = detail::header_field(header, "cols");
    EmbeddingMatrix e;
    if (const auto s = header.find(" source="); s != std::string::npos) {
        e.source = header.substr(s + 8);
        e.source = e.source.substr(0, e.source.find(' '));
    }
    if (expected_channels > 0 && cols != expected_channels)
        throw Error(ErrorCode::ShapeMismatch, what + ": " + std::to_string(cols) + " channels, dataset has " +
                                                  std::to_string(expected_channels));
    e.values.resize(rows, cols);
    std::string line;
    for (long r = 0; r < rows; ++r) {
        if (!std::getline(in, line)) throw Error(ErrorCode::BadFormat, what + ": expected " + std::to_string(rows) + " rows");
        const char* p = line.data();
        const char* end = line.data() + line.size();
        for (long c = 0; c < cols; ++c) {
            while (p < end && (*p == ' ' || *p == '\t' || *p == ',')) ++p;
            double v = 0.0;
            const auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc{})
                throw Error(ErrorCode::BadFormat, what + ": row " + std::to_string(r) + " has fewer than " +
                                                      std::to_string(cols) + " numbers");
            if (!std::isfinite(v))
                throw Error(ErrorCode::BadFormat, what + ": non-finite value at row " + std::to_string(r));
            e.values(r, c) = v;
            p = next;
        }
        while (p < end && (*p == ' ' || *p == '\t' || *p == ',' || *p == '\r')) ++p;
        if (p != end) throw Error(ErrorCode::BadFormat, what + ": row " + std::to_string(r) + " has extra values");
    }
    while (std::getline(in, line))
        if (line.find_first_not_of(" \t\r") != std::string::npos)
            throw Error(ErrorCode::BadFormat, what + ": more rows than declared");
    return e;
}

inline EmbeddingMatrix load_embedding(const std::filesystem::path& path, Eigen::Index expected_channels = 0) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open embedding file " + path.string());
    return parse_embedding(in, expected_channels, path.string());
}

inline std::string format_embedding(const EmbeddingMatrix& e) {
    std::string out = "embedding rows=" + std::to_string(e.frames()) + " cols=" + std::to_string(e.channels()) +
                      " source=" + (e.source.empty() ? "unknown" : e.source) + "\n";
    char buf[32];
    for (Eigen::Index r = 0; r < e.frames(); ++r) {
        for (Eigen::Index c = 0; c < e.channels(); ++c) {
            const auto res = std::to_chars(buf, buf + sizeof buf, e.values(r, c));
            if (c) out += ' ';
            out.append(buf, res.ptr);
        }
        out += '\n';
    }
    return out;
}

inline void write_embedding(const std::filesystem::path& path, const EmbeddingMatrix& e) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << format_embedding(e);
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Loads every file in order; the first file fixes the channel count.
inline std::vector<EmbeddingMatrix> load_embeddings(const std::vector<std::filesystem::path>& paths) {
    std::vector<EmbeddingMatrix> out;
    out.reserve(paths.size());
    for (const auto& p : paths) out.push_back(load_embedding(p, out.empty() ? 0 : out.front().channels()));
    return out;
}

} // namespace capev
