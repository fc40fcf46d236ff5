#pragma once

// Manifest -> feature table: read, resample to the working rate, normalize to
// the dataset's mean length, extract the seven predictors. Rows that fail are
// collected and skipped.
//
// Features CSV:
//
//   id,zcr,jitter,jitter_abs,shimmer,hnr,sex,age,severity,...,strain[,embedding_path]

#include "capev/audio_io.hpp"
#include "capev/features.hpp"
#include "capev/manifest.hpp"
#include "capev/parallel.hpp"
#include "capev/report.hpp"
#include "capev/standardizer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace capev {

struct DatasetRow {
    std::string id;
    FeatureVector features;
    CapevScores scores;
    std::filesystem::path embedding_path;
};

struct RowFailure {
    std::string id;
    std::string reason;
};

struct Dataset {
    std::vector<DatasetRow> rows;
    std::vector<RowFailure> failures;
    int sample_rate = 8000;
    std::size_t target_length = 0;

    Matrix feature_matrix() const {
        Matrix X(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(FeatureVector::size));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto a = rows[i].features.to_array();
            for (std::size_t j = 0; j < a.size(); ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = a[j];
        }
        return X;
    }

    Vector targets(std::size_t attribute) const {
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = rows[i].scores[attribute];
        return y;
    }
};

struct BuildOptions {
    int sample_rate = 8000;
    PitchOptions pitch;
    unsigned threads = 1;
};

/// Loads and resamples one manifest row, or explains why it cannot.
inline AudioClip load_working_clip(const ManifestRow& row, int sample_rate) {
    if (!std::filesystem::exists(row.wav_path))
        throw Error(ErrorCode::IoError, "missing WAV file " + row.wav_path.filename().string());
    auto clip = read_wav(row.wav_path);
    return clip.sample_rate == sample_rate ? clip : resample(clip, sample_rate);
}

inline Dataset build_dataset(const std::vector<ManifestRow>& manifest, const BuildOptions& opt = {}) {
    if (manifest.empty()) throw Error(ErrorCode::ManifestInvalid, "manifest has no rows");
    if (opt.sample_rate <= 0) throw Error(ErrorCode::ConfigInvalid, "sample_rate must be positive");
    const std::size_t n = manifest.size();
    std::vector<std::optional<AudioClip>> clips(n);
    std::vector<std::string> errors(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        try {
            clips[i] = load_working_clip(manifest[i], opt.sample_rate);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });

    Dataset ds;
    ds.sample_rate = opt.sample_rate;
    std::vector<AudioClip> loaded;
    for (const auto& c : clips)
        if (c) loaded.push_back(*c);
    if (loaded.empty()) {
        for (std::size_t i = 0; i < n; ++i) ds.failures.push_back({manifest[i].id, errors[i]});
        return ds;
    }
    ds.target_length = mean_length(loaded);
    loaded.clear();

    std::vector<std::optional<FeatureVector>> feats(n);
    parallel_for(n, opt.threads, [&](std::size_t i) {
        if (!clips[i]) return;
        try {
            const auto clip = normalize_length(*clips[i], ds.target_length);
            feats[i] = extract_feature_vector(clip, manifest[i].age, manifest[i].sex, opt.pitch);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < n; ++i) {
        if (feats[i])
            ds.rows.push_back({manifest[i].id, *feats[i], manifest[i].scores, manifest[i].embedding_path});
        else
            ds.failures.push_back({manifest[i].id, errors[i]});
    }
    return ds;
}

inline std::string format_features_csv(const Dataset& ds, const std::filesystem::path& base_dir = {}) {
    bool any_embedding = false;
    for (const auto& r : ds.rows) any_embedding |= !r.embedding_path.empty();
    std::string s = "id";
    for (auto name : FeatureVector::names) s += "," + std::string(name);
    for (auto a : kAttributes) s += "," + std::string(a);
    if (any_embedding) s += ",embedding_path";
    s += "\n";
    for (const auto& r : ds.rows) {
        s += r.id;
        for (double v : r.features.to_array()) s += "," + detail::exact(v);
        for (double v : r.scores.values) s += "," + detail::exact(v);
        if (any_embedding) {
            const auto rel = base_dir.empty() ? r.embedding_path : r.embedding_path.lexically_relative(base_dir);
            s += "," + (r.embedding_path.empty() ? std::string() : rel.generic_string());
        }
        s += "\n";
    }
    return s;
}

inline std::string format_failures_csv(const Dataset& ds) {
    std::string s = "id,reason\n";
    for (const auto& f : ds.failures) {
        std::string reason = f.reason;
        for (char& c : reason)
            if (c == ',' || c == '\n') c = ';';
        s += f.id + "," + reason + "\n";
    }
    return s;
}

inline Dataset parse_features_csv(std::istream& in, const std::filesystem::path& base_dir = {}) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorCode::ManifestInvalid, "features file is empty");
    const auto header = detail::split_csv(line);
    std::vector<std::string> expected{"id"};
    for (auto name : FeatureVector::names) expected.emplace_back(name);
    for (auto a : kAttributes) expected.emplace_back(a);
    const bool with_embedding = header.size() == expected.size() + 1 && header.back() == "embedding_path";
    if (!(header.size() == expected.size() || with_embedding) ||
        !std::equal(expected.begin(), expected.end(), header.begin()))
        throw Error(ErrorCode::ManifestInvalid, "unexpected features header");
    Dataset ds;
    std::set<std::string> seen;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = detail::split_csv(line);
        const std::string where = "features line " + std::to_string(lineno) + ": ";
        if (f.size() != header.size()) throw Error(ErrorCode::ManifestInvalid, where + "wrong field count");
        DatasetRow r;
        r.id = f[0];
        if (r.id.empty() || !seen.insert(r.id).second)
            throw Error(ErrorCode::ManifestInvalid, where + "empty or duplicate id");
        std::array<double, FeatureVector::size> a{};
        for (std::size_t j = 0; j < a.size(); ++j)
            if (!detail::parse_double(f[1 + j], a[j])) throw Error(ErrorCode::ManifestInvalid, where + "bad number '" + f[1 + j] + "'");
        r.features = FeatureVector::from_array(a);
        for (std::size_t k = 0; k < kAttributes.size(); ++k) {
            const auto& field = f[1 + a.size() + k];
            if (!detail::parse_double(field, r.scores[k]) || r.scores[k] < 0.0 || r.scores[k] > 100.0)
                throw Error(ErrorCode::ManifestInvalid, where + "bad score '" + field + "'");
        }
        if (with_embedding && !f.back().empty()) r.embedding_path = base_dir / f.back();
        ds.rows.push_back(std::move(r));
    }
    if (ds.rows.empty()) throw Error(ErrorCode::ManifestInvalid, "features file has no rows");
    return ds;
}

inline Dataset load_features_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ManifestInvalid, "cannot open features file " + path.string());
    return parse_features_csv(in, path.parent_path());
}

} // namespace capev
