#pragma once

// Desk-scale synthetic sustained-vowel dataset with known ground truth.
//
// Each clip is a three-harmonic glottal-like tone whose period sequence is
// perturbed by a per-clip jitter level and whose per-period amplitude carries
// an independent shimmer level; aspiration noise grows with the jitter level.
// Severity follows 100 * (1 - exp(-20 * jitter)) plus N(0, 5), clipped to
// [0, 100]; the other five attributes are noisy functions of severity (and of
// shimmer for roughness).

#include "capev/audio_io.hpp"
#include "capev/embedding.hpp"
#include "capev/manifest.hpp"
#include "capev/rng.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

namespace capev {

struct SyntheticOptions {
    std::size_t n = 200;
    std::uint64_t seed = 1;
    int sample_rate = 16000;
    double min_seconds = 0.8;
    double max_seconds = 1.2;
    double max_jitter = 0.12;  // bound of the per-clip period perturbation
    double max_shimmer = 0.08; // bound of the per-clip amplitude perturbation
    double severity_noise = 5.0;
    bool embeddings = true;    // also write 8x16 frame embeddings per clip
};

struct SyntheticTruth {
    std::string id;
    double jitter = 0.0; // period perturbation half-width, as a ratio
    double shimmer = 0.0;
    double f0 = 0.0;
    double noise_rms = 0.0;
};

struct SyntheticClip {
    AudioClip clip;
    SyntheticTruth truth;
    ManifestRow row;
    EmbeddingMatrix embedding;
};

inline SyntheticClip synthesize_clip(std::size_t index, const SyntheticOptions& opt) {
    Rng rng(derive_seed(opt.seed, index));
    SyntheticClip s;
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04zu", index);
    s.truth.id = id;
    s.row.id = id;
    s.row.sex = rng.uniform() < 0.5 ? Sex::Male : Sex::Female;
    s.row.age = std::round(rng.uniform(20.0, 80.0));
    s.truth.f0 = s.row.sex == Sex::Male ? rng.uniform(100.0, 150.0) : rng.uniform(170.0, 220.0);
    s.truth.jitter = rng.uniform(0.0, opt.max_jitter);
    s.truth.shimmer = rng.uniform(0.0, opt.max_shimmer);
    const double amp = rng.uniform(0.3, 0.6);
    s.truth.noise_rms = amp * (0.01 + 0.12 * s.truth.jitter / opt.max_jitter);
    const double seconds = rng.uniform(opt.min_seconds, opt.max_seconds);

    const int rate = opt.sample_rate;
    const auto n = static_cast<std::size_t>(std::lround(seconds * rate));
    s.clip.sample_rate = rate;
    s.clip.samples.resize(n);
    const double norm = 1.0 / 1.5;
    double period = 0.0, amp_k = 0.0, phase = 1.0; // phase in cycles; >= 1 starts a new period
    for (std::size_t i = 0; i < n; ++i) {
        if (phase >= 1.0) {
            phase -= 1.0;
            period = (1.0 + s.truth.jitter * rng.uniform(-1.0, 1.0)) / s.truth.f0;
            amp_k = amp * (1.0 + s.truth.shimmer * rng.uniform(-1.0, 1.0));
        }
        const double w = 2.0 * std::numbers::pi * phase;
        s.clip.samples[i] = amp_k * norm * (std::sin(w) + 0.5 * std::sin(2 * w) + 0.33 * std::sin(3 * w)) +
                            s.truth.noise_rms * rng.normal();
        phase += 1.0 / (period * rate);
    }

    auto clip100 = [](double v) { return std::clamp(v, 0.0, 100.0); };
    const double severity = clip100(100.0 * (1.0 - std::exp(-20.0 * s.truth.jitter)) + opt.severity_noise * rng.normal());
    s.row.scores[0] = severity;
    s.row.scores[1] = clip100(0.8 * severity + 8.0 * rng.normal());
    s.row.scores[2] = clip100(0.5 * severity + 10.0 * rng.normal() + 10.0);
    s.row.scores[3] = clip100(0.4 * severity + 10.0 * rng.normal() + 10.0);
    s.row.scores[4] = clip100(0.6 * severity + 300.0 * s.truth.shimmer + 5.0 * rng.normal());
    s.row.scores[5] = clip100(0.7 * severity + 7.0 * rng.normal());

    if (opt.embeddings) {
        // Stand-in for an upstream extractor: a fixed random mix of the
        // latent factors per frame, plus frame noise.
        Rng mix(derive_seed(opt.seed, 0xE3B0ull));
        Matrix W(16, 4);
        for (auto& v : W.reshaped()) v = mix.normal();
        const Vector latent = (Vector(4) << s.truth.jitter / opt.max_jitter, s.truth.shimmer / opt.max_shimmer,
                               (s.truth.f0 - 160.0) / 60.0, severity / 100.0).finished();
        s.embedding.source = "synthetic";
        s.embedding.values.resize(8, 16);
        for (Eigen::Index t = 0; t < 8; ++t)
            for (Eigen::Index c = 0; c < 16; ++c) s.embedding.values(t, c) = W.row(c).dot(latent) + 0.1 * rng.normal();
    }
    return s;
}

/// Writes wavs/<id>.wav, embeddings/<id>.emb, manifest.csv and truth.csv
/// under `dir`; returns the manifest rows.
inline std::vector<ManifestRow> write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticOptions& opt = {}) {
    if (opt.n < 1) throw Error(ErrorCode::ConfigInvalid, "synthetic dataset needs n >= 1");
    std::filesystem::create_directories(dir / "wavs");
    if (opt.embeddings) std::filesystem::create_directories(dir / "embeddings");
    std::vector<ManifestRow> rows;
    std::string truth = "id,jitter,shimmer,f0,noise_rms\n";
    for (std::size_t i = 0; i < opt.n; ++i) {
        auto s = synthesize_clip(i, opt);
        s.row.wav_path = dir / "wavs" / (s.row.id + ".wav");
        write_wav(s.row.wav_path, s.clip, WavEncoding::Float32);
        if (opt.embeddings) {
            s.row.embedding_path = dir / "embeddings" / (s.row.id + ".emb");
            write_embedding(s.row.embedding_path, s.embedding);
        }
        truth += s.truth.id + "," + detail::exact(s.truth.jitter) + "," + detail::exact(s.truth.shimmer) + "," +
                 detail::exact(s.truth.f0) + "," + detail::exact(s.truth.noise_rms) + "\n";
        rows.push_back(std::move(s.row));
    }
    detail::write_text(dir / "manifest.csv", format_manifest(rows, dir));
    detail::write_text(dir / "truth.csv", truth);
    return rows;
}

} // namespace capev
