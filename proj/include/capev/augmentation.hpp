#pragma once

#include "capev/audio_io.hpp"
#include "capev/error.hpp"
#include "capev/fft.hpp"
#include "capev/rng.hpp"

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace capev {

/// Noise families, in augmentation enumeration order.
enum class NoiseKind { White, Blue, Violet, Brown, Pink, Babble1, Babble2 };

inline constexpr std::array<NoiseKind, 7> kNoiseKinds{NoiseKind::White,  NoiseKind::Blue,
                                                      NoiseKind::Violet, NoiseKind::Brown,
                                                      NoiseKind::Pink,   NoiseKind::Babble1,
                                                      NoiseKind::Babble2};

constexpr std::string_view to_string(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::White: return "white";
    case NoiseKind::Blue: return "blue";
    case NoiseKind::Violet: return "violet";
    case NoiseKind::Brown: return "brown";
    case NoiseKind::Pink: return "pink";
    case NoiseKind::Babble1: return "babble1";
    case NoiseKind::Babble2: return "babble2";
    }
    return "unknown";
}

constexpr bool is_colored(NoiseKind kind) {
    return kind != NoiseKind::Babble1 && kind != NoiseKind::Babble2;
}

/// PSD exponent: power spectral density is proportional to f^beta.
constexpr double spectral_exponent(NoiseKind kind) {
    switch (kind) {
    case NoiseKind::White: return 0.0;
    case NoiseKind::Blue: return 1.0;
    case NoiseKind::Violet: return 2.0;
    case NoiseKind::Brown: return -2.0;
    case NoiseKind::Pink: return -1.0;
    default: return 0.0;
    }
}

struct NoiseSpec {
    NoiseKind kind = NoiseKind::White;
    std::uint64_t seed = 0;               // colored kinds
    std::filesystem::path source_path;    // babble kinds

    static NoiseSpec colored(NoiseKind kind, std::uint64_t seed) { return {kind, seed, {}}; }
    static NoiseSpec babble(NoiseKind kind, std::filesystem::path path) {
        return {kind, 0, std::move(path)};
    }
};

struct WeightPair {
    double w_signal = 1.0;
    double w_noise = 0.0;
};

inline void validate(const WeightPair& w) {
    if (!(w.w_signal > 0.0 && w.w_signal <= 1.0) || !(w.w_noise >= 0.0 && w.w_noise < 1.0))
        throw Error(ErrorCode::InvalidHyperparameter,
                    "weight pair needs w_signal in (0,1] and w_noise in [0,1), got (" +
                        std::to_string(w.w_signal) + ", " + std::to_string(w.w_noise) + ")");
}

inline constexpr std::array<WeightPair, 2> kDefaultWeightPairs{WeightPair{0.9, 0.1},
                                                               WeightPair{0.7, 0.3}};

/// Gaussian noise shaped in the frequency domain so that its PSD follows
/// f^beta; DC is removed and the result is scaled to unit RMS.
inline AudioClip generate_colored_noise(NoiseKind kind, std::size_t length, int rate,
                                        std::uint64_t seed) {
    if (!is_colored(kind))
        throw Error(ErrorCode::InvalidHyperparameter,
                    std::string(to_string(kind)) + " is not a colored noise");
    if (length == 0) throw Error(ErrorCode::BadLength, "noise length must be positive");
    if (rate <= 0) throw Error(ErrorCode::InvalidHyperparameter, "sample rate must be positive");

    Rng rng(seed);
    std::vector<fft::cplx> spectrum(length);
    for (auto& v : spectrum) v = rng.normal();

    AudioClip out;
    out.sample_rate = rate;
    out.samples.assign(length, 0.0);
    if (length > 1) {
        fft::transform(spectrum);
        const double half_exponent = 0.5 * spectral_exponent(kind);
        const double bin_hz = static_cast<double>(rate) / static_cast<double>(length);
        spectrum[0] = 0.0;
        for (std::size_t k = 1; k < length; ++k) {
            const std::size_t folded = std::min(k, length - k); // keep Hermitian symmetry
            spectrum[k] *= std::pow(static_cast<double>(folded) * bin_hz, half_exponent);
        }
        fft::inverse(spectrum);
        for (std::size_t i = 0; i < length; ++i) out.samples[i] = spectrum[i].real();
    }

    double energy = 0.0;
    for (double s : out.samples) energy += s * s;
    const double rms = std::sqrt(energy / static_cast<double>(length));
    if (rms > 0.0)
        for (double& s : out.samples) s /= rms;
    return out;
}

/// Weighted sum of clip and noise (noise tiled or truncated to the clip's
/// length). If any sample would exceed 1.0 in magnitude the mix is rescaled
/// to a 0.9 peak.
inline AudioClip mix_at_weights(const AudioClip& clip, const AudioClip& noise, const WeightPair& weights) {
    validate(weights);
    if (clip.sample_rate != noise.sample_rate)
        throw Error(ErrorCode::RateMismatch,
                    std::to_string(clip.sample_rate) + " vs " + std::to_string(noise.sample_rate));
    if (clip.empty()) throw Error(ErrorCode::EmptyClip, "clip is empty");
    const AudioClip fitted = normalize_length(noise, clip.size());

    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples.resize(clip.size());
    double peak = 0.0;
    for (std::size_t i = 0; i < clip.size(); ++i) {
        out.samples[i] = weights.w_signal * clip.samples[i] + weights.w_noise * fitted.samples[i];
        peak = std::max(peak, std::abs(out.samples[i]));
    }
    if (peak > 1.0)
        for (double& s : out.samples) s *= 0.9 / peak;
    return out;
}

struct AugmentedInstance {
    NoiseKind kind;
    std::size_t pair_index;
    AudioClip clip;
};

/// Seed used for the colored noise of one (kind, pair) cell.
inline std::uint64_t augmentation_seed(std::uint64_t seed, const NoiseSpec& spec, std::size_t pair_index) {
    const auto cell = static_cast<std::uint64_t>(spec.kind) * 16 + pair_index;
    return seed ^ spec.seed ^ splitmix64(cell);
}

/// Babble recordings are looped to the clip length, resampled to the clip's
/// rate and scaled to unit RMS so their weights are comparable to the
/// colored noises.
inline AudioClip load_babble(const NoiseSpec& spec, const AudioClip& like) {
    if (spec.source_path.empty() || !std::filesystem::exists(spec.source_path))
        throw Error(ErrorCode::MissingBabbleFile,
                    std::string(to_string(spec.kind)) + ": '" + spec.source_path.string() + "' not found");
    AudioClip noise = read_wav(spec.source_path);
    if (noise.sample_rate != like.sample_rate) noise = resample(noise, like.sample_rate);
    noise = normalize_length(noise, like.size());
    double energy = 0.0;
    for (double s : noise.samples) energy += s * s;
    const double rms = std::sqrt(energy / static_cast<double>(noise.size()));
    if (rms > 0.0)
        for (double& s : noise.samples) s /= rms;
    return noise;
}

/// Every noise kind of the bank crossed with every weight pair, enumerated
/// kind-major in bank order. The bank must list the seven kinds in
/// kNoiseKinds order.
inline std::vector<AugmentedInstance> augment_sample(const AudioClip& clip,
                                                     std::span<const NoiseSpec> noise_bank,
                                                     std::span<const WeightPair> pairs,
                                                     std::uint64_t seed) {
    validate(clip);
    if (noise_bank.size() != kNoiseKinds.size())
        throw Error(ErrorCode::InvalidHyperparameter,
                    "noise bank must hold 7 entries, got " + std::to_string(noise_bank.size()));
    for (std::size_t k = 0; k < kNoiseKinds.size(); ++k)
        if (noise_bank[k].kind != kNoiseKinds[k])
            throw Error(ErrorCode::InvalidHyperparameter,
                        "noise bank entry " + std::to_string(k) + " should be " +
                            std::string(to_string(kNoiseKinds[k])));
    if (pairs.size() != 2)
        throw Error(ErrorCode::InvalidHyperparameter,
                    "exactly 2 weight pairs required, got " + std::to_string(pairs.size()));
    for (const auto& w : pairs) validate(w);

    std::vector<AugmentedInstance> out;
    out.reserve(noise_bank.size() * pairs.size());
    for (const auto& spec : noise_bank) {
        std::optional<AudioClip> babble;
        if (!is_colored(spec.kind)) babble = load_babble(spec, clip);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const AudioClip noise = babble ? *babble
                                           : generate_colored_noise(spec.kind, clip.size(), clip.sample_rate,
                                                                    augmentation_seed(seed, spec, p));
            out.push_back({spec.kind, p, mix_at_weights(clip, noise, pairs[p])});
        }
    }
    return out;
}

/// Default bank: colored kinds seeded from `seed`, babble kinds read from
/// babble1.wav / babble2.wav inside `babble_dir`.
inline std::vector<NoiseSpec> default_noise_bank(const std::filesystem::path& babble_dir, std::uint64_t seed = 0) {
    std::vector<NoiseSpec> bank;
    for (NoiseKind kind : kNoiseKinds) {
        if (is_colored(kind))
            bank.push_back(NoiseSpec::colored(kind, seed));
        else
            bank.push_back(NoiseSpec::babble(kind, babble_dir / (std::string(to_string(kind)) + ".wav")));
    }
    return bank;
}

} // namespace capev
