#pragma once

#include "capev/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace capev {

/// Mono waveform at a fixed sample rate. Samples are nominally in [-1, 1].
struct AudioClip {
    std::vector<double> samples;
    int sample_rate = 0;

    std::size_t size() const noexcept { return samples.size(); }
    bool empty() const noexcept { return samples.empty(); }
    double duration() const noexcept {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

/// Throws unless the clip is non-empty, has a positive rate and finite samples.
inline void validate(const AudioClip& clip) {
    if (clip.sample_rate <= 0)
        throw Error(ErrorCode::MalformedWav,
                    "sample rate must be positive, got " + std::to_string(clip.sample_rate));
    if (clip.samples.empty()) throw Error(ErrorCode::EmptyClip, "clip has no samples");
    for (double s : clip.samples)
        if (!std::isfinite(s)) throw Error(ErrorCode::MalformedWav, "non-finite sample");
}

enum class WavEncoding { Pcm16, Float32 };

namespace detail {

inline std::uint32_t read_le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint16_t read_le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

inline void put_le32(std::vector<unsigned char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

inline void put_le16(std::vector<unsigned char>& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

inline void put_tag(std::vector<unsigned char>& out, const char* tag) {
    out.insert(out.end(), tag, tag + 4);
}

inline double bessel_i0(double x) { return std::cyl_bessel_i(0.0, x); }

} // namespace detail

/// Decodes a RIFF/WAVE byte buffer. Accepts 16-bit PCM and 32-bit IEEE float
/// (plain or WAVE_FORMAT_EXTENSIBLE), mono or stereo. Stereo is averaged.
inline AudioClip decode_wav(std::span<const unsigned char> bytes) {
    using detail::read_le16;
    using detail::read_le32;
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw Error(ErrorCode::MalformedWav, "missing RIFF/WAVE signature");

    bool have_fmt = false;
    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::span<const unsigned char> data;
    bool have_data = false;

    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::uint32_t chunk_size = read_le32(chunk + 4);
        const std::size_t body = pos + 8;
        if (chunk_size > bytes.size() - body)
            throw Error(ErrorCode::MalformedWav, "chunk overruns file (truncated?)");
        const std::size_t avail = chunk_size;
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (chunk_size < 16) throw Error(ErrorCode::MalformedWav, "fmt chunk too short");
            const unsigned char* f = bytes.data() + body;
            format = read_le16(f);
            channels = read_le16(f + 2);
            rate = read_le32(f + 4);
            bits = read_le16(f + 14);
            if (format == 0xFFFE) {
                if (chunk_size < 40)
                    throw Error(ErrorCode::MalformedWav, "extensible fmt chunk too short");
                format = read_le16(f + 24); // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = bytes.subspan(body, avail);
            have_data = true;
        }
        pos = body + avail + (avail & 1u);
    }
    if (!have_fmt) throw Error(ErrorCode::MalformedWav, "no fmt chunk");
    if (!have_data) throw Error(ErrorCode::MalformedWav, "no data chunk");
    if (rate == 0) throw Error(ErrorCode::MalformedWav, "zero sample rate");

    const bool pcm16 = format == 1 && bits == 16;
    const bool float32 = format == 3 && bits == 32;
    if (!pcm16 && !float32)
        throw Error(ErrorCode::UnsupportedEncoding,
                    "format tag " + std::to_string(format) + " with " + std::to_string(bits) +
                        " bits per sample");
    if (channels != 1 && channels != 2)
        throw Error(ErrorCode::UnsupportedEncoding,
                    std::to_string(channels) + " channels (only mono and stereo)");

    const std::size_t frame_bytes = static_cast<std::size_t>(bits / 8) * channels;
    if (data.size() % frame_bytes != 0)
        throw Error(ErrorCode::MalformedWav, "data chunk is not a whole number of frames");
    const std::size_t frames = data.size() / frame_bytes;
    if (frames == 0) throw Error(ErrorCode::MalformedWav, "data chunk is empty");

    AudioClip clip;
    clip.sample_rate = static_cast<int>(rate);
    clip.samples.resize(frames);
    const unsigned char* p = data.data();
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (int c = 0; c < channels; ++c) {
            if (pcm16) {
                const auto v = static_cast<std::int16_t>(read_le16(p));
                acc += static_cast<double>(v) / 32768.0;
                p += 2;
            } else {
                const std::uint32_t raw = read_le32(p);
                float v;
                std::memcpy(&v, &raw, sizeof v);
                acc += static_cast<double>(v);
                p += 4;
            }
        }
        clip.samples[i] = acc / channels;
    }
    validate(clip);
    return clip;
}

inline AudioClip read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::MalformedWav, "cannot open " + path.string());
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                           std::istreambuf_iterator<char>());
    try {
        return decode_wav(bytes);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

inline std::vector<unsigned char> encode_wav(const AudioClip& clip,
                                             WavEncoding encoding = WavEncoding::Pcm16) {
    validate(clip);
    const bool pcm = encoding == WavEncoding::Pcm16;
    const std::uint16_t bits = pcm ? 16 : 32;
    const auto data_bytes = static_cast<std::uint32_t>(clip.size() * (bits / 8));
    std::vector<unsigned char> out;
    out.reserve(44 + data_bytes);
    detail::put_tag(out, "RIFF");
    detail::put_le32(out, 36 + data_bytes);
    detail::put_tag(out, "WAVE");
    detail::put_tag(out, "fmt ");
    detail::put_le32(out, 16);
    detail::put_le16(out, pcm ? 1 : 3);
    detail::put_le16(out, 1);
    detail::put_le32(out, static_cast<std::uint32_t>(clip.sample_rate));
    detail::put_le32(out, static_cast<std::uint32_t>(clip.sample_rate) * (bits / 8));
    detail::put_le16(out, bits / 8);
    detail::put_le16(out, bits);
    detail::put_tag(out, "data");
    detail::put_le32(out, data_bytes);
    for (double s : clip.samples) {
        if (pcm) {
            const double scaled = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
            detail::put_le16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
        } else {
            const auto f = static_cast<float>(s);
            std::uint32_t raw;
            std::memcpy(&raw, &f, sizeof raw);
            detail::put_le32(out, raw);
        }
    }
    return out;
}

inline void write_wav(const std::filesystem::path& path, const AudioClip& clip,
                      WavEncoding encoding = WavEncoding::Pcm16) {
    const auto bytes = encode_wav(clip, encoding);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::IoError, "short write to " + path.string());
}

struct ResampleOptions {
    double kaiser_beta = 8.6;
    int taps_per_phase = 64;
    double cutoff_ratio = 0.45; // of min(in_rate, target_rate)
};

/// Band-limited rational-ratio resampling with a Kaiser-windowed sinc.
/// The kernel spans `taps_per_phase` taps at the lower of the two rates and is
/// normalized to unit DC gain for every fractional phase.
inline AudioClip resample(const AudioClip& clip, int target_rate, const ResampleOptions& opt = {}) {
    if (clip.empty()) throw Error(ErrorCode::EmptyClip, "cannot resample an empty clip");
    if (target_rate <= 0 || clip.sample_rate <= 0)
        throw Error(ErrorCode::InvalidHyperparameter, "sample rates must be positive");
    if (target_rate == clip.sample_rate) return clip;

    const auto n_in = static_cast<std::int64_t>(clip.size());
    const std::int64_t in_rate = clip.sample_rate;
    const std::int64_t n_out = (n_in * target_rate + in_rate / 2) / in_rate;

    // Output m sits at input position m * step / phases; its fractional part
    // cycles through `phases` values, so kernels are built once per phase.
    const std::int64_t g = std::gcd(in_rate, static_cast<std::int64_t>(target_rate));
    const std::int64_t step = in_rate / g;
    const std::int64_t phases = target_rate / g;

    const double ratio = static_cast<double>(in_rate) / target_rate;
    const double cutoff = opt.cutoff_ratio * std::min<double>(in_rate, target_rate) / in_rate;
    const double half_width = 0.5 * opt.taps_per_phase * std::max(1.0, ratio);
    const double i0_beta = detail::bessel_i0(opt.kaiser_beta);

    struct Kernel {
        std::int64_t first = 0; // offset of the first tap relative to floor(t)
        std::vector<double> weights;
    };
    auto build_kernel = [&](double frac) {
        Kernel k;
        k.first = static_cast<std::int64_t>(std::ceil(frac - half_width));
        const auto last = static_cast<std::int64_t>(std::floor(frac + half_width));
        double sum = 0.0;
        for (std::int64_t j = k.first; j <= last; ++j) {
            const double tau = frac - static_cast<double>(j);
            const double u = tau / half_width;
            double w = 0.0;
            if (std::abs(u) <= 1.0) {
                const double arg = 2.0 * cutoff * tau;
                const double sinc =
                    arg == 0.0 ? 1.0 : std::sin(std::numbers::pi * arg) / (std::numbers::pi * arg);
                w = sinc * detail::bessel_i0(opt.kaiser_beta * std::sqrt(1.0 - u * u)) / i0_beta;
            }
            k.weights.push_back(w);
            sum += w;
        }
        for (double& w : k.weights) w /= sum;
        return k;
    };

    constexpr std::int64_t kMaxCachedPhases = 4096;
    std::vector<Kernel> cache;
    if (phases <= kMaxCachedPhases) {
        cache.reserve(static_cast<std::size_t>(phases));
        for (std::int64_t p = 0; p < phases; ++p)
            cache.push_back(build_kernel(static_cast<double>(p) / static_cast<double>(phases)));
    }

    AudioClip out;
    out.sample_rate = target_rate;
    out.samples.assign(static_cast<std::size_t>(std::max<std::int64_t>(n_out, 1)), 0.0);
    for (std::int64_t m = 0; m < static_cast<std::int64_t>(out.size()); ++m) {
        const std::int64_t num = m * step;
        const std::int64_t base = num / phases;
        const std::int64_t phase = num % phases;
        Kernel uncached;
        if (cache.empty())
            uncached = build_kernel(static_cast<double>(phase) / static_cast<double>(phases));
        const Kernel& k = cache.empty() ? uncached : cache[static_cast<std::size_t>(phase)];
        double acc = 0.0;
        for (std::size_t j = 0; j < k.weights.size(); ++j) {
            const std::int64_t n = base + k.first + static_cast<std::int64_t>(j);
            if (n >= 0 && n < n_in) acc += k.weights[j] * clip.samples[static_cast<std::size_t>(n)];
        }
        out.samples[static_cast<std::size_t>(m)] = acc;
    }
    return out;
}

/// Truncates long clips; tiles short clips end-to-end until they reach
/// `target_len`, then truncates.
inline AudioClip normalize_length(const AudioClip& clip, std::size_t target_len) {
    if (clip.empty()) throw Error(ErrorCode::EmptyClip, "cannot normalize an empty clip");
    if (target_len == 0) throw Error(ErrorCode::BadLength, "target length must be positive");
    AudioClip out;
    out.sample_rate = clip.sample_rate;
    out.samples.reserve(target_len);
    while (out.samples.size() < target_len) {
        const std::size_t take = std::min(clip.size(), target_len - out.samples.size());
        out.samples.insert(out.samples.end(), clip.samples.begin(),
                           clip.samples.begin() + static_cast<std::ptrdiff_t>(take));
    }
    return out;
}

/// Floor of the mean clip length, in samples.
inline std::size_t mean_length(std::span<const AudioClip> clips) {
    if (clips.empty()) throw Error(ErrorCode::EmptyCollection, "no clips");
    const int rate = clips.front().sample_rate;
    std::uint64_t total = 0;
    for (const auto& c : clips) {
        if (c.sample_rate != rate)
            throw Error(ErrorCode::MixedSampleRates,
                        std::to_string(rate) + " vs " + std::to_string(c.sample_rate));
        total += c.size();
    }
    return static_cast<std::size_t>(total / clips.size());
}

} // namespace capev
