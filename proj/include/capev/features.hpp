#pragma once

// Pitch-period tracking and the perturbation / noise parameters computed from
// it: local jitter, absolute jitter, local shimmer, HNR and zero-crossing rate.

#include "capev/audio_io.hpp"
#include "capev/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace capev {

struct PitchOptions {
    double f0_min = 60.0;  // Hz
    double f0_max = 400.0; // Hz
    double frame_seconds = 0.040;
    double hop_seconds = 0.010;
    double voicing_threshold = 0.45;
    // A shorter lag is preferred over the global autocorrelation maximum when
    // its peak reaches this fraction of it (guards against octave-down picks).
    double octave_tolerance = 0.95;
};

/// Consecutive glottal cycle durations (seconds) and per-cycle peak |amplitude|.
struct PeriodTrack {
    std::vector<double> periods;
    std::vector<double> peak_amps;

    std::size_t size() const noexcept { return periods.size(); }
};

/// Per-frame autocorrelation result.
struct FrameAnalysis {
    std::size_t start = 0;
    bool has_energy = false;
    bool voiced = false;
    double peak_r = 0.0;         // max normalized autocorrelation over the lag range
    double period_samples = 0.0; // sub-sample lag of the selected peak
};

namespace detail {

inline void check_pitch_options(const PitchOptions& opt) {
    if (!(opt.f0_min > 0.0) || !(opt.f0_min < opt.f0_max))
        throw Error(ErrorCode::InvalidHyperparameter,
                    "need 0 < f0_min < f0_max, got " + std::to_string(opt.f0_min) + ", " +
                        std::to_string(opt.f0_max));
}

// Vertex offset of the parabola through (-1, a), (0, b), (1, c).
inline double parabolic_offset(double a, double b, double c) {
    const double denom = a - 2.0 * b + c;
    if (denom >= 0.0) return 0.0;
    return std::clamp(0.5 * (a - c) / denom, -0.5, 0.5);
}

} // namespace detail

/// Frame-wise normalized autocorrelation over lags in [fs/f0_max, fs/f0_min].
inline std::vector<FrameAnalysis> analyze_frames(const AudioClip& clip, const PitchOptions& opt = {}) {
    detail::check_pitch_options(opt);
    if (clip.empty()) throw Error(ErrorCode::EmptyClip, "cannot analyze an empty clip");
    const double fs = clip.sample_rate;
    const auto lag_min = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fs / opt.f0_max)));
    const auto lag_max = static_cast<std::size_t>(std::ceil(fs / opt.f0_min));
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.hop_seconds * fs)));
    std::size_t frame_len = static_cast<std::size_t>(std::lround(opt.frame_seconds * fs));
    if (frame_len > clip.size()) frame_len = clip.size();
    std::vector<FrameAnalysis> frames;
    if (frame_len <= lag_max + 2) return frames;

    std::vector<double> x(frame_len);
    std::vector<double> r(lag_max + 2, 0.0);
    for (std::size_t start = 0; start + frame_len <= clip.size(); start += hop) {
        FrameAnalysis fa;
        fa.start = start;
        double mean = 0.0;
        for (std::size_t n = 0; n < frame_len; ++n) mean += clip.samples[start + n];
        mean /= static_cast<double>(frame_len);
        double energy = 0.0;
        for (std::size_t n = 0; n < frame_len; ++n) {
            x[n] = clip.samples[start + n] - mean;
            energy += x[n] * x[n];
        }
        fa.has_energy = energy > 1e-20 * static_cast<double>(frame_len);
        if (!fa.has_energy) {
            frames.push_back(fa);
            continue;
        }

        std::fill(r.begin(), r.end(), 0.0);
        const std::size_t lo = lag_min > 1 ? lag_min - 1 : lag_min;
        const std::size_t hi = lag_max + 1;
        for (std::size_t lag = lo; lag <= hi; ++lag) {
            double cross = 0.0, e0 = 0.0, e1 = 0.0;
            for (std::size_t n = 0; n + lag < frame_len; ++n) {
                cross += x[n] * x[n + lag];
                e0 += x[n] * x[n];
                e1 += x[n + lag] * x[n + lag];
            }
            const double denom = std::sqrt(e0 * e1);
            r[lag] = denom > 0.0 ? cross / denom : 0.0;
        }

        std::size_t best = lag_min;
        for (std::size_t lag = lag_min; lag <= lag_max; ++lag)
            if (r[lag] > r[best]) best = lag;
        fa.peak_r = r[best];
        fa.voiced = fa.peak_r >= opt.voicing_threshold;

        // Shortest local maximum that is nearly as strong as the global one.
        std::size_t chosen = best;
        for (std::size_t lag = lag_min; lag < best; ++lag) {
            const bool local_max = r[lag] >= r[lag - 1] && r[lag] >= r[lag + 1];
            if (local_max && r[lag] >= opt.octave_tolerance * fa.peak_r) {
                chosen = lag;
                break;
            }
        }
        fa.period_samples = static_cast<double>(chosen) +
                            detail::parabolic_offset(r[chosen - 1], r[chosen], r[chosen + 1]);
        frames.push_back(fa);
    }
    return frames;
}

/// Places one pitch mark per glottal cycle inside each run of voiced frames
/// and returns the mark-to-mark periods with per-cycle peak amplitudes.
inline PeriodTrack detect_periods(const AudioClip& clip, const PitchOptions& opt = {}) {
    const auto frames = analyze_frames(clip, opt);
    const double fs = clip.sample_rate;
    const auto frame_len = std::min(clip.size(), static_cast<std::size_t>(std::lround(opt.frame_seconds * fs)));
    const auto hop = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(opt.hop_seconds * fs)));
    const double period_lo = 1.0 / opt.f0_max;
    const double period_hi = 1.0 / opt.f0_min;
    const auto& x = clip.samples;

    PeriodTrack track;
    std::size_t i = 0;
    while (i < frames.size()) {
        if (!frames[i].voiced) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < frames.size() && frames[j + 1].voiced) ++j;
        const std::size_t seg_begin = frames[i].start;
        const std::size_t seg_end = frames[j].start + frame_len;

        // Local period: the voiced frame whose centre is closest to n.
        auto local_period = [&](double n) {
            const double k = std::round((n - 0.5 * static_cast<double>(frame_len) -
                                         static_cast<double>(seg_begin)) / static_cast<double>(hop));
            const auto offset = static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(j - i)));
            return frames[i + offset].period_samples;
        };

        double pos_peak = 0.0, neg_peak = 0.0;
        for (std::size_t n = seg_begin; n < seg_end; ++n) {
            pos_peak = std::max(pos_peak, x[n]);
            neg_peak = std::max(neg_peak, -x[n]);
        }
        const double polarity = pos_peak >= neg_peak ? 1.0 : -1.0;

        auto argmax_in = [&](std::size_t from, std::size_t to) {
            std::size_t arg = from;
            for (std::size_t n = from; n < to; ++n)
                if (polarity * x[n] > polarity * x[arg]) arg = n;
            return arg;
        };
        auto refine = [&](std::size_t n) {
            if (n == 0 || n + 1 >= x.size()) return static_cast<double>(n);
            return static_cast<double>(n) +
                   detail::parabolic_offset(polarity * x[n - 1], polarity * x[n], polarity * x[n + 1]);
        };

        std::vector<double> marks;
        std::vector<std::size_t> mark_index;
        const double first_period = local_period(static_cast<double>(seg_begin));
        const auto first_end = std::min(seg_end, seg_begin + static_cast<std::size_t>(std::ceil(first_period)));
        std::size_t mark = argmax_in(seg_begin, first_end);
        marks.push_back(refine(mark));
        mark_index.push_back(mark);
        for (;;) {
            const double period = local_period(marks.back());
            const double predicted = marks.back() + period;
            const double from = predicted - 0.3 * period;
            const double to = predicted + 0.3 * period;
            if (from <= marks.back() || predicted >= static_cast<double>(seg_end)) break;
            const auto lo = static_cast<std::size_t>(std::ceil(from));
            const auto hi = std::min(seg_end, static_cast<std::size_t>(std::floor(to)) + 1);
            mark = argmax_in(lo, hi);
            // A maximum on a clipped window edge may belong to a cycle beyond the segment.
            if (hi == seg_end && mark + 1 == hi) break;
            marks.push_back(refine(mark));
            mark_index.push_back(mark);
        }

        for (std::size_t m = 0; m + 1 < marks.size(); ++m) {
            const double period = (marks[m + 1] - marks[m]) / fs;
            if (period < period_lo || period > period_hi) continue;
            double amp = 0.0;
            for (std::size_t n = mark_index[m]; n < mark_index[m + 1]; ++n) amp = std::max(amp, std::abs(x[n]));
            track.periods.push_back(period);
            track.peak_amps.push_back(amp);
        }
        i = j + 1;
    }
    if (track.size() < 3)
        throw Error(ErrorCode::NoVoicedFrames,
                    "only " + std::to_string(track.size()) + " pitch periods detected");
    return track;
}

inline PeriodTrack detect_periods(const AudioClip& clip, double f0_min, double f0_max) {
    PitchOptions opt;
    opt.f0_min = f0_min;
    opt.f0_max = f0_max;
    return detect_periods(clip, opt);
}

struct Perturbation {
    double jitter = 0.0;     // ratio
    double jitter_abs = 0.0; // seconds
    double shimmer = 0.0;    // ratio
};

/// Local jitter, absolute jitter and local shimmer of a period track.
inline Perturbation perturbation_measures(const PeriodTrack& track) {
    const std::size_t n = track.periods.size();
    if (n < 2) throw Error(ErrorCode::TooFewPeriods, "need at least 2 periods, got " + std::to_string(n));
    if (track.peak_amps.size() != n)
        throw Error(ErrorCode::LengthMismatch, "one peak amplitude per period required");

    double period_sum = 0.0, amp_sum = 0.0, period_diff = 0.0, amp_diff = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        period_sum += track.periods[i];
        amp_sum += track.peak_amps[i];
        if (i + 1 < n) {
            period_diff += std::abs(track.periods[i + 1] - track.periods[i]);
            amp_diff += std::abs(track.peak_amps[i + 1] - track.peak_amps[i]);
        }
    }
    const double mean_period = period_sum / static_cast<double>(n);
    const double mean_amp = amp_sum / static_cast<double>(n);
    if (mean_amp == 0.0) throw Error(ErrorCode::ZeroMeanAmplitude, "all cycle amplitudes are zero");

    Perturbation p;
    p.jitter_abs = period_diff / static_cast<double>(n - 1);
    p.jitter = p.jitter_abs / mean_period;
    p.shimmer = amp_diff / static_cast<double>(n - 1) / mean_amp;
    return p;
}

/// Mean over voiced frames of 10*log10(r / (1 - r)), r being the frame's peak
/// normalized autocorrelation clamped to [1e-6, 1 - 1e-6]. When no frame
/// passes the voicing threshold every frame with signal energy is used.
inline double harmonic_noise_ratio(const AudioClip& clip, const PitchOptions& opt = {}) {
    const auto frames = analyze_frames(clip, opt);
    auto frame_hnr = [](double r) {
        r = std::clamp(r, 1e-6, 1.0 - 1e-6);
        return 10.0 * std::log10(r / (1.0 - r));
    };
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& f : frames)
        if (f.voiced) {
            sum += frame_hnr(f.peak_r);
            ++count;
        }
    if (count == 0)
        for (const auto& f : frames)
            if (f.has_energy) {
                sum += frame_hnr(f.peak_r);
                ++count;
            }
    if (count == 0) throw Error(ErrorCode::NoVoicedFrames, "no frame carries signal energy");
    return sum / static_cast<double>(count);
}

inline double harmonic_noise_ratio(const AudioClip& clip, double f0_min, double f0_max) {
    PitchOptions opt;
    opt.f0_min = f0_min;
    opt.f0_max = f0_max;
    return harmonic_noise_ratio(clip, opt);
}

/// Sign changes per second; exact zeros count as positive.
inline double zero_crossing_rate(const AudioClip& clip) {
    if (clip.empty()) throw Error(ErrorCode::EmptyClip, "cannot compute ZCR of an empty clip");
    if (clip.sample_rate <= 0) throw Error(ErrorCode::MalformedWav, "sample rate must be positive");
    std::size_t crossings = 0;
    for (std::size_t i = 0; i + 1 < clip.size(); ++i)
        if ((clip.samples[i] >= 0.0) != (clip.samples[i + 1] >= 0.0)) ++crossings;
    return static_cast<double>(crossings) / clip.duration();
}

enum class Sex { Male = 0, Female = 1 };

/// The seven predictors, in fixed column order.
struct FeatureVector {
    double zcr = 0.0;        // crossings / second
    double jitter = 0.0;     // ratio
    double jitter_abs = 0.0; // seconds
    double shimmer = 0.0;    // ratio
    double hnr = 0.0;        // dB
    double sex = 0.0;        // 0 male, 1 female
    double age = 0.0;        // years

    static constexpr std::size_t size = 7;
    static constexpr std::array<std::string_view, size> names{
        "zcr", "jitter", "jitter_abs", "shimmer", "hnr", "sex", "age"};

    std::array<double, size> to_array() const { return {zcr, jitter, jitter_abs, shimmer, hnr, sex, age}; }

    static FeatureVector from_array(const std::array<double, size>& a) {
        return {a[0], a[1], a[2], a[3], a[4], a[5], a[6]};
    }

    bool operator==(const FeatureVector&) const = default;
};

/// Runs the period tracker, perturbation measures, HNR and ZCR on a
/// preprocessed clip and appends the demographics.
inline FeatureVector extract_feature_vector(const AudioClip& clip, double age, Sex sex,
                                            const PitchOptions& opt = {}) {
    auto fail = [](std::string_view parameter, const Error& cause) {
        return Error(ErrorCode::FeatureExtractionFailed, std::string(parameter) + ": " + cause.what());
    };
    FeatureVector fv;
    fv.sex = static_cast<double>(sex);
    fv.age = age;
    try {
        fv.zcr = zero_crossing_rate(clip);
    } catch (const Error& e) {
        throw fail("zcr", e);
    }
    try {
        const auto p = perturbation_measures(detect_periods(clip, opt));
        fv.jitter = p.jitter;
        fv.jitter_abs = p.jitter_abs;
        fv.shimmer = p.shimmer;
    } catch (const Error& e) {
        throw fail("jitter/shimmer", e);
    }
    try {
        fv.hnr = harmonic_noise_ratio(clip, opt);
    } catch (const Error& e) {
        throw fail("hnr", e);
    }
    return fv;
}

} // namespace capev
