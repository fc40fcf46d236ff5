#include <capev/features.hpp>

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace capev;
using Catch::Approx;

namespace {

AudioClip sine_plus_noise(double snr_db, std::uint32_t seed) {
    auto clip = test::sine(200.0, 1.0, 8000);
    const double noise_sd = std::sqrt(0.5 / std::pow(10.0, snr_db / 10.0)); // sine power is 1/2
    const auto noise = test::gaussian(clip.size(), seed, noise_sd);
    for (std::size_t i = 0; i < clip.size(); ++i) clip.samples[i] += noise[i];
    return clip;
}

bool has_code(const std::function<void()>& fn, ErrorCode code) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

} // namespace

TEST_CASE("detect_periods recovers an impulse train", "[features]") {
    const auto clip = test::impulse_train(80, 8000, 8000);
    const auto track = detect_periods(clip, 60.0, 400.0);
    REQUIRE(track.size() == 99); // 100 impulses
    REQUIRE(track.peak_amps.size() == track.periods.size());
    for (double p : track.periods) REQUIRE(std::abs(p - 0.0100) <= 1.0 / 8000);
    for (double a : track.peak_amps) REQUIRE(a == Approx(1.0));
}

TEST_CASE("detect_periods recovers impulse trains of several periods", "[features][property]") {
    for (std::size_t period : {21u, 37u, 64u, 80u, 101u, 130u}) {
        const auto clip = test::impulse_train(period, 8000, 8000);
        const auto track = detect_periods(clip, 60.0, 400.0);
        INFO("period " << period);
        REQUIRE(track.size() + 1 == (8000 + period - 1) / period);
        for (double p : track.periods) REQUIRE(std::abs(p * 8000 - static_cast<double>(period)) <= 1.0);
    }
}

TEST_CASE("detect_periods on a 200 Hz sine", "[features]") {
    const auto clip = test::sine(200.0, 1.0, 8000, 0.7);
    const auto track = detect_periods(clip, 60.0, 400.0);
    REQUIRE(track.size() > 150);
    for (double p : track.periods) REQUIRE(std::abs(p - 0.0050) <= 1.0 / 8000);
    for (double a : track.peak_amps) REQUIRE(a == Approx(0.7).epsilon(1e-3));
}

TEST_CASE("detect_periods keeps periods within the search range", "[features][property]") {
    for (double f0 : {75.0, 123.0, 190.0, 333.0}) {
        const auto track = detect_periods(test::sine(f0, 0.8, 8000), 60.0, 400.0);
        for (double p : track.periods) {
            REQUIRE(p >= 1.0 / 400.0);
            REQUIRE(p <= 1.0 / 60.0);
        }
    }
}

TEST_CASE("detect_periods reports silence", "[features]") {
    AudioClip zeros{std::vector<double>(8000, 0.0), 8000};
    REQUIRE(has_code([&] { detect_periods(zeros, 60.0, 400.0); }, ErrorCode::NoVoicedFrames));
    REQUIRE(has_code([&] { detect_periods(zeros, 400.0, 60.0); }, ErrorCode::InvalidHyperparameter));
}

TEST_CASE("perturbation measures match hand-computed values", "[features]") {
    // |12-10| = |10-12| = 2 ms over 3 differences; mean period 11 ms.
    const PeriodTrack alternating{{0.010, 0.012, 0.010, 0.012}, {1, 1, 1, 1}};
    const auto p = perturbation_measures(alternating);
    REQUIRE(p.jitter_abs == Approx(0.002).epsilon(1e-6));
    REQUIRE(p.jitter == Approx(0.002 / 0.011).epsilon(1e-6));
    REQUIRE(p.jitter == Approx(0.18182).epsilon(1e-4));
    REQUIRE(p.shimmer == 0.0);

    const auto flat = perturbation_measures({{0.005, 0.005, 0.005}, {1, 1, 1}});
    REQUIRE(flat.jitter == 0.0);
    REQUIRE(flat.jitter_abs == 0.0);

    const auto amp = perturbation_measures({{0.005, 0.005, 0.005}, {1.0, 0.8, 1.0}});
    REQUIRE(amp.shimmer == Approx(0.2 / (2.8 / 3.0)).epsilon(1e-6));
    REQUIRE(amp.shimmer == Approx(0.21429).epsilon(1e-4));
}

TEST_CASE("perturbation measure errors", "[features]") {
    REQUIRE(has_code([] { perturbation_measures({{0.01}, {1}}); }, ErrorCode::TooFewPeriods));
    REQUIRE(has_code([] { perturbation_measures({{0.01, 0.01}, {0, 0}}); }, ErrorCode::ZeroMeanAmplitude));
}

TEST_CASE("perturbation scaling properties", "[features][property]") {
    std::mt19937 gen(3);
    std::uniform_real_distribution<double> period(0.003, 0.012), amp(0.1, 1.0), scale(0.1, 10.0);
    for (int trial = 0; trial < 100; ++trial) {
        PeriodTrack t;
        const int n = 2 + trial % 20;
        for (int i = 0; i < n; ++i) {
            t.periods.push_back(period(gen));
            t.peak_amps.push_back(amp(gen));
        }
        const double c = scale(gen);
        PeriodTrack scaled = t;
        for (auto& p : scaled.periods) p *= c;
        for (auto& a : scaled.peak_amps) a *= c;
        const auto base = perturbation_measures(t);
        const auto s = perturbation_measures(scaled);
        REQUIRE(s.jitter == Approx(base.jitter).epsilon(1e-12));
        REQUIRE(s.jitter_abs == Approx(c * base.jitter_abs).epsilon(1e-12));
        REQUIRE(s.shimmer == Approx(base.shimmer).epsilon(1e-12));
        REQUIRE(base.jitter >= 0.0);
        REQUIRE(base.shimmer >= 0.0);

        PeriodTrack constant{std::vector<double>(static_cast<std::size_t>(n), t.periods[0]),
                             std::vector<double>(static_cast<std::size_t>(n), t.peak_amps[0])};
        const auto z = perturbation_measures(constant);
        REQUIRE(z.jitter == 0.0);
        REQUIRE(z.shimmer == 0.0);
    }
}

TEST_CASE("HNR of a pure sine is high", "[features]") {
    const auto clip = test::sine(200.0, 1.0, 8000);
    REQUIRE(harmonic_noise_ratio(clip, 60.0, 400.0) >= 40.0);
    // r -> 1 numerically: every voiced frame sits near the clamp.
    for (const auto& f : analyze_frames(clip)) REQUIRE(f.peak_r > 0.9999);
}

TEST_CASE("HNR at 0 dB SNR is near 0 dB", "[features]") {
    for (std::uint32_t seed : {1u, 2u, 3u}) {
        const double hnr = harmonic_noise_ratio(sine_plus_noise(0.0, seed), 60.0, 400.0);
        INFO("seed " << seed << " hnr " << hnr);
        REQUIRE(std::abs(hnr) <= 1.5);
    }
}

TEST_CASE("HNR falls as noise power rises", "[features][property]") {
    for (std::uint32_t seed : {5u, 6u, 7u}) {
        double previous = std::numeric_limits<double>::infinity();
        for (double snr : {20.0, 10.0, 0.0, -10.0}) {
            const double hnr = harmonic_noise_ratio(sine_plus_noise(snr, seed), 60.0, 400.0);
            INFO("snr " << snr << " hnr " << hnr);
            REQUIRE(hnr < previous);
            previous = hnr;
        }
    }
}

TEST_CASE("HNR of silence is an error", "[features]") {
    AudioClip zeros{std::vector<double>(8000, 0.0), 8000};
    REQUIRE(has_code([&] { harmonic_noise_ratio(zeros, 60.0, 400.0); }, ErrorCode::NoVoicedFrames));
}

TEST_CASE("zero crossing rate", "[features]") {
    REQUIRE(zero_crossing_rate(AudioClip{std::vector<double>(800, 0.5), 8000}) == 0.0);

    AudioClip alt{std::vector<double>(1000), 8000};
    for (std::size_t i = 0; i < alt.size(); ++i) alt.samples[i] = i % 2 ? -1.0 : 1.0;
    REQUIRE(zero_crossing_rate(alt) == Approx(999.0 / 1000.0 * 8000.0));

    REQUIRE(std::abs(zero_crossing_rate(test::sine(100.0, 1.0, 8000)) - 200.0) <= 1.0);

    // Exact zeros count as positive: 0 -> 0 is not a crossing, 0 -> -1 is.
    REQUIRE(zero_crossing_rate(AudioClip{{0.0, 0.0, -1.0, 0.0}, 4}) == 2.0);

    AudioClip empty{{}, 8000};
    REQUIRE(has_code([&] { zero_crossing_rate(empty); }, ErrorCode::EmptyClip));
}

TEST_CASE("zero crossing rate ignores positive gain", "[features][property]") {
    auto noise = test::gaussian(4000, 9);
    AudioClip clip{noise, 8000};
    const double base = zero_crossing_rate(clip);
    for (double c : {1e-3, 0.5, 3.0, 1e4}) {
        AudioClip scaled = clip;
        for (auto& s : scaled.samples) s *= c;
        REQUIRE(zero_crossing_rate(scaled) == base);
    }
}

TEST_CASE("feature vector of a clean sine", "[features]") {
    const auto clip = test::sine(200.0, 1.0, 8000, 0.5);
    const auto fv = extract_feature_vector(clip, 40.0, Sex::Female);
    REQUIRE(fv.jitter < 0.005);
    REQUIRE(fv.shimmer < 0.02);
    REQUIRE(fv.hnr >= 40.0);
    REQUIRE(fv.sex == 1.0);
    REQUIRE(fv.age == 40.0);
    REQUIRE(std::abs(fv.zcr - 400.0) <= 1.0);
    REQUIRE(fv.to_array()[0] == fv.zcr);
    REQUIRE(fv.to_array()[6] == fv.age);
    REQUIRE(FeatureVector::names[4] == "hnr");

    const auto again = extract_feature_vector(clip, 40.0, Sex::Female);
    REQUIRE(std::memcmp(&fv, &again, sizeof fv) == 0);
}

TEST_CASE("feature extraction failure names the parameter", "[features]") {
    AudioClip zeros{std::vector<double>(8000, 0.0), 8000};
    try {
        extract_feature_vector(zeros, 30.0, Sex::Male);
        FAIL("expected FeatureExtractionFailed");
    } catch (const Error& e) {
        REQUIRE(e.code() == ErrorCode::FeatureExtractionFailed);
        REQUIRE(std::string(e.what()).find("jitter") != std::string::npos);
    }
}
