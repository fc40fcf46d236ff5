#pragma once

// Score-stratified train/test partition and cross-validation folds.

#include "capev/error.hpp"
#include "capev/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace capev {

/// Positions 0..n-1 grouped into `n_bins` contiguous quantile bins of the
/// scores (ties ordered by position). Bin sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> quantile_bins(std::span<const double> scores, std::size_t n_bins) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    std::vector<std::vector<std::size_t>> bins(n_bins);
    for (std::size_t b = 0; b < n_bins; ++b) {
        const std::size_t lo = b * n / n_bins, hi = (b + 1) * n / n_bins;
        bins[b].assign(order.begin() + static_cast<std::ptrdiff_t>(lo), order.begin() + static_cast<std::ptrdiff_t>(hi));
    }
    return bins;
}

struct SplitResult {
    std::vector<std::string> train;
    std::vector<std::string> test;
};

/// Stratified split: within each quantile bin of `scores` a seeded shuffle
/// sends round(bin_size * test_fraction) ids to the test side. Both sides keep
/// the input order of ids.
inline SplitResult balanced_split(std::span<const std::string> ids, std::span<const double> scores,
                                  double test_fraction, std::size_t n_bins, std::uint64_t seed) {
    if (ids.size() != scores.size())
        throw Error(ErrorCode::LengthMismatch, "ids and scores differ in length");
    if (n_bins < 2 || ids.size() < n_bins)
        throw Error(ErrorCode::TooFewSamples, std::to_string(ids.size()) + " samples for " +
                                                  std::to_string(n_bins) + " bins (need n >= bins >= 2)");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw Error(ErrorCode::InvalidHyperparameter, "test fraction must be in (0, 1)");

    std::vector<char> is_test(ids.size(), 0);
    const auto bins = quantile_bins(scores, n_bins);
    for (std::size_t b = 0; b < bins.size(); ++b) {
        auto members = bins[b];
        Rng rng(derive_seed(seed, b));
        rng.shuffle(members);
        const auto take = static_cast<std::size_t>(std::lround(static_cast<double>(members.size()) * test_fraction));
        for (std::size_t i = 0; i < take && i < members.size(); ++i) is_test[members[i]] = 1;
    }
    SplitResult out;
    for (std::size_t i = 0; i < ids.size(); ++i) (is_test[i] ? out.test : out.train).push_back(ids[i]);
    return out;
}

/// Fold index per position for k-fold CV, stratified the same way as
/// balanced_split. Fold sizes differ by at most one.
inline std::vector<int> stratified_folds(std::span<const double> scores, int k, std::size_t n_bins, std::uint64_t seed) {
    if (k < 2) throw Error(ErrorCode::InvalidHyperparameter, "need at least 2 folds");
    if (scores.size() < static_cast<std::size_t>(k))
        throw Error(ErrorCode::TooFewSamples, std::to_string(scores.size()) + " samples for " + std::to_string(k) + " folds");
    n_bins = std::clamp<std::size_t>(n_bins, 1, scores.size());
    std::vector<int> fold(scores.size(), 0);
    std::size_t counter = 0;
    const auto bins = quantile_bins(scores, n_bins);
    for (std::size_t b = 0; b < bins.size(); ++b) {
        auto members = bins[b];
        Rng rng(derive_seed(seed ^ 0xF01D5ull, b));
        rng.shuffle(members);
        for (std::size_t m : members) fold[m] = static_cast<int>(counter++ % static_cast<std::size_t>(k));
    }
    return fold;
}

} // namespace capev
