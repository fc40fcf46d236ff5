#pragma once

#include "capev/error.hpp"

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace capev {

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
    if (pred.size() != truth.size())
        throw Error(ErrorCode::LengthMismatch,
                    std::to_string(pred.size()) + " predictions vs " + std::to_string(truth.size()) + " truths");
    if (pred.empty()) throw Error(ErrorCode::Empty, "rmse of empty vectors");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - truth[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(pred.size()));
}

/// Pearson correlation, or nullopt when either input is constant.
inline std::optional<double> try_pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size())
        throw Error(ErrorCode::LengthMismatch, std::to_string(x.size()) + " vs " + std::to_string(y.size()));
    if (x.size() < 2) throw Error(ErrorCode::TooFewSamples, "pearson needs at least 2 pairs");
    const auto n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) return std::nullopt;
    const double r = sxy / std::sqrt(sxx * syy);
    return std::fmax(-1.0, std::fmin(1.0, r));
}

/// Throws ConstantInput where try_pearson would return nullopt.
inline double pearson(std::span<const double> x, std::span<const double> y) {
    if (auto r = try_pearson(x, y)) return *r;
    throw Error(ErrorCode::ConstantInput, "pearson correlation undefined for constant input");
}

} // namespace capev
