#pragma once

#include "capev/error.hpp"
#include "capev/standardizer.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace capev {

struct KnnModel {
    Standardizer scaler; // identity when fitted without standardization
    Matrix X;            // standardized training rows
    Vector y;
    int k = 1;

    /// Indices of the k nearest training rows to a raw query, nearest first;
    /// equal distances resolve to the lower row index.
    std::vector<Eigen::Index> neighbors(const Vector& query) const {
        if (X.rows() == 0) throw Error(ErrorCode::UntrainedModel, "knn model has no training rows");
        const Vector q = scaler.apply_row(query);
        std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(X.rows()));
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            dist[static_cast<std::size_t>(i)] = {(X.row(i).transpose() - q).squaredNorm(), i};
        const auto kk = static_cast<std::ptrdiff_t>(k);
        std::partial_sort(dist.begin(), dist.begin() + kk, dist.end());
        std::vector<Eigen::Index> out;
        out.reserve(static_cast<std::size_t>(k));
        for (std::ptrdiff_t i = 0; i < kk; ++i) out.push_back(dist[static_cast<std::size_t>(i)].second);
        return out;
    }

    double predict(const Vector& query) const {
        double sum = 0.0;
        for (Eigen::Index i : neighbors(query)) sum += y(i);
        return sum / static_cast<double>(k);
    }
};

inline KnnModel fit_knn(const Matrix& X, const Vector& y, int k, bool standardize = true) {
    if (X.rows() == 0) throw Error(ErrorCode::EmptyData, "no training rows");
    if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and targets differ in length");
    if (k < 1 || k > X.rows())
        throw Error(ErrorCode::InvalidHyperparameter,
                    "k = " + std::to_string(k) + " outside [1, " + std::to_string(X.rows()) + "]");
    KnnModel m;
    m.scaler = standardize ? fit_standardizer(X) : Standardizer::identity(X.cols());
    m.X = m.scaler.apply(X);
    m.y = y;
    m.k = k;
    return m;
}

} // namespace capev
