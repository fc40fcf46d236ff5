#pragma once

#include "capev/metrics.hpp"
#include "capev/parallel.hpp"
#include "capev/regressor.hpp"
#include "capev/split.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace capev {

struct GridSearchSpec {
    ParamGrid grid;
    int cv_folds = 5;
    std::size_t n_bins = 5;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct CvRow {
    ParamSet params;
    std::vector<double> fold_rmse;
    double mean_rmse = 0.0; // +inf when any fold failed
    std::string error;
};

struct GridSearchResult {
    ParamSet best;
    double best_rmse = std::numeric_limits<double>::infinity();
    std::vector<CvRow> table; // one row per grid point, enumeration order
    std::vector<int> folds;   // fold index per training row
};

/// Stratified k-fold CV over every grid point; the lowest mean validation
/// RMSE wins and ties go to the earlier point.
inline GridSearchResult grid_search(const GridSearchSpec& spec, Family family, const Matrix& X, const Vector& y) {
    if (spec.grid.empty()) throw Error(ErrorCode::ConfigInvalid, "empty hyperparameter grid");
    if (spec.cv_folds < 2) throw Error(ErrorCode::ConfigInvalid, "cv_folds must be >= 2");
    if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and targets differ in length");

    const std::vector<double> scores(y.data(), y.data() + y.size());
    const auto folds = stratified_folds(scores, spec.cv_folds, spec.n_bins, spec.seed);
    const auto points = enumerate_grid(spec.grid);

    GridSearchResult result;
    result.folds = folds;
    result.table.resize(points.size());
    parallel_for(points.size(), spec.threads, [&](std::size_t g) {
        CvRow& row = result.table[g];
        row.params = points[g];
        try {
            for (int f = 0; f < spec.cv_folds; ++f) {
                std::vector<Eigen::Index> train, valid;
                for (Eigen::Index i = 0; i < X.rows(); ++i)
                    (folds[static_cast<std::size_t>(i)] == f ? valid : train).push_back(i);
                const Matrix Xt = X(train, Eigen::all);
                const Vector yt = y(train);
                const auto model = fit_classical(family, Xt, yt, row.params, derive_seed(spec.seed, static_cast<std::uint64_t>(f)));
                std::vector<double> pred, truth;
                for (Eigen::Index i : valid) {
                    pred.push_back(predict(model, X.row(i).transpose()));
                    truth.push_back(y(i));
                }
                row.fold_rmse.push_back(rmse(pred, truth));
            }
            double sum = 0.0;
            for (double r : row.fold_rmse) sum += r;
            row.mean_rmse = sum / static_cast<double>(row.fold_rmse.size());
        } catch (const std::exception& e) {
            row.mean_rmse = std::numeric_limits<double>::infinity();
            row.error = e.what();
        }
    });
    for (const auto& row : result.table)
        if (row.mean_rmse < result.best_rmse) {
            result.best_rmse = row.mean_rmse;
            result.best = row.params;
        }
    if (result.best.empty() && !result.table.empty()) result.best = result.table.front().params;
    return result;
}

} // namespace capev
