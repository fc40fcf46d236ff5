#pragma once

#include "capev/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <string>

namespace capev {

using Matrix = Eigen::MatrixXd; // one row per sample
using Vector = Eigen::VectorXd;

/// Per-column z-scoring with population statistics. Columns whose spread is
/// numerically zero keep std = 1, so they map to all zeros.
struct Standardizer {
    Vector means;
    Vector stds;

    static constexpr double kMinStd = 1e-12;

    Eigen::Index dims() const noexcept { return means.size(); }

    Matrix apply(const Matrix& X) const {
        if (X.cols() != means.size())
            throw Error(ErrorCode::ShapeMismatch, "standardizer fitted on " + std::to_string(means.size()) +
                                                      " columns, got " + std::to_string(X.cols()));
        return (X.rowwise() - means.transpose()).array().rowwise() / stds.transpose().array();
    }

    Vector apply_row(const Vector& x) const {
        if (x.size() != means.size())
            throw Error(ErrorCode::ShapeMismatch, "standardizer fitted on " + std::to_string(means.size()) +
                                                      " columns, got " + std::to_string(x.size()));
        return (x - means).cwiseQuotient(stds);
    }

    static Standardizer identity(Eigen::Index dims) {
        return {Vector::Zero(dims), Vector::Ones(dims)};
    }
};

inline Standardizer fit_standardizer(const Matrix& X) {
    if (X.rows() < 2) throw Error(ErrorCode::TooFewRows, "need at least 2 rows, got " + std::to_string(X.rows()));
    Standardizer s;
    s.means = X.colwise().mean().transpose();
    s.stds.resize(X.cols());
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        const double var = (X.col(c).array() - s.means(c)).square().mean();
        const double sd = std::sqrt(var);
        if (sd > Standardizer::kMinStd * (1.0 + std::abs(s.means(c)))) {
            s.stds(c) = sd;
        } else {
            s.stds(c) = 1.0;
            if ((X.col(c).array() == X(0, c)).all()) s.means(c) = X(0, c); // exact zeros
        }
    }
    return s;
}

} // namespace capev
