#pragma once

// epsilon-insensitive support vector regression trained with SMO on the dual
// (second-order working-set selection).

#include "capev/error.hpp"
#include "capev/standardizer.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

namespace capev {

enum class KernelType { Rbf, Linear };

struct SvrParams {
    double C = 1.0;
    double epsilon = 0.1;
    KernelType kernel = KernelType::Rbf;
    double gamma = 0.1;
    double tolerance = 1e-3;    // max KKT violation at convergence
    std::size_t max_updates = 0; // 0: 10 * n * 1000
    bool standardize = true;
};

struct SvrModel {
    SvrParams params;
    Standardizer scaler;
    Matrix support;     // standardized support vectors
    Vector coef;        // alpha_i - alpha_i^* per support vector
    double bias = 0.0;
    bool converged = false;
    double final_violation = 0.0;
    std::size_t updates = 0;

    double kernel(const Vector& a, const Vector& b) const {
        if (params.kernel == KernelType::Linear) return a.dot(b);
        return std::exp(-params.gamma * (a - b).squaredNorm());
    }

    double predict(const Vector& x) const {
        const Vector q = scaler.apply_row(x);
        double f = bias;
        for (Eigen::Index i = 0; i < support.rows(); ++i) f += coef(i) * kernel(support.row(i).transpose(), q);
        return f;
    }
};

/// Non-convergence does not throw: the model comes back with converged =
/// false and the last KKT violation recorded.
inline SvrModel fit_svr(const Matrix& X, const Vector& y, const SvrParams& params) {
    if (X.rows() < 2) throw Error(ErrorCode::EmptyData, "SVR needs at least 2 rows");
    if (X.rows() != y.size()) throw Error(ErrorCode::LengthMismatch, "rows and targets differ in length");
    if (!(params.C > 0.0) || !(params.epsilon >= 0.0) ||
        (params.kernel == KernelType::Rbf && !(params.gamma > 0.0)))
        throw Error(ErrorCode::InvalidHyperparameter, "SVR needs C > 0, epsilon >= 0, gamma > 0");

    SvrModel model;
    model.params = params;
    model.scaler = params.standardize ? fit_standardizer(X) : Standardizer::identity(X.cols());
    const Matrix Z = model.scaler.apply(X);
    const auto n = static_cast<std::size_t>(Z.rows());
    const std::size_t l = 2 * n;

    Matrix K(Z.rows(), Z.rows());
    for (Eigen::Index i = 0; i < Z.rows(); ++i)
        for (Eigen::Index j = i; j < Z.rows(); ++j)
            K(i, j) = K(j, i) = model.kernel(Z.row(i).transpose(), Z.row(j).transpose());

    // Variables t < n are alpha_t (sign +1), t >= n are alpha*_{t-n} (sign -1).
    std::vector<double> alpha(l, 0.0), grad(l), sign(l);
    for (std::size_t t = 0; t < l; ++t) {
        const std::size_t i = t % n;
        sign[t] = t < n ? 1.0 : -1.0;
        grad[t] = t < n ? params.epsilon - y(static_cast<Eigen::Index>(i))
                        : params.epsilon + y(static_cast<Eigen::Index>(i));
    }
    auto k_at = [&](std::size_t s, std::size_t t) {
        return K(static_cast<Eigen::Index>(s % n), static_cast<Eigen::Index>(t % n));
    };
    auto q_at = [&](std::size_t s, std::size_t t) { return sign[s] * sign[t] * k_at(s, t); };
    const double C = params.C;
    auto at_upper = [&](std::size_t t) { return alpha[t] >= C; };
    auto at_lower = [&](std::size_t t) { return alpha[t] <= 0.0; };
    constexpr double kTau = 1e-12;
    const std::size_t max_updates = params.max_updates ? params.max_updates : 10 * n * 1000;

    double violation = std::numeric_limits<double>::infinity();
    std::size_t updates = 0;
    for (;;) {
        double gmax = -std::numeric_limits<double>::infinity();
        std::size_t i = l;
        for (std::size_t t = 0; t < l; ++t) {
            if (sign[t] > 0) {
                if (!at_upper(t) && -grad[t] >= gmax) { gmax = -grad[t]; i = t; }
            } else if (!at_lower(t) && grad[t] >= gmax) {
                gmax = grad[t];
                i = t;
            }
        }
        double gmax2 = -std::numeric_limits<double>::infinity();
        std::size_t j = l;
        double best_obj = std::numeric_limits<double>::infinity();
        if (i < l) {
            for (std::size_t t = 0; t < l; ++t) {
                if (sign[t] > 0) {
                    if (at_lower(t)) continue;
                    const double grad_diff = gmax + grad[t];
                    gmax2 = std::max(gmax2, grad[t]);
                    if (grad_diff > 0.0) {
                        const double quad = std::max(k_at(i, i) + k_at(t, t) - 2.0 * sign[i] * q_at(i, t), kTau);
                        const double obj = -(grad_diff * grad_diff) / quad;
                        if (obj <= best_obj) { j = t; best_obj = obj; }
                    }
                } else {
                    if (at_upper(t)) continue;
                    const double grad_diff = gmax - grad[t];
                    gmax2 = std::max(gmax2, -grad[t]);
                    if (grad_diff > 0.0) {
                        const double quad = std::max(k_at(i, i) + k_at(t, t) + 2.0 * sign[i] * q_at(i, t), kTau);
                        const double obj = -(grad_diff * grad_diff) / quad;
                        if (obj <= best_obj) { j = t; best_obj = obj; }
                    }
                }
            }
        }
        violation = std::max(0.0, gmax + gmax2);
        if (i == l || j == l || gmax + gmax2 < params.tolerance) {
            model.converged = true;
            break;
        }
        if (updates >= max_updates) break;
        ++updates;

        const double old_i = alpha[i], old_j = alpha[j];
        const double qij = q_at(i, j);
        if (sign[i] != sign[j]) {
            const double quad = std::max(k_at(i, i) + k_at(j, j) + 2.0 * qij, kTau);
            const double delta = (-grad[i] - grad[j]) / quad;
            const double diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if (diff > 0.0) {
                if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if (diff > 0.0) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
            } else if (alpha[j] > C) {
                alpha[j] = C;
                alpha[i] = C + diff;
            }
        } else {
            const double quad = std::max(k_at(i, i) + k_at(j, j) - 2.0 * qij, kTau);
            const double delta = (grad[i] - grad[j]) / quad;
            const double sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if (sum > C) {
                if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
            } else if (alpha[j] < 0.0) {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if (sum > C) {
                if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
            } else if (alpha[i] < 0.0) {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        const double d_i = alpha[i] - old_i, d_j = alpha[j] - old_j;
        for (std::size_t t = 0; t < l; ++t) grad[t] += q_at(t, i) * d_i + q_at(t, j) * d_j;
    }
    model.final_violation = violation;
    model.updates = updates;

    // Offset from free variables, or the midpoint of the feasible interval.
    double upper = std::numeric_limits<double>::infinity();
    double lower = -std::numeric_limits<double>::infinity();
    double free_sum = 0.0;
    std::size_t free_count = 0;
    for (std::size_t t = 0; t < l; ++t) {
        const double yg = sign[t] * grad[t];
        if (at_upper(t)) {
            if (sign[t] < 0) upper = std::min(upper, yg); else lower = std::max(lower, yg);
        } else if (at_lower(t)) {
            if (sign[t] > 0) upper = std::min(upper, yg); else lower = std::max(lower, yg);
        } else {
            free_sum += yg;
            ++free_count;
        }
    }
    const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : 0.5 * (upper + lower);
    model.bias = -rho;

    std::vector<Eigen::Index> support;
    std::vector<double> coef;
    for (std::size_t i = 0; i < n; ++i) {
        const double c = alpha[i] - alpha[i + n];
        if (c != 0.0) {
            support.push_back(static_cast<Eigen::Index>(i));
            coef.push_back(c);
        }
    }
    model.support.resize(static_cast<Eigen::Index>(support.size()), Z.cols());
    model.coef.resize(static_cast<Eigen::Index>(support.size()));
    for (std::size_t s = 0; s < support.size(); ++s) {
        model.support.row(static_cast<Eigen::Index>(s)) = Z.row(support[s]);
        model.coef(static_cast<Eigen::Index>(s)) = coef[s];
    }
    return model;
}

} // namespace capev
