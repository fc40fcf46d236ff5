#pragma once

// Family-agnostic front end over the classical regressors: named
// hyperparameters, default grids, fitting and prediction.

#include "capev/error.hpp"
#include "capev/forest.hpp"
#include "capev/knn.hpp"
#include "capev/svr.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace capev {

enum class Family { Forest, Knn, Svr, Mlp, Conv };

constexpr std::string_view to_string(Family f) {
    switch (f) {
    case Family::Forest: return "rf";
    case Family::Knn: return "knn";
    case Family::Svr: return "svr";
    case Family::Mlp: return "mlp";
    case Family::Conv: return "conv";
    }
    return "unknown";
}

inline Family parse_family(std::string_view s) {
    if (s == "rf") return Family::Forest;
    if (s == "knn") return Family::Knn;
    if (s == "svr") return Family::Svr;
    if (s == "mlp") return Family::Mlp;
    if (s == "conv") return Family::Conv;
    throw Error(ErrorCode::ConfigInvalid, "unknown model family '" + std::string(s) + "' (rf|knn|svr|mlp|conv)");
}

constexpr bool is_neural(Family f) { return f == Family::Mlp || f == Family::Conv; }

/// Hyperparameters by name. Ordered, so enumeration is lexicographic.
using ParamSet = std::map<std::string, double>;
using ParamGrid = std::map<std::string, std::vector<double>>;

/// Forest: n_trees, max_depth (0 = none), min_leaf, features_per_split
/// (0 = all, -1 = sqrt), bootstrap (0/1). KNN: k. SVR: C, epsilon, gamma,
/// kernel (0 = rbf, 1 = linear).
inline ParamSet default_params(Family f) {
    switch (f) {
    case Family::Forest:
        return {{"n_trees", 100}, {"max_depth", 0}, {"min_leaf", 1}, {"features_per_split", 0}, {"bootstrap", 1}};
    case Family::Knn: return {{"k", 5}};
    case Family::Svr: return {{"C", 10}, {"epsilon", 1}, {"gamma", 0.1}, {"kernel", 0}};
    case Family::Mlp:
    case Family::Conv: return {{"epochs", 200}, {"lr", 1e-3}, {"batch_size", 16}};
    }
    return {};
}

inline ParamGrid default_grid(Family f) {
    switch (f) {
    case Family::Forest:
        return {{"n_trees", {100, 300}}, {"max_depth", {0, 8}}, {"min_leaf", {1, 5}}, {"features_per_split", {0, -1}}};
    case Family::Knn: return {{"k", {1, 3, 5, 7, 9, 11, 13, 15}}};
    case Family::Svr: return {{"C", {0.1, 1, 10, 100}}, {"gamma", {0.01, 0.1, 1}}, {"epsilon", {0.1, 1}}};
    case Family::Mlp:
    case Family::Conv: return {};
    }
    return {};
}

/// Every grid point in lexicographic order of parameter names, the last name
/// varying fastest.
inline std::vector<ParamSet> enumerate_grid(const ParamGrid& grid) {
    std::vector<ParamSet> points{ParamSet{}};
    for (const auto& [name, values] : grid) {
        if (values.empty()) throw Error(ErrorCode::ConfigInvalid, "grid parameter '" + name + "' has no values");
        std::vector<ParamSet> next;
        next.reserve(points.size() * values.size());
        for (const auto& p : points)
            for (double v : values) {
                auto q = p;
                q[name] = v;
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    return points;
}

namespace detail {

inline double param_or(const ParamSet& p, const std::string& name, double fallback) {
    const auto it = p.find(name);
    return it == p.end() ? fallback : it->second;
}

inline int int_param(const ParamSet& p, const std::string& name, double fallback) {
    const double v = param_or(p, name, fallback);
    if (v != std::floor(v)) throw Error(ErrorCode::InvalidHyperparameter, name + " must be an integer");
    return static_cast<int>(v);
}

} // namespace detail

inline ForestParams forest_params(const ParamSet& p) {
    const auto d = default_params(Family::Forest);
    ForestParams fp;
    fp.n_trees = detail::int_param(p, "n_trees", d.at("n_trees"));
    fp.tree.max_depth = detail::int_param(p, "max_depth", d.at("max_depth"));
    fp.tree.min_leaf = detail::int_param(p, "min_leaf", d.at("min_leaf"));
    fp.tree.features_per_split = detail::int_param(p, "features_per_split", d.at("features_per_split"));
    fp.bootstrap = detail::param_or(p, "bootstrap", d.at("bootstrap")) != 0.0;
    return fp;
}

inline SvrParams svr_params(const ParamSet& p) {
    const auto d = default_params(Family::Svr);
    SvrParams sp;
    sp.C = detail::param_or(p, "C", d.at("C"));
    sp.epsilon = detail::param_or(p, "epsilon", d.at("epsilon"));
    sp.gamma = detail::param_or(p, "gamma", d.at("gamma"));
    sp.kernel = detail::param_or(p, "kernel", d.at("kernel")) == 1.0 ? KernelType::Linear : KernelType::Rbf;
    return sp;
}

using ClassicalModel = std::variant<ForestModel, KnnModel, SvrModel>;

/// Forest sees raw features; KNN and SVR standardize internally.
inline ClassicalModel fit_classical(Family family, const Matrix& X, const Vector& y, const ParamSet& params,
                                    std::uint64_t seed, unsigned threads = 1) {
    switch (family) {
    case Family::Forest: return fit_random_forest(X, y, forest_params(params), seed, threads);
    case Family::Knn:
        return fit_knn(X, y, detail::int_param(params, "k", default_params(Family::Knn).at("k")), true);
    case Family::Svr: return fit_svr(X, y, svr_params(params));
    default:
        throw Error(ErrorCode::InvalidHyperparameter,
                    std::string(to_string(family)) + " is not a classical regressor family");
    }
}

inline double predict(const ClassicalModel& model, const Vector& x) {
    return std::visit([&](const auto& m) { return m.predict(x); }, model);
}

inline Family family_of(const ClassicalModel& model) {
    switch (model.index()) {
    case 0: return Family::Forest;
    case 1: return Family::Knn;
    default: return Family::Svr;
    }
}

} // namespace capev
