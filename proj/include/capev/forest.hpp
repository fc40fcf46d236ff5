#pragma once

// CART regression trees and bagged random forests with impurity importance.

#include "capev/error.hpp"
#include "capev/parallel.hpp"
#include "capev/rng.hpp"
#include "capev/standardizer.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace capev {

struct TreeParams {
    int max_depth = 0;          // 0: unlimited
    int min_leaf = 1;
    int features_per_split = 0; // 0: all, -1: floor(sqrt(p)), k > 0: k
};

struct TreeNode {
    int feature = -1; // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;     // mean training target of the node
    std::size_t samples = 0;
    double sse_decrease = 0.0;

    bool is_leaf() const noexcept { return feature < 0; }
};

struct RegressionTree {
    std::vector<TreeNode> nodes; // nodes[0] is the root

    template <typename Row>
    double predict(const Row& x) const {
        if (nodes.empty()) throw Error(ErrorCode::UntrainedModel, "tree has no nodes");
        int at = 0;
        while (!nodes[static_cast<std::size_t>(at)].is_leaf()) {
            const auto& n = nodes[static_cast<std::size_t>(at)];
            at = x(n.feature) <= n.threshold ? n.left : n.right;
        }
        return nodes[static_cast<std::size_t>(at)].value;
    }

    int depth() const {
        std::vector<int> d(nodes.size(), 0);
        int deepest = 0;
        for (std::size_t i = 0; i < nodes.size(); ++i) {
            deepest = std::max(deepest, d[i]);
            if (!nodes[i].is_leaf()) {
                d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
                d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
            }
        }
        return deepest;
    }
};

/// Result of an exhaustive search for the best single split of some rows.
struct SplitChoice {
    int feature = -1;
    double threshold = 0.0;
    double child_sse = 0.0; // sum of the two children's squared deviations
};

namespace detail {

/// Candidate `a` beats incumbent `b` only by more than rounding noise, so
/// mathematically tied splits resolve to the earlier (feature, threshold).
inline bool clearly_less(double a, double b, double scale) {
    return a < b - 1e-12 * std::max(1.0, scale);
}

inline int resolve_features_per_split(int requested, int p) {
    if (requested == 0 || requested >= p) return p;
    if (requested < 0) return std::max(1, static_cast<int>(std::floor(std::sqrt(static_cast<double>(p)))));
    return requested;
}

/// Best variance-reducing split of `rows` over `features` (ascending).
inline SplitChoice best_split(const Matrix& X, const Vector& y, const std::vector<std::size_t>& rows,
                              const std::vector<int>& features, int min_leaf, double centre, double scale) {
    SplitChoice best;
    best.child_sse = std::numeric_limits<double>::infinity();
    const std::size_t m = rows.size();
    std::vector<std::size_t> order(rows);
    for (int f : features) {
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return X(static_cast<Eigen::Index>(a), f) < X(static_cast<Eigen::Index>(b), f); });
        double total = 0.0, total_sq = 0.0;
        for (std::size_t r : order) {
            const double v = y(static_cast<Eigen::Index>(r)) - centre;
            total += v;
            total_sq += v * v;
        }
        double left = 0.0, left_sq = 0.0;
        for (std::size_t pos = 0; pos + 1 < m; ++pos) {
            const double v = y(static_cast<Eigen::Index>(order[pos])) - centre;
            left += v;
            left_sq += v * v;
            const double xa = X(static_cast<Eigen::Index>(order[pos]), f);
            const double xb = X(static_cast<Eigen::Index>(order[pos + 1]), f);
            if (!(xa < xb)) continue;
            const auto n_left = static_cast<double>(pos + 1);
            const auto n_right = static_cast<double>(m - pos - 1);
            if (n_left < min_leaf || n_right < min_leaf) continue;
            const double right = total - left;
            const double right_sq = total_sq - left_sq;
            const double sse = std::max(0.0, left_sq - left * left / n_left) +
                               std::max(0.0, right_sq - right * right / n_right);
            if (clearly_less(sse, best.child_sse, scale)) {
                best.feature = f;
                best.threshold = 0.5 * (xa + xb);
                best.child_sse = sse;
            }
        }
    }
    return best;
}

class TreeBuilder {
public:
    TreeBuilder(const Matrix& X, const Vector& y, const TreeParams& params, Rng& rng)
        : X_(X), y_(y), params_(params), rng_(rng),
          n_features_(static_cast<int>(X.cols())),
          per_split_(resolve_features_per_split(params.features_per_split, static_cast<int>(X.cols()))) {}

    RegressionTree build(std::vector<std::size_t> rows) {
        tree_.nodes.clear();
        grow(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    int grow(std::vector<std::size_t> rows, int depth) {
        const int index = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const std::size_t m = rows.size();
        double sum = 0.0;
        for (std::size_t r : rows) sum += y_(static_cast<Eigen::Index>(r));
        const double mean = sum / static_cast<double>(m);
        double sse = 0.0;
        for (std::size_t r : rows) {
            const double d = y_(static_cast<Eigen::Index>(r)) - mean;
            sse += d * d;
        }
        {
            auto& node = tree_.nodes[static_cast<std::size_t>(index)];
            node.value = mean;
            node.samples = m;
        }

        const double scale = sse + mean * mean * static_cast<double>(m);
        const bool depth_reached = params_.max_depth > 0 && depth >= params_.max_depth;
        if (depth_reached || m < 2 * static_cast<std::size_t>(std::max(1, params_.min_leaf)) ||
            sse <= 1e-12 * std::max(1.0, scale))
            return index;

        const SplitChoice split =
            best_split(X_, y_, rows, sample_features(), std::max(1, params_.min_leaf), mean, scale);
        if (split.feature < 0 || !clearly_less(split.child_sse, sse, scale)) return index;

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows)
            (X_(static_cast<Eigen::Index>(r), split.feature) <= split.threshold ? left_rows : right_rows).push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        const int left = grow(std::move(left_rows), depth + 1);
        const int right = grow(std::move(right_rows), depth + 1);
        auto& node = tree_.nodes[static_cast<std::size_t>(index)];
        node.feature = split.feature;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        node.sse_decrease = sse - split.child_sse;
        return index;
    }

    std::vector<int> sample_features() {
        std::vector<int> all(static_cast<std::size_t>(n_features_));
        std::iota(all.begin(), all.end(), 0);
        if (per_split_ >= n_features_) return all;
        // Partial Fisher-Yates: the first per_split_ slots are the sample.
        for (int i = 0; i < per_split_; ++i) {
            const auto j = i + static_cast<int>(rng_.below(static_cast<std::uint64_t>(n_features_ - i)));
            std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
        }
        all.resize(static_cast<std::size_t>(per_split_));
        std::sort(all.begin(), all.end());
        return all;
    }

    const Matrix& X_;
    const Vector& y_;
    TreeParams params_;
    Rng& rng_;
    int n_features_;
    int per_split_;
    RegressionTree tree_;
};

inline void check_training_data(const Matrix& X, const Vector& y, Eigen::Index min_rows) {
    if (X.rows() == 0 || X.cols() == 0) throw Error(ErrorCode::EmptyData, "no training data");
    if (X.rows() != y.size())
        throw Error(ErrorCode::LengthMismatch, std::to_string(X.rows()) + " rows vs " +
                                                   std::to_string(y.size()) + " targets");
    if (X.rows() < min_rows)
        throw Error(ErrorCode::EmptyData, "need at least " + std::to_string(min_rows) + " rows");
    if (!X.allFinite() || !y.allFinite()) throw Error(ErrorCode::EmptyData, "non-finite training values");
}

inline void check_tree_params(const TreeParams& p) {
    if (p.max_depth < 0 || p.min_leaf < 1 || p.features_per_split < -1)
        throw Error(ErrorCode::InvalidHyperparameter, "bad tree hyperparameters");
}

} // namespace detail

/// CART regression tree: each split minimizes the children's summed squared
/// deviation over the sampled features, thresholds are midpoints between
/// consecutive distinct values, ties go to the lowest feature then the lowest
/// threshold.
inline RegressionTree fit_regression_tree(const Matrix& X, const Vector& y, const TreeParams& params,
                                          std::uint64_t seed) {
    detail::check_training_data(X, y, 1);
    detail::check_tree_params(params);
    Rng rng(seed);
    std::vector<std::size_t> rows(static_cast<std::size_t>(X.rows()));
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return detail::TreeBuilder(X, y, params, rng).build(std::move(rows));
}

struct ForestParams {
    int n_trees = 100;
    TreeParams tree;
    bool bootstrap = true;
};

struct ForestModel {
    ForestParams params;
    std::uint64_t seed = 0;
    Eigen::Index n_features = 0;
    std::vector<RegressionTree> trees;

    template <typename Row>
    double predict(const Row& x) const {
        if (trees.empty()) throw Error(ErrorCode::UntrainedModel, "forest has no trees");
        if (x.size() != n_features)
            throw Error(ErrorCode::ShapeMismatch, "expected " + std::to_string(n_features) + " features");
        double sum = 0.0;
        for (const auto& t : trees) sum += t.predict(x);
        return sum / static_cast<double>(trees.size());
    }
};

/// Each tree sees its own bootstrap sample (unless disabled) and draws from
/// its own RNG stream derived from (seed, tree index), so the model does not
/// depend on the worker count.
inline ForestModel fit_random_forest(const Matrix& X, const Vector& y, const ForestParams& params,
                                     std::uint64_t seed, unsigned threads = 1) {
    detail::check_training_data(X, y, 2);
    detail::check_tree_params(params.tree);
    if (params.n_trees < 1) throw Error(ErrorCode::InvalidHyperparameter, "n_trees must be >= 1");

    ForestModel model;
    model.params = params;
    model.seed = seed;
    model.n_features = X.cols();
    model.trees.resize(static_cast<std::size_t>(params.n_trees));
    const auto n = static_cast<std::size_t>(X.rows());
    parallel_for(model.trees.size(), threads, [&](std::size_t t) {
        Rng rng(derive_seed(seed, t));
        std::vector<std::size_t> rows(n);
        if (params.bootstrap)
            for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
        else
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        model.trees[t] = detail::TreeBuilder(X, y, params.tree, rng).build(std::move(rows));
    });
    return model;
}

/// Impurity importance: squared-deviation decrease per split, summed per
/// feature over all trees and normalized to total 1 (all zeros when no tree
/// ever split).
inline std::vector<double> feature_importances(const ForestModel& model) {
    if (model.trees.empty()) throw Error(ErrorCode::UntrainedModel, "forest has no trees");
    std::vector<double> imp(static_cast<std::size_t>(model.n_features), 0.0);
    for (const auto& tree : model.trees)
        for (const auto& node : tree.nodes)
            if (!node.is_leaf()) imp[static_cast<std::size_t>(node.feature)] += node.sse_decrease;
    const double total = std::accumulate(imp.begin(), imp.end(), 0.0);
    if (total > 0.0)
        for (double& v : imp) v /= total;
    return imp;
}

} // namespace capev
