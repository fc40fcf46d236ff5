#include <capev/grid_search.hpp>

#include "oracles.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace capev;
using namespace capev::test;
using Catch::Approx;

namespace {

Matrix random_matrix(Eigen::Index n, Eigen::Index p, std::mt19937& gen, bool integer_valued = false) {
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_int_distribution<int> small(0, 4);
    Matrix X(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < p; ++j) X(i, j) = integer_valued ? small(gen) : u(gen);
    return X;
}

Vector random_vector(Eigen::Index n, std::mt19937& gen) {
    std::normal_distribution<double> g(0.0, 10.0);
    Vector y(n);
    for (auto& v : y) v = g(gen);
    return y;
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

TEST_CASE("standardizer examples", "[classical][standardizer]") {
    Matrix X(3, 2);
    X << 1, 5, 2, 5, 3, 5;
    const auto s = fit_standardizer(X);
    const Matrix Z = s.apply(X);
    REQUIRE(Z(0, 0) == Approx(-1.2247).epsilon(1e-4));
    REQUIRE(Z(1, 0) == 0.0);
    REQUIRE(Z(2, 0) == Approx(1.2247).epsilon(1e-4));
    for (int i = 0; i < 3; ++i) REQUIRE(Z(i, 1) == 0.0);
    REQUIRE((s.apply_row(s.means).array() == 0.0).all());
    REQUIRE(has_code([] { fit_standardizer(Matrix::Ones(1, 3)); }, ErrorCode::TooFewRows));
}

TEST_CASE("standardized columns have zero mean and unit std", "[classical][standardizer][property]") {
    std::mt19937 gen(1);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix X = random_matrix(5 + trial, 4, gen);
        X.col(1) = X.col(1) * 1e3 + Vector::Constant(X.rows(), 77.0);
        const Matrix Z = fit_standardizer(X).apply(X);
        for (Eigen::Index c = 0; c < Z.cols(); ++c) {
            const double mean = Z.col(c).mean();
            const double sd = std::sqrt((Z.col(c).array() - mean).square().mean());
            REQUIRE(std::abs(mean) < 1e-9);
            REQUIRE(std::abs(sd - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("depth-1 tree splits at the obvious midpoint", "[classical][tree]") {
    Matrix X(4, 1);
    X << 0, 1, 2, 3;
    Vector y(4);
    y << 0, 0, 10, 10;
    const auto tree = fit_regression_tree(X, y, {.max_depth = 1}, 0);
    REQUIRE(tree.nodes.size() == 3);
    REQUIRE(tree.nodes[0].feature == 0);
    REQUIRE(tree.nodes[0].threshold == 1.5);
    REQUIRE(tree.nodes[static_cast<std::size_t>(tree.nodes[0].left)].value == 0.0);
    REQUIRE(tree.nodes[static_cast<std::size_t>(tree.nodes[0].right)].value == 10.0);

    const auto brute = brute_force_split(X, y);
    REQUIRE(brute.feature == 0);
    REQUIRE(brute.threshold == 1.5);
}

TEST_CASE("constant targets give a single leaf", "[classical][tree]") {
    Matrix X(3, 2);
    X << 1, 2, 3, 4, 5, 6;
    const Vector y = Vector::Constant(3, 7.0);
    const auto tree = fit_regression_tree(X, y, {}, 0);
    REQUIRE(tree.nodes.size() == 1);
    REQUIRE(tree.predict(Vector::Zero(2)) == 7.0);
    REQUIRE(has_code([] { fit_regression_tree(Matrix(0, 2), Vector(0), {}, 0); }, ErrorCode::EmptyData));
}

TEST_CASE("depth-1 tree equals the exhaustive best split", "[classical][tree][property]") {
    std::mt19937 gen(2024);
    std::uniform_int_distribution<int> rows(2, 12), cols(1, 4);
    for (int trial = 0; trial < 200; ++trial) {
        const Eigen::Index n = rows(gen), p = cols(gen);
        const Matrix X = random_matrix(n, p, gen, trial % 2 == 0);
        const Vector y = random_vector(n, gen);
        const auto tree = fit_regression_tree(X, y, {.max_depth = 1}, 0);
        const auto brute = brute_force_split(X, y);
        INFO("trial " << trial);
        if (brute.feature < 0) {
            REQUIRE(tree.nodes.size() == 1);
            continue;
        }
        REQUIRE(tree.nodes.size() == 3);
        const auto& root = tree.nodes[0];
        REQUIRE(root.feature == brute.feature);
        REQUIRE(root.threshold == brute.threshold);
        REQUIRE(tree.nodes[static_cast<std::size_t>(root.left)].value == Approx(brute.left_mean).epsilon(1e-12));
        REQUIRE(tree.nodes[static_cast<std::size_t>(root.right)].value == Approx(brute.right_mean).epsilon(1e-12));
    }
}

TEST_CASE("tree and forest predictions stay inside the target range", "[classical][forest][property]") {
    std::mt19937 gen(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = random_matrix(40, 3, gen);
        const Vector y = random_vector(40, gen);
        const auto tree = fit_regression_tree(X, y, {}, static_cast<std::uint64_t>(trial));
        const auto forest = fit_random_forest(X, y, {.n_trees = 10, .tree = {.features_per_split = -1}}, trial);
        const Matrix Q = random_matrix(30, 3, gen) * 3.0;
        for (Eigen::Index i = 0; i < Q.rows(); ++i) {
            const Vector q = Q.row(i).transpose();
            for (double v : {tree.predict(q), forest.predict(q)}) {
                REQUIRE(v >= y.minCoeff());
                REQUIRE(v <= y.maxCoeff());
            }
        }
        for (const auto& t : forest.trees)
            for (const auto& node : t.nodes)
                if (!node.is_leaf()) {
                    REQUIRE(node.left >= 0);
                    REQUIRE(node.right >= 0);
                }
    }
}

TEST_CASE("single-tree forest without bootstrap equals CART", "[classical][forest]") {
    std::mt19937 gen(8);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = random_matrix(30, 5, gen, trial % 3 == 0);
        const Vector y = random_vector(30, gen);
        const TreeParams tp{.max_depth = trial % 4, .min_leaf = 1 + trial % 3};
        const auto forest = fit_random_forest(X, y, {.n_trees = 1, .tree = tp, .bootstrap = false}, 99);
        const auto tree = fit_regression_tree(X, y, tp, 12345);
        const Matrix Q = random_matrix(50, 5, gen);
        for (Eigen::Index i = 0; i < Q.rows(); ++i)
            REQUIRE(forest.predict(Q.row(i).transpose()) == tree.predict(Q.row(i).transpose()));
    }
}

TEST_CASE("forest is identical for 1 and 8 worker threads", "[classical][forest]") {
    std::mt19937 gen(9);
    const Matrix X = random_matrix(80, 6, gen);
    const Vector y = random_vector(80, gen);
    const ForestParams fp{.n_trees = 24, .tree = {.features_per_split = -1}};
    const auto a = fit_random_forest(X, y, fp, 7, 1);
    const auto b = fit_random_forest(X, y, fp, 7, 8);
    REQUIRE(a.trees.size() == b.trees.size());
    for (std::size_t t = 0; t < a.trees.size(); ++t) {
        REQUIRE(a.trees[t].nodes.size() == b.trees[t].nodes.size());
        for (std::size_t k = 0; k < a.trees[t].nodes.size(); ++k) {
            const auto& u = a.trees[t].nodes[k];
            const auto& v = b.trees[t].nodes[k];
            REQUIRE(u.feature == v.feature);
            REQUIRE(u.threshold == v.threshold);
            REQUIRE(u.value == v.value);
        }
    }
    const auto c = fit_random_forest(X, y, fp, 8, 1);
    REQUIRE(c.trees[0].nodes.size() + c.trees[1].nodes.size() != 0);
    bool any_diff = false;
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        any_diff |= a.predict(X.row(i).transpose()) != c.predict(X.row(i).transpose());
    REQUIRE(any_diff);
}

TEST_CASE("impurity importance", "[classical][forest]") {
    std::mt19937 gen(10);
    Matrix X = random_matrix(150, 4, gen);
    X.col(3).setConstant(2.5);
    const Vector y = X.col(2) * 10.0;
    const auto forest = fit_random_forest(X, y, {.n_trees = 30, .tree = {}, .bootstrap = true}, 3);
    const auto imp = feature_importances(forest);
    REQUIRE(imp.size() == 4);
    double sum = 0.0;
    for (double v : imp) {
        REQUIRE(v >= 0.0);
        sum += v;
    }
    REQUIRE(sum == Approx(1.0).margin(1e-9));
    REQUIRE(std::max_element(imp.begin(), imp.end()) - imp.begin() == 2);
    REQUIRE(imp[3] == 0.0);
    REQUIRE(has_code([] { feature_importances(ForestModel{}); }, ErrorCode::UntrainedModel));
}

TEST_CASE("knn hand examples", "[classical][knn]") {
    Matrix X(3, 1);
    X << 0, 1, 10;
    Vector y(3);
    y << 0, 10, 100;
    const auto raw = fit_knn(X, y, 2, false);
    REQUIRE(raw.predict(Vector::Constant(1, 0.4)) == 5.0);

    const auto one = fit_knn(X, y, 1);
    for (Eigen::Index i = 0; i < 3; ++i) REQUIRE(one.predict(X.row(i).transpose()) == y(i));
    REQUIRE(fit_knn(X, y, 3).predict(Vector::Constant(1, -50.0)) == Approx(110.0 / 3.0));

    // Equidistant rows 0 and 2 from query 5 (unstandardized): lower index first.
    Matrix T(3, 1);
    T << 4, 100, 6;
    REQUIRE(fit_knn(T, y, 1, false).neighbors(Vector::Constant(1, 5.0)).front() == 0);

    REQUIRE(has_code([&] { fit_knn(X, y, 0); }, ErrorCode::InvalidHyperparameter));
    REQUIRE(has_code([&] { fit_knn(X, y, 4); }, ErrorCode::InvalidHyperparameter));
}

TEST_CASE("knn matches brute-force neighbor search", "[classical][knn][property]") {
    std::mt19937 gen(11);
    const Matrix X = random_matrix(60, 4, gen, true); // integer grid: plenty of distance ties
    const Vector y = random_vector(60, gen);
    for (int k : {1, 3, 7, 60}) {
        const auto model = fit_knn(X, y, k);
        const Matrix Z = fit_standardizer(X).apply(X);
        const auto s = fit_standardizer(X);
        for (int q = 0; q < 100; ++q) {
            const Vector query = random_matrix(1, 4, gen, q % 2 == 0).row(0).transpose();
            const auto expected = brute_force_neighbors(Z, s.apply_row(query), k);
            REQUIRE(model.neighbors(query) == expected);
            double mean = 0.0;
            for (auto i : expected) mean += y(i);
            REQUIRE(model.predict(query) == Approx(mean / k).epsilon(1e-12));
        }
    }
}

TEST_CASE("standardized knn ignores per-feature affine rescaling", "[classical][knn][property]") {
    std::mt19937 gen(12);
    std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-50.0, 50.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = random_matrix(40, 3, gen);
        const Vector y = random_vector(40, gen);
        Vector a(3), b(3);
        for (int j = 0; j < 3; ++j) {
            a(j) = scale(gen);
            b(j) = shift(gen);
        }
        const Matrix Xs = (X.array().rowwise() * a.transpose().array()).rowwise() + b.transpose().array();
        const auto m1 = fit_knn(X, y, 5);
        const auto m2 = fit_knn(Xs, y, 5);
        for (int q = 0; q < 20; ++q) {
            const Vector query = random_matrix(1, 3, gen).row(0).transpose();
            const Vector qs = query.cwiseProduct(a) + b;
            auto n1 = m1.neighbors(query), n2 = m2.neighbors(qs);
            std::sort(n1.begin(), n1.end());
            std::sort(n2.begin(), n2.end());
            REQUIRE(n1 == n2);
        }
    }
}

TEST_CASE("svr fits exactly linear data inside the tube", "[classical][svr]") {
    Matrix X(10, 1);
    Vector y(10);
    for (int i = 0; i < 10; ++i) {
        X(i, 0) = i;
        y(i) = 2.0 * i;
    }
    const SvrParams p{.C = 100, .epsilon = 0.1, .kernel = KernelType::Linear};
    const auto m = fit_svr(X, y, p);
    REQUIRE(m.converged);
    for (int i = 0; i < 10; ++i) REQUIRE(std::abs(m.predict(X.row(i).transpose()) - y(i)) <= 0.1 + 1e-3);
    for (auto c : m.coef) {
        REQUIRE(c >= -p.C);
        REQUIRE(c <= p.C);
    }
    REQUIRE(std::abs(m.coef.sum()) <= 1e-6);

    const auto raw = fit_svr(X, y, {.C = 100, .epsilon = 0.1, .kernel = KernelType::Linear, .standardize = false});
    for (int i = 0; i < 10; ++i) REQUIRE(std::abs(raw.predict(X.row(i).transpose()) - y(i)) <= 0.1 + 1e-3);
}

TEST_CASE("svr dual feasibility on random problems", "[classical][svr][property]") {
    std::mt19937 gen(13);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix X = random_matrix(25, 3, gen);
        const Vector y = random_vector(25, gen);
        const SvrParams p{.C = trial % 2 ? 1.0 : 10.0, .epsilon = 0.5, .gamma = 0.3};
        const auto m = fit_svr(X, y, p);
        REQUIRE(m.converged);
        REQUIRE(m.final_violation < p.tolerance);
        for (auto c : m.coef) REQUIRE(std::abs(c) <= p.C);
        REQUIRE(std::abs(m.coef.sum()) <= 1e-6);
    }
}

TEST_CASE("svr on constant targets predicts the constant", "[classical][svr]") {
    std::mt19937 gen(14);
    const Matrix X = random_matrix(20, 2, gen);
    const Vector y = Vector::Constant(20, 42.0);
    for (auto kernel : {KernelType::Rbf, KernelType::Linear}) {
        const auto m = fit_svr(X, y, {.C = 10, .epsilon = 0.5, .kernel = kernel});
        for (int q = 0; q < 20; ++q)
            REQUIRE(std::abs(m.predict(random_matrix(1, 2, gen).row(0).transpose() * 5.0) - 42.0) <= 0.5);
    }
    REQUIRE(has_code([&] { fit_svr(X, y, {.C = 0}); }, ErrorCode::InvalidHyperparameter));
    REQUIRE(has_code([&] { fit_svr(X, y, {.epsilon = -1}); }, ErrorCode::InvalidHyperparameter));
}

TEST_CASE("svr reports non-convergence instead of throwing", "[classical][svr]") {
    std::mt19937 gen(15);
    const Matrix X = random_matrix(30, 2, gen);
    const Vector y = random_vector(30, gen);
    const auto m = fit_svr(X, y, {.C = 100, .epsilon = 0.01, .max_updates = 3});
    REQUIRE_FALSE(m.converged);
    REQUIRE(m.updates == 3);
    REQUIRE(m.final_violation >= 1e-3);
}

TEST_CASE("grid enumeration is lexicographic", "[classical][grid]") {
    const auto points = enumerate_grid({{"b", {1, 2}}, {"a", {10, 20, 30}}});
    REQUIRE(points.size() == 6);
    REQUIRE(points[0] == ParamSet{{"a", 10}, {"b", 1}});
    REQUIRE(points[1] == ParamSet{{"a", 10}, {"b", 2}});
    REQUIRE(points[5] == ParamSet{{"a", 30}, {"b", 2}});
    REQUIRE(enumerate_grid(default_grid(Family::Forest)).size() == 16);
    REQUIRE(enumerate_grid(default_grid(Family::Svr)).size() == 24);
    REQUIRE(default_grid(Family::Knn).at("k") == std::vector<double>{1, 3, 5, 7, 9, 11, 13, 15});
    REQUIRE(has_code([] { parse_family("boost"); }, ErrorCode::ConfigInvalid));
    REQUIRE(parse_family("svr") == Family::Svr);
}

TEST_CASE("grid search prefers k=1 when k=50 underfits", "[classical][grid]") {
    // Smooth signal with many oscillations: averaging 50 of 54 training
    // points flattens it, a single neighbor tracks it.
    std::mt19937 gen(16);
    std::normal_distribution<double> noise(0.0, 0.05);
    Matrix X(60, 1);
    Vector y(60);
    for (int i = 0; i < 60; ++i) {
        X(i, 0) = i / 59.0;
        y(i) = 10.0 * std::sin(6.0 * std::numbers::pi * X(i, 0)) + noise(gen);
    }
    const GridSearchSpec spec{.grid = {{"k", {1, 50}}}, .cv_folds = 10, .seed = 4};
    const auto result = grid_search(spec, Family::Knn, X, y);
    REQUIRE(result.best.at("k") == 1.0);
    REQUIRE(result.table.size() == 2);
    REQUIRE(result.table[0].fold_rmse.size() == 10);
    REQUIRE(result.table[0].mean_rmse * 3 < result.table[1].mean_rmse);

    const auto again = grid_search(spec, Family::Knn, X, y);
    for (std::size_t g = 0; g < 2; ++g) REQUIRE(again.table[g].fold_rmse == result.table[g].fold_rmse);

    const auto single = grid_search({.grid = {{"k", {3}}}, .cv_folds = 5, .seed = 4}, Family::Knn, X, y);
    REQUIRE(single.best.at("k") == 3.0);
    REQUIRE(single.best_rmse == single.table[0].mean_rmse);
}

TEST_CASE("grid search scores failed cells as infinity", "[classical][grid]") {
    std::mt19937 gen(17);
    const Matrix X = random_matrix(20, 2, gen);
    const Vector y = random_vector(20, gen);
    const auto result = grid_search({.grid = {{"k", {100, 2}}}, .cv_folds = 4}, Family::Knn, X, y);
    REQUIRE(std::isinf(result.table[0].mean_rmse));
    REQUIRE_FALSE(result.table[0].error.empty());
    REQUIRE(result.best.at("k") == 2.0);
    REQUIRE(has_code([&] { grid_search({.grid = {}}, Family::Knn, X, y); }, ErrorCode::ConfigInvalid));
    REQUIRE(has_code([&] { grid_search({.grid = {{"k", {1}}}, .cv_folds = 1}, Family::Knn, X, y); },
                     ErrorCode::ConfigInvalid));
}

TEST_CASE("forest and svr grid search run end to end", "[classical][grid]") {
    std::mt19937 gen(18);
    const Matrix X = random_matrix(50, 3, gen);
    const Vector y = X.col(0) * 3.0 + X.col(1);
    const auto rf = grid_search({.grid = {{"n_trees", {5}}, {"max_depth", {1, 0}}}, .cv_folds = 3, .seed = 1},
                                Family::Forest, X, y);
    REQUIRE(rf.best.at("max_depth") == 0.0);
    const auto svr = grid_search({.grid = {{"C", {10}}, {"kernel", {1}}, {"epsilon", {0.1}}}, .cv_folds = 3},
                                 Family::Svr, X, y);
    REQUIRE(svr.best_rmse < 0.5);
    const auto a = grid_search({.grid = {{"n_trees", {5, 6}}}, .cv_folds = 3, .seed = 2, .threads = 1}, Family::Forest, X, y);
    const auto b = grid_search({.grid = {{"n_trees", {5, 6}}}, .cv_folds = 3, .seed = 2, .threads = 4}, Family::Forest, X, y);
    for (std::size_t g = 0; g < 2; ++g) REQUIRE(a.table[g].fold_rmse == b.table[g].fold_rmse);
}
