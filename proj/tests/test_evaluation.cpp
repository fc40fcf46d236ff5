#include <capev/report.hpp>
#include <capev/split.hpp>

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

using namespace capev;
using Catch::Approx;

namespace {

bool has_code(const std::function<void()>& fn, ErrorCode code) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code() == code;
    }
    return false;
}

std::vector<double> uniform_scores(std::size_t n, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(0.0, 100.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(gen);
    return v;
}

std::vector<std::string> make_ids(std::size_t n) {
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("id" + std::to_string(i));
    return ids;
}

std::size_t count(const std::string& haystack, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
    return n;
}

} // namespace

TEST_CASE("rmse examples", "[evaluation][metrics]") {
    const std::vector<double> a{1.5, -2.0, 7.25};
    REQUIRE(rmse(a, a) == 0.0);
    REQUIRE(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == Approx(3.53553).margin(5e-6));
    REQUIRE(rmse(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == std::sqrt(12.5));
    REQUIRE(has_code([] { rmse(std::vector<double>{1}, std::vector<double>{1, 2}); }, ErrorCode::LengthMismatch));
    REQUIRE(has_code([] { rmse(std::vector<double>{}, std::vector<double>{}); }, ErrorCode::Empty));
}

TEST_CASE("rmse is permutation invariant and zero only on equality", "[evaluation][metrics][property]") {
    std::mt19937 gen(3);
    for (int trial = 0; trial < 100; ++trial) {
        auto p = uniform_scores(20, static_cast<std::uint32_t>(trial));
        auto t = uniform_scores(20, static_cast<std::uint32_t>(trial + 1000));
        const double base = rmse(p, t);
        REQUIRE(base > 0.0);
        std::vector<std::size_t> perm(20);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), gen);
        std::vector<double> pp, tt;
        for (auto i : perm) {
            pp.push_back(p[i]);
            tt.push_back(t[i]);
        }
        REQUIRE(rmse(pp, tt) == Approx(base).epsilon(1e-14));
    }
}

TEST_CASE("pearson examples", "[evaluation][metrics]") {
    const std::vector<double> x{1, 2, 3, 7, -4};
    std::vector<double> neg;
    for (double v : x) neg.push_back(-v);
    REQUIRE(pearson(x, x) == 1.0);
    REQUIRE(pearson(x, neg) == -1.0);
    REQUIRE(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{2, 4, 6}) == Approx(1.0).margin(1e-15));
    REQUIRE(has_code([] { pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}); }, ErrorCode::ConstantInput));
    REQUIRE_FALSE(try_pearson(std::vector<double>{1, 2, 3}, std::vector<double>{5, 5, 5}).has_value());
    REQUIRE(has_code([] { pearson(std::vector<double>{1}, std::vector<double>{1}); }, ErrorCode::TooFewSamples));
}

TEST_CASE("pearson affine invariance", "[evaluation][metrics][property]") {
    std::mt19937 gen(4);
    std::uniform_real_distribution<double> scale(0.01, 100.0), shift(-1000.0, 1000.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto x = uniform_scores(30, static_cast<std::uint32_t>(trial));
        const auto y = uniform_scores(30, static_cast<std::uint32_t>(trial + 500));
        const double r = pearson(x, y);
        const double a = scale(gen), b = shift(gen), c = scale(gen), d = shift(gen);
        std::vector<double> xa, yc, yneg;
        for (double v : x) xa.push_back(a * v + b);
        for (double v : y) {
            yc.push_back(c * v + d);
            yneg.push_back(-v);
        }
        REQUIRE(std::abs(pearson(xa, yc) - r) <= 1e-12);
        REQUIRE(std::abs(pearson(x, yneg) + r) <= 1e-12);
        REQUIRE(std::abs(r) <= 1.0);
    }
}

TEST_CASE("balanced split arithmetic", "[evaluation][split]") {
    std::vector<double> scores(100);
    for (std::size_t i = 0; i < 100; ++i) scores[i] = static_cast<double>(i);
    const auto ids = make_ids(100);
    const auto split = balanced_split(ids, scores, 0.2, 5, 1);
    REQUIRE(split.test.size() == 20);
    REQUIRE(split.train.size() == 80);
    std::array<int, 5> per_bin{};
    for (const auto& id : split.test) ++per_bin[static_cast<std::size_t>(std::stoi(id.substr(2)) / 20)];
    for (int c : per_bin) REQUIRE(c == 4);

    REQUIRE(has_code([&] { balanced_split(std::span(ids).first(3), std::span(scores).first(3), 0.2, 5, 1); },
                     ErrorCode::TooFewSamples));
    REQUIRE(has_code([&] { balanced_split(ids, scores, 0.2, 1, 1); }, ErrorCode::TooFewSamples));
    REQUIRE_THROWS_AS(balanced_split(ids, scores, 1.0, 5, 1), Error);
}

TEST_CASE("balanced split is a deterministic, stratified partition", "[evaluation][split][property]") {
    std::mt19937 gen(5);
    std::uniform_int_distribution<std::size_t> size(10, 300), bins(2, 8);
    std::uniform_real_distribution<double> frac(0.05, 0.5);
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t n = size(gen), b = bins(gen);
        const double f = frac(gen);
        auto scores = uniform_scores(n, static_cast<std::uint32_t>(trial));
        if (trial % 4 == 0)
            for (auto& s : scores) s = std::round(s / 25.0) * 25.0; // heavy ties
        const auto ids = make_ids(n);
        const auto split = balanced_split(ids, scores, f, b, static_cast<std::uint64_t>(trial));
        std::set<std::string> tr(split.train.begin(), split.train.end()), te(split.test.begin(), split.test.end());
        REQUIRE(tr.size() + te.size() == n);
        for (const auto& id : te) REQUIRE(tr.count(id) == 0);

        // Per-bin counts, recomputed from an independent quantile binning.
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return scores[x] < scores[y]; });
        for (std::size_t k = 0; k < b; ++k) {
            const std::size_t lo = k * n / b, hi = (k + 1) * n / b;
            std::size_t in_test = 0;
            for (std::size_t pos = lo; pos < hi; ++pos) in_test += te.count(ids[order[pos]]);
            REQUIRE(std::abs(static_cast<double>(in_test) - static_cast<double>(hi - lo) * f) <= 1.0);
        }
        const auto again = balanced_split(ids, scores, f, b, static_cast<std::uint64_t>(trial));
        REQUIRE(again.test == split.test);
        REQUIRE(again.train == split.train);
    }
}

TEST_CASE("stratified folds are balanced", "[evaluation][split]") {
    const auto scores = uniform_scores(53, 6);
    const auto folds = stratified_folds(scores, 5, 5, 2);
    std::array<int, 5> sizes{};
    for (int f : folds) ++sizes[static_cast<std::size_t>(f)];
    REQUIRE(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    REQUIRE(stratified_folds(scores, 5, 5, 2) == folds);
    REQUIRE(has_code([&] { stratified_folds(std::span(scores).first(3), 5, 5, 2); }, ErrorCode::TooFewSamples));
}

TEST_CASE("score_attribute and averages", "[evaluation][report]") {
    const std::vector<double> truth{10, 20, 30, 40};
    std::vector<std::optional<double>> perfect(truth.begin(), truth.end());
    const auto row = score_attribute("severity", perfect, truth);
    REQUIRE(row.rmse == 0.0);
    REQUIRE(row.pearson == 1.0);
    REQUIRE(row.scatter.size() == 4);

    const std::vector<std::optional<double>> constant(4, 25.0);
    const auto flat = score_attribute("pitch", constant, truth);
    REQUIRE_FALSE(flat.pearson.has_value());
    REQUIRE(flat.rmse == Approx(std::sqrt((225.0 + 25 + 25 + 225) / 4)));

    std::vector<std::optional<double>> partial = perfect;
    partial[1].reset();
    const auto part = score_attribute("strain", partial, truth);
    REQUIRE(part.n == 3);
    REQUIRE(part.failed == 1);

    EvalReport rep;
    std::mt19937 gen(7);
    std::uniform_real_distribution<double> u(0, 30);
    for (auto a : kAttributes) {
        std::vector<std::optional<double>> p;
        for (double t : truth) p.push_back(t + u(gen));
        rep.rows.push_back(score_attribute(std::string(a), p, truth));
    }
    compute_averages(rep);
    double s = 0, r = 0;
    for (const auto& x : rep.rows) {
        s += x.rmse;
        r += *x.pearson;
    }
    REQUIRE(rep.avg_rmse == Approx(s / 6).epsilon(1e-15));
    REQUIRE(*rep.avg_pearson == Approx(r / 6).epsilon(1e-15));

    rep.rows[2] = flat;
    compute_averages(rep);
    REQUIRE_FALSE(rep.avg_pearson.has_value());
}

TEST_CASE("correlation table layout and oracles", "[evaluation][report]") {
    std::mt19937 gen(8);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<FeatureVector> feats;
    std::vector<CapevScores> dependent, independent;
    for (int i = 0; i < 200; ++i) {
        FeatureVector f{u(gen) * 1000, u(gen) * 0.02, 0, u(gen) * 0.2, u(gen) * 30, 0, 40};
        feats.push_back(f);
        CapevScores d, ind;
        for (std::size_t a = 0; a < 6; ++a) {
            d[a] = std::min(100.0, 100.0 * f.jitter * 60.0);
            ind[a] = 100.0 * u(gen);
        }
        dependent.push_back(d);
        independent.push_back(ind);
    }
    const auto dep = correlation_table(feats, dependent);
    for (std::size_t a = 0; a < 6; ++a) REQUIRE(*dep.cells[0][a] > 0.95);
    const auto null = correlation_table(feats, independent);
    for (const auto& row : null.cells)
        for (const auto& cell : row) REQUIRE(std::abs(*cell) < 0.3);
    REQUIRE(CorrelationTable::parameters[2] == "hnr");

    std::vector<FeatureVector> flat(3, FeatureVector{});
    const auto undefined = correlation_table(flat, std::vector<CapevScores>(3, CapevScores{{1, 2, 3, 4, 5, 6}}));
    REQUIRE_FALSE(undefined.cells[0][0].has_value());
}

TEST_CASE("scatter exports and rendered reports", "[evaluation][report]") {
    const ScatterPairs pairs{{10, 12}, {50.5, 40}, {90, 99}};
    const auto csv = scatter_csv(pairs);
    REQUIRE(count(csv, "\n") == 4);
    REQUIRE(csv.rfind("predicted,true\n", 0) == 0);
    const auto svg = scatter_svg(pairs, "Scatter plot of the strain score");
    REQUIRE(count(svg, "<circle") == 3);
    REQUIRE(svg.find("Predicted score") != std::string::npos);

    EvalReport empty;
    REQUIRE(has_code([&] { render_report_text(empty); }, ErrorCode::IoError));
    REQUIRE(has_code([&] { render_report(empty, std::filesystem::temp_directory_path() / "capev_empty"); },
                     ErrorCode::IoError));

    EvalReport rep;
    rep.title = "rf on test set";
    const std::vector<double> truth{10, 20, 30};
    for (auto a : kAttributes)
        rep.rows.push_back(score_attribute(std::string(a), {12.0, 18.0, 33.0}, truth));
    compute_averages(rep);
    rep.importance = {{"jitter", 0.6, 1.5}, {"hnr", 0.4, std::nullopt}};
    const auto text = render_report_text(rep);
    REQUIRE(text.find("Avg.") != std::string::npos);
    REQUIRE(count(render_report_csv(rep), "\n") == 8);

    const auto dir = std::filesystem::temp_directory_path() / "capev_test_report";
    std::filesystem::remove_all(dir);
    render_report(rep, dir);
    for (auto name : {"report.txt", "report.csv", "importance.csv", "scatter_strain.csv", "scatter_strain.svg"})
        REQUIRE(std::filesystem::exists(dir / name));
    std::filesystem::remove_all(dir);
}
