#pragma once

// Evaluation reports: per-attribute RMSE / Pearson rows with an "Avg." row,
// feature/score correlation grid, importance table, scatter exports.

#include "capev/error.hpp"
#include "capev/features.hpp"
#include "capev/metrics.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace capev {

inline constexpr std::array<std::string_view, 6> kAttributes{"severity", "breathiness", "pitch",
                                                             "loudness", "roughness",   "strain"};

/// The six CAPE-V attribute ratings, each on 0-100, in kAttributes order.
struct CapevScores {
    std::array<double, 6> values{};

    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }

    bool valid() const {
        for (double v : values)
            if (!(v >= 0.0 && v <= 100.0)) return false;
        return true;
    }
};

using ScatterPairs = std::vector<std::pair<double, double>>; // (predicted, true)

struct AttributeRow {
    std::string attribute;
    double rmse = 0.0;
    std::optional<double> pearson; // nullopt: undefined (constant input)
    std::size_t n = 0;
    std::size_t failed = 0;
    ScatterPairs scatter;
};

struct ImportanceRow {
    std::string feature;
    std::optional<double> impurity;    // forests only
    std::optional<double> permutation; // test RMSE increase when the column is shuffled
};

/// Pearson r of each acoustic parameter against each attribute.
struct CorrelationTable {
    static constexpr std::array<std::string_view, 4> parameters{"jitter", "shimmer", "hnr", "zcr"};
    std::array<std::array<std::optional<double>, 6>, 4> cells{};
};

struct EvalReport {
    std::string title;
    std::vector<AttributeRow> rows;
    double avg_rmse = 0.0;
    std::optional<double> avg_pearson; // undefined if any row's r is undefined
    std::vector<ImportanceRow> importance;
    std::optional<CorrelationTable> correlations;
    std::vector<std::pair<std::string, std::string>> info; // key/value lines (seeds, digests, choices)
};

/// Failed predictions (nullopt) are excluded and counted.
inline AttributeRow score_attribute(std::string name, const std::vector<std::optional<double>>& pred,
                                    const std::vector<double>& truth) {
    if (pred.size() != truth.size()) throw Error(ErrorCode::LengthMismatch, "predictions and truths differ in length");
    AttributeRow row;
    row.attribute = std::move(name);
    std::vector<double> p, t;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (!pred[i]) {
            ++row.failed;
            continue;
        }
        p.push_back(*pred[i]);
        t.push_back(truth[i]);
        row.scatter.emplace_back(*pred[i], truth[i]);
    }
    row.n = p.size();
    if (p.empty()) throw Error(ErrorCode::Empty, row.attribute + ": every prediction failed");
    row.rmse = rmse(p, t);
    row.pearson = p.size() >= 2 ? try_pearson(p, t) : std::nullopt;
    return row;
}

inline void compute_averages(EvalReport& report) {
    if (report.rows.empty()) throw Error(ErrorCode::Empty, "report has no rows");
    double sum_rmse = 0.0, sum_r = 0.0;
    bool all_r = true;
    for (const auto& row : report.rows) {
        sum_rmse += row.rmse;
        if (row.pearson) sum_r += *row.pearson; else all_r = false;
    }
    const auto n = static_cast<double>(report.rows.size());
    report.avg_rmse = sum_rmse / n;
    report.avg_pearson = all_r ? std::optional<double>(sum_r / n) : std::nullopt;
}

inline CorrelationTable correlation_table(const std::vector<FeatureVector>& features,
                                          const std::vector<CapevScores>& truths) {
    if (features.size() != truths.size()) throw Error(ErrorCode::LengthMismatch, "features and scores differ in length");
    if (features.size() < 2) throw Error(ErrorCode::TooFewSamples, "correlation table needs at least 2 samples");
    CorrelationTable table;
    for (std::size_t p = 0; p < CorrelationTable::parameters.size(); ++p) {
        std::vector<double> x;
        for (const auto& f : features) {
            switch (p) {
            case 0: x.push_back(f.jitter); break;
            case 1: x.push_back(f.shimmer); break;
            case 2: x.push_back(f.hnr); break;
            default: x.push_back(f.zcr); break;
            }
        }
        for (std::size_t a = 0; a < kAttributes.size(); ++a) {
            std::vector<double> y;
            for (const auto& s : truths) y.push_back(s[a]);
            table.cells[p][a] = try_pearson(x, y);
        }
    }
    return table;
}

namespace detail {

inline std::string fmt(double v, int decimals = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

inline std::string fmt(const std::optional<double>& v, int decimals = 4) {
    return v ? fmt(*v, decimals) : std::string("undefined");
}

inline std::string pad(std::string s, std::size_t width, bool right = true) {
    if (s.size() >= width) return s;
    return right ? std::string(width - s.size(), ' ') + s : s + std::string(width - s.size(), ' ');
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

} // namespace detail

inline std::string scatter_csv(const ScatterPairs& pairs) {
    std::string out = "predicted,true\n";
    for (const auto& [p, t] : pairs) out += detail::fmt(p, 6) + "," + detail::fmt(t, 6) + "\n";
    return out;
}

/// Predicted score on the x axis, true score on the y axis, both 0-100, with
/// the identity line for reference. One <circle> per pair.
inline std::string scatter_svg(const ScatterPairs& pairs, const std::string& title) {
    constexpr double W = 420, H = 420, L = 60, T = 40, S = 320;
    auto px = [&](double v) { return detail::fmt(L + S * std::clamp(v, 0.0, 100.0) / 100.0, 2); };
    auto py = [&](double v) { return detail::fmt(T + S - S * std::clamp(v, 0.0, 100.0) / 100.0, 2); };
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(W, 0) + "\" height=\"" +
                    detail::fmt(H, 0) + "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<text x=\"210\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" + title + "</text>\n";
    s += "<rect x=\"60\" y=\"40\" width=\"320\" height=\"320\" fill=\"none\" stroke=\"black\"/>\n";
    s += "<line x1=\"60\" y1=\"360\" x2=\"380\" y2=\"40\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n";
    for (int tick = 0; tick <= 100; tick += 20) {
        s += "<text x=\"" + px(tick) + "\" y=\"376\" text-anchor=\"middle\">" + std::to_string(tick) + "</text>\n";
        s += "<text x=\"52\" y=\"" + py(tick) + "\" text-anchor=\"end\" dominant-baseline=\"middle\">" +
             std::to_string(tick) + "</text>\n";
    }
    s += "<text x=\"220\" y=\"404\" text-anchor=\"middle\">Predicted score</text>\n";
    s += "<text x=\"16\" y=\"200\" text-anchor=\"middle\" transform=\"rotate(-90 16 200)\">True score</text>\n";
    for (const auto& [p, t] : pairs)
        s += "<circle cx=\"" + px(p) + "\" cy=\"" + py(t) + "\" r=\"3\" fill=\"#1f77b4\" fill-opacity=\"0.7\"/>\n";
    s += "</svg>\n";
    return s;
}

inline void export_scatter(const ScatterPairs& pairs, const std::filesystem::path& csv_path,
                           const std::filesystem::path& svg_path, const std::string& title) {
    detail::write_text(csv_path, scatter_csv(pairs));
    detail::write_text(svg_path, scatter_svg(pairs, title));
}

inline std::string render_report_text(const EvalReport& report) {
    if (report.rows.empty()) throw Error(ErrorCode::IoError, "EmptyReport: nothing to render");
    std::string s = report.title.empty() ? std::string("Evaluation report\n") : report.title + "\n";
    s += std::string(s.size() - 1, '=') + "\n\n";
    s += detail::pad("attribute", 12, false) + detail::pad("RMSE", 10) + detail::pad("Pearson r", 12) +
         detail::pad("n", 6) + detail::pad("failed", 8) + "\n";
    for (const auto& row : report.rows)
        s += detail::pad(row.attribute, 12, false) + detail::pad(detail::fmt(row.rmse), 10) +
             detail::pad(detail::fmt(row.pearson), 12) + detail::pad(std::to_string(row.n), 6) +
             detail::pad(std::to_string(row.failed), 8) + "\n";
    s += detail::pad("Avg.", 12, false) + detail::pad(detail::fmt(report.avg_rmse), 10) +
         detail::pad(detail::fmt(report.avg_pearson), 12) + "\n";

    if (!report.importance.empty()) {
        s += "\nFeature importance\n";
        s += detail::pad("feature", 12, false) + detail::pad("impurity", 10) + detail::pad("permutation", 13) + "\n";
        for (const auto& imp : report.importance)
            s += detail::pad(imp.feature, 12, false) + detail::pad(imp.impurity ? detail::fmt(*imp.impurity) : std::string("-"), 10) +
                 detail::pad(imp.permutation ? detail::fmt(*imp.permutation) : std::string("-"), 13) + "\n";
    }
    if (report.correlations) {
        s += "\nCorrelation of acoustic parameters with scores\n" + detail::pad("", 10, false);
        for (auto a : kAttributes) s += detail::pad(std::string(a), 13);
        s += "\n";
        for (std::size_t p = 0; p < CorrelationTable::parameters.size(); ++p) {
            s += detail::pad(std::string(CorrelationTable::parameters[p]), 10, false);
            for (std::size_t a = 0; a < kAttributes.size(); ++a) s += detail::pad(detail::fmt(report.correlations->cells[p][a]), 13);
            s += "\n";
        }
    }
    if (!report.info.empty()) {
        s += "\n";
        for (const auto& [k, v] : report.info) s += k + ": " + v + "\n";
    }
    return s;
}

/// attribute,rmse,pearson,n,failed with a final "Avg." line; undefined r is
/// written as an empty field.
inline std::string render_report_csv(const EvalReport& report) {
    if (report.rows.empty()) throw Error(ErrorCode::IoError, "EmptyReport: nothing to render");
    auto r = [](const std::optional<double>& v) { return v ? detail::fmt(*v, 6) : std::string(); };
    std::string s = "attribute,rmse,pearson,n,failed\n";
    for (const auto& row : report.rows)
        s += row.attribute + "," + detail::fmt(row.rmse, 6) + "," + r(row.pearson) + "," + std::to_string(row.n) + "," +
             std::to_string(row.failed) + "\n";
    s += "Avg.," + detail::fmt(report.avg_rmse, 6) + "," + r(report.avg_pearson) + ",,\n";
    return s;
}

inline std::string render_importance_csv(const EvalReport& report) {
    std::string s = "feature,impurity,permutation\n";
    for (const auto& imp : report.importance)
        s += imp.feature + "," + (imp.impurity ? detail::fmt(*imp.impurity, 6) : std::string()) + "," +
             (imp.permutation ? detail::fmt(*imp.permutation, 6) : std::string()) + "\n";
    return s;
}

/// Writes report.txt, report.csv, importance.csv and one scatter CSV/SVG pair
/// per attribute into `dir`.
inline void render_report(const EvalReport& report, const std::filesystem::path& dir) {
    if (report.rows.empty()) throw Error(ErrorCode::IoError, "EmptyReport: nothing to render");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorCode::IoError, "cannot create " + dir.string() + ": " + ec.message());
    detail::write_text(dir / "report.txt", render_report_text(report));
    detail::write_text(dir / "report.csv", render_report_csv(report));
    if (!report.importance.empty()) detail::write_text(dir / "importance.csv", render_importance_csv(report));
    for (const auto& row : report.rows)
        export_scatter(row.scatter, dir / ("scatter_" + row.attribute + ".csv"), dir / ("scatter_" + row.attribute + ".svg"),
                       "Scatter plot of the " + row.attribute + " score");
}

} // namespace capev
