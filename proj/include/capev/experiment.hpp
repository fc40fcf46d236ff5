#pragma once

// End-to-end experiment: dataset -> balanced split -> per-attribute grid search
// and fit on the training side -> evaluation on the held-out side -> report,
// predictions, model artifact and an id-level run log.
//
// Output directory layout:
//
//   report.txt report.csv importance.csv scatter_<attr>.csv/.svg
//   predictions.csv  id,<attr>_pred,<attr>_true,...   (repeat 0)
//   features.csv failures.csv model.json cv_<attr>.csv
//   run_log.csv      repeat,attribute,stage,fold,id,source_id
//   repeats.csv      (repeats > 1)
//
// Everything is written into "<out>.partial" first and renamed on success.

#include "capev/config.hpp"
#include "capev/dataset.hpp"
#include "capev/grid_search.hpp"
#include "capev/model_artifact.hpp"
#include "capev/parallel.hpp"
#include "capev/report.hpp"
#include "capev/split.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace capev {

// ---- run log ----

struct RunLogEntry {
    int repeat = 0;
    std::string attribute; // "*" for entries shared by all attributes
    std::string stage;     // test | fit | cv_train | cv_valid
    int fold = -1;
    std::string id;
    std::string source_id; // original recording an augmented id derives from
};

inline std::string format_run_log(const std::vector<RunLogEntry>& log) {
    std::string s = "repeat,attribute,stage,fold,id,source_id\n";
    for (const auto& e : log)
        s += std::to_string(e.repeat) + "," + e.attribute + "," + e.stage + "," + std::to_string(e.fold) + "," + e.id + "," +
             e.source_id + "\n";
    return s;
}

inline std::vector<RunLogEntry> parse_run_log(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != "repeat,attribute,stage,fold,id,source_id")
        throw Error(ErrorCode::IoError, "run log header missing");
    std::vector<RunLogEntry> out;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 6) throw Error(ErrorCode::IoError, "run log line " + std::to_string(lineno) + ": expected 6 fields");
        RunLogEntry e;
        e.repeat = std::stoi(f[0]);
        e.attribute = f[1];
        e.stage = f[2];
        e.fold = std::stoi(f[3]);
        e.id = f[4];
        e.source_id = f[5];
        out.push_back(std::move(e));
    }
    return out;
}

struct AuditResult {
    bool ok = true;
    std::size_t fitting_entries = 0;
    std::size_t test_ids = 0;
    std::vector<std::string> violations;
};

/// Per repeat: no id (or the recording it was derived from) that is on the
/// test side may appear in a fit or cross-validation stage, and within each
/// CV fold the training and validation ids are disjoint.
inline AuditResult audit_run_log(const std::vector<RunLogEntry>& log) {
    AuditResult r;
    std::map<int, std::set<std::string>> test;
    for (const auto& e : log)
        if (e.stage == "test") test[e.repeat].insert(e.source_id);
    for (const auto& [rep, ids] : test) r.test_ids += ids.size();
    std::map<std::tuple<int, std::string, int>, std::pair<std::set<std::string>, std::set<std::string>>> folds;
    for (const auto& e : log) {
        if (e.stage == "test") continue;
        ++r.fitting_entries;
        const auto& t = test[e.repeat];
        if (t.count(e.source_id) || t.count(e.id))
            r.violations.push_back("repeat " + std::to_string(e.repeat) + " " + e.attribute + " " + e.stage + ": test id " +
                                   e.id + " used for fitting");
        if (e.stage == "cv_train") folds[{e.repeat, e.attribute, e.fold}].first.insert(e.source_id);
        if (e.stage == "cv_valid") folds[{e.repeat, e.attribute, e.fold}].second.insert(e.source_id);
    }
    for (const auto& [key, sides] : folds)
        for (const auto& id : sides.second)
            if (sides.first.count(id))
                r.violations.push_back("repeat " + std::to_string(std::get<0>(key)) + " " + std::get<1>(key) + " fold " +
                                       std::to_string(std::get<2>(key)) + ": " + id + " on both CV sides");
    r.ok = r.violations.empty();
    return r;
}

inline AuditResult audit_run_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open run log " + path.string());
    return audit_run_log(parse_run_log(in));
}

// ---- training ----

struct TrainOptions {
    Family family = Family::Forest;
    bool grid_search = true;
    ParamGrid grid;   // used when grid_search
    ParamSet params;  // used otherwise, and for neural heads
    int cv_folds = 5;
    std::size_t n_bins = 5;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

struct TrainOutcome {
    ModelArtifact artifact;
    std::vector<std::optional<GridSearchResult>> searches; // per attribute
};

/// Fits one model per attribute on `rows`. `source_ids` names the original
/// recording of each row (itself, unless the row is an augmented copy); it is
/// only used for logging. Attribute a searches with derive_seed(seed, 100 + a)
/// and fits with derive_seed(seed, 200 + a).
inline TrainOutcome train_artifact(const std::vector<DatasetRow>& rows, const std::vector<std::string>& source_ids,
                                   const TrainOptions& opt, std::vector<RunLogEntry>* log = nullptr, int repeat = 0) {
    if (rows.empty()) throw Error(ErrorCode::EmptyData, "no training rows");
    if (source_ids.size() != rows.size()) throw Error(ErrorCode::LengthMismatch, "source ids and rows differ in length");
    const std::size_t A = kAttributes.size();
    const bool neural = is_neural(opt.family);

    Matrix X;
    std::vector<Matrix> emb;
    if (neural) {
        Eigen::Index channels = 0;
        for (const auto& r : rows) {
            if (r.embedding_path.empty()) throw Error(ErrorCode::IoError, r.id + ": no embedding_path");
            auto e = load_embedding(r.embedding_path, channels);
            channels = e.channels();
            emb.push_back(std::move(e.values));
        }
    } else {
        Dataset tmp;
        tmp.rows = rows;
        X = tmp.feature_matrix();
    }

    TrainOutcome out;
    out.artifact.family = opt.family;
    out.artifact.seed = opt.seed;
    out.artifact.training_digest = training_digest(rows);
    out.artifact.training_rows = rows.size();
    out.artifact.attributes.resize(A);
    out.searches.resize(A);
    std::vector<std::vector<RunLogEntry>> logs(A);

    parallel_for(A, opt.threads, [&](std::size_t a) {
        const std::string attr(kAttributes[a]);
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = rows[i].scores[a];
        AttributeModel& m = out.artifact.attributes[a];
        m.attribute = attr;
        m.seed = derive_seed(opt.seed, 200 + a);
        m.params = opt.params;
        if (!neural && opt.grid_search) {
            GridSearchSpec spec{opt.grid, opt.cv_folds, opt.n_bins, derive_seed(opt.seed, 100 + a), 1};
            auto gs = grid_search(spec, opt.family, X, y);
            if (!std::isfinite(gs.best_rmse))
                throw Error(ErrorCode::InvalidHyperparameter, attr + ": every grid point failed (" + gs.table.front().error + ")");
            for (int f = 0; f < opt.cv_folds; ++f)
                for (std::size_t i = 0; i < rows.size(); ++i)
                    logs[a].push_back({repeat, attr, gs.folds[i] == f ? "cv_valid" : "cv_train", f, rows[i].id, source_ids[i]});
            m.params = gs.best;
            out.searches[a] = std::move(gs);
        }
        for (std::size_t i = 0; i < rows.size(); ++i) logs[a].push_back({repeat, attr, "fit", -1, rows[i].id, source_ids[i]});
        if (neural) {
            m.model = fit_neural(opt.family, emb, y, m.params, m.seed);
        } else {
            auto c = fit_classical(opt.family, X, y, m.params, m.seed);
            m.model = std::visit([](auto&& x) -> AnyModel { return std::move(x); }, std::move(c));
        }
    });
    if (log)
        for (auto& l : logs) log->insert(log->end(), l.begin(), l.end());
    return out;
}

/// Mean increase of the test RMSE when one feature column is shuffled.
inline std::vector<double> permutation_importance(const ModelArtifact& artifact, std::size_t attribute,
                                                  const std::vector<DatasetRow>& rows, int repeats, std::uint64_t seed) {
    if (artifact.neural()) throw Error(ErrorCode::InvalidHyperparameter, "permutation importance needs feature inputs");
    if (rows.size() < 2) throw Error(ErrorCode::TooFewSamples, "permutation importance needs at least 2 rows");
    std::vector<double> truth;
    for (const auto& r : rows) truth.push_back(r.scores[attribute]);
    auto score = [&](const std::vector<FeatureVector>& feats) {
        std::vector<double> pred;
        for (const auto& f : feats) pred.push_back(artifact.predict(attribute, f));
        return rmse(pred, truth);
    };
    std::vector<FeatureVector> base;
    for (const auto& r : rows) base.push_back(r.features);
    const double base_rmse = score(base);
    std::vector<double> out(FeatureVector::size, 0.0);
    if (repeats <= 0) return out;
    for (std::size_t j = 0; j < FeatureVector::size; ++j) {
        double sum = 0.0;
        for (int k = 0; k < repeats; ++k) {
            std::vector<double> col;
            for (const auto& f : base) col.push_back(f.to_array()[j]);
            Rng rng(derive_seed(seed, j * 1000 + static_cast<std::size_t>(k)));
            rng.shuffle(col);
            auto feats = base;
            for (std::size_t i = 0; i < feats.size(); ++i) {
                auto a = feats[i].to_array();
                a[j] = col[i];
                feats[i] = FeatureVector::from_array(a);
            }
            sum += score(feats) - base_rmse;
        }
        out[j] = sum / repeats;
    }
    return out;
}

// ---- predictions file ----

inline std::string format_predictions(const std::vector<DatasetRow>& rows, const std::vector<RowPredictions>& preds) {
    std::string s = "id";
    for (auto a : kAttributes) s += "," + std::string(a) + "_pred," + std::string(a) + "_true";
    s += "\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        s += rows[i].id;
        for (std::size_t a = 0; a < kAttributes.size(); ++a)
            s += "," + (preds[i][a] ? detail::exact(*preds[i][a]) : std::string()) + "," + detail::exact(rows[i].scores[a]);
        s += "\n";
    }
    return s;
}

struct PredictionTable {
    std::vector<std::string> ids;
    std::vector<RowPredictions> preds;
    std::vector<CapevScores> truths;
};

inline PredictionTable parse_predictions(std::istream& in) {
    std::string line;
    std::string expected = "id";
    for (auto a : kAttributes) expected += "," + std::string(a) + "_pred," + std::string(a) + "_true";
    if (!std::getline(in, line) || detail::split_csv(line) != detail::split_csv(expected))
        throw Error(ErrorCode::IoError, "predictions header must be '" + expected + "'");
    PredictionTable t;
    for (std::size_t lineno = 2; std::getline(in, line); ++lineno) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto f = detail::split_csv(line);
        const std::string where = "predictions line " + std::to_string(lineno) + ": ";
        if (f.size() != 1 + 2 * kAttributes.size()) throw Error(ErrorCode::IoError, where + "wrong field count");
        RowPredictions p{};
        CapevScores s;
        for (std::size_t a = 0; a < kAttributes.size(); ++a) {
            double v = 0.0;
            if (!f[1 + 2 * a].empty()) {
                if (!detail::parse_double(f[1 + 2 * a], v)) throw Error(ErrorCode::IoError, where + "bad prediction");
                p[a] = v;
            }
            if (!detail::parse_double(f[2 + 2 * a], s[a])) throw Error(ErrorCode::IoError, where + "bad truth");
        }
        t.ids.push_back(f[0]);
        t.preds.push_back(p);
        t.truths.push_back(s);
    }
    return t;
}

// ---- experiment ----

struct ExperimentResult {
    EvalReport report;                     // repeat 0, with importance, correlations and info
    std::vector<EvalReport> repeat_reports; // one per repeat
    std::vector<std::uint64_t> split_seeds;
    AuditResult audit;
    std::size_t dataset_rows = 0;
    std::size_t failed_rows = 0;
};

inline std::uint64_t split_seed_for(const RunConfig& cfg, int repeat) {
    return cfg.repeats == 1 ? cfg.seed : derive_seed(cfg.seed, static_cast<std::uint64_t>(repeat));
}

namespace detail {

inline std::string digest_of_file(const std::filesystem::path& p) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(read_file(p))));
    return buf;
}

inline std::string params_text(const ParamSet& p) {
    std::string s;
    for (const auto& [k, v] : p) s += (s.empty() ? "" : " ") + k + "=" + exact(v);
    return s.empty() ? "-" : s;
}

inline std::string grid_text(const ParamGrid& g) {
    std::string s;
    for (const auto& [k, vs] : g) {
        s += (s.empty() ? "" : "; ") + k + "=";
        for (std::size_t i = 0; i < vs.size(); ++i) s += (i ? "," : "") + exact(vs[i]);
    }
    return s;
}

inline std::string cv_table_csv(const GridSearchResult& gs) {
    std::string s = "params,mean_rmse,folds,error\n";
    for (const auto& row : gs.table) {
        std::string folds;
        for (std::size_t i = 0; i < row.fold_rmse.size(); ++i) folds += (i ? ";" : "") + fmt(row.fold_rmse[i], 6);
        std::string err = row.error;
        for (char& c : err)
            if (c == ',' || c == '\n') c = ';';
        s += params_text(row.params) + "," + (std::isfinite(row.mean_rmse) ? fmt(row.mean_rmse, 6) : "inf") + "," + folds +
             "," + err + "\n";
    }
    return s;
}

inline std::pair<double, double> mean_sd(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    return {m, v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0};
}

/// Refuses to replace a directory that does not look like an earlier run.
inline void prepare_output(const std::filesystem::path& out) {
    namespace fs = std::filesystem;
    if (fs::exists(out) && !fs::is_empty(out) && !fs::exists(out / "run_log.csv"))
        throw Error(ErrorCode::ConfigInvalid, "output directory " + out.string() + " exists and is not a previous run");
}

inline std::string source_of(const std::string& id) {
    const auto p = id.find("__");
    return p == std::string::npos ? id : id.substr(0, p);
}

} // namespace detail

/// Loads the dataset a config points at (features CSV or manifest + build).
inline Dataset load_run_dataset(const RunConfig& cfg) {
    if (!cfg.features.empty()) return load_features_csv(cfg.features);
    return build_dataset(load_manifest(cfg.manifest), {cfg.sample_rate, {}, cfg.threads});
}

inline ExperimentResult run_experiment(const RunConfig& cfg) {
    namespace fs = std::filesystem;
    cfg.validate();
    Dataset ds = load_run_dataset(cfg);
    const bool neural = is_neural(cfg.family);

    // Neural heads need an embedding per row; rows without one are skipped.
    if (neural) {
        std::vector<DatasetRow> kept;
        Eigen::Index channels = 0;
        for (auto& r : ds.rows) {
            try {
                if (r.embedding_path.empty()) throw Error(ErrorCode::IoError, "no embedding_path");
                channels = load_embedding(r.embedding_path, channels).channels();
                kept.push_back(std::move(r));
            } catch (const std::exception& e) {
                ds.failures.push_back({r.id, e.what()});
            }
        }
        ds.rows = std::move(kept);
    }
    if (ds.rows.empty()) throw Error(ErrorCode::EmptyData, "no usable rows in the dataset");

    std::vector<DatasetRow> augmented;
    std::size_t augmented_skipped = 0;
    if (neural && !cfg.augmented_manifest.empty()) {
        std::set<std::string> known;
        for (const auto& r : ds.rows) known.insert(r.id);
        for (const auto& m : load_manifest(cfg.augmented_manifest)) {
            if (m.id.find("__") == std::string::npos || !known.count(detail::source_of(m.id)) || m.embedding_path.empty() ||
                !fs::exists(m.embedding_path)) {
                ++augmented_skipped;
                continue;
            }
            augmented.push_back({m.id, FeatureVector{}, m.scores, m.embedding_path});
        }
    }

    detail::prepare_output(cfg.out);
    fs::path tmp = cfg.out;
    tmp += ".partial";
    fs::remove_all(tmp);
    fs::create_directories(tmp);

    try {
        ExperimentResult result;
        result.dataset_rows = ds.rows.size();
        result.failed_rows = ds.failures.size();
        detail::write_text(tmp / "features.csv", format_features_csv(ds, cfg.features.empty() ? cfg.manifest.parent_path()
                                                                                             : cfg.features.parent_path()));
        detail::write_text(tmp / "failures.csv", format_failures_csv(ds));

        std::vector<std::string> ids;
        std::vector<double> severity;
        for (const auto& r : ds.rows) {
            ids.push_back(r.id);
            severity.push_back(r.scores[0]);
        }

        TrainOptions topt;
        topt.family = cfg.family;
        topt.grid_search = cfg.grid_search && !neural;
        topt.grid = cfg.effective_grid();
        topt.params = cfg.effective_params();
        topt.cv_folds = cfg.cv_folds;
        topt.n_bins = cfg.n_bins;
        topt.threads = cfg.threads;

        std::vector<RunLogEntry> log;
        std::string repeats_csv = "repeat,split_seed,attribute,rmse,pearson\n";
        std::optional<TrainOutcome> first;
        std::vector<DatasetRow> first_test;
        std::vector<RowPredictions> first_preds;
        std::size_t first_train_rows = 0;

        for (int rep = 0; rep < cfg.repeats; ++rep) {
            const auto seed = split_seed_for(cfg, rep);
            result.split_seeds.push_back(seed);
            const auto split = balanced_split(ids, severity, cfg.test_fraction, cfg.n_bins, seed);
            const std::set<std::string> test_ids(split.test.begin(), split.test.end());
            std::vector<DatasetRow> train, test;
            std::vector<std::string> sources;
            for (const auto& r : ds.rows) {
                if (test_ids.count(r.id)) {
                    test.push_back(r);
                    log.push_back({rep, "*", "test", -1, r.id, r.id});
                } else {
                    train.push_back(r);
                    sources.push_back(r.id);
                }
            }
            const std::set<std::string> train_ids(sources.begin(), sources.end());
            for (const auto& r : augmented)
                if (train_ids.count(detail::source_of(r.id))) {
                    train.push_back(r);
                    sources.push_back(detail::source_of(r.id));
                }

            topt.seed = seed;
            auto outcome = train_artifact(train, sources, topt, &log, rep);
            std::vector<CapevScores> truths;
            for (const auto& r : test) truths.push_back(r.scores);
            auto preds = predict_rows(outcome.artifact, test);
            auto report = score_predictions(preds, truths);
            for (const auto& row : report.rows)
                repeats_csv += std::to_string(rep) + "," + std::to_string(seed) + "," + row.attribute + "," +
                               detail::fmt(row.rmse, 6) + "," + (row.pearson ? detail::fmt(*row.pearson, 6) : "") + "\n";
            repeats_csv += std::to_string(rep) + "," + std::to_string(seed) + ",Avg.," + detail::fmt(report.avg_rmse, 6) + "," +
                           (report.avg_pearson ? detail::fmt(*report.avg_pearson, 6) : "") + "\n";
            result.repeat_reports.push_back(report);
            if (rep == 0) {
                first = std::move(outcome);
                first_test = std::move(test);
                first_preds = std::move(preds);
                first_train_rows = train.size();
            }
        }

        // Leakage audit on the log exactly as written.
        detail::write_text(tmp / "run_log.csv", format_run_log(log));
        result.audit = audit_run_log(tmp / "run_log.csv");
        if (!result.audit.ok)
            throw Error(ErrorCode::IoError, "leakage audit failed: " + result.audit.violations.front());

        EvalReport report = result.repeat_reports.front();
        report.title = "CAPE-V prediction report (" + std::string(to_string(cfg.family)) + ")";
        const auto& artifact = first->artifact;

        if (!neural) {
            const auto perm = permutation_importance(artifact, 0, first_test, cfg.permutation_repeats,
                                                     derive_seed(result.split_seeds.front(), 300));
            std::optional<std::vector<double>> impurity;
            if (const auto* f = std::get_if<ForestModel>(&artifact.attributes[0].model)) impurity = feature_importances(*f);
            for (std::size_t j = 0; j < FeatureVector::size; ++j)
                report.importance.push_back({std::string(FeatureVector::names[j]),
                                             impurity ? std::optional<double>((*impurity)[j]) : std::nullopt,
                                             cfg.permutation_repeats > 0 ? std::optional<double>(perm[j]) : std::nullopt});
        }
        if (ds.rows.size() >= 2) {
            std::vector<FeatureVector> feats;
            std::vector<CapevScores> truths;
            for (const auto& r : ds.rows) {
                feats.push_back(r.features);
                truths.push_back(r.scores);
            }
            report.correlations = correlation_table(feats, truths);
        }

        auto& info = report.info;
        info.emplace_back("family", std::string(to_string(cfg.family)));
        info.emplace_back("seed", std::to_string(cfg.seed));
        std::string seeds;
        for (auto s : result.split_seeds) seeds += (seeds.empty() ? "" : ",") + std::to_string(s);
        info.emplace_back("split seeds", seeds);
        info.emplace_back("split", "stratified on severity, test_fraction=" + detail::exact(cfg.test_fraction) +
                                       ", n_bins=" + std::to_string(cfg.n_bins));
        info.emplace_back("config digest", cfg.digest());
        if (!cfg.manifest.empty()) {
            info.emplace_back("manifest digest", detail::digest_of_file(cfg.manifest));
            info.emplace_back("working sample rate", std::to_string(cfg.sample_rate) + " Hz");
        } else {
            info.emplace_back("features digest", detail::digest_of_file(cfg.features));
        }
        info.emplace_back("training digest", artifact.training_digest);
        info.emplace_back("rows", std::to_string(ds.rows.size()) + " used, " + std::to_string(ds.failures.size()) +
                                      " failed, " + std::to_string(first_train_rows) + " train, " +
                                      std::to_string(first_test.size()) + " test (repeat 0)");
        if (neural) {
            const auto& nm = std::get<NeuralModel>(artifact.attributes[0].model);
            const auto& hc = nm.head.config();
            std::string layers;
            for (int c : hc.conv_channels) layers += (layers.empty() ? "" : "-") + std::string("conv") + std::to_string(c);
            for (int h : hc.hidden) layers += (layers.empty() ? "" : "-") + std::string("fc") + std::to_string(h);
            info.emplace_back("head", std::string(to_string(cfg.family)) + " " + layers + "-fc1, kernel " +
                                          std::to_string(hc.kernel) + ", input " + std::to_string(hc.input_dim) + " channels");
            info.emplace_back("head design", std::string(hc.kind == HeadKind::Mlp ? "mean over frames then MLP" : "same-padded conv + batch norm, mean over frames") +
                                                 "; ReLU; dropout " + detail::exact(hc.dropout) +
                                                 " after hidden FC layers; Adam; MSE on z-scored targets");
            info.emplace_back("training", detail::params_text(topt.params));
            info.emplace_back("augmented rows", std::to_string(augmented.size()) + " available, " +
                                                    std::to_string(augmented_skipped) + " skipped (training side only)");
        } else {
            info.emplace_back("grid search", cfg.grid_search ? (std::to_string(cfg.cv_folds) + "-fold CV over " +
                                                                detail::grid_text(topt.grid))
                                                             : std::string("off"));
            info.emplace_back("importance", "severity model; impurity (forests) and permutation over " +
                                                std::to_string(cfg.permutation_repeats) + " shuffles of the test set");
        }
        for (const auto& m : artifact.attributes) info.emplace_back("params " + m.attribute, detail::params_text(m.params));
        if (cfg.repeats > 1) {
            for (std::size_t a = 0; a <= kAttributes.size(); ++a) {
                std::vector<double> e, r;
                bool all_r = true;
                for (const auto& rr : result.repeat_reports) {
                    const bool avg = a == kAttributes.size();
                    e.push_back(avg ? rr.avg_rmse : rr.rows[a].rmse);
                    const auto p = avg ? rr.avg_pearson : rr.rows[a].pearson;
                    if (p) r.push_back(*p); else all_r = false;
                }
                const auto [em, es] = detail::mean_sd(e);
                std::string line = "RMSE " + detail::fmt(em) + " +/- " + detail::fmt(es);
                if (all_r) {
                    const auto [rm, rs] = detail::mean_sd(r);
                    line += ", r " + detail::fmt(rm) + " +/- " + detail::fmt(rs);
                } else {
                    line += ", r undefined in some repeat";
                }
                info.emplace_back("over " + std::to_string(cfg.repeats) + " repeats " +
                                      (a == kAttributes.size() ? std::string("Avg.") : std::string(kAttributes[a])),
                                  line);
            }
        }
        info.emplace_back("leakage audit", "pass (" + std::to_string(result.audit.fitting_entries) + " fitting entries, " +
                                               std::to_string(result.audit.test_ids) + " test ids)");

        render_report(report, tmp);
        detail::write_text(tmp / "predictions.csv", format_predictions(first_test, first_preds));
        save_artifact(tmp / "model.json", artifact);
        for (std::size_t a = 0; a < kAttributes.size(); ++a)
            if (first->searches[a])
                detail::write_text(tmp / ("cv_" + std::string(kAttributes[a]) + ".csv"), detail::cv_table_csv(*first->searches[a]));
        if (cfg.repeats > 1) detail::write_text(tmp / "repeats.csv", repeats_csv);

        fs::remove_all(cfg.out);
        if (cfg.out.has_parent_path()) fs::create_directories(cfg.out.parent_path());
        fs::rename(tmp, cfg.out);
        result.report = std::move(report);
        return result;
    } catch (...) {
        std::error_code ec;
        fs::remove_all(tmp, ec);
        throw;
    }
}

/// Rebuilds the report of a finished run from its predictions, importance
/// table and recorded info.
inline EvalReport rebuild_report(const std::filesystem::path& run_dir) {
    std::ifstream in(run_dir / "predictions.csv");
    if (!in) throw Error(ErrorCode::IoError, "no predictions.csv in " + run_dir.string());
    const auto table = parse_predictions(in);
    EvalReport report = score_predictions(table.preds, table.truths);
    report.title = "CAPE-V prediction report (rebuilt from " + run_dir.filename().string() + ")";
    std::ifstream imp(run_dir / "importance.csv");
    std::string line;
    if (imp && std::getline(imp, line))
        while (std::getline(imp, line)) {
            const auto f = detail::split_csv(line);
            if (f.size() != 3) continue;
            ImportanceRow r{f[0], std::nullopt, std::nullopt};
            double v = 0.0;
            if (detail::parse_double(f[1], v)) r.impurity = v;
            if (detail::parse_double(f[2], v)) r.permutation = v;
            report.importance.push_back(r);
        }
    return report;
}

} // namespace capev
