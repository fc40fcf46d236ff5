// capev: command-line front end.
//
//   capev extract    --manifest M --out DIR
//   capev augment    --manifest M --pairs "0.9,0.1;0.7,0.3" --noise-dir DIR --out DIR
//   capev train      --features F --family rf|knn|svr|mlp|conv [--grid G] --seed S --out DIR
//   capev evaluate   --model P --features F [--out DIR]
//   capev report     --run DIR [--out DIR]
//   capev experiment --config C
//   capev synth      --out DIR [--n 200] [--seed 1]
//
// Exit codes: 0 success, 1 validation error, 2 runtime failure.

#include "capev/capev.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace capev;

namespace {

int cmd_extract(const fs::path& manifest, const fs::path& out, int sample_rate, unsigned threads) {
    const auto rows = load_manifest(manifest);
    const auto ds = build_dataset(rows, {sample_rate, {}, threads});
    fs::create_directories(out);
    detail::write_text(out / "features.csv", format_features_csv(ds, out));
    detail::write_text(out / "failures.csv", format_failures_csv(ds));
    std::cout << "extracted " << ds.rows.size() << " rows, " << ds.failures.size() << " failed -> "
              << (out / "features.csv").string() << "\n";
    for (const auto& f : ds.failures) std::cerr << "  " << f.id << ": " << f.reason << "\n";
    return ds.rows.empty() ? 2 : 0;
}

int cmd_augment(const fs::path& manifest, const std::string& pairs_spec, const fs::path& noise_dir, const fs::path& out,
                std::uint64_t seed, unsigned threads) {
    const auto rows = load_manifest(manifest);
    const auto pairs = parse_weight_pairs(pairs_spec);
    if (pairs.size() != 2) throw Error(ErrorCode::ConfigInvalid, "exactly 2 weight pairs are required");
    for (const auto& r : rows)
        if (r.id.find("__") != std::string::npos)
            throw Error(ErrorCode::ManifestInvalid, "id '" + r.id + "' contains '__', which marks augmented copies");
    const auto bank = default_noise_bank(noise_dir, seed);
    for (const auto& spec : bank)
        if (!is_colored(spec.kind) && !fs::exists(spec.source_path))
            throw Error(ErrorCode::ConfigInvalid, "missing babble recording " + spec.source_path.string());

    fs::create_directories(out / "wavs");
    std::vector<std::vector<ManifestRow>> made(rows.size());
    std::vector<std::string> errors(rows.size());
    parallel_for(rows.size(), threads, [&](std::size_t i) {
        try {
            const auto& r = rows[i];
            if (!fs::exists(r.wav_path)) throw Error(ErrorCode::IoError, "missing WAV file " + r.wav_path.filename().string());
            const auto clip = read_wav(r.wav_path);
            const auto inst = augment_sample(clip, bank, pairs, derive_seed(seed, fnv1a(r.id)));
            for (const auto& a : inst) {
                ManifestRow m = r;
                m.id = r.id + "__" + std::string(to_string(a.kind)) + "_p" + std::to_string(a.pair_index + 1);
                m.wav_path = out / "wavs" / (m.id + ".wav");
                m.embedding_path = out / "embeddings" / (m.id + ".emb");
                write_wav(m.wav_path, a.clip, WavEncoding::Float32);
                made[i].push_back(std::move(m));
            }
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    });
    std::vector<ManifestRow> all;
    std::size_t failed = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (!errors[i].empty()) {
            ++failed;
            std::cerr << "  " << rows[i].id << ": " << errors[i] << "\n";
        }
        for (auto& m : made[i]) all.push_back(std::move(m));
    }
    if (all.empty()) throw Error(ErrorCode::IoError, "no clip could be augmented");
    detail::write_text(out / "augmented_manifest.csv", format_manifest(all, out));
    std::cout << "augmented " << rows.size() - failed << " clips into " << all.size() << " instances, " << failed
              << " failed -> " << (out / "augmented_manifest.csv").string() << "\n"
              << "embedding files are expected under " << (out / "embeddings").string() << "\n";
    return 0;
}

ParamGrid grid_from_option(const std::string& g) {
    if (fs::is_regular_file(g)) return parse_grid_spec(detail::read_file(g));
    return parse_grid_spec(g);
}

int cmd_train(const fs::path& features, const std::string& family_name, const std::string& grid, bool no_grid,
              const std::vector<std::string>& params, std::uint64_t seed, int cv_folds, const fs::path& out,
              unsigned threads) {
    const Family family = parse_family(family_name);
    const Dataset ds = load_features_csv(features);
    TrainOptions opt;
    opt.family = family;
    opt.seed = seed;
    opt.cv_folds = cv_folds;
    opt.threads = threads;
    opt.params = default_params(family);
    for (const auto& p : params) {
        const auto g = parse_grid_spec(p);
        for (const auto& [k, v] : g) {
            if (v.size() != 1) throw Error(ErrorCode::ConfigInvalid, "--param " + k + " takes a single value");
            opt.params[k] = v[0];
        }
    }
    if (is_neural(family)) {
        if (!grid.empty()) throw Error(ErrorCode::ConfigInvalid, "grid search is not offered for neural heads; use --param");
        opt.grid_search = false;
    } else {
        opt.grid_search = !no_grid;
        opt.grid = default_grid(family);
        if (!grid.empty())
            for (const auto& [k, v] : grid_from_option(grid)) opt.grid[k] = v;
    }
    if (cv_folds < 2) throw Error(ErrorCode::ConfigInvalid, "--cv-folds must be >= 2");

    std::vector<std::string> ids;
    for (const auto& r : ds.rows) ids.push_back(detail::source_of(r.id));
    std::vector<RunLogEntry> log;
    const auto outcome = train_artifact(ds.rows, ids, opt, &log);
    fs::create_directories(out);
    save_artifact(out / "model.json", outcome.artifact);
    detail::write_text(out / "run_log.csv", format_run_log(log));
    for (std::size_t a = 0; a < kAttributes.size(); ++a) {
        if (outcome.searches[a])
            detail::write_text(out / ("cv_" + std::string(kAttributes[a]) + ".csv"), detail::cv_table_csv(*outcome.searches[a]));
        std::cout << kAttributes[a] << ": " << detail::params_text(outcome.artifact.attributes[a].params);
        if (outcome.searches[a]) std::cout << " (cv rmse " << detail::fmt(outcome.searches[a]->best_rmse) << ")";
        std::cout << "\n";
    }
    std::cout << "trained on " << ds.rows.size() << " rows, training digest " << outcome.artifact.training_digest << " -> "
              << (out / "model.json").string() << "\n";
    return 0;
}

int cmd_evaluate(const fs::path& model, const fs::path& features, const fs::path& out) {
    const auto artifact = load_artifact(model);
    const auto ds = load_features_csv(features);
    std::vector<std::string> errors;
    std::vector<CapevScores> truths;
    for (const auto& r : ds.rows) truths.push_back(r.scores);
    const auto preds = predict_rows(artifact, ds.rows, &errors);
    auto report = score_predictions(preds, truths);
    report.title = "CAPE-V evaluation (" + std::string(to_string(artifact.family)) + ")";
    report.info.emplace_back("training digest", artifact.training_digest);
    report.info.emplace_back("rows", std::to_string(ds.rows.size()) + " evaluated, " + std::to_string(errors.size()) + " failed");
    for (const auto& e : errors) std::cerr << "  " << e << "\n";
    std::cout << render_report_text(report);
    if (!out.empty()) {
        render_report(report, out);
        detail::write_text(out / "predictions.csv", format_predictions(ds.rows, preds));
    }
    return 0;
}

int cmd_report(const fs::path& run, const fs::path& out) {
    const auto report = rebuild_report(run);
    std::cout << render_report_text(report);
    if (!out.empty()) render_report(report, out);
    if (fs::exists(run / "run_log.csv")) {
        const auto audit = audit_run_log(run / "run_log.csv");
        std::cout << "\nleakage audit: " << (audit.ok ? "pass" : "FAIL") << "\n";
        for (const auto& v : audit.violations) std::cout << "  " << v << "\n";
        if (!audit.ok) return 2;
    }
    return 0;
}

int cmd_experiment(const fs::path& config, int threads_override) {
    auto cfg = load_config(config);
    if (threads_override > 0) cfg.threads = static_cast<unsigned>(threads_override);
    const auto result = run_experiment(cfg);
    std::cout << render_report_text(result.report) << "\nwritten to " << cfg.out.string() << "\n";
    return 0;
}

int cmd_synth(const fs::path& out, std::size_t n, std::uint64_t seed) {
    SyntheticOptions opt;
    opt.n = n;
    opt.seed = seed;
    const auto rows = write_synthetic_dataset(out, opt);
    std::cout << "wrote " << rows.size() << " clips -> " << (out / "manifest.csv").string() << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"CAPE-V voice quality toolkit"};
    app.require_subcommand(1);
    unsigned threads = 1;
    app.add_option("--threads", threads, "Worker threads (0 = all cores)");

    fs::path manifest, out, noise_dir, features, model, run, config;
    std::string pairs = "0.9,0.1;0.7,0.3", family, grid;
    std::vector<std::string> params;
    std::uint64_t seed = 0, synth_seed = 1;
    int sample_rate = 8000, cv_folds = 5, threads_override = 0;
    bool no_grid = false;
    std::size_t n = 200;

    auto* extract = app.add_subcommand("extract", "Build the features CSV from a manifest");
    extract->add_option("--manifest", manifest, "Manifest CSV")->required();
    extract->add_option("--out", out, "Output directory")->required();
    extract->add_option("--sample-rate", sample_rate, "Working sample rate in Hz");

    auto* augment = app.add_subcommand("augment", "Write 14 noisy copies of every clip");
    augment->add_option("--manifest", manifest, "Manifest CSV")->required();
    augment->add_option("--pairs", pairs, "Two signal,noise weight pairs: a,b;c,d");
    augment->add_option("--noise-dir", noise_dir, "Directory holding babble1.wav and babble2.wav")->required();
    augment->add_option("--out", out, "Output directory")->required();
    augment->add_option("--seed", seed, "Noise seed");

    auto* train = app.add_subcommand("train", "Fit six per-attribute models on a features CSV");
    train->add_option("--features", features, "Features CSV")->required();
    train->add_option("--family", family, "rf | knn | svr | mlp | conv")->required();
    train->add_option("--grid", grid, "Grid file or inline spec name=v1,v2;name2=v3");
    train->add_flag("--no-grid", no_grid, "Skip grid search and use --param values");
    train->add_option("--param", params, "Fixed hyperparameter name=value (repeatable)");
    train->add_option("--seed", seed, "Seed");
    train->add_option("--cv-folds", cv_folds, "Cross-validation folds");
    train->add_option("--out", out, "Output directory")->required();

    auto* evaluate = app.add_subcommand("evaluate", "Score a saved model on a features CSV");
    evaluate->add_option("--model", model, "model.json")->required();
    evaluate->add_option("--features", features, "Features CSV with true scores")->required();
    evaluate->add_option("--out", out, "Write report files here");

    auto* report = app.add_subcommand("report", "Rebuild the report of a finished run");
    report->add_option("--run", run, "Run directory")->required();
    report->add_option("--out", out, "Write report files here");

    auto* experiment = app.add_subcommand("experiment", "Split, tune, fit, evaluate and report");
    experiment->add_option("--config", config, "Run configuration file")->required();
    experiment->add_option("--threads", threads_override, "Override the config's thread count");

    auto* synth = app.add_subcommand("synth", "Write the synthetic sustained-vowel dataset");
    synth->add_option("--out", out, "Output directory")->required();
    synth->add_option("--n", n, "Number of clips");
    synth->add_option("--seed", synth_seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*extract) return cmd_extract(manifest, out, sample_rate, threads);
        if (*augment) return cmd_augment(manifest, pairs, noise_dir, out, seed, threads);
        if (*train) return cmd_train(features, family, grid, no_grid, params, seed, cv_folds, out, threads);
        if (*evaluate) return cmd_evaluate(model, features, out);
        if (*report) return cmd_report(run, out);
        if (*experiment) return cmd_experiment(config, threads_override);
        if (*synth) return cmd_synth(out, n, synth_seed);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return is_validation_error(e.code()) ? 1 : 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
