#pragma once

// Trained per-attribute models bundled with their preprocessing statistics,
// seeds and a digest of the training rows, stored as JSON. Doubles are written
// with 17 significant digits, so save -> load -> predict is bit-exact.

#include "capev/dataset.hpp"
#include "capev/embedding.hpp"
#include "capev/neural.hpp"
#include "capev/regressor.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace capev {

using AnyModel = std::variant<ForestModel, KnnModel, SvrModel, NeuralModel>;

struct AttributeModel {
    std::string attribute;
    ParamSet params;
    std::uint64_t seed = 0;
    AnyModel model;
};

struct ModelArtifact {
    static constexpr int kVersion = 1;
    Family family = Family::Forest;
    std::uint64_t seed = 0;
    std::string training_digest;
    std::size_t training_rows = 0;
    std::vector<AttributeModel> attributes; // kAttributes order

    bool neural() const noexcept { return is_neural(family); }

    /// `embedding` is required for neural families and ignored otherwise.
    double predict(std::size_t attribute, const FeatureVector& features, const Matrix* embedding = nullptr) const {
        if (attribute >= attributes.size()) throw Error(ErrorCode::ModelFormat, "no model for attribute index " + std::to_string(attribute));
        return std::visit(
            [&](const auto& m) -> double {
                using M = std::decay_t<decltype(m)>;
                if constexpr (std::is_same_v<M, NeuralModel>) {
                    if (!embedding) throw Error(ErrorCode::ShapeMismatch, "neural model needs an embedding");
                    return m.predict(*embedding);
                } else {
                    const auto a = features.to_array();
                    return m.predict(Vector(Eigen::Map<const Vector>(a.data(), static_cast<Eigen::Index>(a.size()))));
                }
            },
            attributes[attribute].model);
    }
};

/// FNV-1a over the ids, features and targets of the training rows.
inline std::string training_digest(const std::vector<DatasetRow>& rows) {
    std::uint64_t h = fnv1a("capev-training");
    for (const auto& r : rows) {
        h = fnv1a(r.id, h);
        for (double v : r.features.to_array()) h = fnv1a(detail::exact(v), h);
        for (double v : r.scores.values) h = fnv1a(detail::exact(v), h);
        h = fnv1a(r.embedding_path.filename().string(), h);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail {

using nlohmann::json;

inline json matrix_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix matrix_from(const json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
        throw Error(ErrorCode::ModelFormat, "matrix shape does not match its data");
    Matrix m(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
    return m;
}

inline json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vector vector_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline json scaler_json(const Standardizer& s) { return {{"means", vector_json(s.means)}, {"stds", vector_json(s.stds)}}; }

inline Standardizer scaler_from(const json& j) { return {vector_from(j.at("means")), vector_from(j.at("stds"))}; }

inline json model_json(const ForestModel& m) {
    json trees = json::array();
    for (const auto& t : m.trees) {
        json nodes = json::array();
        for (const auto& n : t.nodes)
            nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.samples, n.sse_decrease});
        trees.push_back(std::move(nodes));
    }
    return {{"kind", "forest"},
            {"n_trees", m.params.n_trees},
            {"max_depth", m.params.tree.max_depth},
            {"min_leaf", m.params.tree.min_leaf},
            {"features_per_split", m.params.tree.features_per_split},
            {"bootstrap", m.params.bootstrap},
            {"seed", m.seed},
            {"n_features", m.n_features},
            {"trees", trees}};
}

inline json model_json(const KnnModel& m) {
    return {{"kind", "knn"}, {"k", m.k}, {"scaler", scaler_json(m.scaler)}, {"X", matrix_json(m.X)}, {"y", vector_json(m.y)}};
}

inline json model_json(const SvrModel& m) {
    return {{"kind", "svr"},
            {"C", m.params.C},
            {"epsilon", m.params.epsilon},
            {"kernel", m.params.kernel == KernelType::Linear ? "linear" : "rbf"},
            {"gamma", m.params.gamma},
            {"tolerance", m.params.tolerance},
            {"standardize", m.params.standardize},
            {"scaler", scaler_json(m.scaler)},
            {"support", matrix_json(m.support)},
            {"coef", vector_json(m.coef)},
            {"bias", m.bias},
            {"converged", m.converged},
            {"final_violation", m.final_violation},
            {"updates", m.updates}};
}

inline json model_json(const NeuralModel& m) {
    const auto& c = m.head.config();
    json params = json::array(), buffers = json::array();
    for (const Param* p : m.head.parameters()) params.push_back(matrix_json(p->value));
    for (Matrix* b : const_cast<Head&>(m.head).buffers()) buffers.push_back(matrix_json(*b));
    return {{"kind", c.kind == HeadKind::Conv ? "conv" : "mlp"},
            {"input_dim", c.input_dim},
            {"conv_channels", c.conv_channels},
            {"kernel", c.kernel},
            {"hidden", c.hidden},
            {"dropout", c.dropout},
            {"y_mean", m.y_mean},
            {"y_scale", m.y_scale},
            {"loss_curve", m.training.loss_curve},
            {"steps", m.training.steps},
            {"params", params},
            {"buffers", buffers}};
}

inline AnyModel model_from(const json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "forest") {
        ForestModel m;
        m.params.n_trees = j.at("n_trees").get<int>();
        m.params.tree.max_depth = j.at("max_depth").get<int>();
        m.params.tree.min_leaf = j.at("min_leaf").get<int>();
        m.params.tree.features_per_split = j.at("features_per_split").get<int>();
        m.params.bootstrap = j.at("bootstrap").get<bool>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.n_features = j.at("n_features").get<Eigen::Index>();
        for (const auto& tj : j.at("trees")) {
            RegressionTree t;
            for (const auto& nj : tj) {
                TreeNode n;
                n.feature = nj.at(0).get<int>();
                n.threshold = nj.at(1).get<double>();
                n.left = nj.at(2).get<int>();
                n.right = nj.at(3).get<int>();
                n.value = nj.at(4).get<double>();
                n.samples = nj.at(5).get<std::size_t>();
                n.sse_decrease = nj.at(6).get<double>();
                const auto count = static_cast<int>(tj.size());
                if (n.feature >= m.n_features || (!n.is_leaf() && (n.left <= 0 || n.right <= 0 || n.left >= count || n.right >= count)))
                    throw Error(ErrorCode::ModelFormat, "forest node references are out of range");
                t.nodes.push_back(n);
            }
            if (t.nodes.empty()) throw Error(ErrorCode::ModelFormat, "empty tree");
            m.trees.push_back(std::move(t));
        }
        if (m.trees.empty()) throw Error(ErrorCode::ModelFormat, "forest has no trees");
        return m;
    }
    if (kind == "knn") {
        KnnModel m;
        m.k = j.at("k").get<int>();
        m.scaler = scaler_from(j.at("scaler"));
        m.X = matrix_from(j.at("X"));
        m.y = vector_from(j.at("y"));
        if (m.k < 1 || m.k > m.X.rows() || m.y.size() != m.X.rows() || m.scaler.dims() != m.X.cols())
            throw Error(ErrorCode::ModelFormat, "inconsistent knn model");
        return m;
    }
    if (kind == "svr") {
        SvrModel m;
        m.params.C = j.at("C").get<double>();
        m.params.epsilon = j.at("epsilon").get<double>();
        m.params.kernel = j.at("kernel").get<std::string>() == "linear" ? KernelType::Linear : KernelType::Rbf;
        m.params.gamma = j.at("gamma").get<double>();
        m.params.tolerance = j.at("tolerance").get<double>();
        m.params.standardize = j.at("standardize").get<bool>();
        m.scaler = scaler_from(j.at("scaler"));
        m.support = matrix_from(j.at("support"));
        m.coef = vector_from(j.at("coef"));
        m.bias = j.at("bias").get<double>();
        m.converged = j.at("converged").get<bool>();
        m.final_violation = j.at("final_violation").get<double>();
        m.updates = j.at("updates").get<std::size_t>();
        if (m.coef.size() != m.support.rows() || (m.support.rows() > 0 && m.support.cols() != m.scaler.dims()))
            throw Error(ErrorCode::ModelFormat, "inconsistent svr model");
        return m;
    }
    if (kind == "mlp" || kind == "conv") {
        HeadConfig c;
        c.kind = kind == "conv" ? HeadKind::Conv : HeadKind::Mlp;
        c.input_dim = j.at("input_dim").get<int>();
        c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
        c.kernel = j.at("kernel").get<int>();
        c.hidden = j.at("hidden").get<std::vector<int>>();
        c.dropout = j.at("dropout").get<double>();
        NeuralModel m;
        m.head = Head(c, 0);
        m.y_mean = j.at("y_mean").get<double>();
        m.y_scale = j.at("y_scale").get<double>();
        m.training.loss_curve = j.at("loss_curve").get<std::vector<double>>();
        m.training.steps = j.at("steps").get<std::size_t>();
        auto params = m.head.parameters();
        auto buffers = m.head.buffers();
        const auto& pj = j.at("params");
        const auto& bj = j.at("buffers");
        if (pj.size() != params.size() || bj.size() != buffers.size())
            throw Error(ErrorCode::ModelFormat, "neural parameter count does not match its configuration");
        for (std::size_t i = 0; i < params.size(); ++i) {
            Matrix v = matrix_from(pj[i]);
            if (v.rows() != params[i]->value.rows() || v.cols() != params[i]->value.cols())
                throw Error(ErrorCode::ModelFormat, "neural parameter shape mismatch");
            params[i]->value = std::move(v);
        }
        for (std::size_t i = 0; i < buffers.size(); ++i) {
            Matrix v = matrix_from(bj[i]);
            if (v.rows() != buffers[i]->rows() || v.cols() != buffers[i]->cols())
                throw Error(ErrorCode::ModelFormat, "neural buffer shape mismatch");
            *buffers[i] = std::move(v);
        }
        return m;
    }
    throw Error(ErrorCode::ModelFormat, "unknown model kind '" + kind + "'");
}

} // namespace detail

inline nlohmann::json artifact_json(const ModelArtifact& a) {
    using nlohmann::json;
    json attrs = json::array();
    for (const auto& m : a.attributes) {
        json params = json::object();
        for (const auto& [k, v] : m.params) params[k] = v;
        attrs.push_back({{"attribute", m.attribute},
                         {"params", params},
                         {"seed", m.seed},
                         {"model", std::visit([](const auto& x) { return detail::model_json(x); }, m.model)}});
    }
    return {{"format", "capev-model"},
            {"version", ModelArtifact::kVersion},
            {"family", std::string(to_string(a.family))},
            {"input", a.neural() ? "embedding" : "features"},
            {"feature_names", std::vector<std::string>(FeatureVector::names.begin(), FeatureVector::names.end())},
            {"seed", a.seed},
            {"training_digest", a.training_digest},
            {"training_rows", a.training_rows},
            {"attributes", attrs}};
}

inline ModelArtifact artifact_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format").get<std::string>() != "capev-model")
            throw Error(ErrorCode::ModelFormat, "not a capev model file");
        if (j.at("version").get<int>() != ModelArtifact::kVersion)
            throw Error(ErrorCode::ModelFormat, "unsupported model version " + j.at("version").dump());
        ModelArtifact a;
        a.family = parse_family(j.at("family").get<std::string>());
        a.seed = j.at("seed").get<std::uint64_t>();
        a.training_digest = j.at("training_digest").get<std::string>();
        a.training_rows = j.at("training_rows").get<std::size_t>();
        for (const auto& aj : j.at("attributes")) {
            AttributeModel m;
            m.attribute = aj.at("attribute").get<std::string>();
            for (const auto& [k, v] : aj.at("params").items()) m.params[k] = v.get<double>();
            m.seed = aj.at("seed").get<std::uint64_t>();
            m.model = detail::model_from(aj.at("model"));
            a.attributes.push_back(std::move(m));
        }
        if (a.attributes.size() != kAttributes.size())
            throw Error(ErrorCode::ModelFormat, "expected " + std::to_string(kAttributes.size()) + " attribute models");
        for (std::size_t i = 0; i < kAttributes.size(); ++i)
            if (a.attributes[i].attribute != kAttributes[i])
                throw Error(ErrorCode::ModelFormat, "attribute models out of order");
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormat, std::string("malformed model file: ") + e.what());
    }
}

inline void save_artifact(const std::filesystem::path& path, const ModelArtifact& a) {
    detail::write_text(path, artifact_json(a).dump(1) + "\n");
}

inline ModelArtifact load_artifact(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open model file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ModelFormat, std::string("model file is not JSON: ") + e.what());
    }
    return artifact_from_json(j);
}

using RowPredictions = std::array<std::optional<double>, 6>;

/// One prediction per attribute per row. A row whose prediction throws
/// (missing embedding, bad shape) gets no predictions; its error is collected.
inline std::vector<RowPredictions> predict_rows(const ModelArtifact& artifact, const std::vector<DatasetRow>& rows,
                                                std::vector<std::string>* errors = nullptr) {
    std::vector<RowPredictions> out;
    out.reserve(rows.size());
    Eigen::Index channels = 0;
    for (const auto& row : rows) {
        RowPredictions p{};
        try {
            std::optional<Matrix> emb;
            if (artifact.neural()) {
                if (row.embedding_path.empty()) throw Error(ErrorCode::IoError, "row has no embedding_path");
                auto e = load_embedding(row.embedding_path, channels);
                channels = e.channels();
                emb = std::move(e.values);
            }
            for (std::size_t a = 0; a < kAttributes.size(); ++a)
                p[a] = artifact.predict(a, row.features, emb ? &*emb : nullptr);
        } catch (const std::exception& e) {
            p.fill(std::nullopt);
            if (errors) errors->push_back(row.id + ": " + e.what());
        }
        out.push_back(p);
    }
    return out;
}

/// Per-attribute RMSE / Pearson rows plus averages; failed rows are excluded
/// and counted.
inline EvalReport score_predictions(const std::vector<RowPredictions>& preds, const std::vector<CapevScores>& truths) {
    if (preds.empty()) throw Error(ErrorCode::Empty, "no rows to evaluate");
    if (preds.size() != truths.size()) throw Error(ErrorCode::LengthMismatch, "predictions and truths differ in length");
    EvalReport report;
    for (std::size_t a = 0; a < kAttributes.size(); ++a) {
        std::vector<std::optional<double>> p;
        std::vector<double> t;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            p.push_back(preds[i][a]);
            t.push_back(truths[i][a]);
        }
        report.rows.push_back(score_attribute(std::string(kAttributes[a]), p, t));
    }
    compute_averages(report);
    return report;
}

inline EvalReport evaluate_model(const ModelArtifact& artifact, const std::vector<DatasetRow>& rows,
                                 std::vector<std::string>* errors = nullptr) {
    std::vector<CapevScores> truths;
    for (const auto& r : rows) truths.push_back(r.scores);
    return score_predictions(predict_rows(artifact, rows, errors), truths);
}

} // namespace capev
