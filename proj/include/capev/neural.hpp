#pragma once

// Fine-tune heads over embedding matrices: an FC head (default 256/16/1) and a
// convolutional head (conv1d 64, conv1d 32, each with batch-norm and ReLU,
// global average pooling, FC 512/64/1). Dropout sits after every hidden FC
// layer. Plain Eigen doubles with hand-written backprop and Adam.

#include "capev/embedding.hpp"
#include "capev/error.hpp"
#include "capev/regressor.hpp"
#include "capev/rng.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

namespace capev {

enum class HeadKind { Mlp, Conv };

struct HeadConfig {
    HeadKind kind = HeadKind::Mlp;
    int input_dim = 0;
    std::vector<int> conv_channels; // conv head only
    int kernel = 3;
    std::vector<int> hidden;        // FC widths before the scalar output
    double dropout = 0.2;

    static HeadConfig mlp(int input_dim) { return {HeadKind::Mlp, input_dim, {}, 3, {256, 16}, 0.2}; }
    static HeadConfig conv(int input_dim) { return {HeadKind::Conv, input_dim, {64, 32}, 3, {512, 64}, 0.2}; }
};

/// A trainable tensor with its gradient and Adam moments.
struct Param {
    Matrix value, grad, m, v;

    void resize(Eigen::Index r, Eigen::Index c) {
        value = grad = m = v = Matrix::Zero(r, c);
    }
};

struct BatchNorm {
    Param gamma, beta;            // 1 x C
    Matrix running_mean, running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNorm(Eigen::Index c = 0) {
        gamma.resize(1, c);
        gamma.value.setOnes();
        beta.resize(1, c);
        running_mean = Matrix::Zero(1, c);
        running_var = Matrix::Ones(1, c);
    }
};

struct Conv1d {
    std::vector<Param> taps; // taps[k] is out x in
};

struct Linear {
    Param W; // out x in
    Param b; // 1 x out
};

enum class Mode {
    Eval,           // dropout off, running batch-norm statistics
    Train,          // dropout on, batch statistics
    TrainNoDropout, // batch statistics only (gradient checks)
};

/// Activations kept by a forward pass for the backward pass.
struct ForwardCache {
    std::vector<Eigen::Index> offsets; // segment starts in the stacked frames, plus end
    std::vector<Matrix> conv_in, bn_xhat, bn_out;
    std::vector<Matrix> bn_mean, bn_var;
    std::vector<Matrix> fc_in, fc_pre, drop_mask;
    Matrix pooled;
    Mode mode = Mode::Eval;
};

class Head {
public:
    Head() = default;

    Head(const HeadConfig& config, std::uint64_t seed) : config_(config) {
        if (config.input_dim < 1) throw Error(ErrorCode::InvalidHyperparameter, "head input_dim must be >= 1");
        if (!(config.dropout >= 0.0 && config.dropout < 1.0))
            throw Error(ErrorCode::InvalidHyperparameter, "dropout must be in [0, 1)");
        if (config.kind == HeadKind::Conv && (config.conv_channels.empty() || config.kernel < 1 || config.kernel % 2 == 0))
            throw Error(ErrorCode::InvalidHyperparameter, "conv head needs channels and an odd kernel");
        Rng rng(seed);
        auto init = [&](Param& p, double fan_in) {
            const double bound = 1.0 / std::sqrt(fan_in);
            for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = rng.uniform(-bound, bound);
        };
        Eigen::Index width = config.input_dim;
        if (config.kind == HeadKind::Conv) {
            for (int out : config.conv_channels) {
                Conv1d c;
                c.taps.resize(static_cast<std::size_t>(config.kernel));
                for (auto& t : c.taps) {
                    t.resize(out, width);
                    init(t, static_cast<double>(width * config.kernel));
                }
                convs_.push_back(std::move(c));
                bns_.emplace_back(out);
                width = out;
            }
        }
        std::vector<int> widths = config.hidden;
        widths.push_back(1);
        for (int out : widths) {
            Linear l;
            l.W.resize(out, width);
            l.b.resize(1, out);
            init(l.W, static_cast<double>(width));
            init(l.b, static_cast<double>(width));
            fcs_.push_back(std::move(l));
            width = out;
        }
    }

    const HeadConfig& config() const noexcept { return config_; }

    std::vector<Param*> parameters() {
        std::vector<Param*> out;
        for (auto& c : convs_)
            for (auto& t : c.taps) out.push_back(&t);
        for (auto& b : bns_) {
            out.push_back(&b.gamma);
            out.push_back(&b.beta);
        }
        for (auto& l : fcs_) {
            out.push_back(&l.W);
            out.push_back(&l.b);
        }
        return out;
    }

    std::vector<const Param*> parameters() const {
        std::vector<const Param*> out;
        for (auto* p : const_cast<Head*>(this)->parameters()) out.push_back(p);
        return out;
    }

    /// Running batch-norm statistics, in layer order (mean, var, mean, var...).
    std::vector<Matrix*> buffers() {
        std::vector<Matrix*> out;
        for (auto& b : bns_) {
            out.push_back(&b.running_mean);
            out.push_back(&b.running_var);
        }
        return out;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto* p : parameters()) n += static_cast<std::size_t>(p->value.size());
        return n;
    }

    void zero_grad() {
        for (auto* p : parameters()) p->grad.setZero();
    }

    /// One output per sample. `rng` is needed only in Mode::Train.
    Vector forward(const std::vector<Matrix>& batch, Mode mode, Rng* rng, ForwardCache& cache) const {
        if (batch.empty()) throw Error(ErrorCode::EmptyData, "empty batch");
        cache = ForwardCache{};
        cache.mode = mode;
        const bool batch_stats = mode != Mode::Eval;
        const bool dropout = mode == Mode::Train && config_.dropout > 0.0;
        if (dropout && rng == nullptr) throw Error(ErrorCode::InvalidHyperparameter, "train-mode forward needs an rng");

        Matrix h;
        if (config_.kind == HeadKind::Conv) {
            cache.offsets.push_back(0);
            for (const auto& x : batch) {
                check_input(x);
                cache.offsets.push_back(cache.offsets.back() + x.rows());
            }
            h.resize(cache.offsets.back(), config_.input_dim);
            for (std::size_t s = 0; s < batch.size(); ++s)
                h.middleRows(cache.offsets[s], batch[s].rows()) = batch[s];
            for (std::size_t l = 0; l < convs_.size(); ++l) {
                cache.conv_in.push_back(h);
                Matrix z = conv_forward(convs_[l], h, cache.offsets);
                const auto& bn = bns_[l];
                Matrix mean, var;
                if (batch_stats) {
                    mean = z.colwise().mean();
                    var = (z.rowwise() - mean.row(0)).array().square().colwise().mean();
                } else {
                    mean = bn.running_mean;
                    var = bn.running_var;
                }
                const Matrix inv = (var.array() + bn.eps).rsqrt().matrix();
                Matrix xhat = (z.rowwise() - mean.row(0)).array().rowwise() * inv.row(0).array();
                Matrix y = (xhat.array().rowwise() * bn.gamma.value.row(0).array()).rowwise() +
                           bn.beta.value.row(0).array();
                cache.bn_mean.push_back(mean);
                cache.bn_var.push_back(var);
                cache.bn_xhat.push_back(std::move(xhat));
                cache.bn_out.push_back(y);
                h = y.cwiseMax(0.0);
            }
            Matrix pooled(static_cast<Eigen::Index>(batch.size()), h.cols());
            for (std::size_t s = 0; s < batch.size(); ++s)
                pooled.row(static_cast<Eigen::Index>(s)) =
                    h.middleRows(cache.offsets[s], cache.offsets[s + 1] - cache.offsets[s]).colwise().mean();
            cache.pooled = pooled;
            h = std::move(pooled);
        } else {
            h.resize(static_cast<Eigen::Index>(batch.size()), config_.input_dim);
            for (std::size_t s = 0; s < batch.size(); ++s) {
                check_input(batch[s]);
                h.row(static_cast<Eigen::Index>(s)) = batch[s].colwise().mean();
            }
        }

        const double keep = 1.0 - config_.dropout;
        for (std::size_t l = 0; l < fcs_.size(); ++l) {
            cache.fc_in.push_back(h);
            Matrix pre = (h * fcs_[l].W.value.transpose()).rowwise() + fcs_[l].b.value.row(0);
            if (l + 1 == fcs_.size()) {
                h = std::move(pre);
                break;
            }
            cache.fc_pre.push_back(pre);
            h = pre.cwiseMax(0.0);
            if (dropout) {
                Matrix mask(h.rows(), h.cols());
                for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = rng->uniform() < keep ? 1.0 / keep : 0.0;
                h = h.cwiseProduct(mask);
                cache.drop_mask.push_back(std::move(mask));
            }
        }
        return h.col(0);
    }

    /// Accumulates parameter gradients of sum_i dout_i * output_i.
    void backward(const ForwardCache& cache, const Vector& dout) {
        Matrix g = dout;
        const bool dropout = !cache.drop_mask.empty();
        for (std::size_t l = fcs_.size(); l-- > 0;) {
            if (l + 1 < fcs_.size()) {
                if (dropout) g = g.cwiseProduct(cache.drop_mask[l]);
                g = g.cwiseProduct((cache.fc_pre[l].array() > 0.0).cast<double>().matrix());
            }
            auto& fc = fcs_[l];
            fc.W.grad += g.transpose() * cache.fc_in[l];
            fc.b.grad += g.colwise().sum();
            g = g * fc.W.value;
        }
        if (config_.kind != HeadKind::Conv) return;

        const auto& off = cache.offsets;
        Matrix dh(off.back(), g.cols());
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
            const Eigen::Index len = off[s + 1] - off[s];
            dh.middleRows(off[s], len) = g.row(static_cast<Eigen::Index>(s)).replicate(len, 1) / static_cast<double>(len);
        }
        for (std::size_t l = convs_.size(); l-- > 0;) {
            dh = dh.cwiseProduct((cache.bn_out[l].array() > 0.0).cast<double>().matrix());
            auto& bn = bns_[l];
            const Matrix& xhat = cache.bn_xhat[l];
            bn.gamma.grad += dh.cwiseProduct(xhat).colwise().sum();
            bn.beta.grad += dh.colwise().sum();
            const Matrix inv = (cache.bn_var[l].array() + bn.eps).rsqrt().matrix();
            Matrix dxhat = dh.array().rowwise() * bn.gamma.value.row(0).array();
            Matrix dz;
            if (cache.mode == Mode::Eval) {
                dz = dxhat.array().rowwise() * inv.row(0).array();
            } else {
                const double n = static_cast<double>(dxhat.rows());
                const Matrix sum_d = dxhat.colwise().sum();
                const Matrix sum_dx = dxhat.cwiseProduct(xhat).colwise().sum();
                Matrix t = (dxhat * n).rowwise() - sum_d.row(0);
                t -= (xhat.array().rowwise() * sum_dx.row(0).array()).matrix();
                dz = (t.array().rowwise() * (inv.row(0).array() / n)).matrix();
            }
            dh = conv_backward(convs_[l], cache.conv_in[l], dz, off);
        }
    }

    /// Folds the batch statistics of a train-mode pass into the running ones.
    void update_running_stats(const ForwardCache& cache) {
        if (cache.mode == Mode::Eval) return;
        for (std::size_t l = 0; l < bns_.size(); ++l) {
            auto& bn = bns_[l];
            const double n = static_cast<double>(cache.bn_xhat[l].rows());
            const Matrix unbiased = n > 1 ? Matrix(cache.bn_var[l] * (n / (n - 1.0))) : cache.bn_var[l];
            bn.running_mean = (1.0 - bn.momentum) * bn.running_mean + bn.momentum * cache.bn_mean[l];
            bn.running_var = (1.0 - bn.momentum) * bn.running_var + bn.momentum * unbiased;
        }
    }

    double predict(const Matrix& embedding) const {
        ForwardCache cache;
        return forward({embedding}, Mode::Eval, nullptr, cache)(0);
    }

    Vector predict(const std::vector<Matrix>& batch) const {
        ForwardCache cache;
        return forward(batch, Mode::Eval, nullptr, cache);
    }

private:
    void check_input(const Matrix& x) const {
        if (x.cols() != config_.input_dim || x.rows() < 1)
            throw Error(ErrorCode::ShapeMismatch, "head expects " + std::to_string(config_.input_dim) +
                                                      " channels, got " + std::to_string(x.rows()) + "x" +
                                                      std::to_string(x.cols()));
    }

    // "Same" zero padding within each sample's frames.
    template <typename Fn>
    void for_each_tap(std::size_t taps, const std::vector<Eigen::Index>& off, Fn&& fn) const {
        const auto pad = static_cast<Eigen::Index>(taps / 2);
        for (std::size_t k = 0; k < taps; ++k) {
            const Eigen::Index shift = static_cast<Eigen::Index>(k) - pad;
            for (std::size_t s = 0; s + 1 < off.size(); ++s) {
                const Eigen::Index lo = std::max(off[s], off[s] - shift);
                const Eigen::Index hi = std::min(off[s + 1], off[s + 1] - shift);
                if (hi > lo) fn(k, lo, lo + shift, hi - lo);
            }
        }
    }

    Matrix conv_forward(const Conv1d& c, const Matrix& x, const std::vector<Eigen::Index>& off) const {
        Matrix y = Matrix::Zero(x.rows(), c.taps[0].value.rows());
        for_each_tap(c.taps.size(), off, [&](std::size_t k, Eigen::Index out_at, Eigen::Index in_at, Eigen::Index len) {
            y.middleRows(out_at, len).noalias() += x.middleRows(in_at, len) * c.taps[k].value.transpose();
        });
        return y;
    }

    Matrix conv_backward(Conv1d& c, const Matrix& x, const Matrix& dy, const std::vector<Eigen::Index>& off) {
        Matrix dx = Matrix::Zero(x.rows(), x.cols());
        for_each_tap(c.taps.size(), off, [&](std::size_t k, Eigen::Index out_at, Eigen::Index in_at, Eigen::Index len) {
            c.taps[k].grad.noalias() += dy.middleRows(out_at, len).transpose() * x.middleRows(in_at, len);
            dx.middleRows(in_at, len).noalias() += dy.middleRows(out_at, len) * c.taps[k].value;
        });
        return dx;
    }

    HeadConfig config_;
    std::vector<Conv1d> convs_;
    std::vector<BatchNorm> bns_;
    std::vector<Linear> fcs_;
};

inline double mse(const Vector& pred, const Vector& y) {
    return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 16;
    int epochs = 200;
    std::uint64_t seed = 0;
    double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
};

struct TrainResult {
    std::vector<double> loss_curve; // eval-mode training MSE after each epoch
    std::size_t steps = 0;
};

/// Minibatch Adam on mean squared error. Batches are reshuffled every epoch
/// from a stream derived from the seed; dropout masks come from a second one.
inline TrainResult train_head(Head& head, const std::vector<Matrix>& X, const Vector& y, const TrainConfig& cfg) {
    if (X.empty()) throw Error(ErrorCode::EmptyData, "no training samples");
    if (static_cast<Eigen::Index>(X.size()) != y.size())
        throw Error(ErrorCode::LengthMismatch, "samples and targets differ in length");
    if (!(cfg.lr > 0.0) || cfg.epochs < 1 || cfg.batch_size < 1)
        throw Error(ErrorCode::InvalidHyperparameter, "need lr > 0, epochs >= 1, batch_size >= 1");

    Rng order_rng(derive_seed(cfg.seed, 1));
    Rng drop_rng(derive_seed(cfg.seed, 2));
    std::vector<std::size_t> order(X.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    TrainResult result;
    ForwardCache cache;
    double b1t = 1.0, b2t = 1.0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<Matrix> batch;
            Vector target(static_cast<Eigen::Index>(end - start));
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(X[order[i]]);
                target(static_cast<Eigen::Index>(i - start)) = y(static_cast<Eigen::Index>(order[i]));
            }
            const Vector pred = head.forward(batch, Mode::Train, &drop_rng, cache);
            const double loss = mse(pred, target);
            if (!std::isfinite(loss))
                throw Error(ErrorCode::Diverged, "loss became non-finite in epoch " + std::to_string(epoch));
            head.update_running_stats(cache);
            head.zero_grad();
            head.backward(cache, 2.0 * (pred - target) / static_cast<double>(target.size()));
            b1t *= cfg.beta1;
            b2t *= cfg.beta2;
            for (Param* p : head.parameters()) {
                p->m = cfg.beta1 * p->m + (1.0 - cfg.beta1) * p->grad;
                p->v = cfg.beta2 * p->v + (1.0 - cfg.beta2) * p->grad.cwiseAbs2();
                p->value.array() -= cfg.lr * (p->m.array() / (1.0 - b1t)) /
                                    ((p->v.array() / (1.0 - b2t)).sqrt() + cfg.adam_eps);
            }
            ++result.steps;
        }
        const double epoch_loss = mse(head.predict(X), y);
        if (!std::isfinite(epoch_loss))
            throw Error(ErrorCode::Diverged, "loss became non-finite in epoch " + std::to_string(epoch));
        result.loss_curve.push_back(epoch_loss);
    }
    return result;
}

/// Max over all parameters of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|) for the
/// batch MSE, dropout off and batch-norm on batch statistics.
inline double gradient_check(Head head, const std::vector<Matrix>& batch, const Vector& y, double h = 1e-5) {
    ForwardCache cache;
    auto loss = [&]() { return mse(head.forward(batch, Mode::TrainNoDropout, nullptr, cache), y); };
    const Vector pred = head.forward(batch, Mode::TrainNoDropout, nullptr, cache);
    head.zero_grad();
    head.backward(cache, 2.0 * (pred - y) / static_cast<double>(y.size()));
    double worst = 0.0;
    for (Param* p : head.parameters()) {
        for (Eigen::Index i = 0; i < p->value.size(); ++i) {
            double& w = p->value.data()[i];
            const double saved = w;
            w = saved + h;
            const double up = loss();
            w = saved - h;
            const double down = loss();
            w = saved;
            const double fd = (up - down) / (2.0 * h);
            const double an = p->grad.data()[i];
            worst = std::max(worst, std::abs(an - fd) / std::max(1e-8, std::abs(an) + std::abs(fd)));
        }
    }
    return worst;
}

/// A head plus the target scaling it was trained under.
struct NeuralModel {
    Head head;
    double y_mean = 0.0;
    double y_scale = 1.0;
    TrainResult training;

    double predict(const Matrix& embedding) const { return y_mean + y_scale * head.predict(embedding); }
};

/// Targets are z-scored for training and mapped back on prediction.
inline NeuralModel fit_neural(Family family, const std::vector<Matrix>& X, const Vector& y, const ParamSet& params,
                              std::uint64_t seed) {
    if (!is_neural(family)) throw Error(ErrorCode::InvalidHyperparameter, "not a neural family");
    if (X.empty()) throw Error(ErrorCode::EmptyData, "no training samples");
    const auto d = default_params(family);
    TrainConfig cfg;
    cfg.lr = detail::param_or(params, "lr", d.at("lr"));
    cfg.epochs = detail::int_param(params, "epochs", d.at("epochs"));
    cfg.batch_size = detail::int_param(params, "batch_size", d.at("batch_size"));
    cfg.seed = derive_seed(seed, 7);
    const auto dim = static_cast<int>(X.front().cols());
    HeadConfig hc = family == Family::Conv ? HeadConfig::conv(dim) : HeadConfig::mlp(dim);
    hc.dropout = detail::param_or(params, "dropout", hc.dropout);

    NeuralModel m;
    m.y_mean = y.mean();
    const double sd = std::sqrt((y.array() - m.y_mean).square().mean());
    m.y_scale = sd > 1e-12 ? sd : 1.0;
    m.head = Head(hc, derive_seed(seed, 6));
    m.training = train_head(m.head, X, ((y.array() - m.y_mean) / m.y_scale).matrix(), cfg);
    return m;
}

} // namespace capev
