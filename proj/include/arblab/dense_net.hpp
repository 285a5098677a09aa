#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "arblab/csv.hpp"

namespace arblab {

enum class Activation { identity, relu, tanh };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
    }
    throw std::invalid_argument("unknown activation");
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "tanh") return Activation::tanh;
    throw std::invalid_argument("unknown activation '" + s + "'");
}

inline double activate(Activation a, double z) {
    switch (a) {
        case Activation::identity: return z;
        case Activation::relu: return z > 0.0 ? z : 0.0;
        case Activation::tanh: return std::tanh(z);
    }
    return z;
}

inline double activate_grad(Activation a, double z) {
    switch (a) {
        case Activation::identity: return 1.0;
        case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
        case Activation::tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
    }
    return 1.0;
}

struct DenseLayer {
    std::size_t in = 0, out = 0;
    std::vector<double> w;  // row-major, out x in
    std::vector<double> b;
    Activation act = Activation::identity;
};

/// Fully connected network in 64-bit floats. Plain value object: copying
/// snapshots the parameters.
class DenseNet {
  public:
    DenseNet() = default;

    /// Weights drawn uniform in [-sqrt(1/fan_in), sqrt(1/fan_in)], biases
    /// zero. Deterministic for a fixed seed.
    static DenseNet init(const std::vector<std::size_t>& widths,
                         const std::vector<Activation>& activations, std::uint64_t seed) {
        if (widths.size() < 2) {
            throw std::invalid_argument("need at least input and output widths");
        }
        if (activations.size() != widths.size() - 1) {
            throw std::invalid_argument("need one activation per layer: " +
                                        std::to_string(widths.size() - 1) + " expected, " +
                                        std::to_string(activations.size()) + " given");
        }
        std::mt19937_64 rng(seed);
        DenseNet net;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            DenseLayer layer;
            layer.in = widths[l];
            layer.out = widths[l + 1];
            layer.act = activations[l];
            const double scale = std::sqrt(1.0 / static_cast<double>(layer.in));
            std::uniform_real_distribution<double> dist(-scale, scale);
            layer.w.resize(layer.in * layer.out);
            for (auto& v : layer.w) v = dist(rng);
            layer.b.assign(layer.out, 0.0);
            net.layers_.push_back(std::move(layer));
        }
        return net;
    }

    bool empty() const { return layers_.empty(); }
    std::size_t input_width() const { return layers_.front().in; }
    std::size_t output_width() const { return layers_.back().out; }
    const std::vector<DenseLayer>& layers() const { return layers_; }

    std::vector<std::size_t> widths() const {
        std::vector<std::size_t> w;
        w.push_back(layers_.front().in);
        for (const auto& l : layers_) w.push_back(l.out);
        return w;
    }

    std::vector<Activation> activations() const {
        std::vector<Activation> a;
        for (const auto& l : layers_) a.push_back(l.act);
        return a;
    }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += l.w.size() + l.b.size();
        return n;
    }

    std::vector<double> forward(std::span<const double> input) const {
        if (layers_.empty()) {
            throw std::runtime_error("forward() on an empty network");
        }
        if (input.size() != input_width()) {
            throw std::invalid_argument("input width " + std::to_string(input.size()) +
                                        " does not match network input " +
                                        std::to_string(input_width()));
        }
        std::vector<double> a(input.begin(), input.end()), next;
        for (const auto& layer : layers_) {
            next.assign(layer.out, 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                double z = layer.b[o];
                const double* wrow = layer.w.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) z += wrow[i] * a[i];
                next[o] = activate(layer.act, z);
            }
            a.swap(next);
        }
        return a;
    }

    // flat parameter vector, per layer: weights then biases
    std::vector<double> get_params() const {
        std::vector<double> p;
        p.reserve(param_count());
        for (const auto& l : layers_) {
            p.insert(p.end(), l.w.begin(), l.w.end());
            p.insert(p.end(), l.b.begin(), l.b.end());
        }
        return p;
    }

    void set_params(std::span<const double> p) {
        if (p.size() != param_count()) {
            throw std::invalid_argument("parameter count mismatch: expected " +
                                        std::to_string(param_count()) + ", got " +
                                        std::to_string(p.size()));
        }
        std::size_t k = 0;
        for (auto& l : layers_) {
            std::copy(p.begin() + k, p.begin() + k + l.w.size(), l.w.begin());
            k += l.w.size();
            std::copy(p.begin() + k, p.begin() + k + l.b.size(), l.b.begin());
            k += l.b.size();
        }
    }

    static std::size_t param_count_for(const std::vector<std::size_t>& widths) {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
            n += widths[l] * widths[l + 1] + widths[l + 1];
        }
        return n;
    }

  private:
    std::vector<DenseLayer> layers_;
};

// ---------------------------------------------------------------------------
// Backpropagation

struct BackwardResult {
    double loss = 0.0;          // MSE: mean over samples and output dims
    std::vector<double> grad;   // flat, aligned with get_params()
};

/// Gradients of the batch MSE with respect to all parameters.
inline BackwardResult backward_mse(const DenseNet& net,
                                   const std::vector<std::vector<double>>& inputs,
                                   const std::vector<std::vector<double>>& targets) {
    if (inputs.empty() || inputs.size() != targets.size()) {
        throw std::invalid_argument("backward needs a non-empty batch of input/target pairs");
    }
    const auto& layers = net.layers();
    const std::size_t num_layers = layers.size();
    const double batch = static_cast<double>(inputs.size());
    const double out_width = static_cast<double>(net.output_width());

    BackwardResult result;
    result.grad.assign(net.param_count(), 0.0);

    // flat offsets of each layer's weight block
    std::vector<std::size_t> offsets(num_layers);
    std::size_t off = 0;
    for (std::size_t l = 0; l < num_layers; ++l) {
        offsets[l] = off;
        off += layers[l].w.size() + layers[l].b.size();
    }

    std::vector<std::vector<double>> acts(num_layers + 1), preacts(num_layers);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        const auto& x = inputs[s];
        const auto& y = targets[s];
        if (x.size() != net.input_width() || y.size() != net.output_width()) {
            throw std::invalid_argument("sample width mismatch in backward batch");
        }
        acts[0].assign(x.begin(), x.end());
        for (std::size_t l = 0; l < num_layers; ++l) {
            const auto& layer = layers[l];
            preacts[l].assign(layer.out, 0.0);
            acts[l + 1].assign(layer.out, 0.0);
            for (std::size_t o = 0; o < layer.out; ++o) {
                double z = layer.b[o];
                const double* wrow = layer.w.data() + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) z += wrow[i] * acts[l][i];
                preacts[l][o] = z;
                acts[l + 1][o] = activate(layer.act, z);
            }
        }
        // delta at the output layer: d loss / d preact
        std::vector<double> delta(layers.back().out);
        for (std::size_t o = 0; o < delta.size(); ++o) {
            const double err = acts[num_layers][o] - y[o];
            result.loss += err * err;
            delta[o] = 2.0 * err / (batch * out_width) *
                       activate_grad(layers.back().act, preacts[num_layers - 1][o]);
        }
        for (std::size_t l = num_layers; l-- > 0;) {
            const auto& layer = layers[l];
            double* gw = result.grad.data() + offsets[l];
            double* gb = gw + layer.w.size();
            for (std::size_t o = 0; o < layer.out; ++o) {
                const double d = delta[o];
                gb[o] += d;
                double* gwrow = gw + o * layer.in;
                for (std::size_t i = 0; i < layer.in; ++i) gwrow[i] += d * acts[l][i];
            }
            if (l > 0) {
                std::vector<double> prev(layer.in, 0.0);
                for (std::size_t i = 0; i < layer.in; ++i) {
                    double sum = 0.0;
                    for (std::size_t o = 0; o < layer.out; ++o) {
                        sum += layer.w[o * layer.in + i] * delta[o];
                    }
                    prev[i] = sum * activate_grad(layers[l - 1].act, preacts[l - 1][i]);
                }
                delta.swap(prev);
            }
        }
    }
    result.loss /= batch * out_width;
    return result;
}

// ---------------------------------------------------------------------------
// Optimizers

struct SgdOptimizer {
    double lr = 1e-3;

    void step(DenseNet& net, std::span<const double> grad) {
        auto params = net.get_params();
        if (grad.size() != params.size()) {
            throw std::invalid_argument("gradient size mismatch");
        }
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        net.set_params(params);
    }
};

struct AdamOptimizer {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void step(DenseNet& net, std::span<const double> grad) {
        auto params = net.get_params();
        if (grad.size() != params.size()) {
            throw std::invalid_argument("gradient size mismatch");
        }
        if (m_.size() != params.size()) {
            m_.assign(params.size(), 0.0);
            v_.assign(params.size(), 0.0);
            t_ = 0;
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i] = beta1 * m_[i] + (1.0 - beta1) * grad[i];
            v_[i] = beta2 * v_[i] + (1.0 - beta2) * grad[i] * grad[i];
            params[i] -= lr * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps);
        }
        net.set_params(params);
    }

  private:
    std::vector<double> m_, v_;
    long t_ = 0;
};

// ---------------------------------------------------------------------------
// Supervised training with early stopping

struct SampleSet {
    std::vector<std::vector<double>> inputs;
    std::vector<std::vector<double>> targets;

    std::size_t size() const { return inputs.size(); }
};

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 200;
    std::size_t patience = 10;
    enum class Optimizer { sgd, adam } optimizer = Optimizer::adam;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
        if (patience < 1) throw std::invalid_argument("patience must be >= 1");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    }
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_rmse = 0.0;
    double val_rmse = 0.0;
};

struct FitResult {
    DenseNet net;  // parameters from the best validation epoch
    std::vector<EpochStats> history;
    double best_val_rmse = 0.0;
    std::size_t best_epoch = 0;
};

inline double evaluate_rmse(const DenseNet& net, const SampleSet& data) {
    if (data.size() == 0) {
        throw std::invalid_argument("cannot evaluate on an empty set");
    }
    double sse = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < data.size(); ++s) {
        const auto pred = net.forward(data.inputs[s]);
        for (std::size_t o = 0; o < pred.size(); ++o) {
            const double err = pred[o] - data.targets[s][o];
            sse += err * err;
            ++n;
        }
    }
    return std::sqrt(sse / static_cast<double>(n));
}

/// Minibatch training with RMSE early stopping on the validation set.
/// Stops once validation fails to improve for `patience` epochs and
/// returns the parameters of the best epoch.
inline FitResult fit(DenseNet net, const SampleSet& train, const SampleSet& validation,
                     const TrainConfig& cfg) {
    cfg.validate();
    if (train.size() == 0) {
        throw std::invalid_argument("empty training set");
    }
    if (validation.size() == 0) {
        throw std::invalid_argument("empty validation set");
    }
    std::mt19937_64 rng(cfg.seed);
    SgdOptimizer sgd{cfg.learning_rate};
    AdamOptimizer adam;
    adam.lr = cfg.learning_rate;

    FitResult result;
    result.net = net;
    result.best_val_rmse = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double sse = 0.0;
        std::size_t n = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(start + cfg.batch_size, order.size());
            std::vector<std::vector<double>> bx, by;
            bx.reserve(stop - start);
            by.reserve(stop - start);
            for (std::size_t k = start; k < stop; ++k) {
                bx.push_back(train.inputs[order[k]]);
                by.push_back(train.targets[order[k]]);
            }
            const auto back = backward_mse(net, bx, by);
            if (cfg.optimizer == TrainConfig::Optimizer::adam) {
                adam.step(net, back.grad);
            } else {
                sgd.step(net, back.grad);
            }
            const std::size_t width = net.output_width();
            sse += back.loss * static_cast<double>((stop - start) * width);
            n += (stop - start) * width;
        }
        EpochStats stats;
        stats.epoch = epoch;
        stats.train_rmse = std::sqrt(sse / static_cast<double>(n));
        stats.val_rmse = evaluate_rmse(net, validation);
        result.history.push_back(stats);
        if (stats.val_rmse < result.best_val_rmse) {
            result.best_val_rmse = stats.val_rmse;
            result.best_epoch = epoch;
            result.net = net;
            stale = 0;
        } else {
            ++stale;
            if (stale >= cfg.patience) break;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Checkpoint format: versioned line-based text, %.17g parameters

inline void save_net(std::ostream& out, const DenseNet& net) {
    out << "densenet v1\n";
    out << "widths";
    for (auto w : net.widths()) out << ' ' << w;
    out << "\nactivations";
    for (auto a : net.activations()) out << ' ' << to_string(a);
    const auto params = net.get_params();
    out << "\nparams " << params.size() << '\n';
    for (double p : params) out << fmt_double(p) << '\n';
}

inline DenseNet load_net(std::istream& in) {
    std::string magic, version;
    in >> magic >> version;
    if (magic != "densenet" || version != "v1") {
        throw std::runtime_error("not a densenet v1 checkpoint");
    }
    std::string tag;
    in >> tag;
    if (tag != "widths") throw std::runtime_error("checkpoint: expected 'widths'");
    std::vector<std::size_t> widths;
    while (in >> tag) {
        if (tag == "activations") break;
        widths.push_back(static_cast<std::size_t>(parse_int(tag)));
    }
    std::vector<Activation> acts;
    while (in >> tag) {
        if (tag == "params") break;
        acts.push_back(activation_from_string(tag));
    }
    std::size_t count = 0;
    in >> count;
    DenseNet net = DenseNet::init(widths, acts, 0);
    if (count != net.param_count()) {
        throw std::runtime_error("checkpoint parameter count mismatch");
    }
    std::vector<double> params(count);
    for (auto& p : params) {
        std::string field;
        if (!(in >> field)) throw std::runtime_error("checkpoint truncated");
        p = parse_double(field);
    }
    net.set_params(params);
    return net;
}

}  // namespace arblab
