#include "trae/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

namespace trae {

namespace {

// Samples per partial sum. Partial sums are combined in chunk order.
constexpr std::size_t kChunk = 4;

std::vector<LayerParams> zeros_like(std::span<const LayerParams> params) {
    std::vector<LayerParams> z(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].weights.empty()) continue;
        z[i].weights = Tensor(params[i].weights.shape());
        z[i].bias = Tensor(params[i].bias.shape());
    }
    return z;
}

void accumulate(std::vector<LayerParams>& into, const std::vector<LayerParams>& g) {
    for (std::size_t i = 0; i < into.size(); ++i) {
        if (into[i].weights.empty()) continue;
        axpy(into[i].weights, g[i].weights);
        axpy(into[i].bias, g[i].bias);
    }
}

struct Partial {
    double sq_error = 0.0;
    std::vector<LayerParams> grads;
};

Partial chunk_grad(const Autoencoder& model, std::span<const Tensor* const> samples, double inv_n) {
    Partial p;
    p.grads = zeros_like(model.params());
    for (const Tensor* x : samples) {
        if (x->shape() != model.config().input_shape) {
            throw Error(ErrorKind::ShapeMismatch,
                        "batch item " + shape_str(x->shape()) + " expected " + shape_str(model.config().input_shape));
        }
        ForwardResult fw = model_forward(model, *x);
        Tensor residual = elementwise_zip(fw.reconstruction, *x, [](double r, double v) { return r - v; });
        p.sq_error += squared_norm(residual);
        for (double& v : residual.data()) v *= inv_n;
        BackwardResult bw = model_backward(model, fw.state, residual);
        accumulate(p.grads, bw.grads);
    }
    return p;
}

}  // namespace

double weight_penalty(const Autoencoder& model) {
    double s = 0.0;
    for (const LayerParams& p : model.params()) {
        if (!p.weights.empty()) s += squared_norm(p.weights);
    }
    return s;
}

LossGrad loss_and_grad(const Autoencoder& model, std::span<const Tensor* const> batch, double weight_decay,
                       std::size_t threads) {
    if (batch.empty()) throw Error(ErrorKind::NoData, "empty batch");
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    const std::size_t chunks = (batch.size() + kChunk - 1) / kChunk;
    std::vector<Partial> partials(chunks);
    auto run = [&](std::size_t c) {
        const std::size_t lo = c * kChunk;
        const std::size_t hi = std::min(batch.size(), lo + kChunk);
        partials[c] = chunk_grad(model, batch.subspan(lo, hi - lo), inv_n);
    };
    threads = std::max<std::size_t>(1, std::min(threads, chunks));
    if (threads == 1) {
        for (std::size_t c = 0; c < chunks; ++c) run(c);
    } else {
        std::vector<std::exception_ptr> errors(threads);
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t c = t; c < chunks; c += threads) run(c);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
        pool.clear();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    LossGrad out;
    out.grads = zeros_like(model.params());
    double sq_error = 0.0;
    for (const Partial& p : partials) {
        sq_error += p.sq_error;
        accumulate(out.grads, p.grads);
    }
    out.loss = 0.5 * inv_n * sq_error + weight_decay * weight_penalty(model);
    if (weight_decay != 0.0) {
        const auto params = model.params();
        for (std::size_t i = 0; i < params.size(); ++i) {
            if (!params[i].weights.empty()) axpy(out.grads[i].weights, params[i].weights, 2.0 * weight_decay);
        }
    }
    return out;
}

LossGrad loss_and_grad(const Autoencoder& model, std::span<const Tensor> batch, double weight_decay,
                       std::size_t threads) {
    std::vector<const Tensor*> ptrs;
    ptrs.reserve(batch.size());
    for (const Tensor& t : batch) ptrs.push_back(&t);
    return loss_and_grad(model, std::span<const Tensor* const>(ptrs), weight_decay, threads);
}

AdaGradState AdaGradState::for_model(const Autoencoder& model, double eps) {
    if (!(eps > 0.0)) throw Error(ErrorKind::InvalidInput, "AdaGrad eps must be > 0");
    return AdaGradState{zeros_like(model.params()), eps};
}

void adagrad_step(std::vector<LayerParams>& params, const std::vector<LayerParams>& grads, AdaGradState& state,
                  double learning_rate) {
    if (params.size() != grads.size() || params.size() != state.accum.size()) {
        throw Error(ErrorKind::ShapeMismatch, "adagrad_step: parameter/gradient/state lists differ in length");
    }
    auto update = [&](Tensor& w, const Tensor& g, Tensor& acc) {
        require_same_shape(w, g, "adagrad_step");
        require_same_shape(w, acc, "adagrad_step");
        for (std::size_t k = 0; k < w.size(); ++k) {
            acc[k] += g[k] * g[k];
            w[k] -= learning_rate * g[k] / (std::sqrt(acc[k]) + state.eps);
        }
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].weights.empty()) continue;
        update(params[i].weights, grads[i].weights, state.accum[i].weights);
        update(params[i].bias, grads[i].bias, state.accum[i].bias);
    }
}

TrainConfig TrainConfig::conv_defaults() {
    TrainConfig c;
    c.batch_size = 32;
    c.learning_rate = 0.01;
    c.weight_decay = 0.0005;
    return c;
}

TrainConfig TrainConfig::fc_defaults() {
    TrainConfig c;
    c.batch_size = 1024;
    c.learning_rate = 0.001;
    c.weight_decay = 0.0005;
    return c;
}

void TrainConfig::validate() const {
    if (batch_size == 0) throw Error(ErrorKind::InvalidInput, "batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::InvalidInput, "learning rate must be > 0");
    if (!(weight_decay >= 0.0)) throw Error(ErrorKind::InvalidInput, "weight decay must be >= 0");
    if (!(lr_drop_factor > 0.0 && lr_drop_factor <= 1.0)) throw Error(ErrorKind::InvalidInput, "lr drop in (0,1]");
}

TrainResult train(Autoencoder& model, std::span<const Tensor> dataset, const TrainConfig& cfg,
                  const TrainProgress& progress) {
    cfg.validate();
    if (dataset.empty()) throw Error(ErrorKind::NoData, "training set is empty");

    Rng rng(cfg.seed);
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::size_t cursor = 0;

    AdaGradState state = AdaGradState::for_model(model);
    TrainResult result;
    result.loss_trace.reserve(cfg.max_iters);
    double lr = cfg.learning_rate;
    double best = std::numeric_limits<double>::infinity();
    std::size_t since_best = 0;
    std::vector<const Tensor*> batch(cfg.batch_size);

    for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
        for (auto& slot : batch) {
            if (cursor == order.size()) {
                std::shuffle(order.begin(), order.end(), rng);
                cursor = 0;
            }
            slot = &dataset[order[cursor++]];
        }
        LossGrad lg = loss_and_grad(model, std::span<const Tensor* const>(batch), cfg.weight_decay, cfg.threads);
        result.loss_trace.push_back(lg.loss);
        if (progress) progress(it, lg.loss);
        adagrad_step(model.mutable_params(), lg.grads, state, lr);

        if (lg.loss < best) {
            best = lg.loss;
            since_best = 0;
        } else if (++since_best >= cfg.lr_patience) {
            lr *= cfg.lr_drop_factor;
            ++result.lr_drops;
            since_best = 0;
        }
    }
    model.round_to_storage_precision();
    result.final_learning_rate = lr;
    return result;
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> trace) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << "iter,loss\n";
    char buf[64];
    for (std::size_t i = 0; i < trace.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g\n", i + 1, trace[i]);
        out << buf;
    }
}

}  // namespace trae
