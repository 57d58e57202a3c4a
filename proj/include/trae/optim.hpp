#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "trae/models.hpp"

namespace trae {

struct LossGrad {
    double loss = 0.0;
    std::vector<LayerParams> grads;  // aligned with model.params()
};

/// Sum of squared weights over every parameterised layer (biases excluded).
double weight_penalty(const Autoencoder& model);

/// loss = 1/(2N) sum_i ||x_i - f(x_i)||^2 + gamma ||W||^2, with gradients by
/// backpropagation. Samples are reduced in a fixed order, so the result does not
/// depend on `threads`.
LossGrad loss_and_grad(const Autoencoder& model, std::span<const Tensor* const> batch, double weight_decay,
                       std::size_t threads = 1);
LossGrad loss_and_grad(const Autoencoder& model, std::span<const Tensor> batch, double weight_decay,
                       std::size_t threads = 1);

struct AdaGradState {
    std::vector<LayerParams> accum;
    double eps = 1e-8;

    static AdaGradState for_model(const Autoencoder& model, double eps = 1e-8);
};

/// accum += g^2; w -= lr * g / (sqrt(accum) + eps), per coordinate.
void adagrad_step(std::vector<LayerParams>& params, const std::vector<LayerParams>& grads, AdaGradState& state,
                  double learning_rate);

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 0.01;
    double weight_decay = 0.0005;
    std::size_t max_iters = 1000;
    double lr_drop_factor = 0.1;
    /// Iterations without a new best batch loss before the rate is dropped.
    std::size_t lr_patience = 1000;
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    static TrainConfig conv_defaults();
    static TrainConfig fc_defaults();
    void validate() const;
};

struct TrainResult {
    std::vector<double> loss_trace;  // one entry per iteration, before its update
    double final_learning_rate = 0.0;
    std::size_t lr_drops = 0;
};

using TrainProgress = std::function<void(std::size_t iter, double loss)>;

/// Seeded shuffled mini-batches, AdaGrad updates and drop-on-plateau. On return
/// the parameters are rounded to checkpoint (float32) precision.
TrainResult train(Autoencoder& model, std::span<const Tensor> dataset, const TrainConfig& cfg,
                  const TrainProgress& progress = {});

void write_loss_csv(const std::filesystem::path& path, std::span<const double> trace);

}  // namespace trae
