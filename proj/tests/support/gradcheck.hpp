#pragma once

// Finite-difference checks of every layer's backward pass. Each returns the
// worst relative error between analytic and central-difference gradients of
// the scalar L = <layer(x), R> for a random projection R.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "trae/layers.hpp"
#include "trae/models.hpp"
#include "trae/optim.hpp"

namespace gradcheck {

using namespace trae;

inline constexpr double kEps = 1e-5;

inline double worst(const Tensor& analytic, const std::vector<double>& numeric) {
    double w = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) w = std::max(w, oracle::rel_error(analytic[i], numeric[i]));
    return w;
}

inline std::vector<double> flat(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

inline Tensor from_flat(const Tensor& like, const std::vector<double>& v) { return Tensor(like.shape(), v); }

// Checks grad_in, weight and bias gradients of a parameterised layer.
template <typename Forward>
double parameterised(const Tensor& x, const LayerParams& p, const Tensor& R, const ParamGrads& g, Forward fwd) {
    auto loss_x = [&](const std::vector<double>& v) { return dot(fwd(from_flat(x, v), p), R); };
    auto loss_w = [&](const std::vector<double>& v) {
        LayerParams q{from_flat(p.weights, v), p.bias};
        return dot(fwd(x, q), R);
    };
    auto loss_b = [&](const std::vector<double>& v) {
        LayerParams q{p.weights, from_flat(p.bias, v)};
        return dot(fwd(x, q), R);
    };
    double w = worst(g.grad_in, oracle::numeric_gradient(flat(x), loss_x, kEps));
    w = std::max(w, worst(g.grads.weights, oracle::numeric_gradient(flat(p.weights), loss_w, kEps)));
    w = std::max(w, worst(g.grads.bias, oracle::numeric_gradient(flat(p.bias), loss_b, kEps)));
    return w;
}

inline double conv(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const ConvSpec spec{2, 3, 3, 2, 1 + seed % 2, seed % 3};
    const Tensor x = oracle::random_tensor({2, 6, 5}, rng);
    const LayerParams p{oracle::random_tensor({3, 2, 3, 2}, rng), oracle::random_tensor({3}, rng)};
    const Tensor y = conv_forward(x, spec, p);
    const Tensor R = oracle::random_tensor(y.shape(), rng);
    const ParamGrads g = conv_backward(x, spec, p, R);
    return parameterised(x, p, R, g, [&](const Tensor& a, const LayerParams& q) { return conv_forward(a, spec, q); });
}

inline double deconv(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const std::size_t stride = 1 + seed % 2;
    const ConvSpec spec{2, 3, 3, 3, stride, 0};
    const Tensor x = oracle::random_tensor({2, 4, 4}, rng);
    const Extent2 full = spec.deconv_full({4, 4});
    const Extent2 target{full.height - 2, full.width - 2};
    const LayerParams p{oracle::random_tensor({2, 3, 3, 3}, rng), oracle::random_tensor({3}, rng)};
    const Tensor y = deconv_forward(x, spec, p, target);
    const Tensor R = oracle::random_tensor(y.shape(), rng);
    const ParamGrads g = deconv_backward(x, spec, p, target, R);
    return parameterised(x, p, R, g,
                         [&](const Tensor& a, const LayerParams& q) { return deconv_forward(a, spec, q, target); });
}

inline double fc(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = oracle::random_tensor({7}, rng);
    const LayerParams p{oracle::random_tensor({4, 7}, rng), oracle::random_tensor({4}, rng)};
    const Tensor R = oracle::random_tensor({4}, rng);
    const ParamGrads g = fc_backward(x, p, R);
    return parameterised(x, p, R, g, [](const Tensor& a, const LayerParams& q) { return fc_forward(a, q); });
}

// Distinct, well separated values so that a perturbation of kEps never moves a maximum.
inline Tensor separated(const Shape& shape, std::mt19937_64& rng) {
    Tensor t(shape);
    std::vector<std::size_t> order(t.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(order[i]);
    return t;
}

inline double maxpool(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const Tensor x = separated({2, 5, 6}, rng);
    const PoolResult pr = maxpool_forward(x);
    const Tensor R = oracle::random_tensor(pr.output.shape(), rng);
    const Tensor g = maxpool_backward(pr.record, R);
    auto loss = [&](const std::vector<double>& v) { return dot(maxpool_forward(from_flat(x, v)).output, R); };
    return worst(g, oracle::numeric_gradient(flat(x), loss, kEps));
}

inline double unpool(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const PoolResult pr = maxpool_forward(separated({2, 6, 4}, rng));
    const Tensor x = oracle::random_tensor(pr.output.shape(), rng);
    const Tensor R = oracle::random_tensor(pr.record.pre_pool_shape, rng);
    const Tensor g = unpool_backward(pr.record, R);
    auto loss = [&](const std::vector<double>& v) { return dot(unpool_forward(from_flat(x, v), pr.record), R); };
    return worst(g, oracle::numeric_gradient(flat(x), loss, kEps));
}

inline double activation(std::uint64_t seed, Activation kind) {
    std::mt19937_64 rng(seed);
    const Tensor x = oracle::random_tensor({3, 4}, rng, -3.0, 3.0);
    const Tensor R = oracle::random_tensor({3, 4}, rng);
    const Tensor g = activate_backward(activate(x, kind), kind, R);
    auto loss = [&](const std::vector<double>& v) { return dot(activate(from_flat(x, v), kind), R); };
    return worst(g, oracle::numeric_gradient(flat(x), loss, kEps));
}

// conv -> tanh -> fc chained by hand, checked against the input and all parameters.
inline double composite(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const ConvSpec spec{1, 2, 3, 3, 1, 1};
    const Tensor x = oracle::random_tensor({1, 4, 4}, rng);
    const LayerParams pc{oracle::random_tensor({2, 1, 3, 3}, rng), oracle::random_tensor({2}, rng)};
    const LayerParams pf{oracle::random_tensor({3, 32}, rng), oracle::random_tensor({3}, rng)};
    const Tensor R = oracle::random_tensor({3}, rng);

    auto forward = [&](const Tensor& in, const LayerParams& c, const LayerParams& f) {
        return fc_forward(activate(conv_forward(in, spec, c), Activation::tanh).reshaped({32}), f);
    };
    const Tensor h = conv_forward(x, spec, pc);
    const Tensor a = activate(h, Activation::tanh);
    const ParamGrads gf = fc_backward(a.reshaped({32}), pf, R);
    const Tensor ga = activate_backward(a, Activation::tanh, gf.grad_in.reshaped(a.shape()));
    const ParamGrads gc = conv_backward(x, spec, pc, ga);

    double w = worst(gc.grad_in, oracle::numeric_gradient(flat(x), [&](const std::vector<double>& v) {
                         return dot(forward(from_flat(x, v), pc, pf), R);
                     }));
    w = std::max(w, worst(gc.grads.weights, oracle::numeric_gradient(flat(pc.weights), [&](const std::vector<double>& v) {
                              return dot(forward(x, {from_flat(pc.weights, v), pc.bias}, pf), R);
                          })));
    w = std::max(w, worst(gc.grads.bias, oracle::numeric_gradient(flat(pc.bias), [&](const std::vector<double>& v) {
                              return dot(forward(x, {pc.weights, from_flat(pc.bias, v)}, pf), R);
                          })));
    w = std::max(w, worst(gf.grads.weights, oracle::numeric_gradient(flat(pf.weights), [&](const std::vector<double>& v) {
                              return dot(forward(x, pc, {from_flat(pf.weights, v), pf.bias}), R);
                          })));
    w = std::max(w, worst(gf.grads.bias, oracle::numeric_gradient(flat(pf.bias), [&](const std::vector<double>& v) {
                              return dot(forward(x, pc, {pf.weights, from_flat(pf.bias, v)}), R);
                          })));
    return w;
}

// Whole-model check through loss_and_grad on a small mirrored conv autoencoder
// (conv, tanh, pool, unpool, deconv, sigmoid) with weight decay.
inline double model(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ArchConfig cfg = mirrored_conv_ae({2, 8, 8}, {{{2, 3, 3, 3, 1, 1}, true}}, Preset::custom);
    cfg.seed = seed;
    Autoencoder m = build_autoencoder(cfg);
    std::vector<Tensor> batch{oracle::random_tensor({2, 8, 8}, rng, 0.0, 1.0), oracle::random_tensor({2, 8, 8}, rng, 0.0, 1.0)};
    const double gamma = 0.01;
    const LossGrad lg = loss_and_grad(m, std::span<const Tensor>(batch), gamma);
    double w = 0.0;
    for (std::size_t l = 0; l < m.params().size(); ++l) {
        if (m.params()[l].weights.empty()) continue;
        for (int which = 0; which < 2; ++which) {
            const Tensor& target = which == 0 ? m.params()[l].weights : m.params()[l].bias;
            auto loss = [&](const std::vector<double>& v) {
                Autoencoder probe = m;
                (which == 0 ? probe.mutable_params()[l].weights : probe.mutable_params()[l].bias) = from_flat(target, v);
                return loss_and_grad(probe, std::span<const Tensor>(batch), gamma).loss;
            };
            const Tensor& analytic = which == 0 ? lg.grads[l].weights : lg.grads[l].bias;
            w = std::max(w, worst(analytic, oracle::numeric_gradient(flat(target), loss, kEps)));
        }
    }
    return w;
}

}  // namespace gradcheck
