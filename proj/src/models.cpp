#include "trae/models.hpp"

#include <algorithm>
#include <string>

namespace trae {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
    using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

[[noreturn]] void arch_error(const std::string& what) { throw Error(ErrorKind::ArchError, what); }

std::string layer_name(std::size_t i) { return "layer " + std::to_string(i); }

Extent2 spatial(const Shape& s) { return {s[1], s[2]}; }

std::size_t fan_in(const LayerSpec& layer) {
    return std::visit(Overloaded{
                          [](const ConvLayer& l) { return l.spec.in_channels * l.spec.kernel_h * l.spec.kernel_w; },
                          // Blob layout [C_in, C_out, kh, kw]: fan-in counted per leading-axis slice.
                          [](const DeconvLayer& l) { return l.spec.out_channels * l.spec.kernel_h * l.spec.kernel_w; },
                          [](const DenseLayer& l) { return l.in; },
                          [](const auto&) { return std::size_t{0}; },
                      },
                      layer);
}

}  // namespace

std::string to_string(ModelKind kind) { return kind == ModelKind::conv_ae ? "conv_ae" : "fc_ae"; }

std::string to_string(Preset preset) {
    switch (preset) {
        case Preset::paper: return "paper";
        case Preset::tiny: return "tiny";
        case Preset::custom: return "custom";
    }
    return "custom";
}

ModelKind parse_model_kind(const std::string& s) {
    if (s == "conv_ae" || s == "conv") return ModelKind::conv_ae;
    if (s == "fc_ae" || s == "fc") return ModelKind::fc_ae;
    throw Error(ErrorKind::ArchError, "unknown model kind '" + s + "'");
}

Preset parse_preset(const std::string& s) {
    if (s == "paper") return Preset::paper;
    if (s == "tiny") return Preset::tiny;
    if (s == "custom") return Preset::custom;
    throw Error(ErrorKind::ArchError, "unknown preset '" + s + "'");
}

bool has_params(const LayerSpec& layer) {
    return std::holds_alternative<ConvLayer>(layer) || std::holds_alternative<DeconvLayer>(layer) ||
           std::holds_alternative<DenseLayer>(layer);
}

ArchConfig mirrored_conv_ae(Shape input_shape, const std::vector<EncoderStage>& stages, Preset preset) {
    if (input_shape.size() != 3 || stages.empty()) arch_error("conv_ae needs a [T,H,W] input and >= 1 stage");
    ArchConfig cfg;
    cfg.kind = ModelKind::conv_ae;
    cfg.preset = preset;
    cfg.input_shape = input_shape;
    cfg.init = InitSpec{InitScheme::xavier, 15};

    std::vector<Extent2> conv_inputs;
    std::vector<std::size_t> pool_indices;
    Extent2 extent{input_shape[1], input_shape[2]};
    for (const EncoderStage& stage : stages) {
        conv_inputs.push_back(extent);
        cfg.layers.emplace_back(ConvLayer{stage.conv});
        cfg.layers.emplace_back(ActivationLayer{Activation::tanh});
        try {
            stage.conv.validate();
            extent = stage.conv.conv_out(extent);
        } catch (const Error& e) {
            arch_error(std::string("encoder stage: ") + e.what());
        }
        if (stage.pool) {
            if (extent.height < 2 || extent.width < 2) arch_error("encoder stage output too small to pool");
            pool_indices.push_back(cfg.layers.size());
            cfg.layers.emplace_back(PoolLayer{});
            extent = {(extent.height - 2) / 2 + 1, (extent.width - 2) / 2 + 1};
        } else {
            pool_indices.push_back(SIZE_MAX);
        }
    }
    for (std::size_t k = stages.size(); k-- > 0;) {
        if (pool_indices[k] != SIZE_MAX) cfg.layers.emplace_back(UnpoolLayer{pool_indices[k]});
        ConvSpec mirror = stages[k].conv;
        std::swap(mirror.in_channels, mirror.out_channels);
        mirror.pad = 0;
        cfg.layers.emplace_back(DeconvLayer{mirror, conv_inputs[k]});
        cfg.layers.emplace_back(ActivationLayer{k == 0 ? Activation::sigmoid : Activation::tanh});
    }
    validate(cfg);
    return cfg;
}

ArchConfig mirrored_fc_ae(const std::vector<std::size_t>& widths, Preset preset) {
    if (widths.size() < 2) arch_error("fc_ae needs at least an input and one hidden width");
    ArchConfig cfg;
    cfg.kind = ModelKind::fc_ae;
    cfg.preset = preset;
    cfg.input_shape = {widths.front()};
    cfg.init = InitSpec{InitScheme::sparse_gaussian, 15};
    std::vector<std::size_t> all(widths);
    all.insert(all.end(), widths.rbegin() + 1, widths.rend());
    for (std::size_t i = 0; i + 1 < all.size(); ++i) {
        cfg.layers.emplace_back(DenseLayer{all[i], all[i + 1]});
        const bool last = i + 2 == all.size();
        cfg.layers.emplace_back(ActivationLayer{last ? Activation::sigmoid : Activation::tanh});
    }
    validate(cfg);
    return cfg;
}

ArchConfig conv_ae_config(Preset preset, std::size_t frames) {
    if (frames == 0) arch_error("T must be >= 1");
    switch (preset) {
        case Preset::paper:
            return mirrored_conv_ae({frames, 227, 227},
                                    {{{frames, 512, 11, 11, 4, 0}, true},
                                     {{512, 256, 5, 5, 1, 2}, true},
                                     {{256, 128, 3, 3, 1, 1}, false}},
                                    Preset::paper);
        case Preset::tiny:
            return mirrored_conv_ae({frames, 32, 32},
                                    {{{frames, 16, 4, 4, 2, 1}, true},
                                     {{16, 16, 5, 5, 1, 2}, true},
                                     {{16, 8, 3, 3, 1, 1}, false}},
                                    Preset::tiny);
        case Preset::custom: break;
    }
    arch_error("conv_ae_config: no built-in geometry for preset 'custom'");
}

ArchConfig fc_ae_config(Preset preset) {
    switch (preset) {
        case Preset::paper: return mirrored_fc_ae({204, 2000, 1000, 500, 30}, Preset::paper);
        case Preset::tiny: {
            ArchConfig cfg = mirrored_fc_ae({204, 32, 8}, Preset::tiny);
            cfg.init.k = 8;
            return cfg;
        }
        case Preset::custom: break;
    }
    arch_error("fc_ae_config: no built-in geometry for preset 'custom'");
}

std::vector<Shape> infer_shapes(const ArchConfig& config) {
    if (config.input_shape.empty() || shape_size(config.input_shape) == 0) arch_error("empty input shape");
    const bool conv = config.kind == ModelKind::conv_ae;
    if (conv && config.input_shape.size() != 3) arch_error("conv_ae input must be [T,H,W]");
    if (!conv && config.input_shape.size() != 1) arch_error("fc_ae input must be [D]");

    std::vector<Shape> shapes;
    std::vector<std::size_t> unpooled;  // pool layers already consumed
    std::vector<std::pair<Shape, ConvSpec>> convs;  // input shape + spec, encoder order
    std::vector<std::pair<Shape, ConvSpec>> deconvs;  // output shape + spec
    Shape cur = config.input_shape;
    for (std::size_t i = 0; i < config.layers.size(); ++i) {
        const LayerSpec& layer = config.layers[i];
        const std::string where = layer_name(i);
        std::visit(Overloaded{
                       [&](const ConvLayer& l) {
                           if (!conv || cur.size() != 3 || cur[0] != l.spec.in_channels)
                               arch_error(where + ": conv input " + shape_str(cur));
                           try {
                               l.spec.validate();
                               const Extent2 out = l.spec.conv_out(spatial(cur));
                               convs.emplace_back(cur, l.spec);
                               cur = {l.spec.out_channels, out.height, out.width};
                           } catch (const Error& e) {
                               arch_error(where + ": " + e.what());
                           }
                       },
                       [&](const DeconvLayer& l) {
                           if (!conv || cur.size() != 3 || cur[0] != l.spec.in_channels)
                               arch_error(where + ": deconv input " + shape_str(cur));
                           const Extent2 full = l.spec.deconv_full(spatial(cur));
                           if (l.target.height == 0 || l.target.width == 0 || l.target.height > full.height ||
                               l.target.width > full.width ||
                               (full.height - l.target.height) / 2 != (full.width - l.target.width) / 2)
                               arch_error(where + ": deconv cannot crop " + shape_str(cur) + " to target");
                           cur = {l.spec.out_channels, l.target.height, l.target.width};
                           deconvs.emplace_back(cur, l.spec);
                       },
                       [&](const PoolLayer& l) {
                           if (!conv || cur.size() != 3 || cur[1] < l.window || cur[2] < l.window || l.stride == 0)
                               arch_error(where + ": pool input " + shape_str(cur));
                           cur = {cur[0], (cur[1] - l.window) / l.stride + 1, (cur[2] - l.window) / l.stride + 1};
                       },
                       [&](const UnpoolLayer& l) {
                           if (l.pool_index >= i || !std::holds_alternative<PoolLayer>(config.layers[l.pool_index]))
                               arch_error(where + ": unpool does not reference an earlier pool layer");
                           if (std::find(unpooled.begin(), unpooled.end(), l.pool_index) != unpooled.end())
                               arch_error(where + ": pool layer unpooled twice");
                           if (cur != shapes[l.pool_index])
                               arch_error(where + ": unpool input " + shape_str(cur) + " vs pooled " +
                                          shape_str(shapes[l.pool_index]));
                           unpooled.push_back(l.pool_index);
                           cur = l.pool_index == 0 ? config.input_shape : shapes[l.pool_index - 1];
                       },
                       [&](const DenseLayer& l) {
                           if (conv || cur.size() != 1 || cur[0] != l.in || l.out == 0)
                               arch_error(where + ": dense input " + shape_str(cur));
                           cur = {l.out};
                       },
                       [&](const ActivationLayer&) {},
                   },
                   layer);
        shapes.push_back(cur);
    }
    if (cur != config.input_shape) {
        arch_error("output shape " + shape_str(cur) + " differs from input " + shape_str(config.input_shape));
    }
    if (conv) {
        std::size_t pools = 0;
        for (const LayerSpec& l : config.layers) pools += std::holds_alternative<PoolLayer>(l);
        if (pools != unpooled.size()) arch_error("every pool layer needs a matching unpool");
        if (convs.size() != deconvs.size()) arch_error("conv and deconv counts differ");
        for (std::size_t k = 0; k < convs.size(); ++k) {
            const auto& [conv_in, conv_spec] = convs[k];
            const auto& [deconv_out, deconv_spec] = deconvs[convs.size() - 1 - k];
            if (deconv_spec.in_channels != conv_spec.out_channels || deconv_out != conv_in)
                arch_error("deconv " + std::to_string(k) + " does not mirror conv " + std::to_string(k) + ": " +
                           shape_str(deconv_out) + " vs " + shape_str(conv_in));
        }
    } else {
        std::vector<std::size_t> widths{config.input_shape[0]};
        for (const LayerSpec& l : config.layers)
            if (const auto* d = std::get_if<DenseLayer>(&l)) widths.push_back(d->out);
        if (!std::equal(widths.begin(), widths.end(), widths.rbegin())) arch_error("fc widths are not mirrored");
    }
    return shapes;
}

void validate(const ArchConfig& config) { (void)infer_shapes(config); }

std::vector<std::pair<Shape, Shape>> param_shapes(const ArchConfig& config) {
    std::vector<std::pair<Shape, Shape>> out;
    for (const LayerSpec& layer : config.layers) {
        std::visit(Overloaded{
                       [&](const ConvLayer& l) {
                           const ConvSpec& s = l.spec;
                           out.push_back({{s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}, {s.out_channels}});
                       },
                       [&](const DeconvLayer& l) {
                           const ConvSpec& s = l.spec;
                           out.push_back({{s.in_channels, s.out_channels, s.kernel_h, s.kernel_w}, {s.out_channels}});
                       },
                       [&](const DenseLayer& l) { out.push_back({{l.out, l.in}, {l.out}}); },
                       [&](const auto&) { out.push_back({}); },
                   },
                   layer);
    }
    return out;
}

Autoencoder::Autoencoder(ArchConfig config, std::vector<LayerParams> params)
    : config_(std::move(config)), params_(std::move(params)) {
    validate(config_);
    const auto shapes = param_shapes(config_);
    if (shapes.size() != params_.size()) arch_error("parameter list length does not match layer count");
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (params_[i].weights.shape() != shapes[i].first || params_[i].bias.shape() != shapes[i].second) {
            arch_error(layer_name(i) + ": parameter shape " + shape_str(params_[i].weights.shape()) +
                       " expected " + shape_str(shapes[i].first));
        }
    }
}

std::size_t Autoencoder::parameter_count() const {
    std::size_t n = 0;
    for (const LayerParams& p : params_) n += p.weights.size() + p.bias.size();
    return n;
}

void Autoencoder::round_to_storage_precision() {
    ++generation_;
    for (LayerParams& p : params_) {
        for (double& v : p.weights.data()) v = static_cast<double>(static_cast<float>(v));
        for (double& v : p.bias.data()) v = static_cast<double>(static_cast<float>(v));
    }
}

namespace {

Autoencoder build_with_init(ArchConfig config, InitSpec init, std::uint64_t rng_seed) {
    validate(config);
    config.init = init;
    config.seed = rng_seed;
    Rng rng(rng_seed);
    const auto shapes = param_shapes(config);
    std::vector<LayerParams> params(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i].first.empty()) continue;
        if (init.scheme == InitScheme::xavier) {
            params[i].weights = xavier_init(shapes[i].first, fan_in(config.layers[i]), rng);
        } else {
            if (init.k > fan_in(config.layers[i])) {
                throw Error(ErrorKind::InvalidInit, layer_name(i) + ": k=" + std::to_string(init.k) +
                                                        " exceeds fan-in " + std::to_string(fan_in(config.layers[i])));
            }
            params[i].weights = sparse_init(shapes[i].first, init.k, rng);
        }
        params[i].bias = Tensor(shapes[i].second, 0.0);
    }
    return Autoencoder(std::move(config), std::move(params));
}

}  // namespace

Autoencoder build_conv_ae(ArchConfig config, InitSpec init, std::uint64_t rng_seed) {
    if (config.kind != ModelKind::conv_ae) arch_error("build_conv_ae: config kind is " + to_string(config.kind));
    return build_with_init(std::move(config), init, rng_seed);
}

Autoencoder build_fc_ae(ArchConfig config, InitSpec init, std::uint64_t rng_seed) {
    if (config.kind != ModelKind::fc_ae) arch_error("build_fc_ae: config kind is " + to_string(config.kind));
    return build_with_init(std::move(config), init, rng_seed);
}

Autoencoder build_autoencoder(const ArchConfig& config) {
    return build_with_init(config, config.init, config.seed);
}

namespace {

template <bool KeepCache>
Tensor run_forward(const Autoencoder& model, const Tensor& input, ForwardState* state) {
    const ArchConfig& cfg = model.config();
    if (input.shape() != cfg.input_shape) {
        throw Error(ErrorKind::ShapeMismatch,
                    "model input " + shape_str(input.shape()) + " expected " + shape_str(cfg.input_shape));
    }
    const auto params = model.params();
    // Pool records are needed by the matching unpool even when activations are discarded.
    std::vector<PoolRecord> records(cfg.layers.size());
    if constexpr (KeepCache) {
        state->generation = model.generation();
        state->layers.assign(cfg.layers.size(), {});
    }
    Tensor cur = input;
    for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
        Tensor next = std::visit(Overloaded{
                                     [&](const ConvLayer& l) { return conv_forward(cur, l.spec, params[i]); },
                                     [&](const DeconvLayer& l) {
                                         return deconv_forward(cur, l.spec, params[i], l.target);
                                     },
                                     [&](const PoolLayer& l) {
                                         PoolResult r = maxpool_forward(cur, l.window, l.stride);
                                         records[i] = std::move(r.record);
                                         return std::move(r.output);
                                     },
                                     [&](const UnpoolLayer& l) { return unpool_forward(cur, records[l.pool_index]); },
                                     [&](const DenseLayer&) { return fc_forward(cur, params[i]); },
                                     [&](const ActivationLayer& l) { return activate(cur, l.kind); },
                                 },
                                 cfg.layers[i]);
        if constexpr (KeepCache) {
            state->layers[i].input = std::move(cur);
            state->layers[i].output = next;
            state->layers[i].record = records[i];
        }
        cur = std::move(next);
    }
    return cur;
}

}  // namespace

ForwardResult model_forward(const Autoencoder& model, const Tensor& input) {
    ForwardResult r;
    r.reconstruction = run_forward<true>(model, input, &r.state);
    return r;
}

Tensor reconstruct(const Autoencoder& model, const Tensor& input) {
    return run_forward<false>(model, input, nullptr);
}

ParamGrads layer_backward(const LayerSpec& layer, const LayerParams* params, const LayerCache& cache,
                          const PoolRecord* pool_record, const Tensor& grad_out) {
    if (cache.input.empty() || cache.output.empty()) throw Error(ErrorKind::StaleCache, "layer has no forward cache");
    if (grad_out.shape() != cache.output.shape()) {
        throw Error(ErrorKind::ShapeMismatch,
                    "grad_out " + shape_str(grad_out.shape()) + " vs output " + shape_str(cache.output.shape()));
    }
    if (has_params(layer) && params == nullptr) throw Error(ErrorKind::StaleCache, "missing layer parameters");
    return std::visit(
        Overloaded{
            [&](const ConvLayer& l) { return conv_backward(cache.input, l.spec, *params, grad_out); },
            [&](const DeconvLayer& l) { return deconv_backward(cache.input, l.spec, *params, l.target, grad_out); },
            [&](const PoolLayer&) {
                if (cache.record.switches.empty()) throw Error(ErrorKind::StaleCache, "pool layer lost its switches");
                return ParamGrads{maxpool_backward(cache.record, grad_out), {}};
            },
            [&](const UnpoolLayer&) {
                if (pool_record == nullptr || pool_record->switches.empty())
                    throw Error(ErrorKind::StaleCache, "unpool layer has no pool record");
                return ParamGrads{unpool_backward(*pool_record, grad_out), {}};
            },
            [&](const DenseLayer&) { return fc_backward(cache.input, *params, grad_out); },
            [&](const ActivationLayer& l) {
                return ParamGrads{activate_backward(cache.output, l.kind, grad_out), {}};
            },
        },
        layer);
}

BackwardResult model_backward(const Autoencoder& model, const ForwardState& state, const Tensor& grad_out) {
    const ArchConfig& cfg = model.config();
    if (state.layers.size() != cfg.layers.size() || state.generation != model.generation()) {
        throw Error(ErrorKind::StaleCache, "forward state does not belong to the current parameters");
    }
    BackwardResult r;
    r.grads.resize(cfg.layers.size());
    Tensor grad = grad_out;
    for (std::size_t i = cfg.layers.size(); i-- > 0;) {
        const PoolRecord* pool = nullptr;
        if (const auto* u = std::get_if<UnpoolLayer>(&cfg.layers[i])) pool = &state.layers[u->pool_index].record;
        const LayerParams* params = has_params(cfg.layers[i]) ? &model.params()[i] : nullptr;
        ParamGrads g = layer_backward(cfg.layers[i], params, state.layers[i], pool, grad);
        grad = std::move(g.grad_in);
        r.grads[i] = std::move(g.grads);
    }
    r.grad_in = std::move(grad);
    return r;
}

}  // namespace trae
