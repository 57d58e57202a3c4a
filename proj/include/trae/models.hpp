#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "trae/init.hpp"
#include "trae/layers.hpp"
#include "trae/tensor.hpp"

namespace trae {

enum class ModelKind { conv_ae, fc_ae };
enum class Preset { paper, tiny, custom };

std::string to_string(ModelKind kind);
std::string to_string(Preset preset);
ModelKind parse_model_kind(const std::string& s);
Preset parse_preset(const std::string& s);

struct ConvLayer {
    ConvSpec spec;
};
struct DeconvLayer {
    ConvSpec spec;
    Extent2 target;
};
struct PoolLayer {
    std::size_t window = 2;
    std::size_t stride = 2;
};
/// Restores the spatial layout recorded by the pool layer at `pool_index`.
struct UnpoolLayer {
    std::size_t pool_index = 0;
};
struct DenseLayer {
    std::size_t in = 1;
    std::size_t out = 1;
};
struct ActivationLayer {
    Activation kind = Activation::tanh;
};

using LayerSpec = std::variant<ConvLayer, DeconvLayer, PoolLayer, UnpoolLayer, DenseLayer, ActivationLayer>;

bool has_params(const LayerSpec& layer);

struct ArchConfig {
    ModelKind kind = ModelKind::conv_ae;
    Preset preset = Preset::custom;
    Shape input_shape;
    std::vector<LayerSpec> layers;
    InitSpec init;
    std::uint64_t seed = 0;
};

/// One encoder stage: convolution, tanh, optional 2x2 max pooling.
struct EncoderStage {
    ConvSpec conv;
    bool pool = false;
};

/// Builds the encoder from `stages` and the decoder as its mirror image:
/// [unpool] deconv activation per stage in reverse, tanh everywhere except a
/// sigmoid on the final reconstruction.
ArchConfig mirrored_conv_ae(Shape input_shape, const std::vector<EncoderStage>& stages, Preset preset);
/// widths = encoder widths including the input; decoder mirrors them back.
ArchConfig mirrored_fc_ae(const std::vector<std::size_t>& widths, Preset preset);

/// paper: [T,227,227], conv 512@11x11/4, pool, 256@5x5 p2, pool, 128@3x3 p1.
/// tiny:  [T,32,32],   conv 16@4x4/2 p1, pool, 16@5x5 p2,  pool, 8@3x3 p1.
ArchConfig conv_ae_config(Preset preset, std::size_t frames = 10);
/// paper: 204-2000-1000-500-30 mirrored; tiny: 204-32-8 mirrored.
ArchConfig fc_ae_config(Preset preset);

/// Output shape of every layer, in order. Throws ArchError on any inconsistency,
/// including a decoder that does not mirror its encoder.
std::vector<Shape> infer_shapes(const ArchConfig& config);
void validate(const ArchConfig& config);

std::vector<std::pair<Shape, Shape>> param_shapes(const ArchConfig& config);

struct LayerCache {
    Tensor input;
    Tensor output;
    PoolRecord record;
};

struct ForwardState {
    std::uint64_t generation = 0;
    std::vector<LayerCache> layers;
};

class Autoencoder {
public:
    Autoencoder(ArchConfig config, std::vector<LayerParams> params);

    const ArchConfig& config() const noexcept { return config_; }
    std::span<const LayerParams> params() const noexcept { return params_; }
    /// Mutable access invalidates every ForwardState produced earlier.
    std::vector<LayerParams>& mutable_params() noexcept {
        ++generation_;
        return params_;
    }
    std::uint64_t generation() const noexcept { return generation_; }
    std::size_t parameter_count() const;

    /// Rounds every parameter to the nearest 32-bit float (the checkpoint precision).
    void round_to_storage_precision();

private:
    ArchConfig config_;
    std::vector<LayerParams> params_;
    std::uint64_t generation_ = 0;
};

Autoencoder build_conv_ae(ArchConfig config, InitSpec init, std::uint64_t rng_seed);
Autoencoder build_fc_ae(ArchConfig config, InitSpec init, std::uint64_t rng_seed);
/// Dispatches on config.kind using config.init and config.seed.
Autoencoder build_autoencoder(const ArchConfig& config);

struct ForwardResult {
    Tensor reconstruction;
    ForwardState state;
};

ForwardResult model_forward(const Autoencoder& model, const Tensor& input);
/// Forward pass without keeping activations.
Tensor reconstruct(const Autoencoder& model, const Tensor& input);

struct BackwardResult {
    Tensor grad_in;
    std::vector<LayerParams> grads;  // empty entries for parameterless layers
};

/// `pool_record` is required for unpool layers and ignored otherwise.
ParamGrads layer_backward(const LayerSpec& layer, const LayerParams* params, const LayerCache& cache,
                          const PoolRecord* pool_record, const Tensor& grad_out);

BackwardResult model_backward(const Autoencoder& model, const ForwardState& state, const Tensor& grad_out);

// Checkpoint: "TRAE", u32 version, u64 header length, JSON header, then the
// weight and bias blobs of every parameterised layer as little-endian float32.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string config_to_json(const ArchConfig& config);
ArchConfig config_from_json(const std::string& text);

std::vector<std::uint8_t> encode_checkpoint(const Autoencoder& model);
Autoencoder decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Autoencoder& model, const std::filesystem::path& path);
Autoencoder load_checkpoint(const std::filesystem::path& path);

}  // namespace trae
