#pragma once

#include <cstddef>
#include <vector>

#include "trae/tensor.hpp"

namespace trae {

struct Extent2 {
    std::size_t height = 0;
    std::size_t width = 0;
    bool operator==(const Extent2&) const = default;
};

/// Geometry of a convolution. For a deconvolution the same spec describes the
/// mirrored mapping in_channels -> out_channels; `pad` is unused there and the
/// boundary is cropped to an explicit target instead.
struct ConvSpec {
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    std::size_t kernel_h = 1;
    std::size_t kernel_w = 1;
    std::size_t stride = 1;
    std::size_t pad = 0;

    bool operator==(const ConvSpec&) const = default;

    /// floor((in + 2 pad - k) / stride) + 1; throws InvalidShape when < 1.
    std::size_t conv_out(std::size_t in, std::size_t kernel) const;
    Extent2 conv_out(Extent2 in) const;
    /// Uncropped transposed-convolution size (in - 1) * stride + k.
    Extent2 deconv_full(Extent2 in) const;

    void validate() const;
};

struct LayerParams {
    Tensor weights;
    Tensor bias;
    bool operator==(const LayerParams&) const = default;
};

/// Switch variables from a max-pooling pass: for each pooled cell, the flat
/// index (into the pre-pool tensor) of the selected maximum.
struct PoolRecord {
    std::vector<std::size_t> switches;
    Shape pre_pool_shape;
    Shape pooled_shape;
};

struct PoolResult {
    Tensor output;
    PoolRecord record;
};

struct ParamGrads {
    Tensor grad_in;
    LayerParams grads;
};

enum class Activation { sigmoid, tanh };

// Convolution: weights [C_out, C_in, kh, kw], bias [C_out].
Tensor conv_forward(const Tensor& input, const ConvSpec& spec, const LayerParams& params);
ParamGrads conv_backward(const Tensor& input, const ConvSpec& spec, const LayerParams& params,
                         const Tensor& grad_out);
/// Input-gradient half of conv_backward; the adjoint of conv_forward without bias.
Tensor conv_input_backward(const Tensor& grad_out, const ConvSpec& spec, const LayerParams& params,
                           Extent2 input_extent);

// Transposed convolution: weights [C_in, C_out, kh, kw], bias [C_out]. The full
// output is center-cropped to `target`, floor on the leading side.
Tensor deconv_forward(const Tensor& input, const ConvSpec& spec, const LayerParams& params, Extent2 target);
ParamGrads deconv_backward(const Tensor& input, const ConvSpec& spec, const LayerParams& params,
                           Extent2 target, const Tensor& grad_out);

// Max pooling, floor semantics: trailing rows/columns that do not fill a window are dropped.
// Ties resolve to the first maximum in row-major window order.
PoolResult maxpool_forward(const Tensor& input, std::size_t window = 2, std::size_t stride = 2);
Tensor maxpool_backward(const PoolRecord& record, const Tensor& grad_out);

Tensor unpool_forward(const Tensor& input, const PoolRecord& record);
Tensor unpool_backward(const PoolRecord& record, const Tensor& grad_out);

// Fully connected: weights [m, n], bias [m].
Tensor fc_forward(const Tensor& input, const LayerParams& params);
ParamGrads fc_backward(const Tensor& input, const LayerParams& params, const Tensor& grad_out);

double sigmoid(double z);
Tensor activate(const Tensor& input, Activation kind);
/// Gradient through an activation, expressed via its forward output.
Tensor activate_backward(const Tensor& output, Activation kind, const Tensor& grad_out);

}  // namespace trae
