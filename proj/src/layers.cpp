#include "trae/layers.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace trae {

namespace {

// Index ranges for the "small" grid coordinate x such that x*stride + k - offset
// lands inside [0, big). All three correlation kernels below share this geometry.
struct Range {
    std::size_t begin;
    std::size_t end;
};

Range valid_range(std::size_t small, std::size_t big, std::size_t k, std::size_t stride, std::size_t offset) {
    std::size_t lo = 0;
    if (offset > k) lo = (offset - k + stride - 1) / stride;
    const std::ptrdiff_t top = static_cast<std::ptrdiff_t>(big) - 1 + static_cast<std::ptrdiff_t>(offset) -
                               static_cast<std::ptrdiff_t>(k);
    if (top < 0) return {0, 0};
    std::size_t hi = static_cast<std::size_t>(top) / stride + 1;
    if (hi > small) hi = small;
    if (lo > hi) lo = hi;
    return {lo, hi};
}

struct Geometry {
    std::size_t a_channels;  // weight axis 0, lives on the small grid
    std::size_t b_channels;  // weight axis 1, lives on the big grid
    std::size_t kh, kw, stride, offset;
    std::size_t small_h, small_w, big_h, big_w;
};

// Patch matrix: col[(b*kh+i)*kw+j][y*small_w+x] = big[b][y*s+i-p][x*s+j-p], zero
// where the tap falls outside the big grid.
std::vector<double> im2col(const Geometry& g, const double* big) {
    const std::size_t plane = g.small_h * g.small_w;
    std::vector<double> col(g.b_channels * g.kh * g.kw * plane, 0.0);
    for (std::size_t b = 0; b < g.b_channels; ++b) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            const Range ry = valid_range(g.small_h, g.big_h, i, g.stride, g.offset);
            for (std::size_t j = 0; j < g.kw; ++j) {
                const Range rx = valid_range(g.small_w, g.big_w, j, g.stride, g.offset);
                double* row = col.data() + ((b * g.kh + i) * g.kw + j) * plane;
                for (std::size_t y = ry.begin; y < ry.end; ++y) {
                    const double* in = big + (b * g.big_h + y * g.stride + i - g.offset) * g.big_w + j - g.offset;
                    double* out = row + y * g.small_w;
                    for (std::size_t x = rx.begin; x < rx.end; ++x) out[x] = in[x * g.stride];
                }
            }
        }
    }
    return col;
}

// Adjoint of im2col: big[b][y*s+i-p][x*s+j-p] += col[(b*kh+i)*kw+j][y*small_w+x].
void col2im(const Geometry& g, const double* col, double* big) {
    const std::size_t plane = g.small_h * g.small_w;
    for (std::size_t b = 0; b < g.b_channels; ++b) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            const Range ry = valid_range(g.small_h, g.big_h, i, g.stride, g.offset);
            for (std::size_t j = 0; j < g.kw; ++j) {
                const Range rx = valid_range(g.small_w, g.big_w, j, g.stride, g.offset);
                const double* row = col + ((b * g.kh + i) * g.kw + j) * plane;
                for (std::size_t y = ry.begin; y < ry.end; ++y) {
                    double* out = big + (b * g.big_h + y * g.stride + i - g.offset) * g.big_w + j - g.offset;
                    const double* in = row + y * g.small_w;
                    for (std::size_t x = rx.begin; x < rx.end; ++x) out[x * g.stride] += in[x];
                }
            }
        }
    }
}

// small[a][y][x] += sum_b,i,j w[a][b][i][j] * big[b][y*s+i-p][x*s+j-p]
void correlate(const Geometry& g, const double* w, const double* big, double* small) {
    const std::size_t plane = g.small_h * g.small_w;
    const std::size_t taps = g.b_channels * g.kh * g.kw;
    const std::vector<double> col = im2col(g, big);
    for (std::size_t a = 0; a < g.a_channels; ++a) {
        double* out = small + a * plane;
        for (std::size_t k = 0; k < taps; ++k) {
            const double wv = w[a * taps + k];
            if (wv == 0.0) continue;
            const double* in = col.data() + k * plane;
            for (std::size_t p = 0; p < plane; ++p) out[p] += wv * in[p];
        }
    }
}

// big[b][y*s+i-p][x*s+j-p] += w[a][b][i][j] * small[a][y][x]
void scatter(const Geometry& g, const double* w, const double* small, double* big) {
    const std::size_t plane = g.small_h * g.small_w;
    const std::size_t taps = g.b_channels * g.kh * g.kw;
    std::vector<double> col(taps * plane, 0.0);
    for (std::size_t k = 0; k < taps; ++k) {
        double* out = col.data() + k * plane;
        for (std::size_t a = 0; a < g.a_channels; ++a) {
            const double wv = w[a * taps + k];
            if (wv == 0.0) continue;
            const double* in = small + a * plane;
            for (std::size_t p = 0; p < plane; ++p) out[p] += wv * in[p];
        }
    }
    col2im(g, col.data(), big);
}

// wgrad[a][b][i][j] += sum_y,x small[a][y][x] * big[b][y*s+i-p][x*s+j-p]
void weight_correlate(const Geometry& g, const double* small, const double* big, double* wgrad) {
    const std::size_t plane = g.small_h * g.small_w;
    const std::size_t taps = g.b_channels * g.kh * g.kw;
    const std::vector<double> col = im2col(g, big);
    for (std::size_t a = 0; a < g.a_channels; ++a) {
        const double* s = small + a * plane;
        for (std::size_t k = 0; k < taps; ++k) {
            const double* c = col.data() + k * plane;
            double acc[4] = {0.0, 0.0, 0.0, 0.0};
            std::size_t p = 0;
            for (; p + 4 <= plane; p += 4)
                for (std::size_t l = 0; l < 4; ++l) acc[l] += s[p + l] * c[p + l];
            for (; p < plane; ++p) acc[0] += s[p] * c[p];
            wgrad[a * taps + k] += (acc[0] + acc[1]) + (acc[2] + acc[3]);
        }
    }
}

void require_chw(const Tensor& t, std::size_t channels, const char* where) {
    if (t.rank() != 3 || t.dim(0) != channels) {
        throw Error(ErrorKind::ShapeMismatch, std::string(where) + ": expected " + std::to_string(channels) +
                                                  " channels, got " + shape_str(t.shape()));
    }
}

void require_params(const LayerParams& p, const Shape& weights, std::size_t bias, const char* where) {
    if (p.weights.shape() != weights || p.bias.rank() != 1 || p.bias.dim(0) != bias) {
        throw Error(ErrorKind::ShapeMismatch, std::string(where) + ": parameter shape " +
                                                  shape_str(p.weights.shape()) + " expected " + shape_str(weights));
    }
}

Shape conv_weight_shape(const ConvSpec& s) { return {s.out_channels, s.in_channels, s.kernel_h, s.kernel_w}; }
Shape deconv_weight_shape(const ConvSpec& s) { return {s.in_channels, s.out_channels, s.kernel_h, s.kernel_w}; }

Geometry conv_geometry(const ConvSpec& s, Extent2 in, Extent2 out) {
    return {s.out_channels, s.in_channels, s.kernel_h, s.kernel_w, s.stride, s.pad,
            out.height,     out.width,     in.height,  in.width};
}

std::size_t crop_lead(std::size_t full, std::size_t target) { return (full - target) / 2; }

Geometry deconv_geometry(const ConvSpec& s, Extent2 in, Extent2 target) {
    // check_deconv_target guarantees both axes share the same leading crop.
    const Extent2 full = s.deconv_full(in);
    return {s.in_channels, s.out_channels, s.kernel_h, s.kernel_w, s.stride, crop_lead(full.height, target.height),
            in.height,     in.width,       target.height, target.width};
}

void check_deconv_target(const ConvSpec& spec, Extent2 in, Extent2 target) {
    const Extent2 full = spec.deconv_full(in);
    if (target.height == 0 || target.width == 0 || target.height > full.height || target.width > full.width) {
        throw Error(ErrorKind::CropUnderflow, "target " + std::to_string(target.height) + "x" +
                                                  std::to_string(target.width) + " exceeds full output " +
                                                  std::to_string(full.height) + "x" + std::to_string(full.width));
    }
    if (crop_lead(full.height, target.height) != crop_lead(full.width, target.width)) {
        throw Error(ErrorKind::CropUnderflow, "deconv crop must be equal on both spatial axes");
    }
}

}  // namespace

std::size_t ConvSpec::conv_out(std::size_t in, std::size_t kernel) const {
    if (in + 2 * pad < kernel) {
        throw Error(ErrorKind::InvalidShape, "kernel " + std::to_string(kernel) + " larger than padded input " +
                                                 std::to_string(in + 2 * pad));
    }
    return (in + 2 * pad - kernel) / stride + 1;
}

Extent2 ConvSpec::conv_out(Extent2 in) const { return {conv_out(in.height, kernel_h), conv_out(in.width, kernel_w)}; }

Extent2 ConvSpec::deconv_full(Extent2 in) const {
    return {(in.height - 1) * stride + kernel_h, (in.width - 1) * stride + kernel_w};
}

void ConvSpec::validate() const {
    if (in_channels == 0 || out_channels == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0) {
        throw Error(ErrorKind::InvalidShape, "conv spec has a zero channel/kernel/stride");
    }
}

Tensor conv_forward(const Tensor& input, const ConvSpec& spec, const LayerParams& params) {
    spec.validate();
    require_chw(input, spec.in_channels, "conv_forward");
    require_params(params, conv_weight_shape(spec), spec.out_channels, "conv_forward");
    const Extent2 in{input.dim(1), input.dim(2)};
    const Extent2 out = spec.conv_out(in);
    Tensor result({spec.out_channels, out.height, out.width});
    const std::size_t plane = out.height * out.width;
    for (std::size_t c = 0; c < spec.out_channels; ++c) {
        std::fill_n(result.raw() + c * plane, plane, params.bias[c]);
    }
    correlate(conv_geometry(spec, in, out), params.weights.raw(), input.raw(), result.raw());
    return result;
}

Tensor conv_input_backward(const Tensor& grad_out, const ConvSpec& spec, const LayerParams& params,
                           Extent2 input_extent) {
    require_chw(grad_out, spec.out_channels, "conv_input_backward");
    const Extent2 out = spec.conv_out(input_extent);
    if (grad_out.dim(1) != out.height || grad_out.dim(2) != out.width) {
        throw Error(ErrorKind::ShapeMismatch, "conv_input_backward: grad_out " + shape_str(grad_out.shape()));
    }
    Tensor grad_in({spec.in_channels, input_extent.height, input_extent.width});
    scatter(conv_geometry(spec, input_extent, out), params.weights.raw(), grad_out.raw(), grad_in.raw());
    return grad_in;
}

ParamGrads conv_backward(const Tensor& input, const ConvSpec& spec, const LayerParams& params,
                         const Tensor& grad_out) {
    require_chw(input, spec.in_channels, "conv_backward");
    require_params(params, conv_weight_shape(spec), spec.out_channels, "conv_backward");
    const Extent2 in{input.dim(1), input.dim(2)};
    const Extent2 out = spec.conv_out(in);
    ParamGrads r;
    r.grad_in = conv_input_backward(grad_out, spec, params, in);
    r.grads.weights = Tensor(params.weights.shape());
    r.grads.bias = Tensor(params.bias.shape());
    weight_correlate(conv_geometry(spec, in, out), grad_out.raw(), input.raw(), r.grads.weights.raw());
    const std::size_t plane = out.height * out.width;
    for (std::size_t c = 0; c < spec.out_channels; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < plane; ++k) s += grad_out[c * plane + k];
        r.grads.bias[c] = s;
    }
    return r;
}

Tensor deconv_forward(const Tensor& input, const ConvSpec& spec, const LayerParams& params, Extent2 target) {
    spec.validate();
    require_chw(input, spec.in_channels, "deconv_forward");
    require_params(params, deconv_weight_shape(spec), spec.out_channels, "deconv_forward");
    const Extent2 in{input.dim(1), input.dim(2)};
    check_deconv_target(spec, in, target);
    Tensor result({spec.out_channels, target.height, target.width});
    const std::size_t plane = target.height * target.width;
    for (std::size_t c = 0; c < spec.out_channels; ++c) {
        std::fill_n(result.raw() + c * plane, plane, params.bias[c]);
    }
    scatter(deconv_geometry(spec, in, target), params.weights.raw(), input.raw(), result.raw());
    return result;
}

ParamGrads deconv_backward(const Tensor& input, const ConvSpec& spec, const LayerParams& params, Extent2 target,
                           const Tensor& grad_out) {
    require_chw(input, spec.in_channels, "deconv_backward");
    require_params(params, deconv_weight_shape(spec), spec.out_channels, "deconv_backward");
    require_chw(grad_out, spec.out_channels, "deconv_backward");
    if (grad_out.dim(1) != target.height || grad_out.dim(2) != target.width) {
        throw Error(ErrorKind::ShapeMismatch, "deconv_backward: grad_out " + shape_str(grad_out.shape()));
    }
    const Extent2 in{input.dim(1), input.dim(2)};
    check_deconv_target(spec, in, target);
    const Geometry g = deconv_geometry(spec, in, target);
    ParamGrads r;
    r.grad_in = Tensor(input.shape());
    correlate(g, params.weights.raw(), grad_out.raw(), r.grad_in.raw());
    r.grads.weights = Tensor(params.weights.shape());
    weight_correlate(g, input.raw(), grad_out.raw(), r.grads.weights.raw());
    r.grads.bias = Tensor(params.bias.shape());
    const std::size_t plane = target.height * target.width;
    for (std::size_t c = 0; c < spec.out_channels; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < plane; ++k) s += grad_out[c * plane + k];
        r.grads.bias[c] = s;
    }
    return r;
}

PoolResult maxpool_forward(const Tensor& input, std::size_t window, std::size_t stride) {
    if (input.rank() != 3 || input.dim(1) < window || input.dim(2) < window || window == 0 || stride == 0) {
        throw Error(ErrorKind::InvalidShape, "maxpool_forward: input " + shape_str(input.shape()));
    }
    const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
    const std::size_t Ho = (H - window) / stride + 1, Wo = (W - window) / stride + 1;
    PoolResult r;
    r.output = Tensor({C, Ho, Wo});
    r.record.pre_pool_shape = input.shape();
    r.record.pooled_shape = r.output.shape();
    r.record.switches.resize(C * Ho * Wo);
    for (std::size_t c = 0; c < C; ++c) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                std::size_t best = (c * H + oy * stride) * W + ox * stride;
                for (std::size_t i = 0; i < window; ++i) {
                    for (std::size_t j = 0; j < window; ++j) {
                        const std::size_t idx = (c * H + oy * stride + i) * W + ox * stride + j;
                        if (input[idx] > input[best]) best = idx;
                    }
                }
                const std::size_t o = (c * Ho + oy) * Wo + ox;
                r.output[o] = input[best];
                r.record.switches[o] = best;
            }
        }
    }
    return r;
}

Tensor maxpool_backward(const PoolRecord& record, const Tensor& grad_out) {
    if (grad_out.shape() != record.pooled_shape) {
        throw Error(ErrorKind::SwitchMismatch, "maxpool_backward: grad " + shape_str(grad_out.shape()) +
                                                   " vs pooled " + shape_str(record.pooled_shape));
    }
    Tensor grad_in(record.pre_pool_shape);
    for (std::size_t o = 0; o < record.switches.size(); ++o) grad_in[record.switches[o]] += grad_out[o];
    return grad_in;
}

Tensor unpool_forward(const Tensor& input, const PoolRecord& record) {
    if (input.shape() != record.pooled_shape || record.switches.size() != input.size()) {
        throw Error(ErrorKind::SwitchMismatch, "unpool_forward: input " + shape_str(input.shape()) +
                                                   " vs pooled " + shape_str(record.pooled_shape));
    }
    Tensor out(record.pre_pool_shape);
    for (std::size_t o = 0; o < record.switches.size(); ++o) out[record.switches[o]] = input[o];
    return out;
}

Tensor unpool_backward(const PoolRecord& record, const Tensor& grad_out) {
    if (grad_out.shape() != record.pre_pool_shape) {
        throw Error(ErrorKind::SwitchMismatch, "unpool_backward: grad " + shape_str(grad_out.shape()));
    }
    Tensor grad_in(record.pooled_shape);
    for (std::size_t o = 0; o < record.switches.size(); ++o) grad_in[o] = grad_out[record.switches[o]];
    return grad_in;
}

Tensor fc_forward(const Tensor& input, const LayerParams& params) {
    if (params.weights.rank() != 2 || input.rank() != 1 || input.dim(0) != params.weights.dim(1) ||
        params.bias.size() != params.weights.dim(0)) {
        throw Error(ErrorKind::ShapeMismatch, "fc_forward: input " + shape_str(input.shape()) + " weights " +
                                                  shape_str(params.weights.shape()));
    }
    const std::size_t m = params.weights.dim(0), n = params.weights.dim(1);
    Tensor out({m});
    for (std::size_t r = 0; r < m; ++r) {
        const double* w = params.weights.raw() + r * n;
        double s = params.bias[r];
        for (std::size_t c = 0; c < n; ++c) s += w[c] * input[c];
        out[r] = s;
    }
    return out;
}

ParamGrads fc_backward(const Tensor& input, const LayerParams& params, const Tensor& grad_out) {
    const std::size_t m = params.weights.dim(0), n = params.weights.dim(1);
    if (input.rank() != 1 || input.dim(0) != n || grad_out.rank() != 1 || grad_out.dim(0) != m) {
        throw Error(ErrorKind::ShapeMismatch, "fc_backward: grad_out " + shape_str(grad_out.shape()));
    }
    ParamGrads r;
    r.grad_in = Tensor({n});
    r.grads.weights = Tensor(params.weights.shape());
    r.grads.bias = grad_out;
    for (std::size_t row = 0; row < m; ++row) {
        const double g = grad_out[row];
        const double* w = params.weights.raw() + row * n;
        double* gw = r.grads.weights.raw() + row * n;
        for (std::size_t c = 0; c < n; ++c) {
            gw[c] = g * input[c];
            r.grad_in[c] += g * w[c];
        }
    }
    return r;
}

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

Tensor activate(const Tensor& input, Activation kind) {
    if (kind == Activation::sigmoid) return elementwise_map(input, [](double z) { return sigmoid(z); });
    return elementwise_map(input, [](double z) { return std::tanh(z); });
}

Tensor activate_backward(const Tensor& output, Activation kind, const Tensor& grad_out) {
    if (kind == Activation::sigmoid) {
        return elementwise_zip(output, grad_out, [](double y, double g) { return g * y * (1.0 - y); });
    }
    return elementwise_zip(output, grad_out, [](double y, double g) { return g * (1.0 - y * y); });
}

}  // namespace trae
