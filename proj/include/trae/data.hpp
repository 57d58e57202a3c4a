#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <utility>
#include <vector>

#include "trae/layers.hpp"
#include "trae/tensor.hpp"

namespace trae {

/// Grayscale frames [H,W] in [0,1] with their original frame indices.
struct FrameSequence {
    std::vector<Tensor> frames;
    std::vector<std::size_t> source_ids;
    std::optional<double> fps;

    std::size_t size() const noexcept { return frames.size(); }
    Extent2 extent() const;
    void validate() const;
};

/// A [T,H,W] stack; channel j holds frame start + j * temporal_stride of the
/// sequence it was cut from (positions, not source ids).
struct Cuboid {
    Tensor data;
    std::size_t start = 0;
    std::size_t temporal_stride = 1;
};

struct SamplingConfig {
    std::size_t frames = 10;  // T
    std::size_t sample_stride = 2;
    std::vector<std::size_t> strides{1, 2, 3};

    void validate() const;
};

// Binary PGM (P5, maxval 255).
Tensor read_pgm(const std::filesystem::path& path);
/// Values are clamped to [0,1], scaled by 255 and rounded.
void write_pgm(const std::filesystem::path& path, const Tensor& image);

/// Half-pixel-centred bilinear interpolation with edge clamping.
Tensor resize_bilinear(const Tensor& image, Extent2 target);

/// A directory of `%06d.pgm` files, or raw planar `frames.u8` + `frames.json`
/// ({"height","width","count"}) given either as the directory or the .u8 file.
FrameSequence load_frames(const std::filesystem::path& path, std::optional<Extent2> resize = std::nullopt);
void write_frames(const std::filesystem::path& dir, const FrameSequence& seq);

/// Number of cuboids of one temporal stride: floor((len - (T-1) d - 1) / sample_stride) + 1, or 0.
std::size_t cuboid_count(std::size_t length, std::size_t frames, std::size_t temporal_stride,
                         std::size_t sample_stride);

/// Stride-major, then ascending start.
std::vector<Cuboid> sample_cuboids(const FrameSequence& seq, const SamplingConfig& cfg);

/// The frame in channel floor(T/2), zeros elsewhere.
Cuboid make_prediction_cuboid(const Tensor& frame, std::size_t frames);

enum class IrregularBehavior { speed_x4, reverse, teleport };

IrregularBehavior parse_behavior(const std::string& s);
std::string to_string(IrregularBehavior b);

struct IrregularSegment {
    std::size_t start = 0;
    std::size_t end = 0;  // inclusive
    IrregularBehavior behavior = IrregularBehavior::speed_x4;
};

/// Regular movers are Gaussian blobs drifting right, one per horizontal band,
/// wrapping at the border, over a static textured background shared by every
/// seed. Each mover keeps a constant speed drawn from [0.75, 1.25] x `speed`.
/// Irregular segments alter the motion of mover 0.
struct SceneSpec {
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t length = 400;
    std::size_t movers = 1;
    double blob_sigma = 1.5;
    double blob_amplitude = 0.7;
    double speed = 1.0;
    std::vector<IrregularSegment> irregular;
};

struct SyntheticVideo {
    FrameSequence sequence;
    std::vector<int> labels;  // 1 on irregular frames
};

SyntheticVideo synth_video_generate(const SceneSpec& spec, std::uint64_t seed);

void write_labels_csv(const std::filesystem::path& path, const std::vector<int>& labels);
std::vector<int> read_labels_csv(const std::filesystem::path& path);

/// Maximal runs of label 1 as inclusive [start, end] intervals.
std::vector<std::pair<std::size_t, std::size_t>> label_intervals(const std::vector<int>& labels);

}  // namespace trae
