#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "trae/data.hpp"
#include "trae/features.hpp"
#include "trae/models.hpp"

namespace trae {

/// Per-pixel reconstruction error e(x,y,t) for the frames of one cuboid.
struct ErrorField {
    Tensor e;  // [T,H,W]
    std::vector<std::size_t> frame_ids;
};

struct RegularitySeries {
    std::vector<std::size_t> frame_ids;
    std::vector<double> e;
    std::vector<double> s;
};

ErrorField pixel_error(const Autoencoder& model, const Cuboid& cuboid);

/// s(t) = 1 - (e(t) - min e) / max e; identically 1 when max e = 0.
std::vector<double> regularity_scores(std::span<const double> e);
RegularitySeries make_series(std::vector<std::size_t> frame_ids, std::vector<double> e);

/// Per-frame pixel error [N,H,W]: every stride-1 cuboid (sample stride 1) is
/// scored and frames covered by several cuboids take the mean.
Tensor frame_error_field(const FrameSequence& seq, const Autoencoder& model, std::size_t threads = 1);

RegularitySeries regularity_series(const FrameSequence& seq, const Autoencoder& model, std::size_t threads = 1);

/// Pixel-wise mosaic of the frame with least error at each location (earliest on ties).
Tensor regular_frame_synthesis(const FrameSequence& seq, const Tensor& error_field);
Tensor regular_frame_synthesis(const FrameSequence& seq, const Autoencoder& model, std::size_t threads = 1);

/// Accumulated error per pixel, min-max normalised to [0,1] (all zero if flat).
Tensor pixel_regularity_map(const Tensor& error_field);
Tensor pixel_regularity_map(const FrameSequence& seq, const Autoencoder& model, std::size_t threads = 1);

/// Reconstruction of a cuboid holding only `frame` at its centre channel.
Tensor predict_past_future(const Tensor& frame, const Autoencoder& model);

/// Per-descriptor error ||p - f(p)||_2 summed over every frame its span covers;
/// the series holds only frames covered by at least one descriptor.
RegularitySeries feature_regularity_series(std::span<const PatchDescriptor> descriptors, const Autoencoder& model);

/// Columns frame,e,s.
void write_scores_csv(const std::filesystem::path& path, const RegularitySeries& series);
RegularitySeries read_scores_csv(const std::filesystem::path& path);

}  // namespace trae
