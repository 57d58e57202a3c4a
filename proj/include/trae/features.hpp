#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "trae/data.hpp"
#include "trae/tensor.hpp"

namespace trae {

inline constexpr std::size_t kPatchSize = 32;
inline constexpr std::size_t kHogBins = 8;
inline constexpr std::size_t kHofBins = 9;  // 8 orientations + zero motion
inline constexpr std::size_t kSpatialCells = 2;
inline constexpr std::size_t kTemporalCells = 3;
inline constexpr std::size_t kCells = kSpatialCells * kSpatialCells * kTemporalCells;
inline constexpr std::size_t kHogDims = kCells * kHogBins;   // 96
inline constexpr std::size_t kHofDims = kCells * kHofBins;   // 108
inline constexpr std::size_t kDescriptorDims = kHogDims + kHofDims;
static_assert(kDescriptorDims == 204);

/// Flow magnitudes below this (pixels/frame) fall into the zero-motion HOF bin.
inline constexpr double kZeroMotion = 0.1;

struct FlowField {
    Tensor u;  // horizontal displacement, [H,W]
    Tensor v;  // vertical displacement, [H,W]
};

struct PatchDescriptor {
    std::array<double, kDescriptorDims> values{};
    std::size_t x = 0;  // patch centre
    std::size_t y = 0;
    std::size_t t_start = 0;
    std::size_t t_end = 0;  // inclusive
};

struct FlowOptions {
    std::size_t iterations = 100;
    double alpha = 0.05;  // smoothness weight, in intensity units of [0,1] frames
};

/// Horn-Schunck variational flow from f1 to f2, zero initialisation.
FlowField dense_flow(const Tensor& f1, const Tensor& f2, const FlowOptions& opts = {});

/// `block` is [L,32,32]; `flows` holds the L-1 fields between consecutive frames,
/// each cropped to the same 32x32 window. Cells: 2x2 spatial by 3 temporal; a flow
/// field counts towards every temporal cell its frame interval overlaps. Each
/// cell histogram is L2-normalised. Layout: all HOG cells, then all HOF cells,
/// cells ordered (temporal, row, column).
PatchDescriptor hog_hof_descriptor(const Tensor& block, std::span<const FlowField> flows);

struct GridOptions {
    std::size_t grid_step = 5;
    std::size_t length = 15;  // L
    FlowOptions flow;
};

/// 32x32xL cuboids on a dense grid, temporal starts every L/2 frames. Output
/// order: grid row, grid column, then temporal start.
std::vector<PatchDescriptor> extract_grid_descriptors(const FrameSequence& seq, const GridOptions& opts = {});

/// Columns x,y,t_start,d0..d203.
void write_descriptors_csv(const std::filesystem::path& path, std::span<const PatchDescriptor> descriptors,
                           std::size_t length);
/// `length` restores t_end = t_start + length - 1.
std::vector<PatchDescriptor> read_descriptors_csv(const std::filesystem::path& path, std::size_t length);

}  // namespace trae
