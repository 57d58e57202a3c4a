#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "trae/tensor.hpp"

namespace trae {

using Rng = std::mt19937_64;

enum class InitScheme { xavier, sparse_gaussian };

struct InitSpec {
    InitScheme scheme = InitScheme::xavier;
    /// Incoming connections per neuron for the sparse scheme.
    std::size_t k = 15;

    bool operator==(const InitSpec&) const = default;
};

/// Uniform on [-sqrt(3/fan_in), sqrt(3/fan_in)], i.e. variance 1/fan_in.
Tensor xavier_init(const Shape& shape, std::size_t fan_in, Rng& rng);

/// Each row of the [rows, fan_in] view of `shape` receives exactly k unit-Gaussian
/// weights at distinct uniformly chosen columns; everything else is zero.
Tensor sparse_init(const Shape& shape, std::size_t k, Rng& rng);

}  // namespace trae
