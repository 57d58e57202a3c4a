#include "trae/init.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace trae {

Tensor xavier_init(const Shape& shape, std::size_t fan_in, Rng& rng) {
    if (fan_in == 0) throw Error(ErrorKind::InvalidInit, "xavier_init: fan_in must be >= 1");
    const double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(shape);
    for (double& v : t.data()) v = dist(rng);
    return t;
}

Tensor sparse_init(const Shape& shape, std::size_t k, Rng& rng) {
    Tensor t(shape);
    const std::size_t rows = shape.at(0);
    const std::size_t fan_in = t.size() / rows;
    if (k == 0 || k > fan_in) {
        throw Error(ErrorKind::InvalidInit,
                    "sparse_init: k=" + std::to_string(k) + " outside [1, fan_in=" + std::to_string(fan_in) + "]");
    }
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<std::size_t> columns(fan_in);
    for (std::size_t r = 0; r < rows; ++r) {
        std::iota(columns.begin(), columns.end(), std::size_t{0});
        // Partial Fisher-Yates: the first k slots become a uniform k-subset.
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, fan_in - 1);
            std::swap(columns[i], columns[pick(rng)]);
            t[r * fan_in + columns[i]] = gauss(rng);
        }
    }
    return t;
}

}  // namespace trae
