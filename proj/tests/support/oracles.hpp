#pragma once

// Reference implementations used only by tests. They follow the textbook
// definitions with plain loops and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include "trae/tensor.hpp"

namespace oracle {

using trae::Tensor;

// Cross-correlation with zero padding. w is [Co,Ci,kh,kw].
inline Tensor conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const std::size_t Ho = (H + 2 * pad - kh) / stride + 1, Wo = (W + 2 * pad - kw) / stride + 1;
    Tensor y({Co, Ho, Wo});
    for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t i = 0; i < Ho; ++i)
            for (std::size_t j = 0; j < Wo; ++j) {
                double acc = b[o];
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v) {
                            const long r = static_cast<long>(i * stride + u) - static_cast<long>(pad);
                            const long q = static_cast<long>(j * stride + v) - static_cast<long>(pad);
                            if (r < 0 || q < 0 || r >= static_cast<long>(H) || q >= static_cast<long>(W)) continue;
                            acc += x.at(c, r, q) * w[((o * C + c) * kh + u) * kw + v];
                        }
                y.at(o, i, j) = acc;
            }
    return y;
}

// Transposed convolution by scattering, then a centre crop to (th, tw) with the
// smaller half removed on the leading side. w is [Ci,Co,kh,kw].
inline Tensor deconv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t th,
                     std::size_t tw) {
    const std::size_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const std::size_t Co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    const std::size_t FH = (H - 1) * stride + kh, FW = (W - 1) * stride + kw;
    Tensor full({Co, FH, FW});
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j)
                for (std::size_t o = 0; o < Co; ++o)
                    for (std::size_t u = 0; u < kh; ++u)
                        for (std::size_t v = 0; v < kw; ++v)
                            full.at(o, i * stride + u, j * stride + v) += x.at(c, i, j) * w[((c * Co + o) * kh + u) * kw + v];
    const std::size_t top = (FH - th) / 2, left = (FW - tw) / 2;
    Tensor y({Co, th, tw});
    for (std::size_t o = 0; o < Co; ++o)
        for (std::size_t i = 0; i < th; ++i)
            for (std::size_t j = 0; j < tw; ++j) y.at(o, i, j) = full.at(o, top + i, left + j) + b[o];
    return y;
}

// 2x2/2 max pooling; returns (pooled, flat argmax per cell), first maximum wins.
inline std::pair<Tensor, std::vector<std::size_t>> maxpool(const Tensor& x) {
    const std::size_t C = x.dim(0), H = x.dim(1) / 2, W = x.dim(2) / 2;
    Tensor y({C, H, W});
    std::vector<std::size_t> arg;
    for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
            for (std::size_t j = 0; j < W; ++j) {
                std::size_t best = (c * x.dim(1) + 2 * i) * x.dim(2) + 2 * j;
                for (std::size_t u = 0; u < 2; ++u)
                    for (std::size_t v = 0; v < 2; ++v) {
                        const std::size_t k = (c * x.dim(1) + 2 * i + u) * x.dim(2) + 2 * j + v;
                        if (x[k] > x[best]) best = k;
                    }
                y.at(c, i, j) = x[best];
                arg.push_back(best);
            }
    return {y, arg};
}

struct Minimum {
    std::size_t index;
    double persistence;
};

// Every sub-level-set minimum of the series under the (value, index) order.
// Its persistence is the lowest "pass" to any strictly lower sample, reached by
// walking left or right; the global minimum has none and gets +inf.
inline std::vector<Minimum> persistence(const std::vector<double>& s) {
    const std::size_t n = s.size();
    auto lower = [&](std::size_t a, std::size_t b) { return s[a] < s[b] || (s[a] == s[b] && a < b); };
    std::vector<Minimum> out;
    for (std::size_t m = 0; m < n; ++m) {
        if (m > 0 && lower(m - 1, m)) continue;
        if (m + 1 < n && lower(m + 1, m)) continue;
        double best = std::numeric_limits<double>::infinity();
        double peak = s[m];
        for (std::size_t j = m; j-- > 0;) {
            peak = std::max(peak, s[j]);
            if (lower(j, m)) {
                best = std::min(best, peak - s[m]);
                break;
            }
        }
        peak = s[m];
        for (std::size_t j = m + 1; j < n; ++j) {
            peak = std::max(peak, s[j]);
            if (lower(j, m)) {
                best = std::min(best, peak - s[m]);
                break;
            }
        }
        out.push_back({m, best});
    }
    return out;
}

// Probability that a random anomalous frame scores more anomalous (1 - s
// larger) than a random normal one, ties counted one half.
inline double pair_auc(const std::vector<double>& s, const std::vector<int>& labels) {
    double wins = 0.0, pairs = 0.0;
    for (std::size_t a = 0; a < s.size(); ++a) {
        if (labels[a] != 1) continue;
        for (std::size_t b = 0; b < s.size(); ++b) {
            if (labels[b] != 0) continue;
            pairs += 1.0;
            if (1.0 - s[a] > 1.0 - s[b]) wins += 1.0;
            else if (1.0 - s[a] == 1.0 - s[b]) wins += 0.5;
        }
    }
    return wins / pairs;
}

// Central differences of f at x, one coordinate at a time.
inline std::vector<double> numeric_gradient(std::vector<double> x, const std::function<double(const std::vector<double>&)>& f,
                                            double eps = 1e-5) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + eps;
        const double up = f(x);
        x[i] = keep - eps;
        const double down = f(x);
        x[i] = keep;
        g[i] = (up - down) / (2.0 * eps);
    }
    return g;
}

// Relative error with a small absolute floor so that two near-zero values agree.
inline double rel_error(double a, double b, double floor = 1e-6) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline Tensor random_tensor(const trae::Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(shape);
    for (double& v : t.data()) v = u(rng);
    return t;
}

}  // namespace oracle
