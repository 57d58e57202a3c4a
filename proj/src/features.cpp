#include "trae/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "trae/error.hpp"

namespace trae {

namespace {

std::size_t clamp_index(std::ptrdiff_t i, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(n) - 1));
}

std::size_t orientation_bin(double dx, double dy) {
    double a = std::atan2(dy, dx);
    if (a < 0) a += 2.0 * std::numbers::pi;
    const double sector = 2.0 * std::numbers::pi / kHogBins;
    return static_cast<std::size_t>(std::lround(a / sector)) % kHogBins;
}

void normalize_cell(double* h, std::size_t bins) {
    double sq = 0.0;
    for (std::size_t b = 0; b < bins; ++b) sq += h[b] * h[b];
    if (sq <= 0.0) return;
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t b = 0; b < bins; ++b) h[b] *= inv;
}

std::size_t cell_index(std::size_t tcell, std::size_t row, std::size_t col) {
    return (tcell * kSpatialCells + row / (kPatchSize / kSpatialCells)) * kSpatialCells +
           col / (kPatchSize / kSpatialCells);
}

Tensor crop(const Tensor& img, std::size_t y0, std::size_t x0) {
    Tensor out({kPatchSize, kPatchSize});
    for (std::size_t r = 0; r < kPatchSize; ++r)
        for (std::size_t c = 0; c < kPatchSize; ++c) out.at(r, c) = img.at(y0 + r, x0 + c);
    return out;
}

}  // namespace

FlowField dense_flow(const Tensor& f1, const Tensor& f2, const FlowOptions& opts) {
    require_same_shape(f1, f2, "dense_flow");
    if (f1.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "dense_flow expects [H,W] frames");
    const std::size_t H = f1.dim(0), W = f1.dim(1);
    auto at = [&](const Tensor& t, std::ptrdiff_t r, std::ptrdiff_t c) {
        return t.at(clamp_index(r, H), clamp_index(c, W));
    };

    Tensor ex({H, W}), ey({H, W}), et({H, W});
    for (std::size_t r = 0; r < H; ++r) {
        for (std::size_t c = 0; c < W; ++c) {
            const auto i = static_cast<std::ptrdiff_t>(r), j = static_cast<std::ptrdiff_t>(c);
            double gx = 0, gy = 0, gt = 0;
            for (const Tensor* f : {&f1, &f2}) {
                gx += at(*f, i, j + 1) - at(*f, i, j) + at(*f, i + 1, j + 1) - at(*f, i + 1, j);
                gy += at(*f, i + 1, j) - at(*f, i, j) + at(*f, i + 1, j + 1) - at(*f, i, j + 1);
            }
            gt = at(f2, i, j) - at(f1, i, j) + at(f2, i + 1, j) - at(f1, i + 1, j) + at(f2, i, j + 1) -
                 at(f1, i, j + 1) + at(f2, i + 1, j + 1) - at(f1, i + 1, j + 1);
            ex.at(r, c) = gx / 4.0;
            ey.at(r, c) = gy / 4.0;
            et.at(r, c) = gt / 4.0;
        }
    }

    FlowField flow{Tensor({H, W}), Tensor({H, W})};
    Tensor u_next({H, W}), v_next({H, W});
    const double a2 = opts.alpha * opts.alpha;
    auto local_mean = [&](const Tensor& t, std::ptrdiff_t i, std::ptrdiff_t j) {
        const double edge = at(t, i - 1, j) + at(t, i + 1, j) + at(t, i, j - 1) + at(t, i, j + 1);
        const double corner = at(t, i - 1, j - 1) + at(t, i - 1, j + 1) + at(t, i + 1, j - 1) + at(t, i + 1, j + 1);
        return edge / 6.0 + corner / 12.0;
    };
    for (std::size_t it = 0; it < opts.iterations; ++it) {
        for (std::size_t r = 0; r < H; ++r) {
            for (std::size_t c = 0; c < W; ++c) {
                const auto i = static_cast<std::ptrdiff_t>(r), j = static_cast<std::ptrdiff_t>(c);
                const double ub = local_mean(flow.u, i, j), vb = local_mean(flow.v, i, j);
                const double gx = ex.at(r, c), gy = ey.at(r, c);
                const double k = (gx * ub + gy * vb + et.at(r, c)) / (a2 + gx * gx + gy * gy);
                u_next.at(r, c) = ub - gx * k;
                v_next.at(r, c) = vb - gy * k;
            }
        }
        std::swap(flow.u, u_next);
        std::swap(flow.v, v_next);
    }
    return flow;
}

PatchDescriptor hog_hof_descriptor(const Tensor& block, std::span<const FlowField> flows) {
    if (block.rank() != 3 || block.dim(1) != kPatchSize || block.dim(2) != kPatchSize || block.dim(0) < kTemporalCells) {
        throw Error(ErrorKind::ShapeMismatch, "descriptor block must be [L>=3,32,32], got " + shape_str(block.shape()));
    }
    const std::size_t L = block.dim(0);
    if (flows.size() != L - 1) {
        throw Error(ErrorKind::ShapeMismatch,
                    "expected " + std::to_string(L - 1) + " flow fields, got " + std::to_string(flows.size()));
    }
    for (const FlowField& f : flows) {
        if (f.u.shape() != Shape{kPatchSize, kPatchSize} || f.v.shape() != Shape{kPatchSize, kPatchSize})
            throw Error(ErrorKind::ShapeMismatch, "flow fields must be 32x32");
    }

    PatchDescriptor d;
    double* hog = d.values.data();
    double* hof = d.values.data() + kHogDims;
    const std::size_t n = kPatchSize;
    auto px = [&](std::size_t t, std::ptrdiff_t r, std::ptrdiff_t c) {
        return block.at(t, clamp_index(r, n), clamp_index(c, n));
    };

    for (std::size_t t = 0; t < L; ++t) {
        const std::size_t tcell = std::min(kTemporalCells - 1, t * kTemporalCells / L);
        for (std::size_t r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < n; ++c) {
                const auto i = static_cast<std::ptrdiff_t>(r), j = static_cast<std::ptrdiff_t>(c);
                const double gx = (px(t, i, j + 1) - px(t, i, j - 1)) / 2.0;
                const double gy = (px(t, i + 1, j) - px(t, i - 1, j)) / 2.0;
                const double mag = std::hypot(gx, gy);
                if (mag == 0.0) continue;
                hog[cell_index(tcell, r, c) * kHogBins + orientation_bin(gx, gy)] += mag;
            }
        }
    }

    // Flow f covers [f, f+1] of the time axis [0, L-1] and is shared among the
    // temporal cells it overlaps (lengths scaled by 3 to stay integral).
    const std::size_t span = L - 1;
    for (std::size_t f = 0; f < flows.size(); ++f) {
        const std::size_t f0 = f * kTemporalCells, f1 = f0 + kTemporalCells;
        for (std::size_t tcell = 0; tcell < kTemporalCells; ++tcell) {
            const std::size_t lo = std::max(f0, tcell * span), hi = std::min(f1, (tcell + 1) * span);
            if (hi <= lo) continue;
            const double weight = static_cast<double>(hi - lo) / static_cast<double>(kTemporalCells);
            for (std::size_t r = 0; r < n; ++r) {
                for (std::size_t c = 0; c < n; ++c) {
                    const double u = flows[f].u.at(r, c), v = flows[f].v.at(r, c);
                    const double mag = std::hypot(u, v);
                    double* cell = hof + cell_index(tcell, r, c) * kHofBins;
                    if (mag < kZeroMotion)
                        cell[kHofBins - 1] += weight;
                    else
                        cell[orientation_bin(u, v)] += weight * mag;
                }
            }
        }
    }

    for (std::size_t k = 0; k < kCells; ++k) {
        normalize_cell(hog + k * kHogBins, kHogBins);
        normalize_cell(hof + k * kHofBins, kHofBins);
    }
    d.t_end = L - 1;
    return d;
}

std::vector<PatchDescriptor> extract_grid_descriptors(const FrameSequence& seq, const GridOptions& opts) {
    if (opts.length < kTemporalCells) throw Error(ErrorKind::InvalidInput, "descriptor length L must be >= 3");
    if (opts.grid_step == 0) throw Error(ErrorKind::InvalidInput, "grid step must be positive");
    std::vector<PatchDescriptor> out;
    const std::size_t L = opts.length;
    if (seq.size() < L) return out;
    seq.validate();
    const Extent2 ext = seq.extent();
    const std::size_t half = kPatchSize / 2;

    std::vector<std::size_t> rows, cols, starts;
    for (std::size_t y = half; y + half <= ext.height; y += opts.grid_step) rows.push_back(y);
    for (std::size_t x = half; x + half <= ext.width; x += opts.grid_step) cols.push_back(x);
    const std::size_t t_step = std::max<std::size_t>(1, L / 2);
    for (std::size_t t = 0; t + L <= seq.size(); t += t_step) starts.push_back(t);
    if (rows.empty() || cols.empty()) return out;

    const std::size_t last_frame = starts.back() + L - 1;
    std::vector<FlowField> flows;
    for (std::size_t t = 0; t < last_frame; ++t) flows.push_back(dense_flow(seq.frames[t], seq.frames[t + 1], opts.flow));

    Tensor block({L, kPatchSize, kPatchSize});
    std::vector<FlowField> patch_flows(L - 1);
    const std::size_t plane = kPatchSize * kPatchSize;
    for (std::size_t y : rows) {
        for (std::size_t x : cols) {
            for (std::size_t t0 : starts) {
                for (std::size_t j = 0; j < L; ++j) {
                    const Tensor p = crop(seq.frames[t0 + j], y - half, x - half);
                    std::copy(p.data().begin(), p.data().end(), block.raw() + j * plane);
                }
                for (std::size_t j = 0; j + 1 < L; ++j) {
                    patch_flows[j] = {crop(flows[t0 + j].u, y - half, x - half), crop(flows[t0 + j].v, y - half, x - half)};
                }
                PatchDescriptor d = hog_hof_descriptor(block, patch_flows);
                d.x = x;
                d.y = y;
                d.t_start = t0;
                d.t_end = t0 + L - 1;
                out.push_back(d);
            }
        }
    }
    return out;
}

void write_descriptors_csv(const std::filesystem::path& path, std::span<const PatchDescriptor> descriptors,
                           std::size_t length) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << "x,y,t_start";
    for (std::size_t i = 0; i < kDescriptorDims; ++i) out << ",d" << i;
    out << '\n';
    char buf[40];
    for (const PatchDescriptor& d : descriptors) {
        if (d.t_end + 1 != d.t_start + length)
            throw Error(ErrorKind::InvalidInput, "descriptor span does not match length " + std::to_string(length));
        out << d.x << ',' << d.y << ',' << d.t_start;
        for (double v : d.values) {
            std::snprintf(buf, sizeof buf, ",%.17g", v);
            out << buf;
        }
        out << '\n';
    }
}

std::vector<PatchDescriptor> read_descriptors_csv(const std::filesystem::path& path, std::size_t length) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    if (length == 0) throw Error(ErrorKind::InvalidInput, "descriptor length must be positive");
    std::string line;
    std::getline(in, line);
    if (line.rfind("x,y,t_start,d0", 0) != 0) throw Error(ErrorKind::FormatError, path.string() + ": bad header");
    std::vector<PatchDescriptor> out;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 3 + kDescriptorDims)
            throw Error(ErrorKind::FormatError, path.string() + ": row " + std::to_string(row) + " has " +
                                                    std::to_string(cells.size()) + " columns");
        PatchDescriptor d;
        try {
            d.x = std::stoul(cells[0]);
            d.y = std::stoul(cells[1]);
            d.t_start = std::stoul(cells[2]);
            for (std::size_t i = 0; i < kDescriptorDims; ++i) d.values[i] = std::stod(cells[3 + i]);
        } catch (const std::logic_error&) {
            throw Error(ErrorKind::FormatError, path.string() + ": unparsable row " + std::to_string(row));
        }
        d.t_end = d.t_start + length - 1;
        out.push_back(d);
    }
    return out;
}

}  // namespace trae
