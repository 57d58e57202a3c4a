#include "trae/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

namespace trae {

namespace {

constexpr std::size_t kScoreBlock = 32;

// Runs fn(i) for i in [0, n) on up to `threads` workers. Each fn writes only its own slot.
template <typename F>
void parallel_for(std::size_t n, std::size_t threads, F fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                try {
                    for (std::size_t i = t; i < n; i += threads) fn(i);
                } catch (...) {
                    errors[t] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

void require_conv(const Autoencoder& model, const char* where) {
    if (model.config().kind != ModelKind::conv_ae) {
        throw Error(ErrorKind::WrongModel, std::string(where) + " needs a conv_ae model");
    }
}

}  // namespace

ErrorField pixel_error(const Autoencoder& model, const Cuboid& cuboid) {
    require_conv(model, "pixel_error");
    const Tensor recon = reconstruct(model, cuboid.data);
    ErrorField f;
    f.e = elementwise_zip(cuboid.data, recon, [](double a, double b) { return std::abs(a - b); });
    for (std::size_t j = 0; j < cuboid.data.dim(0); ++j) f.frame_ids.push_back(cuboid.start + j * cuboid.temporal_stride);
    return f;
}

std::vector<double> regularity_scores(std::span<const double> e) {
    std::vector<double> s(e.size(), 1.0);
    if (e.empty()) return s;
    const auto [lo, hi] = std::minmax_element(e.begin(), e.end());
    const double min_e = *lo, max_e = *hi;
    if (max_e == 0.0) return s;
    for (std::size_t t = 0; t < e.size(); ++t) s[t] = 1.0 - (e[t] - min_e) / max_e;
    return s;
}

RegularitySeries make_series(std::vector<std::size_t> frame_ids, std::vector<double> e) {
    if (frame_ids.size() != e.size()) throw Error(ErrorKind::InvalidInput, "frame id / error length mismatch");
    RegularitySeries r;
    r.s = regularity_scores(e);
    r.frame_ids = std::move(frame_ids);
    r.e = std::move(e);
    return r;
}

Tensor frame_error_field(const FrameSequence& seq, const Autoencoder& model, std::size_t threads) {
    require_conv(model, "frame_error_field");
    const Shape& in = model.config().input_shape;
    const std::size_t T = in[0];
    seq.validate();
    if (seq.size() < T) throw Error(ErrorKind::NoData, "sequence shorter than one cuboid");
    const Extent2 ext = seq.extent();
    if (ext.height != in[1] || ext.width != in[2]) {
        throw Error(ErrorKind::ShapeMismatch, "frames are " + std::to_string(ext.height) + "x" +
                                                  std::to_string(ext.width) + ", model expects " + shape_str(in));
    }
    const std::size_t n = seq.size();
    const std::size_t plane = ext.height * ext.width;
    const std::size_t cuboids = n - T + 1;
    Tensor sum({n, ext.height, ext.width});
    std::vector<std::size_t> cover(n, 0);

    std::vector<Tensor> block(kScoreBlock);
    for (std::size_t first = 0; first < cuboids; first += kScoreBlock) {
        const std::size_t count = std::min(kScoreBlock, cuboids - first);
        parallel_for(count, threads, [&](std::size_t k) {
            Cuboid c{Tensor(in), first + k, 1};
            for (std::size_t j = 0; j < T; ++j) {
                const Tensor& f = seq.frames[first + k + j];
                std::copy(f.data().begin(), f.data().end(), c.data.raw() + j * plane);
            }
            block[k] = pixel_error(model, c).e;
        });
        for (std::size_t k = 0; k < count; ++k) {
            for (std::size_t j = 0; j < T; ++j) {
                const std::size_t t = first + k + j;
                double* dst = sum.raw() + t * plane;
                const double* src = block[k].raw() + j * plane;
                for (std::size_t p = 0; p < plane; ++p) dst[p] += src[p];
                ++cover[t];
            }
        }
    }
    for (std::size_t t = 0; t < n; ++t) {
        const double inv = 1.0 / static_cast<double>(cover[t]);
        double* row = sum.raw() + t * plane;
        for (std::size_t p = 0; p < plane; ++p) row[p] *= inv;
    }
    return sum;
}

RegularitySeries regularity_series(const FrameSequence& seq, const Autoencoder& model, std::size_t threads) {
    const Tensor field = frame_error_field(seq, model, threads);
    const std::size_t n = field.dim(0);
    const std::size_t plane = field.size() / n;
    std::vector<double> e(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const double* row = field.raw() + t * plane;
        for (std::size_t p = 0; p < plane; ++p) e[t] += row[p];
    }
    return make_series(seq.source_ids, std::move(e));
}

Tensor regular_frame_synthesis(const FrameSequence& seq, const Tensor& error_field) {
    if (seq.size() == 0 || error_field.rank() != 3 || error_field.dim(0) != seq.size() ||
        error_field.dim(1) != seq.extent().height || error_field.dim(2) != seq.extent().width) {
        throw Error(ErrorKind::ShapeMismatch, "error field " + shape_str(error_field.shape()) +
                                                  " does not match the sequence");
    }
    const std::size_t n = seq.size(), plane = error_field.dim(1) * error_field.dim(2);
    Tensor out({error_field.dim(1), error_field.dim(2)});
    for (std::size_t p = 0; p < plane; ++p) {
        std::size_t best = 0;
        for (std::size_t t = 1; t < n; ++t)
            if (error_field[t * plane + p] < error_field[best * plane + p]) best = t;
        out[p] = seq.frames[best][p];
    }
    return out;
}

Tensor regular_frame_synthesis(const FrameSequence& seq, const Autoencoder& model, std::size_t threads) {
    return regular_frame_synthesis(seq, frame_error_field(seq, model, threads));
}

Tensor pixel_regularity_map(const Tensor& error_field) {
    if (error_field.rank() != 3) throw Error(ErrorKind::ShapeMismatch, "error field must be [N,H,W]");
    const std::size_t n = error_field.dim(0), plane = error_field.dim(1) * error_field.dim(2);
    Tensor acc({error_field.dim(1), error_field.dim(2)});
    for (std::size_t t = 0; t < n; ++t)
        for (std::size_t p = 0; p < plane; ++p) acc[p] += error_field[t * plane + p];
    const auto [lo, hi] = std::minmax_element(acc.data().begin(), acc.data().end());
    const double min_v = *lo, range = *hi - *lo;
    if (range <= 0.0) {
        acc.fill(0.0);
        return acc;
    }
    for (double& v : acc.data()) v = (v - min_v) / range;
    return acc;
}

Tensor pixel_regularity_map(const FrameSequence& seq, const Autoencoder& model, std::size_t threads) {
    return pixel_regularity_map(frame_error_field(seq, model, threads));
}

Tensor predict_past_future(const Tensor& frame, const Autoencoder& model) {
    require_conv(model, "predict_past_future");
    const Shape& in = model.config().input_shape;
    if (frame.rank() != 2 || frame.dim(0) != in[1] || frame.dim(1) != in[2]) {
        throw Error(ErrorKind::ShapeMismatch, "frame " + shape_str(frame.shape()) + " vs model " + shape_str(in));
    }
    return reconstruct(model, make_prediction_cuboid(frame, in[0]).data);
}

RegularitySeries feature_regularity_series(std::span<const PatchDescriptor> descriptors, const Autoencoder& model) {
    if (model.config().kind != ModelKind::fc_ae) {
        throw Error(ErrorKind::WrongModel, "feature_regularity_series needs an fc_ae model");
    }
    if (descriptors.empty()) throw Error(ErrorKind::NoData, "no descriptors to score");
    std::map<std::size_t, double> per_frame;
    Tensor p({kDescriptorDims});
    for (const PatchDescriptor& d : descriptors) {
        std::copy(d.values.begin(), d.values.end(), p.raw());
        const Tensor r = reconstruct(model, p);
        double sq = 0.0;
        for (std::size_t i = 0; i < kDescriptorDims; ++i) sq += (p[i] - r[i]) * (p[i] - r[i]);
        const double err = std::sqrt(sq);
        for (std::size_t t = d.t_start; t <= d.t_end; ++t) per_frame[t] += err;
    }
    std::vector<std::size_t> ids;
    std::vector<double> e;
    for (const auto& [t, v] : per_frame) {
        ids.push_back(t);
        e.push_back(v);
    }
    return make_series(std::move(ids), std::move(e));
}

void write_scores_csv(const std::filesystem::path& path, const RegularitySeries& series) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << "frame,e,s\n";
    char buf[96];
    for (std::size_t i = 0; i < series.e.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", series.frame_ids[i], series.e[i], series.s[i]);
        out << buf;
    }
}

RegularitySeries read_scores_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    std::string line;
    std::getline(in, line);
    if (line.rfind("frame,e,s", 0) != 0) throw Error(ErrorKind::FormatError, path.string() + ": bad header");
    RegularitySeries r;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t frame = 0;
        double e = 0, s = 0;
        if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &frame, &e, &s) != 3)
            throw Error(ErrorKind::FormatError, path.string() + ": bad row '" + line + "'");
        r.frame_ids.push_back(frame);
        r.e.push_back(e);
        r.s.push_back(s);
    }
    return r;
}

}  // namespace trae
