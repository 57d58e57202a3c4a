#include "trae/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "trae/init.hpp"

namespace trae {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void io_error(const fs::path& p, const std::string& what) {
    throw Error(ErrorKind::IoError, p.string() + ": " + what);
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) io_error(p, "cannot open");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_frame_name(const std::string& name) {
    if (name.size() != 10 || name.substr(6) != ".pgm") return false;
    return std::all_of(name.begin(), name.begin() + 6, [](unsigned char c) { return std::isdigit(c); });
}

Tensor to_unit_image(const std::uint8_t* px, std::size_t h, std::size_t w) {
    Tensor img({h, w});
    for (std::size_t i = 0; i < h * w; ++i) img[i] = static_cast<double>(px[i]) / 255.0;
    return img;
}

FrameSequence load_raw(const fs::path& u8_path, std::optional<Extent2> resize) {
    fs::path sidecar = u8_path;
    sidecar.replace_extension(".json");
    std::size_t h = 0, w = 0, count = 0;
    try {
        std::ifstream in(sidecar);
        if (!in) io_error(sidecar, "cannot open sidecar");
        const auto j = nlohmann::json::parse(in);
        h = j.at("height").get<std::size_t>();
        w = j.at("width").get<std::size_t>();
        count = j.at("count").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::FormatError, sidecar.string() + ": " + e.what());
    }
    const auto bytes = read_bytes(u8_path);
    if (h == 0 || w == 0 || count == 0 || bytes.size() != h * w * count) {
        throw Error(ErrorKind::FormatError, u8_path.string() + ": " + std::to_string(bytes.size()) +
                                                " bytes do not match " + std::to_string(count) + " frames of " +
                                                std::to_string(h) + "x" + std::to_string(w));
    }
    FrameSequence seq;
    for (std::size_t f = 0; f < count; ++f) {
        Tensor img = to_unit_image(bytes.data() + f * h * w, h, w);
        seq.frames.push_back(resize ? resize_bilinear(img, *resize) : std::move(img));
        seq.source_ids.push_back(f);
    }
    return seq;
}

}  // namespace

Extent2 FrameSequence::extent() const {
    if (frames.empty()) return {};
    return {frames.front().dim(0), frames.front().dim(1)};
}

void FrameSequence::validate() const {
    if (source_ids.size() != frames.size()) throw Error(ErrorKind::FormatError, "frame/id count mismatch");
    for (const Tensor& f : frames) {
        if (f.rank() != 2 || f.shape() != frames.front().shape())
            throw Error(ErrorKind::FormatError, "frames differ in shape: " + shape_str(f.shape()));
    }
}

void SamplingConfig::validate() const {
    if (frames == 0 || sample_stride == 0) throw Error(ErrorKind::InvalidInput, "T and sample stride must be >= 1");
    if (strides.empty()) throw Error(ErrorKind::InvalidInput, "no temporal strides enabled");
    for (std::size_t d : strides)
        if (d == 0) throw Error(ErrorKind::InvalidInput, "temporal stride must be >= 1");
}

Tensor read_pgm(const fs::path& path) {
    const auto bytes = read_bytes(path);
    std::size_t pos = 0;
    auto skip_space = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto number = [&]() -> std::size_t {
        skip_space();
        if (pos >= bytes.size() || !std::isdigit(bytes[pos])) io_error(path, "malformed PGM header");
        std::size_t v = 0;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos++] - '0');
            if (v > (1u << 24)) io_error(path, "PGM header value too large");
        }
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') io_error(path, "not a binary PGM (P5)");
    pos = 2;
    const std::size_t w = number(), h = number(), maxval = number();
    if (w == 0 || h == 0) io_error(path, "zero image dimension");
    if (maxval != 255) io_error(path, "only maxval 255 is supported");
    if (pos >= bytes.size() || !std::isspace(bytes[pos])) io_error(path, "malformed PGM header");
    ++pos;
    if (bytes.size() - pos != w * h) io_error(path, "pixel payload size does not match header");
    return to_unit_image(bytes.data() + pos, h, w);
}

void write_pgm(const fs::path& path, const Tensor& image) {
    if (image.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "write_pgm expects [H,W]");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) io_error(path, "cannot write");
    out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
    std::vector<char> px(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) {
        const double v = std::clamp(image[i], 0.0, 1.0);
        px[i] = static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0)));
    }
    out.write(px.data(), static_cast<std::streamsize>(px.size()));
    if (!out) io_error(path, "write failed");
}

Tensor resize_bilinear(const Tensor& image, Extent2 target) {
    if (image.rank() != 2 || target.height == 0 || target.width == 0) {
        throw Error(ErrorKind::InvalidShape, "resize_bilinear: " + shape_str(image.shape()));
    }
    const std::size_t H = image.dim(0), W = image.dim(1);
    if (H == target.height && W == target.width) return image;
    auto axis = [](std::size_t dst, std::size_t src_len, std::size_t dst_len) {
        const double scale = static_cast<double>(src_len) / static_cast<double>(dst_len);
        double s = (static_cast<double>(dst) + 0.5) * scale - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(src_len - 1));
        const auto i0 = static_cast<std::size_t>(std::floor(s));
        const std::size_t i1 = std::min(i0 + 1, src_len - 1);
        return std::tuple{i0, i1, s - static_cast<double>(i0)};
    };
    Tensor out({target.height, target.width});
    for (std::size_t y = 0; y < target.height; ++y) {
        const auto [y0, y1, fy] = axis(y, H, target.height);
        for (std::size_t x = 0; x < target.width; ++x) {
            const auto [x0, x1, fx] = axis(x, W, target.width);
            const double top = image.at(y0, x0) * (1 - fx) + image.at(y0, x1) * fx;
            const double bottom = image.at(y1, x0) * (1 - fx) + image.at(y1, x1) * fx;
            out.at(y, x) = top * (1 - fy) + bottom * fy;
        }
    }
    return out;
}

FrameSequence load_frames(const fs::path& path, std::optional<Extent2> resize) {
    if (fs::is_regular_file(path) && path.extension() == ".u8") return load_raw(path, resize);
    if (!fs::is_directory(path)) io_error(path, "not a frame directory or .u8 file");
    if (fs::exists(path / "frames.u8")) return load_raw(path / "frames.u8", resize);

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(path)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_regular_file() && is_frame_name(name)) names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    FrameSequence seq;
    for (const std::string& name : names) {
        Tensor img = read_pgm(path / name);
        if (!resize && !seq.frames.empty() && img.shape() != seq.frames.front().shape()) {
            throw Error(ErrorKind::FormatError, (path / name).string() + ": size " + shape_str(img.shape()) +
                                                    " differs from the first frame");
        }
        seq.frames.push_back(resize ? resize_bilinear(img, *resize) : std::move(img));
        seq.source_ids.push_back(std::stoul(name.substr(0, 6)));
    }
    return seq;
}

void write_frames(const fs::path& dir, const FrameSequence& seq) {
    fs::create_directories(dir);
    char name[32];
    for (std::size_t i = 0; i < seq.size(); ++i) {
        std::snprintf(name, sizeof name, "%06zu.pgm", seq.source_ids[i]);
        write_pgm(dir / name, seq.frames[i]);
    }
}

std::size_t cuboid_count(std::size_t length, std::size_t frames, std::size_t temporal_stride,
                         std::size_t sample_stride) {
    const std::size_t span = (frames - 1) * temporal_stride + 1;
    if (length < span) return 0;
    return (length - span) / sample_stride + 1;
}

std::vector<Cuboid> sample_cuboids(const FrameSequence& seq, const SamplingConfig& cfg) {
    cfg.validate();
    seq.validate();
    if (seq.size() < cfg.frames) {
        throw Error(ErrorKind::NoData, "sequence of " + std::to_string(seq.size()) + " frames is shorter than T=" +
                                           std::to_string(cfg.frames));
    }
    const Extent2 e = seq.extent();
    const std::size_t plane = e.height * e.width;
    std::vector<Cuboid> out;
    for (std::size_t d : cfg.strides) {
        for (std::size_t start = 0; start + (cfg.frames - 1) * d < seq.size(); start += cfg.sample_stride) {
            Cuboid c{Tensor({cfg.frames, e.height, e.width}), start, d};
            for (std::size_t j = 0; j < cfg.frames; ++j) {
                const Tensor& f = seq.frames[start + j * d];
                std::copy(f.data().begin(), f.data().end(), c.data.raw() + j * plane);
            }
            out.push_back(std::move(c));
        }
    }
    return out;
}

Cuboid make_prediction_cuboid(const Tensor& frame, std::size_t frames) {
    if (frames == 0 || frame.rank() != 2) throw Error(ErrorKind::InvalidShape, "make_prediction_cuboid");
    Cuboid c{Tensor({frames, frame.dim(0), frame.dim(1)}), 0, 1};
    c.data.set_slice0(frames / 2, frame);
    return c;
}

IrregularBehavior parse_behavior(const std::string& s) {
    if (s == "speed_x4" || s == "speed") return IrregularBehavior::speed_x4;
    if (s == "reverse") return IrregularBehavior::reverse;
    if (s == "teleport") return IrregularBehavior::teleport;
    throw Error(ErrorKind::SpecError, "unknown irregular behaviour '" + s + "'");
}

std::string to_string(IrregularBehavior b) {
    switch (b) {
        case IrregularBehavior::speed_x4: return "speed_x4";
        case IrregularBehavior::reverse: return "reverse";
        case IrregularBehavior::teleport: return "teleport";
    }
    return "speed_x4";
}

SyntheticVideo synth_video_generate(const SceneSpec& spec, std::uint64_t seed) {
    if (spec.height == 0 || spec.width == 0 || spec.length == 0) throw Error(ErrorKind::SpecError, "empty canvas");
    if (spec.movers == 0) throw Error(ErrorKind::SpecError, "scene needs at least one mover");
    auto segments = spec.irregular;
    std::sort(segments.begin(), segments.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (segments[i].start > segments[i].end || segments[i].end >= spec.length)
            throw Error(ErrorKind::SpecError, "irregular segment outside the video");
        if (i > 0 && segments[i].start <= segments[i - 1].end)
            throw Error(ErrorKind::SpecError, "irregular segments overlap");
    }

    Rng rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);

    // Static background, identical for every seed.
    Tensor background({spec.height, spec.width});
    for (std::size_t y = 0; y < spec.height; ++y)
        for (std::size_t x = 0; x < spec.width; ++x)
            background.at(y, x) = 0.15 + 0.05 * std::sin(2.0 * std::numbers::pi * (x / W + 2.0 * y / H));

    struct Mover {
        double x, y, speed;
    };
    const double band = H / static_cast<double>(spec.movers);
    std::vector<Mover> movers;
    for (std::size_t k = 0; k < spec.movers; ++k) {
        const double x = W * unit(rng);
        const double y = band * (static_cast<double>(k) + 0.25 + 0.5 * unit(rng));
        movers.push_back({x, y, spec.speed * (0.75 + 0.5 * unit(rng))});
    }

    auto behavior_at = [&](std::size_t t) -> const IrregularSegment* {
        for (const auto& s : segments)
            if (t >= s.start && t <= s.end) return &s;
        return nullptr;
    };
    auto wrap = [](double v, double period) {
        v = std::fmod(v, period);
        return v < 0 ? v + period : v;
    };

    SyntheticVideo out;
    out.labels.assign(spec.length, 0);
    const double inv_two_var = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
    for (std::size_t t = 0; t < spec.length; ++t) {
        const IrregularSegment* seg = behavior_at(t);
        if (seg) out.labels[t] = 1;
        if (t > 0) {
            for (std::size_t k = 0; k < movers.size(); ++k) {
                double dx = movers[k].speed;
                if (k == 0 && seg && seg->behavior == IrregularBehavior::speed_x4) dx *= 4.0;
                if (k == 0 && seg && seg->behavior == IrregularBehavior::reverse) dx = -dx;
                movers[k].x = wrap(movers[k].x + dx, W);
            }
        }
        // A teleporting mover is drawn at a random spot each frame and resumes its
        // lane afterwards.
        std::vector<Mover> drawn = movers;
        if (seg && seg->behavior == IrregularBehavior::teleport) {
            drawn[0].x = W * unit(rng);
            drawn[0].y = H * unit(rng);
        }
        Tensor frame = background;
        for (std::size_t y = 0; y < spec.height; ++y) {
            for (std::size_t x = 0; x < spec.width; ++x) {
                double v = frame.at(y, x);
                for (const Mover& m : drawn) {
                    double ddx = static_cast<double>(x) - m.x;
                    double ddy = static_cast<double>(y) - m.y;
                    ddx -= W * std::round(ddx / W);
                    ddy -= H * std::round(ddy / H);
                    v += spec.blob_amplitude * std::exp(-(ddx * ddx + ddy * ddy) * inv_two_var);
                }
                frame.at(y, x) = std::min(v, 1.0);
            }
        }
        out.sequence.frames.push_back(std::move(frame));
        out.sequence.source_ids.push_back(t);
    }
    return out;
}

void write_labels_csv(const fs::path& path, const std::vector<int>& labels) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) io_error(path, "cannot write");
    out << "frame,label\n";
    for (std::size_t i = 0; i < labels.size(); ++i) out << i << ',' << labels[i] << '\n';
}

std::vector<int> read_labels_csv(const fs::path& path) {
    std::ifstream in(path);
    if (!in) io_error(path, "cannot open");
    std::string line;
    std::getline(in, line);
    if (line.rfind("frame,label", 0) != 0) throw Error(ErrorKind::FormatError, path.string() + ": bad header");
    std::vector<int> labels;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::size_t frame = 0;
        int label = 0;
        char comma = 0;
        std::istringstream ls(line);
        if (!(ls >> frame >> comma >> label) || comma != ',' || (label != 0 && label != 1))
            throw Error(ErrorKind::FormatError, path.string() + ": bad row '" + line + "'");
        if (frame >= labels.size()) labels.resize(frame + 1, 0);
        labels[frame] = label;
    }
    return labels;
}

std::vector<std::pair<std::size_t, std::size_t>> label_intervals(const std::vector<int>& labels) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != 1) continue;
        if (!out.empty() && out.back().second + 1 == i) {
            out.back().second = i;
        } else {
            out.emplace_back(i, i);
        }
    }
    return out;
}

}  // namespace trae
