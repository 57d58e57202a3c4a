#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "trae/models.hpp"

namespace trae {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'T', 'R', 'A', 'E'};

json layer_to_json(const LayerSpec& layer) {
    if (const auto* l = std::get_if<ConvLayer>(&layer)) {
        const ConvSpec& s = l->spec;
        return {{"type", "conv"},     {"in", s.in_channels}, {"out", s.out_channels},
                {"kernel", {s.kernel_h, s.kernel_w}},      {"stride", s.stride},
                {"pad", s.pad}};
    }
    if (const auto* l = std::get_if<DeconvLayer>(&layer)) {
        const ConvSpec& s = l->spec;
        return {{"type", "deconv"}, {"in", s.in_channels},  {"out", s.out_channels},
                {"kernel", {s.kernel_h, s.kernel_w}},       {"stride", s.stride},
                {"target", {l->target.height, l->target.width}}};
    }
    if (const auto* l = std::get_if<PoolLayer>(&layer)) {
        return {{"type", "pool"}, {"window", l->window}, {"stride", l->stride}};
    }
    if (const auto* l = std::get_if<UnpoolLayer>(&layer)) {
        return {{"type", "unpool"}, {"pool", l->pool_index}};
    }
    if (const auto* l = std::get_if<DenseLayer>(&layer)) {
        return {{"type", "fc"}, {"in", l->in}, {"out", l->out}};
    }
    const auto& a = std::get<ActivationLayer>(layer);
    return {{"type", "activation"}, {"fn", a.kind == Activation::sigmoid ? "sigmoid" : "tanh"}};
}

LayerSpec layer_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "conv" || type == "deconv") {
        ConvSpec s;
        s.in_channels = j.at("in").get<std::size_t>();
        s.out_channels = j.at("out").get<std::size_t>();
        s.kernel_h = j.at("kernel").at(0).get<std::size_t>();
        s.kernel_w = j.at("kernel").at(1).get<std::size_t>();
        s.stride = j.at("stride").get<std::size_t>();
        if (type == "conv") {
            s.pad = j.at("pad").get<std::size_t>();
            return ConvLayer{s};
        }
        return DeconvLayer{s, {j.at("target").at(0).get<std::size_t>(), j.at("target").at(1).get<std::size_t>()}};
    }
    if (type == "pool") return PoolLayer{j.at("window").get<std::size_t>(), j.at("stride").get<std::size_t>()};
    if (type == "unpool") return UnpoolLayer{j.at("pool").get<std::size_t>()};
    if (type == "fc") return DenseLayer{j.at("in").get<std::size_t>(), j.at("out").get<std::size_t>()};
    if (type == "activation") {
        const std::string fn = j.at("fn").get<std::string>();
        if (fn == "sigmoid") return ActivationLayer{Activation::sigmoid};
        if (fn == "tanh") return ActivationLayer{Activation::tanh};
        throw Error(ErrorKind::FormatError, "unknown activation '" + fn + "'");
    }
    throw Error(ErrorKind::FormatError, "unknown layer type '" + type + "'");
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_floats(std::vector<std::uint8_t>& out, const Tensor& t) {
    for (double v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::span<const std::uint8_t> take(std::size_t n) {
        if (n > bytes_.size() - pos_) throw Error(ErrorKind::FormatError, "checkpoint truncated");
        auto s = bytes_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::uint64_t uint(std::size_t width) {
        auto s = take(width);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(s[i]) << (8 * i);
        return v;
    }
    void floats(Tensor& t) {
        for (double& v : t.data()) v = static_cast<double>(std::bit_cast<float>(static_cast<std::uint32_t>(uint(4))));
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::string config_to_json(const ArchConfig& config) {
    json layers = json::array();
    for (const LayerSpec& l : config.layers) layers.push_back(layer_to_json(l));
    const json j = {
        {"kind", to_string(config.kind)},
        {"preset", to_string(config.preset)},
        {"input_shape", config.input_shape},
        {"seed", config.seed},
        {"init",
         {{"scheme", config.init.scheme == InitScheme::xavier ? "xavier" : "sparse_gaussian"}, {"k", config.init.k}}},
        {"layers", layers},
    };
    return j.dump();
}

ArchConfig config_from_json(const std::string& text) {
    try {
        const json j = json::parse(text);
        ArchConfig cfg;
        cfg.kind = parse_model_kind(j.at("kind").get<std::string>());
        cfg.preset = parse_preset(j.at("preset").get<std::string>());
        cfg.input_shape = j.at("input_shape").get<Shape>();
        cfg.seed = j.at("seed").get<std::uint64_t>();
        const std::string scheme = j.at("init").at("scheme").get<std::string>();
        if (scheme != "xavier" && scheme != "sparse_gaussian")
            throw Error(ErrorKind::FormatError, "unknown init scheme '" + scheme + "'");
        cfg.init.scheme = scheme == "xavier" ? InitScheme::xavier : InitScheme::sparse_gaussian;
        cfg.init.k = j.at("init").at("k").get<std::size_t>();
        for (const json& l : j.at("layers")) cfg.layers.push_back(layer_from_json(l));
        return cfg;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::FormatError, std::string("checkpoint header: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::FormatError) throw;
        throw Error(ErrorKind::FormatError, e.what());
    }
}

std::vector<std::uint8_t> encode_checkpoint(const Autoencoder& model) {
    const std::string header = config_to_json(model.config());
    std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
    put_u32(out, kCheckpointVersion);
    put_u64(out, header.size());
    out.insert(out.end(), header.begin(), header.end());
    for (const LayerParams& p : model.params()) {
        if (p.weights.empty()) continue;
        put_floats(out, p.weights);
        put_floats(out, p.bias);
    }
    return out;
}

Autoencoder decode_checkpoint(std::span<const std::uint8_t> bytes) {
    Reader in(bytes);
    auto magic = in.take(4);
    if (std::memcmp(magic.data(), kMagic, 4) != 0) throw Error(ErrorKind::FormatError, "not a TRAE checkpoint");
    const auto version = in.uint(4);
    if (version != kCheckpointVersion) {
        throw Error(ErrorKind::FormatError, "unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = in.uint(8);
    auto header = in.take(static_cast<std::size_t>(header_len));
    ArchConfig cfg = config_from_json(std::string(header.begin(), header.end()));
    try {
        validate(cfg);
    } catch (const Error& e) {
        throw Error(ErrorKind::FormatError, std::string("checkpoint architecture: ") + e.what());
    }
    const auto shapes = param_shapes(cfg);
    std::vector<LayerParams> params(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (shapes[i].first.empty()) continue;
        params[i].weights = Tensor(shapes[i].first);
        params[i].bias = Tensor(shapes[i].second);
        in.floats(params[i].weights);
        in.floats(params[i].bias);
    }
    if (!in.done()) throw Error(ErrorKind::FormatError, "trailing bytes after checkpoint payload");
    return Autoencoder(std::move(cfg), std::move(params));
}

void save_checkpoint(const Autoencoder& model, const std::filesystem::path& path) {
    const auto bytes = encode_checkpoint(model);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
}

Autoencoder load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot read " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

}  // namespace trae
