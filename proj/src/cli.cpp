#include "trae/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "trae/anomaly.hpp"
#include "trae/data.hpp"
#include "trae/error.hpp"
#include "trae/features.hpp"
#include "trae/models.hpp"
#include "trae/optim.hpp"
#include "trae/regularity.hpp"

namespace trae::cli {

namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// Flat JSON object whose keys are long option names of the invoked subcommand.
class JsonConfig : public CLI::Config {
public:
    explicit JsonConfig(const CLI::App* root) : root_(root) {}

    std::string to_config(const CLI::App* app, bool, bool, std::string) const override {
        ojson j = ojson::object();
        for (const CLI::Option* opt : app->get_options()) {
            if (opt->count() == 0 || opt->get_single_name().empty()) continue;
            j[opt->get_single_name()] = opt->results();
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(input);
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConfigError(std::string("config file: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConfigError("config file must hold a JSON object");
        const auto subs = root_->get_subcommands();
        std::vector<CLI::ConfigItem> items;
        for (const auto& [key, value] : j.items()) {
            CLI::ConfigItem item;
            if (!subs.empty()) item.parents = {subs.front()->get_name()};
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else if (!value.is_null()) {
                item.inputs.push_back(scalar(value));
            } else {
                continue;
            }
            items.push_back(std::move(item));
        }
        return items;
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number() || v.is_null()) return v.dump();
        throw CLI::ConfigError("config values must be scalars or arrays of scalars");
    }

    const CLI::App* root_;
};

[[noreturn]] void usage_error(const std::string& what) { throw Error(ErrorKind::InvalidInput, what); }

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NoData:
        case ErrorKind::IoError:
        case ErrorKind::FormatError:
        case ErrorKind::ShapeMismatch:
        case ErrorKind::InvalidShape:
        case ErrorKind::CropUnderflow:
            return kExitData;
        case ErrorKind::WrongModel:
        case ErrorKind::ArchError:
        case ErrorKind::SwitchMismatch:
        case ErrorKind::StaleCache:
            return kExitModel;
        default:
            return kExitUsage;
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text << '\n';
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void prepare_out(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create " + dir.string() + ": " + ec.message());
}

void write_run_config(const fs::path& dir, const std::string& command, ojson params) {
    ojson j;
    j["command"] = command;
    j["params"] = std::move(params);
    write_text(dir / "run_config.json", j.dump(2));
}

std::string format_pgm_name(const char* pattern, std::size_t i) {
    char name[32];
    std::snprintf(name, sizeof name, pattern, i);
    return name;
}

IrregularSegment parse_segment(const std::string& text) {
    const auto first = text.find(':');
    if (first == std::string::npos) usage_error("--anomaly expects start:end[:behavior], got '" + text + "'");
    const auto second = text.find(':', first + 1);
    IrregularSegment seg;
    try {
        std::size_t used = 0;
        const std::string a = text.substr(0, first);
        const std::string b = text.substr(first + 1, second == std::string::npos ? std::string::npos : second - first - 1);
        seg.start = std::stoul(a, &used);
        if (used != a.size()) throw std::invalid_argument(a);
        seg.end = std::stoul(b, &used);
        if (used != b.size()) throw std::invalid_argument(b);
    } catch (const std::logic_error&) {
        usage_error("--anomaly expects start:end[:behavior], got '" + text + "'");
    }
    if (second != std::string::npos) seg.behavior = parse_behavior(text.substr(second + 1));
    return seg;
}

// Frames are given as a directory (or raw .u8); descriptors as a CSV file.
bool is_descriptor_csv(const fs::path& p) { return p.extension() == ".csv"; }

struct ModelExpectation {
    std::string model;
    std::string preset;
    std::size_t frames = 0;
};

void add_expectation(CLI::App* sub, ModelExpectation& e) {
    sub->add_option("--model", e.model, "Expected model kind of the checkpoint (conv|fc)")->check(CLI::IsMember({"conv", "fc"}));
    sub->add_option("--preset", e.preset, "Expected preset of the checkpoint (paper|tiny)")->check(CLI::IsMember({"paper", "tiny"}));
    sub->add_option("--frames", e.frames, "Expected cuboid depth T of a conv checkpoint");
}

void check_expectation(const ArchConfig& c, const ModelExpectation& e) {
    if (!e.model.empty() && parse_model_kind(e.model) != c.kind) {
        throw Error(ErrorKind::WrongModel, "checkpoint holds a " + to_string(c.kind) + " model, expected " + e.model);
    }
    if (!e.preset.empty() && parse_preset(e.preset) != c.preset) {
        throw Error(ErrorKind::WrongModel, "checkpoint preset is " + to_string(c.preset) + ", expected " + e.preset);
    }
    if (e.frames != 0 && (c.kind != ModelKind::conv_ae || c.input_shape[0] != e.frames)) {
        throw Error(ErrorKind::WrongModel, "checkpoint input " + shape_str(c.input_shape) + " does not have T=" +
                                               std::to_string(e.frames));
    }
}

Extent2 model_extent(const Autoencoder& model) {
    const Shape& in = model.config().input_shape;
    if (model.config().kind != ModelKind::conv_ae) throw Error(ErrorKind::WrongModel, "command needs a conv model");
    return {in[1], in[2]};
}

// ---- gen-synth ----

struct GenSynthArgs {
    std::string out;
    SceneSpec scene;
    std::vector<std::string> anomalies;
    std::uint64_t seed = 0;
};

void add_gen_synth(CLI::App& app, GenSynthArgs& a) {
    auto* sub = app.add_subcommand("gen-synth", "Generate a synthetic surveillance video with labels");
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--len", a.scene.length, "Number of frames");
    sub->add_option("--height", a.scene.height, "Frame height");
    sub->add_option("--width", a.scene.width, "Frame width");
    sub->add_option("--movers", a.scene.movers, "Number of regular movers");
    sub->add_option("--speed", a.scene.speed, "Nominal mover speed in pixels per frame");
    sub->add_option("--sigma", a.scene.blob_sigma, "Blob standard deviation in pixels");
    sub->add_option("--amplitude", a.scene.blob_amplitude, "Blob peak intensity");
    sub->add_option("--anomaly", a.anomalies, "Irregular segment start:end[:speed_x4|reverse|teleport]");
    sub->add_option("--seed", a.seed, "Random seed");
}

int cmd_gen_synth(GenSynthArgs& a, spdlog::logger& log) {
    for (const auto& s : a.anomalies) a.scene.irregular.push_back(parse_segment(s));
    const SyntheticVideo video = synth_video_generate(a.scene, a.seed);
    const fs::path out(a.out);
    prepare_out(out);
    write_frames(out, video.sequence);
    write_labels_csv(out / "labels.csv", video.labels);

    ojson p;
    p["out"] = a.out;
    p["len"] = a.scene.length;
    p["height"] = a.scene.height;
    p["width"] = a.scene.width;
    p["movers"] = a.scene.movers;
    p["speed"] = a.scene.speed;
    p["sigma"] = a.scene.blob_sigma;
    p["amplitude"] = a.scene.blob_amplitude;
    ojson segs = ojson::array();
    for (const auto& s : a.scene.irregular) segs.push_back({{"start", s.start}, {"end", s.end}, {"behavior", to_string(s.behavior)}});
    p["anomaly"] = segs;
    p["seed"] = a.seed;
    write_run_config(out, "gen-synth", p);
    log.info("wrote {} frames to {}", video.sequence.size(), out.string());
    return kExitOk;
}

// ---- features ----

struct FeaturesArgs {
    std::string data;
    std::string out;
    GridOptions grid;
};

void add_features(CLI::App& app, FeaturesArgs& a) {
    auto* sub = app.add_subcommand("features", "Extract dense HOG+HOF descriptors");
    sub->add_option("--data", a.data, "Frame directory")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--grid-step", a.grid.grid_step, "Spatial grid step in pixels");
    sub->add_option("--length", a.grid.length, "Cuboid length L in frames");
    sub->add_option("--flow-iters", a.grid.flow.iterations, "Optical flow iterations");
    sub->add_option("--alpha", a.grid.flow.alpha, "Optical flow smoothness weight");
}

int cmd_features(const FeaturesArgs& a, spdlog::logger& log) {
    const FrameSequence seq = load_frames(a.data);
    const auto descriptors = extract_grid_descriptors(seq, a.grid);
    if (descriptors.empty()) throw Error(ErrorKind::NoData, "sequence too short for one descriptor");
    const fs::path out(a.out);
    prepare_out(out);
    write_descriptors_csv(out / "descriptors.csv", descriptors, a.grid.length);

    ojson p;
    p["data"] = a.data;
    p["out"] = a.out;
    p["grid-step"] = a.grid.grid_step;
    p["length"] = a.grid.length;
    p["flow-iters"] = a.grid.flow.iterations;
    p["alpha"] = a.grid.flow.alpha;
    write_run_config(out, "features", p);
    log.info("wrote {} descriptors", descriptors.size());
    return kExitOk;
}

// ---- train ----

struct TrainArgs {
    std::string model = "conv";
    std::string preset = "tiny";
    std::vector<std::string> data;
    std::string out;
    std::size_t frames = 10;
    std::optional<std::size_t> batch;
    std::optional<double> lr;
    std::optional<double> weight_decay;
    std::size_t iters = 1000;
    std::size_t lr_patience = 1000;
    double lr_drop = 0.1;
    std::size_t sample_stride = 2;
    std::vector<std::size_t> strides{1, 2, 3};
    std::size_t length = 15;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
};

void add_train(CLI::App& app, TrainArgs& a) {
    auto* sub = app.add_subcommand("train", "Train an autoencoder");
    sub->add_option("--model", a.model, "conv (frames) or fc (descriptor CSV)")->check(CLI::IsMember({"conv", "fc"}));
    sub->add_option("--preset", a.preset, "paper or tiny")->check(CLI::IsMember({"paper", "tiny"}));
    sub->add_option("--data", a.data, "Frame directories (conv) or descriptor CSVs (fc)")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--frames", a.frames, "Cuboid depth T (conv)");
    sub->add_option("--batch", a.batch, "Mini-batch size");
    sub->add_option("--lr", a.lr, "Initial learning rate");
    sub->add_option("--weight-decay", a.weight_decay, "Weight decay gamma");
    sub->add_option("--iters", a.iters, "Training iterations");
    sub->add_option("--lr-patience", a.lr_patience, "Iterations without improvement before the rate drops");
    sub->add_option("--lr-drop", a.lr_drop, "Learning-rate drop factor");
    sub->add_option("--sample-stride", a.sample_stride, "Start offset between consecutive cuboids (conv)");
    sub->add_option("--strides", a.strides, "Temporal strides mixed into the pool (conv)")->delimiter(',');
    sub->add_option("--length", a.length, "Descriptor cuboid length L (fc)");
    sub->add_option("--seed", a.seed, "Random seed");
    sub->add_option("--threads", a.threads, "Worker threads");
}

int cmd_train(const TrainArgs& a, spdlog::logger& log) {
    const ModelKind kind = parse_model_kind(a.model);
    const Preset preset = parse_preset(a.preset);
    if (preset == Preset::custom) usage_error("--preset must be paper or tiny");
    for (const auto& d : a.data) {
        if (kind == ModelKind::fc_ae && !is_descriptor_csv(d)) usage_error("--model fc needs descriptor CSV input, got " + d);
        if (kind == ModelKind::conv_ae && is_descriptor_csv(d)) usage_error("--model conv needs frame input, got " + d);
    }

    ArchConfig arch = kind == ModelKind::conv_ae ? conv_ae_config(preset, a.frames) : fc_ae_config(preset);
    arch.seed = a.seed;
    TrainConfig cfg = kind == ModelKind::conv_ae ? TrainConfig::conv_defaults() : TrainConfig::fc_defaults();
    if (a.batch) cfg.batch_size = *a.batch;
    if (a.lr) cfg.learning_rate = *a.lr;
    if (a.weight_decay) cfg.weight_decay = *a.weight_decay;
    cfg.max_iters = a.iters;
    cfg.lr_patience = a.lr_patience;
    cfg.lr_drop_factor = a.lr_drop;
    cfg.seed = a.seed;
    cfg.threads = a.threads;
    cfg.validate();

    std::vector<Tensor> dataset;
    if (kind == ModelKind::conv_ae) {
        const Extent2 ext{arch.input_shape[1], arch.input_shape[2]};
        SamplingConfig sampling;
        sampling.frames = a.frames;
        sampling.sample_stride = a.sample_stride;
        sampling.strides = a.strides;
        for (const auto& d : a.data) {
            const FrameSequence seq = load_frames(d, ext);
            for (Cuboid& c : sample_cuboids(seq, sampling)) dataset.push_back(std::move(c.data));
        }
    } else {
        for (const auto& d : a.data) {
            for (const PatchDescriptor& p : read_descriptors_csv(d, a.length)) {
                Tensor t({kDescriptorDims});
                std::copy(p.values.begin(), p.values.end(), t.raw());
                dataset.push_back(std::move(t));
            }
        }
        if (dataset.empty()) throw Error(ErrorKind::NoData, "no descriptors in the training data");
    }
    log.info("training {} ({}) on {} samples", to_string(kind), to_string(preset), dataset.size());

    Autoencoder model = build_autoencoder(arch);
    const TrainResult result = train(model, dataset, cfg, [&](std::size_t iter, double loss) {
        if (iter % 100 == 0) log.debug("iter {} loss {:.6g}", iter, loss);
    });

    const fs::path out(a.out);
    prepare_out(out);
    save_checkpoint(model, out / "model.trae");
    write_loss_csv(out / "loss.csv", result.loss_trace);

    ojson p;
    p["model"] = to_string(kind);
    p["preset"] = to_string(preset);
    p["data"] = a.data;
    p["out"] = a.out;
    if (kind == ModelKind::conv_ae) {
        p["frames"] = a.frames;
        p["sample-stride"] = a.sample_stride;
        p["strides"] = a.strides;
    } else {
        p["length"] = a.length;
    }
    p["batch"] = cfg.batch_size;
    p["lr"] = cfg.learning_rate;
    p["weight-decay"] = cfg.weight_decay;
    p["iters"] = cfg.max_iters;
    p["lr-patience"] = cfg.lr_patience;
    p["lr-drop"] = cfg.lr_drop_factor;
    p["seed"] = cfg.seed;
    p["threads"] = cfg.threads;
    write_run_config(out, "train", p);
    log.info("final loss {:.6g}, {} rate drops", result.loss_trace.empty() ? 0.0 : result.loss_trace.back(),
             result.lr_drops);
    return kExitOk;
}

// ---- score ----

struct ScoreArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::size_t length = 15;
    std::size_t threads = 1;
    ModelExpectation expect;
};

void add_score(CLI::App& app, ScoreArgs& a) {
    auto* sub = app.add_subcommand("score", "Compute the regularity score of every frame");
    sub->add_option("--checkpoint", a.checkpoint, "Trained model")->required();
    sub->add_option("--data", a.data, "Frame directory (conv) or descriptor CSV (fc)")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--length", a.length, "Descriptor cuboid length L (fc)");
    sub->add_option("--threads", a.threads, "Worker threads");
    add_expectation(sub, a.expect);
}

int cmd_score(const ScoreArgs& a, spdlog::logger& log) {
    if (a.threads == 0) usage_error("--threads must be positive");
    const Autoencoder model = load_checkpoint(a.checkpoint);
    check_expectation(model.config(), a.expect);
    RegularitySeries series;
    if (model.config().kind == ModelKind::conv_ae) {
        if (is_descriptor_csv(a.data)) throw Error(ErrorKind::WrongModel, "conv checkpoint cannot score descriptors");
        series = regularity_series(load_frames(a.data, model_extent(model)), model, a.threads);
    } else {
        if (!is_descriptor_csv(a.data)) throw Error(ErrorKind::WrongModel, "fc checkpoint scores descriptor CSVs");
        series = feature_regularity_series(read_descriptors_csv(a.data, a.length), model);
    }
    const fs::path out(a.out);
    prepare_out(out);
    write_scores_csv(out / "scores.csv", series);

    ojson p;
    p["checkpoint"] = a.checkpoint;
    p["data"] = a.data;
    p["out"] = a.out;
    p["model"] = to_string(model.config().kind);
    p["preset"] = to_string(model.config().preset);
    if (model.config().kind == ModelKind::fc_ae) p["length"] = a.length;
    p["threads"] = a.threads;
    write_run_config(out, "score", p);
    log.info("scored {} frames", series.s.size());
    return kExitOk;
}

// ---- detect ----

struct DetectArgs {
    std::string scores;
    std::string out;
    std::optional<double> persistence;
    double relative = 0.2;
    std::size_t window = 50;
};

void add_detect(CLI::App& app, DetectArgs& a) {
    auto* sub = app.add_subcommand("detect", "Find abnormal events as persistent minima of the score");
    sub->add_option("--scores", a.scores, "scores.csv from the score command")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--persistence", a.persistence, "Absolute persistence threshold");
    sub->add_option("--relative-persistence", a.relative,
                    "Threshold as a fraction of the score range, used without --persistence");
    sub->add_option("--window", a.window, "Frames spanned by each event");
}

int cmd_detect(const DetectArgs& a, spdlog::logger& log) {
    const RegularitySeries series = read_scores_csv(a.scores);
    double threshold = 0.0;
    if (a.persistence) {
        threshold = *a.persistence;
    } else {
        if (a.relative < 0.0) usage_error("--relative-persistence must be non-negative");
        if (!series.s.empty()) {
            const auto [lo, hi] = std::minmax_element(series.s.begin(), series.s.end());
            threshold = a.relative * (*hi - *lo);
        }
    }
    if (threshold < 0.0) usage_error("--persistence must be non-negative");
    const auto minima = persistent_minima(series.s, threshold);
    std::vector<AnomalyEvent> events = build_events(minima, a.window, series.s.size());
    for (AnomalyEvent& e : events) {
        e.start = series.frame_ids[e.start];
        e.end = series.frame_ids[e.end];
        for (std::size_t& m : e.minima) m = series.frame_ids[m];
    }
    const fs::path out(a.out);
    prepare_out(out);
    write_text(out / "events.json", events_to_json(events));

    ojson p;
    p["scores"] = a.scores;
    p["out"] = a.out;
    p["persistence"] = threshold;
    p["window"] = a.window;
    write_run_config(out, "detect", p);
    log.info("{} minima, {} events", minima.size(), events.size());
    return kExitOk;
}

// ---- eval ----

struct EvalArgs {
    std::string events;
    std::string labels;
    std::string scores;
    std::string out;
};

void add_eval(CLI::App& app, EvalArgs& a) {
    auto* sub = app.add_subcommand("eval", "Compare detected events with ground truth");
    sub->add_option("--events", a.events, "events.json from the detect command")->required();
    sub->add_option("--labels", a.labels, "Per-frame labels CSV")->required();
    sub->add_option("--scores", a.scores, "scores.csv; adds frame-level AUC and EER");
    sub->add_option("--out", a.out, "Output directory")->required();
}

int cmd_eval(const EvalArgs& a, spdlog::logger& log) {
    const auto events = events_from_json(read_text(a.events));
    const std::vector<int> labels = read_labels_csv(a.labels);
    std::vector<Interval> detected, truth;
    for (const auto& e : events) detected.push_back({e.start, e.end});
    for (const auto& [s, e] : label_intervals(labels)) truth.push_back({s, e});
    EvalReport report = match_events(detected, truth);

    if (!a.scores.empty()) {
        const RegularitySeries series = read_scores_csv(a.scores);
        std::vector<int> frame_labels;
        for (std::size_t id : series.frame_ids) {
            if (id >= labels.size()) {
                throw Error(ErrorKind::FormatError, "frame " + std::to_string(id) + " has no label");
            }
            frame_labels.push_back(labels[id]);
        }
        try {
            const RocCurve roc = roc_auc_eer(series.s, frame_labels);
            report.auc = roc.auc;
            report.eer = roc.eer;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::UndefinedMetric) throw;
            log.warn("AUC/EER undefined: {}", e.what());
        }
    }
    const fs::path out(a.out);
    prepare_out(out);
    write_text(out / "report.json", report_to_json(report));

    ojson p;
    p["events"] = a.events;
    p["labels"] = a.labels;
    p["scores"] = a.scores.empty() ? ojson(nullptr) : ojson(a.scores);
    p["out"] = a.out;
    write_run_config(out, "eval", p);
    log.info("correct {}, false alarms {}, missed {}", report.correct_detections, report.false_alarms,
             report.missed);
    return kExitOk;
}

// ---- synth-regular ----

struct SynthRegularArgs {
    std::string checkpoint;
    std::string data;
    std::string out;
    std::size_t threads = 1;
    ModelExpectation expect;
};

void add_synth_regular(CLI::App& app, SynthRegularArgs& a) {
    auto* sub = app.add_subcommand("synth-regular", "Synthesise the most regular frame and the pixel map");
    sub->add_option("--checkpoint", a.checkpoint, "Trained conv model")->required();
    sub->add_option("--data", a.data, "Frame directory")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    sub->add_option("--threads", a.threads, "Worker threads");
    add_expectation(sub, a.expect);
}

int cmd_synth_regular(const SynthRegularArgs& a, spdlog::logger& log) {
    if (a.threads == 0) usage_error("--threads must be positive");
    const Autoencoder model = load_checkpoint(a.checkpoint);
    check_expectation(model.config(), a.expect);
    const FrameSequence seq = load_frames(a.data, model_extent(model));
    const Tensor field = frame_error_field(seq, model, a.threads);
    const fs::path out(a.out);
    prepare_out(out);
    write_pgm(out / "regular.pgm", regular_frame_synthesis(seq, field));
    write_pgm(out / "map.pgm", pixel_regularity_map(field));

    ojson p;
    p["checkpoint"] = a.checkpoint;
    p["data"] = a.data;
    p["out"] = a.out;
    p["threads"] = a.threads;
    write_run_config(out, "synth-regular", p);
    log.info("synthesised from {} frames", seq.size());
    return kExitOk;
}

// ---- predict ----

struct PredictArgs {
    std::string checkpoint;
    std::string frame;
    std::string out;
    ModelExpectation expect;
};

void add_predict(CLI::App& app, PredictArgs& a) {
    auto* sub = app.add_subcommand("predict", "Reconstruct past and future frames from a single frame");
    sub->add_option("--checkpoint", a.checkpoint, "Trained conv model")->required();
    sub->add_option("--frame", a.frame, "Input PGM")->required();
    sub->add_option("--out", a.out, "Output directory")->required();
    add_expectation(sub, a.expect);
}

int cmd_predict(const PredictArgs& a, spdlog::logger& log) {
    const Autoencoder model = load_checkpoint(a.checkpoint);
    check_expectation(model.config(), a.expect);
    const Tensor frame = resize_bilinear(read_pgm(a.frame), model_extent(model));
    const Tensor recon = predict_past_future(frame, model);
    const std::size_t T = recon.dim(0), plane = recon.dim(1) * recon.dim(2);
    const fs::path out(a.out);
    prepare_out(out);
    for (std::size_t j = 0; j < T; ++j) {
        Tensor img({recon.dim(1), recon.dim(2)});
        std::copy(recon.raw() + j * plane, recon.raw() + (j + 1) * plane, img.raw());
        write_pgm(out / format_pgm_name("pred_%02zu.pgm", j), img);
    }

    ojson p;
    p["checkpoint"] = a.checkpoint;
    p["frame"] = a.frame;
    p["out"] = a.out;
    write_run_config(out, "predict", p);
    log.info("wrote {} predicted frames", T);
    return kExitOk;
}

std::shared_ptr<spdlog::logger> make_logger(std::ostream& err) {
    auto logger = std::make_shared<spdlog::logger>("trae", std::make_shared<spdlog::sinks::ostream_sink_st>(err));
    logger->set_pattern("[%l] %v");
    const char* env = std::getenv("TRT_LOG");
    const std::string level = env ? env : "";
    logger->set_level(level == "debug" ? spdlog::level::debug
                      : level == "info" ? spdlog::level::info
                                        : spdlog::level::warn);
    return logger;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Regularity learning for video anomaly detection", "trae"};
    app.require_subcommand(1);
    app.failure_message(CLI::FailureMessage::help);
    app.config_formatter(std::make_shared<JsonConfig>(&app));
    app.set_config("--config", "", "JSON file of option values; flags override it");
    app.allow_config_extras(CLI::config_extras_mode::error);

    GenSynthArgs gen;
    FeaturesArgs feat;
    TrainArgs tr;
    ScoreArgs sc;
    DetectArgs det;
    EvalArgs ev;
    SynthRegularArgs sr;
    PredictArgs pr;
    add_gen_synth(app, gen);
    add_features(app, feat);
    add_train(app, tr);
    add_score(app, sc);
    add_detect(app, det);
    add_eval(app, ev);
    add_synth_regular(app, sr);
    add_predict(app, pr);
    for (CLI::App* sub : app.get_subcommands({})) sub->fallthrough();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    auto log = make_logger(err);
    try {
        const std::string name = app.get_subcommands().front()->get_name();
        if (name == "gen-synth") return cmd_gen_synth(gen, *log);
        if (name == "features") return cmd_features(feat, *log);
        if (name == "train") return cmd_train(tr, *log);
        if (name == "score") return cmd_score(sc, *log);
        if (name == "detect") return cmd_detect(det, *log);
        if (name == "eval") return cmd_eval(ev, *log);
        if (name == "synth-regular") return cmd_synth_regular(sr, *log);
        if (name == "predict") return cmd_predict(pr, *log);
        return kExitUsage;
    } catch (const Error& e) {
        log->error("{}", e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        log->error("{}", e.what());
        return kExitData;
    }
}

}  // namespace trae::cli
