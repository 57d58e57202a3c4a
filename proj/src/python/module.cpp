#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "trae/anomaly.hpp"
#include "trae/cli.hpp"
#include "trae/features.hpp"
#include "trae/optim.hpp"
#include "trae/regularity.hpp"

namespace py = pybind11;
using namespace trae;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Array to_array(const std::vector<double>& v) {
    Array out(static_cast<py::ssize_t>(v.size()));
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

// [N,H,W] array <-> frame sequence with ids 0..N-1.
FrameSequence to_sequence(const Array& frames) {
    if (frames.ndim() != 3) throw Error(ErrorKind::ShapeMismatch, "frames must be a [N,H,W] array");
    const auto n = static_cast<std::size_t>(frames.shape(0));
    const auto h = static_cast<std::size_t>(frames.shape(1)), w = static_cast<std::size_t>(frames.shape(2));
    FrameSequence seq;
    for (std::size_t i = 0; i < n; ++i) {
        const double* p = frames.data() + i * h * w;
        seq.frames.emplace_back(Shape{h, w}, std::vector<double>(p, p + h * w));
        seq.source_ids.push_back(i);
    }
    return seq;
}

Array stack(const FrameSequence& seq) {
    if (seq.size() == 0) return Array(std::vector<py::ssize_t>{0, 0, 0});
    const Extent2 e = seq.extent();
    Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(seq.size()), static_cast<py::ssize_t>(e.height),
                                       static_cast<py::ssize_t>(e.width)});
    double* dst = out.mutable_data();
    for (const Tensor& f : seq.frames) dst = std::copy(f.data().begin(), f.data().end(), dst);
    return out;
}

std::vector<Tensor> to_dataset(const Array& data, const Shape& sample) {
    const std::size_t per = shape_size(sample);
    if (data.ndim() < 1 || static_cast<std::size_t>(data.size()) % per != 0 ||
        static_cast<std::size_t>(data.ndim()) != sample.size() + 1)
        throw Error(ErrorKind::ShapeMismatch, "training data must be [N] + " + shape_str(sample));
    std::vector<Tensor> out;
    for (py::ssize_t i = 0; i < data.shape(0); ++i) {
        const double* p = data.data() + static_cast<std::size_t>(i) * per;
        out.emplace_back(sample, std::vector<double>(p, p + per));
    }
    return out;
}

std::vector<Interval> to_intervals(const std::vector<std::pair<std::size_t, std::size_t>>& v) {
    std::vector<Interval> out;
    for (auto [a, b] : v) out.push_back({a, b});
    return out;
}

py::dict report_dict(const EvalReport& r) {
    py::dict d;
    d["correct_detections"] = r.correct_detections;
    d["false_alarms"] = r.false_alarms;
    d["missed"] = r.missed;
    d["auc"] = r.auc ? py::cast(*r.auc) : py::none();
    d["eer"] = r.eer ? py::cast(*r.eer) : py::none();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Learned temporal regularity: autoencoders for abnormal event detection in video";

    static py::exception<Error> error(m, "TraeError", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error.ptr())(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            PyErr_SetObject(error.ptr(), exc.ptr());
        }
    });

    // ---- data ----
    m.def(
        "synth_video",
        [](std::size_t length, std::size_t height, std::size_t width, std::size_t movers, double speed,
           const std::vector<std::tuple<std::size_t, std::size_t, std::string>>& irregular, std::uint64_t seed) {
            SceneSpec spec;
            spec.length = length;
            spec.height = height;
            spec.width = width;
            spec.movers = movers;
            spec.speed = speed;
            for (const auto& [s, e, b] : irregular) spec.irregular.push_back({s, e, parse_behavior(b)});
            const SyntheticVideo v = synth_video_generate(spec, seed);
            py::array_t<int> labels(static_cast<py::ssize_t>(v.labels.size()));
            std::copy(v.labels.begin(), v.labels.end(), labels.mutable_data());
            return py::make_tuple(stack(v.sequence), labels);
        },
        py::arg("length") = 400, py::arg("height") = 32, py::arg("width") = 32, py::arg("movers") = 1,
        py::arg("speed") = 1.0, py::arg("irregular") = std::vector<std::tuple<std::size_t, std::size_t, std::string>>{},
        py::arg("seed") = 0,
        "Synthetic video as ([N,H,W] frames, per-frame labels). Irregular segments are (start, end, behavior).");

    m.def(
        "load_frames",
        [](const std::filesystem::path& path, std::optional<std::pair<std::size_t, std::size_t>> resize) {
            std::optional<Extent2> ext;
            if (resize) ext = Extent2{resize->first, resize->second};
            return stack(load_frames(path, ext));
        },
        py::arg("path"), py::arg("resize") = std::nullopt);

    m.def(
        "sample_cuboids",
        [](const Array& frames, std::size_t T, std::size_t sample_stride, const std::vector<std::size_t>& strides) {
            SamplingConfig cfg;
            cfg.frames = T;
            cfg.sample_stride = sample_stride;
            cfg.strides = strides;
            const auto cuboids = sample_cuboids(to_sequence(frames), cfg);
            if (cuboids.empty()) return Array(std::vector<py::ssize_t>{0, static_cast<py::ssize_t>(T), 0, 0});
            const Shape& s = cuboids[0].data.shape();
            Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(cuboids.size()), static_cast<py::ssize_t>(s[0]),
                                               static_cast<py::ssize_t>(s[1]), static_cast<py::ssize_t>(s[2])});
            double* dst = out.mutable_data();
            for (const Cuboid& c : cuboids) dst = std::copy(c.data.data().begin(), c.data.data().end(), dst);
            return out;
        },
        py::arg("frames"), py::arg("T") = 10, py::arg("sample_stride") = 2,
        py::arg("strides") = std::vector<std::size_t>{1, 2, 3});

    // ---- models ----
    py::class_<Autoencoder>(m, "Model")
        .def_static(
            "conv",
            [](const std::string& preset, std::size_t frames, std::uint64_t seed) {
                ArchConfig c = conv_ae_config(parse_preset(preset), frames);
                c.seed = seed;
                return build_autoencoder(c);
            },
            py::arg("preset") = "tiny", py::arg("frames") = 10, py::arg("seed") = 0)
        .def_static(
            "fc",
            [](const std::string& preset, std::uint64_t seed) {
                ArchConfig c = fc_ae_config(parse_preset(preset));
                c.seed = seed;
                return build_autoencoder(c);
            },
            py::arg("preset") = "tiny", py::arg("seed") = 0)
        .def_static("load", [](const std::filesystem::path& p) { return load_checkpoint(p); }, py::arg("path"))
        .def("save", [](const Autoencoder& a, const std::filesystem::path& p) { save_checkpoint(a, p); }, py::arg("path"))
        .def_property_readonly("kind", [](const Autoencoder& a) { return to_string(a.config().kind); })
        .def_property_readonly("preset", [](const Autoencoder& a) { return to_string(a.config().preset); })
        .def_property_readonly("input_shape", [](const Autoencoder& a) { return a.config().input_shape; })
        .def_property_readonly("parameter_count", &Autoencoder::parameter_count)
        .def("reconstruct", [](const Autoencoder& a, const Array& x) { return to_array(reconstruct(a, to_tensor(x))); },
             py::arg("x"))
        .def(
            "train",
            [](Autoencoder& a, const Array& data, std::size_t iters, std::optional<std::size_t> batch,
               std::optional<double> lr, std::optional<double> weight_decay, std::uint64_t seed, std::size_t threads) {
                TrainConfig cfg =
                    a.config().kind == ModelKind::conv_ae ? TrainConfig::conv_defaults() : TrainConfig::fc_defaults();
                cfg.max_iters = iters;
                if (batch) cfg.batch_size = *batch;
                if (lr) cfg.learning_rate = *lr;
                if (weight_decay) cfg.weight_decay = *weight_decay;
                cfg.seed = seed;
                cfg.threads = threads;
                const std::vector<Tensor> ds = to_dataset(data, a.config().input_shape);
                TrainResult r;
                {
                    py::gil_scoped_release release;
                    r = train(a, ds, cfg);
                }
                return to_array(r.loss_trace);
            },
            py::arg("data"), py::arg("iters") = 1000, py::arg("batch") = std::nullopt, py::arg("lr") = std::nullopt,
            py::arg("weight_decay") = std::nullopt, py::arg("seed") = 0, py::arg("threads") = 1,
            "Trains in place on [N] + input_shape samples; returns the per-iteration loss.");

    // ---- regularity ----
    m.def("regularity_scores", [](const std::vector<double>& e) { return to_array(regularity_scores(e)); },
          py::arg("e"));
    m.def(
        "regularity_series",
        [](const Array& frames, const Autoencoder& model, std::size_t threads) {
            const RegularitySeries r = regularity_series(to_sequence(frames), model, threads);
            return py::make_tuple(to_array(r.e), to_array(r.s));
        },
        py::arg("frames"), py::arg("model"), py::arg("threads") = 1, "Per-frame (e, s) of a [N,H,W] video.");
    m.def(
        "regular_frame",
        [](const Array& frames, const Autoencoder& model) {
            return to_array(regular_frame_synthesis(to_sequence(frames), model));
        },
        py::arg("frames"), py::arg("model"));
    m.def(
        "pixel_regularity_map",
        [](const Array& frames, const Autoencoder& model) {
            return to_array(pixel_regularity_map(to_sequence(frames), model));
        },
        py::arg("frames"), py::arg("model"));
    m.def(
        "predict_past_future",
        [](const Array& frame, const Autoencoder& model) { return to_array(predict_past_future(to_tensor(frame), model)); },
        py::arg("frame"), py::arg("model"));

    // ---- features ----
    m.def(
        "dense_flow",
        [](const Array& f1, const Array& f2, std::size_t iterations, double alpha) {
            const FlowField f = dense_flow(to_tensor(f1), to_tensor(f2), {iterations, alpha});
            return py::make_tuple(to_array(f.u), to_array(f.v));
        },
        py::arg("f1"), py::arg("f2"), py::arg("iterations") = 100, py::arg("alpha") = 0.05);
    m.def(
        "grid_descriptors",
        [](const Array& frames, std::size_t grid_step, std::size_t length) {
            GridOptions opts;
            opts.grid_step = grid_step;
            opts.length = length;
            const auto ds = extract_grid_descriptors(to_sequence(frames), opts);
            Array values(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ds.size()), static_cast<py::ssize_t>(kDescriptorDims)});
            py::array_t<std::size_t> where(std::vector<py::ssize_t>{static_cast<py::ssize_t>(ds.size()), 3});
            double* v = values.mutable_data();
            std::size_t* w = where.mutable_data();
            for (const auto& d : ds) {
                v = std::copy(d.values.begin(), d.values.end(), v);
                *w++ = d.x;
                *w++ = d.y;
                *w++ = d.t_start;
            }
            return py::make_tuple(values, where);
        },
        py::arg("frames"), py::arg("grid_step") = 5, py::arg("length") = 15,
        "Dense HOG+HOF descriptors: ([n,204] values, [n,3] rows of x, y, t_start).");

    // ---- anomaly ----
    m.def(
        "persistent_minima",
        [](const std::vector<double>& s, std::optional<double> threshold) {
            const double t = threshold ? *threshold : default_persistence_threshold(s);
            std::vector<std::tuple<std::size_t, double, double>> out;
            for (const auto& p : persistent_minima(s, t)) out.emplace_back(p.index, p.value, p.persistence);
            return out;
        },
        py::arg("s"), py::arg("threshold") = std::nullopt, "List of (index, value, persistence).");
    m.def(
        "build_events",
        [](const std::vector<std::size_t>& minima, std::size_t window, std::size_t length) {
            std::vector<PersistentMinimum> ms;
            for (std::size_t i : minima) ms.push_back({i, 0.0, 0.0});
            std::vector<std::pair<std::size_t, std::size_t>> out;
            for (const auto& e : build_events(ms, window, length)) out.emplace_back(e.start, e.end);
            return out;
        },
        py::arg("minima"), py::arg("window") = 50, py::arg("length"));
    m.def(
        "match_events",
        [](const std::vector<std::pair<std::size_t, std::size_t>>& detected,
           const std::vector<std::pair<std::size_t, std::size_t>>& ground_truth) {
            const auto d = to_intervals(detected), g = to_intervals(ground_truth);
            return report_dict(match_events(d, g));
        },
        py::arg("detected"), py::arg("ground_truth"));
    m.def(
        "roc_auc_eer",
        [](const std::vector<double>& s, const std::vector<int>& labels) {
            const RocCurve r = roc_auc_eer(s, labels);
            return py::make_tuple(r.auc, r.eer);
        },
        py::arg("s"), py::arg("labels"));

    // ---- command line ----
    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a trae command; returns (exit code, stdout, stderr).");
}
