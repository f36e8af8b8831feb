#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "dsfc/checkpoint.hpp"
#include "dsfc/config.hpp"
#include "dsfc/data.hpp"
#include "dsfc/gradcheck_suite.hpp"
#include "dsfc/metrics.hpp"
#include "dsfc/network.hpp"
#include "dsfc/trainer.hpp"

namespace py = pybind11;
using namespace dsfc;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// Accepts (H,W), (H,W,C), or (B,H,W,C); lower ranks embed with batch 1 and
// channel 1. `want_c` > 0 enforces the channel count.
Tensor from_numpy(const DoubleArray& a, int64_t want_c, const char* what) {
    const py::buffer_info info = a.request();
    Shape s;
    if (info.ndim == 2) {
        s = {1, info.shape[0], info.shape[1], 1};
    } else if (info.ndim == 3) {
        s = {1, info.shape[0], info.shape[1], info.shape[2]};
    } else if (info.ndim == 4) {
        s = {info.shape[0], info.shape[1], info.shape[2], info.shape[3]};
    } else {
        throw value_error(format_msg(what, ": want 2, 3, or 4 axes, got ", info.ndim));
    }
    if (want_c > 0 && s.c != want_c)
        throw value_error(format_msg(what, ": want ", want_c, " channels, got ", s.c));
    Tensor t(s);
    std::memcpy(t.data(), info.ptr, static_cast<size_t>(t.numel()) * sizeof(double));
    return t;
}

// (B,H,W,C) -> numpy. Squeezes the channel axis when it is 1 and the batch
// axis when `batched` is false, mirroring the rank the caller passed in.
py::array to_numpy(const Tensor& t, bool batched) {
    const Shape s = t.shape();
    std::vector<py::ssize_t> dims;
    if (batched) dims.push_back(s.b);
    dims.push_back(s.h);
    dims.push_back(s.w);
    if (s.c != 1) dims.push_back(s.c);
    py::array_t<double> out(dims);
    std::memcpy(out.request().ptr, t.data(), static_cast<size_t>(t.numel()) * sizeof(double));
    return out;
}

py::dict report_dict(const MetricsReport& r) {
    py::dict d;
    d["precision"] = r.metrics.precision;
    d["recall"] = r.metrics.recall;
    d["f1"] = r.metrics.f1;
    d["iou"] = r.metrics.iou;
    d["threshold"] = r.threshold;
    d["tp"] = r.counts.tp;
    d["fp"] = r.counts.fp;
    d["fn"] = r.counts.fn;
    d["tn"] = r.counts.tn;
    return d;
}

std::vector<Sample> samples_from_pairs(const std::vector<std::pair<DoubleArray, DoubleArray>>& pairs) {
    std::vector<Sample> out;
    out.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        Sample s;
        s.image = from_numpy(pairs[i].first, 3, "image");
        s.mask = from_numpy(pairs[i].second, 1, "mask");
        s.meta.source = format_msg("pair-", i);
        s.validate();
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_dsfc, m) {
    m.doc() = "Dual-branch spatial-frequency road segmentation";
    m.attr("__version__") = "0.1.0";

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("seed", &ModelConfig::seed)
        .def_readwrite("pool_stride", &ModelConfig::pool_stride)
        .def_readwrite("cffm_reduction", &ModelConfig::cffm_reduction)
        .def("to_json", &ModelConfig::to_json)
        .def_static("from_json", &ModelConfig::from_json)
        .def("validate", &ModelConfig::validate);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("flip_prob", &TrainConfig::flip_prob)
        .def_readwrite("eval_interval", &TrainConfig::eval_interval)
        .def_readwrite("threshold", &TrainConfig::threshold)
        .def_readwrite("seed", &TrainConfig::seed)
        .def("to_json", &TrainConfig::to_json)
        .def_static("from_json", &TrainConfig::from_json)
        .def("validate", &TrainConfig::validate);

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("canvas", &SynthSpec::canvas)
        .def_readwrite("roads_min", &SynthSpec::roads_min)
        .def_readwrite("roads_max", &SynthSpec::roads_max)
        .def_readwrite("width_min", &SynthSpec::width_min)
        .def_readwrite("width_max", &SynthSpec::width_max)
        .def_readwrite("occlusion_count", &SynthSpec::occlusion_count)
        .def_readwrite("noise_scale", &SynthSpec::noise_scale)
        .def_readwrite("fg_cap", &SynthSpec::fg_cap)
        .def_readwrite("seed", &SynthSpec::seed)
        .def("to_json", &SynthSpec::to_json)
        .def_static("from_json", &SynthSpec::from_json)
        .def("validate", &SynthSpec::validate);

    py::class_<DSFCNet>(m, "DSFCNet")
        .def(py::init<const ModelConfig&>(), py::arg("config") = ModelConfig{})
        .def(py::init([](const std::string& json) {
                 return DSFCNet(ModelConfig::from_json(json));
             }),
             py::arg("config_json"))
        .def_property_readonly("config", &DSFCNet::config)
        .def("count_params", &DSFCNet::count_params)
        .def(
            "forward",
            [](const DSFCNet& net, const DoubleArray& image) {
                NoGradGuard ng;
                const bool batched = image.request().ndim == 4;
                const Tensor img = from_numpy(image, 3, "image");
                return to_numpy(net.forward(Var::leaf(img)).probabilities(), batched);
            },
            py::arg("image"),
            "Sigmoid road probabilities for an (H,W,3) or (B,H,W,3) image in [0,1].")
        .def(
            "logits",
            [](const DSFCNet& net, const DoubleArray& image) {
                NoGradGuard ng;
                const bool batched = image.request().ndim == 4;
                const Tensor img = from_numpy(image, 3, "image");
                return to_numpy(net.forward(Var::leaf(img)).logits.value(), batched);
            },
            py::arg("image"))
        .def(
            "flops",
            [](const DSFCNet& net, int64_t h, int64_t w, int64_t batch) {
                const FlopsSheet sheet = net.flops_sheet(h, w, batch);
                py::dict d;
                d["total"] = sheet.total();
                for (const char* kind :
                     {"conv", "tconv", "attention", "norm", "pool", "act", "elementwise"})
                    d[kind] = sheet.total_of(kind);
                return d;
            },
            py::arg("h"), py::arg("w"), py::arg("batch") = 1)
        .def_static("all_taps", &DSFCNet::all_taps)
        .def(
            "export_activations",
            [](const DSFCNet& net, const DoubleArray& image, const std::vector<std::string>& taps) {
                const Tensor img = from_numpy(image, 3, "image");
                py::dict d;
                for (auto& [name, act] :
                     net.export_activations(img, taps.empty() ? DSFCNet::all_taps() : taps))
                    d[py::str(name)] = to_numpy(act, false);
                return d;
            },
            py::arg("image"), py::arg("taps") = std::vector<std::string>{},
            "Normalized (H,W) heat map per tap; all taps when none are named.")
        .def(
            "save",
            [](const DSFCNet& net, const std::string& path) {
                save_checkpoint(path, net.config(), net.params());
            },
            py::arg("path"));

    m.def(
        "load",
        [](const std::string& path) {
            const LoadedCheckpoint ck = load_checkpoint(path);
            DSFCNet net(ck.config);
            apply_params(net.params(), ck.params);
            return net;
        },
        py::arg("path"), "Rebuild a network from a checkpoint file.");

    m.def(
        "generate_synthetic",
        [](const SynthSpec& spec, int n) {
            py::list out;
            for (const auto& s : generate_synthetic(spec, n))
                out.append(py::make_tuple(to_numpy(s.image, false), to_numpy(s.mask, false)));
            return out;
        },
        py::arg("spec") = SynthSpec{}, py::arg("n") = 1,
        "List of ((H,W,3) image, (H,W) binary mask) pairs.");

    m.def(
        "metrics",
        [](const DoubleArray& prob, const DoubleArray& target, double threshold) {
            const Tensor p = from_numpy(prob, 1, "prob");
            const Tensor t = from_numpy(target, 1, "target");
            const ConfusionCounts c = confusion_counts(p, t, threshold);
            MetricsReport rep;
            rep.metrics = metrics_from_counts(c.tp, c.fp, c.fn);
            rep.counts = c;
            rep.threshold = threshold;
            return report_dict(rep);
        },
        py::arg("prob"), py::arg("target"), py::arg("threshold") = 0.5);

    m.def(
        "bce_dice",
        [](const DoubleArray& logits, const DoubleArray& target, double eps) {
            NoGradGuard ng;
            const Tensor l = from_numpy(logits, 1, "logits");
            const Tensor t = from_numpy(target, 1, "target");
            return bce_dice_loss(Var::leaf(l), t, eps).value()[0];
        },
        py::arg("logits"), py::arg("target"), py::arg("eps") = 1.0);

    m.def(
        "gradcheck",
        [](const std::string& module) {
            py::list out;
            for (const auto& e : run_gradcheck(module)) {
                py::dict d;
                d["module"] = e.module;
                d["max_rel_err"] = e.max_rel_err;
                d["coords"] = e.coords;
                out.append(d);
            }
            return out;
        },
        py::arg("module") = "all");

    m.def(
        "train",
        [](DSFCNet& net, const std::vector<std::pair<DoubleArray, DoubleArray>>& train_pairs,
           const std::vector<std::pair<DoubleArray, DoubleArray>>& val_pairs,
           const TrainConfig& config, const std::string& out_dir, int64_t max_steps,
           const std::string& resume) {
            TrainOptions opts;
            opts.out_dir = out_dir;
            opts.max_steps = max_steps;
            opts.resume = resume;
            const TrainResult r = train(net, samples_from_pairs(train_pairs),
                                        samples_from_pairs(val_pairs), config, opts);
            py::dict d;
            d["steps"] = r.steps;
            d["epochs"] = r.epochs;
            d["final_loss"] = r.final_loss;
            d["best_iou"] = r.best_iou;
            d["losses"] = r.losses;
            d["latest_checkpoint"] = r.latest_checkpoint;
            d["best_checkpoint"] = r.best_checkpoint;
            return d;
        },
        py::arg("net"), py::arg("train_pairs"), py::arg("val_pairs") = py::list{},
        py::arg("config") = TrainConfig{}, py::arg("out_dir") = "", py::arg("max_steps") = -1,
        py::arg("resume") = "",
        "Optimize the network on (image, mask) pairs; returns the run summary.");

    m.def(
        "evaluate",
        [](const DSFCNet& net, const std::vector<std::pair<DoubleArray, DoubleArray>>& pairs,
           double threshold) {
            return report_dict(evaluate(net, samples_from_pairs(pairs), threshold));
        },
        py::arg("net"), py::arg("pairs"), py::arg("threshold") = 0.5);
}
