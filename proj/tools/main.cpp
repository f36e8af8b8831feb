#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dsfc/checkpoint.hpp"
#include "dsfc/common.hpp"
#include "dsfc/config.hpp"
#include "dsfc/data.hpp"
#include "dsfc/gradcheck_suite.hpp"
#include "dsfc/metrics.hpp"
#include "dsfc/network.hpp"
#include "dsfc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";
constexpr double kGradTol = 1e-4;

// --data/--val fall back to DSFC_DATA_ROOT so batch jobs can omit the flag.
std::string resolve_data_dir(const std::string& flag, const char* what) {
    if (!flag.empty()) return flag;
    const char* env = std::getenv("DSFC_DATA_ROOT");
    DSFC_CHECK(env != nullptr && *env != '\0', "no ", what,
               " given and DSFC_DATA_ROOT is unset");
    return env;
}

int64_t parse_int(const std::string& s, const char* what) {
    try {
        size_t pos = 0;
        int64_t v = std::stoll(s, &pos);
        DSFC_CHECK(pos == s.size(), what, ": trailing characters in '", s, "'");
        return v;
    } catch (const dsfc::value_error&) {
        throw;
    } catch (const std::exception&) {
        throw dsfc::value_error(dsfc::format_msg(what, ": not an integer: '", s, "'"));
    }
}

// "HxW" -> (h, w); both must be multiples of the network's total stride.
std::pair<int64_t, int64_t> parse_size(const std::string& s) {
    const auto x = s.find('x');
    DSFC_CHECK(x != std::string::npos && x > 0 && x + 1 < s.size(),
               "--input-size wants HxW (e.g. 128x128), got '", s, "'");
    const int64_t h = parse_int(s.substr(0, x), "--input-size height");
    const int64_t w = parse_int(s.substr(x + 1), "--input-size width");
    DSFC_CHECK(h >= 32 && w >= 32 && h % 32 == 0 && w % 32 == 0,
               "--input-size dimensions must be multiples of 32, got ", h, "x", w);
    return {h, w};
}

// Manifests deliberately omit the output directory and any timestamp so a
// rerun with the same inputs produces byte-identical artifacts.
void write_manifest(const std::string& out_dir, json j) {
    j["tool"] = "dsfc";
    j["version"] = kVersion;
    fs::create_directories(out_dir);
    const fs::path p = fs::path(out_dir) / "manifest.json";
    std::ofstream f(p, std::ios::binary);
    DSFC_CHECK(f.good(), "cannot write ", p.string());
    f << j.dump(2) << '\n';
    DSFC_REQUIRE(f.good(), "short write on ", p.string());
}

dsfc::DSFCNet net_from_checkpoint(const std::string& path, dsfc::LoadedCheckpoint* out = nullptr) {
    DSFC_CHECK(fs::exists(path), "checkpoint not found: ", path);
    dsfc::LoadedCheckpoint ck = dsfc::load_checkpoint(path);
    dsfc::DSFCNet net(ck.config);
    dsfc::apply_params(net.params(), ck.params);
    if (out) *out = std::move(ck);
    return net;
}

double foreground_ratio(const dsfc::Tensor& mask) {
    double s = 0.0;
    for (int64_t i = 0; i < mask.numel(); ++i) s += mask[i];
    return s / static_cast<double>(mask.numel());
}

// ---- synth-data ----

struct SynthArgs {
    std::string spec_path, out;
    int64_t count = 10;
    int64_t seed = 0;
    bool has_seed = false;
};

int cmd_synth_data(const SynthArgs& a) {
    dsfc::SynthSpec spec;
    if (!a.spec_path.empty()) {
        std::ifstream in(a.spec_path);
        DSFC_CHECK(in.good(), "cannot open spec file: ", a.spec_path);
        std::string text((std::istreambuf_iterator<char>(in)),
                         std::istreambuf_iterator<char>());
        spec = dsfc::SynthSpec::from_json(text);
    }
    if (a.has_seed) spec.seed = a.seed;
    spec.validate();
    DSFC_CHECK(a.count >= 1, "--count must be >= 1, got ", a.count);

    json m;
    m["command"] = "synth-data";
    m["synth"] = json::parse(spec.to_json());
    m["count"] = a.count;
    m["seed"] = spec.seed;
    m["artifacts"] = {"images/", "masks/"};
    write_manifest(a.out, std::move(m));

    const auto samples = dsfc::generate_synthetic(spec, static_cast<int>(a.count));
    dsfc::save_dataset(a.out, samples);

    double mean = 0.0, mx = 0.0;
    for (const auto& s : samples) {
        const double r = foreground_ratio(s.mask);
        mean += r;
        mx = std::max(mx, r);
    }
    mean /= static_cast<double>(samples.size());
    std::cout << "samples " << samples.size() << '\n';
    std::cout << "canvas " << spec.canvas << '\n';
    std::cout.precision(10);
    std::cout << "foreground_mean " << mean << '\n';
    std::cout << "foreground_max " << mx << '\n';
    return 0;
}

// ---- train ----

struct TrainArgs {
    std::string config, data, val, out, resume, preset = "none";
    double lr = 0.0;
    int64_t epochs = 0, batch = 0, seed = 0, max_steps = -1;
    bool has_lr = false, has_epochs = false, has_batch = false, has_seed = false;
};

int cmd_train(const TrainArgs& a) {
    dsfc::FileConfig fc;
    if (!a.config.empty()) fc = dsfc::FileConfig::from_file(a.config);
    dsfc::ModelConfig mcfg = fc.has_model ? fc.model : dsfc::ModelConfig{};
    dsfc::TrainConfig tcfg = fc.has_train ? fc.train : dsfc::TrainConfig{};
    if (a.has_lr) tcfg.lr = a.lr;
    if (a.has_epochs) tcfg.epochs = a.epochs;
    if (a.has_batch) tcfg.batch_size = a.batch;
    if (a.has_seed) { // one knob: parameter init and data order both follow it
        tcfg.seed = a.seed;
        mcfg.seed = a.seed;
    }
    mcfg.validate();
    tcfg.validate();
    const dsfc::TilePreset preset = dsfc::tile_preset_from_string(a.preset);

    const std::string data_dir = resolve_data_dir(a.data, "--data");
    const auto train_set = dsfc::load_tiles(data_dir, preset);
    std::vector<dsfc::Sample> val_set;
    if (!a.val.empty()) val_set = dsfc::load_tiles(a.val, preset);
    if (!a.resume.empty())
        DSFC_CHECK(fs::exists(a.resume), "resume checkpoint not found: ", a.resume);

    json m;
    m["command"] = "train";
    m["model"] = json::parse(mcfg.to_json());
    m["train"] = json::parse(tcfg.to_json());
    m["data"] = {{"train", data_dir},
                 {"val", a.val},
                 {"preset", a.preset},
                 {"train_samples", train_set.size()},
                 {"val_samples", val_set.size()}};
    m["seed"] = tcfg.seed;
    m["resume"] = a.resume;
    m["max_steps"] = a.max_steps;
    m["artifacts"] = {"train.log", "latest.ckpt", "best.ckpt"};
    write_manifest(a.out, std::move(m));

    dsfc::DSFCNet net(mcfg);
    dsfc::TrainOptions opts;
    opts.out_dir = a.out;
    opts.resume = a.resume;
    opts.max_steps = a.max_steps;
    const dsfc::TrainResult res = dsfc::train(net, train_set, val_set, tcfg, opts);

    std::cout << "steps " << res.steps << '\n';
    std::cout << "epochs " << res.epochs << '\n';
    std::cout.precision(10);
    std::cout << "final_loss " << res.final_loss << '\n';
    if (res.best_iou >= 0.0) std::cout << "best_iou " << res.best_iou << '\n';
    if (!res.latest_checkpoint.empty()) std::cout << "latest " << res.latest_checkpoint << '\n';
    if (!res.best_checkpoint.empty()) std::cout << "best " << res.best_checkpoint << '\n';
    return 0;
}

// ---- eval ----

struct EvalArgs {
    std::string checkpoint, data, preset = "none";
    double threshold = 0.5;
};

int cmd_eval(const EvalArgs& a) {
    DSFC_CHECK(a.threshold > 0.0 && a.threshold < 1.0, "--threshold must be in (0,1), got ",
               a.threshold);
    const dsfc::TilePreset preset = dsfc::tile_preset_from_string(a.preset);
    const dsfc::DSFCNet net = net_from_checkpoint(a.checkpoint);
    const auto ds = dsfc::load_tiles(resolve_data_dir(a.data, "--data"), preset);
    const dsfc::MetricsReport rep = dsfc::evaluate(net, ds, a.threshold);
    std::cout << "samples " << ds.size() << '\n' << rep.str();
    return 0;
}

// ---- predict ----

struct PredictArgs {
    std::string checkpoint, images, out;
    double threshold = 0.5;
};

int cmd_predict(const PredictArgs& a) {
    DSFC_CHECK(a.threshold > 0.0 && a.threshold < 1.0, "--threshold must be in (0,1), got ",
               a.threshold);
    const dsfc::DSFCNet net = net_from_checkpoint(a.checkpoint);

    DSFC_CHECK(fs::is_directory(a.images), "not a directory: ", a.images);
    const std::set<std::string> exts{".png", ".pgm", ".ppm"};
    std::map<std::string, fs::path> files; // stem -> path, sorted
    for (const auto& e : fs::directory_iterator(a.images)) {
        if (!e.is_regular_file()) continue;
        std::string ext = e.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (exts.count(ext)) files.emplace(e.path().stem().string(), e.path());
    }
    DSFC_CHECK(!files.empty(), "no images under ", a.images);

    // Read everything before the first write: a bad input must not leave a
    // half-populated output directory behind.
    std::vector<std::pair<std::string, dsfc::Tensor>> inputs;
    for (const auto& [stem, path] : files) {
        dsfc::Tensor img = dsfc::read_image(path.string());
        DSFC_CHECK(img.shape().h % 32 == 0 && img.shape().w % 32 == 0, path.string(), ": size ",
                   img.shape().h, "x", img.shape().w, " is not a multiple of 32");
        inputs.emplace_back(stem, std::move(img));
    }

    json m;
    m["command"] = "predict";
    m["checkpoint"] = a.checkpoint;
    m["images"] = a.images;
    m["threshold"] = a.threshold;
    json arts = json::array();
    for (const auto& [stem, img] : inputs) arts.push_back(stem + ".png");
    m["artifacts"] = std::move(arts);
    write_manifest(a.out, std::move(m));

    dsfc::NoGradGuard ng;
    std::cout.precision(10);
    for (const auto& [stem, img] : inputs) {
        const dsfc::Tensor prob = net.forward(dsfc::Var::leaf(img)).probabilities();
        dsfc::Tensor mask(prob.shape());
        for (int64_t i = 0; i < prob.numel(); ++i)
            mask[i] = prob[i] >= a.threshold ? 1.0 : 0.0;
        dsfc::write_mask((fs::path(a.out) / (stem + ".png")).string(), mask);
        std::cout << stem << ".png foreground " << foreground_ratio(mask) << '\n';
    }
    std::cout << "wrote " << inputs.size() << " masks\n";
    return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(const std::string& module) {
    const auto entries = dsfc::run_gradcheck(module);
    bool ok = true;
    std::cout.precision(3);
    std::cout << std::scientific;
    for (const auto& e : entries) {
        std::cout << "module " << e.module << " max_rel_err " << e.max_rel_err << " coords "
                  << e.coords << '\n';
        ok = ok && e.max_rel_err < kGradTol;
    }
    std::cout << (ok ? "gradcheck ok\n" : "gradcheck FAILED\n");
    return ok ? 0 : 2;
}

// ---- summarize ----

struct SummarizeArgs {
    std::string config, input_size = "128x128";
    int64_t batch = 1;
    bool per_layer = false;
};

int cmd_summarize(const SummarizeArgs& a) {
    dsfc::ModelConfig mcfg;
    if (!a.config.empty()) {
        const dsfc::FileConfig fc = dsfc::FileConfig::from_file(a.config);
        DSFC_CHECK(fc.has_model, "config file has no model section: ", a.config);
        mcfg = fc.model;
    }
    const auto [h, w] = parse_size(a.input_size);
    DSFC_CHECK(a.batch >= 1, "--batch must be >= 1, got ", a.batch);

    const dsfc::DSFCNet net(mcfg);
    const dsfc::FlopsSheet sheet = net.flops_sheet(h, w, a.batch);
    std::cout << "params " << net.count_params() << '\n';
    std::cout << "input " << h << "x" << w << " batch " << a.batch << '\n';
    std::cout << "flops_total " << sheet.total() << '\n';
    for (const char* kind : {"conv", "tconv", "attention", "norm", "pool", "act", "elementwise"})
        std::cout << "flops_" << kind << " " << sheet.total_of(kind) << '\n';
    if (a.per_layer)
        for (const auto& r : sheet.records)
            std::cout << r.path << " " << r.kind << " " << r.flops << '\n';
    return 0;
}

// ---- export-activations ----

struct ExportArgs {
    std::string checkpoint, image, taps = "all", out;
};

int cmd_export_activations(const ExportArgs& a) {
    const dsfc::DSFCNet net = net_from_checkpoint(a.checkpoint);
    const dsfc::Tensor img = dsfc::read_image(a.image);
    DSFC_CHECK(img.shape().h % 32 == 0 && img.shape().w % 32 == 0, a.image, ": size ",
               img.shape().h, "x", img.shape().w, " is not a multiple of 32");

    const std::vector<std::string> known = dsfc::DSFCNet::all_taps();
    std::vector<std::string> taps;
    if (a.taps == "all") {
        taps = known;
    } else {
        std::string item;
        std::istringstream is(a.taps);
        while (std::getline(is, item, ',')) {
            DSFC_CHECK(!item.empty(), "empty tap name in --taps '", a.taps, "'");
            DSFC_CHECK(std::find(known.begin(), known.end(), item) != known.end(),
                       "unknown tap '", item, "'");
            taps.push_back(item);
        }
        DSFC_CHECK(!taps.empty(), "--taps is empty");
    }

    json m;
    m["command"] = "export-activations";
    m["checkpoint"] = a.checkpoint;
    m["image"] = a.image;
    m["taps"] = taps;
    json arts = json::array();
    for (const auto& t : taps) arts.push_back(t + ".png");
    m["artifacts"] = std::move(arts);
    write_manifest(a.out, std::move(m));

    const auto maps = net.export_activations(img, taps);
    for (const auto& [name, act] : maps) {
        dsfc::write_image((fs::path(a.out) / (name + ".png")).string(), act);
        std::cout << "tap " << name << " -> " << name << ".png" << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"DSFC-Net: dual-branch spatial-frequency road segmentation"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    SynthArgs sy;
    auto* c_sy = app.add_subcommand("synth-data", "Generate a procedural road dataset");
    c_sy->add_option("--spec", sy.spec_path, "JSON file with a synth section (default spec if omitted)");
    c_sy->add_option("--count", sy.count, "Number of samples")->capture_default_str();
    c_sy->add_option("--out", sy.out, "Output dataset directory")->required();
    auto* sy_seed = c_sy->add_option("--seed", sy.seed, "Override the spec seed");

    TrainArgs tr;
    auto* c_tr = app.add_subcommand("train", "Train a model on a tile directory");
    c_tr->add_option("--config", tr.config, "JSON config with model/train sections");
    c_tr->add_option("--data", tr.data, "Training tiles root (default: DSFC_DATA_ROOT)");
    c_tr->add_option("--val", tr.val, "Validation tiles root");
    c_tr->add_option("--out", tr.out, "Run directory for log + checkpoints")->required();
    c_tr->add_option("--preset", tr.preset, "Tiling preset: none|resize768|quarter|ninepatch")
        ->capture_default_str();
    auto* tr_lr = c_tr->add_option("--lr", tr.lr, "Override train.lr");
    auto* tr_ep = c_tr->add_option("--epochs", tr.epochs, "Override train.epochs");
    auto* tr_bs = c_tr->add_option("--batch-size", tr.batch, "Override train.batch_size");
    auto* tr_sd = c_tr->add_option("--seed", tr.seed, "Override both model and train seeds");
    c_tr->add_option("--max-steps", tr.max_steps, "Optimizer-step budget (-1: epochs govern)")
        ->capture_default_str();
    c_tr->add_option("--resume", tr.resume, "Checkpoint to continue from");

    EvalArgs ev;
    auto* c_ev = app.add_subcommand("eval", "Evaluate a checkpoint on a tile directory");
    c_ev->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    c_ev->add_option("--data", ev.data, "Tiles root (default: DSFC_DATA_ROOT)");
    c_ev->add_option("--threshold", ev.threshold, "Probability threshold")->capture_default_str();
    c_ev->add_option("--preset", ev.preset, "Tiling preset")->capture_default_str();

    PredictArgs pr;
    auto* c_pr = app.add_subcommand("predict", "Write binary masks for a directory of images");
    c_pr->add_option("--checkpoint", pr.checkpoint, "Checkpoint file")->required();
    c_pr->add_option("--images", pr.images, "Directory of input images")->required();
    c_pr->add_option("--out", pr.out, "Output directory for masks")->required();
    c_pr->add_option("--threshold", pr.threshold, "Probability threshold")->capture_default_str();

    std::string gc_module = "all";
    auto* c_gc = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    c_gc->add_option("--module", gc_module, "Module name or 'all'")->capture_default_str();

    SummarizeArgs su;
    auto* c_su = app.add_subcommand("summarize", "Parameter count and FLOPs for a config");
    c_su->add_option("--config", su.config, "Model config JSON (default tiny config if omitted)");
    c_su->add_option("--input-size", su.input_size, "HxW input size")->capture_default_str();
    c_su->add_option("--batch", su.batch, "Batch size")->capture_default_str();
    c_su->add_flag("--per-layer", su.per_layer, "Also print one line per layer");

    ExportArgs ex;
    auto* c_ex = app.add_subcommand("export-activations", "Write activation heat maps per tap");
    c_ex->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
    c_ex->add_option("--image", ex.image, "Input image")->required();
    c_ex->add_option("--taps", ex.taps, "Comma-separated tap names or 'all'")
        ->capture_default_str();
    c_ex->add_option("--out", ex.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        sy.has_seed = sy_seed->count() > 0;
        tr.has_lr = tr_lr->count() > 0;
        tr.has_epochs = tr_ep->count() > 0;
        tr.has_batch = tr_bs->count() > 0;
        tr.has_seed = tr_sd->count() > 0;
        if (c_sy->parsed()) return cmd_synth_data(sy);
        if (c_tr->parsed()) return cmd_train(tr);
        if (c_ev->parsed()) return cmd_eval(ev);
        if (c_pr->parsed()) return cmd_predict(pr);
        if (c_gc->parsed()) return cmd_gradcheck(gc_module);
        if (c_su->parsed()) return cmd_summarize(su);
        if (c_ex->parsed()) return cmd_export_activations(ex);
        std::cerr << "error: no command\n";
        return 1;
    } catch (const dsfc::value_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
