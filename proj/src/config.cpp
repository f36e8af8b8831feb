#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dsfc/config.hpp"

namespace dsfc {

using nlohmann::json;

namespace {

// json.hpp throws its own exceptions; surface them as value_errors with the
// offending field so CLI validation messages stay precise.
template <typename T>
void pull(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw value_error(format_msg("config field '", key, "': ", e.what()));
    }
}

template <typename T, size_t N>
void pull_array(const json& j, const char* key, std::array<T, N>& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != N)
        throw value_error(format_msg("config field '", key, "' must be a list of ", N));
    for (size_t i = 0; i < N; ++i) {
        try {
            out[i] = a[i].get<T>();
        } catch (const json::exception& e) {
            throw value_error(format_msg("config field '", key, "[", i, "]': ", e.what()));
        }
    }
}

json parse(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        throw value_error(format_msg("config parse error: ", e.what()));
    }
}

} // namespace

void ModelConfig::validate() const {
    for (size_t i = 0; i < 4; ++i) {
        DSFC_CHECK(widths[i] >= 1, "model.widths[", i, "] must be >= 1");
        DSFC_CHECK(cnn_depths[i] >= 1, "model.cnn_depths[", i, "] must be >= 1");
        DSFC_CHECK(sft_depths[i] >= 1, "model.sft_depths[", i, "] must be >= 1");
        const int h = stage_heads(static_cast<int>(i));
        DSFC_CHECK(widths[i] % h == 0, "model.widths[", i, "]=", widths[i],
                   " not divisible by ", h, " heads");
    }
    DSFC_CHECK(pool_stride >= 2, "model.pool_stride must be >= 2");
    DSFC_CHECK(!sca_dilations.empty(), "model.sca_dilations must be non-empty");
    for (int d : sca_dilations) DSFC_CHECK(d >= 1, "model.sca_dilations entries must be >= 1");
    for (int k : mffn_kernels)
        DSFC_CHECK(k >= 1 && k % 2 == 1, "model.mffn_kernels entries must be odd and >= 1");
    DSFC_CHECK(mffn_hidden_ratio > 0.0, "model.mffn_hidden_ratio must be positive");
    DSFC_CHECK(cffm_reduction >= 1, "model.cffm_reduction must be >= 1");
    for (size_t i = 0; i < 3; ++i)
        DSFC_CHECK(decoder_widths[i] >= 1, "model.decoder_widths[", i, "] must be >= 1");
}

std::string ModelConfig::to_json() const {
    json j;
    j["widths"] = widths;
    j["cnn_depths"] = cnn_depths;
    j["sft_depths"] = sft_depths;
    j["heads"] = {stage_heads(0), stage_heads(1), stage_heads(2), stage_heads(3)};
    j["pool_stride"] = pool_stride;
    j["sca_dilations"] = sca_dilations;
    j["mffn_kernels"] = mffn_kernels;
    j["mffn_hidden_ratio"] = mffn_hidden_ratio;
    j["cffm_reduction"] = cffm_reduction;
    j["decoder_widths"] = decoder_widths;
    j["seed"] = seed;
    return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
    json j = parse(text);
    if (j.contains("model")) j = j.at("model");
    ModelConfig c;
    pull_array(j, "widths", c.widths);
    pull_array(j, "cnn_depths", c.cnn_depths);
    pull_array(j, "sft_depths", c.sft_depths);
    pull_array(j, "heads", c.heads);
    pull(j, "pool_stride", c.pool_stride);
    pull(j, "sca_dilations", c.sca_dilations);
    pull(j, "mffn_kernels", c.mffn_kernels);
    pull(j, "mffn_hidden_ratio", c.mffn_hidden_ratio);
    pull(j, "cffm_reduction", c.cffm_reduction);
    pull_array(j, "decoder_widths", c.decoder_widths);
    pull(j, "seed", c.seed);
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    DSFC_CHECK(lr >= 0.0, "train.lr must be >= 0"); // lr 0 allowed: no-op probe
    DSFC_CHECK(batch_size >= 1, "train.batch_size must be >= 1");
    DSFC_CHECK(epochs >= 1, "train.epochs must be >= 1");
    DSFC_CHECK(weight_decay >= 0.0, "train.weight_decay must be >= 0");
    DSFC_CHECK(beta1 >= 0.0 && beta1 < 1.0, "train.beta1 must be in [0,1)");
    DSFC_CHECK(beta2 >= 0.0 && beta2 < 1.0, "train.beta2 must be in [0,1)");
    DSFC_CHECK(eps > 0.0, "train.eps must be positive");
    DSFC_CHECK(dice_eps > 0.0, "train.dice_eps must be positive");
    DSFC_CHECK(threshold > 0.0 && threshold < 1.0, "train.threshold must be in (0,1)");
    DSFC_CHECK(flip_prob >= 0.0 && flip_prob <= 1.0, "train.flip_prob must be in [0,1]");
    DSFC_CHECK(eval_interval >= 1, "train.eval_interval must be >= 1");
}

std::string TrainConfig::to_json() const {
    json j;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["epochs"] = epochs;
    j["weight_decay"] = weight_decay;
    j["beta1"] = beta1;
    j["beta2"] = beta2;
    j["eps"] = eps;
    j["dice_eps"] = dice_eps;
    j["threshold"] = threshold;
    j["flip_prob"] = flip_prob;
    j["eval_interval"] = eval_interval;
    j["checkpoint_dir"] = checkpoint_dir;
    j["deterministic"] = deterministic;
    j["seed"] = seed;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j = parse(text);
    if (j.contains("train")) j = j.at("train");
    TrainConfig c;
    pull(j, "lr", c.lr);
    pull(j, "batch_size", c.batch_size);
    pull(j, "epochs", c.epochs);
    pull(j, "weight_decay", c.weight_decay);
    pull(j, "beta1", c.beta1);
    pull(j, "beta2", c.beta2);
    pull(j, "eps", c.eps);
    pull(j, "dice_eps", c.dice_eps);
    pull(j, "threshold", c.threshold);
    pull(j, "flip_prob", c.flip_prob);
    pull(j, "eval_interval", c.eval_interval);
    pull(j, "checkpoint_dir", c.checkpoint_dir);
    pull(j, "deterministic", c.deterministic);
    pull(j, "seed", c.seed);
    c.validate();
    return c;
}

void SynthSpec::validate() const {
    DSFC_CHECK(canvas >= 32, "synth.canvas must be >= 32");
    DSFC_CHECK(roads_min >= 0 && roads_max >= roads_min, "synth road count range invalid");
    DSFC_CHECK(width_min > 0.0 && width_max >= width_min, "synth road width range invalid");
    DSFC_CHECK(curvature >= 0.0, "synth.curvature must be >= 0");
    DSFC_CHECK(occlusion_count >= 0, "synth.occlusion_count must be >= 0");
    DSFC_CHECK(occlusion_size >= 0.0, "synth.occlusion_size must be >= 0");
    DSFC_CHECK(noise_scale >= 0.0, "synth.noise_scale must be >= 0");
    DSFC_CHECK(fg_cap > 0.0 && fg_cap <= 1.0, "synth.fg_cap must be in (0,1]");
    // A single maximally wide road across the canvas must fit under the cap;
    // otherwise the generator cannot satisfy its foreground budget.
    const double worst = width_max * static_cast<double>(canvas) /
                         static_cast<double>(canvas * canvas);
    DSFC_CHECK(roads_max == 0 || worst <= fg_cap,
               "synth spec infeasible: a single road of width ", width_max, " on a ", canvas,
               "px canvas exceeds the foreground cap ", fg_cap);
}

std::string SynthSpec::to_json() const {
    json j;
    j["canvas"] = canvas;
    j["roads_min"] = roads_min;
    j["roads_max"] = roads_max;
    j["width_min"] = width_min;
    j["width_max"] = width_max;
    j["curvature"] = curvature;
    j["occlusion_count"] = occlusion_count;
    j["occlusion_size"] = occlusion_size;
    j["noise_scale"] = noise_scale;
    j["fg_cap"] = fg_cap;
    j["seed"] = seed;
    return j.dump(2);
}

SynthSpec SynthSpec::from_json(const std::string& text) {
    json j = parse(text);
    if (j.contains("synth")) j = j.at("synth");
    SynthSpec c;
    pull(j, "canvas", c.canvas);
    pull(j, "roads_min", c.roads_min);
    pull(j, "roads_max", c.roads_max);
    pull(j, "width_min", c.width_min);
    pull(j, "width_max", c.width_max);
    pull(j, "curvature", c.curvature);
    pull(j, "occlusion_count", c.occlusion_count);
    pull(j, "occlusion_size", c.occlusion_size);
    pull(j, "noise_scale", c.noise_scale);
    pull(j, "fg_cap", c.fg_cap);
    pull(j, "seed", c.seed);
    c.validate();
    return c;
}

FileConfig FileConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    DSFC_CHECK(in.good(), "cannot open config file: ", path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    json j = parse(text);
    FileConfig fc;
    if (j.contains("model")) {
        fc.model = ModelConfig::from_json(j.at("model").dump());
        fc.has_model = true;
    }
    if (j.contains("train")) {
        fc.train = TrainConfig::from_json(j.at("train").dump());
        fc.has_train = true;
    }
    if (j.contains("synth")) {
        fc.synth = SynthSpec::from_json(j.at("synth").dump());
        fc.has_synth = true;
    }
    if (!fc.has_model && !fc.has_train && !fc.has_synth) {
        // bare model config document
        fc.model = ModelConfig::from_json(text);
        fc.has_model = true;
    }
    return fc;
}

} // namespace dsfc
