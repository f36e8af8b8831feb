#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dsfc/common.hpp"

namespace dsfc {

/// Per-stage transformer-branch settings, derived from ModelConfig.
struct SFTConfig {
    int64_t width = 32;
    int heads = 1;
    int pool_stride = 2;
    std::vector<int> sca_dilations{1, 2};
    std::vector<int> mffn_kernels{3, 5};
    double mffn_hidden_ratio = 2.0;

    int64_t mffn_hidden() const {
        return static_cast<int64_t>(std::llround(mffn_hidden_ratio * static_cast<double>(width)));
    }
};

struct ModelConfig {
    std::array<int64_t, 4> widths{32, 64, 128, 256};
    std::array<int, 4> cnn_depths{1, 1, 2, 1};
    std::array<int, 4> sft_depths{1, 1, 2, 1};
    std::array<int, 4> heads{0, 0, 0, 0}; // 0: derive as max(1, width/32)
    int pool_stride = 2;
    std::vector<int> sca_dilations{1, 2};
    std::vector<int> mffn_kernels{3, 5};
    double mffn_hidden_ratio = 2.0;
    int cffm_reduction = 4;
    std::array<int64_t, 3> decoder_widths{128, 64, 32};
    uint64_t seed = 42;

    void validate() const;
    int stage_heads(int i) const {
        return heads[static_cast<size_t>(i)] > 0
                   ? heads[static_cast<size_t>(i)]
                   : static_cast<int>(std::max<int64_t>(1, widths[static_cast<size_t>(i)] / 32));
    }
    SFTConfig stage_sft(int i) const {
        SFTConfig c;
        c.width = widths[static_cast<size_t>(i)];
        c.heads = stage_heads(i);
        c.pool_stride = pool_stride;
        c.sca_dilations = sca_dilations;
        c.mffn_kernels = mffn_kernels;
        c.mffn_hidden_ratio = mffn_hidden_ratio;
        return c;
    }

    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
};

struct TrainConfig {
    double lr = 1e-4;
    int batch_size = 4;
    int epochs = 100;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double dice_eps = 1.0;
    double threshold = 0.5;
    double flip_prob = 0.5;
    int eval_interval = 1; // epochs between validation passes
    std::string checkpoint_dir = "runs";
    bool deterministic = true;
    uint64_t seed = 42;

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct SynthSpec {
    int64_t canvas = 128;
    int roads_min = 1;
    int roads_max = 3;
    double width_min = 1.5;
    double width_max = 4.0;
    double curvature = 0.35;
    int occlusion_count = 4;
    double occlusion_size = 7.0;
    double noise_scale = 0.08;
    double fg_cap = 0.05;
    uint64_t seed = 42;

    void validate() const;
    std::string to_json() const;
    static SynthSpec from_json(const std::string& text);
};

/// Bundled parse of a config file that may carry any of the three sections
/// ("model", "train", "synth") or be a bare model config.
struct FileConfig {
    ModelConfig model;
    TrainConfig train;
    SynthSpec synth;
    bool has_model = false, has_train = false, has_synth = false;

    static FileConfig from_file(const std::string& path);
};

} // namespace dsfc
