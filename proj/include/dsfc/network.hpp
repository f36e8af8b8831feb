#pragma once

#include <array>
#include <utility>

#include "dsfc/blocks.hpp"

namespace dsfc {

struct SegmentationOutput {
    Var logits; // (B,H,W,1), same spatial size as the input image

    /// Sigmoid of the logits, computed outside the autodiff graph.
    Tensor probabilities() const;
};

/// Full dual-encoder segmentation network:
/// stem -> 4 stages of (ConvNeXt blocks || SFT layers) fused by CFFM, with a
/// shared downsample between stages -> skip-connected decoder -> 4x
/// transposed-conv upsampling -> pointwise head to 1 logit channel.
class DSFCNet {
public:
    explicit DSFCNet(const ModelConfig& cfg);

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    SegmentationOutput forward(const Var& image) const;
    int64_t count_params() const { return params_.count_params(); }

    /// Per-layer FLOPs accounting for one forward pass at the given input
    /// size; pure arithmetic over the configuration (see flops.hpp).
    FlopsSheet flops_sheet(int64_t h, int64_t w, int64_t batch = 1) const;

    /// All valid activation-tap names: cnn-i / sft-i / cffm-i for stages
    /// 1..4 and decoder-1..4 (decoder-4 = the full-resolution pre-head map).
    static std::vector<std::string> all_taps();

    /// Channel-mean |activation| per requested tap, bilinearly resized to
    /// the input size and min-max normalized to [0,1] (uniform 0 when the
    /// map has zero range).
    std::vector<std::pair<std::string, Tensor>> export_activations(
        const Tensor& image, const std::vector<std::string>& taps) const;

    /// The per-stage pool stride actually used at a given stage resolution:
    /// the largest s' <= the configured stride dividing both dimensions
    /// (1 degenerates the frequency split).
    static int effective_stride(int configured, int64_t h, int64_t w);

private:
    struct Stage {
        std::vector<ConvNeXtBlock> cnn;
        std::vector<SFTLayer> sft;
        CFFM cffm;
    };
    struct DecoderRound {
        TConvLayer up;
        Conv2dLayer conv1;
        LayerNormLayer norm1;
        Conv2dLayer conv2;
        LayerNormLayer norm2;
    };

    Var run(const Var& image, std::vector<std::pair<std::string, Tensor>>* taps) const;

    ModelConfig cfg_;
    ParamStore params_;
    Stem stem_;
    std::array<Stage, 4> stages_;
    std::array<Downsample, 3> downs_;
    std::array<DecoderRound, 3> dec_;
    TConvLayer final_up_;
    Conv2dLayer head_;
};

} // namespace dsfc
