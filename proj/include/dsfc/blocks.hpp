#pragma once

#include "dsfc/config.hpp"
#include "dsfc/flops.hpp"
#include "dsfc/layers.hpp"

namespace dsfc {

/// Global response normalization: per-channel spatial L2 energy, divisively
/// normalized by the cross-channel mean, with zero-initialized affine so the
/// op starts as the identity.
Var grn(const Var& x, const Var& gamma, const Var& beta);

/// 4x4 stride-4 patchify convolution + layer norm. Input must be divisible
/// by 32 so the full stage pyramid and decoder stay aligned.
struct Stem {
    Conv2dLayer conv;
    LayerNormLayer norm;

    Stem() = default;
    Stem(ParamStore& ps, int64_t c1);
    Var operator()(const Var& image) const;
    void flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const;
};

/// 7x7 depthwise -> LN -> pointwise x4 -> GELU -> GRN -> pointwise -> +x.
/// Final pointwise and GRN affine are zero-initialized: identity at init.
struct ConvNeXtBlock {
    Conv2dLayer dw;
    LayerNormLayer norm;
    Conv2dLayer pw1;
    Var grn_gamma, grn_beta;
    Conv2dLayer pw2;
    std::string path;

    ConvNeXtBlock() = default;
    ConvNeXtBlock(ParamStore& ps, const std::string& path, int64_t c);
    Var operator()(const Var& x) const;
    void flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const;
};

/// Shared stage-boundary downsample: LN then 2x2 stride-2 convolution.
struct Downsample {
    LayerNormLayer norm;
    Conv2dLayer conv;
    std::string path;

    Downsample() = default;
    Downsample(ParamStore& ps, const std::string& path, int64_t cin, int64_t cout);
    Var operator()(const Var& x) const;
    void flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const;
};

/// Spatial Context Aggregator: parallel 3x3 depthwise convolutions at the
/// configured dilations, channel concat, pointwise fusion back to C.
struct SCA {
    std::vector<Conv2dLayer> branches;
    Conv2dLayer fuse;
    std::string path;

    SCA() = default;
    SCA(ParamStore& ps, const std::string& path, int64_t c, const std::vector<int>& dilations);
    Var operator()(const Var& x) const;
    void flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const;
};

/// Cross-Frequency Interaction Attention: Laplacian split, Q from the input,
/// K/V from the high- and low-frequency components, two multi-head
/// attentions with shared Q, summed and projected back to C.
struct CFIA {
    Conv2dLayer q_proj, k_high, v_high, k_low, v_low, out_proj;
    int heads = 1;
    int pool_stride = 2;
    std::string path;

    CFIA() = default;
    CFIA(ParamStore& ps, const std::string& path, int64_t c, int heads, int pool_stride);

    /// Strict contract: spatial dims must be divisible by pool_stride.
    Var operator()(const Var& x) const;

    /// Network-internal entry point. effective_stride 1 degenerates the
    /// split to (low = x, high = 0), used when the configured stride does
    /// not divide the current stage resolution.
    Var forward(const Var& x, int effective_stride) const;
    void flops(int64_t b, int64_t h, int64_t w, int effective_stride, FlopsSheet& s) const;
};

/// Multi-scale FFN: pointwise to hidden, parallel depthwise kernels plus an
/// identity path, summed, GELU, pointwise back. Output projection
/// zero-initialized.
struct MFFN {
    Conv2dLayer pw_in;
    std::vector<Conv2dLayer> dws;
    Conv2dLayer pw_out;
    std::string path;

    MFFN() = default;
    MFFN(ParamStore& ps, const std::string& path, const SFTConfig& cfg);
    Var operator()(const Var& x) const;
    void flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const;
};

/// One transformer-branch layer:
///   y = x + merge(sca(LN(x)) + cfia(LN(x)));  out = y + mffn(LN(y)).
/// merge and the MFFN output projection start at zero: identity at init.
struct SFTLayer {
    LayerNormLayer norm1;
    SCA sca;
    CFIA cfia;
    Conv2dLayer merge;
    LayerNormLayer norm2;
    MFFN mffn;
    std::string path;

    SFTLayer() = default;
    SFTLayer(ParamStore& ps, const std::string& path, const SFTConfig& cfg);
    Var operator()(const Var& x) const; // strict stride contract
    Var forward(const Var& x, int effective_stride) const;
    void flops(int64_t b, int64_t h, int64_t w, int effective_stride, FlopsSheet& s) const;
};

/// Channel Feature Fusion Module: joint GAP squeeze, bottleneck MLP, sigmoid
/// gates split per branch, recalibrated weighted sum. Final MLP layer
/// zero-initialized: gates start at 0.5.
struct CFFM {
    Conv2dLayer fc1, fc2;
    int64_t c = 0;
    std::string path;

    CFFM() = default;
    CFFM(ParamStore& ps, const std::string& path, int64_t c, int reduction);

    struct Detail {
        Var out, gate_c, gate_t; // gates: (B,1,1,C) each
    };
    Detail forward_detail(const Var& f_c, const Var& f_t) const;
    Var operator()(const Var& f_c, const Var& f_t) const;
    void flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const;
};

} // namespace dsfc
