#pragma once

#include <utility>

#include "dsfc/autodiff.hpp"

namespace dsfc::ops {

// ---- elementwise, with numpy-style broadcasting (dims equal or 1) ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var rsub_scalar(double s, const Var& a); // s - a

// ---- reductions ----
/// Sum over the axes flagged true, keeping them as size-1 dims.
Var sum_axes(const Var& x, bool over_b, bool over_h, bool over_w, bool over_c);
Var mean_axes(const Var& x, bool over_b, bool over_h, bool over_w, bool over_c);
Var sum_all(const Var& x); // scalar (1,1,1,1)

// ---- activations and pointwise ----
Var relu(const Var& x);
Var gelu(const Var& x);    // exact form, x * Phi(x)
Var sigmoid(const Var& x);
Var sqrt_op(const Var& x); // d/dx at 0 treated as 0
Var softmax(const Var& x, int axis);

// ---- shape plumbing ----
Var reshape(const Var& x, Shape s);
Var concat_channels(const Var& a, const Var& b);
Var slice_channels(const Var& x, int64_t c0, int64_t c1); // [c0, c1)
/// (B,H,W,C) -> (B,H*W,1,C) row-major token matrix and back.
Var to_tokens(const Var& x);
Var to_feature_map(const Var& x, int64_t h, int64_t w);

// ---- convolutions ----
enum class Padding { Same, Valid };
struct Conv2dOpts {
    int stride = 1;
    int dilation = 1;
    int groups = 1;
    Padding padding = Padding::Same;
};
/// x: (B,H,W,Cin); w: (kh,kw,Cin/groups,Cout); b: (1,1,1,Cout) or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dOpts& opts = {});

/// Kernel size equals stride (non-overlapping expansion).
/// x: (B,H,W,Cin); w: (s,s,Cin,Cout); b: (1,1,1,Cout) or undefined.
Var transposed_conv2d(const Var& x, const Var& w, const Var& b, int stride);

// ---- normalization ----
/// Normalizes each spatial position's channel vector; gamma/beta: (1,1,1,C).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);

// ---- pooling / resampling ----
Var max_pool(const Var& x, int stride);         // window = stride, H,W divisible
Var nearest_upsample(const Var& x, int factor); // factor >= 1
Var global_avg_pool(const Var& x);              // (B,1,1,C)

// ---- frequency decomposition ----
/// low = max_pool(x, s); high = nearest_upsample(low, s) - x (s >= 2).
/// Parameter-free; nearest_upsample(low, s) - high reconstructs x.
struct FrequencyPair {
    Var low;
    Var high;
};
FrequencyPair laplacian_split(const Var& x, int s);

/// Plain-tensor resizers (no gradient; post-processing and data paths).
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);
Tensor nearest_resize(const Tensor& x, int64_t out_h, int64_t out_w);

// ---- attention ----
/// q: (B,Nq,1,C), k/v: (B,Nkv,1,C); per-head scaled dot-product, softmax over
/// keys, heads concatenated. Scale is 1/sqrt(C/heads).
Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads);

/// When set, every multi_head_attention call appends its softmax matrix,
/// shaped (B, heads, Nq, Nkv). Test/verification hook.
void set_attention_probe(std::vector<Tensor>* sink);

// ---- losses ----
/// Mean over all elements of the numerically stable logit-space BCE.
/// targets must be exactly 0 or 1.
Var bce_with_logits_mean(const Var& logits, const Tensor& targets);

} // namespace dsfc::ops
