#pragma once

#include <string>
#include <vector>

#include "dsfc/autodiff.hpp"
#include "dsfc/ops.hpp"
#include "dsfc/rng.hpp"

namespace dsfc {

enum class Init {
    Zero,     // identity-residual projections, all biases
    Normal02, // weights: normal(0, 0.02)
    One,      // layer-norm scale
};

/// Registry of learnable parameter arrays keyed by canonical path strings
/// (e.g. "stage2/sft0/cfia/q_proj/weight"). Registration order is the
/// construction order of the model, which fixes both the initialization
/// RNG stream and the checkpoint layout.
class ParamStore {
public:
    struct Entry {
        std::string path;
        Var var;
        Init init;
    };

    Var add(const std::string& path, Shape shape, Init init) {
        for (const auto& e : entries_)
            DSFC_CHECK(e.path != path, "duplicate parameter path: ", path);
        Entry e{path, Var::leaf(Tensor(shape), true), init};
        entries_.push_back(e);
        return e.var;
    }

    /// Fill every parameter from its init rule, consuming one stream.
    void initialize(uint64_t seed) {
        Rng rng(seed);
        for (auto& e : entries_) {
            Tensor& t = e.var.value();
            switch (e.init) {
            case Init::Zero: t.fill(0.0); break;
            case Init::One: t.fill(1.0); break;
            case Init::Normal02:
                for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, 0.02);
                break;
            }
        }
    }

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }

    int64_t count_params() const {
        int64_t n = 0;
        for (const auto& e : entries_) n += e.var.shape().numel();
        return n;
    }

    const Entry* find(const std::string& path) const {
        for (const auto& e : entries_)
            if (e.path == path) return &e;
        return nullptr;
    }

    void zero_grads() {
        for (auto& e : entries_) e.var.zero_grad();
    }

private:
    std::vector<Entry> entries_;
};

/// Convolution layer: owns weight (kh,kw,cin/groups,cout) and bias.
struct Conv2dLayer {
    Var w, b;
    ops::Conv2dOpts opts;

    Conv2dLayer() = default;
    Conv2dLayer(ParamStore& ps, const std::string& path, int64_t kh, int64_t kw, int64_t cin,
                int64_t cout, ops::Conv2dOpts o = {}, Init winit = Init::Normal02,
                Init binit = Init::Zero)
        : opts(o) {
        DSFC_CHECK(cin % o.groups == 0, path, ": channels ", cin, " not divisible by groups ",
                   o.groups);
        w = ps.add(path + "/weight", Shape{kh, kw, cin / o.groups, cout}, winit);
        b = ps.add(path + "/bias", Shape{1, 1, 1, cout}, binit);
    }

    Var operator()(const Var& x) const { return ops::conv2d(x, w, b, opts); }

    int64_t flops(int64_t b, int64_t out_h, int64_t out_w) const {
        const Shape ws = w.shape();
        return 2 * ws.b * ws.h * ws.w * ws.c * b * out_h * out_w;
    }
};

/// Transposed convolution with kernel == stride.
struct TConvLayer {
    Var w, b;
    int stride = 2;

    TConvLayer() = default;
    TConvLayer(ParamStore& ps, const std::string& path, int s, int64_t cin, int64_t cout)
        : stride(s) {
        w = ps.add(path + "/weight", Shape{s, s, cin, cout}, Init::Normal02);
        b = ps.add(path + "/bias", Shape{1, 1, 1, cout}, Init::Zero);
    }

    Var operator()(const Var& x) const { return ops::transposed_conv2d(x, w, b, stride); }

    int64_t flops(int64_t b, int64_t in_h, int64_t in_w) const {
        const Shape ws = w.shape();
        return 2 * ws.w * ws.c * b * (in_h * stride) * (in_w * stride);
    }
};

struct LayerNormLayer {
    Var gamma, beta;
    double eps = 1e-6;

    LayerNormLayer() = default;
    LayerNormLayer(ParamStore& ps, const std::string& path, int64_t c) {
        gamma = ps.add(path + "/gamma", Shape{1, 1, 1, c}, Init::One);
        beta = ps.add(path + "/beta", Shape{1, 1, 1, c}, Init::Zero);
    }

    Var operator()(const Var& x) const { return ops::layer_norm(x, gamma, beta, eps); }
};

} // namespace dsfc
