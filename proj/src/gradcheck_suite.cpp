#include <cmath>
#include <functional>

#include "dsfc/gradcheck_suite.hpp"
#include "dsfc/metrics.hpp"
#include "dsfc/network.hpp"
#include "dsfc/rng.hpp"

namespace dsfc {

namespace {

Tensor randn(Shape s, Rng& rng, double scale = 1.0) {
    Tensor t(s);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, scale);
    return t;
}

/// Wake up every gate and zero-initialized projection so gradients reach
/// all internal paths.
void randomize_params(ParamStore& ps, uint64_t seed) {
    Rng rng(seed);
    for (auto& e : ps.entries()) {
        Tensor& t = e.var.value();
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-0.3, 0.3);
    }
}

/// Central-difference check of d(sum fwd)/d(param coords) against the
/// analytic gradient, for a few seeded coordinates of one parameter.
double param_spot_check(const std::function<Var()>& fwd, ParamStore& ps,
                        const std::string& path, uint64_t seed, int ncoords = 4,
                        double h = 1e-5) {
    Var param;
    bool found = false;
    for (auto& e : ps.entries())
        if (e.path == path) {
            param = e.var;
            found = true;
        }
    DSFC_CHECK(found, "gradcheck: no parameter ", path);

    ps.zero_grads();
    Var loss = ops::sum_all(fwd());
    backward(loss);
    const Tensor analytic = param.grad();

    Rng rng(seed);
    double worst = 0.0;
    Tensor& value = param.value();
    for (int k = 0; k < ncoords; ++k) {
        const int64_t i = rng.randint(0, value.numel() - 1);
        const double keep = value[i];
        value[i] = keep + h;
        const double up = ops::sum_all(fwd()).value()[0];
        value[i] = keep - h;
        const double dn = ops::sum_all(fwd()).value()[0];
        value[i] = keep;
        const double numeric = (up - dn) / (2.0 * h);
        const double err = std::abs(analytic[i] - numeric) /
                           std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        worst = std::max(worst, err);
    }
    return worst;
}

SuiteEntry merge(const std::string& module, const GradCheckReport& r,
                 double param_err = 0.0, int64_t param_coords = 0) {
    SuiteEntry e;
    e.module = module;
    e.max_rel_err = std::max(r.max_rel_err, param_err);
    for (const auto& ent : r.entries) e.coords += ent.coords_checked;
    e.coords += param_coords;
    return e;
}

SuiteEntry check_conv2d() {
    Rng rng(901);
    const Tensor x = randn(Shape{1, 5, 6, 3}, rng);
    const Tensor w = randn(Shape{3, 3, 3, 4}, rng, 0.3);
    const Tensor b = randn(Shape{1, 1, 1, 4}, rng, 0.1);
    const auto r = grad_check(
        [](std::vector<Var>& in) { return ops::conv2d(in[0], in[1], in[2]); },
        {{"x", x}, {"w", w}, {"b", b}});
    return merge("conv2d", r);
}

SuiteEntry check_tconv() {
    Rng rng(902);
    const Tensor x = randn(Shape{1, 3, 4, 3}, rng);
    const Tensor w = randn(Shape{2, 2, 3, 5}, rng, 0.3);
    const Tensor b = randn(Shape{1, 1, 1, 5}, rng, 0.1);
    const auto r = grad_check(
        [](std::vector<Var>& in) { return ops::transposed_conv2d(in[0], in[1], in[2], 2); },
        {{"x", x}, {"w", w}, {"b", b}});
    return merge("transposed_conv2d", r);
}

SuiteEntry check_layer_norm() {
    Rng rng(903);
    const Tensor x = randn(Shape{1, 4, 4, 6}, rng);
    const Tensor gamma = randn(Shape{1, 1, 1, 6}, rng, 0.5);
    const Tensor beta = randn(Shape{1, 1, 1, 6}, rng, 0.5);
    const auto r = grad_check(
        [](std::vector<Var>& in) { return ops::layer_norm(in[0], in[1], in[2]); },
        {{"x", x}, {"gamma", gamma}, {"beta", beta}});
    return merge("layer_norm", r);
}

SuiteEntry check_convnext() {
    ParamStore ps;
    ConvNeXtBlock block(ps, "blk", 6);
    randomize_params(ps, 904);
    Rng rng(905);
    const Tensor x = randn(Shape{1, 6, 6, 6}, rng);
    const auto r = grad_check([&](std::vector<Var>& in) { return block(in[0]); }, {{"x", x}});
    double perr = 0.0;
    for (const char* p : {"blk/pw2/weight", "blk/dw/weight", "blk/grn/gamma"})
        perr = std::max(perr, param_spot_check([&] { return block(Var::leaf(x)); }, ps, p, 906));
    return merge("convnext_v2_block", r, perr, 12);
}

SuiteEntry check_sca() {
    ParamStore ps;
    SCA sca(ps, "sca", 6, {1, 2});
    randomize_params(ps, 907);
    Rng rng(908);
    const Tensor x = randn(Shape{1, 6, 6, 6}, rng);
    const auto r = grad_check([&](std::vector<Var>& in) { return sca(in[0]); }, {{"x", x}});
    const double perr =
        param_spot_check([&] { return sca(Var::leaf(x)); }, ps, "sca/fuse/weight", 909);
    return merge("sca", r, perr, 4);
}

SuiteEntry check_cfia() {
    ParamStore ps;
    CFIA cfia(ps, "cfia", 8, 2, 2);
    randomize_params(ps, 910);
    // Distinct shuffled values keep the max-pool argmax stable under the
    // finite-difference steps.
    Tensor x(Shape{1, 8, 8, 8});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i) * 1e-2;
    Rng rng(911);
    for (int64_t i = x.numel() - 1; i > 0; --i)
        std::swap(x[i], x[rng.randint(0, i)]);
    const auto r = grad_check([&](std::vector<Var>& in) { return cfia(in[0]); }, {{"x", x}});
    double perr = 0.0;
    for (const char* p : {"cfia/q_proj/weight", "cfia/k_low/weight", "cfia/v_high/weight"})
        perr = std::max(perr, param_spot_check([&] { return cfia(Var::leaf(x)); }, ps, p, 912));
    return merge("cfia", r, perr, 12);
}

SuiteEntry check_mffn() {
    SFTConfig cfg;
    cfg.width = 6;
    cfg.heads = 1;
    cfg.mffn_kernels = {3, 5};
    cfg.mffn_hidden_ratio = 2.0;
    ParamStore ps;
    MFFN mffn(ps, "mffn", cfg);
    randomize_params(ps, 913);
    Rng rng(914);
    const Tensor x = randn(Shape{1, 6, 6, 6}, rng);
    const auto r = grad_check([&](std::vector<Var>& in) { return mffn(in[0]); }, {{"x", x}});
    const double perr =
        param_spot_check([&] { return mffn(Var::leaf(x)); }, ps, "mffn/pw_out/weight", 915);
    return merge("mffn", r, perr, 4);
}

SuiteEntry check_sft() {
    SFTConfig cfg;
    cfg.width = 8;
    cfg.heads = 2;
    cfg.pool_stride = 2;
    ParamStore ps;
    SFTLayer sft(ps, "sft", cfg);
    randomize_params(ps, 916);
    Tensor x(Shape{1, 6, 6, 8});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<double>(i) * 1e-2;
    Rng rng(917);
    for (int64_t i = x.numel() - 1; i > 0; --i)
        std::swap(x[i], x[rng.randint(0, i)]);
    const auto r = grad_check([&](std::vector<Var>& in) { return sft(in[0]); }, {{"x", x}});
    double perr = 0.0;
    for (const char* p : {"sft/merge/weight", "sft/norm1/gamma", "sft/mffn/pw_out/weight"})
        perr = std::max(perr, param_spot_check([&] { return sft(Var::leaf(x)); }, ps, p, 918));
    return merge("sft_layer", r, perr, 12);
}

SuiteEntry check_cffm() {
    ParamStore ps;
    CFFM cffm(ps, "cffm", 6, 2);
    randomize_params(ps, 919);
    Rng rng(920);
    const Tensor a = randn(Shape{1, 4, 5, 6}, rng);
    const Tensor b = randn(Shape{1, 4, 5, 6}, rng);
    const auto r = grad_check([&](std::vector<Var>& in) { return cffm(in[0], in[1]); },
                              {{"f_c", a}, {"f_t", b}});
    double perr = 0.0;
    for (const char* p : {"cffm/fc1/weight", "cffm/fc2/weight"})
        perr = std::max(perr, param_spot_check(
                                  [&] { return cffm(Var::leaf(a), Var::leaf(b)); }, ps, p, 921));
    return merge("cffm", r, perr, 8);
}

SuiteEntry check_bce_dice() {
    Rng rng(922);
    Tensor target(Shape{1, 4, 4, 1});
    for (int64_t i = 0; i < target.numel(); ++i) target[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const Tensor logits = randn(target.shape(), rng);
    const auto r = grad_check(
        [&](std::vector<Var>& in) { return bce_dice_loss(in[0], target); },
        {{"logits", logits}});
    return merge("bce_dice_loss", r);
}

SuiteEntry check_network() {
    ModelConfig cfg; // default tiny configuration
    DSFCNet net(cfg);
    randomize_params(net.params(), 923);
    Rng rng(924);
    Tensor x(Shape{1, 32, 32, 3});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = rng.uniform();
    GradCheckOpts opts;
    opts.max_coords_per_input = 24;
    opts.seed = 925;
    const auto r = grad_check(
        [&](std::vector<Var>& in) { return net.forward(in[0]).logits; }, {{"image", x}},
        opts);
    return merge("network", r);
}

} // namespace

const std::vector<std::string>& gradcheck_modules() {
    static const std::vector<std::string> names = {
        "conv2d", "transposed_conv2d", "layer_norm", "convnext_v2_block", "sca",
        "cfia",   "mffn",              "sft_layer",  "cffm",              "bce_dice_loss",
        "network"};
    return names;
}

std::vector<SuiteEntry> run_gradcheck(const std::string& module) {
    static const std::vector<std::pair<std::string, SuiteEntry (*)()>> table = {
        {"conv2d", check_conv2d},
        {"transposed_conv2d", check_tconv},
        {"layer_norm", check_layer_norm},
        {"convnext_v2_block", check_convnext},
        {"sca", check_sca},
        {"cfia", check_cfia},
        {"mffn", check_mffn},
        {"sft_layer", check_sft},
        {"cffm", check_cffm},
        {"bce_dice_loss", check_bce_dice},
        {"network", check_network},
    };
    std::vector<SuiteEntry> out;
    for (const auto& [name, fn] : table)
        if (module == "all" || module == name) out.push_back(fn());
    if (out.empty()) {
        std::string known;
        for (const auto& n : gradcheck_modules()) {
            if (!known.empty()) known += '|';
            known += n;
        }
        throw value_error(format_msg("unknown gradcheck module '", module, "' (want all|",
                                     known, ")"));
    }
    return out;
}

} // namespace dsfc
