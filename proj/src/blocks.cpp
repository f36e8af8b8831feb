#include "dsfc/blocks.hpp"

namespace dsfc {

namespace O = ops;

Var grn(const Var& x, const Var& gamma, const Var& beta) {
    auto gx = O::sqrt_op(O::sum_axes(O::mul(x, x), false, true, true, false)); // (B,1,1,C)
    auto nx = O::div(gx, O::add_scalar(O::mean_axes(gx, false, false, false, true), 1e-6));
    return O::add(O::add(O::mul(gamma, O::mul(x, nx)), beta), x);
}

// ------------------------------------------------------------------- Stem

Stem::Stem(ParamStore& ps, int64_t c1) {
    O::Conv2dOpts o;
    o.stride = 4;
    conv = Conv2dLayer(ps, "stem/conv", 4, 4, 3, c1, o);
    norm = LayerNormLayer(ps, "stem/norm", c1);
}

Var Stem::operator()(const Var& image) const {
    const Shape s = image.shape();
    DSFC_CHECK(s.c == 3, "stem: expected a 3-channel image, got ", s.str());
    DSFC_CHECK(s.h % 32 == 0 && s.w % 32 == 0, "stem: input ", s.h, "x", s.w,
               " must be divisible by 32");
    return norm(conv(image));
}

void Stem::flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const {
    const int64_t oh = h / 4, ow = w / 4, c1 = conv.w.shape().c;
    s.add("stem/conv", "conv", conv.flops(b, oh, ow));
    s.add("stem/norm", "norm", b * oh * ow * c1);
}

// ---------------------------------------------------------- ConvNeXtBlock

ConvNeXtBlock::ConvNeXtBlock(ParamStore& ps, const std::string& p, int64_t c) : path(p) {
    O::Conv2dOpts dwopts;
    dwopts.groups = static_cast<int>(c);
    dw = Conv2dLayer(ps, p + "/dw", 7, 7, c, c, dwopts);
    norm = LayerNormLayer(ps, p + "/norm", c);
    pw1 = Conv2dLayer(ps, p + "/pw1", 1, 1, c, 4 * c);
    grn_gamma = ps.add(p + "/grn/gamma", Shape{1, 1, 1, 4 * c}, Init::Zero);
    grn_beta = ps.add(p + "/grn/beta", Shape{1, 1, 1, 4 * c}, Init::Zero);
    pw2 = Conv2dLayer(ps, p + "/pw2", 1, 1, 4 * c, c, {}, Init::Zero);
}

Var ConvNeXtBlock::operator()(const Var& x) const {
    auto h = dw(x);
    h = norm(h);
    h = O::gelu(pw1(h));
    h = grn(h, grn_gamma, grn_beta);
    h = pw2(h);
    return O::add(h, x);
}

void ConvNeXtBlock::flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const {
    const int64_t c = dw.w.shape().c;
    s.add(path + "/dw", "conv", dw.flops(b, h, w));
    s.add(path + "/norm", "norm", b * h * w * c);
    s.add(path + "/pw1", "conv", pw1.flops(b, h, w));
    s.add(path + "/gelu", "act", b * h * w * 4 * c);
    s.add(path + "/grn", "norm", b * h * w * 4 * c);
    s.add(path + "/pw2", "conv", pw2.flops(b, h, w));
    s.add(path + "/residual", "elementwise", b * h * w * c);
}

// ------------------------------------------------------------- Downsample

Downsample::Downsample(ParamStore& ps, const std::string& p, int64_t cin, int64_t cout)
    : path(p) {
    norm = LayerNormLayer(ps, p + "/norm", cin);
    O::Conv2dOpts o;
    o.stride = 2;
    conv = Conv2dLayer(ps, p + "/conv", 2, 2, cin, cout, o);
}

Var Downsample::operator()(const Var& x) const {
    const Shape s = x.shape();
    DSFC_CHECK(s.h % 2 == 0 && s.w % 2 == 0, "downsample: spatial size ", s.h, "x", s.w,
               " must be even");
    return conv(norm(x));
}

void Downsample::flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const {
    const int64_t cin = norm.gamma.shape().c;
    s.add(path + "/norm", "norm", b * h * w * cin);
    s.add(path + "/conv", "conv", conv.flops(b, h / 2, w / 2));
}

// -------------------------------------------------------------------- SCA

SCA::SCA(ParamStore& ps, const std::string& p, int64_t c, const std::vector<int>& dilations)
    : path(p) {
    DSFC_CHECK(!dilations.empty(), "sca: needs at least one dilation");
    for (size_t i = 0; i < dilations.size(); ++i) {
        O::Conv2dOpts o;
        o.groups = static_cast<int>(c);
        o.dilation = dilations[i];
        branches.emplace_back(ps, p + "/dw" + std::to_string(i + 1), 3, 3, c, c, o);
    }
    fuse = Conv2dLayer(ps, p + "/fuse", 1, 1, static_cast<int64_t>(dilations.size()) * c, c);
}

Var SCA::operator()(const Var& x) const {
    Var cat;
    for (const auto& br : branches) {
        Var y = br(x);
        cat = cat.defined() ? O::concat_channels(cat, y) : y;
    }
    return fuse(cat);
}

void SCA::flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const {
    for (size_t i = 0; i < branches.size(); ++i)
        s.add(path + "/dw" + std::to_string(i + 1), "conv", branches[i].flops(b, h, w));
    s.add(path + "/fuse", "conv", fuse.flops(b, h, w));
}

// ------------------------------------------------------------------- CFIA

CFIA::CFIA(ParamStore& ps, const std::string& p, int64_t c, int heads_, int pool_stride_)
    : heads(heads_), pool_stride(pool_stride_), path(p) {
    DSFC_CHECK(c % heads_ == 0, "cfia: width ", c, " not divisible by ", heads_, " heads");
    q_proj = Conv2dLayer(ps, p + "/q_proj", 1, 1, c, c);
    k_high = Conv2dLayer(ps, p + "/k_high", 1, 1, c, c);
    v_high = Conv2dLayer(ps, p + "/v_high", 1, 1, c, c);
    k_low = Conv2dLayer(ps, p + "/k_low", 1, 1, c, c);
    v_low = Conv2dLayer(ps, p + "/v_low", 1, 1, c, c);
    out_proj = Conv2dLayer(ps, p + "/out_proj", 1, 1, c, c);
}

Var CFIA::operator()(const Var& x) const {
    const Shape s = x.shape();
    DSFC_CHECK(s.h % pool_stride == 0 && s.w % pool_stride == 0, "cfia: spatial size ", s.h,
               "x", s.w, " not divisible by pool stride ", pool_stride);
    return forward(x, pool_stride);
}

Var CFIA::forward(const Var& x, int s_eff) const {
    const Shape s = x.shape();
    Var low, high;
    if (s_eff == 1) {
        // Degenerate split: pooling at stride 1 is the identity, so the
        // high-frequency residual is exactly zero (with zero gradient).
        low = x;
        high = O::mul_scalar(x, 0.0);
    } else {
        auto p = O::laplacian_split(x, s_eff);
        low = p.low;
        high = p.high;
    }
    Var q = O::to_tokens(q_proj(x));
    Var ah = O::multi_head_attention(q, O::to_tokens(k_high(high)), O::to_tokens(v_high(high)),
                                     heads);
    Var al = O::multi_head_attention(q, O::to_tokens(k_low(low)), O::to_tokens(v_low(low)),
                                     heads);
    return out_proj(O::to_feature_map(O::add(ah, al), s.h, s.w));
}

void CFIA::flops(int64_t b, int64_t h, int64_t w, int s_eff, FlopsSheet& s) const {
    const int64_t c = q_proj.w.shape().c;
    const int64_t n = h * w;
    const int64_t nl = (h / s_eff) * (w / s_eff);
    if (s_eff > 1) {
        s.add(path + "/pool", "pool", b * h * w * c);
        s.add(path + "/eq3_residual", "elementwise", b * h * w * c);
    }
    s.add(path + "/q_proj", "conv", q_proj.flops(b, h, w));
    s.add(path + "/k_high", "conv", k_high.flops(b, h, w));
    s.add(path + "/v_high", "conv", v_high.flops(b, h, w));
    s.add(path + "/k_low", "conv", k_low.flops(b, h / s_eff, w / s_eff));
    s.add(path + "/v_low", "conv", v_low.flops(b, h / s_eff, w / s_eff));
    s.add(path + "/attn_high", "attention", 4 * b * n * n * c + b * heads * n * n);
    s.add(path + "/attn_low", "attention", 4 * b * n * nl * c + b * heads * n * nl);
    s.add(path + "/branch_sum", "elementwise", b * n * c);
    s.add(path + "/out_proj", "conv", out_proj.flops(b, h, w));
}

// ------------------------------------------------------------------- MFFN

MFFN::MFFN(ParamStore& ps, const std::string& p, const SFTConfig& cfg) : path(p) {
    const int64_t c = cfg.width;
    const int64_t hidden = cfg.mffn_hidden();
    DSFC_CHECK(hidden >= 1, "mffn: hidden width must be >= 1");
    pw_in = Conv2dLayer(ps, p + "/pw_in", 1, 1, c, hidden);
    for (int k : cfg.mffn_kernels) {
        O::Conv2dOpts o;
        o.groups = static_cast<int>(hidden);
        dws.emplace_back(ps, p + "/dw" + std::to_string(k), k, k, hidden, hidden, o);
    }
    pw_out = Conv2dLayer(ps, p + "/pw_out", 1, 1, hidden, c, {}, Init::Zero);
}

Var MFFN::operator()(const Var& x) const {
    Var h = pw_in(x);
    Var acc = h; // identity path
    for (const auto& dwc : dws) acc = O::add(acc, dwc(h));
    return pw_out(O::gelu(acc));
}

void MFFN::flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const {
    const int64_t hidden = pw_in.w.shape().c;
    s.add(path + "/pw_in", "conv", pw_in.flops(b, h, w));
    for (const auto& dwc : dws) {
        const int64_t k = dwc.w.shape().b;
        s.add(path + "/dw" + std::to_string(k), "conv", dwc.flops(b, h, w));
        s.add(path + "/sum_dw" + std::to_string(k), "elementwise", b * h * w * hidden);
    }
    s.add(path + "/gelu", "act", b * h * w * hidden);
    s.add(path + "/pw_out", "conv", pw_out.flops(b, h, w));
}

// --------------------------------------------------------------- SFTLayer

SFTLayer::SFTLayer(ParamStore& ps, const std::string& p, const SFTConfig& cfg) : path(p) {
    const int64_t c = cfg.width;
    norm1 = LayerNormLayer(ps, p + "/norm1", c);
    sca = SCA(ps, p + "/sca", c, cfg.sca_dilations);
    cfia = CFIA(ps, p + "/cfia", c, cfg.heads, cfg.pool_stride);
    merge = Conv2dLayer(ps, p + "/merge", 1, 1, c, c, {}, Init::Zero);
    norm2 = LayerNormLayer(ps, p + "/norm2", c);
    mffn = MFFN(ps, p + "/mffn", cfg);
}

Var SFTLayer::operator()(const Var& x) const {
    const Shape s = x.shape();
    DSFC_CHECK(s.h % cfia.pool_stride == 0 && s.w % cfia.pool_stride == 0,
               "sft_layer: spatial size ", s.h, "x", s.w, " not divisible by pool stride ",
               cfia.pool_stride);
    return forward(x, cfia.pool_stride);
}

Var SFTLayer::forward(const Var& x, int s_eff) const {
    Var n = norm1(x);
    Var y = O::add(x, merge(O::add(sca(n), cfia.forward(n, s_eff))));
    return O::add(y, mffn(norm2(y)));
}

void SFTLayer::flops(int64_t b, int64_t h, int64_t w, int s_eff, FlopsSheet& s) const {
    const int64_t c = norm1.gamma.shape().c;
    s.add(path + "/norm1", "norm", b * h * w * c);
    sca.flops(b, h, w, s);
    cfia.flops(b, h, w, s_eff, s);
    s.add(path + "/sca_cfia_sum", "elementwise", b * h * w * c);
    s.add(path + "/merge", "conv", merge.flops(b, h, w));
    s.add(path + "/residual1", "elementwise", b * h * w * c);
    s.add(path + "/norm2", "norm", b * h * w * c);
    mffn.flops(b, h, w, s);
    s.add(path + "/residual2", "elementwise", b * h * w * c);
}

// ------------------------------------------------------------------- CFFM

CFFM::CFFM(ParamStore& ps, const std::string& p, int64_t c_, int reduction) : c(c_), path(p) {
    const int64_t bottleneck = (2 * c_ + reduction - 1) / reduction; // ceil(2C/r)
    fc1 = Conv2dLayer(ps, p + "/fc1", 1, 1, 2 * c_, bottleneck);
    fc2 = Conv2dLayer(ps, p + "/fc2", 1, 1, bottleneck, 2 * c_, {}, Init::Zero);
}

CFFM::Detail CFFM::forward_detail(const Var& f_c, const Var& f_t) const {
    DSFC_CHECK(f_c.shape() == f_t.shape(), "cffm: branch shapes differ, ", f_c.shape().str(),
               " vs ", f_t.shape().str());
    DSFC_CHECK(f_c.shape().c == c, "cffm: expected ", c, " channels, got ", f_c.shape().c);
    Var z = O::concat_channels(O::global_avg_pool(f_c), O::global_avg_pool(f_t));
    Var gates = O::sigmoid(fc2(O::relu(fc1(z))));
    Detail d;
    d.gate_c = O::slice_channels(gates, 0, c);
    d.gate_t = O::slice_channels(gates, c, 2 * c);
    d.out = O::add(O::mul(d.gate_c, f_c), O::mul(d.gate_t, f_t));
    return d;
}

Var CFFM::operator()(const Var& f_c, const Var& f_t) const {
    return forward_detail(f_c, f_t).out;
}

void CFFM::flops(int64_t b, int64_t h, int64_t w, FlopsSheet& s) const {
    const int64_t bottleneck = fc1.w.shape().c;
    s.add(path + "/gap", "pool", 2 * b * h * w * c);
    s.add(path + "/fc1", "conv", 2 * b * 2 * c * bottleneck);
    s.add(path + "/relu", "act", b * bottleneck);
    s.add(path + "/fc2", "conv", 2 * b * bottleneck * 2 * c);
    s.add(path + "/sigmoid", "act", b * 2 * c);
    s.add(path + "/gate_apply", "elementwise", 3 * b * h * w * c);
    return;
}

} // namespace dsfc
