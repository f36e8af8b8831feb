#include <cmath>

#include "dsfc/network.hpp"

namespace dsfc {

namespace O = ops;

Tensor SegmentationOutput::probabilities() const {
    NoGradGuard ng;
    return O::sigmoid(Var::leaf(logits.value())).value();
}

int DSFCNet::effective_stride(int configured, int64_t h, int64_t w) {
    for (int s = configured; s >= 2; --s)
        if (h % s == 0 && w % s == 0) return s;
    return 1;
}

DSFCNet::DSFCNet(const ModelConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    stem_ = Stem(params_, cfg_.widths[0]);
    for (int i = 0; i < 4; ++i) {
        const std::string sp = "stage" + std::to_string(i + 1);
        const int64_t c = cfg_.widths[static_cast<size_t>(i)];
        Stage& st = stages_[static_cast<size_t>(i)];
        for (int j = 0; j < cfg_.cnn_depths[static_cast<size_t>(i)]; ++j)
            st.cnn.emplace_back(params_, sp + "/cnn" + std::to_string(j), c);
        const SFTConfig sft_cfg = cfg_.stage_sft(i);
        for (int j = 0; j < cfg_.sft_depths[static_cast<size_t>(i)]; ++j)
            st.sft.emplace_back(params_, sp + "/sft" + std::to_string(j), sft_cfg);
        st.cffm = CFFM(params_, sp + "/cffm", c, cfg_.cffm_reduction);
        if (i < 3)
            downs_[static_cast<size_t>(i)] =
                Downsample(params_, "down" + std::to_string(i + 1), c,
                           cfg_.widths[static_cast<size_t>(i) + 1]);
    }
    int64_t in_c = cfg_.widths[3];
    for (int k = 0; k < 3; ++k) {
        const std::string dp = "decoder" + std::to_string(k + 1);
        const int64_t dw = cfg_.decoder_widths[static_cast<size_t>(k)];
        const int64_t skip_c = cfg_.widths[static_cast<size_t>(2 - k)];
        DecoderRound& r = dec_[static_cast<size_t>(k)];
        r.up = TConvLayer(params_, dp + "/up", 2, in_c, dw);
        r.conv1 = Conv2dLayer(params_, dp + "/conv1", 3, 3, dw + skip_c, dw);
        r.norm1 = LayerNormLayer(params_, dp + "/norm1", dw);
        r.conv2 = Conv2dLayer(params_, dp + "/conv2", 3, 3, dw, dw);
        r.norm2 = LayerNormLayer(params_, dp + "/norm2", dw);
        in_c = dw;
    }
    final_up_ = TConvLayer(params_, "final_up", 4, in_c, in_c);
    head_ = Conv2dLayer(params_, "head", 1, 1, in_c, 1);
    params_.initialize(cfg_.seed);
}

Var DSFCNet::run(const Var& image, std::vector<std::pair<std::string, Tensor>>* taps) const {
    auto tap = [&](const std::string& name, const Var& v) {
        if (taps) taps->emplace_back(name, v.value());
    };
    Var x = stem_(image);
    std::array<Var, 4> fused;
    for (int i = 0; i < 4; ++i) {
        const Stage& st = stages_[static_cast<size_t>(i)];
        const Shape s = x.shape();
        const int s_eff = effective_stride(cfg_.pool_stride, s.h, s.w);
        Var fc = x;
        for (const auto& blk : st.cnn) fc = blk(fc);
        Var ft = x;
        for (const auto& layer : st.sft) ft = layer.forward(ft, s_eff);
        Var fl = st.cffm(fc, ft);
        const std::string idx = std::to_string(i + 1);
        tap("cnn-" + idx, fc);
        tap("sft-" + idx, ft);
        tap("cffm-" + idx, fl);
        fused[static_cast<size_t>(i)] = fl;
        if (i < 3) x = downs_[static_cast<size_t>(i)](fl);
    }
    Var z = fused[3];
    for (int k = 0; k < 3; ++k) {
        const DecoderRound& r = dec_[static_cast<size_t>(k)];
        z = r.up(z);
        z = O::concat_channels(z, fused[static_cast<size_t>(2 - k)]);
        z = O::gelu(r.norm1(r.conv1(z)));
        z = O::gelu(r.norm2(r.conv2(z)));
        tap("decoder-" + std::to_string(k + 1), z);
    }
    z = final_up_(z);
    tap("decoder-4", z);
    return head_(z);
}

SegmentationOutput DSFCNet::forward(const Var& image) const {
    SegmentationOutput out;
    out.logits = run(image, nullptr);
    return out;
}

FlopsSheet DSFCNet::flops_sheet(int64_t h, int64_t w, int64_t batch) const {
    DSFC_CHECK(h % 32 == 0 && w % 32 == 0, "flops_sheet: input ", h, "x", w,
               " must be divisible by 32");
    FlopsSheet sheet;
    stem_.flops(batch, h, w, sheet);
    int64_t sh = h / 4, sw = w / 4;
    for (int i = 0; i < 4; ++i) {
        const Stage& st = stages_[static_cast<size_t>(i)];
        const int64_t c = cfg_.widths[static_cast<size_t>(i)];
        const int s_eff = effective_stride(cfg_.pool_stride, sh, sw);
        for (const auto& blk : st.cnn) blk.flops(batch, sh, sw, sheet);
        for (const auto& layer : st.sft) layer.flops(batch, sh, sw, s_eff, sheet);
        st.cffm.flops(batch, sh, sw, sheet);
        (void)c;
        if (i < 3) {
            downs_[static_cast<size_t>(i)].flops(batch, sh, sw, sheet);
            sh /= 2;
            sw /= 2;
        }
    }
    // decoder walks back up from (h/32, w/32)
    int64_t dh = h / 32, dw_ = w / 32;
    for (int k = 0; k < 3; ++k) {
        const DecoderRound& r = dec_[static_cast<size_t>(k)];
        const std::string dp = "decoder" + std::to_string(k + 1);
        sheet.add(dp + "/up", "tconv", r.up.flops(batch, dh, dw_));
        dh *= 2;
        dw_ *= 2;
        const int64_t dwc = cfg_.decoder_widths[static_cast<size_t>(k)];
        sheet.add(dp + "/conv1", "conv", r.conv1.flops(batch, dh, dw_));
        sheet.add(dp + "/norm1", "norm", batch * dh * dw_ * dwc);
        sheet.add(dp + "/gelu1", "act", batch * dh * dw_ * dwc);
        sheet.add(dp + "/conv2", "conv", r.conv2.flops(batch, dh, dw_));
        sheet.add(dp + "/norm2", "norm", batch * dh * dw_ * dwc);
        sheet.add(dp + "/gelu2", "act", batch * dh * dw_ * dwc);
    }
    sheet.add("final_up", "tconv", final_up_.flops(batch, dh, dw_));
    sheet.add("head", "conv", head_.flops(batch, dh * 4, dw_ * 4));
    return sheet;
}

std::vector<std::string> DSFCNet::all_taps() {
    std::vector<std::string> names;
    for (int i = 1; i <= 4; ++i) {
        names.push_back("cnn-" + std::to_string(i));
        names.push_back("sft-" + std::to_string(i));
        names.push_back("cffm-" + std::to_string(i));
    }
    for (int k = 1; k <= 4; ++k) names.push_back("decoder-" + std::to_string(k));
    return names;
}

std::vector<std::pair<std::string, Tensor>> DSFCNet::export_activations(
    const Tensor& image, const std::vector<std::string>& taps) const {
    const auto valid = all_taps();
    for (const auto& t : taps)
        DSFC_CHECK(std::find(valid.begin(), valid.end(), t) != valid.end(),
                   "unknown activation tap: ", t);
    NoGradGuard ng;
    std::vector<std::pair<std::string, Tensor>> collected;
    run(Var::leaf(image), &collected);
    const int64_t H = image.shape().h, W = image.shape().w;
    std::vector<std::pair<std::string, Tensor>> out;
    for (const auto& name : taps) {
        const Tensor* src = nullptr;
        for (const auto& [n, t] : collected)
            if (n == name) src = &t;
        DSFC_CHECK(src, "tap not produced by forward: ", name);
        const Shape s = src->shape();
        Tensor mean(Shape{s.b, s.h, s.w, 1});
        for (int64_t b = 0; b < s.b; ++b)
            for (int64_t y = 0; y < s.h; ++y)
                for (int64_t x = 0; x < s.w; ++x) {
                    double acc = 0.0;
                    for (int64_t c = 0; c < s.c; ++c) acc += std::abs(src->at(b, y, x, c));
                    mean.at(b, y, x, 0) = acc / static_cast<double>(s.c);
                }
        Tensor resized = O::bilinear_resize(mean, H, W);
        double lo = resized[0], hi = resized[0];
        for (int64_t i = 0; i < resized.numel(); ++i) {
            lo = std::min(lo, resized[i]);
            hi = std::max(hi, resized[i]);
        }
        if (hi - lo > 0.0) {
            for (int64_t i = 0; i < resized.numel(); ++i)
                resized[i] = (resized[i] - lo) / (hi - lo);
        } else {
            resized.fill(0.0);
        }
        out.emplace_back(name, std::move(resized));
    }
    return out;
}

} // namespace dsfc
