#include <algorithm>
#include <cmath>
#include <memory>

#include "dsfc/ops.hpp"

namespace dsfc::ops {

Var max_pool(const Var& x, int stride) {
    const Shape xs = x.shape();
    DSFC_CHECK(stride >= 1, "max_pool: stride must be >= 1, got ", stride);
    DSFC_CHECK(xs.h % stride == 0 && xs.w % stride == 0, "max_pool: spatial dims of ",
               xs.str(), " not divisible by ", stride);
    const int64_t s = stride;
    const int64_t oh = xs.h / s, ow = xs.w / s;
    Tensor out(Shape{xs.b, oh, ow, xs.c});
    auto argmax = std::make_shared<std::vector<int64_t>>(out.numel());
    {
        const double* px = x.value().data();
        double* po = out.data();
        int64_t* pa = argmax->data();
        for (int64_t ib = 0; ib < xs.b; ++ib)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    const int64_t obase = ((ib * oh + oy) * ow + ox) * xs.c;
                    for (int64_t c = 0; c < xs.c; ++c) {
                        double best = -std::numeric_limits<double>::infinity();
                        int64_t best_i = -1;
                        for (int64_t ky = 0; ky < s; ++ky)
                            for (int64_t kx = 0; kx < s; ++kx) {
                                const int64_t i =
                                    ((ib * xs.h + oy * s + ky) * xs.w + ox * s + kx) * xs.c + c;
                                if (px[i] > best) {
                                    best = px[i];
                                    best_i = i;
                                }
                            }
                        po[obase + c] = best;
                        pa[obase + c] = best_i;
                    }
                }
    }
    return make_op(std::move(out), {x}, [x, argmax](Node& self) {
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) gx[(*argmax)[i]] += g[i];
    });
}

Var nearest_upsample(const Var& x, int factor) {
    const Shape xs = x.shape();
    DSFC_CHECK(factor >= 1, "nearest_upsample: factor must be >= 1, got ", factor);
    const int64_t f = factor;
    const int64_t oh = xs.h * f, ow = xs.w * f;
    Tensor out(Shape{xs.b, oh, ow, xs.c});
    {
        const double* px = x.value().data();
        double* po = out.data();
        for (int64_t ib = 0; ib < xs.b; ++ib)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox) {
                    const double* src = px + ((ib * xs.h + oy / f) * xs.w + ox / f) * xs.c;
                    double* dst = po + ((ib * oh + oy) * ow + ox) * xs.c;
                    for (int64_t c = 0; c < xs.c; ++c) dst[c] = src[c];
                }
    }
    return make_op(std::move(out), {x}, [x, f](Node& self) {
        const Shape xs = x.shape();
        const Shape os = self.value.shape();
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        for (int64_t ib = 0; ib < xs.b; ++ib)
            for (int64_t oy = 0; oy < os.h; ++oy)
                for (int64_t ox = 0; ox < os.w; ++ox) {
                    double* dst = gx.data() + ((ib * xs.h + oy / f) * xs.w + ox / f) * xs.c;
                    const double* src = g.data() + ((ib * os.h + oy) * os.w + ox) * xs.c;
                    for (int64_t c = 0; c < xs.c; ++c) dst[c] += src[c];
                }
    });
}

Var global_avg_pool(const Var& x) { return mean_axes(x, false, true, true, false); }

FrequencyPair laplacian_split(const Var& x, int s) {
    const Shape xs = x.shape();
    DSFC_CHECK(s >= 2, "laplacian_split: stride must be >= 2, got ", s);
    DSFC_CHECK(xs.h % s == 0 && xs.w % s == 0, "laplacian_split: spatial dims of ", xs.str(),
               " not divisible by ", s);
    FrequencyPair p;
    p.low = max_pool(x, s);
    p.high = sub(nearest_upsample(p.low, s), x);
    return p;
}

namespace {

// Half-pixel-center source coordinate with edge clamping.
struct LerpCoord {
    int64_t i0, i1;
    double frac;
};

LerpCoord lerp_coord(int64_t dst, int64_t in_size, int64_t out_size) {
    double src = (static_cast<double>(dst) + 0.5) * static_cast<double>(in_size) /
                     static_cast<double>(out_size) -
                 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    LerpCoord c;
    c.i0 = static_cast<int64_t>(std::floor(src));
    c.i1 = std::min(c.i0 + 1, in_size - 1);
    c.frac = src - static_cast<double>(c.i0);
    return c;
}

} // namespace

Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    const Shape xs = x.shape();
    DSFC_CHECK(out_h >= 1 && out_w >= 1, "bilinear_resize: target size must be positive");
    Tensor out(Shape{xs.b, out_h, out_w, xs.c});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        const LerpCoord ly = lerp_coord(oy, xs.h, out_h);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            const LerpCoord lx = lerp_coord(ox, xs.w, out_w);
            for (int64_t ib = 0; ib < xs.b; ++ib) {
                const double* r00 = x.data() + ((ib * xs.h + ly.i0) * xs.w + lx.i0) * xs.c;
                const double* r01 = x.data() + ((ib * xs.h + ly.i0) * xs.w + lx.i1) * xs.c;
                const double* r10 = x.data() + ((ib * xs.h + ly.i1) * xs.w + lx.i0) * xs.c;
                const double* r11 = x.data() + ((ib * xs.h + ly.i1) * xs.w + lx.i1) * xs.c;
                double* dst = out.data() + ((ib * out_h + oy) * out_w + ox) * xs.c;
                for (int64_t c = 0; c < xs.c; ++c) {
                    double top = r00[c] * (1.0 - lx.frac) + r01[c] * lx.frac;
                    double bot = r10[c] * (1.0 - lx.frac) + r11[c] * lx.frac;
                    dst[c] = top * (1.0 - ly.frac) + bot * ly.frac;
                }
            }
        }
    }
    return out;
}

Tensor nearest_resize(const Tensor& x, int64_t out_h, int64_t out_w) {
    const Shape xs = x.shape();
    DSFC_CHECK(out_h >= 1 && out_w >= 1, "nearest_resize: target size must be positive");
    Tensor out(Shape{xs.b, out_h, out_w, xs.c});
    auto src_index = [](int64_t dst, int64_t in_size, int64_t out_size) {
        int64_t i = static_cast<int64_t>(std::floor(
            (static_cast<double>(dst) + 0.5) * static_cast<double>(in_size) /
            static_cast<double>(out_size)));
        return std::clamp<int64_t>(i, 0, in_size - 1);
    };
    for (int64_t oy = 0; oy < out_h; ++oy) {
        const int64_t iy = src_index(oy, xs.h, out_h);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            const int64_t ix = src_index(ox, xs.w, out_w);
            for (int64_t ib = 0; ib < xs.b; ++ib) {
                const double* src = x.data() + ((ib * xs.h + iy) * xs.w + ix) * xs.c;
                double* dst = out.data() + ((ib * out_h + oy) * out_w + ox) * xs.c;
                for (int64_t c = 0; c < xs.c; ++c) dst[c] = src[c];
            }
        }
    }
    return out;
}

} // namespace dsfc::ops
