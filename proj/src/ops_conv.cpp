#include "dsfc/ops.hpp"

namespace dsfc::ops {

namespace {

struct ConvGeom {
    int64_t out_h, out_w;
    int64_t pad_h, pad_w; // before-padding (top/left)
    int64_t eff_kh, eff_kw;
};

ConvGeom conv_geometry(const Shape& xs, const Shape& ws, const Conv2dOpts& o) {
    ConvGeom g;
    g.eff_kh = (ws.b - 1) * o.dilation + 1;
    g.eff_kw = (ws.h - 1) * o.dilation + 1;
    if (o.padding == Padding::Same) {
        g.out_h = (xs.h + o.stride - 1) / o.stride;
        g.out_w = (xs.w + o.stride - 1) / o.stride;
        int64_t pad_total_h = std::max<int64_t>(0, (g.out_h - 1) * o.stride + g.eff_kh - xs.h);
        int64_t pad_total_w = std::max<int64_t>(0, (g.out_w - 1) * o.stride + g.eff_kw - xs.w);
        g.pad_h = pad_total_h / 2;
        g.pad_w = pad_total_w / 2;
    } else {
        DSFC_CHECK(xs.h >= g.eff_kh && xs.w >= g.eff_kw,
                   "conv2d: valid padding needs input >= effective kernel, got input ",
                   xs.str(), " kernel ", g.eff_kh, "x", g.eff_kw);
        g.out_h = (xs.h - g.eff_kh) / o.stride + 1;
        g.out_w = (xs.w - g.eff_kw) / o.stride + 1;
        g.pad_h = g.pad_w = 0;
    }
    return g;
}

} // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dOpts& opts) {
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    DSFC_CHECK(opts.stride >= 1 && opts.dilation >= 1 && opts.groups >= 1,
               "conv2d: stride/dilation/groups must be >= 1");
    DSFC_CHECK(xs.c % opts.groups == 0, "conv2d: input channels ", xs.c,
               " not divisible by groups ", opts.groups);
    const int64_t cinpg = xs.c / opts.groups;
    DSFC_CHECK(ws.w == cinpg, "conv2d: weight shape ", ws.str(), " expects ", ws.w,
               " channels per group but input gives ", cinpg);
    DSFC_CHECK(ws.c % opts.groups == 0, "conv2d: output channels ", ws.c,
               " not divisible by groups ", opts.groups);
    if (b.defined())
        DSFC_CHECK((b.shape() == Shape{1, 1, 1, ws.c}), "conv2d: bias shape ", b.shape().str(),
                   " does not match ", ws.c, " output channels");
    const int64_t cout = ws.c;
    const int64_t coutpg = cout / opts.groups;
    const ConvGeom geo = conv_geometry(xs, ws, opts);

    Tensor out(Shape{xs.b, geo.out_h, geo.out_w, cout});
    {
        const double* px = x.value().data();
        const double* pw = w.value().data();
        const double* pb = b.defined() ? b.value().data() : nullptr;
        double* po = out.data();
        const int64_t kh = ws.b, kw = ws.h;
        for (int64_t ib = 0; ib < xs.b; ++ib) {
            const double* xb = px + ib * xs.h * xs.w * xs.c;
            for (int64_t oy = 0; oy < geo.out_h; ++oy)
                for (int64_t ox = 0; ox < geo.out_w; ++ox) {
                    double* acc = po + ((ib * geo.out_h + oy) * geo.out_w + ox) * cout;
                    if (pb)
                        for (int64_t oc = 0; oc < cout; ++oc) acc[oc] = pb[oc];
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = oy * opts.stride - geo.pad_h + ky * opts.dilation;
                        if (iy < 0 || iy >= xs.h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ox * opts.stride - geo.pad_w + kx * opts.dilation;
                            if (ix < 0 || ix >= xs.w) continue;
                            const double* xp = xb + (iy * xs.w + ix) * xs.c;
                            const double* wk = pw + (ky * kw + kx) * cinpg * cout;
                            if (cinpg == 1 && coutpg == 1) { // depthwise
                                for (int64_t oc = 0; oc < cout; ++oc)
                                    acc[oc] += xp[oc] * wk[oc];
                            } else if (opts.groups == 1) {
                                for (int64_t ic = 0; ic < cinpg; ++ic) {
                                    const double xv = xp[ic];
                                    const double* wr = wk + ic * cout;
                                    for (int64_t oc = 0; oc < cout; ++oc)
                                        acc[oc] += xv * wr[oc];
                                }
                            } else {
                                for (int64_t ic = 0; ic < cinpg; ++ic) {
                                    const double* wr = wk + ic * cout;
                                    for (int64_t oc = 0; oc < cout; ++oc)
                                        acc[oc] += xp[(oc / coutpg) * cinpg + ic] * wr[oc];
                                }
                            }
                        }
                    }
                }
        }
    }

    std::vector<Var> parents = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), parents, [x, w, b, opts](Node& self) {
        const Shape xs = x.shape();
        const Shape ws = w.shape();
        const Shape os = self.value.shape();
        const ConvGeom geo = conv_geometry(xs, ws, opts);
        const int64_t cinpg = xs.c / opts.groups;
        const int64_t cout = ws.c;
        const int64_t coutpg = cout / opts.groups;
        const int64_t kh = ws.b, kw = ws.h;
        const double* px = x.value().data();
        const double* pw = w.value().data();
        const double* pg = self.grad.data();
        double* gx = x.requires_grad() ? x.node()->ensure_grad().data() : nullptr;
        double* gw = w.requires_grad() ? w.node()->ensure_grad().data() : nullptr;
        double* gb = b.defined() && b.requires_grad() ? b.node()->ensure_grad().data() : nullptr;
        for (int64_t ib = 0; ib < xs.b; ++ib) {
            const int64_t xoff = ib * xs.h * xs.w * xs.c;
            for (int64_t oy = 0; oy < os.h; ++oy)
                for (int64_t ox = 0; ox < os.w; ++ox) {
                    const double* gr = pg + ((ib * os.h + oy) * os.w + ox) * cout;
                    if (gb)
                        for (int64_t oc = 0; oc < cout; ++oc) gb[oc] += gr[oc];
                    for (int64_t ky = 0; ky < kh; ++ky) {
                        const int64_t iy = oy * opts.stride - geo.pad_h + ky * opts.dilation;
                        if (iy < 0 || iy >= xs.h) continue;
                        for (int64_t kx = 0; kx < kw; ++kx) {
                            const int64_t ix = ox * opts.stride - geo.pad_w + kx * opts.dilation;
                            if (ix < 0 || ix >= xs.w) continue;
                            const int64_t xp = xoff + (iy * xs.w + ix) * xs.c;
                            const int64_t wk = (ky * kw + kx) * cinpg * cout;
                            for (int64_t ic = 0; ic < cinpg; ++ic) {
                                const double* wr = pw + wk + ic * cout;
                                double* gwr = gw ? gw + wk + ic * cout : nullptr;
                                if (cinpg == 1 && coutpg == 1) {
                                    // depthwise: ic==0, input channel == oc
                                    if (gx)
                                        for (int64_t oc = 0; oc < cout; ++oc)
                                            gx[xp + oc] += gr[oc] * wr[oc];
                                    if (gwr)
                                        for (int64_t oc = 0; oc < cout; ++oc)
                                            gwr[oc] += px[xp + oc] * gr[oc];
                                } else if (opts.groups == 1) {
                                    if (gx) {
                                        double acc = 0.0;
                                        for (int64_t oc = 0; oc < cout; ++oc)
                                            acc += gr[oc] * wr[oc];
                                        gx[xp + ic] += acc;
                                    }
                                    if (gwr) {
                                        const double xv = px[xp + ic];
                                        for (int64_t oc = 0; oc < cout; ++oc)
                                            gwr[oc] += xv * gr[oc];
                                    }
                                } else {
                                    for (int64_t oc = 0; oc < cout; ++oc) {
                                        const int64_t xi = xp + (oc / coutpg) * cinpg + ic;
                                        if (gx) gx[xi] += gr[oc] * wr[oc];
                                        if (gwr) gwr[oc] += px[xi] * gr[oc];
                                    }
                                }
                            }
                        }
                    }
                }
        }
    });
}

Var transposed_conv2d(const Var& x, const Var& w, const Var& b, int stride) {
    const Shape xs = x.shape();
    const Shape ws = w.shape();
    DSFC_CHECK(stride >= 1, "transposed_conv2d: stride must be >= 1, got ", stride);
    DSFC_CHECK(ws.b == stride && ws.h == stride, "transposed_conv2d: kernel ", ws.b, "x", ws.h,
               " must equal stride ", stride);
    DSFC_CHECK(ws.w == xs.c, "transposed_conv2d: weight shape ", ws.str(),
               " does not take ", xs.c, " input channels");
    const int64_t cin = xs.c;
    const int64_t cout = ws.c;
    if (b.defined())
        DSFC_CHECK((b.shape() == Shape{1, 1, 1, cout}), "transposed_conv2d: bias shape ",
                   b.shape().str(), " does not match ", cout, " output channels");
    const int64_t s = stride;

    Tensor out(Shape{xs.b, xs.h * s, xs.w * s, cout});
    {
        const double* px = x.value().data();
        const double* pw = w.value().data();
        const double* pb = b.defined() ? b.value().data() : nullptr;
        double* po = out.data();
        const int64_t oh = xs.h * s, ow = xs.w * s;
        for (int64_t ib = 0; ib < xs.b; ++ib)
            for (int64_t iy = 0; iy < xs.h; ++iy)
                for (int64_t ix = 0; ix < xs.w; ++ix) {
                    const double* xp = px + ((ib * xs.h + iy) * xs.w + ix) * cin;
                    for (int64_t ky = 0; ky < s; ++ky)
                        for (int64_t kx = 0; kx < s; ++kx) {
                            double* acc =
                                po + ((ib * oh + iy * s + ky) * ow + ix * s + kx) * cout;
                            const double* wk = pw + (ky * s + kx) * cin * cout;
                            if (pb)
                                for (int64_t oc = 0; oc < cout; ++oc) acc[oc] = pb[oc];
                            for (int64_t ic = 0; ic < cin; ++ic) {
                                const double xv = xp[ic];
                                const double* wr = wk + ic * cout;
                                for (int64_t oc = 0; oc < cout; ++oc) acc[oc] += xv * wr[oc];
                            }
                        }
                }
    }

    std::vector<Var> parents = b.defined() ? std::vector<Var>{x, w, b} : std::vector<Var>{x, w};
    return make_op(std::move(out), parents, [x, w, b, stride](Node& self) {
        const Shape xs = x.shape();
        const int64_t s = stride;
        const int64_t cin = xs.c;
        const int64_t cout = w.shape().c;
        const int64_t oh = xs.h * s, ow = xs.w * s;
        const double* px = x.value().data();
        const double* pw = w.value().data();
        const double* pg = self.grad.data();
        double* gx = x.requires_grad() ? x.node()->ensure_grad().data() : nullptr;
        double* gw = w.requires_grad() ? w.node()->ensure_grad().data() : nullptr;
        double* gb = b.defined() && b.requires_grad() ? b.node()->ensure_grad().data() : nullptr;
        for (int64_t ib = 0; ib < xs.b; ++ib)
            for (int64_t iy = 0; iy < xs.h; ++iy)
                for (int64_t ix = 0; ix < xs.w; ++ix) {
                    const int64_t xp = ((ib * xs.h + iy) * xs.w + ix) * cin;
                    for (int64_t ky = 0; ky < s; ++ky)
                        for (int64_t kx = 0; kx < s; ++kx) {
                            const double* gr =
                                pg + ((ib * oh + iy * s + ky) * ow + ix * s + kx) * cout;
                            const int64_t wk = (ky * s + kx) * cin * cout;
                            if (gb)
                                for (int64_t oc = 0; oc < cout; ++oc) gb[oc] += gr[oc];
                            for (int64_t ic = 0; ic < cin; ++ic) {
                                const double* wr = pw + wk + ic * cout;
                                if (gx) {
                                    double acc = 0.0;
                                    for (int64_t oc = 0; oc < cout; ++oc)
                                        acc += gr[oc] * wr[oc];
                                    gx[xp + ic] += acc;
                                }
                                if (gw) {
                                    double* gwr = gw + wk + ic * cout;
                                    const double xv = px[xp + ic];
                                    for (int64_t oc = 0; oc < cout; ++oc)
                                        gwr[oc] += xv * gr[oc];
                                }
                            }
                        }
                }
    });
}

} // namespace dsfc::ops
