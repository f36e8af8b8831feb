#include <array>
#include <cmath>

#include "dsfc/ops.hpp"

namespace dsfc::ops {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

std::array<int64_t, 4> natural_strides(const Shape& s) {
    return {s.h * s.w * s.c, s.w * s.c, s.c, 1};
}

std::array<int64_t, 4> bcast_strides(const Shape& s, const Shape& out) {
    auto st = natural_strides(s);
    std::array<int64_t, 4> r{};
    for (int i = 0; i < 4; ++i) r[i] = (s[i] == out[i]) ? st[i] : 0;
    return r;
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* opname) {
    Shape out;
    int64_t* od[4] = {&out.b, &out.h, &out.w, &out.c};
    for (int i = 0; i < 4; ++i) {
        int64_t da = a[i], db = b[i];
        DSFC_CHECK(da == db || da == 1 || db == 1, opname, ": shapes ", a.str(), " and ",
                   b.str(), " do not broadcast");
        *od[i] = std::max(da, db);
    }
    return out;
}

// Walks the output index space once, handing (out, a, b) flat offsets to fn.
template <typename Fn>
void for_bcast(const Shape& out, const std::array<int64_t, 4>& sa,
               const std::array<int64_t, 4>& sb, Fn&& fn) {
    int64_t o = 0;
    for (int64_t ib = 0; ib < out.b; ++ib)
        for (int64_t ih = 0; ih < out.h; ++ih)
            for (int64_t iw = 0; iw < out.w; ++iw) {
                int64_t base_a = ib * sa[0] + ih * sa[1] + iw * sa[2];
                int64_t base_b = ib * sb[0] + ih * sb[1] + iw * sb[2];
                for (int64_t ic = 0; ic < out.c; ++ic, ++o)
                    fn(o, base_a + ic * sa[3], base_b + ic * sb[3]);
            }
}

// Shared skeleton for broadcasting binary ops. FwdF(a,b)->v; DaF/DbF(a,b)->d.
template <typename FwdF, typename DaF, typename DbF>
Var binary_bcast(const Var& a, const Var& b, const char* name, FwdF fwd, DaF dfda, DbF dfdb) {
    const Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
    Tensor out(out_shape);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (a.shape() == b.shape()) {
        const double* pa = av.data();
        const double* pb = bv.data();
        double* po = out.data();
        const int64_t n = out.numel();
        for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    } else {
        auto sa = bcast_strides(a.shape(), out_shape);
        auto sb = bcast_strides(b.shape(), out_shape);
        for_bcast(out_shape, sa, sb,
                  [&](int64_t o, int64_t ia, int64_t ib) { out[o] = fwd(av[ia], bv[ib]); });
    }
    return make_op(std::move(out), {a, b}, [a, b, dfda, dfdb](Node& self) {
        const Tensor& g = self.grad;
        const Tensor& av = a.value();
        const Tensor& bv = b.value();
        Tensor* ga = a.requires_grad() ? &a.node()->ensure_grad() : nullptr;
        Tensor* gb = b.requires_grad() ? &b.node()->ensure_grad() : nullptr;
        if (a.shape() == b.shape()) {
            const int64_t n = g.numel();
            for (int64_t i = 0; i < n; ++i) {
                if (ga) (*ga)[i] += g[i] * dfda(av[i], bv[i]);
                if (gb) (*gb)[i] += g[i] * dfdb(av[i], bv[i]);
            }
        } else {
            auto sa = bcast_strides(a.shape(), self.value.shape());
            auto sb = bcast_strides(b.shape(), self.value.shape());
            for_bcast(self.value.shape(), sa, sb, [&](int64_t o, int64_t ia, int64_t ib) {
                if (ga) (*ga)[ia] += g[o] * dfda(av[ia], bv[ib]);
                if (gb) (*gb)[ib] += g[o] * dfdb(av[ia], bv[ib]);
            });
        }
    });
}

template <typename FwdF, typename DF>
Var unary(const Var& x, FwdF fwd, DF dfdx) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    const int64_t n = out.numel();
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
    return make_op(std::move(out), {x}, [x, dfdx](Node& self) {
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        const Tensor& xv = x.value();
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * dfdx(xv[i]);
    });
}

} // namespace

Var add(const Var& a, const Var& b) {
    return binary_bcast(
        a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
    return binary_bcast(
        a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
    return binary_bcast(
        a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Var div(const Var& a, const Var& b) {
    return binary_bcast(
        a, b, "div", [](double x, double y) { return x / y; },
        [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Var add_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; });
}

Var mul_scalar(const Var& a, double s) {
    return unary(a, [s](double x) { return x * s; }, [s](double) { return s; });
}

Var rsub_scalar(double s, const Var& a) {
    return unary(a, [s](double x) { return s - x; }, [](double) { return -1.0; });
}

Var sum_axes(const Var& x, bool over_b, bool over_h, bool over_w, bool over_c) {
    const Shape in = x.shape();
    Shape out_shape{over_b ? 1 : in.b, over_h ? 1 : in.h, over_w ? 1 : in.w, over_c ? 1 : in.c};
    Tensor out(out_shape);
    auto so = bcast_strides(out_shape, in); // out walked with input's index space
    const Tensor& xv = x.value();
    for_bcast(in, so, natural_strides(in),
              [&](int64_t, int64_t io, int64_t ix) { out[io] += xv[ix]; });
    return make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        const Shape in = x.shape();
        auto so = bcast_strides(self.value.shape(), in);
        for_bcast(in, so, natural_strides(in),
                  [&](int64_t, int64_t io, int64_t ix) { gx[ix] += g[io]; });
    });
}

Var mean_axes(const Var& x, bool over_b, bool over_h, bool over_w, bool over_c) {
    const Shape in = x.shape();
    double count = 1.0;
    if (over_b) count *= static_cast<double>(in.b);
    if (over_h) count *= static_cast<double>(in.h);
    if (over_w) count *= static_cast<double>(in.w);
    if (over_c) count *= static_cast<double>(in.c);
    return mul_scalar(sum_axes(x, over_b, over_h, over_w, over_c), 1.0 / count);
}

Var sum_all(const Var& x) { return sum_axes(x, true, true, true, true); }

Var relu(const Var& x) {
    return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
                 [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(const Var& x) {
    return unary(
        x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
        [](double v) {
            double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            return phi + v * kInvSqrt2Pi * std::exp(-0.5 * v * v);
        });
}

Var sigmoid(const Var& x) {
    auto sig = [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v))
                                              : std::exp(v) / (1.0 + std::exp(v)); };
    return unary(x, sig, [sig](double v) {
        double s = sig(v);
        return s * (1.0 - s);
    });
}

Var sqrt_op(const Var& x) {
    return unary(x, [](double v) { return std::sqrt(v); },
                 [](double v) { return v > 0.0 ? 0.5 / std::sqrt(v) : 0.0; });
}

Var softmax(const Var& x, int axis) {
    DSFC_CHECK(axis >= 0 && axis < 4, "softmax: axis must be in [0,4), got ", axis);
    const Shape in = x.shape();
    const int64_t n_axis = in[axis];
    auto st = natural_strides(in);
    const int64_t stride = st[axis];
    // Enumerate lines: all indices with the softmax axis fixed at 0.
    Shape line_space = in;
    int64_t* dims[4] = {&line_space.b, &line_space.h, &line_space.w, &line_space.c};
    *dims[axis] = 1;
    const Tensor& xv = x.value();
    Tensor out(in);
    for_bcast(line_space, st, st, [&](int64_t, int64_t base, int64_t) {
        double mx = xv[base];
        for (int64_t i = 1; i < n_axis; ++i) mx = std::max(mx, xv[base + i * stride]);
        double denom = 0.0;
        for (int64_t i = 0; i < n_axis; ++i) {
            double e = std::exp(xv[base + i * stride] - mx);
            out[base + i * stride] = e;
            denom += e;
        }
        for (int64_t i = 0; i < n_axis; ++i) out[base + i * stride] /= denom;
    });
    return make_op(std::move(out), {x}, [x, axis](Node& self) {
        const Shape in = x.shape();
        const int64_t n_axis = in[axis];
        auto st = natural_strides(in);
        const int64_t stride = st[axis];
        Shape line_space = in;
        int64_t* dims[4] = {&line_space.b, &line_space.h, &line_space.w, &line_space.c};
        *dims[axis] = 1;
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        const Tensor& s = self.value;
        for_bcast(line_space, st, st, [&](int64_t, int64_t base, int64_t) {
            double dot = 0.0;
            for (int64_t i = 0; i < n_axis; ++i)
                dot += g[base + i * stride] * s[base + i * stride];
            for (int64_t i = 0; i < n_axis; ++i) {
                int64_t k = base + i * stride;
                gx[k] += s[k] * (g[k] - dot);
            }
        });
    });
}

Var reshape(const Var& x, Shape s) {
    Tensor out = x.value().reshaped(s);
    return make_op(std::move(out), {x}, [x](Node& self) {
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        const int64_t n = g.numel();
        for (int64_t i = 0; i < n; ++i) gx[i] += g[i];
    });
}

Var to_tokens(const Var& x) {
    const Shape s = x.shape();
    return reshape(x, Shape{s.b, s.h * s.w, 1, s.c});
}

Var to_feature_map(const Var& x, int64_t h, int64_t w) {
    const Shape s = x.shape();
    DSFC_CHECK(s.h == h * w && s.w == 1, "to_feature_map: token matrix ", s.str(),
               " does not hold ", h, "x", w, " positions");
    return reshape(x, Shape{s.b, h, w, s.c});
}

Var concat_channels(const Var& a, const Var& b) {
    const Shape sa = a.shape(), sb = b.shape();
    DSFC_CHECK(sa.b == sb.b && sa.h == sb.h && sa.w == sb.w,
               "concat_channels: spatial/batch mismatch ", sa.str(), " vs ", sb.str());
    Shape out_shape{sa.b, sa.h, sa.w, sa.c + sb.c};
    Tensor out(out_shape);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const int64_t pos = sa.b * sa.h * sa.w;
    for (int64_t p = 0; p < pos; ++p) {
        double* dst = out.data() + p * out_shape.c;
        const double* pa = av.data() + p * sa.c;
        const double* pb = bv.data() + p * sb.c;
        for (int64_t c = 0; c < sa.c; ++c) dst[c] = pa[c];
        for (int64_t c = 0; c < sb.c; ++c) dst[sa.c + c] = pb[c];
    }
    return make_op(std::move(out), {a, b}, [a, b](Node& self) {
        const Shape sa = a.shape(), sb = b.shape();
        const Shape so = self.value.shape();
        const Tensor& g = self.grad;
        Tensor* ga = a.requires_grad() ? &a.node()->ensure_grad() : nullptr;
        Tensor* gb = b.requires_grad() ? &b.node()->ensure_grad() : nullptr;
        const int64_t pos = sa.b * sa.h * sa.w;
        for (int64_t p = 0; p < pos; ++p) {
            const double* gp = g.data() + p * so.c;
            if (ga) {
                double* pa = ga->data() + p * sa.c;
                for (int64_t c = 0; c < sa.c; ++c) pa[c] += gp[c];
            }
            if (gb) {
                double* pb = gb->data() + p * sb.c;
                for (int64_t c = 0; c < sb.c; ++c) pb[c] += gp[sa.c + c];
            }
        }
    });
}

Var slice_channels(const Var& x, int64_t c0, int64_t c1) {
    const Shape s = x.shape();
    DSFC_CHECK(0 <= c0 && c0 < c1 && c1 <= s.c, "slice_channels: bad range [", c0, ",", c1,
               ") for ", s.str());
    Shape out_shape{s.b, s.h, s.w, c1 - c0};
    Tensor out(out_shape);
    const Tensor& xv = x.value();
    const int64_t pos = s.b * s.h * s.w;
    for (int64_t p = 0; p < pos; ++p) {
        const double* src = xv.data() + p * s.c + c0;
        double* dst = out.data() + p * out_shape.c;
        for (int64_t c = 0; c < out_shape.c; ++c) dst[c] = src[c];
    }
    return make_op(std::move(out), {x}, [x, c0](Node& self) {
        const Shape s = x.shape();
        const Shape so = self.value.shape();
        Tensor& gx = x.node()->ensure_grad();
        const Tensor& g = self.grad;
        const int64_t pos = s.b * s.h * s.w;
        for (int64_t p = 0; p < pos; ++p) {
            double* dst = gx.data() + p * s.c + c0;
            const double* gp = g.data() + p * so.c;
            for (int64_t c = 0; c < so.c; ++c) dst[c] += gp[c];
        }
    });
}

} // namespace dsfc::ops
