#include <cmath>

#include "dsfc/ops.hpp"

namespace dsfc::ops {

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Shape xs = x.shape();
    DSFC_CHECK((gamma.shape() == Shape{1, 1, 1, xs.c} && beta.shape() == Shape{1, 1, 1, xs.c}),
               "layer_norm: gamma/beta must be (1,1,1,", xs.c, ")");
    const int64_t pos = xs.b * xs.h * xs.w;
    const int64_t C = xs.c;
    Tensor out(xs);
    {
        const double* px = x.value().data();
        const double* pg = gamma.value().data();
        const double* pb = beta.value().data();
        double* po = out.data();
        for (int64_t p = 0; p < pos; ++p) {
            const double* xp = px + p * C;
            double* op = po + p * C;
            double mean = 0.0;
            for (int64_t c = 0; c < C; ++c) mean += xp[c];
            mean /= static_cast<double>(C);
            double var = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                double d = xp[c] - mean;
                var += d * d;
            }
            var /= static_cast<double>(C);
            const double r = 1.0 / std::sqrt(var + eps);
            for (int64_t c = 0; c < C; ++c) op[c] = (xp[c] - mean) * r * pg[c] + pb[c];
        }
    }
    return make_op(std::move(out), {x, gamma, beta}, [x, gamma, beta, eps](Node& self) {
        const Shape xs = x.shape();
        const int64_t pos = xs.b * xs.h * xs.w;
        const int64_t C = xs.c;
        const double invC = 1.0 / static_cast<double>(C);
        const double* px = x.value().data();
        const double* pgam = gamma.value().data();
        const double* pg = self.grad.data();
        double* gx = x.requires_grad() ? x.node()->ensure_grad().data() : nullptr;
        double* ggam = gamma.requires_grad() ? gamma.node()->ensure_grad().data() : nullptr;
        double* gbet = beta.requires_grad() ? beta.node()->ensure_grad().data() : nullptr;
        std::vector<double> xhat(C);
        for (int64_t p = 0; p < pos; ++p) {
            const double* xp = px + p * C;
            const double* gp = pg + p * C;
            double mean = 0.0;
            for (int64_t c = 0; c < C; ++c) mean += xp[c];
            mean *= invC;
            double var = 0.0;
            for (int64_t c = 0; c < C; ++c) {
                double d = xp[c] - mean;
                var += d * d;
            }
            var *= invC;
            const double r = 1.0 / std::sqrt(var + eps);
            for (int64_t c = 0; c < C; ++c) xhat[c] = (xp[c] - mean) * r;
            if (ggam)
                for (int64_t c = 0; c < C; ++c) ggam[c] += gp[c] * xhat[c];
            if (gbet)
                for (int64_t c = 0; c < C; ++c) gbet[c] += gp[c];
            if (gx) {
                // dxhat = g*gamma; dx = r*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
                double m1 = 0.0, m2 = 0.0;
                for (int64_t c = 0; c < C; ++c) {
                    double dh = gp[c] * pgam[c];
                    m1 += dh;
                    m2 += dh * xhat[c];
                }
                m1 *= invC;
                m2 *= invC;
                double* gxp = gx + p * C;
                for (int64_t c = 0; c < C; ++c)
                    gxp[c] += r * (gp[c] * pgam[c] - m1 - xhat[c] * m2);
            }
        }
    });
}

} // namespace dsfc::ops
