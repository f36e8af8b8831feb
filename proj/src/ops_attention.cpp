#include <cmath>
#include <memory>

#include "dsfc/ops.hpp"

namespace dsfc::ops {

namespace {
thread_local std::vector<Tensor>* g_attention_probe = nullptr;
}

void set_attention_probe(std::vector<Tensor>* sink) { g_attention_probe = sink; }

Var multi_head_attention(const Var& q, const Var& k, const Var& v, int heads) {
    const Shape qs = q.shape();
    const Shape ks = k.shape();
    const Shape vs = v.shape();
    DSFC_CHECK(qs.w == 1 && ks.w == 1 && vs.w == 1,
               "multi_head_attention: expects token matrices (B,N,1,C)");
    DSFC_CHECK(qs.b == ks.b && qs.b == vs.b, "multi_head_attention: batch mismatch");
    DSFC_CHECK(qs.c == ks.c && qs.c == vs.c, "multi_head_attention: model dim mismatch");
    DSFC_CHECK(ks.h == vs.h, "multi_head_attention: k and v token counts differ");
    DSFC_CHECK(heads >= 1 && qs.c % heads == 0, "multi_head_attention: model dim ", qs.c,
               " not divisible by ", heads, " heads");
    const int64_t B = qs.b, Nq = qs.h, Nkv = ks.h, C = qs.c, H = heads;
    const int64_t dk = C / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    // Softmax probabilities, kept for the backward pass (and the probe).
    auto probs = std::make_shared<Tensor>(Shape{B, H, Nq, Nkv});
    Tensor out(qs);
    {
        const double* pq = q.value().data();
        const double* pk = k.value().data();
        const double* pv = v.value().data();
        double* pp = probs->data();
        double* po = out.data();
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < H; ++h) {
                const int64_t co = h * dk;
                for (int64_t i = 0; i < Nq; ++i) {
                    double* prow = pp + ((b * H + h) * Nq + i) * Nkv;
                    const double* qi = pq + (b * Nq + i) * C + co;
                    double mx = -std::numeric_limits<double>::infinity();
                    for (int64_t j = 0; j < Nkv; ++j) {
                        const double* kj = pk + (b * Nkv + j) * C + co;
                        double dot = 0.0;
                        for (int64_t d = 0; d < dk; ++d) dot += qi[d] * kj[d];
                        prow[j] = dot * scale;
                        mx = std::max(mx, prow[j]);
                    }
                    double denom = 0.0;
                    for (int64_t j = 0; j < Nkv; ++j) {
                        prow[j] = std::exp(prow[j] - mx);
                        denom += prow[j];
                    }
                    double* oi = po + (b * Nq + i) * C + co;
                    for (int64_t d = 0; d < dk; ++d) oi[d] = 0.0;
                    for (int64_t j = 0; j < Nkv; ++j) {
                        prow[j] /= denom;
                        const double* vj = pv + (b * Nkv + j) * C + co;
                        const double pij = prow[j];
                        for (int64_t d = 0; d < dk; ++d) oi[d] += pij * vj[d];
                    }
                }
            }
    }
    if (g_attention_probe) g_attention_probe->push_back(*probs);

    return make_op(std::move(out), {q, k, v}, [q, k, v, heads, probs, scale](Node& self) {
        const Shape qs = q.shape();
        const Shape ks = k.shape();
        const int64_t B = qs.b, Nq = qs.h, Nkv = ks.h, C = qs.c, H = heads;
        const int64_t dk = C / H;
        const double* pq = q.value().data();
        const double* pk = k.value().data();
        const double* pv = v.value().data();
        const double* pp = probs->data();
        const double* pg = self.grad.data();
        double* gq = q.requires_grad() ? q.node()->ensure_grad().data() : nullptr;
        double* gk = k.requires_grad() ? k.node()->ensure_grad().data() : nullptr;
        double* gv = v.requires_grad() ? v.node()->ensure_grad().data() : nullptr;
        std::vector<double> dp(Nkv);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t h = 0; h < H; ++h) {
                const int64_t co = h * dk;
                for (int64_t i = 0; i < Nq; ++i) {
                    const double* prow = pp + ((b * H + h) * Nq + i) * Nkv;
                    const double* gi = pg + (b * Nq + i) * C + co;
                    // dV[j] += p[i,j] * dOut[i]; dP[i,j] = dOut[i] . V[j]
                    for (int64_t j = 0; j < Nkv; ++j) {
                        const double* vj = pv + (b * Nkv + j) * C + co;
                        double dot = 0.0;
                        for (int64_t d = 0; d < dk; ++d) dot += gi[d] * vj[d];
                        dp[j] = dot;
                        if (gv) {
                            double* gvj = gv + (b * Nkv + j) * C + co;
                            const double pij = prow[j];
                            for (int64_t d = 0; d < dk; ++d) gvj[d] += pij * gi[d];
                        }
                    }
                    // softmax backward: dS = P .* (dP - sum_j dP*P), then scale
                    double dot = 0.0;
                    for (int64_t j = 0; j < Nkv; ++j) dot += dp[j] * prow[j];
                    const double* qi = pq + (b * Nq + i) * C + co;
                    double* gqi = gq ? gq + (b * Nq + i) * C + co : nullptr;
                    for (int64_t j = 0; j < Nkv; ++j) {
                        const double ds = prow[j] * (dp[j] - dot) * scale;
                        const double* kj = pk + (b * Nkv + j) * C + co;
                        if (gqi)
                            for (int64_t d = 0; d < dk; ++d) gqi[d] += ds * kj[d];
                        if (gk) {
                            double* gkj = gk + (b * Nkv + j) * C + co;
                            for (int64_t d = 0; d < dk; ++d) gkj[d] += ds * qi[d];
                        }
                    }
                }
            }
    });
}

} // namespace dsfc::ops
