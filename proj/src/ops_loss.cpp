#include <cmath>
#include <memory>

#include "dsfc/ops.hpp"

namespace dsfc::ops {

Var bce_with_logits_mean(const Var& logits, const Tensor& targets) {
    const Shape s = logits.shape();
    DSFC_CHECK(s == targets.shape(), "bce_with_logits_mean: logits ", s.str(),
               " vs targets ", targets.shape().str());
    const int64_t n = targets.numel();
    DSFC_CHECK(n > 0, "bce_with_logits_mean: empty input");
    const double* pz = logits.value().data();
    const double* pt = targets.data();
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double t = pt[i];
        DSFC_CHECK(t == 0.0 || t == 1.0, "bce_with_logits_mean: target at index ", i,
                   " is ", t, ", expected exactly 0 or 1");
        const double z = pz[i];
        // max(z,0) - z*t + log(1 + exp(-|z|))
        total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    }
    Tensor out(Shape{1, 1, 1, 1}, std::vector<double>{total / static_cast<double>(n)});
    auto tcopy = std::make_shared<Tensor>(targets);
    return make_op(std::move(out), {logits}, [logits, tcopy](Node& self) {
        Tensor& gx = logits.node()->ensure_grad();
        const double g = self.grad[0];
        const double* pz = logits.value().data();
        const double* pt = tcopy->data();
        const int64_t n = gx.numel();
        const double invn = 1.0 / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            const double z = pz[i];
            const double sig = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                        : std::exp(z) / (1.0 + std::exp(z));
            gx[i] += g * (sig - pt[i]) * invn;
        }
    });
}

} // namespace dsfc::ops
