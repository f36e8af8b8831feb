#include "dsfc/tensor.hpp"

#include <cmath>

namespace dsfc {

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor zeros_like(const Tensor& t) { return Tensor(t.shape()); }

Tensor full(Shape s, double v) { return Tensor(s, v); }

} // namespace dsfc
