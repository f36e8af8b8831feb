#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dsfc/common.hpp"

namespace dsfc {

/// Shape of a rank-4 feature map, axes (batch, height, width, channels).
/// Lower-rank data (token matrices, channel vectors, scalars) embeds by
/// setting the unused axes to 1.
struct Shape {
    int64_t b = 1;
    int64_t h = 1;
    int64_t w = 1;
    int64_t c = 1;

    int64_t numel() const { return b * h * w * c; }
    int64_t operator[](int i) const { return i == 0 ? b : i == 1 ? h : i == 2 ? w : c; }
    bool operator==(const Shape& o) const { return b == o.b && h == o.h && w == o.w && c == o.c; }
    bool operator!=(const Shape& o) const { return !(*this == o); }

    std::string str() const {
        return format_msg("(", b, ",", h, ",", w, ",", c, ")");
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape_(s), data_(static_cast<size_t>(s.numel()), fill) {
        DSFC_CHECK(s.b >= 1 && s.h >= 1 && s.w >= 1 && s.c >= 1, "invalid tensor shape ", s.str());
    }
    Tensor(Shape s, std::vector<double> data) : shape_(s), data_(std::move(data)) {
        DSFC_CHECK(static_cast<int64_t>(data_.size()) == s.numel(),
                   "data size ", data_.size(), " does not match shape ", s.str());
    }

    const Shape& shape() const { return shape_; }
    int64_t numel() const { return shape_.numel(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    int64_t index(int64_t b, int64_t h, int64_t w, int64_t c) const {
        return ((b * shape_.h + h) * shape_.w + w) * shape_.c + c;
    }
    double& at(int64_t b, int64_t h, int64_t w, int64_t c) { return data_[index(b, h, w, c)]; }
    double at(int64_t b, int64_t h, int64_t w, int64_t c) const { return data_[index(b, h, w, c)]; }
    double& operator[](int64_t i) { return data_[i]; }
    double operator[](int64_t i) const { return data_[i]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    /// Same data, new shape; element count must match.
    Tensor reshaped(Shape s) const {
        DSFC_CHECK(s.numel() == numel(), "reshape ", shape_.str(), " -> ", s.str(), " changes element count");
        Tensor out = *this;
        out.shape_ = s;
        return out;
    }

    bool all_finite() const;

private:
    Shape shape_;
    std::vector<double> data_;
};

Tensor zeros_like(const Tensor& t);
Tensor full(Shape s, double v);

} // namespace dsfc
