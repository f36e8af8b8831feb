#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsfc {

/// One accounted computation. Formulas per kind:
///   conv:        2 * kh * kw * (Cin/groups) * Cout * Hout * Wout * B
///   tconv:       2 * s^2 * Cin * Cout * Hin * Win * B
///   attention:   4 * Nq * Nkv * C * B  (scores + values)  +  heads * Nq * Nkv * B (softmax)
///   norm:        1 op per input element (layer norm, GRN)
///   pool:        1 op per input element (max pool, GAP)
///   act:         1 op per element (GELU, ReLU, sigmoid)
///   elementwise: 1 op per element per arithmetic pass (residual adds, gates, Eq.-3 residual)
/// Biases are not counted.
struct FlopRecord {
    std::string path;
    std::string kind;
    int64_t flops = 0;
};

struct FlopsSheet {
    std::vector<FlopRecord> records;

    void add(std::string path, std::string kind, int64_t flops) {
        records.push_back({std::move(path), std::move(kind), flops});
    }
    int64_t total() const {
        int64_t t = 0;
        for (const auto& r : records) t += r.flops;
        return t;
    }
    int64_t total_of(const std::string& kind) const {
        int64_t t = 0;
        for (const auto& r : records)
            if (r.kind == kind) t += r.flops;
        return t;
    }
};

} // namespace dsfc
