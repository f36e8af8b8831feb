#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dsfc/autodiff.hpp"

namespace dsfc {

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
    int64_t coords_checked = 0;
    int64_t worst_coord = -1;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    bool ok(double tol) const { return max_rel_err < tol; }
    std::string str() const;
};

struct GradCheckOpts {
    double step = 1e-5;
    int64_t max_coords_per_input = -1; // -1: every coordinate
    uint64_t seed = 7;                 // projection weights + coordinate sampling
};

/// Central-difference check of fn's gradients at the given named inputs.
/// fn's output (any shape) is reduced by a fixed random projection so every
/// output coordinate participates. Relative error per coordinate is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const std::function<Var(std::vector<Var>&)>& fn,
                           const std::vector<std::pair<std::string, Tensor>>& inputs,
                           const GradCheckOpts& opts = {});

} // namespace dsfc
