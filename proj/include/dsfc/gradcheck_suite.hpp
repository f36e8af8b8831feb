#pragma once

#include <string>
#include <vector>

#include "dsfc/gradcheck.hpp"

namespace dsfc {

struct SuiteEntry {
    std::string module;
    double max_rel_err = 0.0;
    int64_t coords = 0; // differentiated coordinates checked
};

/// Module names accepted by run_gradcheck, "all" excluded.
const std::vector<std::string>& gradcheck_modules();

/// Finite-difference check of one module (or every module for "all") on
/// fixed seeded fixtures: gradients w.r.t. the data inputs and, for
/// parameterized blocks, spot-checked parameter coordinates.
std::vector<SuiteEntry> run_gradcheck(const std::string& module);

} // namespace dsfc
