#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "dsfc/config.hpp"
#include "dsfc/layers.hpp"

namespace dsfc {

/// Versioned checkpoint container: serialized ModelConfig, canonical
/// parameter paths with shape-tagged double arrays, and named opaque extra
/// sections (optimizer state, RNG streams, training progress).
/// Round-trips are bit-identical.
struct LoadedCheckpoint {
    uint32_t version = 0;
    ModelConfig config;
    std::vector<std::pair<std::string, Tensor>> params;
    std::map<std::string, std::string> extras;
};

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& ps,
                     const std::map<std::string, std::string>& extras = {});

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Copy loaded arrays into a built model, matching by path and verifying
/// shapes; every store entry must be present in the checkpoint.
void apply_params(ParamStore& ps, const std::vector<std::pair<std::string, Tensor>>& params);

} // namespace dsfc
