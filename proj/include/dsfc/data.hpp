#pragma once

#include <array>
#include <string>
#include <vector>

#include "dsfc/config.hpp"
#include "dsfc/tensor.hpp"

namespace dsfc {

struct SampleMeta {
    std::string source;
    int64_t tile_row = 0, tile_col = 0; // grid position under a tiling preset
    int64_t y0 = 0, x0 = 0;             // crop origin in source pixels
    std::string augment;                // applied flips, in order ("hv", "d", ...)
};

/// One image/mask pair. image: (1,H,W,3) in [0,1]; mask: (1,H,W,1) in {0,1}.
struct Sample {
    Tensor image;
    Tensor mask;
    SampleMeta meta;

    void validate() const;
};

enum class FlipMode { Horizontal, Vertical, Diagonal };

/// Identical transform on image and mask; diagonal is a spatial transpose
/// and requires a square sample.
Sample augment_flip(const Sample& s, FlipMode mode);

/// Stamp mask pixels within width/2 of the polyline (pixel centers at
/// (i+0.5, j+0.5)) to 1. Points are (y, x) in pixel coordinates.
void rasterize_polyline(Tensor& mask, const std::vector<std::array<double, 2>>& pts,
                        double width);

/// Procedural rural scenes: textured background, 1..k smooth edge-to-edge
/// roads with exact masks, occlusion blobs painted on the image only.
/// Deterministic in spec.seed; every mask's foreground ratio <= spec.fg_cap.
std::vector<Sample> generate_synthetic(const SynthSpec& spec, int n);

/// Ingestion protocols for tile directories.
enum class TilePreset {
    None,      // as stored
    Resize768, // resize to 768x768 (bilinear image, nearest mask)
    Quarter,   // split into four half-size patches
    NinePatch, // 3x3 grid of crops, each resized to 512x512
};
TilePreset tile_preset_from_string(const std::string& name);

std::vector<Sample> apply_preset(const Sample& s, TilePreset p);

/// Load <root>/images/<stem>.<ext> + <root>/masks/<stem>.<ext> pairs,
/// binarize masks at >127, apply the preset. Unpaired or unreadable files
/// are an error listing every offender.
std::vector<Sample> load_tiles(const std::string& root, TilePreset p = TilePreset::None);

/// Write a dataset directory in the same layout (PNG files).
void save_dataset(const std::string& root, const std::vector<Sample>& samples);

// ---- 8-bit image IO (.png via libpng, .pgm/.ppm native) ----

Tensor read_image(const std::string& path); // (1,H,W,3) in [0,1]; gray replicated
Tensor read_mask(const std::string& path);  // (1,H,W,1) in {0,1}, foreground > 127
void write_image(const std::string& path, const Tensor& img); // (1,H,W,3) or (1,H,W,1)
void write_mask(const std::string& path, const Tensor& mask); // (1,H,W,1) -> 0/255 gray

} // namespace dsfc
