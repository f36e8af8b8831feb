#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>

#include "dsfc/data.hpp"
#include "dsfc/ops.hpp"

namespace fs = std::filesystem;

namespace dsfc {

namespace {

Tensor flip_spatial(const Tensor& t, FlipMode mode) {
    const Shape s = t.shape();
    if (mode == FlipMode::Diagonal) {
        DSFC_CHECK(s.h == s.w, "diagonal flip needs a square sample, got ", s.str());
        Tensor out(Shape{s.b, s.w, s.h, s.c});
        for (int64_t y = 0; y < s.h; ++y)
            for (int64_t x = 0; x < s.w; ++x)
                for (int64_t c = 0; c < s.c; ++c) out.at(0, x, y, c) = t.at(0, y, x, c);
        return out;
    }
    Tensor out(s);
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x) {
            const int64_t sy = mode == FlipMode::Vertical ? s.h - 1 - y : y;
            const int64_t sx = mode == FlipMode::Horizontal ? s.w - 1 - x : x;
            for (int64_t c = 0; c < s.c; ++c) out.at(0, y, x, c) = t.at(0, sy, sx, c);
        }
    return out;
}

} // namespace

Sample augment_flip(const Sample& s, FlipMode mode) {
    Sample out;
    out.image = flip_spatial(s.image, mode);
    out.mask = flip_spatial(s.mask, mode);
    out.meta = s.meta;
    out.meta.augment += mode == FlipMode::Horizontal ? "h"
                        : mode == FlipMode::Vertical ? "v"
                                                     : "d";
    return out;
}

TilePreset tile_preset_from_string(const std::string& name) {
    if (name == "none") return TilePreset::None;
    if (name == "resize768") return TilePreset::Resize768;
    if (name == "quarter") return TilePreset::Quarter;
    if (name == "ninepatch") return TilePreset::NinePatch;
    throw value_error("unknown tile preset '" + name +
                      "' (want none|resize768|quarter|ninepatch)");
}

namespace {

Tensor crop(const Tensor& t, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    const Shape s = t.shape();
    Tensor out(Shape{s.b, h, w, s.c});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
            for (int64_t c = 0; c < s.c; ++c) out.at(0, y, x, c) = t.at(0, y0 + y, x0 + x, c);
    return out;
}

Sample resized(const Sample& s, int64_t side) {
    Sample out;
    out.image = ops::bilinear_resize(s.image, side, side);
    out.mask = ops::nearest_resize(s.mask, side, side);
    out.meta = s.meta;
    return out;
}

} // namespace

std::vector<Sample> apply_preset(const Sample& s, TilePreset p) {
    const Shape si = s.image.shape();
    switch (p) {
    case TilePreset::None: return {s};
    case TilePreset::Resize768: return {resized(s, 768)};
    case TilePreset::Quarter: {
        DSFC_CHECK(si.h % 2 == 0 && si.w % 2 == 0,
                   "quarter preset needs even dimensions, got ", si.str());
        const int64_t h = si.h / 2, w = si.w / 2;
        std::vector<Sample> out;
        for (int64_t r = 0; r < 2; ++r)
            for (int64_t c = 0; c < 2; ++c) {
                Sample t;
                t.image = crop(s.image, r * h, c * w, h, w);
                t.mask = crop(s.mask, r * h, c * w, h, w);
                t.meta = s.meta;
                t.meta.tile_row = r;
                t.meta.tile_col = c;
                t.meta.y0 = s.meta.y0 + r * h;
                t.meta.x0 = s.meta.x0 + c * w;
                out.push_back(std::move(t));
            }
        return out;
    }
    case TilePreset::NinePatch: {
        DSFC_CHECK(si.h % 3 == 0 && si.w % 3 == 0,
                   "nine-patch preset needs dimensions divisible by 3, got ", si.str());
        const int64_t h = si.h / 3, w = si.w / 3;
        std::vector<Sample> out;
        for (int64_t r = 0; r < 3; ++r)
            for (int64_t c = 0; c < 3; ++c) {
                Sample t;
                t.image = crop(s.image, r * h, c * w, h, w);
                t.mask = crop(s.mask, r * h, c * w, h, w);
                t.meta = s.meta;
                t.meta.tile_row = r;
                t.meta.tile_col = c;
                t.meta.y0 = s.meta.y0 + r * h;
                t.meta.x0 = s.meta.x0 + c * w;
                out.push_back(resized(t, 512));
            }
        return out;
    }
    }
    throw value_error("apply_preset: bad preset");
}

namespace {

bool known_ext(const std::string& ext) {
    return ext == ".png" || ext == ".pgm" || ext == ".ppm";
}

/// stem -> filename for every readable image in a directory; duplicate
/// stems (same name, two extensions) are collected as errors.
std::map<std::string, std::string> scan_dir(const fs::path& dir,
                                            std::vector<std::string>& errors) {
    std::map<std::string, std::string> out;
    if (!fs::is_directory(dir)) {
        errors.push_back("missing directory: " + dir.string());
        return out;
    }
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string name = e.path().filename().string();
        if (!known_ext(e.path().extension().string())) continue;
        const std::string stem = e.path().stem().string();
        auto [it, fresh] = out.emplace(stem, name);
        if (!fresh)
            errors.push_back("duplicate stem in " + dir.string() + ": " + it->second +
                             " vs " + name);
    }
    return out;
}

} // namespace

std::vector<Sample> load_tiles(const std::string& root, TilePreset p) {
    const fs::path images = fs::path(root) / "images";
    const fs::path masks = fs::path(root) / "masks";
    std::vector<std::string> errors;
    const auto img_by_stem = scan_dir(images, errors);
    const auto mask_by_stem = scan_dir(masks, errors);
    for (const auto& [stem, name] : img_by_stem)
        if (!mask_by_stem.count(stem)) errors.push_back("image without mask: " + name);
    for (const auto& [stem, name] : mask_by_stem)
        if (!img_by_stem.count(stem)) errors.push_back("mask without image: " + name);
    if (errors.empty() && img_by_stem.empty()) errors.push_back("no tiles under " + root);
    if (!errors.empty()) {
        std::ostringstream os;
        os << "load_tiles(" << root << "):";
        for (const auto& e : errors) os << "\n  " << e;
        throw value_error(os.str());
    }

    std::vector<Sample> out;
    for (const auto& [stem, name] : img_by_stem) { // std::map: stem-sorted
        Sample s;
        s.image = read_image((images / name).string());
        s.mask = read_mask((masks / mask_by_stem.at(stem)).string());
        const Shape si = s.image.shape(), sm = s.mask.shape();
        DSFC_CHECK(si.h == sm.h && si.w == sm.w, "load_tiles: ", name, " image ",
                   si.str(), " vs mask ", sm.str());
        s.meta.source = stem;
        for (auto& t : apply_preset(s, p)) out.push_back(std::move(t));
    }
    return out;
}

void save_dataset(const std::string& root, const std::vector<Sample>& samples) {
    DSFC_CHECK(!samples.empty(), "save_dataset: no samples");
    const fs::path images = fs::path(root) / "images";
    const fs::path masks = fs::path(root) / "masks";
    fs::create_directories(images);
    fs::create_directories(masks);
    for (size_t i = 0; i < samples.size(); ++i) {
        char stem[16];
        std::snprintf(stem, sizeof(stem), "%06zu", i);
        write_image((images / (std::string(stem) + ".png")).string(), samples[i].image);
        write_mask((masks / (std::string(stem) + ".png")).string(), samples[i].mask);
    }
}

} // namespace dsfc
