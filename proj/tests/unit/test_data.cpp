#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "dsfc/data.hpp"
#include "dsfc/rng.hpp"

using namespace dsfc;
namespace fs = std::filesystem;

namespace {

Sample random_sample(int64_t h, int64_t w, uint64_t seed) {
    Rng rng(seed);
    Sample s;
    s.image = Tensor(Shape{1, h, w, 3});
    for (int64_t i = 0; i < s.image.numel(); ++i) s.image[i] = rng.uniform();
    s.mask = Tensor(Shape{1, h, w, 1});
    for (int64_t i = 0; i < s.mask.numel(); ++i) s.mask[i] = rng.bernoulli(0.3) ? 1.0 : 0.0;
    s.meta.source = "rand";
    return s;
}

bool tensors_equal(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

/// Feasible generator settings for a small test canvas: the widest single
/// road must fit under the foreground cap.
SynthSpec tiny_spec(int64_t canvas, uint64_t seed) {
    SynthSpec spec;
    spec.canvas = canvas;
    spec.seed = seed;
    spec.width_max = 3.0;
    spec.fg_cap = 0.15;
    return spec;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("dsfc_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("flips: involutions are bit-exact") {
    const Sample s = random_sample(6, 6, 21);
    for (FlipMode m : {FlipMode::Horizontal, FlipMode::Vertical, FlipMode::Diagonal}) {
        const Sample back = augment_flip(augment_flip(s, m), m);
        CHECK(tensors_equal(back.image, s.image));
        CHECK(tensors_equal(back.mask, s.mask));
    }
}

TEST_CASE("flips: horizontal moves a left-edge road to the right edge") {
    Sample s = random_sample(8, 8, 22);
    s.mask.fill(0.0);
    for (int64_t y = 0; y < 8; ++y) s.mask.at(0, y, 0, 0) = 1.0;
    const Sample f = augment_flip(s, FlipMode::Horizontal);
    for (int64_t y = 0; y < 8; ++y) {
        CHECK(f.mask.at(0, y, 7, 0) == 1.0);
        CHECK(f.mask.at(0, y, 0, 0) == 0.0);
    }
}

TEST_CASE("flips: horizontal then vertical equals 180-degree rotation") {
    const Sample s = random_sample(5, 9, 23);
    const Sample r = augment_flip(augment_flip(s, FlipMode::Horizontal), FlipMode::Vertical);
    for (int64_t y = 0; y < 5; ++y)
        for (int64_t x = 0; x < 9; ++x)
            for (int64_t c = 0; c < 3; ++c)
                CHECK(r.image.at(0, y, x, c) == s.image.at(0, 4 - y, 8 - x, c));
}

TEST_CASE("flips: diagonal is a transpose and needs a square sample") {
    const Sample s = random_sample(7, 7, 24);
    const Sample d = augment_flip(s, FlipMode::Diagonal);
    for (int64_t y = 0; y < 7; ++y)
        for (int64_t x = 0; x < 7; ++x) {
            CHECK(d.mask.at(0, y, x, 0) == s.mask.at(0, x, y, 0));
            for (int64_t c = 0; c < 3; ++c)
                CHECK(d.image.at(0, y, x, c) == s.image.at(0, x, y, c));
        }
    const Sample rect = random_sample(4, 6, 25);
    CHECK_THROWS_AS(augment_flip(rect, FlipMode::Diagonal), value_error);
}

TEST_CASE("flips: augment trail accumulates in order") {
    const Sample s = random_sample(4, 4, 26);
    const Sample f =
        augment_flip(augment_flip(augment_flip(s, FlipMode::Horizontal), FlipMode::Vertical),
                     FlipMode::Diagonal);
    CHECK(f.meta.augment == "hvd");
    CHECK(f.meta.source == "rand");
}

TEST_CASE("rasterize_polyline: matches point-to-segment distance oracle") {
    // One straight diagonal stroke; recompute the capped-distance test per
    // pixel center independently.
    const std::vector<std::array<double, 2>> pts{{2.0, 3.0}, {13.0, 11.0}};
    const double width = 3.0;
    Tensor mask(Shape{1, 16, 16, 1});
    rasterize_polyline(mask, pts, width);
    int64_t on = 0;
    for (int64_t i = 0; i < 16; ++i)
        for (int64_t j = 0; j < 16; ++j) {
            const double py = i + 0.5, px = j + 0.5;
            const double dy = pts[1][0] - pts[0][0], dx = pts[1][1] - pts[0][1];
            double t = ((py - pts[0][0]) * dy + (px - pts[0][1]) * dx) / (dy * dy + dx * dx);
            t = std::clamp(t, 0.0, 1.0);
            const double cy = pts[0][0] + t * dy, cx = pts[0][1] + t * dx;
            const double d = std::hypot(py - cy, px - cx);
            const double want = d <= width / 2.0 ? 1.0 : 0.0;
            CHECK(mask.at(0, i, j, 0) == want);
            on += want == 1.0;
        }
    CHECK(on > 0);       // stroke hit the canvas
    CHECK(on < 16 * 16); // and did not flood it
}

TEST_CASE("rasterize_polyline: vertical stroke fills the expected band") {
    Tensor mask(Shape{1, 8, 8, 1});
    rasterize_polyline(mask, {{0.0, 4.0}, {8.0, 4.0}}, 3.0);
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) {
            const double want = std::abs(j + 0.5 - 4.0) <= 1.5 ? 1.0 : 0.0;
            CHECK(mask.at(0, i, j, 0) == want);
        }
}

TEST_CASE("rasterize_polyline: validation") {
    Tensor mask(Shape{1, 8, 8, 1});
    CHECK_THROWS_AS(rasterize_polyline(mask, {{0.0, 0.0}}, 2.0), value_error);
    CHECK_THROWS_AS(rasterize_polyline(mask, {{0.0, 0.0}, {4.0, 4.0}}, 0.0), value_error);
    Tensor bad(Shape{1, 8, 8, 3});
    CHECK_THROWS_AS(rasterize_polyline(bad, {{0.0, 0.0}, {4.0, 4.0}}, 2.0), value_error);
}

TEST_CASE("synthetic: deterministic, binary, in range, under the cap") {
    const SynthSpec spec = tiny_spec(64, 9);
    const auto a = generate_synthetic(spec, 20);
    const auto b = generate_synthetic(spec, 20);
    REQUIRE(a.size() == 20);
    double fg_total = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        a[i].validate();
        CHECK(tensors_equal(a[i].image, b[i].image));
        CHECK(tensors_equal(a[i].mask, b[i].mask));
        CHECK(a[i].meta.source == "synth-" + std::to_string(i));
        CHECK(a[i].image.shape() == Shape{1, 64, 64, 3});
        double fg = 0.0;
        for (int64_t k = 0; k < a[i].mask.numel(); ++k) fg += a[i].mask[k];
        fg /= static_cast<double>(a[i].mask.numel());
        CHECK(fg <= spec.fg_cap);
        fg_total += fg;
        for (int64_t k = 0; k < a[i].image.numel(); ++k) {
            CHECK(a[i].image[k] >= 0.0);
            CHECK(a[i].image[k] <= 1.0);
        }
    }
    CHECK(fg_total > 0.0); // roads actually get drawn
    SynthSpec other = spec;
    other.seed = 10;
    const auto c = generate_synthetic(other, 1);
    CHECK_FALSE(tensors_equal(c[0].image, a[0].image));
}

TEST_CASE("synthetic: zero roads gives an empty mask") {
    SynthSpec spec = tiny_spec(32, 30);
    spec.roads_min = 0;
    spec.roads_max = 0;
    const auto out = generate_synthetic(spec, 3);
    for (const auto& s : out)
        for (int64_t i = 0; i < s.mask.numel(); ++i) CHECK(s.mask[i] == 0.0);
}

TEST_CASE("synthetic: occlusions darken the image but never the mask") {
    // Occlusions draw from the stream after everything else in a sample, so
    // for the first sample the two runs share an identical prefix: same
    // roads, same base image.
    SynthSpec clear = tiny_spec(48, 31);
    clear.occlusion_count = 0;
    SynthSpec occluded = clear;
    occluded.occlusion_count = 12;
    occluded.occlusion_size = 9.0;
    const auto a = generate_synthetic(clear, 1);
    const auto b = generate_synthetic(occluded, 1);
    CHECK(tensors_equal(a[0].mask, b[0].mask));
    CHECK_FALSE(tensors_equal(a[0].image, b[0].image));
}

TEST_CASE("presets: parser") {
    CHECK(tile_preset_from_string("none") == TilePreset::None);
    CHECK(tile_preset_from_string("resize768") == TilePreset::Resize768);
    CHECK(tile_preset_from_string("quarter") == TilePreset::Quarter);
    CHECK(tile_preset_from_string("ninepatch") == TilePreset::NinePatch);
    CHECK_THROWS_AS(tile_preset_from_string("halves"), value_error);
}

TEST_CASE("presets: none is identity") {
    const Sample s = random_sample(6, 8, 41);
    const auto out = apply_preset(s, TilePreset::None);
    REQUIRE(out.size() == 1);
    CHECK(tensors_equal(out[0].image, s.image));
    CHECK(tensors_equal(out[0].mask, s.mask));
}

TEST_CASE("presets: quarter crops match coordinate oracle bit-exactly") {
    const Sample s = random_sample(10, 14, 42);
    const auto out = apply_preset(s, TilePreset::Quarter);
    REQUIRE(out.size() == 4);
    for (const auto& t : out) {
        CHECK(t.image.shape() == Shape{1, 5, 7, 3});
        CHECK(t.mask.shape() == Shape{1, 5, 7, 1});
        CHECK(t.meta.y0 == t.meta.tile_row * 5);
        CHECK(t.meta.x0 == t.meta.tile_col * 7);
        for (int64_t y = 0; y < 5; ++y)
            for (int64_t x = 0; x < 7; ++x) {
                CHECK(t.mask.at(0, y, x, 0) == s.mask.at(0, t.meta.y0 + y, t.meta.x0 + x, 0));
                for (int64_t c = 0; c < 3; ++c)
                    CHECK(t.image.at(0, y, x, c) ==
                          s.image.at(0, t.meta.y0 + y, t.meta.x0 + x, c));
            }
    }
    // Tiles enumerate the grid row-major.
    CHECK(out[0].meta.tile_row == 0);
    CHECK(out[0].meta.tile_col == 0);
    CHECK(out[3].meta.tile_row == 1);
    CHECK(out[3].meta.tile_col == 1);
    const Sample odd = random_sample(9, 8, 43);
    CHECK_THROWS_AS(apply_preset(odd, TilePreset::Quarter), value_error);
}

TEST_CASE("presets: nine-patch crops land on the right cells") {
    // Source constant per 3x3 cell, so any correct crop+resize yields a
    // constant tile whose value names its cell.
    Sample s;
    s.image = Tensor(Shape{1, 24, 24, 3});
    s.mask = Tensor(Shape{1, 24, 24, 1});
    for (int64_t y = 0; y < 24; ++y)
        for (int64_t x = 0; x < 24; ++x) {
            const int64_t r = y / 8, c = x / 8;
            for (int64_t ch = 0; ch < 3; ++ch)
                s.image.at(0, y, x, ch) = static_cast<double>(r * 3 + c) / 10.0;
            s.mask.at(0, y, x, 0) = (r + c) % 2 == 0 ? 1.0 : 0.0;
        }
    const auto out = apply_preset(s, TilePreset::NinePatch);
    REQUIRE(out.size() == 9);
    for (size_t k = 0; k < 9; ++k) {
        const auto& t = out[k];
        CHECK(t.image.shape() == Shape{1, 512, 512, 3});
        CHECK(t.mask.shape() == Shape{1, 512, 512, 1});
        const int64_t r = static_cast<int64_t>(k) / 3, c = static_cast<int64_t>(k) % 3;
        CHECK(t.meta.tile_row == r);
        CHECK(t.meta.tile_col == c);
        CHECK(t.meta.y0 == r * 8);
        CHECK(t.meta.x0 == c * 8);
        const double want_img = static_cast<double>(r * 3 + c) / 10.0;
        const double want_mask = (r + c) % 2 == 0 ? 1.0 : 0.0;
        for (int64_t i = 0; i < t.image.numel(); ++i)
            CHECK(std::abs(t.image[i] - want_img) < 1e-12);
        for (int64_t i = 0; i < t.mask.numel(); ++i) CHECK(t.mask[i] == want_mask);
    }
    const Sample bad = random_sample(10, 9, 44);
    CHECK_THROWS_AS(apply_preset(bad, TilePreset::NinePatch), value_error);
}

TEST_CASE("presets: resize768 interpolates the image, snaps the mask") {
    const Sample s = random_sample(12, 16, 45);
    const auto out = apply_preset(s, TilePreset::Resize768);
    REQUIRE(out.size() == 1);
    CHECK(out[0].image.shape() == Shape{1, 768, 768, 3});
    CHECK(out[0].mask.shape() == Shape{1, 768, 768, 1});
    for (int64_t i = 0; i < out[0].mask.numel(); ++i) {
        const double v = out[0].mask[i];
        CHECK((v == 0.0 || v == 1.0)); // nearest keeps masks binary
    }
    for (int64_t i = 0; i < out[0].image.numel(); ++i) {
        CHECK(out[0].image[i] >= 0.0);
        CHECK(out[0].image[i] <= 1.0);
    }
}

TEST_CASE("image io: 8-bit png round-trip is lossless") {
    TempDir dir("png");
    Rng rng(51);
    Tensor img(Shape{1, 9, 7, 3});
    for (int64_t i = 0; i < img.numel(); ++i)
        img[i] = static_cast<double>(rng.randint(0, 255)) / 255.0;
    const std::string p = (dir.path / "img.png").string();
    write_image(p, img);
    CHECK(tensors_equal(read_image(p), img));

    Tensor mask(Shape{1, 9, 7, 1});
    for (int64_t i = 0; i < mask.numel(); ++i) mask[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
    const std::string m = (dir.path / "mask.png").string();
    write_mask(m, mask);
    CHECK(tensors_equal(read_mask(m), mask));
}

TEST_CASE("image io: pgm/ppm round-trips and gray replication") {
    TempDir dir("pnm");
    Rng rng(52);
    Tensor img(Shape{1, 5, 6, 3});
    for (int64_t i = 0; i < img.numel(); ++i)
        img[i] = static_cast<double>(rng.randint(0, 255)) / 255.0;
    const std::string p = (dir.path / "img.ppm").string();
    write_image(p, img);
    CHECK(tensors_equal(read_image(p), img));

    // Single-channel image written as gray, read back replicated to RGB.
    Tensor gray(Shape{1, 4, 4, 1});
    for (int64_t i = 0; i < gray.numel(); ++i)
        gray[i] = static_cast<double>(rng.randint(0, 255)) / 255.0;
    const std::string g = (dir.path / "gray.pgm").string();
    write_image(g, gray);
    const Tensor back = read_image(g);
    CHECK(back.shape() == Shape{1, 4, 4, 3});
    for (int64_t y = 0; y < 4; ++y)
        for (int64_t x = 0; x < 4; ++x)
            for (int64_t c = 0; c < 3; ++c)
                CHECK(back.at(0, y, x, c) == gray.at(0, y, x, 0));

    CHECK_THROWS_AS(read_image((dir.path / "missing.ppm").string()), runtime_error);
    CHECK_THROWS_AS(write_image((dir.path / "img.bmp").string(), img), value_error);
}

TEST_CASE("dataset: save then load round-trips within quantization") {
    TempDir dir("roundtrip");
    const SynthSpec spec = tiny_spec(32, 61);
    const auto samples = generate_synthetic(spec, 3);
    save_dataset(dir.path.string(), samples);
    const auto loaded = load_tiles(dir.path.string());
    REQUIRE(loaded.size() == 3);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(loaded[i].meta.source == std::string(4, '0') + "0" + std::to_string(i));
        CHECK(tensors_equal(loaded[i].mask, samples[i].mask)); // binary: exact
        REQUIRE(loaded[i].image.shape() == samples[i].image.shape());
        for (int64_t k = 0; k < loaded[i].image.numel(); ++k)
            CHECK(std::abs(loaded[i].image[k] - samples[i].image[k]) <= 0.5 / 255.0 + 1e-12);
    }
}

TEST_CASE("dataset: loader reports every pairing problem at once") {
    TempDir dir("pairing");
    fs::create_directories(dir.path / "images");
    fs::create_directories(dir.path / "masks");
    Tensor img(Shape{1, 4, 4, 3});
    Tensor mask(Shape{1, 4, 4, 1});
    write_image((dir.path / "images" / "a.png").string(), img);
    write_mask((dir.path / "masks" / "a.png").string(), mask);
    write_image((dir.path / "images" / "orphan1.png").string(), img);
    write_mask((dir.path / "masks" / "orphan2.png").string(), mask);
    try {
        load_tiles(dir.path.string());
        FAIL("expected value_error");
    } catch (const value_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("orphan1.png") != std::string::npos);
        CHECK(msg.find("orphan2.png") != std::string::npos);
        CHECK(msg.find("a.png") == std::string::npos); // the good pair is not blamed
    }
}

TEST_CASE("dataset: loader rejects empty, missing, and mismatched inputs") {
    {
        TempDir dir("empty");
        fs::create_directories(dir.path / "images");
        fs::create_directories(dir.path / "masks");
        CHECK_THROWS_AS(load_tiles(dir.path.string()), value_error);
    }
    {
        TempDir dir("nodirs");
        CHECK_THROWS_AS(load_tiles((dir.path / "nope").string()), value_error);
    }
    {
        TempDir dir("dupstem");
        fs::create_directories(dir.path / "images");
        fs::create_directories(dir.path / "masks");
        Tensor img(Shape{1, 4, 4, 3});
        Tensor mask(Shape{1, 4, 4, 1});
        write_image((dir.path / "images" / "a.png").string(), img);
        write_image((dir.path / "images" / "a.ppm").string(), img);
        write_mask((dir.path / "masks" / "a.png").string(), mask);
        CHECK_THROWS_AS(load_tiles(dir.path.string()), value_error);
    }
    {
        TempDir dir("sizemismatch");
        fs::create_directories(dir.path / "images");
        fs::create_directories(dir.path / "masks");
        Tensor img(Shape{1, 4, 4, 3});
        Tensor mask(Shape{1, 6, 6, 1});
        write_image((dir.path / "images" / "a.png").string(), img);
        write_mask((dir.path / "masks" / "a.png").string(), mask);
        CHECK_THROWS_AS(load_tiles(dir.path.string()), value_error);
    }
}

TEST_CASE("dataset: load_tiles applies presets per pair") {
    TempDir dir("preset");
    const SynthSpec spec = tiny_spec(32, 62);
    save_dataset(dir.path.string(), generate_synthetic(spec, 2));
    const auto out = load_tiles(dir.path.string(), TilePreset::Quarter);
    REQUIRE(out.size() == 8);
    for (const auto& t : out) {
        CHECK(t.image.shape() == Shape{1, 16, 16, 3});
        t.validate();
    }
    CHECK(out[0].meta.source == "000000");
    CHECK(out[4].meta.source == "000001");
    CHECK(out[5].meta.tile_row == 0);
    CHECK(out[5].meta.tile_col == 1);
}
