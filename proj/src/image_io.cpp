#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include <png.h>

#include "dsfc/data.hpp"

namespace dsfc {

namespace {

struct Raw8 {
    int64_t h = 0, w = 0, channels = 0;
    std::vector<unsigned char> pixels; // row-major, interleaved
};

bool has_suffix(const std::string& s, const char* suf) {
    const size_t n = std::strlen(suf);
    return s.size() >= n && s.compare(s.size() - n, n, suf) == 0;
}

// ---------------------------------------------------------------- PNG

struct PngReadCloser {
    png_structp p = nullptr;
    png_infop i = nullptr;
    FILE* f = nullptr;
    ~PngReadCloser() {
        if (p) png_destroy_read_struct(&p, i ? &i : nullptr, nullptr);
        if (f) std::fclose(f);
    }
};

Raw8 read_png(const std::string& path) {
    PngReadCloser g;
    g.f = std::fopen(path.c_str(), "rb");
    DSFC_REQUIRE(g.f, "cannot open image: ", path);
    unsigned char sig[8];
    DSFC_REQUIRE(std::fread(sig, 1, 8, g.f) == 8 && !png_sig_cmp(sig, 0, 8),
                 "not a PNG file: ", path);
    g.p = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    DSFC_REQUIRE(g.p, "libpng init failure");
    g.i = png_create_info_struct(g.p);
    DSFC_REQUIRE(g.i, "libpng init failure");
    if (setjmp(png_jmpbuf(g.p))) throw runtime_error(format_msg("PNG decode error: ", path));
    png_init_io(g.p, g.f);
    png_set_sig_bytes(g.p, 8);
    png_read_info(g.p, g.i);

    // Normalize to 8-bit gray or RGB.
    png_set_strip_16(g.p);
    png_set_strip_alpha(g.p);
    if (png_get_color_type(g.p, g.i) == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(g.p);
    if (png_get_color_type(g.p, g.i) == PNG_COLOR_TYPE_GRAY &&
        png_get_bit_depth(g.p, g.i) < 8)
        png_set_expand_gray_1_2_4_to_8(g.p);
    png_read_update_info(g.p, g.i);

    Raw8 out;
    out.h = png_get_image_height(g.p, g.i);
    out.w = png_get_image_width(g.p, g.i);
    out.channels = png_get_channels(g.p, g.i);
    DSFC_REQUIRE(out.channels == 1 || out.channels == 3, "unsupported PNG channel count ",
                 out.channels, ": ", path);
    out.pixels.resize(static_cast<size_t>(out.h * out.w * out.channels));
    std::vector<png_bytep> rows(static_cast<size_t>(out.h));
    for (int64_t y = 0; y < out.h; ++y)
        rows[static_cast<size_t>(y)] = out.pixels.data() + y * out.w * out.channels;
    png_read_image(g.p, rows.data());
    png_read_end(g.p, nullptr);
    return out;
}

struct PngWriteCloser {
    png_structp p = nullptr;
    png_infop i = nullptr;
    FILE* f = nullptr;
    ~PngWriteCloser() {
        if (p) png_destroy_write_struct(&p, i ? &i : nullptr);
        if (f) std::fclose(f);
    }
};

void write_png(const std::string& path, const Raw8& img) {
    PngWriteCloser g;
    g.f = std::fopen(path.c_str(), "wb");
    DSFC_REQUIRE(g.f, "cannot write image: ", path);
    g.p = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    DSFC_REQUIRE(g.p, "libpng init failure");
    g.i = png_create_info_struct(g.p);
    DSFC_REQUIRE(g.i, "libpng init failure");
    if (setjmp(png_jmpbuf(g.p))) throw runtime_error(format_msg("PNG encode error: ", path));
    png_init_io(g.p, g.f);
    png_set_IHDR(g.p, g.i, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(g.p, g.i);
    std::vector<png_bytep> rows(static_cast<size_t>(img.h));
    for (int64_t y = 0; y < img.h; ++y)
        rows[static_cast<size_t>(y)] =
            const_cast<png_bytep>(img.pixels.data() + y * img.w * img.channels);
    png_write_image(g.p, rows.data());
    png_write_end(g.p, nullptr);
}

// ---------------------------------------------------------------- PNM

Raw8 read_pnm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    DSFC_REQUIRE(is.good(), "cannot open image: ", path);
    std::string magic;
    is >> magic;
    DSFC_REQUIRE(magic == "P5" || magic == "P6", "unsupported PNM magic '", magic, "': ", path);
    auto next_int = [&] {
        // Skip whitespace and '#' comment lines between header fields.
        for (;;) {
            const int c = is.peek();
            if (c == '#') {
                std::string line;
                std::getline(is, line);
            } else if (std::isspace(c)) {
                is.get();
            } else {
                break;
            }
        }
        int64_t v = 0;
        is >> v;
        return v;
    };
    Raw8 out;
    out.w = next_int();
    out.h = next_int();
    const int64_t maxval = next_int();
    is.get(); // single whitespace before raster
    DSFC_REQUIRE(is.good() && out.w > 0 && out.h > 0 && maxval == 255,
                 "bad PNM header (need 8-bit): ", path);
    out.channels = magic == "P5" ? 1 : 3;
    out.pixels.resize(static_cast<size_t>(out.h * out.w * out.channels));
    is.read(reinterpret_cast<char*>(out.pixels.data()),
            static_cast<std::streamsize>(out.pixels.size()));
    DSFC_REQUIRE(is.gcount() == static_cast<std::streamsize>(out.pixels.size()),
                 "truncated PNM raster: ", path);
    return out;
}

void write_pnm(const std::string& path, const Raw8& img) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    DSFC_REQUIRE(os.good(), "cannot write image: ", path);
    os << (img.channels == 1 ? "P5" : "P6") << '\n' << img.w << ' ' << img.h << "\n255\n";
    os.write(reinterpret_cast<const char*>(img.pixels.data()),
             static_cast<std::streamsize>(img.pixels.size()));
    DSFC_REQUIRE(os.good(), "write failure: ", path);
}

Raw8 read_raw(const std::string& path) {
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm")) return read_pnm(path);
    if (has_suffix(path, ".png")) return read_png(path);
    throw value_error(format_msg("unsupported image format (want .png/.pgm/.ppm): ", path));
}

void write_raw(const std::string& path, const Raw8& img) {
    if (has_suffix(path, ".pgm") || has_suffix(path, ".ppm")) {
        DSFC_CHECK((img.channels == 1) == has_suffix(path, ".pgm"),
                   "channel count does not match PNM flavor: ", path);
        write_pnm(path, img);
        return;
    }
    if (has_suffix(path, ".png")) {
        write_png(path, img);
        return;
    }
    throw value_error(format_msg("unsupported image format (want .png/.pgm/.ppm): ", path));
}

unsigned char to_byte(double v) {
    const double s = std::lround(v * 255.0);
    return static_cast<unsigned char>(s < 0.0 ? 0.0 : (s > 255.0 ? 255.0 : s));
}

} // namespace

Tensor read_image(const std::string& path) {
    const Raw8 raw = read_raw(path);
    Tensor t(Shape{1, raw.h, raw.w, 3});
    for (int64_t y = 0; y < raw.h; ++y)
        for (int64_t x = 0; x < raw.w; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                const int64_t src = raw.channels == 1 ? 0 : c;
                t.at(0, y, x, c) =
                    raw.pixels[static_cast<size_t>((y * raw.w + x) * raw.channels + src)] / 255.0;
            }
    return t;
}

Tensor read_mask(const std::string& path) {
    const Raw8 raw = read_raw(path);
    Tensor t(Shape{1, raw.h, raw.w, 1});
    for (int64_t y = 0; y < raw.h; ++y)
        for (int64_t x = 0; x < raw.w; ++x) {
            // Multi-channel mask files count as foreground on their first channel.
            const unsigned char v =
                raw.pixels[static_cast<size_t>((y * raw.w + x) * raw.channels)];
            t.at(0, y, x, 0) = v > 127 ? 1.0 : 0.0;
        }
    return t;
}

void write_image(const std::string& path, const Tensor& img) {
    const Shape s = img.shape();
    DSFC_CHECK(s.b == 1 && (s.c == 1 || s.c == 3), "write_image: want (1,H,W,1|3), got ",
               s.str());
    Raw8 raw;
    raw.h = s.h;
    raw.w = s.w;
    raw.channels = s.c;
    raw.pixels.resize(static_cast<size_t>(s.h * s.w * s.c));
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
            for (int64_t c = 0; c < s.c; ++c)
                raw.pixels[static_cast<size_t>((y * s.w + x) * s.c + c)] =
                    to_byte(img.at(0, y, x, c));
    write_raw(path, raw);
}

void write_mask(const std::string& path, const Tensor& mask) {
    const Shape s = mask.shape();
    DSFC_CHECK(s.b == 1 && s.c == 1, "write_mask: want (1,H,W,1), got ", s.str());
    Raw8 raw;
    raw.h = s.h;
    raw.w = s.w;
    raw.channels = 1;
    raw.pixels.resize(static_cast<size_t>(s.h * s.w));
    for (int64_t y = 0; y < s.h; ++y)
        for (int64_t x = 0; x < s.w; ++x)
            raw.pixels[static_cast<size_t>(y * s.w + x)] = mask.at(0, y, x, 0) >= 0.5 ? 255 : 0;
    write_raw(path, raw);
}

} // namespace dsfc
