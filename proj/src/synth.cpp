#include <algorithm>
#include <cmath>

#include "dsfc/data.hpp"
#include "dsfc/ops.hpp"
#include "dsfc/rng.hpp"

namespace dsfc {

void Sample::validate() const {
    const Shape si = image.shape(), sm = mask.shape();
    DSFC_CHECK(si.b == 1 && si.c == 3, "sample image: want (1,H,W,3), got ", si.str());
    DSFC_CHECK(sm.b == 1 && sm.c == 1, "sample mask: want (1,H,W,1), got ", sm.str());
    DSFC_CHECK(si.h == sm.h && si.w == sm.w, "sample: image ", si.str(), " vs mask ",
               sm.str());
    for (int64_t i = 0; i < mask.numel(); ++i)
        DSFC_CHECK(mask[i] == 0.0 || mask[i] == 1.0, "sample: non-binary mask value ", mask[i]);
}

void rasterize_polyline(Tensor& mask, const std::vector<std::array<double, 2>>& pts,
                        double width) {
    DSFC_CHECK(mask.shape().b == 1 && mask.shape().c == 1, "rasterize_polyline: want (1,H,W,1)");
    DSFC_CHECK(pts.size() >= 2, "rasterize_polyline: need at least two points");
    DSFC_CHECK(width > 0.0, "rasterize_polyline: width must be positive");
    const int64_t H = mask.shape().h, W = mask.shape().w;
    const double r = width / 2.0;
    for (size_t k = 0; k + 1 < pts.size(); ++k) {
        const double ay = pts[k][0], ax = pts[k][1];
        const double by = pts[k + 1][0], bx = pts[k + 1][1];
        const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(ay, by) - r - 1)));
        const int64_t y_hi = std::min<int64_t>(H - 1, static_cast<int64_t>(std::ceil(std::max(ay, by) + r + 1)));
        const int64_t x_lo = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(ax, bx) - r - 1)));
        const int64_t x_hi = std::min<int64_t>(W - 1, static_cast<int64_t>(std::ceil(std::max(ax, bx) + r + 1)));
        const double dy = by - ay, dx = bx - ax;
        const double len2 = dy * dy + dx * dx;
        for (int64_t i = y_lo; i <= y_hi; ++i)
            for (int64_t j = x_lo; j <= x_hi; ++j) {
                const double py = static_cast<double>(i) + 0.5;
                const double px = static_cast<double>(j) + 0.5;
                double t = len2 > 0.0 ? ((py - ay) * dy + (px - ax) * dx) / len2 : 0.0;
                t = std::clamp(t, 0.0, 1.0);
                const double cy = ay + t * dy, cx = ax + t * dx;
                const double d2 = (py - cy) * (py - cy) + (px - cx) * (px - cx);
                if (d2 <= r * r) mask.at(0, i, j, 0) = 1.0;
            }
    }
}

namespace {

/// Low-frequency value noise: a coarse uniform(-1,1) grid upsampled
/// bilinearly to the canvas.
Tensor value_noise(int64_t canvas, Rng& rng, int64_t grid = 9) {
    Tensor coarse(Shape{1, grid, grid, 1});
    for (int64_t i = 0; i < coarse.numel(); ++i) coarse[i] = rng.uniform(-1.0, 1.0);
    return ops::bilinear_resize(coarse, canvas, canvas);
}

/// Random point on a random border edge (0:top 1:bottom 2:left 3:right).
std::array<double, 2> edge_point(int64_t canvas, int edge, double t) {
    const double m = static_cast<double>(canvas);
    switch (edge) {
    case 0: return {0.0, t * m};
    case 1: return {m, t * m};
    case 2: return {t * m, 0.0};
    default: return {t * m, m};
    }
}

std::vector<std::array<double, 2>> random_road(const SynthSpec& spec, Rng& rng) {
    const int e0 = static_cast<int>(rng.randint(0, 3));
    int e1 = static_cast<int>(rng.randint(0, 2));
    if (e1 >= e0) ++e1; // distinct edge
    const auto a = edge_point(spec.canvas, e0, rng.uniform());
    const auto b = edge_point(spec.canvas, e1, rng.uniform());
    // Intermediate control points with perpendicular jitter scaled by the
    // curvature parameter.
    const double dy = b[0] - a[0], dx = b[1] - a[1];
    const double len = std::sqrt(dy * dy + dx * dx);
    const double ny = len > 0.0 ? -dx / len : 0.0;
    const double nx = len > 0.0 ? dy / len : 0.0;
    const double amp = spec.curvature * static_cast<double>(spec.canvas) * 0.25;
    std::vector<std::array<double, 2>> pts;
    pts.push_back(a);
    for (double t : {0.25, 0.5, 0.75}) {
        const double off = rng.uniform(-amp, amp);
        pts.push_back({a[0] + t * dy + off * ny, a[1] + t * dx + off * nx});
    }
    pts.push_back(b);
    // Chaikin corner cutting for smoothness.
    for (int pass = 0; pass < 2; ++pass) {
        std::vector<std::array<double, 2>> s;
        s.push_back(pts.front());
        for (size_t i = 0; i + 1 < pts.size(); ++i) {
            const auto &p = pts[i], &q = pts[i + 1];
            s.push_back({0.75 * p[0] + 0.25 * q[0], 0.75 * p[1] + 0.25 * q[1]});
            s.push_back({0.25 * p[0] + 0.75 * q[0], 0.25 * p[1] + 0.75 * q[1]});
        }
        s.push_back(pts.back());
        pts = std::move(s);
    }
    return pts;
}

Sample make_sample(const SynthSpec& spec, Rng& rng, int index) {
    const int64_t m = spec.canvas;
    Sample s;
    s.mask = Tensor(Shape{1, m, m, 1});
    s.meta.source = "synth-" + std::to_string(index);

    // Roads, redrawn wholesale if the foreground cap is exceeded.
    const int64_t total = m * m;
    for (int attempt = 0; attempt < 8; ++attempt) {
        s.mask.fill(0.0);
        const int64_t roads = rng.randint(spec.roads_min, spec.roads_max);
        for (int64_t k = 0; k < roads; ++k) {
            const double width = rng.uniform(spec.width_min, spec.width_max);
            rasterize_polyline(s.mask, random_road(spec, rng), width);
        }
        int64_t fg = 0;
        for (int64_t i = 0; i < s.mask.numel(); ++i) fg += s.mask[i] == 1.0;
        if (static_cast<double>(fg) <= spec.fg_cap * static_cast<double>(total)) break;
        if (attempt == 7) s.mask.fill(0.0); // give up: empty scene
    }

    // Scene: green-gray background, dirt-toned roads, shared low-frequency
    // texture plus per-pixel grain.
    s.image = Tensor(Shape{1, m, m, 3});
    const Tensor lowtex = value_noise(m, rng);
    const double bg[3] = {0.30, 0.38, 0.28};
    const double road[3] = {0.55, 0.50, 0.42};
    const double road_gain = rng.uniform(0.85, 1.15);
    for (int64_t y = 0; y < m; ++y)
        for (int64_t x = 0; x < m; ++x) {
            const bool on_road = s.mask.at(0, y, x, 0) == 1.0;
            const double tex = lowtex.at(0, y, x, 0) * spec.noise_scale;
            for (int64_t c = 0; c < 3; ++c) {
                const double base = on_road ? road[c] * road_gain : bg[c];
                const double grain = rng.uniform(-0.5, 0.5) * spec.noise_scale;
                s.image.at(0, y, x, c) = std::clamp(base + tex + grain, 0.0, 1.0);
            }
        }

    // Occlusion blobs: canopy-dark ellipses over the image only; the mask
    // keeps the full road.
    for (int k = 0; k < spec.occlusion_count; ++k) {
        const double cy = rng.uniform(0.0, static_cast<double>(m));
        const double cx = rng.uniform(0.0, static_cast<double>(m));
        const double ry = spec.occlusion_size * rng.uniform(0.5, 1.0);
        const double rx = spec.occlusion_size * rng.uniform(0.5, 1.0);
        const double tone[3] = {0.16, 0.24, 0.14};
        const int64_t y_lo = std::max<int64_t>(0, static_cast<int64_t>(cy - ry - 1));
        const int64_t y_hi = std::min<int64_t>(m - 1, static_cast<int64_t>(cy + ry + 1));
        const int64_t x_lo = std::max<int64_t>(0, static_cast<int64_t>(cx - rx - 1));
        const int64_t x_hi = std::min<int64_t>(m - 1, static_cast<int64_t>(cx + rx + 1));
        for (int64_t y = y_lo; y <= y_hi; ++y)
            for (int64_t x = x_lo; x <= x_hi; ++x) {
                const double uy = (static_cast<double>(y) + 0.5 - cy) / ry;
                const double ux = (static_cast<double>(x) + 0.5 - cx) / rx;
                if (uy * uy + ux * ux > 1.0) continue;
                const double tex = lowtex.at(0, y, x, 0) * spec.noise_scale * 0.5;
                for (int64_t c = 0; c < 3; ++c)
                    s.image.at(0, y, x, c) = std::clamp(tone[c] + tex, 0.0, 1.0);
            }
    }
    return s;
}

} // namespace

std::vector<Sample> generate_synthetic(const SynthSpec& spec, int n) {
    spec.validate();
    DSFC_CHECK(n >= 1, "generate_synthetic: n must be >= 1, got ", n);
    Rng rng(spec.seed);
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(make_sample(spec, rng, i));
    return out;
}

} // namespace dsfc
