#include "datakit/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "common/error.hpp"

namespace dk {

const std::vector<ShapeClass> & shape_classes() {
    static const std::vector<ShapeClass> v = {{"square"}, {"circle"}, {"triangle"}, {"cross"}};
    return v;
}

const std::vector<SceneColor> & palette() {
    static const std::vector<SceneColor> v = {{"red", 0.9, 0.1, 0.1},
                                              {"green", 0.1, 0.8, 0.1},
                                              {"blue", 0.1, 0.2, 0.9},
                                              {"yellow", 0.9, 0.9, 0.1}};
    return v;
}

namespace {

constexpr double k_background = 0.05;

// rasterizes one shape into a full-resolution mask
nc::BinaryMask draw_mask(int cls, int x0, int y0, int s, int img_h, int img_w) {
    nc::BinaryMask m;
    m.h = img_h;
    m.w = img_w;
    m.m.assign((size_t) img_h * img_w, 0);
    auto put = [&](int y, int x) { m.m[(size_t) y * img_w + x] = 1; };
    switch (cls) {
        case 0:  // square
            for (int y = 0; y < s; y++)
                for (int x = 0; x < s; x++) put(y0 + y, x0 + x);
            break;
        case 1: {  // circle
            double r = s / 2.0, cy = y0 + r - 0.5, cx = x0 + r - 0.5;
            for (int y = 0; y < s; y++)
                for (int x = 0; x < s; x++) {
                    double dy = y0 + y - cy, dx = x0 + x - cx;
                    if (dy * dy + dx * dx <= r * r) put(y0 + y, x0 + x);
                }
            break;
        }
        case 2: {  // triangle, apex at the top
            double cx = x0 + (s - 1) / 2.0;
            for (int y = 0; y < s; y++) {
                double half = 0.5 * s * y / std::max(1, s - 1);
                for (int x = 0; x < s; x++)
                    if (std::abs(x0 + x - cx) <= half) put(y0 + y, x0 + x);
            }
            break;
        }
        default: {  // cross
            int t = std::max(2, s / 3);
            int a = (s - t) / 2;
            for (int y = 0; y < s; y++)
                for (int x = 0; x < s; x++)
                    if ((x >= a && x < a + t) || (y >= a && y < a + t)) put(y0 + y, x0 + x);
        }
    }
    return m;
}

dec::Box box_from_mask(const nc::BinaryMask & m) {
    int x0 = m.w, x1 = -1, y0 = m.h, y1 = -1;
    for (int y = 0; y < m.h; y++)
        for (int x = 0; x < m.w; x++)
            if (m.at(y, x)) {
                x0 = std::min(x0, x);
                x1 = std::max(x1, x);
                y0 = std::min(y0, y);
                y1 = std::max(y1, y);
            }
    MVLM_CHECK(x1 >= 0, "box_from_mask: empty mask");
    double lx = (double) x0 / m.w, rx = (double) (x1 + 1) / m.w;
    double ty = (double) y0 / m.h, by = (double) (y1 + 1) / m.h;
    return {(lx + rx) / 2, (ty + by) / 2, rx - lx, by - ty};
}

bool boxes_overlap(const dec::Box & a, const dec::Box & b) {
    return std::abs(a.cx - b.cx) * 2 < a.w + b.w && std::abs(a.cy - b.cy) * 2 < a.h + b.h;
}

}  // namespace

Scene synth_scene(uint64_t seed) {
    std::mt19937_64 rng(seed ^ 0x5ce9e5eedULL);
    Scene sc;
    int h = (rng() % 4 == 0) ? 56 : 28;
    int w = 28;
    sc.image = enc::Image(h, w);
    for (double & p : sc.image.pix) p = k_background;

    int n = 1 + (int) (rng() % 3);
    std::vector<int> classes = {0, 1, 2, 3};
    std::shuffle(classes.begin(), classes.end(), rng);

    for (int i = 0; i < n; i++) {
        SceneObject obj;
        obj.cls = classes[i];
        obj.color = (int) (rng() % palette().size());
        // rejection placement, shrink on repeated failure
        bool placed = false;
        for (int attempt = 0; attempt < 64 && !placed; attempt++) {
            int s = 8 + (int) (rng() % 7) - attempt / 16;
            s = std::max(6, s);
            int x0 = (int) (rng() % (w - s));
            int y0 = (int) (rng() % (h - s));
            nc::BinaryMask m = draw_mask(obj.cls, x0, y0, s, h, w);
            dec::Box b = box_from_mask(m);
            bool clash = false;
            for (const auto & other : sc.objects)
                if (boxes_overlap(b, other.box)) clash = true;
            if (clash) continue;
            obj.mask = std::move(m);
            obj.box = b;
            placed = true;
        }
        if (!placed) continue;

        const SceneColor & col = palette()[obj.color];
        for (int y = 0; y < h; y++)
            for (int x = 0; x < w; x++)
                if (obj.mask.at(y, x)) {
                    sc.image.at(0, y, x) = col.r;
                    sc.image.at(1, y, x) = col.g;
                    sc.image.at(2, y, x) = col.b;
                }

        const dec::Box & b = obj.box;
        double pts[dec::k_n_keypoints][2] = {{b.cx, b.cy - b.h / 2},   // head
                                        {b.cx, b.cy + b.h / 2},   // tail
                                        {b.cx - b.w / 2, b.cy},   // left
                                        {b.cx + b.w / 2, b.cy}};  // right
        for (int j = 0; j < dec::k_n_keypoints; j++) {
            obj.skeleton.xy[j][0] = pts[j][0];
            obj.skeleton.xy[j][1] = pts[j][1];
            obj.skeleton.visible[j] = true;
        }
        obj.label = std::string(col.name) + " " + shape_classes()[obj.cls].name;
        sc.objects.push_back(std::move(obj));
    }
    MVLM_CHECK(!sc.objects.empty(), "synth_scene: no shape placed for seed %llu",
               (unsigned long long) seed);

    sc.caption = "a ";
    for (size_t i = 0; i < sc.objects.size(); i++) {
        if (i) sc.caption += " and a ";
        sc.caption += sc.objects[i].label;
    }
    return sc;
}

nc::Tensor solid_gen_image(int color_index) {
    const SceneColor & c = palette().at(color_index);
    nc::Tensor img = nc::zeros({64, 3});
    for (int p = 0; p < 64; p++) {
        img.set((size_t) p * 3 + 0, c.r * 2 - 1);
        img.set((size_t) p * 3 + 1, c.g * 2 - 1);
        img.set((size_t) p * 3 + 2, c.b * 2 - 1);
    }
    return img;
}

int nearest_palette_color(const nc::Tensor & image) {
    double mean[3] = {0, 0, 0};
    int n = image.dim(0);
    for (int p = 0; p < n; p++)
        for (int c = 0; c < 3; c++) mean[c] += (image.at((size_t) p * 3 + c) + 1) / 2;
    for (double & m : mean) m /= n;
    int best = 0;
    double bd = 1e300;
    for (size_t i = 0; i < palette().size(); i++) {
        const SceneColor & c = palette()[i];
        double d = (mean[0] - c.r) * (mean[0] - c.r) + (mean[1] - c.g) * (mean[1] - c.g) +
                   (mean[2] - c.b) * (mean[2] - c.b);
        if (d < bd) {
            bd = d;
            best = (int) i;
        }
    }
    return best;
}

int color_from_caption(const std::string & caption) {
    for (size_t i = 0; i < palette().size(); i++)
        if (caption.find(palette()[i].name) != std::string::npos) return (int) i;
    return -1;
}

}  // namespace dk
