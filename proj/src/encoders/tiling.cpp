#include "encoders/tiling.hpp"

#include <cmath>

#include "common/error.hpp"

namespace enc {

TileLayout select_ratio(int h, int w, const std::vector<Ratio> & ratio_set, int max_tile) {
    MVLM_CHECK(!ratio_set.empty(), "select_ratio: empty ratio set");
    MVLM_CHECK(max_tile >= 1, "select_ratio: max_tile must be >= 1");
    MVLM_CHECK(h >= 1 && w >= 1, "select_ratio: degenerate image %dx%d", h, w);

    double target = std::log((double) h / w);
    const Ratio * best = nullptr;
    double best_err = 0.0;
    for (const Ratio & r : ratio_set) {
        if (r.rows * r.cols > max_tile) continue;
        double err = std::fabs(target - std::log((double) r.rows / r.cols));
        bool take = !best || err < best_err - 1e-12;
        if (!take && err < best_err + 1e-12) {  // tie: smaller P, then lexicographic
            int p = r.rows * r.cols, bp = best->rows * best->cols;
            take = p < bp || (p == bp && (r.rows < best->rows ||
                                          (r.rows == best->rows && r.cols < best->cols)));
        }
        if (take) {
            best = &r;
            best_err = err;
        }
    }
    MVLM_CHECK(best, "select_ratio: no ratio satisfies max_tile=%d", max_tile);
    return {*best, best->rows * best->cols};
}

const std::vector<Ratio> & default_ratio_set() {
    static const std::vector<Ratio> set = {{1, 1}, {1, 2}, {2, 1}, {2, 2}};
    return set;
}

Image resize_image(const Image & img, int out_h, int out_w) {
    MVLM_CHECK(img.h >= 1 && img.w >= 1, "resize_image: degenerate source %dx%d", img.h, img.w);
    Image out(out_h, out_w);
    for (int c = 0; c < 3; c++) {
        for (int oy = 0; oy < out_h; oy++) {
            // align-corners-false sampling
            double sy = ((double) oy + 0.5) * img.h / out_h - 0.5;
            int y0 = (int) std::floor(sy);
            double fy = sy - y0;
            int y0c = std::min(std::max(y0, 0), img.h - 1);
            int y1c = std::min(std::max(y0 + 1, 0), img.h - 1);
            for (int ox = 0; ox < out_w; ox++) {
                double sx = ((double) ox + 0.5) * img.w / out_w - 0.5;
                int x0 = (int) std::floor(sx);
                double fx = sx - x0;
                int x0c = std::min(std::max(x0, 0), img.w - 1);
                int x1c = std::min(std::max(x0 + 1, 0), img.w - 1);
                out.at(c, oy, ox) = (1 - fy) * ((1 - fx) * img.at(c, y0c, x0c) +
                                                fx * img.at(c, y0c, x1c)) +
                                    fy * ((1 - fx) * img.at(c, y1c, x0c) +
                                          fx * img.at(c, y1c, x1c));
            }
        }
    }
    return out;
}

Tiles tile_image(const Image & img, const TileLayout & layout, int tile_px) {
    MVLM_CHECK(tile_px >= 1, "tile_image: bad tile_px %d", tile_px);
    int rows = layout.ratio.rows, cols = layout.ratio.cols;
    Image resized = resize_image(img, rows * tile_px, cols * tile_px);

    Tiles out;
    for (int r = 0; r < rows; r++) {
        for (int c = 0; c < cols; c++) {
            Image tile(tile_px, tile_px);
            for (int ch = 0; ch < 3; ch++)
                for (int y = 0; y < tile_px; y++)
                    for (int x = 0; x < tile_px; x++)
                        tile.at(ch, y, x) = resized.at(ch, r * tile_px + y, c * tile_px + x);
            out.local.push_back(std::move(tile));
        }
    }
    out.global = resize_image(img, tile_px, tile_px);
    return out;
}

}  // namespace enc
