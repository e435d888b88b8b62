#pragma once

#include <vector>

namespace enc {

// planar CHW float image, 3 channels, values in [0,1]
struct Image {
    int h = 0, w = 0;
    std::vector<double> pix;  // [3*h*w]

    Image() = default;
    Image(int h_, int w_) : h(h_), w(w_), pix((size_t) 3 * h_ * w_, 0.0) {}
    double & at(int c, int y, int x) { return pix[((size_t) c * h + y) * w + x]; }
    double at(int c, int y, int x) const { return pix[((size_t) c * h + y) * w + x]; }
};

struct Ratio {
    int rows = 1, cols = 1;
};

struct TileLayout {
    Ratio ratio;
    int P = 1;  // rows * cols
};

// nearest aspect ratio in log space, subject to rows*cols <= max_tile;
// ties break to smaller P, then lexicographic (rows, cols)
TileLayout select_ratio(int h, int w, const std::vector<Ratio> & ratio_set, int max_tile);

const std::vector<Ratio> & default_ratio_set();  // {1:1, 1:2, 2:1, 2:2}

Image resize_image(const Image & img, int out_h, int out_w);  // bilinear

struct Tiles {
    std::vector<Image> local;  // P tiles, row-major over the grid
    Image global;
};

Tiles tile_image(const Image & img, const TileLayout & layout, int tile_px);

}  // namespace enc
