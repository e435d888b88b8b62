#pragma once

#include <random>

#include "encoders/tiling.hpp"
#include "model/layers.hpp"

namespace enc {

namespace nc = numcore;

struct ImageEncoderConfig {
    int tile_px = 28;
    int patch = 7;   // -> (tile_px/patch)^2 = 16 tokens per tile
    int dim = 64;    // LM dim C
    int heads = 4;
    int layers = 2;
};

// per-tile patch embedding + small transformer, then a projection to LM dim.
// the projection is a separate parameter group ("imgproj"): it is the piece
// trained in alignment pretraining while the trunk may be frozen.
struct ImageEncoder {
    ImageEncoderConfig cfg;
    int tokens_per_tile = 0;  // (tile_px/patch)^2
    int grid = 0;             // tile_px/patch

    nn::Linear patch_embed;        // [3*patch*patch -> dim]
    nc::Tensor pos;                // [tokens_per_tile, dim]
    std::vector<nn::Block> blocks;
    nn::LayerNorm ln_f;
    nn::Linear proj;               // "imgproj" group

    ImageEncoder() = default;
    ImageEncoder(const ImageEncoderConfig & cfg, std::mt19937_64 & rng);

    struct Out {
        nc::Tensor tokens;      // [tokens_per_tile*(P+1), dim]: tiles then global
        nc::Tensor global_map;  // [dim, grid, grid] spatial map of the global tile
    };
    Out encode(const Tiles & tiles) const;
    nc::Tensor encode_tile(const Image & tile) const;  // [tokens_per_tile, dim], pre-projection

    void collect_trunk(const std::string & prefix, nn::Params & out) const;
    void collect_proj(const std::string & prefix, nn::Params & out) const;
};

}  // namespace enc
