#pragma once

#include <random>

#include "encoders/tiling.hpp"
#include "model/layers.hpp"
#include "numcore/ops.hpp"

namespace enc {

namespace nc = numcore;

// visual-prompt encoder: 4-channel (RGB + binary mask) conv stack with a
// factor-14 downsample, fused with the global image feature map, then grid
// sampling over the mask and a projection to LM dim
struct RegionEncoder {
    int dim = 64;
    int tile_px = 28;

    nc::Tensor w1, b1;  // conv k7 s7: [dim, 4, 7, 7]
    nc::Tensor w2, b2;  // conv k2 s2: [dim, dim, 2, 2]
    nc::Tensor w3, b3;  // conv k1 s1: [dim, dim, 1, 1]
    nn::LayerNorm ln1, ln2, ln3;
    nn::Linear proj;    // "regproj": the region projection trained in alignment

    RegionEncoder() = default;
    RegionEncoder(int dim, int tile_px, std::mt19937_64 & rng);

    // img: the global tile (tile_px x tile_px); mask: same extent;
    // global_map: [dim, g, g] from the image encoder
    nc::Tensor encode(const Image & img, const nc::BinaryMask & mask,
                      const nc::Tensor & global_map) const;  // [1, dim]

    // the feature map before grid sampling, [dim, tile_px/14, tile_px/14]
    nc::Tensor feature_map(const Image & img, const nc::BinaryMask & mask,
                           const nc::Tensor & global_map) const;

    void collect_trunk(const std::string & prefix, nn::Params & out) const;
    void collect_proj(const std::string & prefix, nn::Params & out) const;
};

}  // namespace enc
