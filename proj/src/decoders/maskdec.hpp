#pragma once

#include <random>

#include "model/layers.hpp"
#include "numcore/ops.hpp"

namespace dec {

namespace nc = numcore;

constexpr int k_mask_res = 8;  // prediction resolution (square)

// per-region mask head: the global feature map is upsampled to the mask
// resolution and every pixel feature is dotted with the projected condition
struct MaskDecoder {
    int dim = 0;
    nn::Linear cond_proj;  // C -> C
    nn::LayerNorm ln_pix;

    MaskDecoder() = default;
    MaskDecoder(int dim, std::mt19937_64 & rng);

    // global_map: [C,h,w]; condition: [1,C]; -> logits [k_mask_res^2, 1]
    nc::Tensor forward(const nc::Tensor & global_map, const nc::Tensor & condition) const;
    void collect(const std::string & prefix, nn::Params & out) const;
};

// equal-weight BCE + Dice against a {0,1} target of matching extent
nc::Tensor mask_loss(const nc::Tensor & logits, const nc::BinaryMask & target);

// majority-coverage downsample of a full-resolution mask to out x out
nc::BinaryMask downsample_mask(const nc::BinaryMask & m, int out);

// IoU of thresholded logits (> 0) vs target
double mask_iou(const nc::Tensor & logits, const nc::BinaryMask & target);

}  // namespace dec
