#pragma once

#include <random>
#include <vector>

#include "model/layers.hpp"

namespace dec {

namespace nc = numcore;

// fixed toy skeleton: head, tail, left, right
constexpr int k_n_keypoints = 4;

struct KeypointSet {
    // J (x,y) pairs normalized to [0,1], with per-point visibility
    double xy[k_n_keypoints][2] = {};
    bool visible[k_n_keypoints] = {};
};

// the condition rows act as the decoder queries: one cross-attention block
// over the image tokens, then J sigmoid coordinate pairs per group
struct KeypointDecoder {
    int dim = 0;
    nn::CrossBlock block;
    nn::LayerNorm ln_f;
    nn::Linear head;  // C -> 2J

    KeypointDecoder() = default;
    KeypointDecoder(int dim, int heads, std::mt19937_64 & rng);

    // -> [G, 2J] sigmoid coordinates (x0,y0,x1,y1,...)
    nc::Tensor forward(const nc::Tensor & img_tokens, const nc::Tensor & condition) const;
    void collect(const std::string & prefix, nn::Params & out) const;
};

// mean L1 over visible coordinates; zero loss when nothing is visible
nc::Tensor keypoint_loss(const nc::Tensor & coords, const std::vector<KeypointSet> & targets);

}  // namespace dec
