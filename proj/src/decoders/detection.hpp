#pragma once

#include <random>
#include <vector>

#include "decoders/boxes.hpp"
#include "model/layers.hpp"

namespace dec {

struct DetTarget {
    Box box;
    int group_id = 0;  // index into the condition rows (category)
};

struct DetOut {
    nc::Tensor boxes;   // [K,4] sigmoid (cx,cy,w,h)
    nc::Tensor logits;  // [K,G+1], last column = no-object
};

// set-prediction head: K learnable object queries cross-attend over image
// tokens; classification logits are scaled dot products against the condition
// rows plus a learned no-object embedding.
struct DetectionDecoder {
    static constexpr int k_queries = 10;
    static constexpr double k_lambda_cls = 2.0, k_lambda_l1 = 5.0, k_lambda_giou = 2.0;

    int dim = 0;
    nc::Tensor obj_queries;  // [K,C]
    nc::Tensor no_obj;       // [1,C]
    nn::CrossBlock block0, block1;
    nn::LayerNorm ln_f;
    nn::Linear box_head;  // C -> 4

    DetectionDecoder() = default;
    DetectionDecoder(int dim, int heads, std::mt19937_64 & rng);

    DetOut forward(const nc::Tensor & img_tokens, const nc::Tensor & condition) const;
    void collect(const std::string & prefix, nn::Params & out) const;
};

// Hungarian-matched DETR-style loss; group ids must be < G = condition rows.
nc::Tensor detection_loss(const DetOut & out, const std::vector<DetTarget> & targets);

// greedy readout for evaluation: per query, argmax class and its probability
struct DetPrediction {
    Box box;
    int group_id = 0;  // G = no-object
    double score = 0.0;
};
std::vector<DetPrediction> read_detections(const DetOut & out);

}  // namespace dec
