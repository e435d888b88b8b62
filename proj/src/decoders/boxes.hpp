#pragma once

#include "numcore/ops.hpp"

namespace dec {

namespace nc = numcore;

// center-size box normalized to the unit square
struct Box {
    double cx = 0, cy = 0, w = 0, h = 0;
};

double iou(const Box & a, const Box & b);
double giou(const Box & a, const Box & b);  // IoU - |hull \ union| / |hull|

// differentiable row-wise GIoU: pred and tgt are [M,4] (cx,cy,w,h); returns
// [M,1]. corners are clamped to the unit square before overlap computation.
nc::Tensor giou_rows(const nc::Tensor & pred, const nc::Tensor & tgt);

// row-wise L1 distance, [M,4] x [M,4] -> [M,1]
nc::Tensor l1_rows(const nc::Tensor & pred, const nc::Tensor & tgt);

}  // namespace dec
