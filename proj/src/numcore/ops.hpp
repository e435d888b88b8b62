#pragma once

#include <cstdint>
#include <vector>

#include "numcore/tape.hpp"
#include "numcore/tensor.hpp"

namespace numcore {

struct BinaryMask {
    int h = 0, w = 0;
    std::vector<uint8_t> m;  // row-major, nonzero = set

    size_t count() const;
    bool at(int y, int x) const { return m[(size_t) y * w + x] != 0; }
};

namespace ops {

// elementwise with trailing-dimension broadcast
Tensor add(const Tensor & a, const Tensor & b);
Tensor sub(const Tensor & a, const Tensor & b);
Tensor mul(const Tensor & a, const Tensor & b);
Tensor div(const Tensor & a, const Tensor & b);

Tensor minimum(const Tensor & a, const Tensor & b);
Tensor maximum(const Tensor & a, const Tensor & b);

Tensor scale(const Tensor & x, double c);
Tensor add_const(const Tensor & x, double c);

Tensor gelu(const Tensor & x);      // tanh approximation
Tensor sigmoid(const Tensor & x);
Tensor relu(const Tensor & x);
Tensor abs(const Tensor & x);

Tensor matmul(const Tensor & a, const Tensor & b);
Tensor transpose(const Tensor & x);  // 2-D

Tensor softmax(const Tensor & x, int axis);
Tensor layernorm(const Tensor & x, const Tensor & gamma, const Tensor & beta, double eps);

Tensor conv2d(const Tensor & x, const Tensor & w, const Tensor & bias, int stride, int padding);

// bilinearly samples fmap at the downscaled coordinates of the mask's set
// pixels and averages them into one C-vector
Tensor grid_sample_mask(const Tensor & fmap, const BinaryMask & mask);

Tensor bilinear_resize(const Tensor & x, int out_h, int out_w);  // x: [C,h,w]

constexpr int k_ignore_index = -100;
Tensor cross_entropy(const Tensor & logits, const std::vector<int> & targets, int ignore_index = k_ignore_index);

Tensor reshape(const Tensor & x, const Shape & s);
Tensor concat_rows(const std::vector<Tensor> & parts);
Tensor concat_cols(const std::vector<Tensor> & parts);
Tensor slice_rows(const Tensor & x, int start, int len);
Tensor slice_cols(const Tensor & x, int start, int len);
Tensor gather_rows(const Tensor & table, const std::vector<int> & ids);
Tensor mean_rows(const Tensor & x);  // [n,C] -> [1,C]

Tensor sum_all(const Tensor & x);
Tensor mean_all(const Tensor & x);

Tensor mse_loss(const Tensor & a, const Tensor & b);
Tensor bce_with_logits(const Tensor & logits, const Tensor & targets);

// non-differentiable helpers
int argmax_row(const Tensor & x, int row);

}  // namespace ops

void backward(Tensor loss);  // uses the active tape

}  // namespace numcore
