#pragma once

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "numcore/ops.hpp"
#include "numcore/tensor.hpp"

namespace nn {

namespace nc = numcore;

using Params = std::vector<std::pair<std::string, nc::Tensor>>;

constexpr double k_init_std = 0.02;

struct Linear {
    nc::Tensor w;  // [in, out], y = x*w + b
    nc::Tensor b;  // [out] (undefined when bias-free)

    Linear() = default;
    Linear(int in, int out, std::mt19937_64 & rng, bool bias = true);
    nc::Tensor operator()(const nc::Tensor & x) const;
    void collect(const std::string & prefix, Params & out) const;
};

struct LayerNorm {
    nc::Tensor gamma, beta;
    double eps = 1e-5;

    LayerNorm() = default;
    explicit LayerNorm(int dim);
    nc::Tensor operator()(const nc::Tensor & x) const;
    void collect(const std::string & prefix, Params & out) const;
};

struct Attention {
    int n_heads = 0;
    Linear wq, wk, wv, wo;

    Attention() = default;
    Attention(int dim, int heads, std::mt19937_64 & rng);
    // xq: [Tq,C] queries, xkv: [Tk,C] keys/values; causal masks position t
    // from attending past t (requires Tq == Tk)
    nc::Tensor operator()(const nc::Tensor & xq, const nc::Tensor & xkv, bool causal) const;
    void collect(const std::string & prefix, Params & out) const;
};

// pre-norm transformer block: x += attn(ln1(x)); x += mlp(ln2(x))
struct Block {
    LayerNorm ln1, ln2;
    Attention attn;
    Linear fc1, fc2;  // GELU MLP, 4x expansion

    Block() = default;
    Block(int dim, int heads, std::mt19937_64 & rng);
    nc::Tensor operator()(const nc::Tensor & x, bool causal) const;
    void collect(const std::string & prefix, Params & out) const;
};

// pre-norm cross-attention block for decoders:
// x += self(ln1(x)); x += cross(ln2(x), mem); x += mlp(ln3(x))
struct CrossBlock {
    LayerNorm ln1, ln2, ln3;
    Attention self_attn, cross_attn;
    Linear fc1, fc2;

    CrossBlock() = default;
    CrossBlock(int dim, int heads, std::mt19937_64 & rng);
    nc::Tensor operator()(const nc::Tensor & x, const nc::Tensor & mem) const;
    void collect(const std::string & prefix, Params & out) const;
};

// Linear(C -> 4C) - GELU - Linear(4C -> C)
struct Mlp2 {
    Linear fc1, fc2;

    Mlp2() = default;
    Mlp2(int dim, std::mt19937_64 & rng);
    nc::Tensor operator()(const nc::Tensor & x) const;
    void collect(const std::string & prefix, Params & out) const;
};

}  // namespace nn
