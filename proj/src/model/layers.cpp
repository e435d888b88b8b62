#include "model/layers.hpp"

#include <cmath>

#include "common/error.hpp"

namespace nn {

using namespace numcore::ops;

Linear::Linear(int in, int out, std::mt19937_64 & rng, bool bias) {
    w = nc::param({in, out}, rng, k_init_std, "w");
    if (bias) b = nc::param_zeros({out}, "b");
}

nc::Tensor Linear::operator()(const nc::Tensor & x) const {
    nc::Tensor y = matmul(x, w);
    if (b.defined()) y = add(y, b);
    return y;
}

void Linear::collect(const std::string & prefix, Params & out) const {
    out.push_back({prefix + ".w", w});
    if (b.defined()) out.push_back({prefix + ".b", b});
}

LayerNorm::LayerNorm(int dim) {
    gamma = nc::param_full({dim}, 1.0, "gamma");
    beta = nc::param_zeros({dim}, "beta");
}

nc::Tensor LayerNorm::operator()(const nc::Tensor & x) const {
    return layernorm(x, gamma, beta, eps);
}

void LayerNorm::collect(const std::string & prefix, Params & out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
}

Attention::Attention(int dim, int heads, std::mt19937_64 & rng)
    : n_heads(heads), wq(dim, dim, rng), wk(dim, dim, rng), wv(dim, dim, rng),
      wo(dim, dim, rng) {
    MVLM_CHECK(dim % heads == 0, "attention: dim %d not divisible by %d heads", dim, heads);
}

nc::Tensor Attention::operator()(const nc::Tensor & xq, const nc::Tensor & xkv,
                                 bool causal) const {
    int C = xq.dim(1), dh = C / n_heads;
    int Tq = xq.dim(0), Tk = xkv.dim(0);
    MVLM_CHECK(!causal || Tq == Tk, "causal attention needs square score matrix");

    nc::Tensor q = wq(xq), k = wk(xkv), v = wv(xkv);

    nc::Tensor mask;  // additive, shared across heads, constant (no grad)
    if (causal) {
        mask = nc::zeros({Tq, Tk});
        for (int i = 0; i < Tq; i++)
            for (int j = i + 1; j < Tk; j++) mask.data()[(size_t) i * Tk + j] = -1e9;
    }

    std::vector<nc::Tensor> heads;
    for (int h = 0; h < n_heads; h++) {
        nc::Tensor qh = slice_cols(q, h * dh, dh);
        nc::Tensor kh = slice_cols(k, h * dh, dh);
        nc::Tensor vh = slice_cols(v, h * dh, dh);
        nc::Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt((double) dh));
        if (causal) scores = add(scores, mask);
        heads.push_back(matmul(softmax(scores, 1), vh));
    }
    return wo(concat_cols(heads));
}

void Attention::collect(const std::string & prefix, Params & out) const {
    wq.collect(prefix + ".wq", out);
    wk.collect(prefix + ".wk", out);
    wv.collect(prefix + ".wv", out);
    wo.collect(prefix + ".wo", out);
}

Block::Block(int dim, int heads, std::mt19937_64 & rng)
    : ln1(dim), ln2(dim), attn(dim, heads, rng), fc1(dim, 4 * dim, rng),
      fc2(4 * dim, dim, rng) {}

nc::Tensor Block::operator()(const nc::Tensor & x, bool causal) const {
    nc::Tensor h = ln1(x);
    nc::Tensor y = add(x, attn(h, h, causal));
    return add(y, fc2(gelu(fc1(ln2(y)))));
}

void Block::collect(const std::string & prefix, Params & out) const {
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    attn.collect(prefix + ".attn", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

CrossBlock::CrossBlock(int dim, int heads, std::mt19937_64 & rng)
    : ln1(dim), ln2(dim), ln3(dim), self_attn(dim, heads, rng), cross_attn(dim, heads, rng),
      fc1(dim, 4 * dim, rng), fc2(4 * dim, dim, rng) {}

nc::Tensor CrossBlock::operator()(const nc::Tensor & x, const nc::Tensor & mem) const {
    nc::Tensor h = ln1(x);
    nc::Tensor y = add(x, self_attn(h, h, false));
    y = add(y, cross_attn(ln2(y), mem, false));
    return add(y, fc2(gelu(fc1(ln3(y)))));
}

void CrossBlock::collect(const std::string & prefix, Params & out) const {
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ln3.collect(prefix + ".ln3", out);
    self_attn.collect(prefix + ".self", out);
    cross_attn.collect(prefix + ".cross", out);
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

Mlp2::Mlp2(int dim, std::mt19937_64 & rng) : fc1(dim, 4 * dim, rng), fc2(4 * dim, dim, rng) {}

nc::Tensor Mlp2::operator()(const nc::Tensor & x) const {
    return fc2(gelu(fc1(x)));
}

void Mlp2::collect(const std::string & prefix, Params & out) const {
    fc1.collect(prefix + ".fc1", out);
    fc2.collect(prefix + ".fc2", out);
}

}  // namespace nn
