#pragma once

#include <random>
#include <string>

#include "model/layers.hpp"

namespace dec {

namespace nc = numcore;

constexpr int k_gen_res = 8;                          // generated image side
constexpr int k_gen_pixels = k_gen_res * k_gen_res;   // 64 pixel tokens

// generation target: image as [64,3] rows (pixel-major, values in [-1,1]);
// EDIT additionally supplies a source image, GEN leaves it undefined
struct GenTarget {
    nc::Tensor image;   // [64,3]
    std::string caption;
    nc::Tensor source;  // [64,3] or undefined
};

// M learnable mapper queries attend once over the projected condition rows
struct QFormer {
    static constexpr int k_mapper_queries = 8;

    int dim = 0;
    nc::Tensor queries;  // [M,C]
    nn::CrossBlock block;
    nn::LayerNorm ln_f;

    QFormer() = default;
    QFormer(int dim, int heads, std::mt19937_64 & rng);

    nc::Tensor map(const nc::Tensor & condition) const;  // [N,C] -> [M,C]
    void collect(const std::string & prefix, nn::Params & out) const;
};

// linear beta schedule over T steps
struct DiffusionSchedule {
    static constexpr int k_steps = 10;
    static constexpr double k_beta_lo = 1e-2, k_beta_hi = 2e-1;

    double beta[k_steps];
    double alpha[k_steps];
    double alpha_bar[k_steps];  // cumulative product, index t-1 for step t

    DiffusionSchedule();
};

// small conditional residual net: 6 input channels (noisy + source; GEN uses
// a zero source), learned pixel/time embeddings, cross-attention to the
// mapping features, 3-channel noise prediction
struct Denoiser {
    int dim = 0;
    nn::Linear in_proj;    // 6 -> C
    nc::Tensor pos;        // [64,C]
    nc::Tensor time_embed; // [T,C]
    nn::CrossBlock block0, block1;
    nn::LayerNorm ln_f;
    nn::Linear out_proj;   // C -> 3

    Denoiser() = default;
    Denoiser(int dim, int heads, std::mt19937_64 & rng);

    // noisy/source: [64,3]; t in [1,T]; mapping: [M,C] -> predicted noise [64,3]
    nc::Tensor forward(const nc::Tensor & noisy, const nc::Tensor & source, int t,
                       const nc::Tensor & mapping) const;
    void collect(const std::string & prefix, nn::Params & out) const;
};

// frozen stand-in for a pretrained text tower: mean of fixed random byte
// embeddings; never trained, never checkpointed as a parameter
struct CaptionEncoder {
    nc::Tensor table;  // [256,C], fixed seed

    CaptionEncoder() = default;
    explicit CaptionEncoder(int dim);
    nc::Tensor encode(const std::string & caption) const;  // [1,C]
};

struct GenerationDecoder {
    static constexpr double k_lambda_align = 1.0;

    int dim = 0;
    QFormer qformer;
    Denoiser denoiser;
    CaptionEncoder caption_enc;
    DiffusionSchedule sched;

    GenerationDecoder() = default;
    GenerationDecoder(int dim, int heads, std::mt19937_64 & rng);

    nc::Tensor qformer_map(const nc::Tensor & condition) const;

    // MSE(predicted noise, noise) + lambda_align * MSE(pooled mapping, frozen
    // caption encoding); t in [1,T], noise: [64,3]
    nc::Tensor loss(const GenTarget & target, const nc::Tensor & mapping, int t,
                    const nc::Tensor & noise, double lambda_align = k_lambda_align) const;

    // ancestral sampling from unit Gaussian, clamped to [-1,1]
    nc::Tensor sample(const nc::Tensor & mapping, std::mt19937_64 & rng,
                      const nc::Tensor & source = {}) const;

    void collect(const std::string & prefix, nn::Params & out) const;
};

// shared loss arithmetic, also used by test stubs that bypass the denoiser
nc::Tensor diffusion_loss_terms(const nc::Tensor & pred_noise, const nc::Tensor & noise,
                                const nc::Tensor & mapping, const nc::Tensor & caption_embed,
                                double lambda_align);

}  // namespace dec
