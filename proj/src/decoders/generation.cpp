#include "decoders/generation.hpp"

#include <cmath>

#include "common/error.hpp"

namespace dec {

using namespace nc::ops;

QFormer::QFormer(int dim, int heads, std::mt19937_64 & rng)
    : dim(dim),
      queries(nc::param({k_mapper_queries, dim}, rng, nn::k_init_std, "qformer.queries")),
      block(dim, heads, rng),
      ln_f(dim) {}

nc::Tensor QFormer::map(const nc::Tensor & condition) const {
    MVLM_CHECK(condition.rank() == 2 && condition.dim(1) == dim,
               "qformer_map: condition must be [N,%d], got %s", dim,
               nc::shape_str(condition.shape()).c_str());
    return ln_f(block(queries, condition));
}

void QFormer::collect(const std::string & prefix, nn::Params & out) const {
    out.emplace_back(prefix + ".queries", queries);
    block.collect(prefix + ".block", out);
    ln_f.collect(prefix + ".ln_f", out);
}

DiffusionSchedule::DiffusionSchedule() {
    double prod = 1.0;
    for (int i = 0; i < k_steps; i++) {
        beta[i] = k_beta_lo + (k_beta_hi - k_beta_lo) * i / (k_steps - 1);
        alpha[i] = 1.0 - beta[i];
        prod *= alpha[i];
        alpha_bar[i] = prod;
    }
}

Denoiser::Denoiser(int dim, int heads, std::mt19937_64 & rng)
    : dim(dim),
      in_proj(6, dim, rng),
      pos(nc::param({k_gen_pixels, dim}, rng, nn::k_init_std, "denoiser.pos")),
      time_embed(nc::param({DiffusionSchedule::k_steps, dim}, rng, nn::k_init_std,
                           "denoiser.time_embed")),
      block0(dim, heads, rng),
      block1(dim, heads, rng),
      ln_f(dim),
      out_proj(dim, 3, rng) {}

nc::Tensor Denoiser::forward(const nc::Tensor & noisy, const nc::Tensor & source, int t,
                             const nc::Tensor & mapping) const {
    MVLM_CHECK(noisy.rank() == 2 && noisy.dim(0) == k_gen_pixels && noisy.dim(1) == 3,
               "denoiser: noisy image must be [%d,3]", k_gen_pixels);
    MVLM_CHECK(source.shape() == noisy.shape(), "denoiser: source image must be [%d,3]",
               k_gen_pixels);
    MVLM_CHECK(t >= 1 && t <= DiffusionSchedule::k_steps, "denoiser: t=%d outside [1,%d]", t,
               DiffusionSchedule::k_steps);
    nc::Tensor x = in_proj(concat_cols({noisy, source}));
    x = add(add(x, pos), slice_rows(time_embed, t - 1, 1));
    x = block1(block0(x, mapping), mapping);
    return out_proj(ln_f(x));
}

void Denoiser::collect(const std::string & prefix, nn::Params & out) const {
    in_proj.collect(prefix + ".in_proj", out);
    out.emplace_back(prefix + ".pos", pos);
    out.emplace_back(prefix + ".time_embed", time_embed);
    block0.collect(prefix + ".block0", out);
    block1.collect(prefix + ".block1", out);
    ln_f.collect(prefix + ".ln_f", out);
    out_proj.collect(prefix + ".out_proj", out);
}

CaptionEncoder::CaptionEncoder(int dim) {
    std::mt19937_64 rng(0xcaf7104u);
    table = nc::randn({256, dim}, rng, 1.0);
}

nc::Tensor CaptionEncoder::encode(const std::string & caption) const {
    std::vector<int> ids;
    for (unsigned char c : caption) ids.push_back((int) c);
    if (ids.empty()) ids.push_back(0);
    nc::NoGradScope ng;  // frozen tower: constant with respect to training
    return mean_rows(gather_rows(table, ids));
}

GenerationDecoder::GenerationDecoder(int dim, int heads, std::mt19937_64 & rng)
    : dim(dim), qformer(dim, heads, rng), denoiser(dim, heads, rng), caption_enc(dim) {}

nc::Tensor GenerationDecoder::qformer_map(const nc::Tensor & condition) const {
    return qformer.map(condition);
}

nc::Tensor diffusion_loss_terms(const nc::Tensor & pred_noise, const nc::Tensor & noise,
                                const nc::Tensor & mapping, const nc::Tensor & caption_embed,
                                double lambda_align) {
    nc::Tensor loss = mse_loss(pred_noise, noise);
    if (lambda_align != 0.0)
        loss = add(loss, scale(mse_loss(mean_rows(mapping), caption_embed), lambda_align));
    return loss;
}

nc::Tensor GenerationDecoder::loss(const GenTarget & target, const nc::Tensor & mapping, int t,
                                   const nc::Tensor & noise, double lambda_align) const {
    const nc::Shape want{k_gen_pixels, 3};
    MVLM_CHECK(target.image.defined() && target.image.shape() == want,
               "generation loss: target image must be [%d,3]", k_gen_pixels);
    const auto & s = sched;
    double sa = std::sqrt(s.alpha_bar[t - 1]), sn = std::sqrt(1.0 - s.alpha_bar[t - 1]);
    nc::Tensor noisy = add(scale(target.image, sa), scale(noise, sn));
    nc::Tensor source = target.source.defined() ? target.source : nc::zeros({k_gen_pixels, 3});
    nc::Tensor pred = denoiser.forward(noisy, source, t, mapping);
    return diffusion_loss_terms(pred, noise, mapping, caption_enc.encode(target.caption),
                                lambda_align);
}

nc::Tensor GenerationDecoder::sample(const nc::Tensor & mapping, std::mt19937_64 & rng,
                                     const nc::Tensor & source) const {
    nc::NoGradScope ng;
    nc::Tensor src = source.defined() ? source : nc::zeros({k_gen_pixels, 3});
    nc::Tensor x = nc::randn({k_gen_pixels, 3}, rng, 1.0);
    const auto & s = sched;
    for (int t = DiffusionSchedule::k_steps; t >= 1; t--) {
        nc::Tensor eps = denoiser.forward(x, src, t, mapping);
        double c1 = 1.0 / std::sqrt(s.alpha[t - 1]);
        double c2 = s.beta[t - 1] / std::sqrt(1.0 - s.alpha_bar[t - 1]);
        x = scale(sub(x, scale(eps, c2)), c1);
        if (t > 1) {
            nc::Tensor z = nc::randn({k_gen_pixels, 3}, rng, 1.0);
            x = add(x, scale(z, std::sqrt(s.beta[t - 1])));
        }
    }
    for (size_t i = 0; i < x.numel(); i++)
        x.set(i, std::max(-1.0, std::min(1.0, x.at(i))));
    return x;
}

void GenerationDecoder::collect(const std::string & prefix, nn::Params & out) const {
    qformer.collect(prefix + ".qformer", out);
    denoiser.collect(prefix + ".denoiser", out);
}

}  // namespace dec
