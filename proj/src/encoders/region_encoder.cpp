#include "encoders/region_encoder.hpp"

#include "common/error.hpp"

namespace enc {

using namespace numcore::ops;

RegionEncoder::RegionEncoder(int dim_, int tile_px_, std::mt19937_64 & rng)
    : dim(dim_), tile_px(tile_px_) {
    MVLM_CHECK(tile_px % 14 == 0, "region encoder: tile_px %d not divisible by 14", tile_px);
    w1 = nc::param({dim, 4, 7, 7}, rng, nn::k_init_std, "w1");
    b1 = nc::param_zeros({dim}, "b1");
    w2 = nc::param({dim, dim, 2, 2}, rng, nn::k_init_std, "w2");
    b2 = nc::param_zeros({dim}, "b2");
    w3 = nc::param({dim, dim, 1, 1}, rng, nn::k_init_std, "w3");
    b3 = nc::param_zeros({dim}, "b3");
    ln1 = nn::LayerNorm(dim);
    ln2 = nn::LayerNorm(dim);
    ln3 = nn::LayerNorm(dim);
    proj = nn::Linear(dim, dim, rng);
}

// layernorm over channels at each spatial position, then GELU
static nc::Tensor ln_gelu_chw(const nc::Tensor & x, const nn::LayerNorm & ln) {
    int D = x.dim(1), H = x.dim(2), W = x.dim(3);
    nc::Tensor flat = transpose(reshape(x, {D, H * W}));  // [HW, D]
    nc::Tensor y = gelu(ln(flat));
    return reshape(transpose(y), {1, D, H, W});
}

nc::Tensor RegionEncoder::feature_map(const Image & img, const nc::BinaryMask & mask,
                                      const nc::Tensor & global_map) const {
    MVLM_CHECK(img.h == tile_px && img.w == tile_px, "region encoder: image is %dx%d, expected %d",
               img.h, img.w, tile_px);
    MVLM_CHECK(mask.h == tile_px && mask.w == tile_px, "region encoder: mask extent mismatch");
    MVLM_CHECK(mask.count() > 0, "region encoder: empty mask");

    nc::Tensor x = nc::zeros({1, 4, tile_px, tile_px});
    for (int c = 0; c < 3; c++)
        for (int y = 0; y < tile_px; y++)
            for (int xx = 0; xx < tile_px; xx++)
                x.data()[((size_t) c * tile_px + y) * tile_px + xx] = img.at(c, y, xx);
    for (int y = 0; y < tile_px; y++)
        for (int xx = 0; xx < tile_px; xx++)
            x.data()[((size_t) 3 * tile_px + y) * tile_px + xx] = mask.at(y, xx) ? 1.0 : 0.0;

    nc::Tensor h = ln_gelu_chw(conv2d(x, w1, b1, 7, 0), ln1);
    h = ln_gelu_chw(conv2d(h, w2, b2, 2, 0), ln2);
    h = ln_gelu_chw(conv2d(h, w3, b3, 1, 0), ln3);

    int g = tile_px / 14;  // 2 at toy scale
    nc::Tensor fmap = reshape(h, {dim, g, g});
    nc::Tensor gm = global_map;
    if (gm.dim(1) != g || gm.dim(2) != g) gm = bilinear_resize(gm, g, g);
    return add(fmap, gm);
}

nc::Tensor RegionEncoder::encode(const Image & img, const nc::BinaryMask & mask,
                                 const nc::Tensor & global_map) const {
    nc::Tensor sampled = grid_sample_mask(feature_map(img, mask, global_map), mask);  // [dim]
    return proj(reshape(sampled, {1, dim}));
}

void RegionEncoder::collect_trunk(const std::string & prefix, nn::Params & out) const {
    out.push_back({prefix + ".w1", w1});
    out.push_back({prefix + ".b1", b1});
    out.push_back({prefix + ".w2", w2});
    out.push_back({prefix + ".b2", b2});
    out.push_back({prefix + ".w3", w3});
    out.push_back({prefix + ".b3", b3});
    ln1.collect(prefix + ".ln1", out);
    ln2.collect(prefix + ".ln2", out);
    ln3.collect(prefix + ".ln3", out);
}

void RegionEncoder::collect_proj(const std::string & prefix, nn::Params & out) const {
    proj.collect(prefix, out);
}

}  // namespace enc
