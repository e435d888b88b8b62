#include "encoders/image_encoder.hpp"

#include "common/error.hpp"

namespace enc {

using namespace numcore::ops;

ImageEncoder::ImageEncoder(const ImageEncoderConfig & c, std::mt19937_64 & rng) : cfg(c) {
    MVLM_CHECK(c.tile_px % c.patch == 0, "image encoder: tile_px %d not divisible by patch %d",
               c.tile_px, c.patch);
    grid = c.tile_px / c.patch;
    tokens_per_tile = grid * grid;
    patch_embed = nn::Linear(3 * c.patch * c.patch, c.dim, rng);
    pos = nc::param({tokens_per_tile, c.dim}, rng, nn::k_init_std, "pos");
    for (int l = 0; l < c.layers; l++) blocks.emplace_back(c.dim, c.heads, rng);
    ln_f = nn::LayerNorm(c.dim);
    proj = nn::Linear(c.dim, c.dim, rng);
}

nc::Tensor ImageEncoder::encode_tile(const Image & tile) const {
    MVLM_CHECK(tile.h == cfg.tile_px && tile.w == cfg.tile_px,
               "image encoder: tile is %dx%d, expected %dx%d", tile.h, tile.w, cfg.tile_px,
               cfg.tile_px);
    // patchify: row-major patch grid, each flattened [3*patch*patch]
    int p = cfg.patch;
    nc::Tensor patches = nc::zeros({tokens_per_tile, 3 * p * p});
    for (int gy = 0; gy < grid; gy++)
        for (int gx = 0; gx < grid; gx++) {
            size_t row = (size_t) (gy * grid + gx);
            size_t i = 0;
            for (int c = 0; c < 3; c++)
                for (int y = 0; y < p; y++)
                    for (int x = 0; x < p; x++, i++)
                        patches.data()[row * 3 * p * p + i] = tile.at(c, gy * p + y, gx * p + x);
        }

    nc::Tensor h = add(patch_embed(patches), pos);
    for (const auto & b : blocks) h = b(h, false);
    return ln_f(h);
}

ImageEncoder::Out ImageEncoder::encode(const Tiles & tiles) const {
    std::vector<nc::Tensor> parts;
    for (const auto & t : tiles.local) parts.push_back(encode_tile(t));
    nc::Tensor global = encode_tile(tiles.global);
    parts.push_back(global);

    Out out;
    out.tokens = proj(concat_rows(parts));
    // spatial map of the projected global tokens, [dim, grid, grid]
    nc::Tensor pg = proj(global);
    out.global_map = reshape(transpose(pg), {cfg.dim, grid, grid});
    return out;
}

void ImageEncoder::collect_trunk(const std::string & prefix, nn::Params & out) const {
    patch_embed.collect(prefix + ".patch_embed", out);
    out.push_back({prefix + ".pos", pos});
    for (size_t l = 0; l < blocks.size(); l++)
        blocks[l].collect(prefix + common::format(".block%zu", l), out);
    ln_f.collect(prefix + ".ln_f", out);
}

void ImageEncoder::collect_proj(const std::string & prefix, nn::Params & out) const {
    proj.collect(prefix, out);
}

}  // namespace enc
