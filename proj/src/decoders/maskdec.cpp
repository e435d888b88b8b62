#include "decoders/maskdec.hpp"

#include <cmath>

#include "common/error.hpp"

namespace dec {

using namespace nc::ops;

MaskDecoder::MaskDecoder(int dim, std::mt19937_64 & rng)
    : dim(dim), cond_proj(dim, dim, rng), ln_pix(dim) {}

nc::Tensor MaskDecoder::forward(const nc::Tensor & global_map,
                                const nc::Tensor & condition) const {
    MVLM_CHECK(global_map.rank() == 3 && global_map.dim(0) == dim,
               "mask_forward: global map must be [%d,h,w]", dim);
    MVLM_CHECK(condition.rank() == 2 && condition.dim(0) == 1 && condition.dim(1) == dim,
               "mask_forward: condition must be [1,%d]", dim);
    nc::Tensor up = bilinear_resize(global_map, k_mask_res, k_mask_res);
    nc::Tensor pix = ln_pix(transpose(reshape(up, {dim, k_mask_res * k_mask_res})));
    return scale(matmul(pix, transpose(cond_proj(condition))), 1.0 / std::sqrt((double) dim));
}

void MaskDecoder::collect(const std::string & prefix, nn::Params & out) const {
    cond_proj.collect(prefix + ".cond_proj", out);
    ln_pix.collect(prefix + ".ln_pix", out);
}

nc::Tensor mask_loss(const nc::Tensor & logits, const nc::BinaryMask & target) {
    const int n = (int) logits.numel();
    MVLM_CHECK(target.h * target.w == n, "mask_loss: %dx%d target for %d logits", target.h,
               target.w, n);
    nc::Tensor tgt = nc::zeros(logits.shape());
    for (int i = 0; i < n; i++)
        if (target.m[i]) tgt.set(i, 1.0);
    nc::Tensor bce = bce_with_logits(logits, tgt);
    nc::Tensor p = sigmoid(logits);
    const double eps = 1.0;  // Laplace smoothing keeps empty masks well-defined
    nc::Tensor inter = sum_all(mul(p, tgt));
    nc::Tensor dice = sub(nc::scalar(1.0),
                          div(add_const(scale(inter, 2.0), eps),
                              add_const(add(sum_all(p), sum_all(tgt)), eps)));
    return add(bce, dice);
}

nc::BinaryMask downsample_mask(const nc::BinaryMask & m, int out) {
    MVLM_CHECK(out > 0 && m.h >= out && m.w >= out, "downsample_mask: bad sizes");
    nc::BinaryMask r;
    r.h = r.w = out;
    r.m.assign((size_t) out * out, 0);
    for (int y = 0; y < out; y++) {
        int y0 = y * m.h / out, y1 = (y + 1) * m.h / out;
        for (int x = 0; x < out; x++) {
            int x0 = x * m.w / out, x1 = (x + 1) * m.w / out;
            int set = 0, total = 0;
            for (int yy = y0; yy < y1; yy++)
                for (int xx = x0; xx < x1; xx++) {
                    set += m.at(yy, xx) ? 1 : 0;
                    total++;
                }
            // a cell is foreground when at least half its pixels are
            if (total > 0 && 2 * set >= total) r.m[(size_t) y * out + x] = 1;
        }
    }
    return r;
}

double mask_iou(const nc::Tensor & logits, const nc::BinaryMask & target) {
    const int n = (int) logits.numel();
    MVLM_CHECK(target.h * target.w == n, "mask_iou: size mismatch");
    int inter = 0, uni = 0;
    for (int i = 0; i < n; i++) {
        bool p = logits.at(i) > 0.0, t = target.m[i] != 0;
        inter += (p && t) ? 1 : 0;
        uni += (p || t) ? 1 : 0;
    }
    return uni == 0 ? 1.0 : (double) inter / uni;
}

}  // namespace dec
