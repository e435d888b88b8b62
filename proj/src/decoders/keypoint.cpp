#include "decoders/keypoint.hpp"

#include "common/error.hpp"

namespace dec {

using namespace nc::ops;

KeypointDecoder::KeypointDecoder(int dim, int heads, std::mt19937_64 & rng)
    : dim(dim), block(dim, heads, rng), ln_f(dim), head(dim, 2 * k_n_keypoints, rng) {}

nc::Tensor KeypointDecoder::forward(const nc::Tensor & img_tokens,
                                    const nc::Tensor & condition) const {
    MVLM_CHECK(condition.rank() == 2 && condition.dim(1) == dim,
               "keypoint_forward: condition must be [G,%d]", dim);
    return sigmoid(head(ln_f(block(condition, img_tokens))));
}

void KeypointDecoder::collect(const std::string & prefix, nn::Params & out) const {
    block.collect(prefix + ".block", out);
    ln_f.collect(prefix + ".ln_f", out);
    head.collect(prefix + ".head", out);
}

nc::Tensor keypoint_loss(const nc::Tensor & coords, const std::vector<KeypointSet> & targets) {
    const int G = coords.dim(0);
    MVLM_CHECK((int) targets.size() == G, "keypoint_loss: %zu target sets for %d groups",
               targets.size(), G);
    MVLM_CHECK(coords.dim(1) == 2 * k_n_keypoints, "keypoint_loss: coords must be [G,%d]",
               2 * k_n_keypoints);
    nc::Tensor tgt = nc::zeros(coords.shape());
    nc::Tensor mask = nc::zeros(coords.shape());
    int n_visible = 0;
    for (int g = 0; g < G; g++) {
        for (int j = 0; j < k_n_keypoints; j++) {
            if (!targets[g].visible[j]) continue;
            size_t base = (size_t) g * 2 * k_n_keypoints + 2 * j;
            tgt.set(base, targets[g].xy[j][0]);
            tgt.set(base + 1, targets[g].xy[j][1]);
            mask.set(base, 1.0);
            mask.set(base + 1, 1.0);
            n_visible++;
        }
    }
    if (n_visible == 0) return nc::scalar(0.0);
    return scale(sum_all(mul(abs(sub(coords, tgt)), mask)), 1.0 / (2.0 * n_visible));
}

}  // namespace dec
