#include "decoders/detection.hpp"

#include "decoders/hungarian.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"

namespace dec {

using namespace nc::ops;

DetectionDecoder::DetectionDecoder(int dim, int heads, std::mt19937_64 & rng)
    : dim(dim),
      obj_queries(nc::param({k_queries, dim}, rng, nn::k_init_std, "det.obj_queries")),
      no_obj(nc::param({1, dim}, rng, nn::k_init_std, "det.no_obj")),
      block0(dim, heads, rng),
      block1(dim, heads, rng),
      ln_f(dim),
      box_head(dim, 4, rng) {}

DetOut DetectionDecoder::forward(const nc::Tensor & img_tokens,
                                 const nc::Tensor & condition) const {
    MVLM_CHECK(img_tokens.rank() == 2 && img_tokens.dim(1) == dim,
               "detect_forward: image tokens must be [T,%d]", dim);
    MVLM_CHECK(condition.rank() == 2 && condition.dim(1) == dim && condition.dim(0) >= 1,
               "detect_forward: condition must be [G,%d] with G >= 1", dim);
    nc::Tensor x = block1(block0(obj_queries, img_tokens), img_tokens);
    x = ln_f(x);
    DetOut out;
    out.boxes = sigmoid(box_head(x));
    nc::Tensor classes = concat_rows({condition, no_obj});
    out.logits = scale(matmul(x, transpose(classes)), 1.0 / std::sqrt((double) dim));
    return out;
}

void DetectionDecoder::collect(const std::string & prefix, nn::Params & out) const {
    out.emplace_back(prefix + ".obj_queries", obj_queries);
    out.emplace_back(prefix + ".no_obj", no_obj);
    block0.collect(prefix + ".block0", out);
    block1.collect(prefix + ".block1", out);
    ln_f.collect(prefix + ".ln_f", out);
    box_head.collect(prefix + ".box_head", out);
}

nc::Tensor detection_loss(const DetOut & out, const std::vector<DetTarget> & targets) {
    const int K = out.boxes.dim(0);
    const int G = out.logits.dim(1) - 1;
    const int T = (int) targets.size();
    MVLM_CHECK(T <= K, "detection_loss: %d targets for %d queries", T, K);
    for (const auto & t : targets)
        MVLM_CHECK(t.group_id >= 0 && t.group_id < G,
                   "detection_loss: group id %d out of range [0,%d)", t.group_id, G);

    // matching cost uses detached values; gradients flow only through the
    // loss. cost[k][j] is the exact loss increment of matching query k to
    // target j over leaving k unmatched, so the Hungarian assignment
    // provably minimizes the final loss over all injective assignments:
    //   lambda_cls/K * (CE(k, class_j) - CE(k, no-object)) + box terms / T
    std::vector<int> assign;  // assign[j] = query index for target j
    if (T > 0) {
        std::vector<std::vector<double>> cost(K, std::vector<double>(T));
        for (int k = 0; k < K; k++) {
            size_t kb = (size_t) k * 4;
            Box pb{out.boxes.at(kb), out.boxes.at(kb + 1), out.boxes.at(kb + 2),
                   out.boxes.at(kb + 3)};
            size_t kl = (size_t) k * (G + 1);
            for (int j = 0; j < T; j++) {
                const auto & tg = targets[j];
                double l1 = std::abs(pb.cx - tg.box.cx) + std::abs(pb.cy - tg.box.cy) +
                            std::abs(pb.w - tg.box.w) + std::abs(pb.h - tg.box.h);
                double d_cls = out.logits.at(kl + G) - out.logits.at(kl + tg.group_id);
                cost[k][j] = DetectionDecoder::k_lambda_cls * d_cls / K +
                             (DetectionDecoder::k_lambda_l1 * l1 +
                              DetectionDecoder::k_lambda_giou * (1.0 - giou(pb, tg.box))) / T;
            }
        }
        assign = hungarian(cost);
    }

    // classification: matched queries predict the target category, the rest
    // predict the no-object column
    std::vector<int> cls_tgt(K, G);
    for (int j = 0; j < T; j++) cls_tgt[assign[j]] = targets[j].group_id;
    nc::Tensor loss = scale(cross_entropy(out.logits, cls_tgt, /*ignore_index=*/-1),
                            DetectionDecoder::k_lambda_cls);

    if (T > 0) {
        std::vector<int> rows(T);
        nc::Tensor tgt_boxes = nc::zeros({T, 4});
        for (int j = 0; j < T; j++) {
            rows[j] = assign[j];
            size_t jb = (size_t) j * 4;
            tgt_boxes.set(jb, targets[j].box.cx);
            tgt_boxes.set(jb + 1, targets[j].box.cy);
            tgt_boxes.set(jb + 2, targets[j].box.w);
            tgt_boxes.set(jb + 3, targets[j].box.h);
        }
        nc::Tensor matched = gather_rows(out.boxes, rows);
        nc::Tensor l1 = sum_all(l1_rows(matched, tgt_boxes));
        nc::Tensor giou_term = sum_all(sub(nc::full({T, 1}, 1.0), giou_rows(matched, tgt_boxes)));
        nc::Tensor box_loss = add(scale(l1, DetectionDecoder::k_lambda_l1),
                                  scale(giou_term, DetectionDecoder::k_lambda_giou));
        loss = add(loss, scale(box_loss, 1.0 / T));
    }
    return loss;
}

std::vector<DetPrediction> read_detections(const DetOut & out) {
    const int K = out.boxes.dim(0);
    const int G = out.logits.dim(1) - 1;
    nc::Tensor probs;
    {
        nc::NoGradScope ng;
        probs = softmax(out.logits, 1);
    }
    std::vector<DetPrediction> preds(K);
    for (int k = 0; k < K; k++) {
        int best = argmax_row(probs, k);
        size_t kb = (size_t) k * 4;
        preds[k].box = {out.boxes.at(kb), out.boxes.at(kb + 1), out.boxes.at(kb + 2),
                        out.boxes.at(kb + 3)};
        preds[k].group_id = best;
        preds[k].score = best == G ? 0.0 : probs.at((size_t) k * (G + 1) + best);
    }
    return preds;
}

}  // namespace dec
