#include "train/eval.hpp"

#include <algorithm>
#include <cmath>

#include "common/error.hpp"
#include "decoders/maskdec.hpp"
#include "numcore/tape.hpp"

namespace tr {

double average_precision(std::vector<ApPred> preds, const std::vector<ApGt> & gts,
                         double iou_min) {
    if (gts.empty()) return 0.0;
    std::stable_sort(preds.begin(), preds.end(),
                     [](const ApPred & a, const ApPred & b) { return a.score > b.score; });
    std::vector<bool> taken(gts.size(), false);
    int tp = 0, fp = 0;
    double ap = 0.0, prev_recall = 0.0;
    for (const ApPred & p : preds) {
        int best = -1;
        double best_iou = iou_min;
        for (size_t g = 0; g < gts.size(); g++) {
            if (taken[g] || gts[g].image != p.image || gts[g].cls != p.cls) continue;
            double v = dec::iou(p.box, gts[g].box);
            if (v >= best_iou) {
                best_iou = v;
                best = (int) g;
            }
        }
        if (best >= 0) {
            taken[best] = true;
            tp++;
        } else {
            fp++;
        }
        double recall = (double) tp / gts.size();
        double precision = (double) tp / (tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    return ap;
}

namespace {

// one routing event with this decoder and group count is what a correct
// transcript produces
struct Expected {
    std::string decoder;  // empty for plain text tasks
    int groups = 0;
};

Expected expected_routing(const dk::TaskSample & s) {
    switch (s.task) {
        case tv::Task::det: return {"det", (int) s.ann.classes.size()};
        case tv::Task::pose: return {"pose", (int) s.ann.classes.size()};
        case tv::Task::seg: return {"seg", (int) s.ann.masks.size()};
        case tv::Task::gen: return {"gen", 1};
        case tv::Task::edit: return {"edit", 1};
        default: return {"", 0};
    }
}

}  // namespace

Metrics evaluate(const mdl::Model & model, const std::vector<dk::DatasetManifest> & data,
                 int max_per_manifest, uint64_t seed) {
    nc::NoGradScope nograd;
    Metrics m;
    std::vector<ApPred> ap_preds;
    std::vector<ApGt> ap_gts;
    int routing_ok = 0;
    double pck_hits = 0, pck_total = 0;
    double iou_sum = 0;
    int iou_n = 0;
    int hue_hits = 0;
    double ce_sum = 0;
    double gen_sum = 0;
    int image_id = 0;

    for (const dk::DatasetManifest & man : data) {
        int n = std::min((int) man.samples.size(), max_per_manifest);
        for (int i = 0; i < n; i++) {
            const dk::TaskSample & s = man.samples[i];
            std::mt19937_64 rng(seed ^ (s.seed * 0x9e3779b97f4a7c15ull + 1));
            Expected want = expected_routing(s);

            mdl::Model::Inference res = model.infer(s, 0, 64, rng);
            bool ok;
            if (want.decoder.empty()) {
                ok = res.conditions.empty();
            } else {
                ok = res.conditions.size() == 1 && res.conditions[0].decoder == want.decoder &&
                     res.conditions[0].embed.dim(0) == want.groups;
            }
            m.n_samples++;
            if (ok) routing_ok++;

            if (s.task == tv::Task::det) {
                m.n_det++;
                for (size_t g = 0; g < s.ann.boxes.size(); g++)
                    ap_gts.push_back({image_id, (int) g, s.ann.boxes[g]});
                if (ok) {
                    for (const dec::DetPrediction & p : res.detections)
                        if (p.group_id < (int) s.ann.classes.size())
                            ap_preds.push_back({image_id, p.group_id, p.score, p.box});
                }
                image_id++;
            } else if (s.task == tv::Task::pose) {
                m.n_pose++;
                for (size_t g = 0; g < s.ann.keypoints.size(); g++) {
                    const dec::KeypointSet & ks = s.ann.keypoints[g];
                    for (int j = 0; j < dec::k_n_keypoints; j++) {
                        if (!ks.visible[j]) continue;
                        pck_total += 1;
                        if (!ok) continue;
                        double px = res.keypoints.at((size_t) g * 2 * dec::k_n_keypoints + 2 * j);
                        double py =
                            res.keypoints.at((size_t) g * 2 * dec::k_n_keypoints + 2 * j + 1);
                        double d = std::hypot(px - ks.xy[j][0], py - ks.xy[j][1]);
                        if (d <= 0.1) pck_hits += 1;
                    }
                }
            } else if (s.task == tv::Task::seg) {
                m.n_seg++;
                for (size_t g = 0; g < s.ann.masks.size(); g++) {
                    iou_n++;
                    if (!ok) continue;
                    nc::BinaryMask tgt = dec::downsample_mask(s.ann.masks[g], dec::k_mask_res);
                    iou_sum += dec::mask_iou(res.mask_logits[g], tgt);
                }
            } else if (s.task == tv::Task::gen || s.task == tv::Task::edit) {
                m.n_gen++;
                int want_color = dk::color_from_caption(s.ann.caption);
                if (ok && res.gen_image.defined() &&
                    dk::nearest_palette_color(res.gen_image) == want_color)
                    hue_hits++;
                std::mt19937_64 lrng(seed ^ (s.seed + 17));
                mdl::Model::TrainOut out = model.train_forward(s, lrng);
                auto it = out.decoder_losses.find(s.task == tv::Task::gen ? "gen" : "edit");
                MVLM_CHECK(it != out.decoder_losses.end(), "evaluate: no generation loss");
                gen_sum += it->second.item();
            } else {
                m.n_text++;
                std::mt19937_64 lrng(seed ^ (s.seed + 29));
                mdl::Model::TrainOut out = model.train_forward(s, lrng);
                ce_sum += out.lm_loss.item();
            }
        }
    }

    m.routing_acc = m.n_samples ? (double) routing_ok / m.n_samples : 0.0;
    m.ap50 = ap_gts.empty() ? 0.0 : average_precision(ap_preds, ap_gts, 0.5);
    m.pck01 = pck_total > 0 ? pck_hits / pck_total : 0.0;
    m.mask_iou = iou_n ? iou_sum / iou_n : 0.0;
    m.hue_acc = m.n_gen ? (double) hue_hits / m.n_gen : 0.0;
    m.perplexity = m.n_text ? std::exp(ce_sum / m.n_text) : 0.0;
    m.gen_loss = m.n_gen ? gen_sum / m.n_gen : 0.0;
    return m;
}

std::string Metrics::summary() const {
    return common::format(
        "routing %.3f  ap50 %.3f  pck %.3f  iou %.3f  hue %.3f  ppl %.3f  gen %.4f",
        routing_acc, ap50, pck01, mask_iou, hue_acc, perplexity, gen_loss);
}

}  // namespace tr
