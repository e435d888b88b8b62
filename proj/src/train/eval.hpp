#pragma once

#include <string>
#include <vector>

#include "datakit/manifest.hpp"
#include "model/model.hpp"

namespace tr {

namespace nc = numcore;

struct ApPred {
    int image = 0;
    int cls = 0;
    double score = 0.0;
    dec::Box box;
};
struct ApGt {
    int image = 0;
    int cls = 0;
    dec::Box box;
};

// greedy confidence-ordered matching within (image, class); area under the
// resulting precision-recall curve
double average_precision(std::vector<ApPred> preds, const std::vector<ApGt> & gts,
                         double iou_min);

struct Metrics {
    double routing_acc = 0.0;  // emitted decoder id and group count both match
    double ap50 = 0.0;
    double pck01 = 0.0;        // keypoint within 0.1 of target, image scale
    double mask_iou = 0.0;
    double hue_acc = 0.0;      // generated image nearest the caption color
    double perplexity = 0.0;   // teacher-forced, text tasks only
    double gen_loss = 0.0;     // diffusion + alignment loss, fixed noise seed
    int n_samples = 0, n_det = 0, n_pose = 0, n_seg = 0, n_gen = 0, n_text = 0;

    std::string summary() const;
};

Metrics evaluate(const mdl::Model & model, const std::vector<dk::DatasetManifest> & data,
                 int max_per_manifest, uint64_t seed);

}  // namespace tr
