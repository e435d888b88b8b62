#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "common/config.hpp"
#include "datakit/batch.hpp"
#include "model/model.hpp"
#include "train/ledger.hpp"
#include "train/optimizer.hpp"

namespace tr {

namespace nc = numcore;

struct StageConfig {
    std::string id;
    int steps = 0;
    int batch = 8;
    double warmup_ratio = 0.03;
    std::map<std::string, double> group_lr;  // absent or <= 0 means frozen
    int epoch_steps = 0;                     // 0 disables the epoch hook
    int log_every = 0;                       // 0 disables step logging
};

// built-in recipes: s1-pretrain (projections + encoders), s1-tune (language
// model joins), s2 (decoders + link wiring at low rate), s3 (decoders +
// query banks only). steps_per_epoch sizes the epoch-based stages.
StageConfig stage_config(const std::string & id, const common::Config & cfg, int steps_per_epoch);

// sums components in key order; a non-finite component aborts with its name
nc::Tensor total_loss(const std::map<std::string, nc::Tensor> & components);

struct StageResult {
    std::vector<double> losses;   // per optimizer step
    double tail_mean = 0.0;       // mean over the last tenth of the steps
};

StageResult run_stage(mdl::Model & model, const StageConfig & sc,
                      const std::vector<dk::DatasetManifest> & data, AdamW & opt,
                      std::mt19937_64 & rng,
                      const std::function<void(int epoch)> & epoch_hook = {});

// one manifest per task, consecutive seeds from seed0; perception tasks are
// double-weighted relative to text and generation
std::vector<dk::DatasetManifest> standard_mix(uint64_t seed0, int n_per_task);
std::vector<dk::DatasetManifest> text_mix(uint64_t seed0, int n_per_task);

// s1 stages run on the text mix, s2/s3 on the full mix
struct PipelineResult {
    std::map<std::string, StageResult> stages;
};
PipelineResult run_pipeline(mdl::Model & model, const common::Config & cfg,
                            const std::vector<dk::DatasetManifest> & full,
                            const std::vector<dk::DatasetManifest> & text,
                            std::mt19937_64 & rng,
                            const std::function<void(const std::string &, int)> & hook = {});

}  // namespace tr
