// scratch diagnostic: train a single decoder group from a checkpoint and
// report eval metrics before/after
#include <cstdio>
#include <cstdlib>
#include <random>

#include "train/checkpoint.hpp"
#include "train/eval.hpp"
#include "train/stages.hpp"

int main(int argc, char ** argv) {
    const char * ckpt = argc > 1 ? argv[1] : "/tmp/full4.ckpt";
    double lr = argc > 2 ? atof(argv[2]) : 1e-3;
    int steps = argc > 3 ? atoi(argv[3]) : 500;

    std::mt19937_64 init_rng(1);
    mdl::ModelConfig mc;
    mc.lm.layers = 2;
    mc.lm.heads = 2;
    mc.lm.dim = 32;
    mc.lm.ctx = 384;
    mdl::Model model(mc, init_rng);
    if (std::string(ckpt) != "-") tr::load_checkpoint(ckpt, model);

    std::vector<dk::DatasetManifest> det_only;
    int n_train = argc > 4 ? atoi(argv[4]) : 256;
    uint64_t seed0 = argc > 5 ? strtoull(argv[5], nullptr, 10) : 500000;
    det_only.push_back(dk::make_manifest("det", tv::Task::det, 1.0, seed0, n_train));
    std::vector<dk::DatasetManifest> det_eval;
    det_eval.push_back(dk::make_manifest("det", tv::Task::det, 1.0, 910000, 40));

    tr::Metrics before = tr::evaluate(model, det_eval, 1000, 42);
    printf("before: %s\n", before.summary().c_str());

    {
        std::mt19937_64 r0(99);
        mdl::Model::TrainOut out = model.train_forward(det_only[0].samples[0], r0);
        printf("components: lm %.4f", out.lm_loss.item());
        for (const auto & [k, v] : out.decoder_losses) printf("  %s %.4f", k.c_str(), v.item());
        printf("\n");
    }

    tr::StageConfig sc;
    sc.id = "diag";
    sc.steps = steps;
    sc.batch = 8;
    sc.warmup_ratio = 0.03;
    sc.log_every = 100;
    sc.group_lr["dec.det"] = lr;
    tr::AdamW opt;
    std::mt19937_64 rng(7);
    tr::StageResult res = tr::run_stage(model, sc, det_only, opt, rng);
    printf("train tail mean %.4f\n", res.tail_mean);

    {
        std::mt19937_64 r0(99);
        mdl::Model::TrainOut out = model.train_forward(det_only[0].samples[0], r0);
        printf("components: lm %.4f", out.lm_loss.item());
        for (const auto & [k, v] : out.decoder_losses) printf("  %s %.4f", k.c_str(), v.item());
        printf("\n");
    }
    tr::Metrics after = tr::evaluate(model, det_eval, 1000, 42);
    printf("after:  %s\n", after.summary().c_str());
    return 0;
}
