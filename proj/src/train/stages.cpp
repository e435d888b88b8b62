#include "train/stages.hpp"

#include <cmath>
#include <cstdio>

#include "common/error.hpp"
#include "numcore/tape.hpp"

namespace tr {

using namespace nc::ops;

StageConfig stage_config(const std::string & id, const common::Config & cfg,
                         int steps_per_epoch) {
    StageConfig sc;
    sc.id = id;
    sc.batch = cfg.get_int("train.batch", 8);
    sc.warmup_ratio = cfg.get_f64("train.warmup_ratio", 0.03);
    sc.epoch_steps = steps_per_epoch;

    auto epochs_to_steps = [&](double def_epochs) {
        double e = cfg.get_f64("train." + id + ".epochs", def_epochs);
        return std::max(1, (int) std::lround(e * steps_per_epoch));
    };

    if (id == "s1-pretrain") {
        sc.steps = cfg.get_int("train.s1-pretrain.steps", 500);
        double lr = cfg.get_f64("train.s1-pretrain.lr", 1e-3);
        for (const char * g : {"imgenc", "imgproj", "regenc", "regproj"}) sc.group_lr[g] = lr;
    } else if (id == "s1-tune") {
        sc.steps = epochs_to_steps(1);
        double lr = cfg.get_f64("train.s1-tune.lr", 2.5e-5);
        for (const char * g : {"llm", "llm_embed", "imgproj", "regproj"}) sc.group_lr[g] = lr;
    } else if (id == "s2") {
        sc.steps = epochs_to_steps(1);
        double lr = cfg.get_f64("train.s2.lr", 1e-5);
        for (const char * g : {"dec.det", "dec.pose", "dec.seg", "dec.gen", "slproj", "bank",
                               "regenc", "llm_embed"})
            sc.group_lr[g] = lr;
        sc.group_lr["llm"] = cfg.get_f64("stage2.llm_body_lr", 1e-5);
    } else if (id == "s3") {
        sc.steps = epochs_to_steps(12);
        double lr = cfg.get_f64("train.s3.lr", 1e-4);
        for (const char * g : {"dec.det", "dec.pose", "dec.seg", "dec.gen", "bank"})
            sc.group_lr[g] = lr;
    } else {
        common::fail(common::format("stage_config: unknown stage '%s'", id.c_str()));
    }
    return sc;
}

nc::Tensor total_loss(const std::map<std::string, nc::Tensor> & components) {
    MVLM_CHECK(!components.empty(), "total_loss: no components");
    nc::Tensor total;
    for (const auto & [name, t] : components) {
        MVLM_CHECK(std::isfinite(t.item()), "total_loss: component '%s' is non-finite",
                   name.c_str());
        total = total.defined() ? add(total, t) : t;
    }
    return total;
}

StageResult run_stage(mdl::Model & model, const StageConfig & sc,
                      const std::vector<dk::DatasetManifest> & data, AdamW & opt,
                      std::mt19937_64 & rng,
                      const std::function<void(int epoch)> & epoch_hook) {
    auto groups = model.groups();
    FreezeLedger ledger;
    ledger.group_lr = sc.group_lr;
    ledger.capture(groups);

    LrSchedule shape{1.0, sc.steps, sc.warmup_ratio};
    StageResult res;
    for (int step = 0; step < sc.steps; step++) {
        dk::Batch batch = dk::make_batch(data, sc.batch, rng);
        model.zero_grad();
        nc::Tape tape;
        double step_loss;
        {
            nc::TapeScope scope(tape);
            nc::Tensor sum;
            for (const dk::TaskSample * s : batch.samples) {
                mdl::Model::TrainOut out = model.train_forward(*s, rng);
                std::map<std::string, nc::Tensor> comps = out.decoder_losses;
                comps["llm"] = out.lm_loss;
                nc::Tensor t = total_loss(comps);
                sum = sum.defined() ? add(sum, t) : t;
            }
            nc::Tensor loss = scale(sum, 1.0 / batch.samples.size());
            step_loss = loss.item();
            nc::backward(loss, tape);
        }

        double factor = shape.at(step);
        std::map<std::string, double> lr_now;
        for (const auto & [g, lr] : sc.group_lr) lr_now[g] = lr * factor;
        opt.step(groups, lr_now);
        ledger.verify(groups);

        res.losses.push_back(step_loss);
        if (sc.log_every > 0 && (step + 1) % sc.log_every == 0)
            fprintf(stderr, "[%s] step %d/%d loss %.4f\n", sc.id.c_str(), step + 1, sc.steps,
                    step_loss);
        if (sc.epoch_steps > 0 && epoch_hook && (step + 1) % sc.epoch_steps == 0)
            epoch_hook((step + 1) / sc.epoch_steps);
    }

    int tail = std::max(1, (int) res.losses.size() / 10);
    double acc = 0;
    for (size_t i = res.losses.size() - tail; i < res.losses.size(); i++) acc += res.losses[i];
    res.tail_mean = acc / tail;
    return res;
}

std::vector<dk::DatasetManifest> standard_mix(uint64_t seed0, int n_per_task) {
    std::vector<dk::DatasetManifest> out;
    uint64_t s = seed0;
    auto push = [&](const char * name, tv::Task task, double w) {
        out.push_back(dk::make_manifest(name, task, w, s, n_per_task));
        s += (uint64_t) n_per_task;
    };
    push("vqa", tv::Task::vqa, 1.0);
    push("caption", tv::Task::caption, 1.0);
    push("det", tv::Task::det, 2.0);
    push("pose", tv::Task::pose, 2.0);
    push("seg", tv::Task::seg, 2.0);
    push("gen", tv::Task::gen, 1.0);
    push("edit", tv::Task::edit, 1.0);
    return out;
}

std::vector<dk::DatasetManifest> text_mix(uint64_t seed0, int n_per_task) {
    std::vector<dk::DatasetManifest> out;
    out.push_back(dk::make_manifest("vqa", tv::Task::vqa, 1.0, seed0, n_per_task));
    out.push_back(
        dk::make_manifest("caption", tv::Task::caption, 1.0, seed0 + n_per_task, n_per_task));
    return out;
}

PipelineResult run_pipeline(mdl::Model & model, const common::Config & cfg,
                            const std::vector<dk::DatasetManifest> & full,
                            const std::vector<dk::DatasetManifest> & text,
                            std::mt19937_64 & rng,
                            const std::function<void(const std::string &, int)> & hook) {
    size_t n_total = 0;
    for (const auto & man : full) n_total += man.samples.size();
    int batch = cfg.get_int("train.batch", 8);
    int steps_per_epoch = std::max(1, (int) n_total / batch);

    PipelineResult out;
    for (const char * id : {"s1-pretrain", "s1-tune", "s2", "s3"}) {
        StageConfig sc = stage_config(id, cfg, steps_per_epoch);
        sc.log_every = cfg.get_int("train.log_every", 0);
        const auto & data = (sc.id == "s1-pretrain" || sc.id == "s1-tune") ? text : full;
        AdamW opt;  // optimizer state does not carry across stages
        auto stage_hook = hook ? [&](int e) { hook(sc.id, e); }
                               : std::function<void(int)>{};
        out.stages[sc.id] = run_stage(model, sc, data, opt, rng, stage_hook);
    }
    return out;
}

}  // namespace tr
