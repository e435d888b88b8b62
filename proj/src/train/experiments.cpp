#include "train/experiments.hpp"

#include <cstdio>
#include <map>

#include "common/error.hpp"
#include "numcore/tape.hpp"
#include "train/stages.hpp"

namespace tr {

namespace {

mdl::ModelConfig model_config(const common::Config & cfg) {
    mdl::ModelConfig mc;
    mc.lm.layers = cfg.get_int("model.layers", 2);
    mc.lm.heads = cfg.get_int("model.heads", 2);
    mc.lm.dim = cfg.get_int("model.dim", 32);
    mc.lm.ctx = cfg.get_int("model.ctx", 384);
    mc.n_perception_queries = cfg.get_int("model.perception_queries", 4);
    mc.n_generation_queries = cfg.get_int("model.generation_queries", 64);
    return mc;
}

struct ExpData {
    std::vector<dk::DatasetManifest> full, text, heldout;
    int eval_n;
};

ExpData exp_data(const common::Config & cfg) {
    ExpData d;
    int n = cfg.get_int("exp.n_per_task", 24);
    uint64_t seed0 = (uint64_t) cfg.get_int("exp.data_seed", 10000);
    d.full = standard_mix(seed0, n);
    d.text = text_mix(seed0, n);
    d.heldout = standard_mix(seed0 + 100000, cfg.get_int("exp.eval_n", 12));
    d.eval_n = cfg.get_int("exp.eval_n", 12);
    return d;
}

mdl::Model trained_model(const common::Config & cfg, const mdl::ModelConfig & mc,
                         const ExpData & d, uint64_t seed,
                         const std::function<void(const std::string &, int)> & hook = {}) {
    std::mt19937_64 init_rng(seed);
    mdl::Model m(mc, init_rng);
    std::mt19937_64 train_rng(seed + 1);
    run_pipeline(m, cfg, d.full, d.text, train_rng, hook);
    return m;
}

void write_text(const std::string & path, const std::string & text) {
    FILE * f = fopen(path.c_str(), "w");
    MVLM_CHECK(f != nullptr, "experiments: cannot write %s", path.c_str());
    fwrite(text.data(), 1, text.size(), f);
    fclose(f);
}

std::string metrics_cols(const Metrics & m) {
    return common::format("%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", m.routing_acc, m.ap50, m.pck01,
                          m.mask_iou, m.hue_acc, m.perplexity);
}

void copy_params(const mdl::Model & src, mdl::Model & dst) {
    std::map<std::string, nc::Tensor> by;
    for (const auto & [n, t] : src.all_params()) by.emplace(n, t);
    for (const auto & [n, t] : dst.all_params()) {
        auto it = by.find(n);
        MVLM_CHECK(it != by.end(), "copy_params: missing '%s'", n.c_str());
        nc::Tensor d = t;
        d.data() = it->second.data();
    }
}

// mean total loss over the first n samples, noise seeds fixed by (seed, sample)
double eval_loss(const mdl::Model & m, const dk::DatasetManifest & man, int n, uint64_t seed) {
    nc::NoGradScope nograd;
    double sum = 0;
    int used = std::min(n, (int) man.samples.size());
    for (int i = 0; i < used; i++) {
        std::mt19937_64 rng(seed ^ (man.samples[i].seed + 7));
        mdl::Model::TrainOut out = m.train_forward(man.samples[i], rng);
        std::map<std::string, nc::Tensor> comps = out.decoder_losses;
        comps["llm"] = out.lm_loss;
        sum += total_loss(comps).item();
    }
    return sum / used;
}

}  // namespace

QueryCountResult experiment_query_count(const common::Config & cfg, const std::string & out_dir) {
    ExpData d = exp_data(cfg);
    uint64_t seed = (uint64_t) cfg.get_int("exp.seed", 1234);
    QueryCountResult res;
    std::string csv = "n_queries,routing,ap50,pck,iou,hue,ppl\n";
    for (int n : {1, 4, 8}) {
        mdl::ModelConfig mc = model_config(cfg);
        mc.n_perception_queries = n;
        mdl::Model m = trained_model(cfg, mc, d, seed);
        Metrics met = evaluate(m, d.heldout, d.eval_n, seed + 99);
        res.rows.push_back({n, met});
        csv += common::format("%d,", n) + metrics_cols(met) + "\n";
    }
    write_text(out_dir + "/query_count.csv", csv);
    return res;
}

SharedBanksResult experiment_shared_banks(const common::Config & cfg,
                                          const std::string & out_dir) {
    ExpData d = exp_data(cfg);
    uint64_t seed = (uint64_t) cfg.get_int("exp.seed", 1234);
    SharedBanksResult res;
    std::string csv = "epoch,mode,ap50,pck\n";
    for (bool shared : {false, true}) {
        mdl::ModelConfig mc = model_config(cfg);
        mc.link.shared_banks = shared;
        const char * mode = shared ? "shared" : "separate";
        auto & curve = shared ? res.shared_curve : res.separate_curve;
        mdl::Model m;
        {
            std::mt19937_64 init_rng(seed);
            m = mdl::Model(mc, init_rng);
        }
        std::mt19937_64 train_rng(seed + 1);
        run_pipeline(m, cfg, d.full, d.text, train_rng, [&](const std::string & id, int epoch) {
            if (id != "s3") return;
            Metrics met = evaluate(m, d.heldout, d.eval_n, seed + 99);
            curve.push_back({met.ap50, met.pck01});
            csv += common::format("%d,%s,%.6f,%.6f\n", epoch, mode, met.ap50, met.pck01);
        });
        Metrics fin = evaluate(m, d.heldout, d.eval_n, seed + 99);
        (shared ? res.shared : res.separate) = fin;
    }
    write_text(out_dir + "/shared_banks.csv", csv);
    return res;
}

InfluenceResult experiment_influence(const common::Config & cfg, const std::string & out_dir) {
    uint64_t seed = (uint64_t) cfg.get_int("exp.seed", 1234);
    int steps = cfg.get_int("exp.influence_steps", 10);
    int n = cfg.get_int("exp.n_per_task", 24);
    int eval_n = cfg.get_int("exp.eval_n", 12);
    uint64_t seed0 = (uint64_t) cfg.get_int("exp.data_seed", 10000);

    const tv::Task tasks[3] = {tv::Task::det, tv::Task::pose, tv::Task::seg};
    const char * names[3] = {"det", "pose", "seg"};
    std::vector<dk::DatasetManifest> train(3), heldout(3);
    for (int i = 0; i < 3; i++) {
        train[i] = dk::make_manifest(names[i], tasks[i], 1.0, seed0 + 1000 * i, n);
        heldout[i] = dk::make_manifest(names[i], tasks[i], 1.0, seed0 + 50000 + 1000 * i, eval_n);
    }

    mdl::ModelConfig mc = model_config(cfg);
    std::mt19937_64 init_rng(seed);
    mdl::Model base(mc, init_rng);

    double before[3];
    for (int j = 0; j < 3; j++) before[j] = eval_loss(base, heldout[j], eval_n, seed + 99);

    InfluenceResult res;
    for (int i = 0; i < 3; i++) {
        std::mt19937_64 clone_rng(seed);
        mdl::Model m(mc, clone_rng);
        copy_params(base, m);
        if (steps > 0) {
            StageConfig sc;
            sc.id = std::string("influence-") + names[i];
            sc.steps = steps;
            sc.batch = cfg.get_int("train.batch", 8);
            sc.warmup_ratio = 0.0;
            double lr = cfg.get_f64("exp.influence_lr", 1e-4);
            for (const auto & [g, params] : m.groups()) sc.group_lr[g] = lr;
            AdamW opt;
            std::mt19937_64 rng(seed + 7 + i);
            std::vector<dk::DatasetManifest> only = {train[i]};
            run_stage(m, sc, only, opt, rng);
        }
        for (int j = 0; j < 3; j++)
            res.delta[i][j] = eval_loss(m, heldout[j], eval_n, seed + 99) - before[j];
    }

    std::string csv = "trained_on";
    for (int j = 0; j < 3; j++) csv += common::format(",delta_%s", names[j]);
    csv += "\n";
    for (int i = 0; i < 3; i++) {
        csv += names[i];
        for (int j = 0; j < 3; j++) csv += common::format(",%.17g", res.delta[i][j]);
        csv += "\n";
    }
    res.csv_text = csv;
    write_text(out_dir + "/influence.csv", csv);
    return res;
}

ConnectorResult experiment_connector(const common::Config & cfg, const std::string & out_dir) {
    ExpData d = exp_data(cfg);
    uint64_t seed = (uint64_t) cfg.get_int("exp.seed", 1234);
    ConnectorResult res;
    std::string csv = "mode,lm_supervised_at_routing,routing,ap50,pck,iou,hue,ppl\n";
    for (bool te : {false, true}) {
        mdl::ModelConfig mc = model_config(cfg);
        // the baseline repeats the routing token as many times as the link
        // has perception queries, so sequence budgets match
        mc.link.token_embedding_k = te ? mc.n_perception_queries : 0;
        mdl::Model m = trained_model(cfg, mc, d, seed);
        Metrics met = evaluate(m, d.heldout, d.eval_n, seed + 99);
        ConnectorRow row{te ? "tokenembed" : "superlink", te, met};
        (te ? res.tokenembed : res.superlink) = row;
        csv += row.mode + common::format(",%d,", te ? 1 : 0) + metrics_cols(met) + "\n";
    }
    write_text(out_dir + "/connector.csv", csv);
    return res;
}

StageCompareResult experiment_stage_compare(const common::Config & cfg,
                                            const std::string & out_dir) {
    ExpData d = exp_data(cfg);
    uint64_t seed = (uint64_t) cfg.get_int("exp.seed", 1234);
    mdl::ModelConfig mc = model_config(cfg);
    StageCompareResult res;

    {
        std::mt19937_64 init_rng(seed);
        mdl::Model m(mc, init_rng);
        std::mt19937_64 train_rng(seed + 1);
        run_pipeline(m, cfg, d.full, d.text, train_rng);
        res.three_stage = evaluate(m, d.heldout, d.eval_n, seed + 99);
    }
    {
        size_t n_total = 0;
        for (const auto & man : d.full) n_total += man.samples.size();
        int batch = cfg.get_int("train.batch", 8);
        int steps_per_epoch = std::max(1, (int) n_total / batch);
        StageConfig one;
        one.id = "one-stage";
        one.batch = batch;
        one.steps = 0;
        // the same step budget as the staged run, spent in a single pass;
        // every group trains at the highest rate any stage gives it
        for (const char * id : {"s1-pretrain", "s1-tune", "s2", "s3"}) {
            StageConfig sc = stage_config(id, cfg, steps_per_epoch);
            one.steps += sc.steps;
            for (const auto & [g, lr] : sc.group_lr)
                one.group_lr[g] = std::max(one.group_lr[g], lr);
        }
        std::mt19937_64 init_rng(seed);
        mdl::Model m(mc, init_rng);
        std::mt19937_64 train_rng(seed + 1);
        AdamW opt;
        run_stage(m, one, d.full, opt, train_rng);
        res.one_stage = evaluate(m, d.heldout, d.eval_n, seed + 99);
    }

    std::string csv = "regime,routing,ap50,pck,iou,hue,heldout_ppl\n";
    csv += "one-stage," + metrics_cols(res.one_stage) + "\n";
    csv += "three-stage," + metrics_cols(res.three_stage) + "\n";
    write_text(out_dir + "/stage_compare.csv", csv);
    return res;
}

}  // namespace tr
