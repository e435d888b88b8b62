#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "common/config.hpp"
#include "common/error.hpp"
#include "train/checkpoint.hpp"
#include "train/eval.hpp"
#include "train/experiments.hpp"
#include "train/stages.hpp"

namespace {

common::Config load_config(const std::vector<std::string> & files,
                           const std::vector<std::string> & sets) {
    common::Config cfg;
    for (const std::string & f : files) cfg.load_file(f);
    for (const std::string & kv : sets) {
        size_t eq = kv.find('=');
        MVLM_CHECK(eq != std::string::npos, "--set expects key=value, got '%s'", kv.c_str());
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

mdl::ModelConfig model_config(const common::Config & cfg) {
    mdl::ModelConfig mc;
    mc.lm.layers = cfg.get_int("model.layers", 2);
    mc.lm.heads = cfg.get_int("model.heads", 2);
    mc.lm.dim = cfg.get_int("model.dim", 32);
    mc.lm.ctx = cfg.get_int("model.ctx", 384);
    mc.n_perception_queries = cfg.get_int("model.perception_queries", 4);
    mc.n_generation_queries = cfg.get_int("model.generation_queries", 64);
    mc.link.shared_banks = cfg.get_bool("link.shared_banks", false);
    mc.link.token_embedding_k = cfg.get_int("link.token_embedding_k", 0);
    return mc;
}

std::string rng_to_str(const std::mt19937_64 & rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

int cmd_train(const common::Config & cfg, const std::vector<std::string> & stages,
              const std::string & resume, const std::string & out_path) {
    std::mt19937_64 init_rng((uint64_t) cfg.get_int("train.seed", 1));
    mdl::Model model(model_config(cfg), init_rng);
    std::mt19937_64 rng((uint64_t) cfg.get_int("train.seed", 1) + 1);
    if (!resume.empty()) {
        tr::LoadReport rep = tr::load_checkpoint(resume, model);
        if (!rep.missing.empty()) {
            fprintf(stderr, "resume: %zu parameters not in checkpoint, kept at init:\n",
                    rep.missing.size());
            for (const std::string & n : rep.missing) fprintf(stderr, "  %s\n", n.c_str());
        }
        if (!rep.rng_state.empty()) {
            std::istringstream is(rep.rng_state);
            is >> rng;
        }
    }

    int n_per_task = cfg.get_int("data.n_per_task", 64);
    uint64_t seed0 = (uint64_t) cfg.get_int("data.seed", 10000);
    auto full = tr::standard_mix(seed0, n_per_task);
    auto text = tr::text_mix(seed0, n_per_task);
    size_t n_total = 0;
    for (const auto & man : full) n_total += man.samples.size();
    int steps_per_epoch = std::max(1, (int) n_total / cfg.get_int("train.batch", 8));

    for (const std::string & id : stages) {
        tr::StageConfig sc = tr::stage_config(id, cfg, steps_per_epoch);
        sc.log_every = cfg.get_int("train.log_every", 25);
        const auto & data = (id == "s1-pretrain" || id == "s1-tune") ? text : full;
        tr::AdamW opt;
        tr::StageResult res = tr::run_stage(model, sc, data, opt, rng);
        printf("stage %s: %d steps, final-loss %.4f (tail mean %.4f)\n", id.c_str(), sc.steps,
               res.losses.back(), res.tail_mean);
    }

    std::set<std::string> save_groups;
    tr::save_checkpoint(out_path, model, cfg.dump(), rng_to_str(rng), save_groups);
    printf("saved %s\n", out_path.c_str());
    return 0;
}

int cmd_eval(const common::Config & cfg, const std::string & ckpt,
             const std::vector<std::string> & manifests) {
    std::mt19937_64 init_rng((uint64_t) cfg.get_int("train.seed", 1));
    mdl::Model model(model_config(cfg), init_rng);
    tr::load_checkpoint(ckpt, model);

    std::vector<dk::DatasetManifest> data;
    if (manifests.empty()) {
        data = tr::standard_mix((uint64_t) cfg.get_int("eval.seed", 900000),
                                cfg.get_int("eval.n_per_task", 25));
    } else {
        for (const std::string & p : manifests) data.push_back(dk::load_manifest(p));
    }
    tr::Metrics m = tr::evaluate(model, data, cfg.get_int("eval.max_per_manifest", 1000),
                                 (uint64_t) cfg.get_int("eval.seed", 900000));
    printf("%s\n", m.summary().c_str());
    return 0;
}

int cmd_infer(const common::Config & cfg, const std::string & ckpt, const std::string & prompt,
              uint64_t image_seed) {
    std::mt19937_64 init_rng((uint64_t) cfg.get_int("train.seed", 1));
    mdl::Model model(model_config(cfg), init_rng);
    tr::load_checkpoint(ckpt, model);

    dk::TaskSample sample = dk::make_sample(tv::task_from_tag(prompt), image_seed);
    std::mt19937_64 rng(image_seed + 1);
    mdl::Model::Inference res = model.infer(sample, 0, 64, rng);
    printf("response: %s\n", model.vocab.decode(res.text_ids).c_str());
    for (const auto & c : res.conditions)
        printf("routed: %s (%d groups)\n", c.decoder.c_str(), c.embed.dim(0));
    for (const auto & p : res.detections)
        printf("box: cls=%d score=%.3f (%.3f,%.3f,%.3f,%.3f)\n", p.group_id, p.score, p.box.cx,
               p.box.cy, p.box.w, p.box.h);
    if (res.keypoints.defined())
        for (int g = 0; g < res.keypoints.dim(0); g++) {
            printf("keypoints[%d]:", g);
            for (int j = 0; j < dec::k_n_keypoints; j++)
                printf(" (%.3f,%.3f)", res.keypoints.at((size_t) g * 8 + 2 * j),
                       res.keypoints.at((size_t) g * 8 + 2 * j + 1));
            printf("\n");
        }
    for (size_t r = 0; r < res.mask_logits.size(); r++) {
        printf("mask[%zu]:\n", r);
        for (int y = 0; y < dec::k_mask_res; y++) {
            for (int x = 0; x < dec::k_mask_res; x++)
                putchar(res.mask_logits[r].at((size_t) y * dec::k_mask_res + x) > 0 ? '#' : '.');
            putchar('\n');
        }
    }
    if (res.gen_image.defined())
        printf("generated hue: %s\n",
               dk::palette()[dk::nearest_palette_color(res.gen_image)].name);
    return 0;
}

int cmd_ablate(const common::Config & cfg, const std::string & which,
               const std::string & out_dir) {
    if (which == "query-count") {
        tr::QueryCountResult r = tr::experiment_query_count(cfg, out_dir);
        for (const auto & row : r.rows)
            printf("N=%d: %s\n", row.n_queries, row.m.summary().c_str());
    } else if (which == "shared-banks") {
        tr::SharedBanksResult r = tr::experiment_shared_banks(cfg, out_dir);
        printf("separate: %s\n", r.separate.summary().c_str());
        printf("shared:   %s\n", r.shared.summary().c_str());
    } else if (which == "influence") {
        tr::InfluenceResult r = tr::experiment_influence(cfg, out_dir);
        fputs(r.csv_text.c_str(), stdout);
    } else if (which == "connector") {
        tr::ConnectorResult r = tr::experiment_connector(cfg, out_dir);
        printf("superlink:  %s\n", r.superlink.m.summary().c_str());
        printf("tokenembed: %s\n", r.tokenembed.m.summary().c_str());
    } else if (which == "stages") {
        tr::StageCompareResult r = tr::experiment_stage_compare(cfg, out_dir);
        printf("one-stage:   %s\n", r.one_stage.summary().c_str());
        printf("three-stage: %s\n", r.three_stage.summary().c_str());
    } else {
        fprintf(stderr, "unknown experiment '%s'\n", which.c_str());
        return 1;
    }
    printf("reports written to %s\n", out_dir.c_str());
    return 0;
}

}  // namespace

int main(int argc, char ** argv) {
    CLI::App app{"miniature vision-language model with routed task decoders"};
    app.require_subcommand(1);
    app.fallthrough();

    std::vector<std::string> config_files, sets;
    app.add_option("--config", config_files, "config file(s), later files win")->type_size(1);
    app.add_option("--set", sets, "key=value override(s), repeatable")->type_size(1);

    auto * train = app.add_subcommand("train", "run one or more training stages");
    std::vector<std::string> stages;
    std::string resume, out_ckpt = "mvlm.ckpt";
    train->add_option("--stage", stages, "s1-pretrain, s1-tune, s2, s3 or all")->required();
    train->add_option("--resume", resume, "checkpoint to load first");
    train->add_option("--out", out_ckpt, "checkpoint to write");

    auto * ev = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string eval_ckpt;
    std::vector<std::string> eval_manifests;
    ev->add_option("--ckpt", eval_ckpt)->required();
    ev->add_option("--manifest", eval_manifests, "manifest json file(s)")->expected(-1);

    auto * inf = app.add_subcommand("infer", "run one prompt against a checkpoint");
    std::string infer_ckpt, prompt;
    uint64_t image_seed = 1;
    inf->add_option("--ckpt", infer_ckpt)->required();
    inf->add_option("--prompt", prompt, "task tag: vqa caption det seg-interactive pose gen edit")
        ->required();
    inf->add_option("--image", image_seed, "synthetic scene seed")->required();

    auto * ab = app.add_subcommand("ablate", "run an ablation experiment");
    std::string which, out_dir = ".";
    ab->add_option("experiment", which,
                   "query-count, shared-banks, influence, connector or stages")
        ->required();
    ab->add_option("--out", out_dir, "report directory");

    CLI11_PARSE(app, argc, argv);

    try {
        common::Config cfg = load_config(config_files, sets);
        if (*train) {
            if (stages.size() == 1 && stages[0] == "all")
                stages = {"s1-pretrain", "s1-tune", "s2", "s3"};
            return cmd_train(cfg, stages, resume, out_ckpt);
        }
        if (*ev) return cmd_eval(cfg, eval_ckpt, eval_manifests);
        if (*inf) return cmd_infer(cfg, infer_ckpt, prompt, image_seed);
        if (*ab) return cmd_ablate(cfg, which, out_dir);
    } catch (const std::exception & e) {
        fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
