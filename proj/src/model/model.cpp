#include "model/model.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace mdl {

using namespace nc::ops;

Model::Model(const ModelConfig & c, std::mt19937_64 & rng) : cfg(c) {
    vocab = tv::Vocabulary::standard(cfg.n_perception_queries, cfg.n_perception_queries,
                                     cfg.n_perception_queries, cfg.n_generation_queries,
                                     cfg.n_generation_queries);
    templates = tv::TemplateBank::standard();
    cfg.lm.vocab = vocab.size();
    cfg.img.dim = cfg.lm.dim;

    imgenc = enc::ImageEncoder(cfg.img, rng);
    regenc = enc::RegionEncoder(cfg.lm.dim, cfg.img.tile_px, rng);
    lm = llm::LLM(cfg.lm, rng);
    link = sl::SuperLink(vocab, cfg.lm.dim, cfg.link, rng);
    det_dec = dec::DetectionDecoder(cfg.lm.dim, cfg.lm.heads, rng);
    pose_dec = dec::KeypointDecoder(cfg.lm.dim, cfg.lm.heads, rng);
    mask_dec = dec::MaskDecoder(cfg.lm.dim, rng);
    gen_dec = dec::GenerationDecoder(cfg.lm.dim, cfg.lm.heads, rng);
}

Model::Encoded Model::encode_image(const enc::Image & img) const {
    enc::TileLayout tl = enc::select_ratio(img.h, img.w, enc::default_ratio_set(), cfg.max_tiles);
    enc::Tiles tiles = enc::tile_image(img, tl, cfg.img.tile_px);
    enc::ImageEncoder::Out out = imgenc.encode(tiles);
    return {out.tokens, out.global_map, tiles.global};
}

namespace {

// hidden rows backing each routing event: the injected query span, or the k
// supervised routing-token rows in token-embedding mode
std::vector<sl::Event> collect_events(const tv::RenderedSample & s, const tv::Layout & layout,
                                      const nc::Tensor & hidden) {
    std::vector<sl::Event> events;
    for (size_t e = 0; e < s.events.size(); e++) {
        const tv::RoutingEvent & ev = s.events[e];
        sl::Event out{ev.decoder, ev.group_id, ev.label, {}};
        if (s.token_embedding_k == 0) {
            auto span = layout.query_spans[e];
            out.hidden = slice_rows(hidden, (int) span.first, (int) (span.second - span.first));
        } else {
            int row = -1;
            for (size_t t = 0; t < layout.rows.size(); t++)
                if (layout.rows[t].kind == tv::Row::Kind::text && layout.rows[t].src_pos == ev.pos)
                    row = (int) t;
            MVLM_CHECK(row >= 0, "collect_events: routing position %zu not in layout", ev.pos);
            out.hidden = slice_rows(hidden, row, s.token_embedding_k);
        }
        events.push_back(std::move(out));
    }
    return events;
}

}  // namespace

Model::TrainOut Model::train_forward(const dk::TaskSample & sample, std::mt19937_64 & rng) const {
    dk::Scene scene = dk::synth_scene(sample.seed);
    tv::RenderOpts ropts;
    ropts.token_embedding_k = cfg.link.token_embedding_k;
    tv::RenderedSample rendered = tv::render_template(sample.task, dk::render_annotation(sample),
                                                      templates, vocab, rng, ropts);

    Encoded enc_out = encode_image(scene.image);
    std::vector<nc::Tensor> img_feats(rendered.image_slots.size(), enc_out.img_tokens);

    std::vector<nc::Tensor> region_embeds;
    for (size_t r = 0; r < rendered.region_slots.size(); r++) {
        MVLM_CHECK(r < sample.ann.masks.size(), "train_forward: region %zu has no mask", r);
        nc::BinaryMask m = dec::downsample_mask(sample.ann.masks[r], cfg.img.tile_px);
        region_embeds.push_back(regenc.encode(enc_out.global_tile, m, enc_out.global_map));
    }

    llm::Assembly asm_out = lm.assemble(rendered, vocab, img_feats, region_embeds,
                                        link.bank_matrices());
    llm::ForwardOut fwd = lm.forward(asm_out.embeds);

    TrainOut out;
    out.rendered = rendered;
    out.lm_loss = lm.lm_loss(fwd.logits, tv::make_targets(asm_out.layout, rendered));

    std::vector<sl::Event> events = collect_events(rendered, asm_out.layout, fwd.hidden);
    std::vector<sl::Condition> conditions = link.conditions(events);

    std::map<std::string, std::function<nc::Tensor(const sl::Condition &)>> registry;
    registry["det"] = [&](const sl::Condition & c) {
        std::vector<dec::DetTarget> targets;
        for (size_t i = 0; i < sample.ann.boxes.size(); i++)
            targets.push_back({sample.ann.boxes[i], (int) i});
        return dec::detection_loss(det_dec.forward(enc_out.img_tokens, c.embed), targets);
    };
    registry["pose"] = [&](const sl::Condition & c) {
        MVLM_CHECK((int) sample.ann.keypoints.size() == c.embed.dim(0),
                   "train_forward: %zu keypoint sets for %d groups", sample.ann.keypoints.size(),
                   c.embed.dim(0));
        return dec::keypoint_loss(pose_dec.forward(enc_out.img_tokens, c.embed),
                                  sample.ann.keypoints);
    };
    registry["seg"] = [&](const sl::Condition & c) {
        int G = c.embed.dim(0);
        MVLM_CHECK((int) sample.ann.masks.size() == G, "train_forward: %zu masks for %d groups",
                   sample.ann.masks.size(), G);
        nc::Tensor total;
        for (int g = 0; g < G; g++) {
            nc::BinaryMask tgt = dec::downsample_mask(sample.ann.masks[g], dec::k_mask_res);
            nc::Tensor l = dec::mask_loss(mask_dec.forward(enc_out.global_map,
                                                           slice_rows(c.embed, g, 1)),
                                          tgt);
            total = total.defined() ? add(total, l) : l;
        }
        return scale(total, 1.0 / G);
    };
    auto gen_like = [&](const sl::Condition & c, bool edit) {
        int color = dk::color_from_caption(sample.ann.caption);
        MVLM_CHECK(color >= 0, "train_forward: caption '%s' names no palette color",
                   sample.ann.caption.c_str());
        dec::GenTarget target;
        target.image = dk::solid_gen_image(color);
        target.caption = sample.ann.caption;
        if (edit) target.source = image_to_gen_rows(scene.image);
        int t = 1 + (int) (rng() % dec::DiffusionSchedule::k_steps);
        nc::Tensor noise = nc::randn({dec::k_gen_pixels, 3}, rng);
        return gen_dec.loss(target, gen_dec.qformer_map(c.embed), t, noise);
    };
    registry["gen"] = [&](const sl::Condition & c) { return gen_like(c, false); };
    registry["edit"] = [&](const sl::Condition & c) { return gen_like(c, true); };

    out.decoder_losses = sl::dispatch(conditions, registry);
    return out;
}

Model::Inference Model::infer(const dk::TaskSample & sample, size_t tmpl_idx, int max_new,
                              std::mt19937_64 & sample_rng) const {
    dk::Scene scene = dk::synth_scene(sample.seed);
    tv::Annotation ann = dk::render_annotation(sample);
    std::vector<int> prompt = tv::render_prompt(sample.task, ann, templates, vocab, tmpl_idx);

    tv::RenderedSample ps;
    ps.task = sample.task;
    ps.ids = prompt;
    ps.loss_mask.assign(prompt.size(), 0);
    ps.token_embedding_k = cfg.link.token_embedding_k;
    for (size_t i = 0; i < prompt.size(); i++) {
        if (prompt[i] == vocab.image) ps.image_slots.push_back(i);
        if (prompt[i] == vocab.region) ps.region_slots.push_back(i);
    }

    Encoded enc_out = encode_image(scene.image);
    std::vector<nc::Tensor> img_feats(ps.image_slots.size(), enc_out.img_tokens);
    std::vector<nc::Tensor> region_embeds;
    for (size_t r = 0; r < ps.region_slots.size(); r++) {
        MVLM_CHECK(r < sample.ann.masks.size(), "infer: region %zu has no mask", r);
        nc::BinaryMask m = dec::downsample_mask(sample.ann.masks[r], cfg.img.tile_px);
        region_embeds.push_back(regenc.encode(enc_out.global_tile, m, enc_out.global_map));
    }

    llm::Assembly asm_out = lm.assemble(ps, vocab, img_feats, region_embeds,
                                        link.bank_matrices());
    llm::GenResult gen = lm.generate(asm_out.embeds, vocab, max_new, link.bank_matrices(),
                                     cfg.link.token_embedding_k);

    Inference res;
    res.text_ids = gen.text_ids;
    std::vector<sl::Event> events;
    for (const auto & e : gen.events) events.push_back({e.decoder, e.group_id, "", e.hidden_rows});
    res.conditions = link.conditions(events);

    nc::NoGradScope nograd;
    for (const auto & c : res.conditions) {
        if (c.decoder == "det") {
            res.detections = dec::read_detections(det_dec.forward(enc_out.img_tokens, c.embed));
        } else if (c.decoder == "pose") {
            res.keypoints = pose_dec.forward(enc_out.img_tokens, c.embed);
        } else if (c.decoder == "seg") {
            for (int g = 0; g < c.embed.dim(0); g++)
                res.mask_logits.push_back(
                    mask_dec.forward(enc_out.global_map, slice_rows(c.embed, g, 1)));
        } else if (c.decoder == "gen" || c.decoder == "edit") {
            nc::Tensor source;
            if (c.decoder == "edit") source = image_to_gen_rows(scene.image);
            res.gen_image = gen_dec.sample(gen_dec.qformer_map(c.embed), sample_rng, source);
        }
    }
    return res;
}

std::vector<std::pair<std::string, nn::Params>> Model::groups() const {
    std::vector<std::pair<std::string, nn::Params>> g;
    auto grp = [&](const std::string & name) -> nn::Params & {
        g.emplace_back(name, nn::Params{});
        return g.back().second;
    };
    imgenc.collect_trunk("imgenc", grp("imgenc"));
    imgenc.collect_proj("imgproj", grp("imgproj"));
    regenc.collect_trunk("regenc", grp("regenc"));
    regenc.collect_proj("regproj", grp("regproj"));
    lm.collect_body("llm", grp("llm"));
    lm.collect_embed("llm_embed", grp("llm_embed"));
    link.collect_banks("bank", grp("bank"));
    link.collect_proj("slproj", grp("slproj"));
    det_dec.collect("dec.det", grp("dec.det"));
    pose_dec.collect("dec.pose", grp("dec.pose"));
    mask_dec.collect("dec.seg", grp("dec.seg"));
    gen_dec.collect("dec.gen", grp("dec.gen"));
    return g;
}

nn::Params Model::all_params() const {
    nn::Params all;
    for (const auto & [name, params] : groups())
        all.insert(all.end(), params.begin(), params.end());
    return all;
}

void Model::zero_grad() const {
    for (auto & [name, t] : all_params()) const_cast<nc::Tensor &>(t).zero_grad();
}

nc::Tensor image_to_gen_rows(const enc::Image & img) {
    enc::Image small = enc::resize_image(img, dec::k_gen_res, dec::k_gen_res);
    nc::Tensor rows = nc::zeros({dec::k_gen_pixels, 3});
    for (int y = 0; y < dec::k_gen_res; y++)
        for (int x = 0; x < dec::k_gen_res; x++)
            for (int c = 0; c < 3; c++)
                rows.set(((size_t) y * dec::k_gen_res + x) * 3 + c,
                         small.at(c, y, x) * 2 - 1);
    return rows;
}

}  // namespace mdl
