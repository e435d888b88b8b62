#include "llmcore/llm.hpp"

#include "common/error.hpp"
#include "numcore/tape.hpp"

namespace llm {

using namespace numcore::ops;
using tv::Row;

LLM::LLM(const LMConfig & c, std::mt19937_64 & rng) : cfg(c) {
    MVLM_CHECK(c.dim % c.heads == 0, "llm: dim %d not divisible by heads %d", c.dim, c.heads);
    MVLM_CHECK(c.vocab > 0, "llm: vocab size not set");
    tok_embed = nc::param({c.vocab, c.dim}, rng, nn::k_init_std, "tok_embed");
    out_embed = nc::param({c.vocab, c.dim}, rng, nn::k_init_std, "out_embed");
    pos_embed = nc::param({c.ctx, c.dim}, rng, nn::k_init_std, "pos_embed");
    for (int l = 0; l < c.layers; l++) blocks.emplace_back(c.dim, c.heads, rng);
    ln_f = nn::LayerNorm(c.dim);
}

Assembly LLM::assemble(const tv::RenderedSample & s, const tv::Vocabulary & vocab,
                       const std::vector<nc::Tensor> & img_feats,
                       const std::vector<nc::Tensor> & region_embeds,
                       const std::map<std::string, nc::Tensor> & banks) const {
    MVLM_CHECK(img_feats.size() == s.image_slots.size(),
               "assemble: %zu image features for %zu slots", img_feats.size(),
               s.image_slots.size());
    MVLM_CHECK(region_embeds.size() == s.region_slots.size(),
               "assemble: %zu region embeddings for %zu slots", region_embeds.size(),
               s.region_slots.size());

    int image_rows = img_feats.empty() ? 1 : img_feats[0].dim(0);
    Assembly out;
    out.layout = tv::build_layout(s, vocab, image_rows);

    std::vector<nc::Tensor> parts;
    std::vector<int> text_run;
    auto flush_text = [&] {
        if (!text_run.empty()) {
            parts.push_back(gather_rows(tok_embed, text_run));
            text_run.clear();
        }
    };

    const auto & rows = out.layout.rows;
    for (size_t t = 0; t < rows.size();) {
        const Row & r = rows[t];
        switch (r.kind) {
            case Row::Kind::text:
                text_run.push_back(r.token_id);
                t++;
                break;
            case Row::Kind::image: {
                flush_text();
                const nc::Tensor & f = img_feats[r.slot];
                MVLM_CHECK(f.dim(0) == image_rows && f.dim(1) == cfg.dim,
                           "assemble: image feature block %d has shape %s", r.slot,
                           nc::shape_str(f.shape()).c_str());
                parts.push_back(f);
                t += image_rows;
                break;
            }
            case Row::Kind::region:
                flush_text();
                MVLM_CHECK(region_embeds[r.slot].dim(0) == 1 &&
                               region_embeds[r.slot].dim(1) == cfg.dim,
                           "assemble: region embedding %d has wrong shape", r.slot);
                parts.push_back(region_embeds[r.slot]);
                t++;
                break;
            case Row::Kind::query: {
                flush_text();
                const auto & ev = s.events[r.event];
                auto it = banks.find(ev.decoder);
                MVLM_CHECK(it != banks.end(), "assemble: no query bank for decoder '%s'",
                           ev.decoder.c_str());
                const auto & r_info = vocab.routing_by_decoder(ev.decoder);
                MVLM_CHECK(it->second.dim(0) == r_info.n_queries &&
                               it->second.dim(1) == cfg.dim,
                           "assemble: bank '%s' has shape %s, want [%d,%d]", ev.decoder.c_str(),
                           nc::shape_str(it->second.shape()).c_str(), r_info.n_queries, cfg.dim);
                parts.push_back(it->second);
                t += r_info.n_queries;
                break;
            }
        }
    }
    flush_text();
    out.embeds = concat_rows(parts);
    MVLM_CHECK((size_t) out.embeds.dim(0) == rows.size(), "assemble: row count mismatch");
    return out;
}

ForwardOut LLM::forward(const nc::Tensor & embeds) const {
    int T = embeds.dim(0);
    MVLM_CHECK(T <= cfg.ctx, "llm: sequence length %d exceeds context %d", T, cfg.ctx);
    nc::Tensor x = add(embeds, slice_rows(pos_embed, 0, T));
    for (const auto & b : blocks) x = b(x, true);
    ForwardOut out;
    out.hidden = ln_f(x);
    out.logits = matmul(out.hidden, transpose(out_embed));
    return out;
}

nc::Tensor LLM::lm_loss(const nc::Tensor & logits, const std::vector<int> & targets) const {
    return cross_entropy(logits, targets);
}

GenResult LLM::generate(const nc::Tensor & prompt_embeds, const tv::Vocabulary & vocab,
                        int max_new, const std::map<std::string, nc::Tensor> & banks,
                        int token_embedding_k) const {
    nc::NoGradScope nograd;
    GenResult res;
    nc::Tensor seq = prompt_embeds;
    std::map<std::string, int> group_counter;
    std::vector<std::pair<size_t, size_t>> te_spans;  // token-embedding capture spans

    int emitted = 0;
    int predict_row = -1;  // -1 = last row; set to the routing row after injection
    while (emitted < max_new) {
        MVLM_CHECK(seq.dim(0) < cfg.ctx, "generate: context overflow at %d rows", seq.dim(0));
        ForwardOut fo = forward(seq);
        int next = argmax_row(fo.logits, predict_row < 0 ? fo.logits.dim(0) - 1 : predict_row);
        predict_row = -1;
        res.text_ids.push_back(next);
        emitted++;
        size_t pos = seq.dim(0);
        seq = concat_rows({seq, gather_rows(tok_embed, {next})});
        if (next == vocab.eos) break;

        const tv::RoutingInfo * r = vocab.routing_by_id(next);
        if (!r) continue;

        if (token_embedding_k > 0) {
            // expect the model itself to emit the remaining k-1 copies; record
            // the span and capture hidden rows after generation completes.
            // a routing token inside the previous event's span is a
            // continuation, not a new event
            if (!te_spans.empty() && pos < te_spans.back().second &&
                res.events.back().decoder == r->decoder)
                continue;
            te_spans.push_back({pos, pos + (size_t) token_embedding_k});
            GenEvent ev;
            ev.decoder = r->decoder;
            ev.group_id = group_counter[r->decoder]++;
            ev.pos = pos;
            res.events.push_back(ev);
            continue;
        }

        // super-link: inject the query block and capture its hidden rows in
        // one forward over the extended sequence
        auto it = banks.find(r->decoder);
        MVLM_CHECK(it != banks.end(), "generate: no query bank for decoder '%s'",
                   r->decoder.c_str());
        MVLM_CHECK(seq.dim(0) + r->n_queries <= cfg.ctx,
                   "generate: context overflow injecting %d query rows", r->n_queries);
        seq = concat_rows({seq, it->second});
        ForwardOut qf = forward(seq);
        GenEvent ev;
        ev.decoder = r->decoder;
        ev.group_id = group_counter[r->decoder]++;
        ev.pos = pos;
        ev.hidden_rows = slice_rows(qf.hidden, seq.dim(0) - r->n_queries, r->n_queries);
        res.events.push_back(ev);
        // the query rows are not text predictors; the resumed text comes from
        // the routing row, which matches the training targets
        predict_row = (int) pos;
    }

    if (token_embedding_k > 0 && !res.events.empty()) {
        ForwardOut fo = forward(seq);
        for (size_t e = 0; e < res.events.size(); e++) {
            auto [b, en] = te_spans[e];
            size_t end = std::min(en, (size_t) fo.hidden.dim(0));
            res.events[e].hidden_rows = slice_rows(fo.hidden, (int) b, (int) (end - b));
        }
    }
    return res;
}

void LLM::collect_body(const std::string & prefix, nn::Params & out) const {
    out.push_back({prefix + ".pos_embed", pos_embed});
    for (size_t l = 0; l < blocks.size(); l++)
        blocks[l].collect(prefix + common::format(".block%zu", l), out);
    ln_f.collect(prefix + ".ln_f", out);
}

void LLM::collect_embed(const std::string & prefix, nn::Params & out) const {
    out.push_back({prefix + ".tok_embed", tok_embed});
    out.push_back({prefix + ".out_embed", out_embed});
}

}  // namespace llm
