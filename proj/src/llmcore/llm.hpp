#pragma once

#include <map>
#include <random>
#include <string>
#include <vector>

#include "model/layers.hpp"
#include "textvocab/render.hpp"
#include "textvocab/vocab.hpp"

namespace llm {

namespace nc = numcore;

struct LMConfig {
    int layers = 4;
    int heads = 4;
    int dim = 64;
    int ctx = 256;
    int vocab = 0;
};

struct Assembly {
    tv::Layout layout;
    nc::Tensor embeds;  // [T, dim]
};

struct ForwardOut {
    nc::Tensor logits;  // [T, vocab]
    nc::Tensor hidden;  // [T, dim] final-layer pre-logit representation
};

struct GenEvent {
    std::string decoder;
    int group_id = 0;
    size_t pos = 0;          // sequence position of the routing token
    nc::Tensor hidden_rows;  // [N, dim] (or [k, dim] in token-embedding mode)
};

struct GenResult {
    std::vector<int> text_ids;  // emitted tokens, routing tokens included
    std::vector<GenEvent> events;
};

struct LLM {
    LMConfig cfg;
    nc::Tensor tok_embed;  // [vocab, dim] input embedding
    nc::Tensor out_embed;  // [vocab, dim] output head (untied)
    nc::Tensor pos_embed;  // [ctx, dim]
    std::vector<nn::Block> blocks;
    nn::LayerNorm ln_f;

    LLM() = default;
    LLM(const LMConfig & cfg, std::mt19937_64 & rng);

    // resolves the layout's rows into one [T, dim] matrix:
    // text from tok_embed; image spans from img_feats (one [rows, dim] block
    // per slot); region rows from region_embeds ([1, dim] each); query spans
    // from banks (decoder -> [N, dim], shared across events)
    Assembly assemble(const tv::RenderedSample & s, const tv::Vocabulary & vocab,
                      const std::vector<nc::Tensor> & img_feats,
                      const std::vector<nc::Tensor> & region_embeds,
                      const std::map<std::string, nc::Tensor> & banks) const;

    ForwardOut forward(const nc::Tensor & embeds) const;

    nc::Tensor lm_loss(const nc::Tensor & logits, const std::vector<int> & targets) const;

    // greedy autoregressive generation. prompt_embeds: assembled prompt rows.
    // In super-link mode (token_embedding_k == 0), emitting a routing token
    // appends that decoder's bank rows, runs one forward over the extended
    // sequence, and captures the N last-layer hidden rows before resuming.
    // In token-embedding mode hidden rows at the k routing positions are
    // captured from a final forward instead.
    GenResult generate(const nc::Tensor & prompt_embeds, const tv::Vocabulary & vocab,
                       int max_new, const std::map<std::string, nc::Tensor> & banks,
                       int token_embedding_k = 0) const;

    void collect_body(const std::string & prefix, nn::Params & out) const;
    void collect_embed(const std::string & prefix, nn::Params & out) const;
};

}  // namespace llm
