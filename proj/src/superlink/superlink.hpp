#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "model/layers.hpp"
#include "textvocab/vocab.hpp"

namespace sl {

namespace nc = numcore;

struct SuperLinkConfig {
    // shared mode: decoders with equal query counts reference one bank tensor
    // (projection MLPs stay per-decoder)
    bool shared_banks = false;
    // 0 = query-injection connector; k>0 = token-embedding baseline
    int token_embedding_k = 0;
};

struct QueryBank {
    nc::Tensor q;   // [N, C]
    nn::Mlp2 proj;  // per-decoder projection MLP
};

// a routing event whose hidden rows have been captured from the LM
struct Event {
    std::string decoder;
    int group_id = 0;
    std::string label;
    nc::Tensor hidden;  // [N, C] ([k, C] in token-embedding mode)
};

struct Condition {
    std::string decoder;
    nc::Tensor embed;  // perception: [G, C] pooled per group; generation: [N, C] unpooled
    std::vector<std::string> labels;  // per group
};

struct SuperLink {
    SuperLinkConfig cfg;
    int dim = 0;
    std::map<std::string, QueryBank> banks;  // decoder id -> bank

    SuperLink() = default;
    SuperLink(const tv::Vocabulary & vocab, int dim, const SuperLinkConfig & cfg,
              std::mt19937_64 & rng);

    std::map<std::string, nc::Tensor> bank_matrices() const;

    // projects each event's hidden rows through the decoder's MLP
    nc::Tensor project(const std::string & decoder, const nc::Tensor & hidden) const;
    static nc::Tensor pool_group(const nc::Tensor & projected);  // mean over rows -> [1,C]

    // groups events by decoder; perception conditions are [G,C] ordered by
    // dense group ids, generation conditions pass the projected block unpooled
    std::vector<Condition> build_conditions(const std::vector<Event> & events) const;

    // baseline connector: per-group mean of the supervised hidden rows
    std::vector<Condition> token_embedding_extract(const std::vector<Event> & events) const;

    // events -> conditions via the active connector
    std::vector<Condition> conditions(const std::vector<Event> & events) const;

    void collect_banks(const std::string & prefix, nn::Params & out) const;
    void collect_proj(const std::string & prefix, nn::Params & out) const;
};

// invokes each referenced decoder exactly once; unreferenced decoders are not
// invoked; returns per-decoder outputs in decoder-id order
std::map<std::string, nc::Tensor> dispatch(
    const std::vector<Condition> & conditions,
    const std::map<std::string, std::function<nc::Tensor(const Condition &)>> & registry);

}  // namespace sl
