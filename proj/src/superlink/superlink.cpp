#include "superlink/superlink.hpp"

#include <algorithm>

#include "common/error.hpp"

namespace sl {

using namespace numcore::ops;

SuperLink::SuperLink(const tv::Vocabulary & vocab, int dim_, const SuperLinkConfig & c,
                     std::mt19937_64 & rng)
    : cfg(c), dim(dim_) {
    std::map<int, nc::Tensor> shared_by_n;
    for (const auto & r : vocab.routing) {
        QueryBank qb;
        if (cfg.shared_banks) {
            auto it = shared_by_n.find(r.n_queries);
            if (it == shared_by_n.end())
                it = shared_by_n
                         .emplace(r.n_queries, nc::param({r.n_queries, dim}, rng, nn::k_init_std,
                                                         "q_shared"))
                         .first;
            qb.q = it->second;
        } else {
            qb.q = nc::param({r.n_queries, dim}, rng, nn::k_init_std, "q." + r.decoder);
        }
        qb.proj = nn::Mlp2(dim, rng);
        banks.emplace(r.decoder, std::move(qb));
    }
}

std::map<std::string, nc::Tensor> SuperLink::bank_matrices() const {
    std::map<std::string, nc::Tensor> out;
    for (const auto & [dec, qb] : banks) out.emplace(dec, qb.q);
    return out;
}

nc::Tensor SuperLink::project(const std::string & decoder, const nc::Tensor & hidden) const {
    auto it = banks.find(decoder);
    MVLM_CHECK(it != banks.end(), "superlink: unknown decoder '%s'", decoder.c_str());
    MVLM_CHECK(hidden.rank() == 2 && hidden.dim(1) == dim,
               "superlink: hidden rows have shape %s", nc::shape_str(hidden.shape()).c_str());
    return it->second.proj(hidden);
}

nc::Tensor SuperLink::pool_group(const nc::Tensor & projected) {
    return mean_rows(projected);
}

static bool is_generative(const std::string & decoder) {
    return decoder == "gen" || decoder == "edit";
}

std::vector<Condition> SuperLink::build_conditions(const std::vector<Event> & events) const {
    MVLM_CHECK(cfg.token_embedding_k == 0,
               "build_conditions called in token-embedding mode");
    // group by decoder, keep decoder-id order deterministic
    std::map<std::string, std::vector<const Event *>> by_dec;
    for (const auto & e : events) by_dec[e.decoder].push_back(&e);

    std::vector<Condition> out;
    for (auto & [dec, evs] : by_dec) {
        std::sort(evs.begin(), evs.end(),
                  [](const Event * a, const Event * b) { return a->group_id < b->group_id; });
        for (size_t i = 0; i < evs.size(); i++)
            MVLM_CHECK(evs[i]->group_id == (int) i,
                       "decoder '%s': group ids not dense (saw %d at %zu)", dec.c_str(),
                       evs[i]->group_id, i);
        Condition cond;
        cond.decoder = dec;
        if (is_generative(dec)) {
            MVLM_CHECK(evs.size() == 1, "decoder '%s': expected a single generation event",
                       dec.c_str());
            cond.embed = project(dec, evs[0]->hidden);  // unpooled
            cond.labels.push_back(evs[0]->label);
        } else {
            std::vector<nc::Tensor> rows;
            for (const Event * e : evs) {
                rows.push_back(pool_group(project(dec, e->hidden)));
                cond.labels.push_back(e->label);
            }
            cond.embed = concat_rows(rows);  // [G, C]
        }
        out.push_back(std::move(cond));
    }
    return out;
}

std::vector<Condition> SuperLink::token_embedding_extract(
    const std::vector<Event> & events) const {
    MVLM_CHECK(cfg.token_embedding_k > 0,
               "token_embedding_extract called in super-link mode");
    std::map<std::string, std::vector<const Event *>> by_dec;
    for (const auto & e : events) by_dec[e.decoder].push_back(&e);

    std::vector<Condition> out;
    for (auto & [dec, evs] : by_dec) {
        std::sort(evs.begin(), evs.end(),
                  [](const Event * a, const Event * b) { return a->group_id < b->group_id; });
        Condition cond;
        cond.decoder = dec;
        std::vector<nc::Tensor> rows;
        for (const Event * e : evs) {
            rows.push_back(mean_rows(e->hidden));
            cond.labels.push_back(e->label);
        }
        cond.embed = concat_rows(rows);
        out.push_back(std::move(cond));
    }
    return out;
}

std::vector<Condition> SuperLink::conditions(const std::vector<Event> & events) const {
    return cfg.token_embedding_k > 0 ? token_embedding_extract(events)
                                     : build_conditions(events);
}

void SuperLink::collect_banks(const std::string & prefix, nn::Params & out) const {
    if (cfg.shared_banks) {
        // each distinct tensor once, under a stable name
        std::vector<nc::TensorData *> seen;
        for (const auto & [dec, qb] : banks) {
            if (std::find(seen.begin(), seen.end(), qb.q.node()) != seen.end()) continue;
            seen.push_back(qb.q.node());
            out.push_back({prefix + common::format(".shared_n%d", qb.q.dim(0)), qb.q});
        }
    } else {
        for (const auto & [dec, qb] : banks) out.push_back({prefix + "." + dec, qb.q});
    }
}

void SuperLink::collect_proj(const std::string & prefix, nn::Params & out) const {
    for (const auto & [dec, qb] : banks) qb.proj.collect(prefix + "." + dec, out);
}

std::map<std::string, nc::Tensor> dispatch(
    const std::vector<Condition> & conditions,
    const std::map<std::string, std::function<nc::Tensor(const Condition &)>> & registry) {
    std::map<std::string, nc::Tensor> out;
    for (const auto & cond : conditions) {
        auto it = registry.find(cond.decoder);
        MVLM_CHECK(it != registry.end(), "dispatch: decoder '%s' not registered",
                   cond.decoder.c_str());
        MVLM_CHECK(!out.count(cond.decoder), "dispatch: decoder '%s' referenced twice",
                   cond.decoder.c_str());
        out.emplace(cond.decoder, it->second(cond));
    }
    return out;
}

}  // namespace sl
