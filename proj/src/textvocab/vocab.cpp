#include "textvocab/vocab.hpp"

#include "common/error.hpp"

namespace tv {

int Vocabulary::register_routing(const std::string & name, const std::string & decoder,
                                 int n_queries) {
    MVLM_CHECK(n_queries >= 1, "routing token %s: n_queries must be >= 1", name.c_str());
    MVLM_CHECK(!name.empty(), "routing token name must be nonempty");
    for (const auto & r : routing)
        MVLM_CHECK(r.name != name && r.decoder != decoder,
                   "routing token %s already registered", name.c_str());
    RoutingInfo info{name, decoder, n_queries, size()};
    routing.push_back(info);
    return info.id;
}

bool Vocabulary::is_routing(int id) const {
    return id >= k_n_base + 4 && id < size();
}

const RoutingInfo * Vocabulary::routing_by_id(int id) const {
    if (!is_routing(id)) return nullptr;
    return &routing[id - (k_n_base + 4)];
}

const RoutingInfo & Vocabulary::routing_by_decoder(const std::string & decoder) const {
    for (const auto & r : routing)
        if (r.decoder == decoder) return r;
    common::fail("no routing token bound to decoder '%s'", decoder.c_str());
}

const RoutingInfo & Vocabulary::routing_by_name(const std::string & name) const {
    for (const auto & r : routing)
        if (r.name == name) return r;
    common::fail("no routing token named '%s'", name.c_str());
}

std::vector<int> Vocabulary::encode(const std::string & text) const {
    // specials are atomic: longest literal match wins over byte tokenization
    struct Lit { const std::string * s; int id; };
    static const std::string s_bos = "<s>", s_eos = "</s>", s_img = "<image>", s_reg = "<region>";
    std::vector<Lit> lits = {{&s_bos, bos}, {&s_eos, eos}, {&s_img, image}, {&s_reg, region}};
    for (const auto & r : routing) lits.push_back({&r.name, r.id});

    std::vector<int> out;
    size_t i = 0;
    while (i < text.size()) {
        const Lit * best = nullptr;
        for (const auto & l : lits) {
            if (text.compare(i, l.s->size(), *l.s) == 0 &&
                (!best || l.s->size() > best->s->size()))
                best = &l;
        }
        if (best) {
            out.push_back(best->id);
            i += best->s->size();
        } else {
            out.push_back((unsigned char) text[i]);
            i++;
        }
    }
    return out;
}

std::string Vocabulary::token_name(int id) const {
    if (id >= 0 && id < k_n_base) return std::string(1, (char) id);
    if (id == bos) return "<s>";
    if (id == eos) return "</s>";
    if (id == image) return "<image>";
    if (id == region) return "<region>";
    const RoutingInfo * r = routing_by_id(id);
    MVLM_CHECK(r, "unknown token id %d", id);
    return r->name;
}

std::string Vocabulary::decode(const std::vector<int> & ids) const {
    std::string out;
    for (int id : ids) out += token_name(id);
    return out;
}

nlohmann::json Vocabulary::to_json() const {
    nlohmann::json j;
    j["n_base"] = k_n_base;
    j["routing"] = nlohmann::json::array();
    for (const auto & r : routing)
        j["routing"].push_back({{"name", r.name}, {"decoder", r.decoder},
                                {"n_queries", r.n_queries}, {"id", r.id}});
    return j;
}

Vocabulary Vocabulary::from_json(const nlohmann::json & j) {
    MVLM_CHECK(j.value("n_base", 0) == k_n_base, "vocabulary: unexpected base size");
    Vocabulary v;
    for (const auto & rj : j.at("routing")) {
        int id = v.register_routing(rj.at("name"), rj.at("decoder"), rj.at("n_queries"));
        MVLM_CHECK(id == rj.at("id").get<int>(), "vocabulary: non-dense routing ids");
    }
    return v;
}

Vocabulary Vocabulary::standard(int n_det, int n_seg, int n_pose, int n_gen, int n_edit) {
    Vocabulary v;
    v.register_routing("[DET]", "det", n_det);
    v.register_routing("[SEG]", "seg", n_seg);
    v.register_routing("[POSE]", "pose", n_pose);
    v.register_routing("[GEN]", "gen", n_gen);
    v.register_routing("[EDIT]", "edit", n_edit);
    return v;
}

}  // namespace tv
