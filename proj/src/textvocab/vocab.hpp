#pragma once

#include <string>
#include <vector>

#include "json.hpp"

namespace tv {

// byte-level base vocabulary (ids 0..255) + fixed specials + routing tokens
constexpr int k_n_base = 256;

struct RoutingInfo {
    std::string name;     // e.g. "[DET]"
    std::string decoder;  // e.g. "det"
    int n_queries = 0;
    int id = -1;
};

struct Vocabulary {
    int bos = k_n_base + 0;
    int eos = k_n_base + 1;
    int image = k_n_base + 2;
    int region = k_n_base + 3;
    std::vector<RoutingInfo> routing;

    int size() const { return k_n_base + 4 + (int) routing.size(); }

    int register_routing(const std::string & name, const std::string & decoder, int n_queries);
    bool is_routing(int id) const;
    const RoutingInfo * routing_by_id(int id) const;
    const RoutingInfo & routing_by_decoder(const std::string & decoder) const;
    const RoutingInfo & routing_by_name(const std::string & name) const;

    // atomic longest-match on special/routing names, bytes otherwise
    std::vector<int> encode(const std::string & text) const;
    std::string decode(const std::vector<int> & ids) const;
    std::string token_name(int id) const;

    nlohmann::json to_json() const;
    static Vocabulary from_json(const nlohmann::json & j);

    // [DET]/[SEG]/[POSE] with n_perception queries, [GEN]/[EDIT] with n_generation
    static Vocabulary standard(int n_det = 4, int n_seg = 4, int n_pose = 4, int n_gen = 64,
                               int n_edit = 64);
};

}  // namespace tv
