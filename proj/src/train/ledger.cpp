#include "train/ledger.hpp"

#include "common/error.hpp"

namespace tr {

uint64_t fnv1a(const void * data, size_t n, uint64_t h) {
    const unsigned char * p = (const unsigned char *) data;
    for (size_t i = 0; i < n; i++) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t group_digest(const nn::Params & params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto & [name, t] : params) {
        h = fnv1a(name.data(), name.size(), h);
        h = fnv1a(t.data().data(), t.data().size() * sizeof(double), h);
    }
    return h;
}

void FreezeLedger::capture(const std::vector<std::pair<std::string, nn::Params>> & groups) {
    frozen.clear();
    for (const auto & [name, params] : groups) {
        auto it = group_lr.find(name);
        bool trained = it != group_lr.end() && it->second > 0.0;
        if (!trained) frozen[name] = group_digest(params);
    }
}

void FreezeLedger::verify(const std::vector<std::pair<std::string, nn::Params>> & groups) const {
    for (const auto & [name, params] : groups) {
        auto it = frozen.find(name);
        if (it == frozen.end()) continue;
        MVLM_CHECK(group_digest(params) == it->second,
                   "freeze ledger: frozen group '%s' was modified", name.c_str());
    }
}

}  // namespace tr
