#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "model/layers.hpp"

namespace tr {

namespace nc = numcore;

uint64_t fnv1a(const void * data, size_t n, uint64_t h = 0xcbf29ce484222325ull);

// hash of every parameter buffer in a group, order-sensitive
uint64_t group_digest(const nn::Params & params);

// records which groups a stage may update and pins digests of the frozen
// ones; verify() throws naming the first group whose bytes moved
struct FreezeLedger {
    std::map<std::string, double> group_lr;
    std::map<std::string, uint64_t> frozen;  // group name -> digest

    void capture(const std::vector<std::pair<std::string, nn::Params>> & groups);
    void verify(const std::vector<std::pair<std::string, nn::Params>> & groups) const;
};

}  // namespace tr
