#pragma once

#include <set>
#include <string>
#include <vector>

#include "model/model.hpp"

namespace tr {

namespace nc = numcore;

// Binary checkpoint, little-endian throughout:
//   magic "VLCP", u32 version, then three length-prefixed strings (vocab
//   json, config dump, rng state), u32 tensor count, and per tensor a
//   length-prefixed name, u32 rank, i32 dims, and f32 values.
constexpr uint32_t k_ckpt_version = 1;

struct LoadReport {
    std::vector<std::string> missing;  // named in the model, absent from the file
    std::string config_dump;
    std::string rng_state;
};

// group filter empty = save everything; otherwise only the named groups
void save_checkpoint(const std::string & path, const mdl::Model & model,
                     const std::string & config_dump, const std::string & rng_state,
                     const std::set<std::string> & groups = {});

// loads values into matching parameters in place; unknown tensor names or
// shape mismatches throw, parameters missing from the file stay at their
// current values and are listed in the report
LoadReport load_checkpoint(const std::string & path, mdl::Model & model);

}  // namespace tr
