#pragma once

#include <random>
#include <vector>

#include "datakit/manifest.hpp"

namespace dk {

// all entries come from one manifest, so every batch is task-homogeneous
struct Batch {
    const DatasetManifest * manifest = nullptr;
    std::vector<const TaskSample *> samples;
};

// picks a manifest with probability proportional to weight, then draws
// batch_size samples from it with replacement
Batch make_batch(const std::vector<DatasetManifest> & manifests, int batch_size,
                 std::mt19937_64 & rng);

}  // namespace dk
