#include "datakit/batch.hpp"

#include "common/error.hpp"

namespace dk {

Batch make_batch(const std::vector<DatasetManifest> & manifests, int batch_size,
                 std::mt19937_64 & rng) {
    MVLM_CHECK(!manifests.empty(), "make_batch: no manifests");
    MVLM_CHECK(batch_size >= 1, "make_batch: batch size %d", batch_size);
    double total = 0;
    for (const auto & m : manifests) {
        MVLM_CHECK(m.weight > 0 && !m.samples.empty(), "make_batch: manifest %s invalid",
                   m.name.c_str());
        total += m.weight;
    }
    // cumulative scan keeps the draw portable across standard libraries
    double u = std::uniform_real_distribution<double>(0.0, total)(rng);
    const DatasetManifest * pick = &manifests.back();
    double acc = 0;
    for (const auto & m : manifests) {
        acc += m.weight;
        if (u < acc) {
            pick = &m;
            break;
        }
    }
    Batch b;
    b.manifest = pick;
    std::uniform_int_distribution<size_t> ds(0, pick->samples.size() - 1);
    for (int i = 0; i < batch_size; i++) b.samples.push_back(&pick->samples[ds(rng)]);
    return b;
}

}  // namespace dk
