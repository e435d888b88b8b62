#pragma once

#include <map>
#include <string>
#include <vector>

#include "model/layers.hpp"

namespace tr {

namespace nc = numcore;

// linear warmup to the peak over the first warmup_ratio of steps, then
// cosine decay to zero
struct LrSchedule {
    double peak = 0.0;
    int total_steps = 1;
    double warmup_ratio = 0.03;

    double at(int step) const;
};

struct AdamW {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 0.0;

    struct Moments {
        std::vector<double> m, v;
    };
    std::map<std::string, Moments> state;  // keyed by parameter name
    int t = 0;

    // applies one update to every group with a positive learning rate;
    // parameter values are rounded to the active compute precision
    void step(const std::vector<std::pair<std::string, nn::Params>> & groups,
              const std::map<std::string, double> & group_lr);
};

}  // namespace tr
