#pragma once

#include <functional>
#include <string>
#include <vector>

#include "numcore/tensor.hpp"

namespace numcore {

struct GradCheckOptions {
    double eps = 1e-4;
    double tol = 1e-3;
    // 0 = check every coordinate; otherwise sample this many per input
    size_t max_coords_per_input = 0;
    uint64_t seed = 12345;
};

struct GradCheckReport {
    struct PerInput {
        std::string name;
        double max_rel_err = 0.0;
        size_t coords_checked = 0;
    };
    std::vector<PerInput> inputs;
    double tol = 0.0;

    bool ok() const;
    double worst() const;
    std::string summary() const;
};

// Compares analytic gradients of fn() (a scalar-valued forward pass reading
// the current values of `inputs`) against central finite differences
// (f(x+eps) - f(x-eps)) / 2eps per coordinate. Runs in f64: the f32 compute
// mode is suspended for the duration of the check.
GradCheckReport gradcheck(const std::function<Tensor()> & fn, const std::vector<Tensor> & inputs,
                          const GradCheckOptions & opt = {});

}  // namespace numcore
