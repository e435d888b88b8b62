#pragma once

#include <vector>

namespace dec {

// minimum-cost injective assignment of targets (columns) to predictions
// (rows) for a n_pred x n_tgt cost matrix with n_tgt <= n_pred.
// returns assign[j] = prediction index for target j.
std::vector<int> hungarian(const std::vector<std::vector<double>> & cost);

double assignment_cost(const std::vector<std::vector<double>> & cost,
                       const std::vector<int> & assign);

}  // namespace dec
