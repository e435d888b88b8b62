#include "decoders/hungarian.hpp"

#include <cmath>
#include <limits>

#include "common/error.hpp"

namespace dec {

std::vector<int> hungarian(const std::vector<std::vector<double>> & cost) {
    const int n_pred = (int) cost.size();
    MVLM_CHECK(n_pred > 0, "hungarian: empty cost matrix");
    const int n_tgt = (int) cost[0].size();
    MVLM_CHECK(n_tgt >= 1 && n_tgt <= n_pred, "hungarian: need 1 <= targets (%d) <= preds (%d)",
               n_tgt, n_pred);
    for (const auto & row : cost) {
        MVLM_CHECK((int) row.size() == n_tgt, "hungarian: ragged cost matrix");
        for (double c : row) MVLM_CHECK(std::isfinite(c), "hungarian: non-finite cost");
    }

    // potentials formulation: rows = targets, columns = predictions
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n_tgt + 1, 0.0), v(n_pred + 1, 0.0);
    std::vector<int> p(n_pred + 1, 0), way(n_pred + 1, 0);
    for (int i = 1; i <= n_tgt; i++) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n_pred + 1, inf);
        std::vector<bool> used(n_pred + 1, false);
        do {
            used[j0] = true;
            int i0 = p[j0], j1 = -1;
            double delta = inf;
            for (int j = 1; j <= n_pred; j++) {
                if (used[j]) continue;
                double cur = cost[j - 1][i0 - 1] - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n_pred; j++) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> assign(n_tgt, -1);
    for (int j = 1; j <= n_pred; j++)
        if (p[j] > 0) assign[p[j] - 1] = j - 1;
    return assign;
}

double assignment_cost(const std::vector<std::vector<double>> & cost,
                       const std::vector<int> & assign) {
    double total = 0.0;
    for (size_t j = 0; j < assign.size(); j++) total += cost[assign[j]][j];
    return total;
}

}  // namespace dec
