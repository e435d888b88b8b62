#include "train/optimizer.hpp"

#include <cmath>

#include "common/error.hpp"

namespace tr {

double LrSchedule::at(int step) const {
    MVLM_CHECK(total_steps > 0, "lr schedule: total_steps must be positive");
    int warmup = (int) (warmup_ratio * total_steps);
    if (warmup > 0 && step < warmup) return peak * (double) step / warmup;
    if (step >= total_steps) return 0.0;
    double span = total_steps - warmup;
    double frac = span > 0 ? (step - warmup) / span : 1.0;
    return peak * 0.5 * (1.0 + std::cos(frac * M_PI));
}

void AdamW::step(const std::vector<std::pair<std::string, nn::Params>> & groups,
                 const std::map<std::string, double> & group_lr) {
    t++;
    double bc1 = 1.0 - std::pow(beta1, t);
    double bc2 = 1.0 - std::pow(beta2, t);
    for (const auto & [gname, params] : groups) {
        auto it = group_lr.find(gname);
        double lr = it == group_lr.end() ? 0.0 : it->second;
        if (lr <= 0.0) continue;
        for (const auto & [pname, p] : params) {
            nc::Tensor pt = p;
            if (!pt.has_grad()) continue;
            std::vector<double> & v = pt.data();
            std::vector<double> & g = pt.grad();
            Moments & m = state[pname];
            if (m.m.empty()) {
                m.m.assign(v.size(), 0.0);
                m.v.assign(v.size(), 0.0);
            }
            MVLM_CHECK(m.m.size() == v.size(), "adamw: state size mismatch for %s",
                       pname.c_str());
            for (size_t i = 0; i < v.size(); i++) {
                double gi = g[i];
                m.m[i] = beta1 * m.m[i] + (1.0 - beta1) * gi;
                m.v[i] = beta2 * m.v[i] + (1.0 - beta2) * gi * gi;
                double mh = m.m[i] / bc1;
                double vh = m.v[i] / bc2;
                v[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * v[i]);
            }
            nc::apply_precision(v);
        }
    }
}

}  // namespace tr
