#include "numcore/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "common/error.hpp"
#include "numcore/tape.hpp"

namespace numcore {

bool GradCheckReport::ok() const {
    for (const auto & in : inputs)
        if (in.max_rel_err >= tol) return false;
    return true;
}

double GradCheckReport::worst() const {
    double w = 0.0;
    for (const auto & in : inputs) w = std::max(w, in.max_rel_err);
    return w;
}

std::string GradCheckReport::summary() const {
    std::string s;
    for (const auto & in : inputs) {
        s += common::format("%-32s rel_err %.3e over %zu coords %s\n", in.name.c_str(),
                            in.max_rel_err, in.coords_checked,
                            in.max_rel_err < tol ? "ok" : "FAIL");
    }
    return s;
}

static double rel_err(double a, double n) {
    double scale = std::max(std::fabs(a), std::fabs(n));
    if (scale < 1e-8) return 0.0;
    return std::fabs(a - n) / std::max(scale, 1e-6);
}

GradCheckReport gradcheck(const std::function<Tensor()> & fn, const std::vector<Tensor> & inputs,
                          const GradCheckOptions & opt) {
    MVLM_CHECK(opt.eps > 0, "gradcheck: eps must be positive");
    bool saved_f32 = modes().f32_compute;
    modes().f32_compute = false;

    // analytic pass
    for (Tensor t : inputs) {
        t.set_requires_grad(true);
        t.zero_grad();
    }
    Tape tape;
    std::vector<std::vector<double>> analytic;
    {
        TapeScope scope(tape);
        Tensor loss = fn();
        MVLM_CHECK(loss.numel() == 1, "gradcheck: fn must return a scalar");
        tape.backward(loss);
    }
    for (Tensor t : inputs) analytic.push_back(t.grad());

    GradCheckReport report;
    report.tol = opt.tol;
    std::mt19937_64 rng(opt.seed);
    for (size_t ti = 0; ti < inputs.size(); ti++) {
        Tensor t = inputs[ti];
        std::vector<size_t> coords(t.numel());
        for (size_t i = 0; i < coords.size(); i++) coords[i] = i;
        if (opt.max_coords_per_input > 0 && coords.size() > opt.max_coords_per_input) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(opt.max_coords_per_input);
        }
        GradCheckReport::PerInput pi;
        pi.name = t.name().empty() ? common::format("input[%zu]", ti) : t.name();
        pi.coords_checked = coords.size();
        NoGradScope nograd;
        for (size_t c : coords) {
            double orig = t.data()[c];
            t.data()[c] = orig + opt.eps;
            double fp = fn().item();
            t.data()[c] = orig - opt.eps;
            double fm = fn().item();
            t.data()[c] = orig;
            double numeric = (fp - fm) / (2.0 * opt.eps);
            pi.max_rel_err = std::max(pi.max_rel_err, rel_err(analytic[ti][c], numeric));
        }
        report.inputs.push_back(std::move(pi));
    }

    modes().f32_compute = saved_f32;
    return report;
}

}  // namespace numcore
