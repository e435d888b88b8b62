#include "numcore/tensor.hpp"

#include <cmath>

#include "common/error.hpp"
#include "kernels/kernels.hpp"

namespace numcore {

RuntimeModes & modes() {
    static RuntimeModes m;
    return m;
}

std::string shape_str(const Shape & s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); i++) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

size_t shape_numel(const Shape & s) {
    size_t n = 1;
    for (int d : s) {
        MVLM_CHECK(d > 0, "tensor: non-positive extent in shape %s", shape_str(s).c_str());
        n *= (size_t) d;
    }
    return n;
}

std::vector<double> & TensorData::grad_buf() {
    if (g.empty()) g.assign(v.size(), 0.0);
    return g;
}

int Tensor::dim(int i) const {
    int r = rank();
    if (i < 0) i += r;
    MVLM_CHECK(i >= 0 && i < r, "tensor: dim index %d out of range for rank %d", i, r);
    return d_->shape[i];
}

void Tensor::zero_grad() {
    if (d_->has_grad()) std::fill(d_->g.begin(), d_->g.end(), 0.0);
}

double Tensor::item() const {
    MVLM_CHECK(numel() == 1, "tensor: item() on non-scalar shape %s", shape_str(shape()).c_str());
    return d_->v[0];
}

void Tensor::set_trainable(bool t) {
    d_->trainable = t;
    if (t) d_->requires_grad = true;
}

void Tensor::check_finite(const char * what) const {
    for (double x : d_->v) {
        if (!std::isfinite(x)) {
            common::fail(common::format("non-finite value in %s (tensor '%s', shape %s)",
                                        what, d_->name.c_str(), shape_str(d_->shape).c_str()));
        }
    }
}

void apply_precision(std::vector<double> & v) {
    if (modes().f32_compute) kern::get().round_f32(v.size(), v.data());
}

static Tensor make(const Shape & s, std::vector<double> v) {
    auto d = std::make_shared<TensorData>();
    d->shape = s;
    MVLM_CHECK(v.size() == shape_numel(s), "tensor: data size %zu does not match shape %s",
               v.size(), shape_str(s).c_str());
    d->v = std::move(v);
    return Tensor(std::move(d));
}

Tensor zeros(const Shape & s) { return make(s, std::vector<double>(shape_numel(s), 0.0)); }
Tensor full(const Shape & s, double value) { return make(s, std::vector<double>(shape_numel(s), value)); }
Tensor from_vec(const Shape & s, std::vector<double> v) {
    Tensor t = make(s, std::move(v));
    apply_precision(t.data());
    return t;
}
Tensor scalar(double value) { return make({1}, {value}); }

Tensor randn(const Shape & s, std::mt19937_64 & rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(shape_numel(s));
    for (double & x : v) x = dist(rng);
    Tensor t = make(s, std::move(v));
    apply_precision(t.data());
    return t;
}

Tensor uniform(const Shape & s, std::mt19937_64 & rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(s));
    for (double & x : v) x = dist(rng);
    Tensor t = make(s, std::move(v));
    apply_precision(t.data());
    return t;
}

Tensor param(const Shape & s, std::mt19937_64 & rng, double stddev, const std::string & name) {
    Tensor t = randn(s, rng, stddev);
    apply_precision(t.data());
    t.set_trainable(true);
    t.set_name(name);
    return t;
}

Tensor param_zeros(const Shape & s, const std::string & name) {
    Tensor t = zeros(s);
    t.set_trainable(true);
    t.set_name(name);
    return t;
}

Tensor param_full(const Shape & s, double value, const std::string & name) {
    Tensor t = full(s, value);
    apply_precision(t.data());
    t.set_trainable(true);
    t.set_name(name);
    return t;
}

}  // namespace numcore
