#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace numcore {

using Shape = std::vector<int>;

std::string shape_str(const Shape & s);
size_t shape_numel(const Shape & s);

// Runtime numeric modes.
// f32 compute: op outputs and parameter updates are rounded to f32
// precision after each step (storage stays double, so the f64 verification
// mode is a pure flag flip). Gradcheck turns the rounding off.
struct RuntimeModes {
    bool f32_compute  = true;
    bool check_finite = false;  // assertable debug mode, off in release runs
};
RuntimeModes & modes();

struct TensorData {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // allocated lazily, same extent as v
    bool trainable     = false;
    bool requires_grad = false;
    std::string name;

    size_t numel() const { return v.size(); }
    bool has_grad() const { return !g.empty(); }
    std::vector<double> & grad_buf();  // allocates zeros on first use
};

// Value-semantic handle to a shared tensor node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

    bool defined() const { return d_ != nullptr; }
    const Shape & shape() const { return d_->shape; }
    int dim(int i) const;           // supports negative indices
    int rank() const { return (int) d_->shape.size(); }
    size_t numel() const { return d_->v.size(); }

    std::vector<double> & data() { return d_->v; }
    const std::vector<double> & data() const { return d_->v; }
    std::vector<double> & grad() { return d_->grad_buf(); }
    bool has_grad() const { return d_->has_grad(); }
    void zero_grad();

    double item() const;            // scalar tensors only
    double at(size_t i) const { return d_->v[i]; }
    void set(size_t i, double x) { d_->v[i] = x; }

    bool trainable() const { return d_->trainable; }
    void set_trainable(bool t);
    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool r) { d_->requires_grad = r; }
    const std::string & name() const { return d_->name; }
    void set_name(const std::string & n) { d_->name = n; }

    TensorData * node() const { return d_.get(); }

    // checks all elements finite, throws naming the tensor otherwise
    void check_finite(const char * what) const;

private:
    std::shared_ptr<TensorData> d_;
};

Tensor zeros(const Shape & s);
Tensor full(const Shape & s, double value);
Tensor from_vec(const Shape & s, std::vector<double> v);
Tensor scalar(double value);
Tensor randn(const Shape & s, std::mt19937_64 & rng, double stddev = 1.0);
Tensor uniform(const Shape & s, std::mt19937_64 & rng, double lo, double hi);

// trainable parameter, init N(0, stddev)
Tensor param(const Shape & s, std::mt19937_64 & rng, double stddev, const std::string & name);
Tensor param_zeros(const Shape & s, const std::string & name);
Tensor param_full(const Shape & s, double value, const std::string & name);

// applies the f32 rounding mode to a raw buffer (no-op in f64 mode)
void apply_precision(std::vector<double> & v);

}  // namespace numcore
