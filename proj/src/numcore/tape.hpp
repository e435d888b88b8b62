#pragma once

#include <functional>
#include <vector>

#include "numcore/tensor.hpp"

namespace numcore {

// Reverse-mode tape. Ops push their backward closures in execution order;
// backward() replays them once, in reverse, so every input precedes its
// consumers and gradients accumulate additively across shared uses.
class Tape {
public:
    void record(std::function<void()> backward_fn) {
        recs_.push_back(std::move(backward_fn));
    }
    size_t size() const { return recs_.size(); }
    void clear() { recs_.clear(); }

    // seeds grad(loss) = 1 and replays the tape
    void backward(Tensor loss);

private:
    std::vector<std::function<void()>> recs_;
};

// One tape is owned by one training step; the active tape is a scoped,
// thread-local context so op call sites stay clean.
Tape * active_tape();

class TapeScope {
public:
    explicit TapeScope(Tape & t);
    ~TapeScope();
    TapeScope(const TapeScope &) = delete;
    TapeScope & operator=(const TapeScope &) = delete;

private:
    Tape * prev_;
};

// Temporarily disables recording (inference / finite differences).
class NoGradScope {
public:
    NoGradScope();
    ~NoGradScope();
    NoGradScope(const NoGradScope &) = delete;
    NoGradScope & operator=(const NoGradScope &) = delete;

private:
    Tape * prev_;
};

void backward(Tensor loss, Tape & tape);

}  // namespace numcore
