#include "numcore/tape.hpp"

#include "common/error.hpp"

namespace numcore {

static thread_local Tape * t_active = nullptr;

Tape * active_tape() { return t_active; }

TapeScope::TapeScope(Tape & t) : prev_(t_active) { t_active = &t; }
TapeScope::~TapeScope() { t_active = prev_; }

NoGradScope::NoGradScope() : prev_(t_active) { t_active = nullptr; }
NoGradScope::~NoGradScope() { t_active = prev_; }

void Tape::backward(Tensor loss) {
    MVLM_CHECK(loss.defined() && loss.numel() == 1,
               "backward: loss must be a scalar tensor");
    loss.grad()[0] += 1.0;
    for (auto it = recs_.rbegin(); it != recs_.rend(); ++it) (*it)();
}

void backward(Tensor loss, Tape & tape) { tape.backward(loss); }

}  // namespace numcore
