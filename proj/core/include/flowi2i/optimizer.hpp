#pragma once

#include <span>
#include <vector>

#include "flowi2i/tape.hpp"

namespace flowi2i {

/// Linear warm-up over `warmup_steps`, then constant. Steps are 1-based.
struct WarmupSchedule {
  double base_lr = 1e-4;
  int warmup_steps = 30;

  double lr_at(long step) const;
};

double global_grad_norm(std::span<Parameter* const> params);

/// Rescales all gradients so the global norm is at most max_norm.
/// Returns the norm after clipping.
double clip_grad_norm(std::span<Parameter* const> params, double max_norm);

// Adam with decoupled weight decay. Stands in for CAME; the update direction
// is the same first/second-moment family.
class Adam {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit Adam(std::vector<Parameter*> params);
  Adam(std::vector<Parameter*> params, Options options);

  void step(double lr);
  long steps_taken() const noexcept { return t_; }

 private:
  std::vector<Parameter*> params_;
  Options opt_;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
  long t_ = 0;
};

}  // namespace flowi2i
