#ifndef BILEVEL_RL_OPTIM_HPP
#define BILEVEL_RL_OPTIM_HPP

#include <cstddef>
#include <span>
#include <vector>

namespace bilevel_rl {

enum class StepDirection { Ascend, Descend };

/// Adam with bias correction. One instance owns the moment state for one
/// parameter vector; Ascend flips the step sign for policy-gradient ascent.
class Adam {
 public:
  Adam(std::size_t n_params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);

  // Throws on non-finite gradients; params are left untouched in that case.
  void step(std::span<double> params, std::span<const double> grads, StepDirection dir);

  double lr() const { return lr_; }
  void set_lr(double lr);
  int step_count() const { return step_count_; }

 private:
  double lr_;
  double beta1_, beta2_, eps_;
  int step_count_ = 0;
  std::vector<double> m_, v_;
};

/// Step-decayed learning rate: alpha0 until start_epoch, then multiplied by
/// decay once at the end of every epoch from start_epoch on. at(m) is the
/// rate in effect during epoch m (0-indexed).
struct LrSchedule {
  double alpha0 = 1e-3;
  double decay = 0.99;
  int start_epoch = 0;

  double at(int epoch) const;
};

struct MseResult {
  double loss = 0.0;
  std::vector<double> grad;  // d loss / d pred
};

/// Mean squared error over flattened entries; gradient is 2*(pred-target)/n.
MseResult mse_loss(std::span<const double> pred, std::span<const double> target);

double l2_norm(std::span<const double> x);

}  // namespace bilevel_rl

#endif
