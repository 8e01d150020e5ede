#pragma once

#include <cstdint>
#include <vector>

#include "edgeshield/tensor.hpp"

namespace edgeshield {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// Adam with bias correction. Moments live here, one pair per registered
/// parameter, and persist across step() calls.
template <typename T>
class Adam {
 public:
  Adam(std::vector<BasicTensor<T>> params, AdamConfig config = {});

  /// Applies one update using the gradients currently stored on the
  /// parameters. Throws GradientError if any parameter has no gradient.
  void step();

  void zero_grad();

  double learning_rate() const { return config_.learning_rate; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  std::uint64_t steps() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  std::vector<BasicTensor<T>> params_;
  std::vector<std::vector<double>> first_moment_;
  std::vector<std::vector<double>> second_moment_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace edgeshield
