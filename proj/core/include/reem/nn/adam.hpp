#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "reem/nn/tensor.hpp"

namespace reem::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
};

/// Adam with bias correction and decoupled weight decay. Moment buffers are
/// keyed by parameter name so a parameter set can be rebuilt between steps.
class Adam {
 public:
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::uint64_t step_count() const { return step_; }

  /// One update over every view. Throws ValidationError naming the
  /// parameter if its gradient contains a non-finite value.
  void step(const std::vector<ParamView>& params);

 private:
  struct Moments {
    std::vector<double> m;
    std::vector<double> v;
  };

  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace reem::nn
