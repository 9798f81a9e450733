#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "reem/nn/tensor.hpp"
#include "reem/rng.hpp"

namespace reem::nn {

/// Fully connected stack: affine + rectified-linear per hidden layer, affine
/// output layer. Layer sizes run input → hidden... → output.
class DenseStack {
 public:
  /// Activations recorded by the training-time forward pass.
  struct Tape {
    std::vector<Vec> act;  // act[0] = input, act[l+1] = layer l output
    std::vector<Vec> pre;  // pre-activation per layer
  };

  DenseStack() = default;

  /// He-initialized stack (weights ~ N(0, 2/fan_in), biases zero).
  DenseStack(std::vector<std::size_t> sizes, DetRng& rng);

  std::size_t input_size() const { return sizes_.empty() ? 0 : sizes_.front(); }
  std::size_t output_size() const { return sizes_.empty() ? 0 : sizes_.back(); }
  std::size_t layer_count() const { return weights_.size(); }
  const std::vector<std::size_t>& sizes() const { return sizes_; }

  Vec forward(const Vec& x) const;
  Vec forward(const Vec& x, Tape& tape) const;

  /// Accumulates parameter gradients for one example and returns dL/dx.
  Vec backward(const Tape& tape, const Vec& dy);

  void zero_grad();

  /// Copy of this stack with the final affine layer removed; used to turn a
  /// pretraining stack with a scalar head into a feature adapter.
  DenseStack without_last_layer() const;

  /// Named views over weights and gradients, prefixed e.g. "fusion.w0".
  std::vector<ParamView> params(const std::string& prefix);

 private:
  std::vector<std::size_t> sizes_;
  std::vector<Mat> weights_;
  std::vector<Vec> biases_;
  std::vector<Mat> grad_weights_;
  std::vector<Vec> grad_biases_;
};

}  // namespace reem::nn
