#include "reem/nn/dense.hpp"

#include <cmath>

#include "reem/errors.hpp"

namespace reem::nn {

DenseStack::DenseStack(std::vector<std::size_t> sizes, DetRng& rng)
    : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) {
    throw ValidationError("dense stack needs at least input and output sizes");
  }
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const std::size_t fan_in = sizes_[l];
    const std::size_t fan_out = sizes_[l + 1];
    Mat w = Mat::zeros(fan_out, fan_in);
    const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (double& v : w.data) v = rng.normal() * scale;
    weights_.push_back(std::move(w));
    biases_.push_back(Vec(fan_out, 0.0));
    grad_weights_.push_back(Mat::zeros(fan_out, fan_in));
    grad_biases_.push_back(Vec(fan_out, 0.0));
  }
}

Vec DenseStack::forward(const Vec& x) const {
  if (x.size() != input_size()) {
    throw ValidationError("dense stack input size mismatch: got " +
                          std::to_string(x.size()) + ", expected " +
                          std::to_string(input_size()));
  }
  Vec h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Vec pre = matvec(weights_[l], h);
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += biases_[l][i];
    if (l + 1 < weights_.size()) {
      for (double& v : pre) v = v > 0.0 ? v : 0.0;
    }
    h = std::move(pre);
  }
  return h;
}

Vec DenseStack::forward(const Vec& x, Tape& tape) const {
  if (x.size() != input_size()) {
    throw ValidationError("dense stack input size mismatch: got " +
                          std::to_string(x.size()) + ", expected " +
                          std::to_string(input_size()));
  }
  tape.act.clear();
  tape.pre.clear();
  tape.act.push_back(x);
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Vec pre = matvec(weights_[l], tape.act.back());
    for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += biases_[l][i];
    tape.pre.push_back(pre);
    if (l + 1 < weights_.size()) {
      for (double& v : pre) v = v > 0.0 ? v : 0.0;
    }
    tape.act.push_back(std::move(pre));
  }
  return tape.act.back();
}

Vec DenseStack::backward(const Tape& tape, const Vec& dy) {
  Vec g = dy;
  for (std::size_t l = weights_.size(); l-- > 0;) {
    Vec dpre = std::move(g);
    if (l + 1 < weights_.size()) {
      for (std::size_t i = 0; i < dpre.size(); ++i) {
        if (tape.pre[l][i] <= 0.0) dpre[i] = 0.0;
      }
    }
    add_outer(grad_weights_[l], dpre, tape.act[l]);
    for (std::size_t i = 0; i < dpre.size(); ++i) grad_biases_[l][i] += dpre[i];
    g = matvec_transposed(weights_[l], dpre);
  }
  return g;
}

void DenseStack::zero_grad() {
  for (Mat& m : grad_weights_) std::fill(m.data.begin(), m.data.end(), 0.0);
  for (Vec& v : grad_biases_) std::fill(v.begin(), v.end(), 0.0);
}

DenseStack DenseStack::without_last_layer() const {
  if (weights_.size() < 2) {
    throw ValidationError("cannot remove the only layer of a dense stack");
  }
  DenseStack out;
  out.sizes_.assign(sizes_.begin(), sizes_.end() - 1);
  out.weights_.assign(weights_.begin(), weights_.end() - 1);
  out.biases_.assign(biases_.begin(), biases_.end() - 1);
  for (const Mat& w : out.weights_) {
    out.grad_weights_.push_back(Mat::zeros(w.rows, w.cols));
  }
  for (const Vec& b : out.biases_) {
    out.grad_biases_.push_back(Vec(b.size(), 0.0));
  }
  return out;
}

std::vector<ParamView> DenseStack::params(const std::string& prefix) {
  std::vector<ParamView> views;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    ParamView w;
    w.name = prefix + ".w" + std::to_string(l);
    w.value = &weights_[l].data;
    w.grad = &grad_weights_[l].data;
    w.shape = {weights_[l].rows, weights_[l].cols};
    views.push_back(std::move(w));

    ParamView b;
    b.name = prefix + ".b" + std::to_string(l);
    b.value = &biases_[l];
    b.grad = &grad_biases_[l];
    b.shape = {biases_[l].size()};
    views.push_back(std::move(b));
  }
  return views;
}

}  // namespace reem::nn
