#include "reem/nn/gat.hpp"

#include <algorithm>
#include <cmath>

#include "reem/errors.hpp"

namespace reem::nn {

namespace {
constexpr double kLeakySlope = 0.2;

double elu(double v) { return v > 0.0 ? v : std::expm1(v); }
double elu_grad(double v) { return v > 0.0 ? 1.0 : std::exp(v); }
}  // namespace

GraphAttentionLayer::GraphAttentionLayer(std::size_t in_dim,
                                         std::size_t out_dim, DetRng& rng)
    : in_dim_(in_dim), out_dim_(out_dim) {
  w_ = Mat::zeros(out_dim, in_dim);
  const double w_scale = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (double& v : w_.data) v = rng.normal() * w_scale;
  const double a_scale = std::sqrt(1.0 / static_cast<double>(out_dim));
  a_src_.resize(out_dim);
  a_dst_.resize(out_dim);
  for (double& v : a_src_) v = rng.normal() * a_scale;
  for (double& v : a_dst_) v = rng.normal() * a_scale;
  grad_w_ = Mat::zeros(out_dim, in_dim);
  grad_a_src_.assign(out_dim, 0.0);
  grad_a_dst_.assign(out_dim, 0.0);
}

Vec GraphAttentionLayer::forward(const Vec& self_feat,
                                 const std::vector<Vec>& neighbor_feats) const {
  Tape tape;
  return forward(self_feat, neighbor_feats, tape);
}

Vec GraphAttentionLayer::forward(const Vec& self_feat,
                                 const std::vector<Vec>& neighbor_feats,
                                 Tape& tape) const {
  if (self_feat.size() != in_dim_) {
    throw ValidationError("gat input size mismatch: got " +
                          std::to_string(self_feat.size()) + ", expected " +
                          std::to_string(in_dim_));
  }
  for (const Vec& n : neighbor_feats) {
    if (n.size() != in_dim_) {
      throw ValidationError("gat neighbor size mismatch: got " +
                            std::to_string(n.size()) + ", expected " +
                            std::to_string(in_dim_));
    }
  }

  tape.inputs.clear();
  tape.inputs.push_back(self_feat);
  for (const Vec& n : neighbor_feats) tape.inputs.push_back(n);

  const std::size_t count = tape.inputs.size();
  tape.z.clear();
  tape.z.reserve(count);
  for (const Vec& h : tape.inputs) tape.z.push_back(matvec(w_, h));

  const double src_score = dot(a_src_, tape.z[0]);
  tape.pre.assign(count, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    const double raw = src_score + dot(a_dst_, tape.z[j]);
    tape.pre[j] = raw > 0.0 ? raw : kLeakySlope * raw;
  }

  // Max-subtracted softmax over the leaky-rectified scores.
  const double m = *std::max_element(tape.pre.begin(), tape.pre.end());
  tape.alpha.assign(count, 0.0);
  double denom = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    tape.alpha[j] = std::exp(tape.pre[j] - m);
    denom += tape.alpha[j];
  }
  for (double& a : tape.alpha) a /= denom;

  tape.aggregated.assign(out_dim_, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t d = 0; d < out_dim_; ++d) {
      tape.aggregated[d] += tape.alpha[j] * tape.z[j][d];
    }
  }

  Vec out(out_dim_);
  for (std::size_t d = 0; d < out_dim_; ++d) out[d] = elu(tape.aggregated[d]);
  return out;
}

Vec GraphAttentionLayer::attention_weights(
    const Vec& self_feat, const std::vector<Vec>& neighbor_feats) const {
  Tape tape;
  forward(self_feat, neighbor_feats, tape);
  return tape.alpha;
}

void GraphAttentionLayer::backward(const Tape& tape, const Vec& dy,
                                   Vec& d_self, std::vector<Vec>& d_neighbors) {
  const std::size_t count = tape.inputs.size();

  Vec du(out_dim_);
  for (std::size_t d = 0; d < out_dim_; ++d) {
    du[d] = dy[d] * elu_grad(tape.aggregated[d]);
  }

  // u = Σ_j alpha_j z_j
  Vec dalpha(count, 0.0);
  std::vector<Vec> dz(count, Vec(out_dim_, 0.0));
  for (std::size_t j = 0; j < count; ++j) {
    dalpha[j] = dot(du, tape.z[j]);
    for (std::size_t d = 0; d < out_dim_; ++d) {
      dz[j][d] += tape.alpha[j] * du[d];
    }
  }

  // Softmax jacobian: de_j = alpha_j (dalpha_j − Σ_k alpha_k dalpha_k).
  double weighted = 0.0;
  for (std::size_t k = 0; k < count; ++k) weighted += tape.alpha[k] * dalpha[k];
  Vec dpre(count, 0.0);
  for (std::size_t j = 0; j < count; ++j) {
    const double de = tape.alpha[j] * (dalpha[j] - weighted);
    // The stored pre is already leaky-rectified; raw > 0 iff rectified > 0.
    dpre[j] = de * (tape.pre[j] > 0.0 ? 1.0 : kLeakySlope);
  }

  // pre_j = a_src·z_0 + a_dst·z_j.
  double dpre_sum = 0.0;
  for (double v : dpre) dpre_sum += v;
  for (std::size_t d = 0; d < out_dim_; ++d) {
    grad_a_src_[d] += dpre_sum * tape.z[0][d];
    dz[0][d] += dpre_sum * a_src_[d];
  }
  for (std::size_t j = 0; j < count; ++j) {
    for (std::size_t d = 0; d < out_dim_; ++d) {
      grad_a_dst_[d] += dpre[j] * tape.z[j][d];
      dz[j][d] += dpre[j] * a_dst_[d];
    }
  }

  // z_j = W h_j.
  d_self.assign(in_dim_, 0.0);
  d_neighbors.assign(count - 1, Vec(in_dim_, 0.0));
  for (std::size_t j = 0; j < count; ++j) {
    add_outer(grad_w_, dz[j], tape.inputs[j]);
    Vec dh = matvec_transposed(w_, dz[j]);
    if (j == 0) {
      d_self = std::move(dh);
    } else {
      d_neighbors[j - 1] = std::move(dh);
    }
  }
}

void GraphAttentionLayer::zero_grad() {
  std::fill(grad_w_.data.begin(), grad_w_.data.end(), 0.0);
  std::fill(grad_a_src_.begin(), grad_a_src_.end(), 0.0);
  std::fill(grad_a_dst_.begin(), grad_a_dst_.end(), 0.0);
}

std::vector<ParamView> GraphAttentionLayer::params(const std::string& prefix) {
  std::vector<ParamView> views;
  ParamView w;
  w.name = prefix + ".w";
  w.value = &w_.data;
  w.grad = &grad_w_.data;
  w.shape = {w_.rows, w_.cols};
  views.push_back(std::move(w));

  ParamView src;
  src.name = prefix + ".a_src";
  src.value = &a_src_;
  src.grad = &grad_a_src_;
  src.shape = {a_src_.size()};
  views.push_back(std::move(src));

  ParamView dst;
  dst.name = prefix + ".a_dst";
  dst.value = &a_dst_;
  dst.grad = &grad_a_dst_;
  dst.shape = {a_dst_.size()};
  views.push_back(std::move(dst));
  return views;
}

}  // namespace reem::nn
