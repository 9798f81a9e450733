#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "reem/nn/tensor.hpp"
#include "reem/rng.hpp"

namespace reem::nn {

/// Single-head graph attention over {self} ∪ neighbors.
///
/// Scores use a leaky rectifier (slope 0.2) on aᵀ[Wh_self ‖ Wh_j], weights
/// are softmax-normalized, and the aggregated output passes through an
/// exponential-linear unit. A self-loop is always included, so an empty
/// neighbor list degrades to elu(W·self).
class GraphAttentionLayer {
 public:
  struct Tape {
    std::vector<Vec> inputs;   // inputs[0] = self, then neighbors
    std::vector<Vec> z;        // projected features, same indexing
    Vec pre;                   // raw attention scores
    Vec alpha;                 // softmax weights
    Vec aggregated;            // Σ alpha_j z_j (pre-ELU)
  };

  GraphAttentionLayer() = default;
  GraphAttentionLayer(std::size_t in_dim, std::size_t out_dim, DetRng& rng);

  std::size_t in_dim() const { return in_dim_; }
  std::size_t out_dim() const { return out_dim_; }

  Vec forward(const Vec& self_feat, const std::vector<Vec>& neighbor_feats) const;
  Vec forward(const Vec& self_feat, const std::vector<Vec>& neighbor_feats,
              Tape& tape) const;

  /// Softmax weights over {self} ∪ neighbors, in input order.
  Vec attention_weights(const Vec& self_feat,
                        const std::vector<Vec>& neighbor_feats) const;

  /// Accumulates parameter gradients; writes input gradients for the self
  /// feature and each neighbor (same indexing as the forward call).
  void backward(const Tape& tape, const Vec& dy, Vec& d_self,
                std::vector<Vec>& d_neighbors);

  void zero_grad();
  std::vector<ParamView> params(const std::string& prefix);

 private:
  std::size_t in_dim_ = 0;
  std::size_t out_dim_ = 0;
  Mat w_;
  Vec a_src_;  // attention vector half applied to the self projection
  Vec a_dst_;  // half applied to the candidate projection
  Mat grad_w_;
  Vec grad_a_src_;
  Vec grad_a_dst_;
};

}  // namespace reem::nn
