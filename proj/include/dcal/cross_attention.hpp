#pragma once

#include <random>
#include <stdexcept>
#include <vector>

#include "dcal/attention.hpp"
#include "dcal/ops.hpp"
#include "dcal/rollout.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

// Cross-attention between a reduced query set and the global key/value set.
// Identical math to scaled_dot_attention; kept as a named entry point.
template <typename T>
AttentionResult<T> glca(const Tensor<T>& q_local, const Tensor<T>& k_global,
                        const Tensor<T>& v_global) {
  return scaled_dot_attention(q_local, k_global, v_global);
}

// GLCA block: queries are the selected rows of LN1(X), keys/values the full
// set. The residual adds the selected rows of X; FFN sublayer as usual.
// No stochastic depth on this branch.
template <typename T>
EncoderBlockResult<T> glca_block(const Tensor<T>& x, const LocalSelection& sel,
                                 const EncoderBlockParams<T>& p, int heads) {
  for (int i : sel.indices)
    if (i < 0 || i >= x.rows())
      throw std::out_of_range("glca_block: selection index " + std::to_string(i) +
                              " outside " + x.shape_str());
  Tensor<T> xn = layer_norm(x, p.ln1_g, p.ln1_b);
  auto attn = multi_head_core(gather_rows(xn, sel.indices), {xn}, p, heads);
  Tensor<T> y1 = add(gather_rows(x, sel.indices), attn.output);
  Tensor<T> out = add(y1, feed_forward(layer_norm(y1, p.ln2_g, p.ln2_b), p));
  return {out, attn.heads};
}

// softmax(Q1 [K1;K2]^T / sqrt(d)) [V1;V2]: all 2N+2 scores normalized by one
// softmax, so the distractor contaminates the target's attention weights.
template <typename T>
AttentionResult<T> pwca(const Tensor<T>& q1, const Tensor<T>& k1, const Tensor<T>& v1,
                        const Tensor<T>& k2, const Tensor<T>& v2) {
  return scaled_dot_attention(q1, concat_rows<T>({k1, k2}), concat_rows<T>({v1, v2}));
}

// PWCA block for the target sequence. `x_partner` is the distractor's clean
// representation entering the same depth; keys/values of both sequences are
// projected with the shared block parameters. Residual and FFN act on the
// target only.
template <typename T>
EncoderBlockResult<T> pwca_block(const Tensor<T>& x, const Tensor<T>& x_partner,
                                 const EncoderBlockParams<T>& p, int heads,
                                 T drop_prob, bool training, std::mt19937_64& rng) {
  if (x.cols() != x_partner.cols())
    throw std::invalid_argument("pwca_block: width mismatch, " + x.shape_str() +
                                " vs " + x_partner.shape_str());
  Tensor<T> xn = layer_norm(x, p.ln1_g, p.ln1_b);
  Tensor<T> pn = layer_norm(x_partner, p.ln1_g, p.ln1_b);
  auto attn = multi_head_core(xn, {xn, pn}, p, heads);
  Tensor<T> x2 = add(x, drop_path(attn.output, drop_prob, training, rng));
  Tensor<T> out =
      add(x2, drop_path(feed_forward(layer_norm(x2, p.ln2_g, p.ln2_b), p),
                        drop_prob, training, rng));
  return {out, attn.heads};
}

}  // namespace dcal
