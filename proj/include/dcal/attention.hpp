#pragma once

#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "dcal/ops.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

// Parameters of one pre-LN transformer encoder block. Q/K/V projections are
// bias-free; the output projection and FFN carry biases.
template <typename T>
struct EncoderBlockParams {
  Tensor<T> w_q, w_k, w_v;      // D x D
  Tensor<T> w_o, b_o;           // D x D, 1 x D
  Tensor<T> w_ff1, b_ff1;       // D x D_ff, 1 x D_ff
  Tensor<T> w_ff2, b_ff2;       // D_ff x D, 1 x D
  Tensor<T> ln1_g, ln1_b;       // 1 x D
  Tensor<T> ln2_g, ln2_b;       // 1 x D

  std::vector<Tensor<T>> all() const {
    return {w_q, w_k, w_v, w_o, b_o, w_ff1, b_ff1, w_ff2, b_ff2,
            ln1_g, ln1_b, ln2_g, ln2_b};
  }
};

template <typename T>
struct AttentionResult {
  Tensor<T> output;
  Tensor<T> weights;  // S, n_q x n_k
};

// softmax(Q K^T / sqrt(d)) V. One kernel serves self-, global-local and
// pair-wise attention; the query count may differ from the key count.
template <typename T>
AttentionResult<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k,
                                        const Tensor<T>& v) {
  if (q.cols() != k.cols())
    throw std::invalid_argument("scaled_dot_attention: query width " + q.shape_str() +
                                " vs key width " + k.shape_str());
  if (k.rows() != v.rows())
    throw std::invalid_argument("scaled_dot_attention: key/value row mismatch, " +
                                k.shape_str() + " vs " + v.shape_str());
  const T inv_sqrt_d = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols())));
  Tensor<T> s = row_softmax(scale(matmul_nt(q, k), inv_sqrt_d));
  return {matmul(s, v), s};
}

template <typename T>
struct MhaResult {
  Tensor<T> output;               // n_q x D
  std::vector<Tensor<T>> heads;   // per-head S, n_q x n_k_total
};

// Multi-head attention with an explicit query source and a list of key/value
// sources (their projected rows are concatenated). This single routine
// backs MSA (one source: the sequence itself), GLCA (queries gathered from
// a selection) and PWCA (two sources: target and distractor).
template <typename T>
MhaResult<T> multi_head_core(const Tensor<T>& q_rows,
                             const std::vector<Tensor<T>>& kv_rows,
                             const EncoderBlockParams<T>& p, int heads) {
  const int d_model = p.w_q.cols();
  if (d_model % heads != 0)
    throw std::invalid_argument("multi_head_core: width " + std::to_string(d_model) +
                                " not divisible by " + std::to_string(heads) +
                                " heads");
  Tensor<T> q = matmul(q_rows, p.w_q);
  std::vector<Tensor<T>> ks, vs;
  for (const auto& src : kv_rows) {
    ks.push_back(matmul(src, p.w_k));
    vs.push_back(matmul(src, p.w_v));
  }
  Tensor<T> k = ks.size() == 1 ? ks[0] : concat_rows(ks);
  Tensor<T> v = vs.size() == 1 ? vs[0] : concat_rows(vs);

  const int d_head = d_model / heads;
  MhaResult<T> res;
  std::vector<Tensor<T>> outs;
  for (int h = 0; h < heads; ++h) {
    auto r = scaled_dot_attention(slice_cols(q, h * d_head, d_head),
                                  slice_cols(k, h * d_head, d_head),
                                  slice_cols(v, h * d_head, d_head));
    outs.push_back(r.output);
    res.heads.push_back(r.weights);
  }
  Tensor<T> cat = outs.size() == 1 ? outs[0] : concat_cols(outs);
  res.output = add_rowvec(matmul(cat, p.w_o), p.b_o);
  return res;
}

template <typename T>
MhaResult<T> multi_head_attention(const Tensor<T>& x, const EncoderBlockParams<T>& p,
                                  int heads) {
  return multi_head_core(x, {x}, p, heads);
}

template <typename T>
Tensor<T> feed_forward(const Tensor<T>& x, const EncoderBlockParams<T>& p) {
  return add_rowvec(
      matmul(gelu(add_rowvec(matmul(x, p.w_ff1), p.b_ff1)), p.w_ff2), p.b_ff2);
}

// Stochastic depth on a residual branch: during training the whole branch is
// dropped with probability `prob` and scaled by 1/(1-prob) otherwise. At
// inference this is the identity. One Bernoulli draw covers the branch.
template <typename T>
Tensor<T> drop_path(const Tensor<T>& branch, T prob, bool training,
                    std::mt19937_64& rng) {
  if (!(prob >= T(0) && prob < T(1)))
    throw std::invalid_argument("drop_path: probability must be in [0, 1)");
  if (!training || prob == T(0)) return branch;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < static_cast<double>(prob)) return scale(branch, T(0));
  return scale(branch, static_cast<T>(1.0 / (1.0 - static_cast<double>(prob))));
}

template <typename T>
struct EncoderBlockResult {
  Tensor<T> output;
  std::vector<Tensor<T>> attention_heads;
};

// Pre-LN encoder block: x2 = x + drop(MSA(LN1 x)), out = x2 + drop(FFN(LN2 x2)).
template <typename T>
EncoderBlockResult<T> encoder_block(const Tensor<T>& x, const EncoderBlockParams<T>& p,
                                    int heads, T drop_prob, bool training,
                                    std::mt19937_64& rng) {
  Tensor<T> xn = layer_norm(x, p.ln1_g, p.ln1_b);
  auto attn = multi_head_core(xn, {xn}, p, heads);
  Tensor<T> x2 = add(x, drop_path(attn.output, drop_prob, training, rng));
  Tensor<T> out =
      add(x2, drop_path(feed_forward(layer_norm(x2, p.ln2_g, p.ln2_b), p),
                        drop_prob, training, rng));
  return {out, attn.heads};
}

// Mean over heads of one layer's attention maps, detached from the graph.
// Rollout consumes these; gradients never flow through the selection.
template <typename T>
Tensor<T> head_average(const std::vector<Tensor<T>>& heads) {
  if (heads.empty()) throw std::invalid_argument("head_average: no heads");
  const int m = heads[0].rows(), n = heads[0].cols();
  Tensor<T> avg({m, n});
  for (const auto& h : heads) {
    if (h.rows() != m || h.cols() != n)
      throw std::invalid_argument("head_average: shape mismatch across heads");
    for (std::size_t i = 0; i < avg.numel(); ++i) avg.data()[i] += h.data()[i];
  }
  const T inv = static_cast<T>(1.0 / heads.size());
  for (std::size_t i = 0; i < avg.numel(); ++i) avg.data()[i] *= inv;
  return avg;
}

}  // namespace dcal
