#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcal/ops.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

template <typename T>
struct RolloutMap {
  Tensor<T> s_hat;  // (N+1) x (N+1) accumulated attention
  int layer_index = 0;
};

struct LocalSelection {
  std::vector<int> indices;       // token rows, CLS (row 0) first, then by response
  double ratio = 0;
  std::vector<double> responses;  // per-patch CLS responses used for ranking
};

// S_bar = 0.5 S + 0.5 E, accounting for the residual connection.
template <typename T>
Tensor<T> renormalize(const Tensor<T>& s) {
  if (s.rows() != s.cols())
    throw std::invalid_argument("renormalize: expected square matrix, got " +
                                s.shape_str());
  Tensor<T> out({s.rows(), s.cols()});
  for (int i = 0; i < s.rows(); ++i)
    for (int j = 0; j < s.cols(); ++j)
      out.at(i, j) = static_cast<T>(0.5) * s.at(i, j) +
                     (i == j ? static_cast<T>(0.5) : T(0));
  return out;
}

// Accumulated attention through the last layer of `layers`:
// S_hat_i = S_bar_i * S_bar_{i-1} * ... * S_bar_1, newest factor leftmost.
// `layers` holds the renormalized per-layer maps in depth order (index 0 is
// layer 1). Operates on detached matrices only.
template <typename T>
RolloutMap<T> rollout(const std::vector<Tensor<T>>& layers) {
  if (layers.empty()) throw std::invalid_argument("rollout: no layers");
  const int n = layers[0].rows();
  for (const auto& s : layers)
    if (s.rows() != n || s.cols() != n)
      throw std::invalid_argument("rollout: layer size mismatch, " +
                                  layers[0].shape_str() + " vs " + s.shape_str());
  Tensor<T> acc = layers[0].detach();
  for (std::size_t i = 1; i < layers.size(); ++i) {
    Tensor<T> next({n, n});
    detail::gemm_nn(layers[i].data().data(), acc.data().data(), next.data().data(),
                    n, n, n, false);
    acc = next;
  }
  return {acc, static_cast<int>(layers.size())};
}

// CLS row of the accumulated map, excluding the CLS-to-CLS entry.
template <typename T>
std::vector<double> cls_response(const RolloutMap<T>& m) {
  const int n = m.s_hat.cols() - 1;
  std::vector<double> r(n);
  for (int j = 0; j < n; ++j) r[j] = static_cast<double>(m.s_hat.at(0, j + 1));
  return r;
}

// Top-R patch queries by CLS response. k = max(1, floor(R * N)); ties break
// toward the lower index; CLS (row 0) is prepended so the local branch
// always carries a class token.
inline LocalSelection select_local_queries(const std::vector<double>& responses,
                                           double ratio) {
  if (!(ratio > 0.0 && ratio <= 1.0))
    throw std::invalid_argument("select_local_queries: ratio must be in (0, 1]");
  if (responses.empty())
    throw std::invalid_argument("select_local_queries: empty response vector");
  const int n = static_cast<int>(responses.size());
  const int k = std::max(1, static_cast<int>(std::floor(ratio * n)));

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return responses[a] > responses[b];
  });

  LocalSelection sel;
  sel.ratio = ratio;
  sel.responses = responses;
  sel.indices.push_back(0);
  for (int i = 0; i < k; ++i) sel.indices.push_back(order[i] + 1);
  return sel;
}

}  // namespace dcal
