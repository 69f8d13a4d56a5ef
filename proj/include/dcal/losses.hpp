#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "dcal/ops.hpp"
#include "dcal/tensor.hpp"

namespace dcal {

// Batch-hard triplet loss over a [B x F] feature matrix. Per anchor: the
// largest same-class distance minus the smallest other-class distance plus
// the margin, hinged at zero, averaged over anchors that have at least one
// positive and one negative. Euclidean distances. The hard pair choice is
// fixed at forward time; gradients flow through the chosen distances.
template <typename T>
Tensor<T> triplet_loss(const Tensor<T>& features, const std::vector<int>& labels,
                       T margin) {
  detail::require_2d(features, "triplet_loss");
  const int b = features.rows(), f = features.cols();
  if (static_cast<int>(labels.size()) != b)
    throw std::invalid_argument("triplet_loss: label count does not match batch");

  std::vector<double> dist(static_cast<std::size_t>(b) * b, 0.0);
  for (int i = 0; i < b; ++i)
    for (int j = i + 1; j < b; ++j) {
      double s = 0;
      for (int t = 0; t < f; ++t) {
        double d = static_cast<double>(features.at(i, t)) - features.at(j, t);
        s += d * d;
      }
      dist[i * b + j] = dist[j * b + i] = std::sqrt(s);
    }

  struct Anchor {
    int a, pos, neg;
    double hinge;  // d_ap - d_an + margin before the hinge
  };
  std::vector<Anchor> anchors;
  for (int a = 0; a < b; ++a) {
    int pos = -1, neg = -1;
    double dp = -1, dn = std::numeric_limits<double>::infinity();
    for (int j = 0; j < b; ++j) {
      if (j == a) continue;
      if (labels[j] == labels[a]) {
        if (dist[a * b + j] > dp) dp = dist[a * b + j], pos = j;
      } else {
        if (dist[a * b + j] < dn) dn = dist[a * b + j], neg = j;
      }
    }
    if (pos < 0 || neg < 0) continue;
    anchors.push_back({a, pos, neg, dp - dn + static_cast<double>(margin)});
  }
  if (anchors.empty())
    throw std::invalid_argument(
        "triplet_loss: degenerate batch, no anchor has both a positive and a "
        "negative");

  double total = 0;
  for (const auto& an : anchors) total += std::max(0.0, an.hinge);
  Tensor<T> out({1, 1});
  out.data()[0] = static_cast<T>(total / anchors.size());

  detail::attach<T>(out, {features},
                    [anchors, dist, b, f](typename Tensor<T>::Node& self) {
    auto& feat = *self.parents[0];
    const double w = static_cast<double>(self.grad[0]) / anchors.size();
    auto add_pair = [&](int i, int j, double coeff) {
      // d/dx_i of ||x_i - x_j||; zero subgradient at coincident points
      double d = dist[i * b + j];
      if (d <= 0) return;
      for (int t = 0; t < f; ++t) {
        double g = coeff * (feat.data[i * f + t] - feat.data[j * f + t]) / d;
        feat.grad[i * f + t] += static_cast<T>(g);
        feat.grad[j * f + t] -= static_cast<T>(g);
      }
    };
    for (const auto& an : anchors) {
      if (an.hinge <= 0) continue;
      add_pair(an.a, an.pos, w);
      add_pair(an.a, an.neg, -w);
    }
  });
  return out;
}

// Uncertainty-style weighting over branch losses:
//   total = sum_k 0.5 (exp(-w_k) L_k + w_k)
// with learnable scalars w_k; gradients flow to both losses and weights.
template <typename T>
Tensor<T> dynamic_loss(const std::vector<Tensor<T>>& losses,
                       const std::vector<Tensor<T>>& weights) {
  if (losses.empty() || losses.size() != weights.size())
    throw std::invalid_argument("dynamic_loss: need one weight per branch loss");
  Tensor<T> total;
  for (std::size_t k = 0; k < losses.size(); ++k) {
    if (losses[k].numel() != 1 || weights[k].numel() != 1)
      throw std::invalid_argument("dynamic_loss: losses and weights must be scalars");
    Tensor<T> term =
        add(scale(mul(exp_elem(scale(weights[k], T(-1))), losses[k]), T(0.5)),
            scale(weights[k], T(0.5)));
    total = k == 0 ? term : add(total, term);
  }
  return total;
}

}  // namespace dcal
