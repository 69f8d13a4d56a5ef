#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dcal/tensor.hpp"

namespace dcal {

namespace detail {

// C[m x n] (+)= A[m x k] * B[k x n]. Inner products accumulate in double
// regardless of the storage type.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = accumulate ? static_cast<double>(c[i * n + j]) : 0.0;
      for (int t = 0; t < k; ++t)
        acc += static_cast<double>(a[i * k + t]) * static_cast<double>(b[t * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = accumulate ? static_cast<double>(c[i * n + j]) : 0.0;
      for (int t = 0; t < k; ++t)
        acc += static_cast<double>(a[i * k + t]) * static_cast<double>(b[j * k + t]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

// C[k x n] (+)= A[m x k]^T * B[m x n]
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate) {
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < n; ++j) {
      double acc = accumulate ? static_cast<double>(c[i * n + j]) : 0.0;
      for (int t = 0; t < m; ++t)
        acc += static_cast<double>(a[t * k + i]) * static_cast<double>(b[t * n + j]);
      c[i * n + j] = static_cast<T>(acc);
    }
  }
}

template <typename T>
bool track(const Tensor<T>& t) {
  return t.requires_grad() || t.node()->backward_fn || !t.node()->parents.empty();
}

template <typename T>
bool any_tracked(const std::vector<Tensor<T>>& ts) {
  if (!g_grad_enabled) return false;
  for (const auto& t : ts)
    if (track(t)) return true;
  return false;
}

template <typename T>
void attach(Tensor<T>& out, std::vector<Tensor<T>> inputs,
            std::function<void(typename Tensor<T>::Node&)> fn) {
  if (!any_tracked(inputs)) return;
  out.set_requires_grad(true);
  for (const auto& in : inputs) out.node()->parents.push_back(in.node());
  out.node()->backward_fn = std::move(fn);
}

template <typename T>
void require_2d(const Tensor<T>& t, const char* op) {
  if (t.shape().size() != 2)
    throw std::invalid_argument(std::string(op) + ": expected 2-D tensor, got " +
                                t.shape_str());
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_2d(a, "matmul");
  detail::require_2d(b, "matmul");
  if (a.cols() != b.rows())
    throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                a.shape_str() + " * " + b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  Tensor<T> c({m, n});
  detail::gemm_nn(a.data().data(), b.data().data(), c.data().data(), m, k, n, false);
  detail::attach<T>(c, {a, b}, [m, k, n](typename Tensor<T>::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // dA += dC * B^T, dB += A^T * dC
    detail::gemm_nt(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k, true);
    detail::gemm_tn(pa.data.data(), self.grad.data(), pb.grad.data(), m, k, n, true);
  });
  return c;
}

// A[m x k] * B[n x k]^T without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_2d(a, "matmul_nt");
  detail::require_2d(b, "matmul_nt");
  if (a.cols() != b.cols())
    throw std::invalid_argument("matmul_nt: inner dimensions disagree, " +
                                a.shape_str() + " * " + b.shape_str() + "^T");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  Tensor<T> c({m, n});
  detail::gemm_nt(a.data().data(), b.data().data(), c.data().data(), m, k, n, false);
  detail::attach<T>(c, {a, b}, [m, k, n](typename Tensor<T>::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    // C = A B^T: dA += dC * B, dB += dC^T * A
    detail::gemm_nn(self.grad.data(), pb.data.data(), pa.grad.data(), m, n, k, true);
    detail::gemm_tn(self.grad.data(), pa.data.data(), pb.grad.data(), m, n, k, true);
  });
  return c;
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("add: shape mismatch, " + a.shape_str() + " vs " +
                                b.shape_str());
  Tensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) c.data()[i] = a.data()[i] + b.data()[i];
  detail::attach<T>(c, {a, b}, [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i];
      self.parents[1]->grad[i] += self.grad[i];
    }
  });
  return c;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("sub: shape mismatch, " + a.shape_str() + " vs " +
                                b.shape_str());
  Tensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) c.data()[i] = a.data()[i] - b.data()[i];
  detail::attach<T>(c, {a, b}, [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i];
      self.parents[1]->grad[i] -= self.grad[i];
    }
  });
  return c;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw std::invalid_argument("mul: shape mismatch, " + a.shape_str() + " vs " +
                                b.shape_str());
  Tensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) c.data()[i] = a.data()[i] * b.data()[i];
  detail::attach<T>(c, {a, b}, [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      self.parents[0]->grad[i] += self.grad[i] * self.parents[1]->data[i];
      self.parents[1]->grad[i] += self.grad[i] * self.parents[0]->data[i];
    }
  });
  return c;
}

// y = s * x + b, elementwise with constant scalar coefficients.
template <typename T>
Tensor<T> affine(const Tensor<T>& a, T s, T b = T(0)) {
  Tensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) c.data()[i] = s * a.data()[i] + b;
  detail::attach<T>(c, {a}, [s](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      self.parents[0]->grad[i] += s * self.grad[i];
  });
  return c;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  return affine(a, s);
}

template <typename T>
Tensor<T> exp_elem(const Tensor<T>& a) {
  Tensor<T> c(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) c.data()[i] = std::exp(a.data()[i]);
  detail::attach<T>(c, {a}, [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      self.parents[0]->grad[i] += self.grad[i] * self.data[i];
  });
  return c;
}

// Broadcast-add a [1 x n] row vector to every row of A[m x n].
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& a, const Tensor<T>& v) {
  detail::require_2d(a, "add_rowvec");
  if (v.rows() != 1 || v.cols() != a.cols())
    throw std::invalid_argument("add_rowvec: vector " + v.shape_str() +
                                " does not broadcast over " + a.shape_str());
  const int m = a.rows(), n = a.cols();
  Tensor<T> c({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) c.at(i, j) = a.at(i, j) + v.at(0, j);
  detail::attach<T>(c, {a, v}, [m, n](typename Tensor<T>::Node& self) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        self.parents[0]->grad[i * n + j] += self.grad[i * n + j];
        self.parents[1]->grad[j] += self.grad[i * n + j];
      }
  });
  return c;
}

// Numerically stable softmax over each row: the row max is subtracted
// before exponentiation, so arbitrarily large finite logits are safe.
template <typename T>
Tensor<T> row_softmax(const Tensor<T>& a) {
  detail::require_2d(a, "row_softmax");
  const int m = a.rows(), n = a.cols();
  Tensor<T> c({m, n});
  for (int i = 0; i < m; ++i) {
    T mx = a.at(i, 0);
    for (int j = 1; j < n; ++j) mx = std::max(mx, a.at(i, j));
    double sum = 0;
    for (int j = 0; j < n; ++j) {
      double e = std::exp(static_cast<double>(a.at(i, j) - mx));
      c.at(i, j) = static_cast<T>(e);
      sum += e;
    }
    for (int j = 0; j < n; ++j) c.at(i, j) = static_cast<T>(c.at(i, j) / sum);
  }
  detail::attach<T>(c, {a}, [m, n](typename Tensor<T>::Node& self) {
    for (int i = 0; i < m; ++i) {
      double dot = 0;
      for (int j = 0; j < n; ++j)
        dot += static_cast<double>(self.grad[i * n + j]) * self.data[i * n + j];
      for (int j = 0; j < n; ++j)
        self.parents[0]->grad[i * n + j] +=
            self.data[i * n + j] * (self.grad[i * n + j] - static_cast<T>(dot));
    }
  });
  return c;
}

// Pre-affine normalization uses the population variance of each row.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-6)) {
  detail::require_2d(x, "layer_norm");
  const int m = x.rows(), d = x.cols();
  if (gamma.numel() != static_cast<std::size_t>(d) ||
      beta.numel() != static_cast<std::size_t>(d))
    throw std::invalid_argument("layer_norm: affine parameters do not match width " +
                                std::to_string(d));
  if (eps <= T(0)) throw std::invalid_argument("layer_norm: eps must be positive");

  Tensor<T> y({m, d});
  std::vector<T> xhat(static_cast<std::size_t>(m) * d);
  std::vector<T> inv_std(m);
  for (int i = 0; i < m; ++i) {
    double mean = 0;
    for (int j = 0; j < d; ++j) mean += x.at(i, j);
    mean /= d;
    double var = 0;
    for (int j = 0; j < d; ++j) {
      double c = x.at(i, j) - mean;
      var += c * c;
    }
    var /= d;
    double is = 1.0 / std::sqrt(var + static_cast<double>(eps));
    inv_std[i] = static_cast<T>(is);
    for (int j = 0; j < d; ++j) {
      T h = static_cast<T>((x.at(i, j) - mean) * is);
      xhat[i * d + j] = h;
      y.at(i, j) = gamma.data()[j] * h + beta.data()[j];
    }
  }
  detail::attach<T>(y, {x, gamma, beta},
                    [m, d, xhat, inv_std](typename Tensor<T>::Node& self) {
    auto& px = *self.parents[0];
    auto& pg = *self.parents[1];
    auto& pb = *self.parents[2];
    for (int i = 0; i < m; ++i) {
      double sum_g = 0, sum_gh = 0;
      for (int j = 0; j < d; ++j) {
        double g = static_cast<double>(self.grad[i * d + j]) * pg.data[j];
        sum_g += g;
        sum_gh += g * xhat[i * d + j];
      }
      for (int j = 0; j < d; ++j) {
        double g = static_cast<double>(self.grad[i * d + j]) * pg.data[j];
        px.grad[i * d + j] += static_cast<T>(
            (g - sum_g / d - xhat[i * d + j] * sum_gh / d) * inv_std[i]);
        pg.grad[j] += self.grad[i * d + j] * xhat[i * d + j];
        pb.grad[j] += self.grad[i * d + j];
      }
    }
  });
  return y;
}

// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kCube = 0.044715;
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    double x = a.data()[i];
    double t = std::tanh(kC * (x + kCube * x * x * x));
    out.data()[i] = static_cast<T>(0.5 * x * (1.0 + t));
  }
  detail::attach<T>(out, {a}, [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      double x = self.parents[0]->data[i];
      double u = kC * (x + kCube * x * x * x);
      double t = std::tanh(u);
      double du = kC * (1.0 + 3.0 * kCube * x * x);
      double dy = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
      self.parents[0]->grad[i] += static_cast<T>(self.grad[i] * dy);
    }
  });
  return out;
}

// Select rows of A by index; backward scatter-adds into the source rows.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& a, const std::vector<int>& idx) {
  detail::require_2d(a, "gather_rows");
  const int n = a.cols();
  for (int i : idx)
    if (i < 0 || i >= a.rows())
      throw std::out_of_range("gather_rows: row " + std::to_string(i) +
                              " outside " + a.shape_str());
  Tensor<T> c({static_cast<int>(idx.size()), n});
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (int j = 0; j < n; ++j) c.at(static_cast<int>(r), j) = a.at(idx[r], j);
  detail::attach<T>(c, {a}, [idx, n](typename Tensor<T>::Node& self) {
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int j = 0; j < n; ++j)
        self.parents[0]->grad[idx[r] * n + j] += self.grad[r * n + j];
  });
  return c;
}

template <typename T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty list");
  const int n = parts[0].cols();
  int m = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_rows");
    if (p.cols() != n)
      throw std::invalid_argument("concat_rows: column mismatch, " +
                                  parts[0].shape_str() + " vs " + p.shape_str());
    m += p.rows();
  }
  Tensor<T> c({m, n});
  int row = 0;
  std::vector<int> offsets;
  for (const auto& p : parts) {
    offsets.push_back(row);
    std::copy(p.data().begin(), p.data().end(), c.data().begin() + row * n);
    row += p.rows();
  }
  detail::attach<T>(c, parts, [offsets, n](typename Tensor<T>::Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      const std::size_t base = static_cast<std::size_t>(offsets[k]) * n;
      for (std::size_t i = 0; i < p.data.size(); ++i) p.grad[i] += self.grad[base + i];
    }
  });
  return c;
}

template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty list");
  const int m = parts[0].rows();
  int n = 0;
  for (const auto& p : parts) {
    detail::require_2d(p, "concat_cols");
    if (p.rows() != m)
      throw std::invalid_argument("concat_cols: row mismatch, " +
                                  parts[0].shape_str() + " vs " + p.shape_str());
    n += p.cols();
  }
  Tensor<T> c({m, n});
  std::vector<int> offsets;
  int col = 0;
  for (const auto& p : parts) {
    offsets.push_back(col);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < p.cols(); ++j) c.at(i, col + j) = p.at(i, j);
    col += p.cols();
  }
  detail::attach<T>(c, parts, [offsets, m, n](typename Tensor<T>::Node& self) {
    for (std::size_t k = 0; k < self.parents.size(); ++k) {
      auto& p = *self.parents[k];
      const int w = static_cast<int>(p.data.size()) / m;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j)
          p.grad[i * w + j] += self.grad[i * n + offsets[k] + j];
    }
  });
  return c;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, int first, int width) {
  detail::require_2d(a, "slice_cols");
  if (first < 0 || width <= 0 || first + width > a.cols())
    throw std::out_of_range("slice_cols: [" + std::to_string(first) + ", " +
                            std::to_string(first + width) + ") outside " +
                            a.shape_str());
  const int m = a.rows(), n = a.cols();
  Tensor<T> c({m, width});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < width; ++j) c.at(i, j) = a.at(i, first + j);
  detail::attach<T>(c, {a}, [first, width, m, n](typename Tensor<T>::Node& self) {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < width; ++j)
        self.parents[0]->grad[i * n + first + j] += self.grad[i * width + j];
  });
  return c;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  Tensor<T> c({1, 1});
  double acc = 0;
  for (T v : a.data()) acc += v;
  c.data()[0] = static_cast<T>(acc);
  detail::attach<T>(c, {a}, [](typename Tensor<T>::Node& self) {
    for (std::size_t i = 0; i < self.parents[0]->grad.size(); ++i)
      self.parents[0]->grad[i] += self.grad[0];
  });
  return c;
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  return scale(sum_all(a), static_cast<T>(1.0 / a.numel()));
}

// -log softmax(logits)[label] for a [1 x C] logit row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, int label) {
  detail::require_2d(logits, "cross_entropy");
  if (logits.rows() != 1)
    throw std::invalid_argument("cross_entropy: expected a single logit row, got " +
                                logits.shape_str());
  const int c = logits.cols();
  if (label < 0 || label >= c)
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) +
                            " out of range for " + std::to_string(c) + " classes");
  T mx = logits.at(0, 0);
  for (int j = 1; j < c; ++j) mx = std::max(mx, logits.at(0, j));
  double sum = 0;
  for (int j = 0; j < c; ++j) sum += std::exp(static_cast<double>(logits.at(0, j) - mx));
  double lse = std::log(sum) + static_cast<double>(mx);
  Tensor<T> out({1, 1});
  out.data()[0] = static_cast<T>(lse - static_cast<double>(logits.at(0, label)));
  detail::attach<T>(out, {logits}, [label, c, mx, sum](typename Tensor<T>::Node& self) {
    for (int j = 0; j < c; ++j) {
      double p = std::exp(static_cast<double>(self.parents[0]->data[j] - mx)) / sum;
      self.parents[0]->grad[j] +=
          self.grad[0] * static_cast<T>(p - (j == label ? 1.0 : 0.0));
    }
  });
  return out;
}

}  // namespace dcal
