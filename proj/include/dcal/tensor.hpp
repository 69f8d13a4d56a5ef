#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace dcal {

// Dense row-major matrix with optional reverse-mode gradient tracking.
// Storage precision is the template parameter; the library instantiates
// float for training and double for verification oracles.
//
// A Tensor is a shared handle to its node. Copies alias the same storage,
// which is what parameter sharing (PWCA aliasing the SA blocks) relies on.
template <typename T>
class Tensor {
 public:
  struct Node {
    std::vector<int> shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until touched by backward
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
  };

  Tensor() : n_(std::make_shared<Node>()) {}

  Tensor(std::vector<int> shape, T fill = T(0), bool requires_grad = false)
      : n_(std::make_shared<Node>()) {
    std::size_t count = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension");
      count *= static_cast<std::size_t>(d);
    }
    n_->shape = std::move(shape);
    n_->data.assign(count, fill);
    n_->requires_grad = requires_grad;
  }

  static Tensor from_data(std::vector<int> shape, std::vector<T> data,
                          bool requires_grad = false) {
    Tensor t(std::move(shape), T(0), requires_grad);
    if (data.size() != t.numel())
      throw std::invalid_argument("Tensor: data length does not match shape");
    t.n_->data = std::move(data);
    return t;
  }

  const std::vector<int>& shape() const { return n_->shape; }
  std::size_t numel() const { return n_->data.size(); }
  int rows() const { return n_->shape.empty() ? 0 : n_->shape[0]; }
  int cols() const { return n_->shape.size() < 2 ? 1 : n_->shape[1]; }

  std::vector<T>& data() { return n_->data; }
  const std::vector<T>& data() const { return n_->data; }

  T& at(int r, int c) { return n_->data[static_cast<std::size_t>(r) * cols() + c]; }
  T at(int r, int c) const { return n_->data[static_cast<std::size_t>(r) * cols() + c]; }

  T value() const {
    if (numel() != 1) throw std::logic_error("Tensor::value: not a scalar");
    return n_->data[0];
  }

  bool requires_grad() const { return n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }

  bool has_grad() const { return !n_->grad.empty(); }
  const std::vector<T>& grad() const {
    if (n_->grad.empty())
      throw std::logic_error("Tensor::grad: gradient not populated");
    return n_->grad;
  }
  std::vector<T>& grad_data() {
    ensure_grad();
    return n_->grad;
  }
  void clear_grad() { n_->grad.clear(); }
  void ensure_grad() {
    if (n_->grad.empty()) n_->grad.assign(n_->data.size(), T(0));
  }

  std::shared_ptr<Node> node() const { return n_; }

  // Detached copy: same values, no graph history, no gradient tracking.
  Tensor detach() const {
    Tensor t;
    t.n_->shape = n_->shape;
    t.n_->data = n_->data;
    return t;
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < n_->shape.size(); ++i) {
      if (i) os << 'x';
      os << n_->shape[i];
    }
    os << ']';
    return os.str();
  }

 private:
  std::shared_ptr<Node> n_;
};

namespace detail {
inline thread_local bool g_grad_enabled = true;
}  // namespace detail

// Scoped switch disabling graph construction, used for inference and
// evaluation passes where gradients are never needed.
struct NoGradGuard {
  bool saved;
  NoGradGuard() : saved(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = saved; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

inline bool grad_enabled() { return detail::g_grad_enabled; }

namespace detail {

template <typename T>
void topo_visit(typename Tensor<T>::Node* node,
                std::unordered_set<typename Tensor<T>::Node*>& seen,
                std::vector<typename Tensor<T>::Node*>& order) {
  // Iterative DFS; the graph can be deep for stacked encoder blocks.
  struct Frame {
    typename Tensor<T>::Node* n;
    std::size_t next_parent;
  };
  std::vector<Frame> stack{{node, 0}};
  seen.insert(node);
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.n->parents.size()) {
      auto* p = f.n->parents[f.next_parent++].get();
      if (seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Reverse-mode sweep from a scalar loss. Gradients of every node reachable
// from the loss are reset, then accumulated in reverse topological order.
// The traversal order depends only on graph construction order, so repeated
// runs on the same graph produce identical gradient bits.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                loss.shape_str());
  std::unordered_set<typename Tensor<T>::Node*> seen;
  std::vector<typename Tensor<T>::Node*> order;
  detail::topo_visit<T>(loss.node().get(), seen, order);

  for (auto* n : order) n->grad.assign(n->data.size(), T(0));
  loss.node()->grad[0] = T(1);

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

}  // namespace dcal
