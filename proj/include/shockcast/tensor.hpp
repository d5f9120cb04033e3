#pragma once

// Dense channels-first tensors with reverse-mode differentiation.
//
// Every op returns a new Tensor whose node remembers its inputs and a
// backward closure. backward(loss) orders the reachable graph topologically
// and runs the closures in reverse, accumulating into .grad().

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "shockcast/error.hpp"

namespace shockcast::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k) out += ", ";
    out += std::to_string(s[k]);
  }
  return out + ")";
}

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  std::vector<T>& grad_buffer() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables graph recording in the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <class T>
class Tensor {
 public:
  using Node = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : node_(std::make_shared<Node>()) {
    node_->value.assign(ad::numel(shape), fill);
    node_->shape = std::move(shape);
  }
  Tensor(Shape shape, std::vector<T> values) : node_(std::make_shared<Node>()) {
    if (values.size() != ad::numel(shape))
      throw ShapeError("Tensor: " + std::to_string(values.size()) +
                       " values for shape " + shape_str(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
  }
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  // Leaf that collects gradients.
  static Tensor parameter(Shape shape, std::vector<T> values) {
    Tensor t(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    return t;
  }

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t k) const { return node_->shape.at(k); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }

  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }
  T* data() { return node_->value.data(); }
  const T* data() const { return node_->value.data(); }
  T item() const {
    if (numel() != 1) throw UsageError("item: tensor is not a scalar " + shape_str(shape()));
    return node_->value[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return !node_->backward; }
  bool has_grad() const { return !node_->grad.empty(); }
  // Gradient buffer; zeros if backward has not reached this tensor.
  const std::vector<T>& grad() const { return node_->grad_buffer(); }
  std::vector<T>& grad() { return node_->grad_buffer(); }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  // Same values, cut from the graph.
  Tensor detach() const { return Tensor(shape(), values()); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

namespace detail {

// Builds the result node. Inputs and the closure are kept only when some
// input needs a gradient and recording is enabled.
template <class T, class Fn>
Tensor<T> make_result(Shape shape, std::vector<T> value,
                      std::initializer_list<const Tensor<T>*> inputs, Fn&& backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (grad_mode())
    for (const Tensor<T>* in : inputs) needs = needs || in->requires_grad();
  if (needs) {
    n->requires_grad = true;
    for (const Tensor<T>* in : inputs) n->inputs.push_back(in->node());
    n->backward = std::forward<Fn>(backward);
  }
  return Tensor<T>(std::move(n));
}

template <class T>
bool wants(const std::shared_ptr<Node<T>>& n) {
  return n->requires_grad;
}

}  // namespace detail

// Reverse sweep from a scalar. Leaf gradients accumulate across calls;
// intermediate gradients are released as soon as they have been propagated.
template <class T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw UsageError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw UsageError("backward: loss does not depend on any tensor requiring grad");
  using Node = detail::Node<T>;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->inputs.size()) {
      Node* child = n->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward || n->grad.empty()) continue;
    n->backward(*n);
    std::vector<T>().swap(n->grad);
  }
}

// ---------------------------------------------------------------------------
// Elementwise

namespace detail {

template <class T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("add", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.values()[k] + b.values()[k];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    for (auto& in : self.inputs)
      if (in->requires_grad) {
        auto& g = in->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
      }
  });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.values()[k] - b.values()[k];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    const T sign[2] = {T(1), T(-1)};
    for (std::size_t i = 0; i < 2; ++i)
      if (self.inputs[i]->requires_grad) {
        auto& g = self.inputs[i]->grad_buffer();
        for (std::size_t k = 0; k < g.size(); ++k) g[k] += sign[i] * self.grad[k];
      }
  });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<T> out(a.numel());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = a.values()[k] * b.values()[k];
  return detail::make_result<T>(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    auto& A = self.inputs[0];
    auto& B = self.inputs[1];
    if (A->requires_grad) {
      auto& g = A->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k] * B->value[k];
    }
    if (B->requires_grad) {
      auto& g = B->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k] * A->value[k];
    }
  });
}

// s * x + c
template <class T>
Tensor<T> affine(const Tensor<T>& x, T s, T c = T(0)) {
  std::vector<T> out(x.numel());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = s * x.values()[k] + c;
  return detail::make_result<T>(x.shape(), std::move(out), {&x}, [s](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += s * self.grad[k];
  });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T s) {
  return affine(x, s);
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (ad::numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  return detail::make_result<T>(std::move(shape), x.values(), {&x}, [](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
  });
}

// ---------------------------------------------------------------------------
// Reductions

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.values()) s += v;
  return detail::make_result<T>({1}, {s}, {&x}, [](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Channel broadcasting. x has shape (N, C, ...), s has shape (N, C).

namespace detail {

template <class T>
std::size_t check_nc(const char* op, const Tensor<T>& x, const Tensor<T>& s) {
  if (x.rank() < 2 || s.rank() != 2 || s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1))
    throw ShapeError(std::string(op) + ": expected (N, C) against " + shape_str(x.shape()) +
                     ", got " + shape_str(s.shape()));
  return x.numel() / (x.dim(0) * x.dim(1));
}

}  // namespace detail

template <class T>
Tensor<T> mul_nc(const Tensor<T>& x, const Tensor<T>& s) {
  const std::size_t inner = detail::check_nc("mul_nc", x, s);
  std::vector<T> out(x.numel());
  for (std::size_t p = 0; p < s.numel(); ++p)
    for (std::size_t i = 0; i < inner; ++i)
      out[p * inner + i] = x.values()[p * inner + i] * s.values()[p];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &s},
                                [inner](detail::Node<T>& self) {
    auto& X = self.inputs[0];
    auto& S = self.inputs[1];
    if (X->requires_grad) {
      auto& g = X->grad_buffer();
      for (std::size_t p = 0; p < S->value.size(); ++p)
        for (std::size_t i = 0; i < inner; ++i)
          g[p * inner + i] += self.grad[p * inner + i] * S->value[p];
    }
    if (S->requires_grad) {
      auto& g = S->grad_buffer();
      for (std::size_t p = 0; p < S->value.size(); ++p) {
        T acc = T(0);
        for (std::size_t i = 0; i < inner; ++i)
          acc += self.grad[p * inner + i] * X->value[p * inner + i];
        g[p] += acc;
      }
    }
  });
}

template <class T>
Tensor<T> add_nc(const Tensor<T>& x, const Tensor<T>& b) {
  const std::size_t inner = detail::check_nc("add_nc", x, b);
  std::vector<T> out(x.numel());
  for (std::size_t p = 0; p < b.numel(); ++p)
    for (std::size_t i = 0; i < inner; ++i)
      out[p * inner + i] = x.values()[p * inner + i] + b.values()[p];
  return detail::make_result<T>(x.shape(), std::move(out), {&x, &b},
                                [inner](detail::Node<T>& self) {
    auto& X = self.inputs[0];
    auto& B = self.inputs[1];
    if (X->requires_grad) {
      auto& g = X->grad_buffer();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += self.grad[k];
    }
    if (B->requires_grad) {
      auto& g = B->grad_buffer();
      for (std::size_t p = 0; p < B->value.size(); ++p) {
        T acc = T(0);
        for (std::size_t i = 0; i < inner; ++i) acc += self.grad[p * inner + i];
        g[p] += acc;
      }
    }
  });
}

// Concatenation / slicing along axis 1.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (ref.size() < 2) throw ShapeError("concat: rank must be >= 2");
  const std::size_t outer = ref[0];
  const std::size_t inner = numel(ref) / (ref[0] * ref[1]);
  std::size_t channels = 0;
  for (const auto& p : parts) {
    Shape a = p.shape(), b = ref;
    if (a.size() != b.size()) throw ShapeError("concat: rank mismatch");
    a[1] = b[1] = 0;
    if (a != b)
      throw ShapeError("concat: incompatible shapes " + shape_str(p.shape()) + " and " +
                       shape_str(ref));
    channels += p.dim(1);
  }
  Shape shape = ref;
  shape[1] = channels;
  std::vector<T> out(numel(shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.dim(1) * inner;
    for (std::size_t n = 0; n < outer; ++n)
      std::copy_n(p.data() + n * w, w, out.data() + n * channels * inner + offset);
    widths.push_back(w);
    offset += w;
  }
  // make_result takes an initializer list; route through a manual node.
  auto node = std::make_shared<detail::Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(out);
  bool needs = false;
  if (detail::grad_mode())
    for (const auto& p : parts) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parts) node->inputs.push_back(p.node());
    const std::size_t row = channels * inner;
    node->backward = [widths, outer, row](detail::Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < self.inputs.size(); ++i) {
        const std::size_t w = widths[i];
        if (self.inputs[i]->requires_grad) {
          auto& g = self.inputs[i]->grad_buffer();
          for (std::size_t n = 0; n < outer; ++n)
            for (std::size_t k = 0; k < w; ++k) g[n * w + k] += self.grad[n * row + off + k];
        }
        off += w;
      }
    };
  }
  return Tensor<T>(std::move(node));
}

template <class T>
Tensor<T> slice_channels(const Tensor<T>& x, std::size_t start, std::size_t count) {
  if (x.rank() < 2 || start + count > x.dim(1) || count == 0)
    throw ShapeError("slice_channels: range [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") outside " + shape_str(x.shape()));
  const std::size_t outer = x.dim(0);
  const std::size_t inner = x.numel() / (x.dim(0) * x.dim(1));
  const std::size_t row = x.dim(1) * inner;
  const std::size_t w = count * inner;
  const std::size_t off = start * inner;
  Shape shape = x.shape();
  shape[1] = count;
  std::vector<T> out(outer * w);
  for (std::size_t n = 0; n < outer; ++n)
    std::copy_n(x.data() + n * row + off, w, out.data() + n * w);
  return detail::make_result<T>(std::move(shape), std::move(out), {&x},
                                [outer, row, w, off](detail::Node<T>& self) {
    auto& g = self.inputs[0]->grad_buffer();
    for (std::size_t n = 0; n < outer; ++n)
      for (std::size_t k = 0; k < w; ++k) g[n * row + off + k] += self.grad[n * w + k];
  });
}

}  // namespace shockcast::ad
