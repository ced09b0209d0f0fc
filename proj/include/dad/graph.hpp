#ifndef DAD_GRAPH_HPP
#define DAD_GRAPH_HPP

#include <algorithm>
#include <atomic>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "dad/tensor.hpp"

namespace dad {

// Reverse-mode autodiff over a define-by-run graph. Each op creates a node
// holding its output tensor and a closure that scatters the node's gradient
// into its inputs. Nodes are reference counted; the graph for one forward
// pass is released after backward() unless the caller keeps handles.

template <typename S>
struct Node {
  Tensor<S> value;
  Tensor<S> grad;  // lazily allocated
  bool requires_grad = false;
  bool leaf = false;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backprop;

  Tensor<S>& ensure_grad() {
    if (!grad.defined()) grad = Tensor<S>::zeros(value.shape());
    return grad;
  }
};

inline std::uint64_t next_node_seq() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

// Thread-local switch: when disabled, ops compute values only (no graph).
struct GradMode {
  static bool& enabled() {
    thread_local bool on = true;
    return on;
  }
};

struct NoGradGuard {
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::enabled() = false; }
  ~NoGradGuard() { GradMode::enabled() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename S>
class Value {
 public:
  Value() = default;
  explicit Value(std::shared_ptr<Node<S>> n) : node_(std::move(n)) {}

  static Value leaf(Tensor<S> v, bool requires_grad = false) {
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    n->leaf = true;
    n->seq = next_node_seq();
    return Value(std::move(n));
  }

  static Value constant(Tensor<S> v) { return leaf(std::move(v), false); }

  // Build an op node. `backprop` receives the finished node and must
  // accumulate into each input's ensure_grad(). When grad mode is off or no
  // input needs gradients, the result is a detached constant.
  static Value make(Tensor<S> v, std::vector<Value> inputs, std::function<void(Node<S>&)> backprop) {
    bool need = false;
    if (GradMode::enabled()) {
      for (const auto& in : inputs) need = need || (in.node_ && in.node_->requires_grad);
    }
    auto n = std::make_shared<Node<S>>();
    n->value = std::move(v);
    n->seq = next_node_seq();
    if (need) {
      n->requires_grad = true;
      n->inputs.reserve(inputs.size());
      for (auto& in : inputs) n->inputs.push_back(in.node_);
      n->backprop = std::move(backprop);
    }
    return Value(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor<S>& val() const { return node_->value; }
  Tensor<S>& val() { return node_->value; }
  const std::vector<Index>& shape() const { return node_->value.shape(); }
  Index dim(Index i) const { return node_->value.dim(i); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  Tensor<S>& grad() { return node_->ensure_grad(); }
  const Tensor<S>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.defined(); }
  void zero_grad() {
    if (node_->grad.defined()) node_->grad.array().setZero();
  }

  std::shared_ptr<Node<S>> node() const { return node_; }

  // Backpropagate from this node. A scalar root is seeded with 1; otherwise
  // a seed tensor of matching shape must be given.
  void backward() {
    DAD_CHECK(node_->value.numel() == 1, ShapeError, "backward() without seed requires scalar output");
    backward(Tensor<S>::ones(node_->value.shape()));
  }

  void backward(const Tensor<S>& seed) {
    DAD_CHECK(node_ != nullptr, ValidationError, "backward on empty value");
    DAD_CHECK(seed.shape() == node_->value.shape(), ShapeError, "seed shape mismatch");
    if (!node_->requires_grad) return;

    // Collect the reachable subgraph holding strong references (releasing a
    // node's edges must not free a node still queued for processing). seq is
    // creation-ordered, so sorting descending gives reverse topological order.
    std::vector<std::shared_ptr<Node<S>>> order;
    std::unordered_set<Node<S>*> seen;
    order.push_back(node_);
    seen.insert(node_.get());
    for (std::size_t i = 0; i < order.size(); ++i) {
      for (auto& in : order[i]->inputs) {
        if (in && in->requires_grad && seen.insert(in.get()).second) order.push_back(in);
      }
    }
    std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

    node_->ensure_grad().array() += seed.array();
    for (auto& n : order) {
      if (n->backprop) n->backprop(*n);
    }
    // Release closures and edges of interior nodes; leaves keep their grads.
    for (auto& n : order) {
      if (!n->leaf) {
        n->backprop = nullptr;
        n->inputs.clear();
      }
    }
  }

 private:
  std::shared_ptr<Node<S>> node_;
};

}  // namespace dad

#endif  // DAD_GRAPH_HPP
