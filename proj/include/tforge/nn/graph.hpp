#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "tforge/errors.hpp"
#include "tforge/nn/kernels.hpp"
#include "tforge/tensor.hpp"

namespace tforge::nn {

// A trainable tensor plus its gradient and Adam moment buffers.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> m, v;  // lazily sized by the optimizer
  bool has_grad = false;

  Param() = default;
  Param(std::string name_, Tensor<T> value_)
      : name(std::move(name_)), value(std::move(value_)) {}

  void zero_grad() {
    if (grad.size() != value.size()) {
      grad = Tensor<T>(value.n, value.c, value.h, value.w);
    } else {
      std::fill(grad.v.begin(), grad.v.end(), T(0));
    }
    has_grad = false;
  }
};

// Eager tape. Each op computes its value immediately and, when recording,
// pushes a closure that routes gradients to its parents. Appending order is
// a topological order, so backward() is a reverse sweep.
template <typename T>
class Graph {
 public:
  using Id = int;

  explicit Graph(bool record = true) : record_(record) {}

  void set_check_finite(bool on) { check_finite_ = on; }
  bool recording() const { return record_; }

  Id input(Tensor<T> value) { return add_leaf(std::move(value), nullptr, false); }

  // Non-owning view; `value` must outlive the graph.
  Id external(const Tensor<T>* value) {
    Node node;
    node.view = value;
    node.op = "external";
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Id parameter(Param<T>* p) {
    Node node;
    node.view = &p->value;
    node.bound = p;
    node.needs_grad = true;
    node.op = "parameter";
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  const Tensor<T>& value(Id id) const { return node(id).val(); }

  const Tensor<T>& grad(Id id) const {
    const Node& nd = node(id);
    if (nd.grad.size() == 0)
      throw MissingGradient("no gradient recorded for node " + std::to_string(id));
    return nd.grad;
  }

  Id conv3x3_same(Id x, Id w, Id b) {
    Tensor<T> out = kernels::conv3x3_forward(value(x), value(w), value(b));
    return add_op(std::move(out), "conv3x3", {x, w, b}, [this, x, w, b](Id self) {
      kernels::conv3x3_backward(value(x), value(w), node(self).grad,
                                grad_target(x), grad_target(w), grad_target(b));
    });
  }

  Id conv1x1(Id x, Id w, Id b) {
    Tensor<T> out = kernels::conv1x1_forward(value(x), value(w), value(b));
    return add_op(std::move(out), "conv1x1", {x, w, b}, [this, x, w, b](Id self) {
      kernels::conv1x1_backward(value(x), value(w), node(self).grad,
                                grad_target(x), grad_target(w), grad_target(b));
    });
  }

  Id maxpool2x2(Id x) {
    auto mask = std::make_shared<std::vector<std::uint8_t>>();
    Tensor<T> out = kernels::maxpool2x2_forward(value(x), *mask);
    return add_op(std::move(out), "maxpool2x2", {x}, [this, x, mask](Id self) {
      if (Tensor<T>* dx = grad_target(x))
        kernels::maxpool2x2_backward(*mask, node(self).grad, *dx);
    });
  }

  Id upsample2x(Id x) {
    Tensor<T> out = kernels::upsample2x_forward(value(x));
    return add_op(std::move(out), "upsample2x", {x}, [this, x](Id self) {
      if (Tensor<T>* dx = grad_target(x))
        kernels::upsample2x_backward(node(self).grad, *dx);
    });
  }

  Id dense(Id x, Id w, Id b) {
    Tensor<T> out = kernels::dense_forward(value(x), value(w), value(b));
    return add_op(std::move(out), "dense", {x, w, b}, [this, x, w, b](Id self) {
      kernels::dense_backward(value(x), value(w), node(self).grad, grad_target(x),
                              grad_target(w), grad_target(b));
    });
  }

  Id relu(Id x) {
    Tensor<T> out = kernels::relu_forward(value(x));
    return add_op(std::move(out), "relu", {x}, [this, x](Id self) {
      if (Tensor<T>* dx = grad_target(x))
        kernels::relu_backward(value(x), node(self).grad, *dx);
    });
  }

  Id sigmoid(Id x) {
    Tensor<T> out = kernels::sigmoid_forward(value(x));
    return add_op(std::move(out), "sigmoid", {x}, [this, x](Id self) {
      if (Tensor<T>* dx = grad_target(x))
        kernels::sigmoid_backward(value(self), node(self).grad, *dx);
    });
  }

  Id concat_channels(Id a, Id b) {
    Tensor<T> out = kernels::concat_channels_forward(value(a), value(b));
    return add_op(std::move(out), "concat", {a, b}, [this, a, b](Id self) {
      kernels::concat_channels_backward(node(self).grad, grad_target(a), grad_target(b));
    });
  }

  Id reshape(Id x, int c, int h, int w) {
    const Tensor<T>& xv = value(x);
    if (static_cast<std::size_t>(c) * h * w != xv.sample_size())
      throw ShapeMismatch("reshape element count mismatch");
    Tensor<T> out(xv.n, c, h, w);
    out.v = xv.v;
    return add_op(std::move(out), "reshape", {x}, [this, x](Id self) {
      if (Tensor<T>* dx = grad_target(x)) {
        const Tensor<T>& dy = node(self).grad;
        for (std::size_t i = 0; i < dy.size(); ++i) dx->v[i] += dy.v[i];
      }
    });
  }

  Id bce_loss(Id pred, Id target) {
    T loss = kernels::bce_forward(value(pred), value(target));
    Tensor<T> out(1, 1, 1, 1);
    out.v[0] = loss;
    return add_op(std::move(out), "bce", {pred, target}, [this, pred, target](Id self) {
      if (Tensor<T>* dp = grad_target(pred))
        kernels::bce_backward(value(pred), value(target), node(self).grad.v[0], *dp);
    });
  }

  // Reverse sweep from `loss` (which must be scalar); fills parameter grads.
  void backward(Id loss) {
    if (!record_)
      throw GraphNotRecorded("backward on a graph built without recording");
    if (nodes_.empty() || loss < 0 || loss >= static_cast<Id>(nodes_.size()))
      throw GraphNotRecorded("no recorded forward pass for this loss node");
    if (node(loss).val().size() != 1)
      throw ShapeMismatch("loss must be a scalar tensor");
    ensure_grad(loss).v[0] = T(1);
    for (Id i = loss; i >= 0; --i) {
      Node& nd = nodes_[static_cast<std::size_t>(i)];
      if (nd.back && nd.grad.size() != 0) nd.back(i);
    }
    for (Node& nd : nodes_) {
      if (nd.bound && nd.grad.size() != 0) {
        if (nd.bound->grad.size() != nd.bound->value.size()) nd.bound->zero_grad();
        for (std::size_t k = 0; k < nd.grad.size(); ++k)
          nd.bound->grad.v[k] += nd.grad.v[k];
        nd.bound->has_grad = true;
      }
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> own;
    const Tensor<T>* view = nullptr;
    Tensor<T> grad;
    Param<T>* bound = nullptr;
    std::function<void(Id)> back;
    const char* op = "";
    bool needs_grad = false;

    const Tensor<T>& val() const { return view ? *view : own; }
  };

  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

  Id add_leaf(Tensor<T> value, Param<T>* bound, bool needs) {
    Node node;
    node.own = std::move(value);
    node.bound = bound;
    node.needs_grad = needs;
    node.op = "leaf";
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  template <typename Fn>
  Id add_op(Tensor<T> out, const char* op, std::initializer_list<Id> parents, Fn&& back) {
    if (check_finite_ && !kernels::all_finite(out))
      throw NumericError(std::string("non-finite value after ") + op);
    Node node;
    node.own = std::move(out);
    node.op = op;
    for (Id p : parents) node.needs_grad = node.needs_grad || nodes_[static_cast<std::size_t>(p)].needs_grad;
    if (record_ && node.needs_grad) node.back = std::forward<Fn>(back);
    nodes_.push_back(std::move(node));
    return static_cast<Id>(nodes_.size()) - 1;
  }

  Tensor<T>& ensure_grad(Id id) {
    Node& nd = node(id);
    if (nd.grad.size() == 0) {
      const Tensor<T>& v = nd.val();
      nd.grad = Tensor<T>(v.n, v.c, v.h, v.w);
    }
    return nd.grad;
  }

  // Gradient buffer for a parent, or nullptr when the parent does not need
  // gradients (saves the largest backward GEMMs for input leaves).
  Tensor<T>* grad_target(Id id) {
    Node& nd = node(id);
    if (!nd.needs_grad) return nullptr;
    return &ensure_grad(id);
  }

  std::vector<Node> nodes_;
  bool record_ = true;
  bool check_finite_ = false;
};

}  // namespace tforge::nn
