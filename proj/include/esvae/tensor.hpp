// Copyright 2026 The ESVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense row-major tensors with tape-based reverse-mode differentiation.
//
// A Tensor is a cheap handle onto a shared node holding its shape, values and
// (lazily allocated) gradient. Differentiable operations are free functions
// (see ops.hpp); when a Tape is active on the current thread and any input
// requires a gradient, the operation appends its local gradient rule to that
// tape. Tape::backward replays the rules in reverse recording order.
//
//   Tape<float> tape;
//   TapeScope<float> scope(tape);
//   auto loss = sum(mul(x, x));
//   tape.backward(loss);  // x.grad() == 2x
//
// Gradients of leaves accumulate across backward calls until zero_grad();
// recorded operations persist until Tape::reset().

#ifndef ESVAE_TENSOR_HPP_
#define ESVAE_TENSOR_HPP_

#include <Eigen/Core>

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "esvae/errors.hpp"

namespace esvae {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

template <typename Scalar>
using Buffer = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Index numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

inline std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

namespace detail {
inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

template <typename Scalar>
struct Node {
  Shape shape;
  Buffer<Scalar> value;
  Buffer<Scalar> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t id = detail::next_node_id();

  bool has_grad() const { return grad.size() == value.size() && value.size() > 0; }

  Buffer<Scalar>& grad_buffer() {
    if (grad.size() != value.size()) grad = Buffer<Scalar>::Zero(value.size());
    return grad;
  }
};

template <typename Scalar>
using NodePtr = std::shared_ptr<Node<Scalar>>;

template <typename Scalar>
class Tensor {
 public:
  using scalar_type = Scalar;

  Tensor() = default;

  Tensor(Shape shape, Buffer<Scalar> values, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    if (numel(shape) != values.size()) {
      throw DimensionError("tensor of shape " + to_string(shape) + " needs " +
                           std::to_string(numel(shape)) + " values, got " +
                           std::to_string(values.size()));
    }
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::initializer_list<Scalar> values, bool requires_grad = false)
      : Tensor(std::move(shape), from_list(values), requires_grad) {}

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), Scalar(0), requires_grad);
  }

  static Tensor full(Shape shape, Scalar value, bool requires_grad = false) {
    const Index n = numel(shape);
    return Tensor(std::move(shape), Buffer<Scalar>::Constant(n, value), requires_grad);
  }

  static Tensor scalar(Scalar value, bool requires_grad = false) {
    return full(Shape{1}, value, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }

  const Shape& shape() const { return node().shape; }
  Index rank() const { return static_cast<Index>(node().shape.size()); }
  Index dim(Index axis) const { return node().shape.at(static_cast<std::size_t>(axis)); }
  Index size() const { return node().value.size(); }

  Buffer<Scalar>& values() { return node().value; }
  const Buffer<Scalar>& values() const { return node().value; }

  bool has_grad() const { return node().has_grad(); }
  const Buffer<Scalar>& grad() const {
    if (!has_grad()) throw ContractError("tensor " + to_string(shape()) + " has no gradient");
    return node().grad;
  }
  Buffer<Scalar>& grad() { return node().grad_buffer(); }
  void zero_grad() {
    if (node().grad.size() > 0) node().grad.setZero();
  }

  bool requires_grad() const { return node().requires_grad; }
  Tensor& set_requires_grad(bool flag) {
    node().requires_grad = flag;
    return *this;
  }

  Scalar item() const {
    if (size() != 1) throw ContractError("item() on tensor of shape " + to_string(shape()));
    return node().value(0);
  }

  Scalar operator[](Index i) const { return node().value(i); }

  std::uint64_t id() const { return node().id; }

  // Copy of the values, cut off from the tape.
  Tensor detach() const { return Tensor(shape(), values(), false); }

  const NodePtr<Scalar>& node_ptr() const { return node_; }

 private:
  static Buffer<Scalar> from_list(std::initializer_list<Scalar> values) {
    Buffer<Scalar> b(static_cast<Index>(values.size()));
    Index i = 0;
    for (Scalar v : values) b(i++) = v;
    return b;
  }

  Node<Scalar>& node() const {
    if (!node_) throw ContractError("use of an undefined tensor");
    return *node_;
  }

  NodePtr<Scalar> node_;
};

using Tensorf = Tensor<float>;
using Tensord = Tensor<double>;

template <typename Scalar>
class Tape {
 public:
  // A local gradient rule reads the output node's gradient and accumulates
  // into the gradients of the inputs that require one.
  using Rule = std::function<void()>;

  struct Record {
    std::vector<NodePtr<Scalar>> inputs;
    NodePtr<Scalar> output;
    Rule rule;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::vector<NodePtr<Scalar>> inputs, NodePtr<Scalar> output, Rule rule) {
    records_.push_back(Record{std::move(inputs), std::move(output), std::move(rule)});
  }

  // Populates gradients for every ancestor of `loss`. Intermediate gradients are
  // recomputed from scratch on each call; leaf gradients accumulate.
  void backward(const Tensor<Scalar>& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw ContractError("backward() needs a scalar loss, got shape " +
                          (loss.defined() ? to_string(loss.shape()) : std::string("<undefined>")));
    }
    const Node<Scalar>* target = loss.node_ptr().get();
    std::ptrdiff_t last = -1;
    for (std::size_t i = 0; i < records_.size(); ++i) {
      if (records_[i].output.get() == target) last = static_cast<std::ptrdiff_t>(i);
    }
    if (last < 0) throw ContractError("backward(): loss was not recorded on this tape");

    std::unordered_set<const Node<Scalar>*> reached{target};
    for (std::ptrdiff_t i = 0; i <= last; ++i) {
      auto& out = *records_[static_cast<std::size_t>(i)].output;
      out.grad_buffer().setZero();
    }
    loss.node_ptr()->grad_buffer()(0) = Scalar(1);

    for (std::ptrdiff_t i = last; i >= 0; --i) {
      Record& rec = records_[static_cast<std::size_t>(i)];
      if (!reached.contains(rec.output.get())) continue;
      for (const auto& in : rec.inputs) {
        if (in && in->requires_grad) {
          in->grad_buffer();
          reached.insert(in.get());
        }
      }
      rec.rule();
    }
  }

  void reset() { records_.clear(); }

  std::size_t size() const { return records_.size(); }
  const std::vector<Record>& records() const { return records_; }

 private:
  std::vector<Record> records_;
};

template <typename Scalar>
Tape<Scalar>*& active_tape() {
  thread_local Tape<Scalar>* tape = nullptr;
  return tape;
}

// Makes `tape` the recording target on this thread for the scope's lifetime.
template <typename Scalar>
class TapeScope {
 public:
  explicit TapeScope(Tape<Scalar>& tape) : previous_(active_tape<Scalar>()) {
    active_tape<Scalar>() = &tape;
  }
  ~TapeScope() { active_tape<Scalar>() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<Scalar>* previous_;
};

namespace detail {

// Wraps a freshly computed value as an op result. If a tape is active and any
// input requires a gradient, `make_rule(out_node)` builds the gradient rule.
template <typename Scalar, typename RuleFactory>
Tensor<Scalar> record_op(Shape shape, Buffer<Scalar> value,
                         std::initializer_list<const Tensor<Scalar>*> inputs,
                         RuleFactory&& make_rule) {
  Tensor<Scalar> out(std::move(shape), std::move(value));
  Tape<Scalar>* tape = active_tape<Scalar>();
  if (!tape) return out;
  bool needs_grad = false;
  std::vector<NodePtr<Scalar>> nodes;
  nodes.reserve(inputs.size());
  for (const auto* t : inputs) {
    nodes.push_back(t->node_ptr());
    needs_grad = needs_grad || t->requires_grad();
  }
  if (!needs_grad) return out;
  out.set_requires_grad(true);
  tape->record(std::move(nodes), out.node_ptr(), make_rule(out.node_ptr()));
  return out;
}

}  // namespace detail
}  // namespace esvae

#endif  // ESVAE_TENSOR_HPP_
