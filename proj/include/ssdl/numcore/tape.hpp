// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssdl/numcore/params.hpp"
#include "ssdl/numcore/tensor.hpp"

namespace ssdl::num {

class Tape;

/// Handle to a value recorded on a tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool valid() const noexcept { return tape != nullptr; }
  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
};

/**
 * Record of executed operations for one forward pass.
 *
 * Nodes are appended in execution order, so inputs always precede their
 * consumers and backward() simply walks the record in reverse. A tape lives
 * for a single training step; values stay addressable until it is destroyed.
 */
class Tape {
 public:
  /// Local backward rule: reads grad(self) and accumulates into its inputs.
  using Backward = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const noexcept { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf bound to a parameter; repeated calls return the same node.
  Var param(Parameter& p);

  Var record(const char* op, Tensor value, std::span<const Var> inputs, Backward backward);
  Var record(const char* op, Tensor value, std::initializer_list<Var> inputs, Backward backward) {
    return record(op, std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  /// Gradient of a node after backward(); empty when nothing reached it.
  const Tensor& grad(std::size_t id) const { return nodes_[id].grad; }
  const Tensor& grad(Var v) const { return grad(v.id); }
  /// Zero-initialised on first access.
  Tensor& grad_accumulator(std::size_t id);

  /**
   * Reverse pass from a scalar loss. Parameter leaves add their gradient
   * into Parameter::grad; the caller zeroes those beforehand.
   */
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  const char* op_name(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Graphviz rendering of the recorded operations.
  std::string to_dot() const;

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    Tensor grad;
    std::vector<std::size_t> inputs;
    Backward backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

}  // namespace ssdl::num
