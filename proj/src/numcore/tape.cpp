// SPDX-License-Identifier: Apache-2.0
#include "ssdl/numcore/tape.hpp"

#include <sstream>
#include <stdexcept>

namespace ssdl::num {

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "const";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.op = "param";
  n.value = p.value;
  n.param = &p;
  n.needs_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  param_nodes_[&p] = nodes_.size() - 1;
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(const char* op, Tensor value, std::span<const Var> inputs, Backward backward) {
  Node n;
  n.op = op;
  n.value = std::move(value);
  if (grad_enabled_) {
    n.inputs.reserve(inputs.size());
    for (const Var& v : inputs) {
      if (v.tape != this) throw std::logic_error(std::string(op) + ": input recorded on another tape");
      n.inputs.push_back(v.id);
      n.needs_grad = n.needs_grad || nodes_[v.id].needs_grad;
    }
    if (n.needs_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Tensor& Tape::grad_accumulator(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw std::logic_error("backward: loss recorded on another tape");
  if (nodes_[loss.id].value.size() != 1) {
    throw std::logic_error("backward: loss must be scalar, got shape " +
                           shape_string(nodes_[loss.id].value.shape()));
  }
  if (!grad_enabled_) throw std::logic_error("backward: tape recorded with gradients disabled");
  grad_accumulator(loss.id)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) {
      auto& pg = n.param->grad;
      if (!pg.same_shape(n.value)) pg = Tensor(n.value.shape());
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
    }
  }
}

std::string Tape::to_dot() const {
  std::ostringstream os;
  os << "digraph tape {\n  node [shape=box];\n";
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    os << "  n" << i << " [label=\"" << i << ": " << n.op;
    if (n.param) os << " " << n.param->name;
    os << "\\n" << shape_string(n.value.shape()) << "\"];\n";
    for (std::size_t in : n.inputs) os << "  n" << in << " -> n" << i << ";\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace ssdl::num
