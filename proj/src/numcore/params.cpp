// SPDX-License-Identifier: Apache-2.0
#include "ssdl/numcore/params.hpp"

#include <cmath>
#include <stdexcept>

namespace ssdl::num {

Parameter& ParameterSet::add(const std::string& name, std::size_t rows, std::size_t cols, Init init,
                             Rng& rng) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  Parameter p{name, Tensor::zeros(rows, cols), Tensor::zeros(rows, cols)};
  if (init == Init::Glorot) glorot_uniform(p.value, rng);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
  return params_.back();
}

Parameter* ParameterSet::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

const Parameter* ParameterSet::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter& ParameterSet::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw std::out_of_range("unknown parameter: " + name);
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (!p.grad.same_shape(p.value)) p.grad = Tensor(p.value.shape());
    else p.grad.fill(0.0);
  }
}

std::map<std::string, Tensor> ParameterSet::values() const {
  std::map<std::string, Tensor> out;
  for (const auto& p : params_) out.emplace(p.name, p.value);
  return out;
}

void ParameterSet::assign(const std::map<std::string, Tensor>& values) {
  for (auto& p : params_) {
    auto it = values.find(p.name);
    if (it == values.end()) throw std::invalid_argument("missing value for parameter " + p.name);
    require_same_shape(p.value, it->second, p.name.c_str());
    p.value = it->second;
  }
}

void glorot_uniform(Tensor& t, Rng& rng) {
  const double fan_in = static_cast<double>(t.rows());
  const double fan_out = static_cast<double>(t.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.data()) v = dist(rng);
}

}  // namespace ssdl::num
