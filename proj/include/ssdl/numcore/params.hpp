// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "ssdl/numcore/tensor.hpp"

namespace ssdl::num {

using Rng = std::mt19937_64;

/// A trainable tensor with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
};

enum class Init { Zeros, Glorot };

/**
 * Owns every trainable tensor of a model. Parameters keep stable addresses
 * for the lifetime of the set, so modules may hold plain pointers to them.
 */
class ParameterSet {
 public:
  ParameterSet() = default;
  ParameterSet(const ParameterSet&) = delete;
  ParameterSet& operator=(const ParameterSet&) = delete;
  ParameterSet(ParameterSet&&) = default;
  ParameterSet& operator=(ParameterSet&&) = default;

  /// Registers a rows x cols parameter. Names must be unique.
  Parameter& add(const std::string& name, std::size_t rows, std::size_t cols, Init init, Rng& rng);

  Parameter* find(const std::string& name);
  const Parameter* find(const std::string& name) const;
  Parameter& at(const std::string& name);

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t scalar_count() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  /// Snapshot / restore of parameter values by name.
  std::map<std::string, Tensor> values() const;
  void assign(const std::map<std::string, Tensor>& values);

 private:
  std::deque<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform Glorot initialization with fan_in = rows and fan_out = cols.
void glorot_uniform(Tensor& t, Rng& rng);

}  // namespace ssdl::num
