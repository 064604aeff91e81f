// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "ssdl/numcore/params.hpp"

namespace ssdl::num {

/// Raised when a gradient holds NaN or Inf; no parameter has been touched.
class NonFiniteGradient : public std::runtime_error {
 public:
  explicit NonFiniteGradient(const std::string& param)
      : std::runtime_error("non-finite gradient in parameter " + param), param_(param) {}
  const std::string& param() const noexcept { return param_; }

 private:
  std::string param_;
};

struct AdamState {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  std::map<std::string, Tensor> first_moment;
  std::map<std::string, Tensor> second_moment;
};

/// Bias-corrected Adam update from the gradients held in `params`.
void adam_step(ParameterSet& params, AdamState& state);

}  // namespace ssdl::num
