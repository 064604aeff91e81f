// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference oracle for the reverse-mode engine. It only
// re-evaluates the forward function, so it never shares a code path with the
// backward rules it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "ssdl/numcore/ops.hpp"

namespace ssdl::testing {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;
  std::size_t checked = 0;
};

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

/**
 * Compares tape gradients of `loss` with central differences of step `h`.
 * At most `per_param` entries of each parameter are probed, spread evenly.
 */
inline GradCheckResult check_gradients(num::ParameterSet& params,
                                       const std::function<num::Var(num::Tape&)>& loss, double h = 1e-5,
                                       std::size_t per_param = 12) {
  params.zero_grad();
  {
    num::Tape tape;
    tape.backward(loss(tape));
  }
  auto evaluate = [&] {
    num::Tape tape(false);
    return loss(tape).value().item();
  };
  GradCheckResult result;
  for (num::Parameter& p : params) {
    const std::size_t n = p.value.size();
    const std::size_t stride = std::max<std::size_t>(1, n / per_param);
    for (std::size_t i = 0; i < n; i += stride) {
      const double saved = p.value[i];
      p.value[i] = saved + h;
      const double up = evaluate();
      p.value[i] = saved - h;
      const double down = evaluate();
      p.value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double err = relative_error(p.grad[i], numeric);
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst = p.name + "[" + std::to_string(i) + "] analytic=" + std::to_string(p.grad[i]) +
                       " numeric=" + std::to_string(numeric);
      }
    }
  }
  return result;
}

}  // namespace ssdl::testing
