// SPDX-License-Identifier: Apache-2.0
#include "ssdl/numcore/adam.hpp"

#include <cmath>

namespace ssdl::num {

void adam_step(ParameterSet& params, AdamState& state) {
  for (const Parameter& p : params) {
    for (double g : p.grad.data())
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (Parameter& p : params) {
    Tensor& m = state.first_moment[p.name];
    Tensor& v = state.second_moment[p.name];
    if (!m.same_shape(p.value)) m = Tensor(p.value.shape());
    if (!v.same_shape(p.value)) v = Tensor(p.value.shape());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      p.value[i] -= state.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + state.eps);
    }
  }
}

}  // namespace ssdl::num
