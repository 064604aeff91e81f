// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include "ssdl/numcore/ops.hpp"

namespace ssdl::vae {

/**
 * Gated recurrent unit with stacked gate weights in [reset, update, candidate] order:
 *   r = sigmoid(x W_ir + b_ir + h W_hr + b_hr)
 *   z = sigmoid(x W_iz + b_iz + h W_hz + b_hz)
 *   n = tanh(x W_in + b_in + r * (h W_hn + b_hn))
 *   h' = (1 - z) * n + z * h
 */
struct GruParams {
  num::Parameter* W_ih = nullptr;  // in x 3H
  num::Parameter* W_hh = nullptr;  // H x 3H
  num::Parameter* b_ih = nullptr;  // 1 x 3H
  num::Parameter* b_hh = nullptr;  // 1 x 3H

  static GruParams create(num::ParameterSet& params, const std::string& prefix, std::size_t input,
                          std::size_t hidden, num::Rng& rng);
  static GruParams bind(num::ParameterSet& params, const std::string& prefix);

  std::size_t input_size() const { return W_ih->value.rows(); }
  std::size_t hidden_size() const { return W_hh->value.rows(); }
};

/// One step given the precomputed input projection x W_ih + b_ih (B x 3H).
num::Var gru_step(num::Tape& tape, const GruParams& p, num::Var x_proj, num::Var h);

/**
 * Runs the cell over time-major inputs (each B x in) from a zero state.
 * Rows whose mask entry is 0 keep their previous state, so after the last
 * step every row holds the state at its own final valid position.
 * An empty `masks` means every step is valid.
 */
std::vector<num::Var> gru_sequence(num::Tape& tape, const GruParams& p, std::span<const num::Var> inputs,
                                   std::span<const num::Tensor> masks);

/// Runs the cell over precomputed input projections (each B x 3H).
std::vector<num::Var> gru_sequence_projected(num::Tape& tape, const GruParams& p, std::span<const num::Var> projections,
                                             std::span<const num::Tensor> masks);

/// Same as gru_sequence with all input projections in one product: `stacked` is (T*B) x in, time-major.
std::vector<num::Var> gru_sequence_stacked(num::Tape& tape, const GruParams& p, num::Var stacked,
                                           std::size_t batch, std::span<const num::Tensor> masks);

}  // namespace ssdl::vae
