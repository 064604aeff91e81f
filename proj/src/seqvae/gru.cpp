// SPDX-License-Identifier: Apache-2.0
#include "ssdl/seqvae/gru.hpp"

namespace ssdl::vae {

using num::Var;

GruParams GruParams::create(num::ParameterSet& params, const std::string& prefix, std::size_t input,
                            std::size_t hidden, num::Rng& rng) {
  params.add(prefix + ".W_ih", input, 3 * hidden, num::Init::Glorot, rng);
  params.add(prefix + ".W_hh", hidden, 3 * hidden, num::Init::Glorot, rng);
  params.add(prefix + ".b_ih", 1, 3 * hidden, num::Init::Zeros, rng);
  params.add(prefix + ".b_hh", 1, 3 * hidden, num::Init::Zeros, rng);
  return bind(params, prefix);
}

GruParams GruParams::bind(num::ParameterSet& params, const std::string& prefix) {
  return {&params.at(prefix + ".W_ih"), &params.at(prefix + ".W_hh"), &params.at(prefix + ".b_ih"),
          &params.at(prefix + ".b_hh")};
}

Var gru_step(num::Tape& tape, const GruParams& p, Var x_proj, Var h) {
  const std::size_t H = p.hidden_size();
  const Var hp = num::matmul(h, tape.param(*p.W_hh)) + tape.param(*p.b_hh);
  const Var r = num::sigmoid(num::slice_cols(x_proj, 0, H) + num::slice_cols(hp, 0, H));
  const Var z = num::sigmoid(num::slice_cols(x_proj, H, H) + num::slice_cols(hp, H, H));
  const Var n = num::tanh(num::slice_cols(x_proj, 2 * H, H) + r * num::slice_cols(hp, 2 * H, H));
  // (1 - z) * n + z * h == n + z * (h - n)
  return n + z * (h - n);
}

std::vector<Var> gru_sequence_projected(num::Tape& tape, const GruParams& p, std::span<const Var> projections,
                                        std::span<const num::Tensor> masks) {
  if (projections.empty()) return {};
  const std::size_t batch = projections.front().rows();
  if (!masks.empty() && masks.size() != projections.size())
    throw num::DimensionError("gru: " + std::to_string(masks.size()) + " masks for " +
                              std::to_string(projections.size()) + " steps");
  std::vector<Var> states;
  states.reserve(projections.size());
  Var h = tape.constant(num::Tensor::zeros(batch, p.hidden_size()));
  for (std::size_t t = 0; t < projections.size(); ++t) {
    const Var next = gru_step(tape, p, projections[t], h);
    h = masks.empty() ? next : h + num::mul(tape.constant(masks[t]), next - h);
    states.push_back(h);
  }
  return states;
}

std::vector<Var> gru_sequence(num::Tape& tape, const GruParams& p, std::span<const Var> inputs,
                              std::span<const num::Tensor> masks) {
  if (inputs.empty()) return {};
  const Var W = tape.param(*p.W_ih), b = tape.param(*p.b_ih);
  std::vector<Var> proj;
  proj.reserve(inputs.size());
  for (const Var& x : inputs) proj.push_back(num::matmul(x, W) + b);
  return gru_sequence_projected(tape, p, proj, masks);
}

std::vector<Var> gru_sequence_stacked(num::Tape& tape, const GruParams& p, Var stacked, std::size_t batch,
                                      std::span<const num::Tensor> masks) {
  if (batch == 0 || stacked.rows() % batch != 0)
    throw num::DimensionError("gru: stacked rows " + std::to_string(stacked.rows()) + " not a multiple of batch " +
                              std::to_string(batch));
  const Var all = num::matmul(stacked, tape.param(*p.W_ih)) + tape.param(*p.b_ih);
  const std::size_t T = stacked.rows() / batch;
  std::vector<Var> proj;
  proj.reserve(T);
  for (std::size_t t = 0; t < T; ++t) proj.push_back(num::slice_rows(all, t * batch, batch));
  return gru_sequence_projected(tape, p, proj, masks);
}

}  // namespace ssdl::vae
