// SPDX-License-Identifier: Apache-2.0
#include "ssdl/seqvae/vae.hpp"

#include <algorithm>
#include <cmath>

namespace ssdl::vae {

using num::Init;
using num::Tensor;
using num::Var;

GaussianHead GaussianHead::create(num::ParameterSet& params, const std::string& prefix, std::size_t input,
                                  std::size_t output, num::Rng& rng) {
  params.add(prefix + ".W_mu", input, output, Init::Glorot, rng);
  params.add(prefix + ".b_mu", 1, output, Init::Zeros, rng);
  params.add(prefix + ".W_lv", input, output, Init::Glorot, rng);
  params.add(prefix + ".b_lv", 1, output, Init::Zeros, rng);
  return bind(params, prefix);
}

GaussianHead GaussianHead::bind(num::ParameterSet& params, const std::string& prefix) {
  return {&params.at(prefix + ".W_mu"), &params.at(prefix + ".b_mu"), &params.at(prefix + ".W_lv"),
          &params.at(prefix + ".b_lv")};
}

Gaussian GaussianHead::apply(num::Tape& tape, Var x) const {
  const Var mean = num::matmul(x, tape.param(*W_mu)) + tape.param(*b_mu);
  const Var lv = num::matmul(x, tape.param(*W_lv)) + tape.param(*b_lv);
  return {mean, num::clamp(lv, kLogvarMin, kLogvarMax)};
}

VaeParams VaeParams::create(num::ParameterSet& params, const VaeDims& d, num::Rng& rng, const std::string& prefix) {
  if (d.num_pois == 0 || d.embed == 0 || d.z_s == 0 || d.z_r == 0 || d.prior_hidden == 0)
    throw std::invalid_argument("vae: every dimension must be positive");
  params.add(prefix + ".W_f", 3 * d.embed, d.embed, Init::Glorot, rng);
  params.add(prefix + ".b_f", 1, d.embed, Init::Zeros, rng);
  GruParams::create(params, prefix + ".encoder", d.embed, d.embed, rng);
  GruParams::create(params, prefix + ".posterior", d.embed, d.embed, rng);
  GaussianHead::create(params, prefix + ".zs", d.embed, d.z_s, rng);
  GaussianHead::create(params, prefix + ".zr", d.embed + d.z_r, d.z_r, rng);
  GruParams::create(params, prefix + ".prior", d.z_r, d.prior_hidden, rng);
  GaussianHead::create(params, prefix + ".prior_head", d.prior_hidden, d.z_r, rng);
  GruParams::create(params, prefix + ".decoder", d.z_r + d.z_s, d.embed, rng);
  params.add(prefix + ".W_o", d.embed, d.num_pois, Init::Glorot, rng);
  params.add(prefix + ".b_o", 1, d.num_pois, Init::Zeros, rng);
  return bind(params, d, prefix);
}

VaeParams VaeParams::bind(num::ParameterSet& params, const VaeDims& d, const std::string& prefix) {
  VaeParams p;
  p.dims = d;
  p.W_f = &params.at(prefix + ".W_f");
  p.b_f = &params.at(prefix + ".b_f");
  p.encoder = GruParams::bind(params, prefix + ".encoder");
  p.posterior = GruParams::bind(params, prefix + ".posterior");
  p.zs_head = GaussianHead::bind(params, prefix + ".zs");
  p.zr_head = GaussianHead::bind(params, prefix + ".zr");
  p.prior = GruParams::bind(params, prefix + ".prior");
  p.prior_head = GaussianHead::bind(params, prefix + ".prior_head");
  p.decoder = GruParams::bind(params, prefix + ".decoder");
  p.W_o = &params.at(prefix + ".W_o");
  p.b_o = &params.at(prefix + ".b_o");
  return p;
}

SequenceBatch SequenceBatch::from(const std::vector<std::vector<std::size_t>>& sequences) {
  SequenceBatch b;
  b.batch = sequences.size();
  for (const auto& s : sequences) {
    if (s.empty()) throw std::invalid_argument("sequence batch: empty trajectory");
    b.lengths.push_back(s.size());
    b.steps = std::max(b.steps, s.size());
  }
  b.pois.assign(b.steps, std::vector<std::size_t>(b.batch, 0));
  b.masks.assign(b.steps, Tensor::zeros(b.batch, 1));
  for (std::size_t i = 0; i < b.batch; ++i) {
    for (std::size_t t = 0; t < sequences[i].size(); ++t) {
      b.pois[t][i] = sequences[i][t];
      b.masks[t][i] = 1.0;
    }
  }
  return b;
}

std::vector<std::size_t> SequenceBatch::flat_pois() const {
  std::vector<std::size_t> out;
  out.reserve(steps * batch);
  for (const auto& row : pois) out.insert(out.end(), row.begin(), row.end());
  return out;
}

Tensor SequenceBatch::flat_mask() const {
  Tensor m = Tensor::zeros(steps * batch, 1);
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t i = 0; i < batch; ++i) m[t * batch + i] = masks[t][i];
  return m;
}

Var contextual_table(num::Tape& tape, const VaeParams& p, Var features) {
  return num::matmul(features, tape.param(*p.W_f)) + tape.param(*p.b_f);
}

Var contextual_table(num::Tape& tape, const VaeParams& p, Var E_l, Var E_t, Var E_a) {
  return contextual_table(tape, p, num::concat_cols({E_l, E_t, E_a}));
}

Var contextual_embed(num::Tape& tape, const VaeParams& p, Var E_l, Var E_t, Var E_a, std::size_t poi) {
  if (poi >= E_l.rows())
    throw std::out_of_range("POI index " + std::to_string(poi) + " outside vocabulary of " +
                            std::to_string(E_l.rows()));
  const std::size_t idx[] = {poi};
  const Var row = num::concat_cols({num::gather_rows(E_l, idx), num::gather_rows(E_t, idx), num::gather_rows(E_a, idx)});
  return contextual_table(tape, p, row);
}

Var embed_batch(num::Tape&, Var table, const SequenceBatch& batch) {
  const auto flat = batch.flat_pois();
  for (std::size_t poi : flat)
    if (poi >= table.rows())
      throw std::out_of_range("POI index " + std::to_string(poi) + " outside vocabulary of " +
                              std::to_string(table.rows()));
  return num::gather_rows(table, flat);
}

std::vector<Var> encode_sequence(num::Tape& tape, const VaeParams& p, Var stacked, const SequenceBatch& batch) {
  return gru_sequence_stacked(tape, p.encoder, stacked, batch.batch, batch.masks);
}

Tensor standard_normal(std::size_t rows, std::size_t cols, num::Rng* rng) {
  Tensor t = Tensor::zeros(rows, cols);
  if (rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& x : t.storage()) x = normal(*rng);
  }
  return t;
}

Var reparameterize(const Gaussian& g, const Tensor& eps) {
  num::require_same_shape(g.mean.value(), eps, "reparameterize");
  num::Tape& tape = *g.mean.tape;
  return g.mean + num::mul(num::exp(num::scale(g.logvar, 0.5)), tape.constant(eps));
}

PosteriorFactors posterior(num::Tape& tape, const VaeParams& p, std::span<const Var> encoded,
                           std::span<const Tensor> masks, num::Rng* rng) {
  if (encoded.empty()) throw std::invalid_argument("posterior: no encoder states");
  PosteriorFactors out;
  out.states = gru_sequence(tape, p.posterior, encoded, masks);
  const std::size_t B = encoded.front().rows();
  Var prev = tape.constant(Tensor::zeros(B, p.dims.z_r));
  for (const Var& g : out.states) {
    const Gaussian q = p.zr_head.apply(tape, num::concat_cols({g, prev}));
    const Var z = rng ? reparameterize(q, standard_normal(B, p.dims.z_r, rng)) : q.mean;
    out.zr.push_back(q);
    out.zr_sample.push_back(z);
    prev = z;
  }
  out.zs = p.zs_head.apply(tape, out.states.back());
  out.zs_sample = rng ? reparameterize(out.zs, standard_normal(B, p.dims.z_s, rng)) : out.zs.mean;
  return out;
}

Gaussian prior_step(num::Tape& tape, const VaeParams& p, Var z_prev, Var& state) {
  const Var proj = num::matmul(z_prev, tape.param(*p.prior.W_ih)) + tape.param(*p.prior.b_ih);
  state = gru_step(tape, p.prior, proj, state);
  return p.prior_head.apply(tape, state);
}

Var stack_rows(std::span<const Var> parts) { return parts.size() == 1 ? parts.front() : num::concat_rows(parts); }

Gaussian stack(std::span<const Gaussian> parts) {
  std::vector<Var> m, v;
  for (const auto& g : parts) {
    m.push_back(g.mean);
    v.push_back(g.logvar);
  }
  return {stack_rows(m), stack_rows(v)};
}

Gaussian prior_chain(num::Tape& tape, const VaeParams& p, std::span<const Var> zr_samples,
                     std::span<const Tensor> masks) {
  if (zr_samples.empty()) throw std::invalid_argument("prior_chain: no steps");
  const std::size_t B = zr_samples.front().rows();
  std::vector<Var> inputs{tape.constant(Tensor::zeros(B, p.dims.z_r))};
  inputs.insert(inputs.end(), zr_samples.begin(), zr_samples.end() - 1);
  const auto states = gru_sequence_stacked(tape, p.prior, stack_rows(inputs), B, masks);
  return p.prior_head.apply(tape, stack_rows(states));
}

Var decode(num::Tape& tape, const VaeParams& p, Var zs, std::span<const Var> zr, std::span<const Tensor> masks) {
  const std::size_t B = zs.rows(), zr_dim = p.dims.z_r;
  // [z^r_t, z^s] W_ih splits into a per-step part and a part shared across steps.
  const Var W = tape.param(*p.decoder.W_ih);
  const Var from_zr = num::matmul(stack_rows(zr), num::slice_rows(W, 0, zr_dim));
  const Var shared = num::matmul(zs, num::slice_rows(W, zr_dim, p.dims.z_s)) + tape.param(*p.decoder.b_ih);
  std::vector<Var> proj;
  for (std::size_t t = 0; t < zr.size(); ++t) proj.push_back(num::slice_rows(from_zr, t * B, B) + shared);
  const auto states = gru_sequence_projected(tape, p.decoder, proj, masks);
  return num::matmul(stack_rows(states), tape.param(*p.W_o)) + tape.param(*p.b_o);
}

Var reconstruction(Var logits, const SequenceBatch& batch) {
  num::Tape& tape = *logits.tape;
  const Var ll = num::pick(num::log_softmax_rows(logits), batch.flat_pois());
  return num::sum(num::mul(ll, tape.constant(batch.flat_mask())));
}

Var kl_gaussian(const Gaussian& q, const Gaussian& p) {
  const Var dlv = q.logvar - p.logvar;
  const Var diff = q.mean - p.mean;
  const Var per_dim =
      num::scale(num::add_scalar(num::exp(dlv) + num::mul(num::square(diff), num::exp(num::neg(p.logvar))) - dlv, -1.0),
                 0.5);
  return num::row_sum(per_dim);
}

Var kl_standard_normal(const Gaussian& q) {
  const Var per_dim = num::scale(num::add_scalar(num::exp(q.logvar) + num::square(q.mean) - q.logvar, -1.0), 0.5);
  return num::row_sum(per_dim);
}

ElboTerms elbo(num::Tape& tape, const VaeParams& p, Var table, const SequenceBatch& batch, num::Rng* rng) {
  const Var stacked = embed_batch(tape, table, batch);
  const auto encoded = encode_sequence(tape, p, stacked, batch);
  ElboTerms out;
  out.post = posterior(tape, p, encoded, batch.masks, rng);
  out.prior = prior_chain(tape, p, out.post.zr_sample, batch.masks);
  const Var logits = decode(tape, p, out.post.zs_sample, out.post.zr_sample, batch.masks);
  out.recon = reconstruction(logits, batch);
  out.kl_s = num::sum(kl_standard_normal(out.post.zs));
  const Var kl_steps = kl_gaussian(stack(out.post.zr), out.prior);
  out.kl_r = num::sum(num::mul(kl_steps, tape.constant(batch.flat_mask())));
  out.elbo = out.recon - out.kl_s - out.kl_r;
  const std::pair<const char*, Var> terms[] = {{"reconstruction", out.recon}, {"kl_s", out.kl_s}, {"kl_r", out.kl_r}};
  for (const auto& [name, v] : terms)
    if (!std::isfinite(v.value().item())) throw NonFiniteValue(name);
  return out;
}

}  // namespace ssdl::vae
