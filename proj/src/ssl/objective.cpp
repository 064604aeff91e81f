// SPDX-License-Identifier: Apache-2.0
#include "ssdl/ssl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "ssdl/ssl/counters.hpp"

namespace ssdl::ssl {

using num::Tensor;
using num::Var;

namespace {

CallCounts g_counts;

void require_finite(Var v, const char* component) {
  for (double x : v.value().storage())
    if (!std::isfinite(x)) throw vae::NonFiniteValue(component);
}

std::vector<std::vector<std::size_t>> sequences_of(std::span<const data::Trajectory> trajectories) {
  std::vector<std::vector<std::size_t>> out;
  out.reserve(trajectories.size());
  for (const auto& t : trajectories) out.push_back(t.pois);
  return out;
}

vae::PosteriorFactors encode_means(num::Tape& tape, const vae::VaeParams& params, Var table,
                                   const vae::SequenceBatch& batch) {
  const Var stacked = vae::embed_batch(tape, table, batch);
  const auto states = vae::encode_sequence(tape, params, stacked, batch);
  return vae::posterior(tape, params, states, batch.masks, nullptr);
}

std::vector<Var> means_of(std::span<const vae::Gaussian> gs) {
  std::vector<Var> out;
  out.reserve(gs.size());
  for (const auto& g : gs) out.push_back(g.mean);
  return out;
}

}  // namespace

namespace detail {
CallCounts& counters() { return g_counts; }
}  // namespace detail

CallCounts call_counts() { return g_counts; }
void reset_call_counts() { g_counts = {}; }

void SSLConfig::validate() const {
  if (!(alpha >= 0 && beta >= 0 && gamma >= 0)) throw std::invalid_argument("ssl weights must be non-negative");
  if (!(eta > 0)) throw std::invalid_argument("ssl temperature must be positive");
  if (negatives < 1) throw std::invalid_argument("ssl needs at least one negative per anchor");
  if (!(replace_ratio >= 0 && replace_ratio <= 1)) throw std::invalid_argument("replace_ratio must lie in [0, 1]");
  if (!(collective_radius_m >= 0)) throw std::invalid_argument("collective radius must be non-negative");
}

NegativePlan NegativePlan::from_users(std::span<const std::size_t> users, std::size_t max_negatives) {
  NegativePlan plan;
  std::vector<std::size_t> rep_user;
  std::map<std::size_t, std::size_t> seen;
  for (std::size_t i = 0; i < users.size(); ++i) {
    if (seen.emplace(users[i], plan.representatives.size()).second) {
      plan.representatives.push_back(i);
      rep_user.push_back(users[i]);
    }
  }
  if (plan.representatives.size() < 2)
    throw NoNegatives("contrastive batch holds a single user; no negatives available");
  plan.mask = Tensor::zeros(users.size(), plan.representatives.size());
  for (std::size_t i = 0; i < users.size(); ++i) {
    std::size_t taken = 0;
    for (std::size_t u = 0; u < rep_user.size() && taken < max_negatives; ++u) {
      if (rep_user[u] == users[i]) continue;
      plan.mask(i, u) = 1.0;
      ++taken;
    }
  }
  return plan;
}

std::size_t NegativePlan::negatives_of(std::size_t anchor) const {
  std::size_t n = 0;
  for (std::size_t u = 0; u < mask.cols(); ++u) n += mask(anchor, u) != 0.0;
  return n;
}

Var nce_batch(Var anchors, Var positives, Var candidates, const Tensor& mask, double eta) {
  ++g_counts.nce;
  if (!(eta > 0)) throw std::invalid_argument("nce temperature must be positive");
  num::require_same_shape(anchors.value(), positives.value(), "nce positives");
  if (candidates.cols() != anchors.cols() || mask.rows() != anchors.rows() || mask.cols() != candidates.rows())
    throw num::DimensionError("nce: candidate or mask shape mismatch");
  const Var a = num::l2_normalize_rows(anchors);
  const Var p = num::l2_normalize_rows(positives);
  const Var c = num::l2_normalize_rows(candidates);
  const Var pos = num::scale(num::row_sum(a * p), 1.0 / eta);
  const Var negs = num::scale(num::matmul_nt(a, c), 1.0 / eta);
  Tensor full = Tensor::zeros(mask.rows(), mask.cols() + 1);
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    full(i, 0) = 1.0;
    for (std::size_t j = 0; j < mask.cols(); ++j) full(i, j + 1) = mask(i, j);
  }
  return pos - num::masked_logsumexp_rows(num::concat_cols({pos, negs}), full);
}

Var nce(Var anchor, Var positive, Var negatives, double eta) {
  if (anchor.rows() != 1 || negatives.rows() < 1)
    throw num::DimensionError("nce: expects one anchor row and at least one negative");
  return num::sum(nce_batch(anchor, positive, negatives, Tensor::filled(1, negatives.rows(), 1.0), eta));
}

Var pool_steps(std::span<const Var> steps, std::span<const Tensor> masks) {
  if (steps.empty() || steps.size() != masks.size()) throw num::DimensionError("pool_steps: step/mask count mismatch");
  num::Tape& tape = *steps.front().tape;
  Tensor counts = Tensor::zeros(masks.front().rows(), 1);
  Var total = steps.front() * tape.constant(masks.front());
  for (std::size_t t = 0; t < steps.size(); ++t) {
    for (std::size_t b = 0; b < counts.rows(); ++b) counts(b, 0) += masks[t](b, 0);
    if (t > 0) total = total + steps[t] * tape.constant(masks[t]);
  }
  for (double& c : counts.storage()) {
    if (c <= 0) throw std::invalid_argument("pool_steps: empty sequence");
    c = 1.0 / c;
  }
  return total * tape.constant(std::move(counts));
}

Var contrastive_term(Var anchors, Var positives, Var pool, const NegativePlan& plan, double eta) {
  const Var candidates = num::gather_rows(pool, plan.representatives);
  return num::mean(nce_batch(anchors, positives, candidates, plan.mask, eta));
}

Var mi_zs(Var zs_sample, Var mean_original, Var mean_shuffled, const NegativePlan& plan, double eta) {
  const Var c = contrastive_term(zs_sample, mean_original, mean_original, plan, eta);
  const Var c_shuffled = contrastive_term(zs_sample, mean_shuffled, mean_original, plan, eta);
  return num::scale(c + c_shuffled, 0.5);
}

Var mi_zr(Var pooled_sample, Var pooled_original, Var pooled_collective, const NegativePlan& plan, double eta) {
  const Var c = contrastive_term(pooled_sample, pooled_original, pooled_original, plan, eta);
  const Var c_collective = contrastive_term(pooled_sample, pooled_collective, pooled_original, plan, eta);
  return num::scale(c + c_collective, 0.5);
}

Var mws_mi(Var zs_sample, const vae::Gaussian& zs_q, std::span<const Var> zr_samples,
           std::span<const vae::Gaussian> zr_q, std::span<const Tensor> masks, std::size_t dataset_size) {
  ++g_counts.mws;
  if (dataset_size == 0) throw std::invalid_argument("mws_mi: dataset size must be positive");
  if (zr_samples.empty() || zr_samples.size() != zr_q.size() || zr_q.size() != masks.size())
    throw num::DimensionError("mws_mi: step count mismatch");
  const std::size_t m = zs_sample.rows();
  const std::size_t zr = zr_samples.front().cols();

  std::vector<Var> means, logvars;
  for (const auto& g : zr_q) {
    means.push_back(g.mean);
    logvars.push_back(g.logvar);
  }
  Tensor step_mask = Tensor::zeros(m, zr * masks.size());
  for (std::size_t t = 0; t < masks.size(); ++t)
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t d = 0; d < zr; ++d) step_mask(b, t * zr + d) = masks[t](b, 0);

  const Var s = num::pairwise_gaussian_logpdf(zs_sample, zs_q.mean, zs_q.logvar);
  const Var r = num::pairwise_gaussian_logpdf(num::concat_cols(zr_samples), num::concat_cols(means),
                                              num::concat_cols(logvars), step_mask, step_mask);
  const Var per_row = num::logsumexp_rows(s + r) - num::logsumexp_rows(s) - num::logsumexp_rows(r);
  return num::add_scalar(num::mean(per_row), std::log(static_cast<double>(dataset_size) * static_cast<double>(m)));
}

SSLTerms ssl_objective(num::Tape& tape, const vae::VaeParams& params, Var table,
                       std::span<const data::Trajectory* const> batch, const CollectiveMap& collective,
                       std::size_t dataset_size, const SSLConfig& config, num::Rng& rng) {
  ++g_counts.objective;
  config.validate();
  if (batch.empty()) throw std::invalid_argument("ssl_objective: empty batch");
  std::vector<data::Trajectory> original;
  std::vector<std::size_t> users;
  for (const auto* t : batch) {
    original.push_back(*t);
    users.push_back(t->user);
  }
  const auto seq = vae::SequenceBatch::from(sequences_of(original));

  SSLTerms out;
  out.elbo = vae::elbo(tape, params, table, seq, &rng);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.recon = num::scale(out.elbo.recon, inv_b);
  out.kl_s = num::scale(out.elbo.kl_s, inv_b);
  out.kl_r = num::scale(out.elbo.kl_r, inv_b);
  out.mi_zs = tape.constant(Tensor::scalar(0.0));
  out.mi_zr = out.mi_zs;
  out.mws = out.mi_zs;
  const auto& post = out.elbo.post;

  if (config.beta > 0) {
    const auto plan = NegativePlan::from_users(users, config.negatives);
    std::vector<data::Trajectory> shuffled, replaced;
    for (const auto& t : original) shuffled.push_back(augment_shuffle(t, rng));
    for (const auto& t : original) replaced.push_back(augment_collective(t, collective, config.replace_ratio, rng));
    const auto post_shuffled = encode_means(tape, params, table, vae::SequenceBatch::from(sequences_of(shuffled)));
    const auto post_replaced = encode_means(tape, params, table, vae::SequenceBatch::from(sequences_of(replaced)));

    out.mi_zs = mi_zs(post.zs_sample, post.zs.mean, post_shuffled.zs.mean, plan, config.eta);
    require_finite(out.mi_zs, "mi_zs");

    const Var pooled_sample = pool_steps(post.zr_sample, seq.masks);
    const Var pooled_original = pool_steps(means_of(post.zr), seq.masks);
    const Var pooled_replaced = pool_steps(means_of(post_replaced.zr), seq.masks);
    out.mi_zr = mi_zr(pooled_sample, pooled_original, pooled_replaced, plan, config.eta);
    require_finite(out.mi_zr, "mi_zr");
  }
  if (config.gamma > 0) {
    out.mws = mws_mi(post.zs_sample, post.zs, post.zr_sample, post.zr, seq.masks, dataset_size);
    require_finite(out.mws, "mws");
  }

  const Var kl = num::scale(out.kl_s + out.kl_r, config.alpha);
  const Var mi = num::scale(out.mi_zs + out.mi_zr, config.beta);
  out.loss = num::neg(out.recon - kl + mi - num::scale(out.mws, config.gamma));
  return out;
}

}  // namespace ssdl::ssl
