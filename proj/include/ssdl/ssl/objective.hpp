// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "ssdl/dataio/corpus.hpp"
#include "ssdl/numcore/ops.hpp"
#include "ssdl/seqvae/vae.hpp"
#include "ssdl/ssl/augment.hpp"

namespace ssdl::ssl {

/// The batch holds a single user, so no negatives exist.
class NoNegatives : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SSLConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.1;
  double eta = 0.5;
  /// Upper bound on negatives per anchor; the batch supplies at most one per other user.
  std::size_t negatives = std::numeric_limits<std::size_t>::max();
  double replace_ratio = 0.3;
  double collective_radius_m = 300.0;

  void validate() const;
};

/**
 * Which in-batch rows serve as negatives for each anchor. Every other user
 * contributes its lowest-index trajectory; the mask is B x U over those
 * representatives.
 */
struct NegativePlan {
  std::vector<std::size_t> representatives;
  num::Tensor mask;

  static NegativePlan from_users(std::span<const std::size_t> users, std::size_t max_negatives);
  std::size_t negatives_of(std::size_t anchor) const;
};

/// Single-anchor contrastive score log[psi(a,p) / (psi(a,p) + sum_j psi(a,n_j))].
num::Var nce(num::Var anchor, num::Var positive, num::Var negatives, double eta);

/**
 * Batched form: anchors and positives are B x k, candidates U x k and mask B x U.
 * Returns B x 1 scores.
 */
num::Var nce_batch(num::Var anchors, num::Var positives, num::Var candidates, const num::Tensor& mask, double eta);

/// Mean over valid steps of per-step B x k values.
num::Var pool_steps(std::span<const num::Var> steps, std::span<const num::Tensor> masks);

/// One half-term: batch mean of NCE scores with negatives drawn from `pool` rows.
num::Var contrastive_term(num::Var anchors, num::Var positives, num::Var pool, const NegativePlan& plan,
                          double eta);

/// 1/2 (C + C#) for the static factor.
num::Var mi_zs(num::Var zs_sample, num::Var mean_original, num::Var mean_shuffled, const NegativePlan& plan,
               double eta);
/// 1/2 (C + C*) for the pooled dynamic factor.
num::Var mi_zr(num::Var pooled_sample, num::Var pooled_original, num::Var pooled_collective,
               const NegativePlan& plan, double eta);

/**
 * Minibatch-weighted-sampling estimate of MI(z^s; z^r) over a batch of M
 * trajectories drawn from a dataset of N. z^r densities are products over
 * the steps both trajectories share.
 */
num::Var mws_mi(num::Var zs_sample, const vae::Gaussian& zs_q, std::span<const num::Var> zr_samples,
                std::span<const vae::Gaussian> zr_q, std::span<const num::Tensor> masks, std::size_t dataset_size);

struct SSLTerms {
  num::Var loss;
  // Per-trajectory averages.
  num::Var recon;
  num::Var kl_s;
  num::Var kl_r;
  num::Var mi_zs;
  num::Var mi_zr;
  num::Var mws;
  vae::ElboTerms elbo;
};

/**
 * loss = -[recon - alpha (KL_s + KL_r) + beta (MI_zs + MI_zr) - gamma MWS],
 * with every term averaged over the batch. MI terms are skipped when beta is
 * zero and MWS when gamma is zero.
 */
SSLTerms ssl_objective(num::Tape& tape, const vae::VaeParams& params, num::Var table,
                       std::span<const data::Trajectory* const> batch, const CollectiveMap& collective,
                       std::size_t dataset_size, const SSLConfig& config, num::Rng& rng);

}  // namespace ssdl::ssl
