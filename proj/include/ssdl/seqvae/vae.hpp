// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssdl/numcore/ops.hpp"
#include "ssdl/seqvae/gru.hpp"

namespace ssdl::vae {

/// A loss component evaluated to NaN or infinity.
class NonFiniteValue : public std::runtime_error {
 public:
  explicit NonFiniteValue(const std::string& component)
      : std::runtime_error("non-finite value in " + component), component_(component) {}
  const std::string& component() const noexcept { return component_; }

 private:
  std::string component_;
};

inline constexpr double kLogvarMin = -8.0;
inline constexpr double kLogvarMax = 8.0;

struct VaeDims {
  std::size_t num_pois = 0;
  std::size_t embed = 256;
  std::size_t z_s = 256;
  std::size_t z_r = 32;
  std::size_t prior_hidden = 64;
};

/// Diagonal Gaussian; logvar is already clamped.
struct Gaussian {
  num::Var mean;
  num::Var logvar;
};

/// Linear mean and log-variance heads.
struct GaussianHead {
  num::Parameter* W_mu = nullptr;
  num::Parameter* b_mu = nullptr;
  num::Parameter* W_lv = nullptr;
  num::Parameter* b_lv = nullptr;

  static GaussianHead create(num::ParameterSet& params, const std::string& prefix, std::size_t input,
                             std::size_t output, num::Rng& rng);
  static GaussianHead bind(num::ParameterSet& params, const std::string& prefix);
  Gaussian apply(num::Tape& tape, num::Var x) const;
};

struct VaeParams {
  VaeDims dims;
  num::Parameter* W_f = nullptr;  // 3d x d
  num::Parameter* b_f = nullptr;  // 1 x d
  GruParams encoder;
  GruParams posterior;
  GaussianHead zs_head;  // reads the final posterior state
  GaussianHead zr_head;  // reads [g_t, z^r_{t-1}]
  GruParams prior;
  GaussianHead prior_head;
  GruParams decoder;
  num::Parameter* W_o = nullptr;  // d x |L|
  num::Parameter* b_o = nullptr;  // 1 x |L|

  static VaeParams create(num::ParameterSet& params, const VaeDims& dims, num::Rng& rng,
                          const std::string& prefix = "vae");
  static VaeParams bind(num::ParameterSet& params, const VaeDims& dims, const std::string& prefix = "vae");
};

/// Time-major padded batch. Padding positions hold POI 0 and mask 0.
struct SequenceBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::vector<std::size_t> lengths;
  std::vector<std::vector<std::size_t>> pois;  // [t][b]
  std::vector<num::Tensor> masks;              // [t], B x 1

  static SequenceBatch from(const std::vector<std::vector<std::size_t>>& sequences);
  /// POIs in (t, b) order, matching stacked (T*B) x k tensors.
  std::vector<std::size_t> flat_pois() const;
  num::Tensor flat_mask() const;
};

/// Contextual table C = [E_l, E_t, E_a] W_f + b_f for all POIs at once.
num::Var contextual_table(num::Tape& tape, const VaeParams& p, num::Var features);
num::Var contextual_table(num::Tape& tape, const VaeParams& p, num::Var E_l, num::Var E_t, num::Var E_a);
/// Contextual embedding of a single POI (1 x d). Throws std::out_of_range naming a bad index.
num::Var contextual_embed(num::Tape& tape, const VaeParams& p, num::Var E_l, num::Var E_t, num::Var E_a,
                          std::size_t poi);
/// Rows of `table` for every (t, b) position, stacked time-major.
num::Var embed_batch(num::Tape& tape, num::Var table, const SequenceBatch& batch);

/// Encoder states h_1..h_T from stacked contextual embeddings.
std::vector<num::Var> encode_sequence(num::Tape& tape, const VaeParams& p, num::Var stacked,
                                      const SequenceBatch& batch);

/// z = mean + exp(logvar / 2) * eps.
num::Var reparameterize(const Gaussian& g, const num::Tensor& eps);
/// Standard normal noise shaped like `like`; zeros when rng is null.
num::Tensor standard_normal(std::size_t rows, std::size_t cols, num::Rng* rng);

struct PosteriorFactors {
  Gaussian zs;
  num::Var zs_sample;
  std::vector<Gaussian> zr;          // per step, B x z_r
  std::vector<num::Var> zr_sample;   // per step
  std::vector<num::Var> states;      // posterior GRU states
};

/**
 * Posterior GRU over encoder states. With a null rng every sample is the
 * mean, and the autoregressive z^r chain feeds means forward.
 */
PosteriorFactors posterior(num::Tape& tape, const VaeParams& p, std::span<const num::Var> encoded,
                           std::span<const num::Tensor> masks, num::Rng* rng);

/// Advances the prior GRU on the previous z^r and returns p(z^r_t | z^r_<t).
Gaussian prior_step(num::Tape& tape, const VaeParams& p, num::Var z_prev, num::Var& state);
/// Prior chain driven by the posterior samples, stacked time-major ((T*B) x z_r).
Gaussian prior_chain(num::Tape& tape, const VaeParams& p, std::span<const num::Var> zr_samples,
                     std::span<const num::Tensor> masks);

/// Decoder logits for every (t, b) position, stacked time-major ((T*B) x |L|).
num::Var decode(num::Tape& tape, const VaeParams& p, num::Var zs, std::span<const num::Var> zr,
                std::span<const num::Tensor> masks);
/// Sum over valid positions of log p(l_t | z_t).
num::Var reconstruction(num::Var logits, const SequenceBatch& batch);

/// Closed-form KL(q || p) of diagonal Gaussians, summed over dimensions: one value per row.
num::Var kl_gaussian(const Gaussian& q, const Gaussian& p);
/// KL(q || N(0, I)) per row.
num::Var kl_standard_normal(const Gaussian& q);

num::Var stack_rows(std::span<const num::Var> parts);
Gaussian stack(std::span<const Gaussian> parts);

struct ElboTerms {
  num::Var recon;  // summed over the batch
  num::Var kl_s;
  num::Var kl_r;
  num::Var elbo;   // recon - kl_s - kl_r
  PosteriorFactors post;
  Gaussian prior;  // stacked
};

/// Single-sample ELBO of a batch given the contextual table. Throws NonFiniteValue naming the bad term.
ElboTerms elbo(num::Tape& tape, const VaeParams& p, num::Var table, const SequenceBatch& batch, num::Rng* rng);

}  // namespace ssdl::vae
