// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "ssdl/pipeline/train.hpp"

namespace ssdl::pipeline {

struct ProbeReport {
  double acc_zs = 0.0;
  double acc_zr = 0.0;
  double silhouette_zs = 0.0;
  double silhouette_zr = 0.0;
  double chance = 0.0;  // share of the most frequent label
  std::size_t samples = 0;
  std::size_t classes = 0;

  std::string to_json() const;
};

/**
 * K-fold cross-validated accuracy of a one-vs-all ridge classifier on
 * standardised features. Fold membership comes from a seeded shuffle.
 */
double ridge_probe_accuracy(const num::Tensor& features, std::span<const std::size_t> labels, std::size_t folds = 5,
                            double lambda = 1.0, std::uint64_t seed = 0);

/// Mean silhouette under Euclidean distance on standardised features. Singleton clusters score 0.
double silhouette(const num::Tensor& features, std::span<const std::size_t> labels);

ProbeReport probe_embeddings(const Embeddings& e, std::span<const std::size_t> labels, std::uint64_t seed);

/// Probes user identity from the posterior means of every trajectory in the corpus.
ProbeReport run_probe(const Model& model, const data::Corpus& corpus, std::uint64_t seed);

}  // namespace ssdl::pipeline
