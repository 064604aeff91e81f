// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "ssdl/numcore/adam.hpp"
#include "ssdl/pgraph/aggregation.hpp"
#include "ssdl/pipeline/config.hpp"
#include "ssdl/seqvae/vae.hpp"
#include "ssdl/taskmodel/predictor.hpp"

namespace ssdl::pipeline {

/// All trainable state plus the fixed graph it aggregates over.
struct Model {
  RunConfig config;
  std::string corpus_hash;
  graph::PGraph graph;
  graph::HosaEdges edges;
  num::ParameterSet params;
  graph::AggregationParams aggregation;  // bound only when the variant uses the graph
  num::Parameter* free_table = nullptr;  // |L| x 3d otherwise
  vae::VaeParams vae;
  task::TaskParams task;

  std::size_t num_pois() const { return graph.num_pois(); }
  vae::VaeDims vae_dims() const;
  task::TaskDims task_dims() const;

  /// Contextual POI table C (|L| x d), recomputed from the graph on every call.
  num::Var table(num::Tape& tape) const;

  static std::unique_ptr<Model> create(const RunConfig& config, graph::PGraph graph, std::string corpus_hash,
                                       num::Rng& rng);
};

struct TrainingState {
  std::string phase = "init";
  std::size_t epoch = 0;  // completed epochs of `phase`
  num::AdamState adam;
};

struct Checkpoint {
  std::unique_ptr<Model> model;
  TrainingState state;
};

/// Writes params.bin (raw little-endian doubles), manifest.json and the graph to `dir`.
void save_checkpoint(const Model& model, const TrainingState& state, const std::filesystem::path& dir);
/// Throws std::runtime_error on a missing file, a size mismatch or (when given) a corpus hash mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& dir, const std::string& expected_corpus_hash = "");

}  // namespace ssdl::pipeline
