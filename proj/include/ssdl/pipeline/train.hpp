// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssdl/dataio/corpus.hpp"
#include "ssdl/pipeline/model.hpp"
#include "ssdl/ssl/counters.hpp"
#include "ssdl/taskmodel/metrics.hpp"

namespace ssdl::pipeline {

/// A loss or gradient went non-finite. Parameters were restored to the last completed epoch.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& phase, std::size_t epoch, const std::string& what)
      : std::runtime_error(phase + " diverged in epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

struct EpochLog {
  std::string phase;
  std::size_t epoch = 0;
  // Per-trajectory averages over the epoch.
  double recon = 0.0;
  double kl_s = 0.0;
  double kl_r = 0.0;
  double mi_zs = 0.0;
  double mi_zr = 0.0;
  double mws = 0.0;
  double total = 0.0;
  double seconds = 0.0;
  std::uint64_t ssl_calls = 0;  // self-supervised calls made during the epoch

  std::string to_json() const;
};

struct TrainOptions {
  std::filesystem::path log;         // JSONL, appended per epoch; empty disables
  std::filesystem::path checkpoint;  // saved after every epoch; empty disables
  std::function<void(const EpochLog&)> on_epoch;
};

/// One next-POI instance: the session minus its last check-in predicts that check-in.
struct Instance {
  std::size_t trajectory = 0;
  std::size_t user = 0;
  std::size_t session = 0;
  std::vector<std::size_t> prefix;
  std::size_t target = 0;
  std::vector<std::size_t> history;
};

/// Instances for every session of `split` with at least two check-ins.
std::vector<Instance> make_instances(const data::Corpus& corpus, data::Split split, std::size_t history_cap);

/**
 * Shuffles `items` with `rng` and cuts them into batches. When `mixed_users`
 * is set, a batch holding one user is merged into its neighbour so every
 * batch has in-batch negatives.
 */
std::vector<std::vector<std::size_t>> make_batches(std::span<const std::size_t> items,
                                                   std::span<const std::size_t> users, std::size_t batch_size,
                                                   bool mixed_users, num::Rng& rng);

/// Phase 1: the self-supervised objective. Continues from state.epoch up to config.pretrain_epochs.
std::vector<EpochLog> pretrain(Model& model, const data::Corpus& corpus, TrainingState& state,
                               const TrainOptions& options = {});

/// Phase 2: cross-entropy on next-POI instances of the training split.
std::vector<EpochLog> train_task(Model& model, const data::Corpus& corpus, TrainingState& state,
                                 const TrainOptions& options = {});

/// Next-POI logits for a batch of instances. A null rng means evaluation mode (posterior means, no dropout).
num::Var task_logits(num::Tape& tape, const Model& model, std::span<const Instance* const> batch, num::Rng* rng);

task::EvalReport evaluate(const Model& model, const data::Corpus& corpus, data::Split split);

/// Posterior means of every listed trajectory: mu(z^s) and mu(z^r) at its last step.
struct Embeddings {
  std::vector<std::size_t> trajectories;
  num::Tensor zs;
  num::Tensor zr;
};
Embeddings embed_trajectories(const Model& model, const data::Corpus& corpus, std::span<const std::size_t> indices);
void write_embeddings(const Embeddings& e, const data::Corpus& corpus, const std::filesystem::path& path);

}  // namespace ssdl::pipeline
