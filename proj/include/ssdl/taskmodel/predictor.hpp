// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssdl/numcore/ops.hpp"

namespace ssdl::task {

inline constexpr std::size_t kHistoryCap = 128;

struct TaskDims {
  std::size_t num_pois = 0;
  std::size_t embed = 256;
  std::size_t z_s = 256;
  std::size_t z_r = 32;
  std::size_t attention = 300;
  std::size_t history_cap = kHistoryCap;

  std::size_t fused() const { return z_r + z_s + attention; }
};

/// Sinusoidal table: entry (pos, 2i) = sin(pos / 10000^(2i/d)), (pos, 2i+1) the matching cosine.
num::Tensor positional_encoding(std::size_t length, std::size_t dim);
/// Adds the positional table to a K x d input.
num::Var position_encode(num::Var embedded);

/// Single-head self-attention and the output layer over [z^r_n, z^s, H_K].
struct TaskParams {
  TaskDims dims;
  num::Parameter* W_q = nullptr;  // d x h
  num::Parameter* W_k = nullptr;
  num::Parameter* W_v = nullptr;
  num::Parameter* W_t = nullptr;  // (z_r + z_s + h) x |L|
  num::Parameter* b_t = nullptr;

  static TaskParams create(num::ParameterSet& params, const TaskDims& dims, num::Rng& rng,
                           const std::string& prefix = "task");
  static TaskParams bind(num::ParameterSet& params, const TaskDims& dims, const std::string& prefix = "task");
};

struct AttentionOutput {
  num::Var states;   // K x h
  num::Var weights;  // K x K, rows sum to 1
};

/// Full scaled dot-product self-attention over a position-encoded K x d history.
AttentionOutput self_attention(num::Tape& tape, const TaskParams& p, num::Var encoded);

/**
 * H_K for each history, computed from the last query only. Histories longer
 * than the cap keep their most recent entries. An empty history yields a zero
 * row and bumps empty_history_count().
 */
num::Var history_encode(num::Tape& tape, const TaskParams& p, num::Var table,
                        std::span<const std::vector<std::size_t>> histories);

std::uint64_t empty_history_count();
void reset_empty_history_count();

/// Logits [z^r_n, z^s, H_K] W_t + b_t. Dropout applies only when rng is non-null.
num::Var predict_logits(num::Tape& tape, const TaskParams& p, num::Var zr_last, num::Var zs, num::Var history,
                        double dropout, num::Rng* rng);

/// Mean cross-entropy -log softmax(logits)[target] over the batch.
num::Var task_loss(num::Var logits, std::span<const std::size_t> targets);

/// Indices of the k largest scores, best first; ties go to the lower index.
std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k);

}  // namespace ssdl::task
