// SPDX-License-Identifier: Apache-2.0
#include "ssdl/taskmodel/predictor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ssdl::task {

using num::Tensor;
using num::Var;

namespace {
std::atomic<std::uint64_t> g_empty_histories{0};
}

Tensor positional_encoding(std::size_t length, std::size_t dim) {
  Tensor pe = Tensor::zeros(length, dim);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < dim; i += 2) {
      const double angle = static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(i) / static_cast<double>(dim));
      pe(pos, i) = std::sin(angle);
      if (i + 1 < dim) pe(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}

Var position_encode(Var embedded) {
  return embedded + embedded.tape->constant(positional_encoding(embedded.rows(), embedded.cols()));
}

TaskParams TaskParams::create(num::ParameterSet& params, const TaskDims& dims, num::Rng& rng,
                              const std::string& prefix) {
  params.add(prefix + ".W_q", dims.embed, dims.attention, num::Init::Glorot, rng);
  params.add(prefix + ".W_k", dims.embed, dims.attention, num::Init::Glorot, rng);
  params.add(prefix + ".W_v", dims.embed, dims.attention, num::Init::Glorot, rng);
  params.add(prefix + ".W_t", dims.fused(), dims.num_pois, num::Init::Glorot, rng);
  params.add(prefix + ".b_t", 1, dims.num_pois, num::Init::Zeros, rng);
  return bind(params, dims, prefix);
}

TaskParams TaskParams::bind(num::ParameterSet& params, const TaskDims& dims, const std::string& prefix) {
  TaskParams p;
  p.dims = dims;
  p.W_q = &params.at(prefix + ".W_q");
  p.W_k = &params.at(prefix + ".W_k");
  p.W_v = &params.at(prefix + ".W_v");
  p.W_t = &params.at(prefix + ".W_t");
  p.b_t = &params.at(prefix + ".b_t");
  return p;
}

AttentionOutput self_attention(num::Tape& tape, const TaskParams& p, Var encoded) {
  const Var q = num::matmul(encoded, tape.param(*p.W_q));
  const Var k = num::matmul(encoded, tape.param(*p.W_k));
  const Var v = num::matmul(encoded, tape.param(*p.W_v));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.dims.attention));
  const Var weights = num::softmax_rows(num::scale(num::matmul_nt(q, k), inv_sqrt));
  return {num::matmul(weights, v), weights};
}

Var history_encode(num::Tape& tape, const TaskParams& p, Var table, std::span<const std::vector<std::size_t>> histories) {
  if (histories.empty()) throw std::invalid_argument("history_encode: no histories");
  const std::size_t cap = p.dims.history_cap;
  std::vector<std::size_t> flat, offsets, lengths, last;
  std::size_t longest = 0;
  for (const auto& h : histories) {
    const std::size_t len = std::min(h.size(), cap);
    offsets.push_back(flat.size());
    lengths.push_back(len);
    flat.insert(flat.end(), h.end() - static_cast<std::ptrdiff_t>(len), h.end());
    if (len > 0) last.push_back(flat.size() - 1);
    longest = std::max(longest, len);
  }
  const Var zero = tape.constant(Tensor::zeros(1, p.dims.attention));
  if (flat.empty()) {
    g_empty_histories += histories.size();
    return histories.size() == 1 ? zero : num::concat_rows(std::vector<Var>(histories.size(), zero));
  }

  const Tensor pe_table = positional_encoding(longest, table.cols());
  Tensor pe = Tensor::zeros(flat.size(), table.cols());
  for (std::size_t b = 0; b < histories.size(); ++b)
    for (std::size_t i = 0; i < lengths[b]; ++i)
      for (std::size_t c = 0; c < table.cols(); ++c) pe(offsets[b] + i, c) = pe_table(i, c);
  const Var x = num::gather_rows(table, flat) + tape.constant(std::move(pe));
  const Var keys = num::matmul(x, tape.param(*p.W_k));
  const Var values = num::matmul(x, tape.param(*p.W_v));
  const Var queries = num::matmul(num::gather_rows(x, last), tape.param(*p.W_q));
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(p.dims.attention));

  std::vector<Var> rows;
  std::size_t q = 0;
  for (std::size_t b = 0; b < histories.size(); ++b) {
    if (lengths[b] == 0) {
      ++g_empty_histories;
      rows.push_back(zero);
      continue;
    }
    const Var k = num::slice_rows(keys, offsets[b], lengths[b]);
    const Var v = num::slice_rows(values, offsets[b], lengths[b]);
    const Var scores = num::scale(num::matmul_nt(num::slice_rows(queries, q++, 1), k), inv_sqrt);
    rows.push_back(num::matmul(num::softmax_rows(scores), v));
  }
  return rows.size() == 1 ? rows.front() : num::concat_rows(rows);
}

std::uint64_t empty_history_count() { return g_empty_histories.load(); }
void reset_empty_history_count() { g_empty_histories = 0; }

Var predict_logits(num::Tape& tape, const TaskParams& p, Var zr_last, Var zs, Var history, double dropout,
                   num::Rng* rng) {
  Var fused = num::concat_cols({zr_last, zs, history});
  if (fused.cols() != p.dims.fused()) throw num::DimensionError("predict_logits: fused width mismatch");
  if (rng && dropout > 0) fused = num::dropout(fused, dropout, *rng);
  return num::matmul(fused, tape.param(*p.W_t)) + tape.param(*p.b_t);
}

Var task_loss(Var logits, std::span<const std::size_t> targets) {
  if (targets.size() != logits.rows()) throw num::DimensionError("task_loss: one target per row expected");
  for (std::size_t t : targets)
    if (t >= logits.cols()) throw std::out_of_range("task_loss: target " + std::to_string(t) + " outside vocabulary");
  return num::neg(num::mean(num::pick(num::log_softmax_rows(logits), targets)));
}

std::vector<std::size_t> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(k);
  return idx;
}

}  // namespace ssdl::task
