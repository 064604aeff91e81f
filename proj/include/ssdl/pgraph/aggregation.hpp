// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "ssdl/numcore/ops.hpp"
#include "ssdl/pgraph/graph.hpp"

namespace ssdl::graph {

/// Trainable weights of the graph aggregators, registered as "<prefix>.W_l" and so on.
struct AggregationParams {
  num::Parameter* W_l = nullptr;  // |L| x d
  num::Parameter* b_l = nullptr;  // 1 x d
  num::Parameter* b_a = nullptr;  // 1 x 2d
  num::Parameter* W_e = nullptr;  // d x d
  num::Parameter* W_t = nullptr;  // 48 x d
  num::Parameter* W_a = nullptr;  // |C| x d

  static AggregationParams create(num::ParameterSet& params, std::size_t num_pois, std::size_t num_categories,
                                  std::size_t dim, num::Rng& rng, const std::string& prefix = "graph");
  /// Looks up parameters previously created under `prefix`.
  static AggregationParams bind(num::ParameterSet& params, const std::string& prefix = "graph");
};

/// Attention edges over A_h: Omega(i) as (src = i, dst = j), grouped by i.
/// A POI with empty Omega(i) gets a single self edge, which reduces the
/// aggregation to sigmoid(s_i W_e).
struct HosaEdges {
  std::vector<std::size_t> src;
  std::vector<std::size_t> dst;
  std::vector<std::size_t> offsets;
  /// A_h as coordinate lists for s = A_h W_l + b_l.
  std::vector<std::size_t> adj_rows;
  std::vector<std::size_t> adj_cols;
  num::Tensor adj_values;  // nnz x 1

  static HosaEdges from(const SparseMatrix& homogeneous);
};

struct HosaOutput {
  num::Var embeddings;  // |L| x d
  num::Var attention;   // one weight per edge, aligned with HosaEdges::src
};

HosaOutput hosa(num::Tape& tape, const HosaEdges& edges, const AggregationParams& p);
/// Row-wise tanh(A W) for a time-aspect or activity-aspect matrix.
num::Var hesa(num::Tape& tape, const SparseMatrix& a, num::Parameter& w);

}  // namespace ssdl::graph
