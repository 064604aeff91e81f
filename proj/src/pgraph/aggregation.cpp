// SPDX-License-Identifier: Apache-2.0
#include "ssdl/pgraph/aggregation.hpp"

namespace ssdl::graph {

using num::Init;
using num::Var;

AggregationParams AggregationParams::create(num::ParameterSet& params, std::size_t num_pois,
                                            std::size_t num_categories, std::size_t dim, num::Rng& rng,
                                            const std::string& prefix) {
  params.add(prefix + ".W_l", num_pois, dim, Init::Glorot, rng);
  params.add(prefix + ".b_l", 1, dim, Init::Zeros, rng);
  params.add(prefix + ".b_a", 1, 2 * dim, Init::Glorot, rng);
  params.add(prefix + ".W_e", dim, dim, Init::Glorot, rng);
  params.add(prefix + ".W_t", data::kTimeBins, dim, Init::Glorot, rng);
  params.add(prefix + ".W_a", num_categories, dim, Init::Glorot, rng);
  return bind(params, prefix);
}

AggregationParams AggregationParams::bind(num::ParameterSet& params, const std::string& prefix) {
  AggregationParams p;
  p.W_l = &params.at(prefix + ".W_l");
  p.b_l = &params.at(prefix + ".b_l");
  p.b_a = &params.at(prefix + ".b_a");
  p.W_e = &params.at(prefix + ".W_e");
  p.W_t = &params.at(prefix + ".W_t");
  p.W_a = &params.at(prefix + ".W_a");
  return p;
}

HosaEdges HosaEdges::from(const SparseMatrix& h) {
  HosaEdges e;
  e.offsets.push_back(0);
  for (std::size_t i = 0; i < h.rows; ++i) {
    if (h.row_ptr[i] == h.row_ptr[i + 1]) {
      e.src.push_back(i);
      e.dst.push_back(i);
    }
    for (std::size_t k = h.row_ptr[i]; k < h.row_ptr[i + 1]; ++k) {
      e.src.push_back(i);
      e.dst.push_back(h.col_idx[k]);
    }
    e.offsets.push_back(e.src.size());
  }
  e.adj_rows = h.row_of_entries();
  e.adj_cols = h.col_idx;
  e.adj_values = num::Tensor::matrix(h.nnz(), 1, h.values);
  return e;
}

HosaOutput hosa(num::Tape& tape, const HosaEdges& e, const AggregationParams& p) {
  const Var W_l = tape.param(*p.W_l);
  const std::size_t L = W_l.rows(), d = W_l.cols();
  Var s = num::spmm(tape.constant(e.adj_values), e.adj_rows, e.adj_cols, W_l, L) + tape.param(*p.b_l);
  // b_a^T [s_i ; s_j] splits into a source half and a destination half.
  const Var b_a = tape.param(*p.b_a);
  const Var u = num::matmul_nt(s, num::slice_cols(b_a, 0, d));
  const Var v = num::matmul_nt(s, num::slice_cols(b_a, d, d));
  const Var scores = num::leaky_relu(num::gather_rows(u, e.src) + num::gather_rows(v, e.dst));
  const Var alpha = num::segment_softmax(scores, e.offsets);
  const Var agg = num::spmm(alpha, e.src, e.dst, s, L);
  return {num::sigmoid(num::matmul(agg, tape.param(*p.W_e))), alpha};
}

Var hesa(num::Tape& tape, const SparseMatrix& a, num::Parameter& w) {
  const Var W = tape.param(w);
  if (W.rows() != a.cols) throw num::DimensionError("hesa: matrix has " + std::to_string(a.cols) +
                                                    " columns but weight has " + std::to_string(W.rows()) + " rows");
  const Var values = tape.constant(num::Tensor::matrix(a.nnz(), 1, a.values));
  return num::tanh(num::spmm(values, a.row_of_entries(), a.col_idx, W, a.rows));
}

}  // namespace ssdl::graph
