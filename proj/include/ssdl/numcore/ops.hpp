// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ssdl/numcore/params.hpp"
#include "ssdl/numcore/tape.hpp"

namespace ssdl::num {

// Every op records onto the tape of its first Var argument. All operands are
// rank-2. Elementwise binary ops broadcast an extent of 1 against any extent.

inline constexpr double kExpClamp = 30.0;
inline constexpr double kLeakySlope = 0.01;

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var neg(Var a);

Var matmul(Var a, Var b);
/// a * b^T without materialising the transpose.
Var matmul_nt(Var a, Var b);
Var transpose(Var a);

Var sigmoid(Var a);
Var tanh(Var a);
Var leaky_relu(Var a, double slope = kLeakySlope);
/// exp of the input clamped to [-30, 30]; the gradient vanishes outside.
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var clamp(Var a, double lo, double hi);

Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
/// Row-wise log-sum-exp, m x 1.
Var logsumexp_rows(Var a);
/// Row-wise log-sum-exp over entries whose mask is nonzero.
Var masked_logsumexp_rows(Var a, const Tensor& mask);

Var sum(Var a);
Var mean(Var a);
/// Sum across columns: m x n -> m x 1.
Var row_sum(Var a);
/// Sum across rows: m x n -> 1 x n.
Var col_sum(Var a);

Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var concat_rows(std::initializer_list<Var> parts) {
  return concat_rows(std::span<const Var>(parts.begin(), parts.size()));
}
Var slice_cols(Var a, std::size_t start, std::size_t len);
Var slice_rows(Var a, std::size_t start, std::size_t len);
Var gather_rows(Var a, std::span<const std::size_t> index);
/// out[i] = a[i, cols[i]], m x 1.
Var pick(Var a, std::span<const std::size_t> cols);

/**
 * Sparse-dense product from coordinate lists:
 * out[rows[k]] += values[k] * x[cols[k]]. `values` is nnz x 1.
 */
Var spmm(Var values, std::span<const std::size_t> rows, std::span<const std::size_t> cols, Var x,
         std::size_t out_rows);
/// Softmax of an nnz x 1 column within segments [offsets[s], offsets[s+1]).
Var segment_softmax(Var scores, std::span<const std::size_t> offsets);

/// Row-wise unit normalisation. Throws std::domain_error on a zero row.
Var l2_normalize_rows(Var a);

/**
 * out[i][j] = sum_d w_ijd * log N(z[i,d]; mean[j,d], exp(logvar[j,d])) with
 * w_ijd = zmask[i,d] * qmask[j,d]. Empty masks mean all ones.
 */
Var pairwise_gaussian_logpdf(Var z, Var mean, Var logvar, const Tensor& zmask = {},
                             const Tensor& qmask = {});

/// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);

}  // namespace ssdl::num
