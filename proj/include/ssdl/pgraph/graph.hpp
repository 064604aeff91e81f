// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ssdl/dataio/corpus.hpp"
#include "ssdl/numcore/tensor.hpp"

namespace ssdl::graph {

class GraphInvariantError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compressed sparse rows; columns are sorted within a row and entries are nonzero.
struct SparseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> row_ptr{0};
  std::vector<std::size_t> col_idx;
  std::vector<double> values;

  struct Triplet {
    std::size_t row, col;
    double value;
  };
  /// Duplicates are summed; zeros are dropped.
  static SparseMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t nnz() const { return values.size(); }
  double at(std::size_t r, std::size_t c) const;
  double row_sum(std::size_t r) const;
  num::Tensor dense() const;
  /// Row index of every stored entry, aligned with col_idx.
  std::vector<std::size_t> row_of_entries() const;

  bool operator==(const SparseMatrix& other) const = default;
};

/// Great-circle distance in km on a sphere of radius 6371.0088 km.
double haversine_km(double lat1, double lon1, double lat2, double lon2);
inline constexpr double kEarthRadiusKm = 6371.0088;

struct PGraph {
  SparseMatrix consecutive;    // A_c, |L| x |L|
  SparseMatrix geographical;   // A_g, |L| x |L|
  SparseMatrix time;           // A_t, |L| x 48
  SparseMatrix activity;       // A_a, |L| x |C|
  SparseMatrix homogeneous;    // A_h, |L| x |L|
  double delta_g_km = 3.0;

  std::size_t num_pois() const { return consecutive.rows; }
  /// Omega(i): columns of row i of A_h.
  std::span<const std::size_t> neighbors(std::size_t i) const;
};

using TrajectoryView = std::vector<const data::Trajectory*>;

/// A_c[i][j] = (successive pairs i->j within sessions) / (appearances of i).
SparseMatrix build_consecutive(const TrajectoryView& trajectories, std::size_t num_pois);
/// A_g[i][j] = 1 iff i != j and haversine(i, j) <= delta_g_km.
SparseMatrix build_geographical(const std::vector<data::Poi>& pois, double delta_g_km = 3.0);
/// A_t[i][b] = visits of i in bin b / visits of i.
SparseMatrix build_time(const TrajectoryView& trajectories, std::size_t num_pois);
SparseMatrix build_activity(const std::vector<data::Poi>& pois, std::size_t num_categories);
/// Keeps A_c where nonzero, otherwise A_g.
SparseMatrix merge_homogeneous(const SparseMatrix& consecutive, const SparseMatrix& geographical);

/// Builds every matrix from the training split only and checks invariants.
PGraph build_pgraph(const data::Corpus& corpus, double delta_g_km = 3.0);
PGraph build_pgraph(const TrajectoryView& trajectories, const data::Corpus& corpus, double delta_g_km = 3.0);

/// Throws GraphInvariantError naming the first violated invariant.
void check_invariants(const PGraph& g, double tol = 1e-9);

/// Writes one `row\tcol\tvalue` TSV per matrix plus graph.json.
void save_pgraph(const PGraph& g, const std::filesystem::path& dir, const std::string& corpus_hash);
/// Loads and re-checks invariants. If `expected_hash` is nonempty it must match the manifest.
PGraph load_pgraph(const std::filesystem::path& dir, const std::string& expected_hash = "");

}  // namespace ssdl::graph
