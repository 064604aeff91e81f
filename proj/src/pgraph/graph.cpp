// SPDX-License-Identifier: Apache-2.0
#include "ssdl/pgraph/graph.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace ssdl::graph {

SparseMatrix SparseMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
  std::sort(triplets.begin(), triplets.end(),
            [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_ptr.assign(rows + 1, 0);
  for (std::size_t k = 0; k < triplets.size();) {
    const Triplet& t = triplets[k];
    if (t.row >= rows || t.col >= cols) throw std::out_of_range("sparse triplet outside matrix shape");
    double v = 0.0;
    std::size_t e = k;
    for (; e < triplets.size() && triplets[e].row == t.row && triplets[e].col == t.col; ++e) v += triplets[e].value;
    if (v != 0.0) {
      m.col_idx.push_back(t.col);
      m.values.push_back(v);
      ++m.row_ptr[t.row + 1];
    }
    k = e;
  }
  for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
  return m;
}

double SparseMatrix::at(std::size_t r, std::size_t c) const {
  const auto b = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
  const auto e = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
  const auto it = std::lower_bound(b, e, c);
  return (it != e && *it == c) ? values[static_cast<std::size_t>(it - col_idx.begin())] : 0.0;
}

double SparseMatrix::row_sum(std::size_t r) const {
  double s = 0.0;
  for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += values[k];
  return s;
}

num::Tensor SparseMatrix::dense() const {
  num::Tensor t = num::Tensor::zeros(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) t(r, col_idx[k]) = values[k];
  return t;
}

std::vector<std::size_t> SparseMatrix::row_of_entries() const {
  std::vector<std::size_t> out(nnz());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) out[k] = r;
  return out;
}

double haversine_km(double lat1, double lon1, double lat2, double lon2) {
  constexpr double rad = M_PI / 180.0;
  const double dlat = (lat2 - lat1) * rad, dlon = (lon2 - lon1) * rad;
  const double a = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(lat1 * rad) * std::cos(lat2 * rad) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(a)));
}

std::span<const std::size_t> PGraph::neighbors(std::size_t i) const {
  const auto& h = homogeneous;
  return std::span<const std::size_t>(h.col_idx).subspan(h.row_ptr[i], h.row_ptr[i + 1] - h.row_ptr[i]);
}

SparseMatrix build_consecutive(const TrajectoryView& trajectories, std::size_t num_pois) {
  std::vector<double> appearances(num_pois, 0.0);
  std::vector<SparseMatrix::Triplet> pairs;
  for (const data::Trajectory* t : trajectories) {
    for (std::size_t k = 0; k < t->pois.size(); ++k) {
      appearances.at(t->pois[k]) += 1.0;
      if (k + 1 < t->pois.size()) pairs.push_back({t->pois[k], t->pois[k + 1], 1.0});
    }
  }
  SparseMatrix m = SparseMatrix::from_triplets(num_pois, num_pois, std::move(pairs));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) m.values[k] /= appearances[r];
  return m;
}

SparseMatrix build_geographical(const std::vector<data::Poi>& pois, double delta_g_km) {
  std::vector<SparseMatrix::Triplet> edges;
  for (std::size_t i = 0; i < pois.size(); ++i) {
    for (std::size_t j = i + 1; j < pois.size(); ++j) {
      if (haversine_km(pois[i].latitude, pois[i].longitude, pois[j].latitude, pois[j].longitude) <= delta_g_km) {
        edges.push_back({i, j, 1.0});
        edges.push_back({j, i, 1.0});
      }
    }
  }
  return SparseMatrix::from_triplets(pois.size(), pois.size(), std::move(edges));
}

SparseMatrix build_time(const TrajectoryView& trajectories, std::size_t num_pois) {
  std::vector<double> visits(num_pois, 0.0);
  std::vector<SparseMatrix::Triplet> hits;
  for (const data::Trajectory* t : trajectories) {
    for (std::size_t k = 0; k < t->pois.size(); ++k) {
      visits.at(t->pois[k]) += 1.0;
      hits.push_back({t->pois[k], static_cast<std::size_t>(t->bins[k]), 1.0});
    }
  }
  SparseMatrix m = SparseMatrix::from_triplets(num_pois, data::kTimeBins, std::move(hits));
  for (std::size_t r = 0; r < m.rows; ++r)
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) m.values[k] /= visits[r];
  return m;
}

SparseMatrix build_activity(const std::vector<data::Poi>& pois, std::size_t num_categories) {
  std::vector<SparseMatrix::Triplet> edges;
  for (std::size_t i = 0; i < pois.size(); ++i) edges.push_back({i, pois[i].category, 1.0});
  return SparseMatrix::from_triplets(pois.size(), num_categories, std::move(edges));
}

SparseMatrix merge_homogeneous(const SparseMatrix& c, const SparseMatrix& g) {
  if (c.rows != g.rows || c.cols != g.cols) throw std::invalid_argument("merge_homogeneous: shape mismatch");
  std::vector<SparseMatrix::Triplet> out;
  for (std::size_t r = 0; r < g.rows; ++r) {
    for (std::size_t k = g.row_ptr[r]; k < g.row_ptr[r + 1]; ++k)
      if (c.at(r, g.col_idx[k]) == 0.0) out.push_back({r, g.col_idx[k], g.values[k]});
    for (std::size_t k = c.row_ptr[r]; k < c.row_ptr[r + 1]; ++k) out.push_back({r, c.col_idx[k], c.values[k]});
  }
  return SparseMatrix::from_triplets(c.rows, c.cols, std::move(out));
}

PGraph build_pgraph(const TrajectoryView& trajectories, const data::Corpus& corpus, double delta_g_km) {
  PGraph g;
  g.delta_g_km = delta_g_km;
  g.consecutive = build_consecutive(trajectories, corpus.num_pois());
  g.geographical = build_geographical(corpus.pois, delta_g_km);
  g.time = build_time(trajectories, corpus.num_pois());
  g.activity = build_activity(corpus.pois, corpus.num_categories());
  g.homogeneous = merge_homogeneous(g.consecutive, g.geographical);
  check_invariants(g);
  return g;
}

PGraph build_pgraph(const data::Corpus& corpus, double delta_g_km) {
  TrajectoryView train;
  for (const auto& t : corpus.trajectories)
    if (t.split == data::Split::Train) train.push_back(&t);
  return build_pgraph(train, corpus, delta_g_km);
}

void check_invariants(const PGraph& g, double tol) {
  auto fail = [](const std::string& what) { throw GraphInvariantError("graph invariant violated: " + what); };
  const std::size_t L = g.num_pois();
  const struct {
    const char* name;
    const SparseMatrix& m;
    std::size_t cols;
  } all[] = {{"A_c", g.consecutive, L}, {"A_g", g.geographical, L}, {"A_t", g.time, data::kTimeBins},
             {"A_a", g.activity, g.activity.cols}, {"A_h", g.homogeneous, L}};
  for (const auto& [name, m, cols] : all) {
    if (m.rows != L || m.cols != cols) fail(std::string(name) + " has wrong shape");
    if (m.row_ptr.size() != L + 1 || m.col_idx.size() != m.values.size()) fail(std::string(name) + " is corrupt");
    for (double v : m.values)
      if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " entry outside [0, 1]");
  }
  for (std::size_t i = 0; i < L; ++i) {
    const std::string row = " row " + std::to_string(i);
    if (g.consecutive.row_sum(i) > 1.0 + tol) fail("A_c" + row + " sums above 1");
    const double ts = g.time.row_sum(i);
    if (g.time.row_ptr[i + 1] > g.time.row_ptr[i] && std::abs(ts - 1.0) > tol) fail("A_t" + row + " does not sum to 1");
    if (g.activity.row_ptr[i + 1] - g.activity.row_ptr[i] != 1 || g.activity.values[g.activity.row_ptr[i]] != 1.0)
      fail("A_a" + row + " is not one-hot");
    if (g.geographical.at(i, i) != 0.0) fail("A_g has a self-loop at" + row);
    for (std::size_t k = g.geographical.row_ptr[i]; k < g.geographical.row_ptr[i + 1]; ++k) {
      const std::size_t j = g.geographical.col_idx[k];
      if (g.geographical.values[k] != 1.0) fail("A_g" + row + " is not binary");
      if (g.geographical.at(j, i) != g.geographical.values[k]) fail("A_g is not symmetric at" + row);
    }
  }
  // Merge rule, entrywise over the union of supports.
  for (std::size_t i = 0; i < L; ++i) {
    auto check = [&](std::size_t j) {
      const double c = g.consecutive.at(i, j);
      const double expect = c != 0.0 ? c : g.geographical.at(i, j);
      if (g.homogeneous.at(i, j) != expect) fail("A_h merge rule fails at (" + std::to_string(i) + "," + std::to_string(j) + ")");
    };
    for (const SparseMatrix* m : {&g.consecutive, &g.geographical, &g.homogeneous})
      for (std::size_t k = m->row_ptr[i]; k < m->row_ptr[i + 1]; ++k) check(m->col_idx[k]);
  }
}

namespace {

const char* const kFiles[] = {"A_c.tsv", "A_g.tsv", "A_t.tsv", "A_a.tsv", "A_h.tsv"};

void write_tsv(const SparseMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "row\tcol\tvalue\n";
  char buf[64];
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k) {
      auto res = std::to_chars(buf, buf + sizeof buf, m.values[k]);
      out << r << '\t' << m.col_idx[k] << '\t';
      out.write(buf, res.ptr - buf) << '\n';
    }
  }
}

SparseMatrix read_tsv(const std::filesystem::path& path, std::size_t rows, std::size_t cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<SparseMatrix::Triplet> t;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string r, c, v;
    std::getline(ss, r, '\t');
    std::getline(ss, c, '\t');
    std::getline(ss, v, '\t');
    double value = 0.0;
    std::from_chars(v.data(), v.data() + v.size(), value);
    t.push_back({std::stoul(r), std::stoul(c), value});
  }
  return SparseMatrix::from_triplets(rows, cols, std::move(t));
}

}  // namespace

void save_pgraph(const PGraph& g, const std::filesystem::path& dir, const std::string& corpus_hash) {
  std::filesystem::create_directories(dir);
  const SparseMatrix* ms[] = {&g.consecutive, &g.geographical, &g.time, &g.activity, &g.homogeneous};
  nlohmann::json manifest;
  manifest["delta_g_km"] = g.delta_g_km;
  manifest["corpus_hash"] = corpus_hash;
  for (std::size_t k = 0; k < 5; ++k) {
    write_tsv(*ms[k], dir / kFiles[k]);
    manifest["matrices"][kFiles[k]] = {{"rows", ms[k]->rows}, {"cols", ms[k]->cols}, {"nnz", ms[k]->nnz()}};
  }
  std::ofstream(dir / "graph.json") << manifest.dump(2) << '\n';
}

PGraph load_pgraph(const std::filesystem::path& dir, const std::string& expected_hash) {
  std::ifstream in(dir / "graph.json");
  if (!in) throw std::runtime_error("cannot open " + (dir / "graph.json").string());
  const auto manifest = nlohmann::json::parse(in);
  const std::string hash = manifest.at("corpus_hash").get<std::string>();
  if (!expected_hash.empty() && hash != expected_hash)
    throw GraphInvariantError("graph was built from corpus " + hash + ", not " + expected_hash);
  PGraph g;
  g.delta_g_km = manifest.at("delta_g_km").get<double>();
  SparseMatrix* ms[] = {&g.consecutive, &g.geographical, &g.time, &g.activity, &g.homogeneous};
  for (std::size_t k = 0; k < 5; ++k) {
    const auto& info = manifest.at("matrices").at(kFiles[k]);
    *ms[k] = read_tsv(dir / kFiles[k], info.at("rows").get<std::size_t>(), info.at("cols").get<std::size_t>());
    if (ms[k]->nnz() != info.at("nnz").get<std::size_t>()) throw GraphInvariantError(std::string(kFiles[k]) + " nnz mismatch");
  }
  check_invariants(g);
  return g;
}

}  // namespace ssdl::graph
