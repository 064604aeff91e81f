// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <random>

#include "gradcheck.hpp"
#include "ssdl/dataio/synthetic.hpp"
#include "ssdl/pgraph/aggregation.hpp"
#include "ssdl/pgraph/graph.hpp"

using namespace ssdl;
using graph::SparseMatrix;

namespace {

data::Trajectory session(std::vector<std::size_t> pois, std::vector<int> bins = {}) {
  data::Trajectory t;
  if (bins.empty()) bins.assign(pois.size(), 0);
  t.pois = std::move(pois);
  t.bins = std::move(bins);
  return t;
}

graph::TrajectoryView view(const std::vector<data::Trajectory>& ts) {
  graph::TrajectoryView v;
  for (const auto& t : ts) v.push_back(&t);
  return v;
}

data::Poi poi_at(double lat, double lon, std::size_t cat = 0) { return data::Poi{"p", lat, lon, cat}; }

constexpr std::size_t A = 0, B = 1, C = 2;

}  // namespace

TEST(Consecutive, HandCountedExamples) {
  const std::vector<data::Trajectory> one{session({A, B, A, C})};
  const SparseMatrix m = graph::build_consecutive(view(one), 3);
  EXPECT_DOUBLE_EQ(m.at(A, B), 0.5);
  EXPECT_DOUBLE_EQ(m.at(A, C), 0.5);
  EXPECT_DOUBLE_EQ(m.at(B, A), 1.0);
  EXPECT_DOUBLE_EQ(m.row_sum(C), 0.0);

  const std::vector<data::Trajectory> single{session({A})};
  EXPECT_EQ(graph::build_consecutive(view(single), 3).nnz(), 0u);

  const std::vector<data::Trajectory> twice{session({A, B}), session({A, B})};
  EXPECT_DOUBLE_EQ(graph::build_consecutive(view(twice), 3).at(A, B), 1.0);
}

TEST(Consecutive, TransitionsNeverCrossSessions) {
  const std::vector<data::Trajectory> ts{session({A, B}), session({C, A})};
  const SparseMatrix m = graph::build_consecutive(view(ts), 3);
  EXPECT_EQ(m.at(B, C), 0.0);
  EXPECT_DOUBLE_EQ(m.at(C, A), 1.0);
  EXPECT_DOUBLE_EQ(m.at(A, B), 0.5);
}

TEST(Geographical, HaversineOracles) {
  EXPECT_NEAR(graph::haversine_km(0, 0, 0, 1), graph::kEarthRadiusKm * M_PI / 180.0, 1e-9);
  EXPECT_NEAR(graph::haversine_km(0, 0, 0, 1), 111.19, 0.01);
  // 2 km due north along a meridian is an arc of 2/R radians.
  const double dlat = 2.0 / graph::kEarthRadiusKm * 180.0 / M_PI;
  EXPECT_NEAR(graph::haversine_km(35.0, 139.0, 35.0 + dlat, 139.0), 2.0, 1e-9);

  const std::vector<data::Poi> pois{poi_at(35.0, 139.0), poi_at(35.0, 139.0), poi_at(0, 0), poi_at(0, 1),
                                    poi_at(35.0 + dlat, 139.0)};
  const SparseMatrix g = graph::build_geographical(pois, 3.0);
  EXPECT_EQ(g.at(0, 1), 1.0);
  EXPECT_EQ(g.at(2, 3), 0.0);
  EXPECT_EQ(g.at(0, 4), 1.0);
  EXPECT_EQ(g.at(4, 0), 1.0);
  EXPECT_EQ(g.at(0, 0), 0.0);
}

TEST(TimeGraph, HandCountedExamples) {
  const std::vector<data::Trajectory> ts{session({A, B, A}, {14, 3, 14}), session({A}, {38})};
  const SparseMatrix m = graph::build_time(view(ts), 3);
  EXPECT_DOUBLE_EQ(m.at(A, 14), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.at(A, 38), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.at(B, 3), 1.0);
  EXPECT_EQ(m.row_sum(C), 0.0);
}

TEST(ActivityGraph, OneHotRowsAndCategoryCounts) {
  std::vector<data::Poi> pois;
  std::mt19937_64 rng(3);
  for (int i = 0; i < 30; ++i) pois.push_back(poi_at(0, 0, rng() % 5));
  pois[0].category = 3;
  std::vector<double> freq(5);
  for (const auto& p : pois) freq[p.category] += 1;
  const num::Tensor d = graph::build_activity(pois, 5).dense();
  EXPECT_EQ(d(0, 3), 1.0);
  EXPECT_EQ(d(0, 0) + d(0, 1) + d(0, 2) + d(0, 4), 0.0);
  for (std::size_t c = 0; c < 5; ++c) {
    double col = 0;
    for (std::size_t r = 0; r < 30; ++r) col += d(r, c);
    EXPECT_EQ(col, freq[c]);
  }
}

TEST(Merge, RuleApplication) {
  const auto c = SparseMatrix::from_triplets(2, 2, {{0, 1, 0.5}});
  const auto g = SparseMatrix::from_triplets(2, 2, {{0, 1, 1.0}, {1, 0, 1.0}});
  const auto h = graph::merge_homogeneous(c, g);
  EXPECT_EQ(h.at(0, 1), 0.5);
  EXPECT_EQ(h.at(1, 0), 1.0);
  EXPECT_EQ(h.at(0, 0), 0.0);
}

TEST(PGraph, InvariantsHoldOnSyntheticAndDetectCorruption) {
  data::SyntheticSpec spec;
  const auto syn = data::gen_synthetic(spec);
  graph::PGraph g = graph::build_pgraph(syn.corpus);
  EXPECT_NO_THROW(graph::check_invariants(g));
  EXPECT_EQ(g.time.cols, 48u);
  EXPECT_EQ(g.activity.cols, syn.corpus.num_categories());

  graph::PGraph bad = g;
  bad.geographical.values[0] = 0.5;
  EXPECT_THROW(graph::check_invariants(bad), graph::GraphInvariantError);
  bad = g;
  bad.homogeneous.values[0] = 0.123;
  EXPECT_THROW(graph::check_invariants(bad), graph::GraphInvariantError);
}

TEST(PGraph, BuiltFromTrainingSplitOnly) {
  data::SyntheticSpec spec;
  auto syn = data::gen_synthetic(spec);
  const graph::PGraph g = graph::build_pgraph(syn.corpus);
  graph::TrajectoryView all;
  for (const auto& t : syn.corpus.trajectories) all.push_back(&t);
  const graph::PGraph leak = graph::build_pgraph(all, syn.corpus);
  EXPECT_NE(g.consecutive, leak.consecutive);
}

TEST(PGraph, PersistenceRoundTripAndHashCheck) {
  data::SyntheticSpec spec;
  const auto syn = data::gen_synthetic(spec);
  const graph::PGraph g = graph::build_pgraph(syn.corpus);
  const auto dir = std::filesystem::temp_directory_path() / "ssdl_pgraph_rt";
  std::filesystem::remove_all(dir);
  const std::string hash = data::corpus_hash(syn.corpus);
  graph::save_pgraph(g, dir, hash);
  const graph::PGraph back = graph::load_pgraph(dir, hash);
  EXPECT_EQ(back.consecutive, g.consecutive);
  EXPECT_EQ(back.geographical, g.geographical);
  EXPECT_EQ(back.time, g.time);
  EXPECT_EQ(back.activity, g.activity);
  EXPECT_EQ(back.homogeneous, g.homogeneous);
  EXPECT_THROW(graph::load_pgraph(dir, "0000000000000000"), graph::GraphInvariantError);

  // Rebuilding from a persisted corpus gives the same graph.
  const auto cdir = std::filesystem::temp_directory_path() / "ssdl_pgraph_corpus";
  std::filesystem::remove_all(cdir);
  data::save_corpus(syn.corpus, cdir);
  const graph::PGraph rebuilt = graph::build_pgraph(data::load_corpus(cdir));
  EXPECT_EQ(rebuilt.consecutive, g.consecutive);
  EXPECT_EQ(rebuilt.homogeneous, g.homogeneous);
  EXPECT_EQ(rebuilt.time, g.time);
}

namespace {

struct Toy {
  num::ParameterSet params;
  graph::AggregationParams agg;
  Toy(std::size_t L, std::size_t C, std::size_t d, std::uint64_t seed) {
    num::Rng rng(seed);
    agg = graph::AggregationParams::create(params, L, C, d, rng);
    // Nonzero biases so their gradients are exercised.
    for (auto& p : params)
      for (double& x : p.value.storage()) x += 0.05 * std::normal_distribution<double>()(rng);
  }
};

// Dense, loop-based evaluation of the aggregation; shares no code with the tape.
std::vector<std::vector<double>> hosa_oracle(const SparseMatrix& h, const graph::AggregationParams& p) {
  const std::size_t L = h.rows, d = p.W_l->value.cols();
  const num::Tensor A = h.dense();
  std::vector<std::vector<double>> s(L, std::vector<double>(d));
  for (std::size_t i = 0; i < L; ++i)
    for (std::size_t c = 0; c < d; ++c) {
      double acc = p.b_l->value[c];
      for (std::size_t k = 0; k < L; ++k) acc += A(i, k) * p.W_l->value(k, c);
      s[i][c] = acc;
    }
  std::vector<std::vector<double>> e(L, std::vector<double>(d));
  for (std::size_t i = 0; i < L; ++i) {
    std::vector<std::size_t> nb;
    for (std::size_t j = 0; j < L; ++j)
      if (A(i, j) != 0.0) nb.push_back(j);
    std::vector<double> agg(d, 0.0);
    if (nb.empty()) {
      agg = s[i];
    } else {
      std::vector<double> score;
      for (std::size_t j : nb) {
        double a = 0;
        for (std::size_t c = 0; c < d; ++c) a += p.b_a->value[c] * s[i][c] + p.b_a->value[d + c] * s[j][c];
        score.push_back(a > 0 ? a : 0.01 * a);
      }
      double mx = *std::max_element(score.begin(), score.end()), z = 0;
      for (double& x : score) z += (x = std::exp(x - mx));
      for (std::size_t n = 0; n < nb.size(); ++n)
        for (std::size_t c = 0; c < d; ++c) agg[c] += score[n] / z * s[nb[n]][c];
    }
    for (std::size_t c = 0; c < d; ++c) {
      double x = 0;
      for (std::size_t k = 0; k < d; ++k) x += agg[k] * p.W_e->value(k, c);
      e[i][c] = 1.0 / (1.0 + std::exp(-x));
    }
  }
  return e;
}

SparseMatrix random_homogeneous(std::size_t L, std::mt19937_64& rng) {
  std::vector<SparseMatrix::Triplet> t;
  std::uniform_real_distribution<double> u(0.05, 1.0);
  // Row 0 stays empty to exercise the isolated-node fallback.
  for (std::size_t i = 1; i < L; ++i)
    for (std::size_t j = 0; j < L; ++j)
      if (rng() % 3 == 0) t.push_back({i, j, rng() % 2 ? 1.0 : u(rng)});
  return SparseMatrix::from_triplets(L, L, std::move(t));
}

}  // namespace

TEST(Hosa, MatchesDenseOracle) {
  std::mt19937_64 rng(5);
  const SparseMatrix h = random_homogeneous(9, rng);
  Toy toy(9, 4, 6, 17);
  num::Tape tape(false);
  const auto out = graph::hosa(tape, graph::HosaEdges::from(h), toy.agg);
  const auto expect = hosa_oracle(h, toy.agg);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(out.embeddings.value()(i, c), expect[i][c], 1e-12);
}

TEST(Hosa, AttentionProperties) {
  std::mt19937_64 rng(8);
  const SparseMatrix h = random_homogeneous(12, rng);
  Toy toy(12, 3, 5, 2);
  const auto edges = graph::HosaEdges::from(h);
  num::Tape tape(false);
  const auto out = graph::hosa(tape, edges, toy.agg);
  const num::Tensor& alpha = out.attention.value();
  for (std::size_t i = 0; i < 12; ++i) {
    double total = 0;
    for (std::size_t k = edges.offsets[i]; k < edges.offsets[i + 1]; ++k) {
      EXPECT_GT(alpha[k], 0.0);
      total += alpha[k];
    }
    EXPECT_NEAR(total, 1.0, 1e-9);
  }
  for (double x : out.embeddings.value().data()) {
    EXPECT_GT(x, 0.0);
    EXPECT_LT(x, 1.0);
  }
}

TEST(Hosa, SingletonAndSymmetricNeighbourhoods) {
  // Row 0: one neighbour. Row 1: neighbours 2 and 3, whose rows in A_h are identical so s_2 == s_3.
  const auto h = SparseMatrix::from_triplets(
      4, 4, {{0, 1, 1.0}, {1, 2, 0.5}, {1, 3, 0.5}, {2, 0, 1.0}, {3, 0, 1.0}});
  Toy toy(4, 2, 3, 9);
  const auto edges = graph::HosaEdges::from(h);
  num::Tape tape(false);
  const auto out = graph::hosa(tape, edges, toy.agg);
  EXPECT_DOUBLE_EQ(out.attention.value()[0], 1.0);
  EXPECT_DOUBLE_EQ(out.attention.value()[1], 0.5);
  EXPECT_DOUBLE_EQ(out.attention.value()[2], 0.5);
}

TEST(Hosa, IsolatedNodeFallsBackToOwnState) {
  const auto h = SparseMatrix::from_triplets(3, 3, {{1, 2, 1.0}, {2, 1, 1.0}});
  Toy toy(3, 2, 4, 21);
  num::Tape tape(false);
  const auto out = graph::hosa(tape, graph::HosaEdges::from(h), toy.agg);
  // s_0 = b_l since row 0 of A_h is empty.
  for (std::size_t c = 0; c < 4; ++c) {
    double x = 0;
    for (std::size_t k = 0; k < 4; ++k) x += toy.agg.b_l->value[k] * toy.agg.W_e->value(k, c);
    EXPECT_NEAR(out.embeddings.value()(0, c), 1.0 / (1.0 + std::exp(-x)), 1e-14);
  }
}

TEST(Hosa, DeterministicAndGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(31);
  for (int config = 0; config < 5; ++config) {
    const SparseMatrix h = random_homogeneous(7, rng);
    Toy toy(7, 3, 4, 100 + config);
    const auto edges = graph::HosaEdges::from(h);
    const num::Tensor target = [&] {
      num::Tensor t = num::Tensor::zeros(7, 4);
      for (double& x : t.storage()) x = std::uniform_real_distribution<double>(0, 1)(rng);
      return t;
    }();
    auto loss = [&](num::Tape& tape) {
      const auto out = graph::hosa(tape, edges, toy.agg);
      return num::sum(num::square(out.embeddings - tape.constant(target)));
    };
    num::Tape t1(false), t2(false);
    EXPECT_EQ(loss(t1).value().item(), loss(t2).value().item());
    const auto r = ssdl::testing::check_gradients(toy.params, loss);
    EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
  }
}

TEST(Hesa, ZeroRowBoundsAndGradient) {
  const auto a = SparseMatrix::from_triplets(3, 48, {{0, 14, 2.0 / 3}, {0, 38, 1.0 / 3}, {2, 5, 1.0}});
  Toy toy(3, 2, 4, 4);
  num::Tape tape(false);
  const num::Var e = graph::hesa(tape, a, *toy.agg.W_t);
  for (std::size_t c = 0; c < 4; ++c) {
    EXPECT_EQ(e.value()(1, c), 0.0);
    EXPECT_NEAR(e.value()(2, c), std::tanh(toy.agg.W_t->value(5, c)), 1e-15);
  }
  for (double x : e.value().data()) EXPECT_LT(std::abs(x), 1.0);

  auto loss = [&](num::Tape& t) { return num::sum(num::square(graph::hesa(t, a, *toy.agg.W_t))); };
  const auto r = ssdl::testing::check_gradients(toy.params, loss, 1e-5, 48);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;

  num::Tape t2(false);
  EXPECT_THROW(graph::hesa(t2, a, *toy.agg.W_a), num::DimensionError);
}
