// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "gradcheck.hpp"
#include "json.hpp"
#include "ssdl/taskmodel/metrics.hpp"
#include "ssdl/taskmodel/predictor.hpp"

using namespace ssdl;
using num::Tensor;
using num::Var;

namespace {

task::TaskDims small_dims() {
  task::TaskDims d;
  d.num_pois = 9;
  d.embed = 6;
  d.z_s = 4;
  d.z_r = 3;
  d.attention = 5;
  return d;
}

struct Fixture {
  num::ParameterSet params;
  task::TaskParams task;
  num::Parameter* table = nullptr;

  explicit Fixture(std::uint64_t seed, task::TaskDims d = small_dims()) {
    num::Rng rng(seed);
    task = task::TaskParams::create(params, d, rng);
    table = &params.add("table", d.num_pois, d.embed, num::Init::Glorot, rng);
    // Non-zero output bias so its gradient path is exercised.
    std::normal_distribution<double> n(0.0, 0.3);
    for (double& x : task.b_t->value.storage()) x = n(rng);
  }
};

// Brute-force AUC: fraction of negatives scored strictly below the truth, plus half the ties.
double pairwise_auc(const std::vector<double>& s, std::size_t truth) {
  double wins = 0;
  for (std::size_t j = 0; j < s.size(); ++j) {
    if (j == truth) continue;
    if (s[j] < s[truth]) wins += 1;
    else if (s[j] == s[truth]) wins += 0.5;
  }
  return wins / static_cast<double>(s.size() - 1);
}

}  // namespace

TEST(PositionalEncoding, KnownEntries) {
  const Tensor pe = task::positional_encoding(5, 8);
  for (std::size_t i = 0; i < 8; ++i) EXPECT_DOUBLE_EQ(pe(0, i), i % 2 == 0 ? 0.0 : 1.0);
  EXPECT_NEAR(pe(3, 4), std::sin(3.0 / 100.0), 1e-15);  // 10000^(4/8) = 100
  EXPECT_NEAR(pe(3, 5), std::cos(3.0 / 100.0), 1e-15);
  EXPECT_NEAR(pe(2, 0), std::sin(2.0), 1e-15);

  num::Tape tape;
  const Var a = task::position_encode(tape.constant(Tensor::filled(5, 8, 2.0)));
  const Var b = task::position_encode(tape.constant(Tensor::filled(5, 8, -1.0)));
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(a.value()(r, c) - 2.0, b.value()(r, c) + 1.0, 1e-15);
}

TEST(History, LastQueryMatchesFullAttention) {
  Fixture f(1);
  const std::vector<std::size_t> h{3, 1, 4, 1, 5, 8};
  num::Tape tape;
  const Var table = tape.param(*f.table);
  const Var encoded = task::position_encode(num::gather_rows(table, h));
  const auto full = task::self_attention(tape, f.task, encoded);
  for (std::size_t r = 0; r < h.size(); ++r) {
    double s = 0;
    for (std::size_t c = 0; c < h.size(); ++c) s += full.weights.value()(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const std::vector<std::vector<std::size_t>> hs{h};
  const Var last = task::history_encode(tape, f.task, table, hs);
  ASSERT_EQ(last.cols(), 5u);
  for (std::size_t c = 0; c < 5; ++c) EXPECT_NEAR(last.value()(0, c), full.states.value()(h.size() - 1, c), 1e-12);
}

TEST(History, SingleEntryIsItsOwnValueProjection) {
  Fixture f(2);
  num::Tape tape;
  const Var table = tape.param(*f.table);
  const std::vector<std::vector<std::size_t>> hs{{7}};
  const Tensor& got = task::history_encode(tape, f.task, table, hs).value();
  const Tensor pe = task::positional_encoding(1, 6);
  for (std::size_t c = 0; c < 5; ++c) {
    double expect = 0;
    for (std::size_t k = 0; k < 6; ++k) expect += (f.table->value(7, k) + pe(0, k)) * f.task.W_v->value(k, c);
    EXPECT_NEAR(got(0, c), expect, 1e-12);
  }
}

TEST(History, CapKeepsMostRecentAndEmptyGivesZero) {
  auto dims = small_dims();
  dims.history_cap = 4;
  Fixture f(3, dims);
  num::Tape tape;
  const Var table = tape.param(*f.table);
  const std::vector<std::vector<std::size_t>> long_and_short{{0, 1, 2, 3, 4, 5, 6}, {3, 4, 5, 6}, {}};
  task::reset_empty_history_count();
  const Tensor& got = task::history_encode(tape, f.task, table, long_and_short).value();
  EXPECT_EQ(task::empty_history_count(), 1u);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_NEAR(got(0, c), got(1, c), 1e-12);
    EXPECT_EQ(got(2, c), 0.0);
  }
}

TEST(Predict, ZeroWeightsUniformAndProbabilitiesNormalise) {
  Fixture f(4);
  num::Tape tape;
  const Var zr = tape.constant(Tensor::filled(2, 3, 0.5));
  const Var zs = tape.constant(Tensor::filled(2, 4, -0.2));
  const Var h = tape.constant(Tensor::filled(2, 5, 1.0));
  const Tensor& p = num::softmax_rows(task::predict_logits(tape, f.task, zr, zs, h, 0.5, nullptr)).value();
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 9; ++c) s += p(r, c);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  f.task.W_t->value.fill(0.0);
  f.task.b_t->value.fill(0.0);
  num::Tape t2;
  const Tensor& u = num::softmax_rows(task::predict_logits(t2, f.task, t2.constant(zr.value()), t2.constant(zs.value()),
                                                           t2.constant(h.value()), 0.5, nullptr))
                        .value();
  for (double x : u.storage()) EXPECT_NEAR(x, 1.0 / 9, 1e-15);
}

TEST(Predict, EvaluationIsDeterministicAndTrainingDropsOut) {
  Fixture f(5);
  auto run = [&](num::Rng* rng) {
    num::Tape tape;
    return task::predict_logits(tape, f.task, tape.constant(Tensor::filled(1, 3, 0.3)),
                                tape.constant(Tensor::filled(1, 4, 0.1)), tape.constant(Tensor::filled(1, 5, 0.7)), 0.5,
                                rng)
        .value();
  };
  const Tensor a = run(nullptr), b = run(nullptr);
  EXPECT_EQ(a.storage(), b.storage());
  num::Rng rng(1);
  EXPECT_NE(run(&rng).storage(), a.storage());
}

TEST(Predict, TopKNestsAndBreaksTiesByIndex) {
  const std::vector<double> s{0.1, 0.9, 0.3, 0.9, -1.0, 0.5, 0.2, 0.0, 0.4, 0.6, 0.8, 0.05};
  const auto t1 = task::top_k(s, 1), t10 = task::top_k(s, 10);
  EXPECT_EQ(t1, std::vector<std::size_t>{1});
  EXPECT_EQ(t10[0], 1u);
  EXPECT_EQ(t10[1], 3u);
  EXPECT_EQ(t10.size(), 10u);
  EXPECT_EQ(task::top_k(s, 50).size(), s.size());
}

TEST(TaskLoss, ClosedFormsAndGradient) {
  num::Tape tape;
  const std::vector<std::size_t> first{0};
  EXPECT_NEAR(task::task_loss(tape.constant(Tensor::row({0.0, -800.0, -900.0})), first).value().item(), 0.0, 1e-300);
  EXPECT_NEAR(task::task_loss(tape.constant(Tensor::filled(1, 37, 0.4)), first).value().item(), std::log(37.0), 1e-12);
  const std::vector<std::size_t> bad{3};
  EXPECT_THROW(task::task_loss(tape.constant(Tensor::filled(1, 3, 0.0)), bad), std::out_of_range);

  // d loss / d logits = (softmax - onehot) / B, checked against finite differences too.
  num::ParameterSet ps;
  num::Rng rng(6);
  auto& logits = ps.add("logits", 3, 7, num::Init::Glorot, rng);
  const std::vector<std::size_t> targets{2, 0, 6};
  auto loss = [&](num::Tape& t) { return task::task_loss(t.param(logits), targets); };
  const auto r = ssdl::testing::check_gradients(ps, loss, 1e-6, 30);
  EXPECT_LT(r.max_rel_error, 1e-6) << r.worst;
  for (std::size_t b = 0; b < 3; ++b) {
    double z = 0;
    for (std::size_t c = 0; c < 7; ++c) z += std::exp(logits.value(b, c));
    for (std::size_t c = 0; c < 7; ++c) {
      const double expect = (std::exp(logits.value(b, c)) / z - (c == targets[b] ? 1.0 : 0.0)) / 3.0;
      EXPECT_NEAR(logits.grad(b, c), expect, 1e-12);
    }
  }
}

TEST(TaskModel, EndToEndGradientsMatchFiniteDifferences) {
  Fixture f(7);
  num::Rng prng(8);
  auto& zr = f.params.add("zr", 2, 3, num::Init::Glorot, prng);
  auto& zs = f.params.add("zs", 2, 4, num::Init::Glorot, prng);
  const std::vector<std::vector<std::size_t>> hs{{1, 2, 3, 2}, {8, 0}};
  const std::vector<std::size_t> targets{4, 5};
  auto loss = [&](num::Tape& tape) {
    num::Rng rng(3);
    const Var h = task::history_encode(tape, f.task, tape.param(*f.table), hs);
    return task::task_loss(task::predict_logits(tape, f.task, tape.param(zr), tape.param(zs), h, 0.5, &rng), targets);
  };
  const auto r = ssdl::testing::check_gradients(f.params, loss, 1e-5, 10);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst;
}

TEST(Metrics, WorkedExamples) {
  std::vector<double> s(100);
  for (std::size_t i = 0; i < 100; ++i) s[i] = -static_cast<double>(i);
  std::swap(s[2], s[40]);  // truth 40 now holds the third best score
  const std::size_t rank = task::rank_of(s, 40);
  EXPECT_EQ(rank, 3u);
  const auto r = task::summarize({{0, 0, rank}}, 100);
  EXPECT_EQ(r.acc1, 0.0);
  EXPECT_EQ(r.acc5, 1.0);
  EXPECT_NEAR(r.auc, 97.0 / 99.0, 1e-15);
  EXPECT_NEAR(r.auc, pairwise_auc(s, 40), 1e-15);
  EXPECT_NEAR(r.map, 1.0 / 3.0, 1e-15);

  const auto perfect = task::summarize({{0, 0, 1}, {1, 0, 1}, {2, 3, 1}}, 20);
  EXPECT_EQ(perfect.acc1, 1.0);
  EXPECT_EQ(perfect.acc10, 1.0);
  EXPECT_EQ(perfect.auc, 1.0);
  EXPECT_EQ(perfect.map, 1.0);

  EXPECT_THROW(task::summarize({}, 10), std::invalid_argument);
}

TEST(Metrics, TiesBrokenByIndex) {
  const std::vector<double> s{1.0, 2.0, 2.0, 2.0, 0.5};
  EXPECT_EQ(task::rank_of(s, 1), 1u);
  EXPECT_EQ(task::rank_of(s, 2), 2u);
  EXPECT_EQ(task::rank_of(s, 3), 3u);
  EXPECT_EQ(task::rank_of(s, 0), 4u);
}

TEST(Metrics, RankAucMatchesPairwiseOracle) {
  num::Rng rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, 49);
  for (int i = 0; i < 200; ++i) {
    std::vector<double> s(50);
    for (double& x : s) x = n(rng);
    const std::size_t truth = pick(rng);
    EXPECT_NEAR(task::rank_auc(task::rank_of(s, truth), 50), pairwise_auc(s, truth), 1e-12);
  }
}

TEST(Metrics, OrderPreservingTransformInvariantAndNested) {
  num::Rng rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, 29);
  std::vector<task::InstanceRank> a, b;
  for (int i = 0; i < 300; ++i) {
    std::vector<double> s(30), t(30);
    for (std::size_t j = 0; j < 30; ++j) {
      s[j] = n(rng);
      t[j] = std::exp(3 * s[j]) + 7;
    }
    const std::size_t truth = pick(rng);
    a.push_back({0, static_cast<std::size_t>(i), task::rank_of(s, truth)});
    b.push_back({0, static_cast<std::size_t>(i), task::rank_of(t, truth)});
  }
  const auto ra = task::summarize(a, 30), rb = task::summarize(b, 30);
  EXPECT_EQ(task::metrics_json(ra), task::metrics_json(rb));
  EXPECT_LE(ra.acc1, ra.acc5);
  EXPECT_LE(ra.acc5, ra.acc10);
  for (double m : {ra.acc1, ra.acc5, ra.acc10, ra.auc, ra.map}) {
    EXPECT_GE(m, 0.0);
    EXPECT_LE(m, 1.0);
  }
}

TEST(Metrics, RandomScoresGiveChanceAccuracy) {
  num::Rng rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t L = 40, n = 20000;
  std::vector<task::InstanceRank> ranks;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> s(L);
    for (double& x : s) x = u(rng);
    ranks.push_back({0, i, task::rank_of(s, i % L)});
  }
  const auto r = task::summarize(ranks, L);
  const double p = 10.0 / L;
  EXPECT_NEAR(r.acc10, p, 4 * std::sqrt(p * (1 - p) / n));
  EXPECT_NEAR(r.auc, 0.5, 0.01);
}

TEST(Metrics, JsonCarriesAllFields) {
  const auto r = task::summarize({{0, 0, 2}, {1, 1, 7}}, 10);
  const auto j = nlohmann::json::parse(task::metrics_json(r));
  for (const char* key : {"acc@1", "acc@5", "acc@10", "auc", "map", "instances"}) EXPECT_TRUE(j.contains(key)) << key;
  EXPECT_EQ(j["instances"], 2);
  EXPECT_DOUBLE_EQ(j["map"].get<double>(), (0.5 + 1.0 / 7) / 2);
}
