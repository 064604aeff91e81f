// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

#include "gradcheck.hpp"
#include "ssdl/ssl/counters.hpp"
#include "ssdl/ssl/objective.hpp"

using namespace ssdl;
using num::Tensor;
using num::Var;

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kEarthKm = 6371.0088;

// Latitude offset that places a point `km` due north along a meridian.
double north_deg(double km) { return km / kEarthKm * 180.0 / kPi; }

data::Trajectory make_traj(std::size_t user, std::vector<std::size_t> pois) {
  data::Trajectory t;
  t.user = user;
  t.pois = std::move(pois);
  for (std::size_t i = 0; i < t.pois.size(); ++i) {
    t.bins.push_back(static_cast<int>(i * 7 % 48));
    t.times.push_back(static_cast<data::Timestamp>(1000 + 60 * i));
  }
  return t;
}

Tensor random_tensor(std::size_t r, std::size_t c, num::Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Tensor t = Tensor::zeros(r, c);
  for (double& x : t.storage()) x = n(rng);
  return t;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> row_of(const Tensor& t, std::size_t r) {
  std::vector<double> out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t(r, c);
  return out;
}

double log_normal(double x, double mean, double logvar) {
  return -0.5 * (std::log(2 * kPi) + logvar + (x - mean) * (x - mean) / std::exp(logvar));
}

double lse(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

vae::VaeDims small_dims(std::size_t pois) {
  vae::VaeDims d;
  d.num_pois = pois;
  d.embed = 5;
  d.z_s = 4;
  d.z_r = 3;
  d.prior_hidden = 4;
  return d;
}

struct Model {
  num::ParameterSet params;
  vae::VaeParams vae;
  num::Parameter* features = nullptr;

  Model(const vae::VaeDims& d, std::uint64_t seed, double jitter) {
    num::Rng rng(seed);
    vae = vae::VaeParams::create(params, d, rng);
    features = &params.add("features", d.num_pois, 3 * d.embed, num::Init::Glorot, rng);
    std::normal_distribution<double> n(0.0, jitter);
    for (auto& p : params)
      for (double& x : p.value.storage()) x += n(rng);
  }
  Var table(num::Tape& tape) { return vae::contextual_table(tape, vae, tape.param(*features)); }
};

// Ten POIs in two categories. Same-category POIs sit 100 m apart along a meridian.
std::vector<data::Poi> clustered_pois() {
  std::vector<data::Poi> pois;
  for (std::size_t i = 0; i < 10; ++i)
    pois.push_back({"p" + std::to_string(i), 35.0 + north_deg(0.1 * static_cast<double>(i / 2)), 139.0 + 0.5 * (i % 2),
                    i % 2});
  return pois;
}

}  // namespace

TEST(Shuffle, SingletonUnchangedAndPairsMoveTogether) {
  num::Rng rng(1);
  const auto one = make_traj(0, {4});
  const auto s1 = ssl::augment_shuffle(one, rng);
  EXPECT_EQ(s1.pois, one.pois);
  EXPECT_EQ(s1.bins, one.bins);

  const auto t = make_traj(2, {5, 1, 9, 1, 3, 7});
  for (int rep = 0; rep < 50; ++rep) {
    const auto s = ssl::augment_shuffle(t, rng);
    ASSERT_EQ(s.length(), t.length());
    std::multiset<std::pair<std::size_t, int>> a, b;
    for (std::size_t i = 0; i < t.length(); ++i) {
      a.insert({t.pois[i], t.bins[i]});
      b.insert({s.pois[i], s.bins[i]});
    }
    EXPECT_EQ(a, b);
    EXPECT_EQ(s.user, t.user);
  }
}

TEST(Shuffle, DeterministicUnderSeedAndCoversAllOrders) {
  const auto t = make_traj(0, {0, 1, 2});
  num::Rng a(7), b(7);
  for (int rep = 0; rep < 20; ++rep) EXPECT_EQ(ssl::augment_shuffle(t, a).pois, ssl::augment_shuffle(t, b).pois);

  // Each of the 3! orders should appear with probability 1/6.
  num::Rng rng(11);
  std::map<std::vector<std::size_t>, int> counts;
  const int draws = 6000;
  for (int i = 0; i < draws; ++i) ++counts[ssl::augment_shuffle(t, rng).pois];
  ASSERT_EQ(counts.size(), 6u);
  const double expected = draws / 6.0;
  const double sd = std::sqrt(draws * (1.0 / 6) * (5.0 / 6));
  for (const auto& [order, n] : counts) EXPECT_LT(std::abs(n - expected), 4 * sd);
}

TEST(CollectiveMap, DistanceAndCategoryGates) {
  std::vector<data::Poi> pois = {
      {"a", 35.0, 139.0, 0},
      {"b", 35.0 + north_deg(0.1), 139.0, 0},   // 100 m north, same category
      {"c", 35.0, 139.0, 1},                    // same spot, other category
      {"d", 35.0 + north_deg(0.29), 139.0, 0},  // 290 m from a
      {"e", 35.0 - north_deg(0.31), 139.0, 0},  // 310 m from a, 410 m from b
      {"f", 10.0, 10.0, 1},                     // isolated
  };
  const auto map = ssl::build_collective_map(pois);
  auto has = [&](std::size_t i, std::size_t j) {
    const auto& l = map.of(i);
    return std::find(l.begin(), l.end(), j) != l.end();
  };
  EXPECT_TRUE(has(0, 1));
  EXPECT_TRUE(has(1, 0));
  EXPECT_FALSE(has(0, 2));
  EXPECT_FALSE(has(2, 0));
  EXPECT_TRUE(has(0, 3));
  EXPECT_FALSE(has(0, 4));
  EXPECT_TRUE(has(1, 3));  // 190 m apart
  EXPECT_TRUE(map.of(5).empty());
  EXPECT_TRUE(map.of(2).empty());
}

TEST(CollectiveMap, RandomVocabularyIsSymmetricIrreflexiveAndCategoryPure) {
  num::Rng rng(3);
  std::uniform_real_distribution<double> jitter(-0.004, 0.004);
  std::uniform_int_distribution<std::size_t> cat(0, 2);
  std::vector<data::Poi> pois;
  for (std::size_t i = 0; i < 80; ++i) pois.push_back({"p" + std::to_string(i), 35 + jitter(rng), 139 + jitter(rng), cat(rng)});
  const auto map = ssl::build_collective_map(pois);
  std::size_t edges = 0;
  for (std::size_t i = 0; i < pois.size(); ++i) {
    for (std::size_t j : map.of(i)) {
      ++edges;
      EXPECT_NE(i, j);
      EXPECT_EQ(pois[i].category, pois[j].category);
      const auto& back = map.of(j);
      EXPECT_NE(std::find(back.begin(), back.end(), i), back.end());
    }
  }
  EXPECT_GT(edges, 0u);
}

TEST(Collective, ReplacesExactlyRoundedShareAndKeepsCategories) {
  const auto pois = clustered_pois();
  const auto map = ssl::build_collective_map(pois);
  for (std::size_t i = 0; i < pois.size(); ++i) ASSERT_FALSE(map.of(i).empty());
  EXPECT_EQ(ssl::collective_positions(10, 0.3), 3u);
  EXPECT_EQ(ssl::collective_positions(5, 0.3), 2u);  // 1.5 rounds away from zero
  EXPECT_EQ(ssl::collective_positions(4, 0.3), 1u);

  num::Rng rng(5);
  const auto t = make_traj(0, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  std::vector<int> chosen(10, 0);
  const int reps = 4000;
  for (int rep = 0; rep < reps; ++rep) {
    const auto a = ssl::augment_collective(t, map, 0.3, rng);
    ASSERT_EQ(a.length(), t.length());
    EXPECT_EQ(a.bins, t.bins);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < t.length(); ++i) {
      EXPECT_EQ(pois[a.pois[i]].category, pois[t.pois[i]].category);
      if (a.pois[i] != t.pois[i]) {
        ++changed;
        ++chosen[i];
      }
    }
    // The map is irreflexive, so every selected position really changes.
    EXPECT_EQ(changed, 3u);
  }
  const double sd = std::sqrt(reps * 0.3 * 0.7);
  for (int c : chosen) EXPECT_LT(std::abs(c - reps * 0.3), 4 * sd);
}

TEST(Collective, EmptyMapLeavesTrajectoryAlone) {
  std::vector<data::Poi> pois;
  for (std::size_t i = 0; i < 5; ++i) pois.push_back({"p" + std::to_string(i), 10.0 * static_cast<double>(i), 0.0, 0});
  const auto map = ssl::build_collective_map(pois);
  num::Rng rng(2);
  const auto t = make_traj(0, {0, 1, 2, 3, 4, 0, 1});
  const auto a = ssl::augment_collective(t, map, 0.3, rng);
  EXPECT_EQ(a.pois, t.pois);
  EXPECT_EQ(a.bins, t.bins);
}

TEST(Nce, WorkedExamples) {
  num::Tape tape;
  const Var a = tape.constant(Tensor::row({1.0, 0.0}));
  const Var p = tape.constant(Tensor::row({2.0, 0.0}));
  const Var n = tape.constant(Tensor::row({-3.0, 0.0}));
  EXPECT_NEAR(ssl::nce(a, p, n, 0.5).value().item(), -std::log(1 + std::exp(-4.0)), 1e-12);
  EXPECT_NEAR(ssl::nce(a, p, n, 0.5).value().item(), -0.01815, 5e-6);

  // All similarities equal.
  for (std::size_t m : {1u, 3u, 8u}) {
    const Var negs = tape.constant(Tensor::filled(m, 3, 0.7));
    const Var v = tape.constant(Tensor::row({0.2, -1.0, 0.4}));
    const Var same = tape.constant(Tensor::row({0.7, 0.7, 0.7}));
    EXPECT_NEAR(ssl::nce(v, same, negs, 0.5).value().item(), -std::log(m + 1.0), 1e-12);
  }
}

TEST(Nce, MatchesScalarOracleAndIsPermutationInvariant) {
  num::Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + trial % 6;
    const Tensor a = random_tensor(1, 5, rng), p = random_tensor(1, 5, rng), n = random_tensor(m, 5, rng);
    const double eta = 0.2 + 0.1 * trial;
    std::vector<double> logits{cosine(row_of(a, 0), row_of(p, 0)) / eta};
    for (std::size_t j = 0; j < m; ++j) logits.push_back(cosine(row_of(a, 0), row_of(n, j)) / eta);
    const double oracle = logits[0] - lse(logits);

    num::Tape tape;
    const double got = ssl::nce(tape.constant(a), tape.constant(p), tape.constant(n), eta).value().item();
    EXPECT_NEAR(got, oracle, 1e-12);
    EXPECT_LE(got, 0.0);
    EXPECT_LE(got, std::log(m + 1.0));

    std::vector<std::size_t> perm(m);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor np = Tensor::zeros(m, 5);
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t c = 0; c < 5; ++c) np(j, c) = n(perm[j], c);
    EXPECT_NEAR(ssl::nce(tape.constant(a), tape.constant(p), tape.constant(np), eta).value().item(), got, 1e-12);
  }
}

TEST(Nce, ZeroVectorIsRejected) {
  num::Tape tape;
  const Var a = tape.constant(Tensor::row({0.0, 0.0}));
  const Var p = tape.constant(Tensor::row({1.0, 0.0}));
  EXPECT_THROW(ssl::nce(a, p, p, 0.5), std::domain_error);
  EXPECT_THROW(ssl::nce(p, p, a, 0.5), std::domain_error);
}

TEST(NegativePlan, OnePerOtherUserLowestIndex) {
  const std::vector<std::size_t> users{3, 3, 5, 7, 5};
  const auto plan = ssl::NegativePlan::from_users(users, 1000);
  EXPECT_EQ(plan.representatives, (std::vector<std::size_t>{0, 2, 3}));
  for (std::size_t i = 0; i < users.size(); ++i) EXPECT_EQ(plan.negatives_of(i), 2u);
  EXPECT_EQ(plan.mask(0, 0), 0.0);
  EXPECT_EQ(plan.mask(4, 1), 0.0);
  EXPECT_EQ(plan.mask(4, 2), 1.0);

  const auto capped = ssl::NegativePlan::from_users(users, 1);
  for (std::size_t i = 0; i < users.size(); ++i) EXPECT_EQ(capped.negatives_of(i), 1u);

  const std::vector<std::size_t> lonely{4, 4, 4};
  EXPECT_THROW(ssl::NegativePlan::from_users(lonely, 10), ssl::NoNegatives);
}

TEST(MiTerms, BatchedTermMatchesPerAnchorOracle) {
  num::Rng rng(21);
  const std::vector<std::size_t> users{0, 1, 0, 2, 1, 3};
  const auto plan = ssl::NegativePlan::from_users(users, 1000);
  const Tensor anchors = random_tensor(6, 4, rng), pos = random_tensor(6, 4, rng), pool = random_tensor(6, 4, rng);
  double oracle = 0;
  for (std::size_t i = 0; i < users.size(); ++i) {
    std::vector<double> logits{cosine(row_of(anchors, i), row_of(pos, i)) / 0.5};
    std::vector<bool> used(10, false);
    for (std::size_t j = 0; j < users.size(); ++j) {
      if (users[j] == users[i] || used[users[j]]) continue;
      used[users[j]] = true;
      logits.push_back(cosine(row_of(anchors, i), row_of(pool, j)) / 0.5);
    }
    ASSERT_EQ(logits.size(), 4u);  // 4 distinct users, so 3 negatives
    oracle += logits[0] - lse(logits);
  }
  oracle /= users.size();
  num::Tape tape;
  const Var c = ssl::contrastive_term(tape.constant(anchors), tape.constant(pos), tape.constant(pool), plan, 0.5);
  EXPECT_NEAR(c.value().item(), oracle, 1e-12);
  EXPECT_LE(c.value().item(), std::log(4.0));

  // Equal augmented and original positives collapse the halves onto one term.
  const Var same = ssl::mi_zr(tape.constant(anchors), tape.constant(pos), tape.constant(pos), plan, 0.5);
  const Var single = ssl::contrastive_term(tape.constant(anchors), tape.constant(pos), tape.constant(pos), plan, 0.5);
  EXPECT_NEAR(same.value().item(), single.value().item(), 1e-12);
}

TEST(MiTerms, AnchorEqualToEveryCandidateHitsFloor) {
  const std::vector<std::size_t> users{0, 1, 2, 3};
  const auto plan = ssl::NegativePlan::from_users(users, 1000);
  num::Tape tape;
  const Var v = tape.constant(Tensor::filled(4, 3, 1.5));
  EXPECT_NEAR(ssl::mi_zs(v, v, v, plan, 0.5).value().item(), -std::log(4.0), 1e-12);
}

TEST(Pool, MaskedMeanOverValidSteps) {
  num::Tape tape;
  std::vector<Var> steps{tape.constant(Tensor::matrix(2, 1, {1.0, 10.0})), tape.constant(Tensor::matrix(2, 1, {3.0, 99.0}))};
  std::vector<Tensor> masks{Tensor::matrix(2, 1, {1.0, 1.0}), Tensor::matrix(2, 1, {1.0, 0.0})};
  const Tensor& got = ssl::pool_steps(steps, masks).value();
  EXPECT_DOUBLE_EQ(got(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(got(1, 0), 10.0);
}

namespace {

struct MwsInputs {
  Tensor zs, zs_mean, zs_lv;
  std::vector<Tensor> zr, zr_mean, zr_lv, masks;
};

MwsInputs random_mws(std::size_t m, std::size_t steps, num::Rng& rng) {
  MwsInputs in;
  in.zs = random_tensor(m, 3, rng);
  in.zs_mean = random_tensor(m, 3, rng);
  in.zs_lv = random_tensor(m, 3, rng, 0.5);
  std::uniform_int_distribution<std::size_t> len(1, steps);
  std::vector<std::size_t> lengths(m);
  for (auto& l : lengths) l = len(rng);
  lengths[0] = steps;
  for (std::size_t t = 0; t < steps; ++t) {
    in.zr.push_back(random_tensor(m, 2, rng));
    in.zr_mean.push_back(random_tensor(m, 2, rng));
    in.zr_lv.push_back(random_tensor(m, 2, rng, 0.5));
    Tensor mask = Tensor::zeros(m, 1);
    for (std::size_t b = 0; b < m; ++b) mask(b, 0) = t < lengths[b] ? 1.0 : 0.0;
    in.masks.push_back(mask);
  }
  return in;
}

double run_mws(const MwsInputs& in, std::size_t n) {
  num::Tape tape(false);
  std::vector<Var> zr;
  std::vector<vae::Gaussian> q;
  for (std::size_t t = 0; t < in.zr.size(); ++t) {
    zr.push_back(tape.constant(in.zr[t]));
    q.push_back({tape.constant(in.zr_mean[t]), tape.constant(in.zr_lv[t])});
  }
  const vae::Gaussian qs{tape.constant(in.zs_mean), tape.constant(in.zs_lv)};
  return ssl::mws_mi(tape.constant(in.zs), qs, zr, q, in.masks, n).value().item();
}

// Direct triple loop over the estimator definition.
double mws_oracle(const MwsInputs& in, std::size_t n) {
  const std::size_t m = in.zs.rows();
  double total = 0;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> joint, s, r;
    for (std::size_t j = 0; j < m; ++j) {
      double ls = 0, lr = 0;
      for (std::size_t d = 0; d < in.zs.cols(); ++d) ls += log_normal(in.zs(i, d), in.zs_mean(j, d), in.zs_lv(j, d));
      for (std::size_t t = 0; t < in.zr.size(); ++t) {
        if (in.masks[t](i, 0) == 0 || in.masks[t](j, 0) == 0) continue;
        for (std::size_t d = 0; d < in.zr[t].cols(); ++d)
          lr += log_normal(in.zr[t](i, d), in.zr_mean[t](j, d), in.zr_lv[t](j, d));
      }
      joint.push_back(ls + lr);
      s.push_back(ls);
      r.push_back(lr);
    }
    total += lse(joint) - lse(s) - lse(r) + std::log(static_cast<double>(n * m));
  }
  return total / m;
}

MwsInputs permuted(const MwsInputs& in, const std::vector<std::size_t>& perm) {
  auto rows = [&](const Tensor& t) {
    Tensor out = Tensor::zeros(t.rows(), t.cols());
    for (std::size_t i = 0; i < t.rows(); ++i)
      for (std::size_t c = 0; c < t.cols(); ++c) out(i, c) = t(perm[i], c);
    return out;
  };
  MwsInputs out;
  out.zs = rows(in.zs);
  out.zs_mean = rows(in.zs_mean);
  out.zs_lv = rows(in.zs_lv);
  for (std::size_t t = 0; t < in.zr.size(); ++t) {
    out.zr.push_back(rows(in.zr[t]));
    out.zr_mean.push_back(rows(in.zr_mean[t]));
    out.zr_lv.push_back(rows(in.zr_lv[t]));
    out.masks.push_back(rows(in.masks[t]));
  }
  return out;
}

}  // namespace

TEST(Mws, SingleTrajectoryGivesLogN) {
  num::Rng rng(13);
  for (std::size_t n : {1u, 7u, 1000u, 123456u}) {
    const auto in = random_mws(1, 4, rng);
    EXPECT_NEAR(run_mws(in, n), std::log(static_cast<double>(n)), 1e-9);
  }
}

TEST(Mws, MatchesDirectOracleAndPermutationInvariant) {
  num::Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const auto in = random_mws(5, 4, rng);
    const double got = run_mws(in, 500);
    EXPECT_NEAR(got, mws_oracle(in, 500), 1e-9);
    std::vector<std::size_t> perm{3, 0, 4, 1, 2};
    EXPECT_NEAR(run_mws(permuted(in, perm), 500), got, 1e-9);
  }
}

TEST(Mws, FiniteAcrossManyRandomBatches) {
  num::Rng rng(19);
  for (int trial = 0; trial < 1000; ++trial) {
    auto in = random_mws(2 + trial % 6, 1 + trial % 5, rng);
    // Widely separated latents push the pairwise densities far into the tails.
    for (double& x : in.zs.storage()) x *= 1 + trial % 50;
    EXPECT_TRUE(std::isfinite(run_mws(in, 2000))) << trial;
  }
}

namespace {

std::vector<data::Trajectory> objective_batch() {
  return {make_traj(0, {0, 2, 4, 6}), make_traj(1, {1, 3, 5}), make_traj(0, {8, 9, 0, 1, 2}),
          make_traj(2, {7, 5, 3})};
}

}  // namespace

TEST(Objective, DegenerateWeightsGivePureReconstruction) {
  Model m(small_dims(10), 3, 0.2);
  const auto pois = clustered_pois();
  const auto map = ssl::build_collective_map(pois);
  const auto batch = objective_batch();
  std::vector<const data::Trajectory*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  ssl::SSLConfig cfg;
  cfg.alpha = cfg.beta = cfg.gamma = 0;
  num::Tape tape;
  num::Rng rng(1);
  const auto terms = ssl::ssl_objective(tape, m.vae, m.table(tape), ptrs, map, 100, cfg, rng);
  EXPECT_DOUBLE_EQ(terms.loss.value().item(), -terms.recon.value().item());
  EXPECT_NEAR(terms.recon.value().item() * 4, terms.elbo.recon.value().item(), 1e-9);
}

TEST(Objective, ComponentsComposeAndCountersAdvance) {
  Model m(small_dims(10), 4, 0.2);
  const auto map = ssl::build_collective_map(clustered_pois());
  const auto batch = objective_batch();
  std::vector<const data::Trajectory*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  ssl::SSLConfig cfg;
  cfg.alpha = 0.7;
  cfg.beta = 1.3;
  cfg.gamma = 0.4;
  ssl::reset_call_counts();
  num::Tape tape;
  num::Rng rng(1);
  const auto t = ssl::ssl_objective(tape, m.vae, m.table(tape), ptrs, map, 100, cfg, rng);
  auto v = [](Var x) { return x.value().item(); };
  const double expected =
      -(v(t.recon) - 0.7 * (v(t.kl_s) + v(t.kl_r)) + 1.3 * (v(t.mi_zs) + v(t.mi_zr)) - 0.4 * v(t.mws));
  EXPECT_NEAR(v(t.loss), expected, 1e-10);
  EXPECT_LE(v(t.mi_zs), std::log(3.0));
  EXPECT_LE(v(t.mi_zr), std::log(3.0));
  EXPECT_TRUE(std::isfinite(v(t.mws)));
  const auto counts = ssl::call_counts();
  EXPECT_EQ(counts.objective, 1u);
  EXPECT_EQ(counts.augment, 8u);
  EXPECT_EQ(counts.nce, 4u);
  EXPECT_EQ(counts.mws, 1u);
}

TEST(Objective, SingleUserBatchFailsWithoutNegatives) {
  Model m(small_dims(10), 5, 0.2);
  const auto map = ssl::build_collective_map(clustered_pois());
  const auto a = make_traj(0, {1, 2, 3}), b = make_traj(0, {4, 5});
  std::vector<const data::Trajectory*> ptrs{&a, &b};
  num::Tape tape;
  num::Rng rng(1);
  EXPECT_THROW(ssl::ssl_objective(tape, m.vae, m.table(tape), ptrs, map, 10, {}, rng), ssl::NoNegatives);
}

TEST(Objective, GradientsMatchFiniteDifferencesWithContrastiveTerms) {
  const auto map = ssl::build_collective_map(clustered_pois());
  const auto batch = objective_batch();
  std::vector<const data::Trajectory*> ptrs;
  for (const auto& t : batch) ptrs.push_back(&t);
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    Model m(small_dims(10), 30 + seed, 0.3);
    ssl::SSLConfig cfg;
    cfg.gamma = 0.5;
    auto loss = [&](num::Tape& tape) {
      num::Rng rng(77);
      return ssl::ssl_objective(tape, m.vae, m.table(tape), ptrs, map, 50, cfg, rng).loss;
    };
    const auto r = ssdl::testing::check_gradients(m.params, loss, 1e-5, 6);
    EXPECT_GE(r.checked, 5u);
    EXPECT_LT(r.max_rel_error, 1e-3) << r.worst;
  }
}

TEST(Config, RejectsInvalidValues) {
  ssl::SSLConfig c;
  EXPECT_NO_THROW(c.validate());
  c.eta = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.gamma = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.replace_ratio = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.negatives = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
