// SPDX-License-Identifier: Apache-2.0
#include "ssdl/pipeline/probe.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace ssdl::pipeline {

namespace {

using Matrix = Eigen::MatrixXd;

Matrix to_eigen(const num::Tensor& t) {
  Matrix m(t.rows(), t.cols());
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m(r, c) = t(r, c);
  return m;
}

// Columns centred and scaled by statistics of `fit_rows`; constant columns become zero.
void standardize(Matrix& x, const std::vector<std::size_t>& fit_rows) {
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    double mean = 0;
    for (std::size_t r : fit_rows) mean += x(r, c);
    mean /= static_cast<double>(fit_rows.size());
    double var = 0;
    for (std::size_t r : fit_rows) var += (x(r, c) - mean) * (x(r, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(fit_rows.size()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) x(r, c) = sd > 1e-12 ? (x(r, c) - mean) / sd : 0.0;
  }
}

std::size_t count_classes(std::span<const std::size_t> labels) {
  return std::set<std::size_t>(labels.begin(), labels.end()).size();
}

}  // namespace

std::string ProbeReport::to_json() const {
  nlohmann::ordered_json j;
  j["probe_acc_zs"] = acc_zs;
  j["probe_acc_zr"] = acc_zr;
  j["silhouette_zs"] = silhouette_zs;
  j["silhouette_zr"] = silhouette_zr;
  j["chance"] = chance;
  j["samples"] = samples;
  j["classes"] = classes;
  return j.dump(2) + "\n";
}

double ridge_probe_accuracy(const num::Tensor& features, std::span<const std::size_t> labels, std::size_t folds,
                            double lambda, std::uint64_t seed) {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw std::invalid_argument("probe: one label per row expected");
  if (count_classes(labels) < 2) throw std::invalid_argument("probe: at least two classes are needed");
  if (folds < 2 || folds > n) throw std::invalid_argument("probe: fold count must lie in [2, rows]");
  const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  num::Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::size_t> fold_of(n);
  for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = k % folds;

  std::size_t correct = 0;
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold_of[i] == f ? test : train).push_back(i);
    Matrix x = to_eigen(features);
    standardize(x, train);
    const Eigen::Index k = x.cols() + 1;
    Matrix xt(static_cast<Eigen::Index>(train.size()), k);
    Matrix y = Matrix::Zero(static_cast<Eigen::Index>(train.size()), static_cast<Eigen::Index>(classes));
    for (std::size_t r = 0; r < train.size(); ++r) {
      xt.row(static_cast<Eigen::Index>(r)) << x.row(static_cast<Eigen::Index>(train[r])), 1.0;
      y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(labels[train[r]])) = 1.0;
    }
    Matrix gram = xt.transpose() * xt;
    for (Eigen::Index d = 0; d + 1 < k; ++d) gram(d, d) += lambda;  // bias left unpenalised
    gram(k - 1, k - 1) += 1e-9;
    const Matrix w = gram.ldlt().solve(xt.transpose() * y);
    for (std::size_t i : test) {
      Eigen::RowVectorXd row(k);
      row << x.row(static_cast<Eigen::Index>(i)), 1.0;
      const Eigen::RowVectorXd scores = row * w;
      Eigen::Index best = 0;
      for (Eigen::Index c = 1; c < scores.size(); ++c)
        if (scores(c) > scores(best)) best = c;
      correct += static_cast<std::size_t>(best) == labels[i];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(n);
}

double silhouette(const num::Tensor& features, std::span<const std::size_t> labels) {
  const std::size_t n = features.rows();
  if (labels.size() != n) throw std::invalid_argument("silhouette: one label per row expected");
  if (count_classes(labels) < 2) throw std::invalid_argument("silhouette: at least two clusters are needed");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Matrix x = to_eigen(features);
  standardize(x, all);

  std::map<std::size_t, std::size_t> size;
  for (std::size_t l : labels) ++size[l];
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (size[labels[i]] == 1) continue;
    std::map<std::size_t, double> dist;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dist[labels[j]] += (x.row(static_cast<Eigen::Index>(i)) - x.row(static_cast<Eigen::Index>(j))).norm();
    const double a = dist[labels[i]] / static_cast<double>(size[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, d] : dist)
      if (label != labels[i]) b = std::min(b, d / static_cast<double>(size[label]));
    const double denom = std::max(a, b);
    if (denom > 0) total += (b - a) / denom;
  }
  return total / static_cast<double>(n);
}

ProbeReport probe_embeddings(const Embeddings& e, std::span<const std::size_t> labels, std::uint64_t seed) {
  ProbeReport r;
  r.samples = labels.size();
  r.classes = count_classes(labels);
  if (r.classes < 2) throw std::invalid_argument("probe needs at least two users");
  std::map<std::size_t, std::size_t> freq;
  for (std::size_t l : labels) ++freq[l];
  std::size_t most = 0;
  for (const auto& [l, c] : freq) most = std::max(most, c);
  r.chance = static_cast<double>(most) / static_cast<double>(labels.size());
  r.acc_zs = ridge_probe_accuracy(e.zs, labels, 5, 1.0, seed);
  r.acc_zr = ridge_probe_accuracy(e.zr, labels, 5, 1.0, seed);
  r.silhouette_zs = silhouette(e.zs, labels);
  r.silhouette_zr = silhouette(e.zr, labels);
  return r;
}

ProbeReport run_probe(const Model& model, const data::Corpus& corpus, std::uint64_t seed) {
  std::vector<std::size_t> idx(corpus.trajectories.size()), labels;
  std::iota(idx.begin(), idx.end(), 0);
  for (const auto& t : corpus.trajectories) labels.push_back(t.user);
  return probe_embeddings(embed_trajectories(model, corpus, idx), labels, seed);
}

}  // namespace ssdl::pipeline
