// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ssdl/dataio/corpus.hpp"

namespace ssdl::data {

/// Users carry a fixed habit vector; POIs carry a feature vector. A walk from
/// POI p to q has logit (habit_u . feature_q + base_pq) / temperature, where the
/// base transition logits are shared by all users.
struct SyntheticSpec {
  std::size_t users = 8;
  std::size_t pois = 40;
  std::size_t categories = 5;
  std::size_t habit_dim = 16;
  double temperature = 1.5;
  std::size_t trajectories_per_user = 20;
  std::uint64_t seed = 1;

  std::size_t min_length = 6;
  std::size_t max_length = 10;
  /// Scale of the user-independent transition logits.
  double base_scale = 2.0;
  /// 0 means one cluster per user; otherwise users share cluster habits plus noise.
  std::size_t habit_clusters = 0;
  double cluster_noise = 0.1;
  double center_lat = 35.68;
  double center_lon = 139.76;
  double extent_km = 3.0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct SyntheticCorpus {
  std::vector<CheckIn> checkins;
  Corpus corpus;
  /// Ground-truth habit cluster, indexed like corpus.users.
  std::vector<int> labels;
};

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec);

/// Reads "key = value" lines for the fields of SyntheticSpec; '#' starts a comment.
SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

void save_labels(const std::filesystem::path& path, const std::vector<std::string>& users, const std::vector<int>& labels);
std::map<std::string, int> load_labels(const std::filesystem::path& path);

}  // namespace ssdl::data
