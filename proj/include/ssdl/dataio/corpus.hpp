// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ssdl/dataio/checkin.hpp"

namespace ssdl::data {

enum class Split { Train, Test };

const char* split_name(Split s);

struct Poi {
  std::string id;
  double latitude = 0.0;
  double longitude = 0.0;
  std::size_t category = 0;
};

/// One session of a single user.
struct Trajectory {
  std::size_t user = 0;
  /// Session ordinal within the user, starting at 0.
  std::size_t session = 0;
  Split split = Split::Train;
  std::vector<std::size_t> pois;
  std::vector<int> bins;
  std::vector<Timestamp> times;

  std::size_t length() const { return pois.size(); }
};

struct Corpus {
  std::vector<Poi> pois;
  std::vector<std::string> categories;
  std::vector<std::string> users;
  /// Grouped by user, chronological within a user.
  std::vector<Trajectory> trajectories;

  std::size_t num_pois() const { return pois.size(); }
  std::size_t num_categories() const { return categories.size(); }
  std::size_t num_users() const { return users.size(); }

  std::vector<std::size_t> indices(Split s) const;
  /// Indices of the trajectories of `user`, in session order.
  std::vector<std::size_t> sessions_of(std::size_t user) const;
  /// The user's check-ins (POI indices) from all sessions before `trajectory`, keeping at most `cap` most recent.
  std::vector<std::size_t> history_before(std::size_t trajectory, std::size_t cap) const;
  /// All of a user's check-ins flattened in order.
  std::vector<std::size_t> flattened(std::size_t user) const;

  /// Throws DataError describing the first violated structural invariant.
  void validate() const;
};

struct PreprocessOptions {
  std::size_t min_poi_freq = 8;
  /// Users left with fewer check-ins are dropped in the same fixed-point loop.
  std::size_t min_user_checkins = 2;
  Timestamp session_gap = 24 * 3600;
  double train_ratio = 0.8;
};

struct PreprocessReport {
  std::size_t input_checkins = 0;
  std::size_t kept_checkins = 0;
  std::size_t filter_passes = 0;
  std::size_t dropped_pois = 0;
  std::size_t dropped_users = 0;
};

/// Filters, sessionizes and splits; POI, category and user vocabularies are sorted by id.
Corpus preprocess(const std::vector<CheckIn>& checkins, const PreprocessOptions& options = {},
                  PreprocessReport* report = nullptr);

/// Per-user chronological split; users with fewer than two sessions go entirely to train.
void split(Corpus& corpus, double ratio = 0.8);

/// Number of leading sessions assigned to train for a user with `sessions` sessions.
std::size_t train_sessions(std::size_t sessions, double ratio);

/// Writes vocab.tsv, categories.tsv and trajectories.jsonl into `dir`.
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);
Corpus load_corpus(const std::filesystem::path& dir);

/// FNV-1a 64 over a canonical serialization, as 16 hex digits.
std::string corpus_hash(const Corpus& corpus);

}  // namespace ssdl::data
