// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "ssdl/dataio/keyvalue.hpp"
#include "ssdl/ssl/objective.hpp"

namespace ssdl::pipeline {

/// Model variants: the full model and the three ablations.
enum class Variant { Full, Base, NoGraph, NoMi };

const char* variant_name(Variant v);
/// Accepts "full", "base", "no_graph" and "no_mi"; throws std::invalid_argument otherwise.
Variant parse_variant(const std::string& name);

struct ModelDims {
  std::size_t embed = 256;
  std::size_t z_s = 256;
  std::size_t z_r = 32;
  std::size_t prior_hidden = 64;
  std::size_t attention = 300;
  std::size_t history_cap = 128;
};

struct RunConfig {
  std::filesystem::path corpus;
  /// Prebuilt graph directory; the graph is rebuilt from the corpus when empty.
  std::filesystem::path graph;
  std::filesystem::path out = "run";
  std::optional<std::uint64_t> seed;
  Variant variant = Variant::Full;
  ModelDims dims;
  double delta_g_km = 3.0;

  std::size_t pretrain_epochs = 100;
  double pretrain_lr = 0.01;
  /// Stop phase 1 once the loss changes by less than this relative amount for 10 epochs; 0 disables.
  double plateau_tol = 0.0;
  std::size_t task_epochs = 100;
  double task_lr = 5e-4;
  std::size_t batch_size = 32;
  double dropout = 0.5;
  bool freeze_pretrained = false;
  ssl::SSLConfig ssl;

  /// Graph embeddings feed the contextual table; false means a free learned table.
  bool uses_graph() const { return variant == Variant::Full || variant == Variant::NoMi; }
  /// Contrastive and MWS terms active in phase 1.
  bool uses_mi() const { return variant == Variant::Full || variant == Variant::NoGraph; }
  /// SSL weights after applying the variant.
  ssl::SSLConfig effective_ssl() const;

  std::uint64_t require_seed() const;
  void validate() const;

  /// Reads every field from a key-value file and rejects unknown keys.
  static RunConfig from(const data::KeyValues& kv);
  static RunConfig load(const std::filesystem::path& path);
  /// Inverse of from(); round-trips through KeyValues::parse.
  std::string to_text() const;
};

/// Seed for one epoch of one phase, mixed from the run seed.
std::uint64_t epoch_seed(std::uint64_t seed, std::uint64_t phase, std::uint64_t epoch);

}  // namespace ssdl::pipeline
