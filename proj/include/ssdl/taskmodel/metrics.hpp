// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ssdl::task {

struct InstanceRank {
  std::size_t user = 0;
  std::size_t session = 0;
  std::size_t rank = 0;  // 1-based
};

/**
 * Ranking metrics for single-target prediction. AUC is the normalised rank
 * (|L| - rank) / (|L| - 1) and MAP reduces to the mean reciprocal rank.
 */
struct EvalReport {
  double acc1 = 0.0;
  double acc5 = 0.0;
  double acc10 = 0.0;
  double auc = 0.0;
  double map = 0.0;
  std::size_t instances = 0;
  std::size_t num_pois = 0;
  std::vector<InstanceRank> ranks;
};

/// 1 + #{scores above the truth} + #{equal scores at a lower index}.
std::size_t rank_of(std::span<const double> scores, std::size_t truth);
double rank_auc(std::size_t rank, std::size_t num_pois);

/// Throws std::invalid_argument on an empty instance list.
EvalReport summarize(std::vector<InstanceRank> ranks, std::size_t num_pois);

std::string metrics_json(const EvalReport& report);
void write_metrics(const EvalReport& report, const std::filesystem::path& path);
void write_ranks(const EvalReport& report, const std::filesystem::path& path);

}  // namespace ssdl::task
