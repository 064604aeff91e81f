// SPDX-License-Identifier: Apache-2.0
#include "ssdl/taskmodel/metrics.hpp"

#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace ssdl::task {

std::size_t rank_of(std::span<const double> scores, std::size_t truth) {
  if (truth >= scores.size()) throw std::out_of_range("rank_of: truth index outside scores");
  const double s = scores[truth];
  std::size_t rank = 1;
  for (std::size_t j = 0; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && j < truth)) ++rank;
  }
  return rank;
}

double rank_auc(std::size_t rank, std::size_t num_pois) {
  if (num_pois < 2) throw std::invalid_argument("rank_auc: need at least two POIs");
  return static_cast<double>(num_pois - rank) / static_cast<double>(num_pois - 1);
}

EvalReport summarize(std::vector<InstanceRank> ranks, std::size_t num_pois) {
  if (ranks.empty()) throw std::invalid_argument("evaluation has no test instances");
  EvalReport r;
  r.num_pois = num_pois;
  r.instances = ranks.size();
  for (const auto& x : ranks) {
    if (x.rank < 1 || x.rank > num_pois) throw std::out_of_range("rank outside [1, |L|]");
    r.acc1 += x.rank <= 1;
    r.acc5 += x.rank <= 5;
    r.acc10 += x.rank <= 10;
    r.auc += rank_auc(x.rank, num_pois);
    r.map += 1.0 / static_cast<double>(x.rank);
  }
  const double n = static_cast<double>(ranks.size());
  r.acc1 /= n;
  r.acc5 /= n;
  r.acc10 /= n;
  r.auc /= n;
  r.map /= n;
  r.ranks = std::move(ranks);
  return r;
}

std::string metrics_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["acc@1"] = report.acc1;
  j["acc@5"] = report.acc5;
  j["acc@10"] = report.acc10;
  j["auc"] = report.auc;
  j["map"] = report.map;
  j["instances"] = report.instances;
  j["num_pois"] = report.num_pois;
  return j.dump(2) + "\n";
}

void write_metrics(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << metrics_json(report);
}

void write_ranks(const EvalReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "user\tsession\trank\n";
  for (const auto& r : report.ranks) out << r.user << '\t' << r.session << '\t' << r.rank << '\n';
}

}  // namespace ssdl::task
