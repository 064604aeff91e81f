// SPDX-License-Identifier: Apache-2.0
#include "ssdl/dataio/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include "ssdl/dataio/keyvalue.hpp"

namespace ssdl::data {

namespace {

constexpr double kKmPerDegree = 111.195;
// Monday 2012-04-02T00:00Z.
constexpr Timestamp kEpochMonday = 1333324800;

std::size_t sample_logits(const std::vector<double>& logits, double temperature, std::mt19937_64& rng) {
  if (temperature <= 0.0) return static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> w(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    w[i] = std::exp((logits[i] - mx) / temperature);
    total += w[i];
  }
  double r = std::uniform_real_distribution<double>(0.0, total)(rng);
  for (std::size_t i = 0; i < w.size(); ++i) {
    r -= w[i];
    if (r < 0.0) return i;
  }
  return w.size() - 1;
}

std::string padded(char prefix, std::size_t i, std::size_t n) {
  const std::size_t width = std::to_string(n > 0 ? n - 1 : 0).size();
  std::string s = std::to_string(i);
  return std::string(1, prefix) + std::string(width - s.size(), '0') + s;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto need = [](bool ok, const char* field) {
    if (!ok) throw std::invalid_argument(std::string("synthetic spec: invalid ") + field);
  };
  need(users > 0, "users");
  need(pois > 1, "pois");
  need(categories > 0, "categories");
  need(habit_dim > 0, "habit_dim");
  need(temperature >= 0.0, "temperature");
  need(trajectories_per_user > 0, "trajectories_per_user");
  need(min_length > 0 && min_length <= max_length, "min_length/max_length");
  // Visits are at most 90 minutes apart, so one session must fit in a day.
  need(max_length <= 16, "max_length");
  need(extent_km > 0.0, "extent_km");
}

SyntheticCorpus gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t L = spec.pois, H = spec.habit_dim;
  std::vector<std::vector<double>> feature(L, std::vector<double>(H));
  for (auto& f : feature)
    for (double& x : f) x = normal(rng);
  std::vector<std::vector<double>> base(L, std::vector<double>(L));
  for (auto& row : base)
    for (double& x : row) x = spec.base_scale * normal(rng);

  const std::size_t clusters = spec.habit_clusters == 0 ? spec.users : spec.habit_clusters;
  std::vector<std::vector<double>> centroid(clusters, std::vector<double>(H));
  for (auto& c : centroid)
    for (double& x : c) x = normal(rng);
  std::vector<int> user_label(spec.users);
  std::vector<std::vector<double>> habit(spec.users, std::vector<double>(H));
  for (std::size_t u = 0; u < spec.users; ++u) {
    user_label[u] = static_cast<int>(spec.habit_clusters == 0 ? u : u % clusters);
    for (std::size_t k = 0; k < H; ++k)
      habit[u][k] = centroid[user_label[u]][k] + (spec.habit_clusters == 0 ? 0.0 : spec.cluster_noise * normal(rng));
  }

  const double lat_span = spec.extent_km / kKmPerDegree;
  const double lon_span = spec.extent_km / (kKmPerDegree * std::cos(spec.center_lat * M_PI / 180.0));
  std::vector<Poi> pois(L);
  for (std::size_t p = 0; p < L; ++p) {
    pois[p].id = padded('p', p, L);
    pois[p].latitude = spec.center_lat + (unit(rng) - 0.5) * lat_span;
    pois[p].longitude = spec.center_lon + (unit(rng) - 0.5) * lon_span;
    pois[p].category = static_cast<std::size_t>(rng() % spec.categories);
  }

  SyntheticCorpus out;
  for (std::size_t u = 0; u < spec.users; ++u) {
    std::vector<double> preference(L);
    for (std::size_t q = 0; q < L; ++q) {
      double dot = 0.0;
      for (std::size_t k = 0; k < H; ++k) dot += habit[u][k] * feature[q][k];
      preference[q] = dot;
    }
    for (std::size_t k = 0; k < spec.trajectories_per_user; ++k) {
      const std::size_t span = spec.max_length - spec.min_length + 1;
      const std::size_t len = spec.min_length + static_cast<std::size_t>(rng() % span);
      Timestamp t = kEpochMonday + static_cast<Timestamp>(2 * k) * 86400 + (8 + static_cast<Timestamp>(rng() % 4)) * 3600;
      std::size_t p = sample_logits(preference, spec.temperature, rng);
      for (std::size_t step = 0; step < len; ++step) {
        if (step > 0) {
          std::vector<double> logits(L);
          for (std::size_t q = 0; q < L; ++q) logits[q] = preference[q] + base[p][q];
          logits[p] = -std::numeric_limits<double>::infinity();
          p = sample_logits(logits, spec.temperature, rng);
          t += 1800 + static_cast<Timestamp>(rng() % 3601);
        }
        CheckIn c;
        c.user_id = padded('u', u, spec.users);
        c.poi_id = pois[p].id;
        c.category = padded('c', pois[p].category, spec.categories);
        c.latitude = pois[p].latitude;
        c.longitude = pois[p].longitude;
        c.timestamp = t;
        out.checkins.push_back(std::move(c));
      }
    }
  }

  PreprocessOptions keep_all;
  keep_all.min_poi_freq = 1;
  keep_all.min_user_checkins = 1;
  out.corpus = preprocess(out.checkins, keep_all);
  // User ids are zero-padded, so sorted corpus order equals generation order.
  out.labels = user_label;
  return out;
}

SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  const KeyValues kv = KeyValues::load(path);
  SyntheticSpec s;
  s.users = kv.get("users", s.users);
  s.pois = kv.get("pois", s.pois);
  s.categories = kv.get("categories", s.categories);
  s.habit_dim = kv.get("habit_dim", s.habit_dim);
  s.temperature = kv.get("temperature", s.temperature);
  s.trajectories_per_user = kv.get("trajectories_per_user", s.trajectories_per_user);
  s.seed = static_cast<std::uint64_t>(kv.get("seed", static_cast<std::int64_t>(s.seed)));
  s.min_length = kv.get("min_length", s.min_length);
  s.max_length = kv.get("max_length", s.max_length);
  s.base_scale = kv.get("base_scale", s.base_scale);
  s.habit_clusters = kv.get("habit_clusters", s.habit_clusters);
  s.cluster_noise = kv.get("cluster_noise", s.cluster_noise);
  s.center_lat = kv.get("center_lat", s.center_lat);
  s.center_lon = kv.get("center_lon", s.center_lon);
  s.extent_km = kv.get("extent_km", s.extent_km);
  kv.reject_unknown();
  s.validate();
  return s;
}

void save_labels(const std::filesystem::path& path, const std::vector<std::string>& users, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user_id\tlabel\n";
  for (std::size_t u = 0; u < users.size(); ++u) out << users[u] << '\t' << labels.at(u) << '\n';
}

std::map<std::string, int> load_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open labels " + path.string());
  std::map<std::string, int> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("labels: bad row '" + line + "'");
    out[line.substr(0, tab)] = std::stoi(line.substr(tab + 1));
  }
  return out;
}

}  // namespace ssdl::data
