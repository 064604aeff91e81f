// SPDX-License-Identifier: Apache-2.0
#include "ssdl/ssl/augment.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ssdl/pgraph/graph.hpp"
#include "ssdl/ssl/counters.hpp"

namespace ssdl::ssl {

namespace {

// Uniform integer in [0, n) by rejection, independent of the standard library's distribution choices.
std::size_t uniform_index(std::size_t n, num::Rng& rng) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % n);
}

}  // namespace

CollectiveMap build_collective_map(const std::vector<data::Poi>& pois, double radius_km) {
  CollectiveMap map;
  map.radius_km = radius_km;
  map.members.assign(pois.size(), {});
  for (std::size_t i = 0; i < pois.size(); ++i) {
    for (std::size_t j = i + 1; j < pois.size(); ++j) {
      if (pois[i].category != pois[j].category) continue;
      if (graph::haversine_km(pois[i].latitude, pois[i].longitude, pois[j].latitude, pois[j].longitude) <= radius_km) {
        map.members[i].push_back(j);
        map.members[j].push_back(i);
      }
    }
  }
  return map;
}

data::Trajectory augment_shuffle(const data::Trajectory& t, num::Rng& rng) {
  ++detail::counters().augment;
  if (t.pois.empty()) throw std::invalid_argument("augment_shuffle: empty trajectory");
  std::vector<std::size_t> order(t.length());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(i, rng)]);
  data::Trajectory out = t;
  for (std::size_t k = 0; k < order.size(); ++k) {
    out.pois[k] = t.pois[order[k]];
    out.bins[k] = t.bins[order[k]];
    if (!t.times.empty()) out.times[k] = t.times[order[k]];
  }
  return out;
}

std::size_t collective_positions(std::size_t length, double ratio) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("replace ratio must lie in [0, 1]");
  return static_cast<std::size_t>(std::round(static_cast<double>(length) * ratio));
}

data::Trajectory augment_collective(const data::Trajectory& t, const CollectiveMap& map, double ratio,
                                    num::Rng& rng) {
  ++detail::counters().augment;
  const std::size_t k = collective_positions(t.length(), ratio);
  std::vector<std::size_t> positions(t.length());
  std::iota(positions.begin(), positions.end(), 0);
  // Partial Fisher-Yates: the first k entries are a uniform sample without replacement.
  for (std::size_t i = 0; i < k; ++i) std::swap(positions[i], positions[i + uniform_index(positions.size() - i, rng)]);
  data::Trajectory out = t;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t pos = positions[i];
    const auto& list = map.of(t.pois[pos]);
    if (!list.empty()) out.pois[pos] = list[uniform_index(list.size(), rng)];
  }
  return out;
}

}  // namespace ssdl::ssl
