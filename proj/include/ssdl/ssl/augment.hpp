// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ssdl/dataio/corpus.hpp"
#include "ssdl/numcore/params.hpp"

namespace ssdl::ssl {

/// Same-category POIs within a radius; irreflexive and symmetric.
struct CollectiveMap {
  std::vector<std::vector<std::size_t>> members;
  double radius_km = 0.3;

  const std::vector<std::size_t>& of(std::size_t poi) const { return members.at(poi); }
};

CollectiveMap build_collective_map(const std::vector<data::Poi>& pois, double radius_km = 0.3);

/// Uniform random permutation applied jointly to POIs, time bins and timestamps.
data::Trajectory augment_shuffle(const data::Trajectory& t, num::Rng& rng);

/// Number of positions the collective augmentation replaces: round(n * ratio).
std::size_t collective_positions(std::size_t length, double ratio);

/**
 * Picks round(n * ratio) distinct positions uniformly and swaps each POI for a
 * uniform member of its collective list; POIs with an empty list stay put.
 * Time bins are untouched.
 */
data::Trajectory augment_collective(const data::Trajectory& t, const CollectiveMap& map, double ratio,
                                    num::Rng& rng);

}  // namespace ssdl::ssl
