// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ssdl::data {

/// Unrecoverable problem with input data (missing file, too many bad rows, empty corpus).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

struct CheckIn {
  std::string user_id;
  std::string poi_id;
  std::string category;
  double latitude = 0.0;
  double longitude = 0.0;
  Timestamp timestamp = 0;
};

struct CsvFormat {
  char delimiter = ',';
  /// Required header columns; extra columns are ignored.
  std::vector<std::string> columns{"user_id", "poi_id", "category", "lat", "lon", "timestamp"};
  /// Above this fraction of malformed rows the load fails outright.
  double max_malformed_fraction = 0.10;
};

struct LoadReport {
  std::size_t rows = 0;
  std::size_t loaded = 0;
  std::size_t malformed = 0;
  /// First few problems, "line N: reason".
  std::vector<std::string> problems;
};

/// Parses "YYYY-MM-DDTHH:MM[:SS[.fff]][Z|+HH:MM|-HH:MM]" (space separator accepted).
std::optional<Timestamp> parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

/// Weekday hours map to 0..23, weekend hours to 24..47, decided in UTC.
int time_bin(Timestamp ts);
inline constexpr int kTimeBins = 48;

std::vector<CheckIn> parse_checkins(std::istream& in, const CsvFormat& format = {}, LoadReport* report = nullptr);
std::vector<CheckIn> load_checkins(const std::filesystem::path& path, const CsvFormat& format = {},
                                   LoadReport* report = nullptr);
void write_checkins(const std::filesystem::path& path, const std::vector<CheckIn>& checkins);

}  // namespace ssdl::data
