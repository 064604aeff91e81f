// SPDX-License-Identifier: Apache-2.0
#include "ssdl/dataio/checkin.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace ssdl::data {

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size();
}

bool parse_double(std::string_view s, double& out) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(out);
}

// Splits one CSV record; double quotes group fields and "" escapes a quote.
std::vector<std::string> split_record(std::string_view line, char delim) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string quote_if_needed(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::optional<Timestamp> parse_timestamp(std::string_view s) {
  // YYYY-MM-DD
  if (s.size() < 16 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':') return std::nullopt;
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!parse_int(s.substr(0, 4), year) || !parse_int(s.substr(5, 2), month) || !parse_int(s.substr(8, 2), day) ||
      !parse_int(s.substr(11, 2), hour) || !parse_int(s.substr(14, 2), minute)) {
    return std::nullopt;
  }
  std::size_t pos = 16;
  if (pos < s.size() && s[pos] == ':') {
    if (pos + 3 > s.size() || !parse_int(s.substr(pos + 1, 2), second)) return std::nullopt;
    pos += 3;
    if (pos < s.size() && s[pos] == '.') {
      ++pos;
      while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) ++pos;
    }
  }
  int offset_seconds = 0;
  if (pos < s.size()) {
    const char z = s[pos];
    if (z == 'Z' && pos + 1 == s.size()) {
      // UTC
    } else if ((z == '+' || z == '-') && (s.size() - pos == 6 || s.size() - pos == 5)) {
      int oh = 0, om = 0;
      const bool colon = s.size() - pos == 6;
      if (!parse_int(s.substr(pos + 1, 2), oh) || (colon && s[pos + 3] != ':') ||
          !parse_int(s.substr(pos + (colon ? 4 : 3), 2), om)) {
        return std::nullopt;
      }
      offset_seconds = (z == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    } else {
      return std::nullopt;
    }
  }
  if (hour > 23 || minute > 59 || second > 60) return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                           std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok()) return std::nullopt;
  const auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Timestamp>(days) * 86400 + hour * 3600 + minute * 60 + second - offset_seconds;
}

std::string format_timestamp(Timestamp ts) {
  using namespace std::chrono;
  const auto day_count = static_cast<long>(std::floor(static_cast<double>(ts) / 86400.0));
  const year_month_day ymd{sys_days{days{day_count}}};
  const Timestamp rem = ts - static_cast<Timestamp>(day_count) * 86400;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), static_cast<int>(rem / 3600),
                static_cast<int>(rem % 3600 / 60), static_cast<int>(rem % 60));
  return buf;
}

int time_bin(Timestamp ts) {
  using namespace std::chrono;
  Timestamp day_count = ts / 86400;
  Timestamp rem = ts % 86400;
  if (rem < 0) {
    rem += 86400;
    --day_count;
  }
  const weekday wd{sys_days{days{day_count}}};
  const int hour = static_cast<int>(rem / 3600);
  const bool weekend = wd == Saturday || wd == Sunday;
  return weekend ? 24 + hour : hour;
}

std::vector<CheckIn> parse_checkins(std::istream& in, const CsvFormat& format, LoadReport* report) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = LoadReport{};

  std::string line;
  if (!std::getline(in, line)) throw DataError("check-in file is empty");
  strip_cr(line);
  const auto header = split_record(line, format.delimiter);
  std::map<std::string, std::size_t> where;
  for (std::size_t i = 0; i < header.size(); ++i) where[header[i]] = i;
  std::vector<std::size_t> col;
  for (const auto& name : format.columns) {
    auto it = where.find(name);
    if (it == where.end()) throw DataError("check-in header lacks column '" + name + "'");
    col.push_back(it->second);
  }

  std::vector<CheckIn> out;
  std::size_t line_no = 1;
  auto bad = [&](const std::string& why) {
    ++rep.malformed;
    if (rep.problems.size() < 20) rep.problems.push_back("line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    ++rep.rows;
    const auto f = split_record(line, format.delimiter);
    if (f.size() < header.size()) {
      bad("expected " + std::to_string(header.size()) + " fields, got " + std::to_string(f.size()));
      continue;
    }
    CheckIn c;
    c.user_id = f[col[0]];
    c.poi_id = f[col[1]];
    c.category = f[col[2]];
    if (c.user_id.empty() || c.poi_id.empty()) {
      bad("empty user or POI id");
      continue;
    }
    if (!parse_double(f[col[3]], c.latitude) || !parse_double(f[col[4]], c.longitude)) {
      bad("unparseable coordinate");
      continue;
    }
    if (std::abs(c.latitude) > 90.0 || std::abs(c.longitude) > 180.0) {
      bad("coordinate out of range");
      continue;
    }
    auto ts = parse_timestamp(f[col[5]]);
    if (!ts) {
      bad("unparseable timestamp '" + f[col[5]] + "'");
      continue;
    }
    c.timestamp = *ts;
    out.push_back(std::move(c));
  }
  rep.loaded = out.size();
  if (rep.rows > 0 && static_cast<double>(rep.malformed) > format.max_malformed_fraction * static_cast<double>(rep.rows)) {
    throw DataError(std::to_string(rep.malformed) + " of " + std::to_string(rep.rows) +
                    " rows malformed; first: " + (rep.problems.empty() ? "" : rep.problems.front()));
  }
  return out;
}

std::vector<CheckIn> load_checkins(const std::filesystem::path& path, const CsvFormat& format, LoadReport* report) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open check-in file " + path.string());
  return parse_checkins(in, format, report);
}

void write_checkins(const std::filesystem::path& path, const std::vector<CheckIn>& checkins) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << "user_id,poi_id,category,lat,lon,timestamp\n";
  char buf[64];
  for (const auto& c : checkins) {
    out << quote_if_needed(c.user_id) << ',' << quote_if_needed(c.poi_id) << ',' << quote_if_needed(c.category) << ',';
    auto r = std::to_chars(buf, buf + sizeof buf, c.latitude);
    out.write(buf, r.ptr - buf) << ',';
    r = std::to_chars(buf, buf + sizeof buf, c.longitude);
    out.write(buf, r.ptr - buf) << ',' << format_timestamp(c.timestamp) << '\n';
  }
}

}  // namespace ssdl::data
