// SPDX-License-Identifier: Apache-2.0
#include "ssdl/dataio/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

namespace ssdl::data {

const char* split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::vector<std::size_t> Corpus::indices(Split s) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    if (trajectories[i].split == s) out.push_back(i);
  return out;
}

std::vector<std::size_t> Corpus::sessions_of(std::size_t user) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    if (trajectories[i].user == user) out.push_back(i);
  return out;
}

std::vector<std::size_t> Corpus::history_before(std::size_t trajectory, std::size_t cap) const {
  const Trajectory& target = trajectories.at(trajectory);
  std::vector<std::size_t> out;
  for (const Trajectory& t : trajectories) {
    if (t.user != target.user || t.session >= target.session) continue;
    out.insert(out.end(), t.pois.begin(), t.pois.end());
  }
  if (out.size() > cap) out.erase(out.begin(), out.end() - static_cast<std::ptrdiff_t>(cap));
  return out;
}

std::vector<std::size_t> Corpus::flattened(std::size_t user) const {
  std::vector<std::size_t> out;
  for (const Trajectory& t : trajectories)
    if (t.user == user) out.insert(out.end(), t.pois.begin(), t.pois.end());
  return out;
}

void Corpus::validate() const {
  auto fail = [](const std::string& what) { throw DataError("corpus invariant violated: " + what); };
  for (std::size_t p = 0; p < pois.size(); ++p)
    if (pois[p].category >= categories.size()) fail("POI " + pois[p].id + " has category out of range");
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const Trajectory& t = trajectories[i];
    const std::string where = "trajectory " + std::to_string(i);
    if (t.pois.empty()) fail(where + " is empty");
    if (t.bins.size() != t.pois.size()) fail(where + " has mismatched time bins");
    if (!t.times.empty() && t.times.size() != t.pois.size()) fail(where + " has mismatched timestamps");
    if (t.user >= users.size()) fail(where + " has user out of range");
    for (std::size_t k = 0; k < t.pois.size(); ++k) {
      if (t.pois[k] >= pois.size()) fail(where + " has POI out of range");
      if (t.bins[k] < 0 || t.bins[k] >= kTimeBins) fail(where + " has time bin out of range");
      if (k > 0 && !t.times.empty() && t.times[k] < t.times[k - 1]) fail(where + " is not chronological");
    }
    if (i > 0) {
      const Trajectory& prev = trajectories[i - 1];
      if (prev.user > t.user) fail("trajectories not grouped by user");
      if (prev.user == t.user) {
        if (prev.session + 1 != t.session) fail(where + " session ordinal out of order");
        if (prev.split == Split::Test && t.split == Split::Train) fail(where + " trains after a test session");
      }
    }
  }
}

std::size_t train_sessions(std::size_t sessions, double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw std::invalid_argument("split ratio must lie in (0, 1)");
  if (sessions < 2) return sessions;
  // Guard against ratio*m landing a hair above an integer.
  const double exact = ratio * static_cast<double>(sessions);
  const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::min(sessions, k);
}

void split(Corpus& corpus, double ratio) {
  std::map<std::size_t, std::size_t> count;
  for (const Trajectory& t : corpus.trajectories) ++count[t.user];
  for (Trajectory& t : corpus.trajectories)
    t.split = t.session < train_sessions(count[t.user], ratio) ? Split::Train : Split::Test;
}

Corpus preprocess(const std::vector<CheckIn>& checkins, const PreprocessOptions& options, PreprocessReport* report) {
  if (checkins.empty()) throw DataError("preprocess: no check-ins");
  PreprocessReport rep;
  rep.input_checkins = checkins.size();

  std::vector<char> alive(checkins.size(), 1);
  std::set<std::string> dropped_pois, dropped_users;
  for (bool changed = true; changed;) {
    changed = false;
    ++rep.filter_passes;
    std::unordered_map<std::string, std::size_t> poi_count, user_count;
    for (std::size_t i = 0; i < checkins.size(); ++i)
      if (alive[i]) ++poi_count[checkins[i].poi_id];
    for (std::size_t i = 0; i < checkins.size(); ++i) {
      if (alive[i] && poi_count[checkins[i].poi_id] < options.min_poi_freq) {
        alive[i] = 0;
        dropped_pois.insert(checkins[i].poi_id);
        changed = true;
      }
    }
    for (std::size_t i = 0; i < checkins.size(); ++i)
      if (alive[i]) ++user_count[checkins[i].user_id];
    for (std::size_t i = 0; i < checkins.size(); ++i) {
      if (alive[i] && user_count[checkins[i].user_id] < options.min_user_checkins) {
        alive[i] = 0;
        dropped_users.insert(checkins[i].user_id);
        changed = true;
      }
    }
  }

  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < checkins.size(); ++i)
    if (alive[i]) kept.push_back(i);
  if (kept.empty()) throw DataError("preprocess: corpus is empty after frequency filtering");
  // Chronological per user; ties keep input order.
  std::stable_sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
    if (checkins[a].user_id != checkins[b].user_id) return checkins[a].user_id < checkins[b].user_id;
    return checkins[a].timestamp < checkins[b].timestamp;
  });

  Corpus corpus;
  std::map<std::string, std::size_t> poi_first;  // poi id -> first check-in index in chronological order
  std::set<std::string> category_names, user_names;
  for (std::size_t i : kept) {
    const CheckIn& c = checkins[i];
    poi_first.emplace(c.poi_id, i);
    user_names.insert(c.user_id);
  }
  for (const auto& [id, i] : poi_first) {
    if (checkins[i].category.empty()) throw DataError("preprocess: POI " + id + " has no category");
    category_names.insert(checkins[i].category);
  }
  corpus.categories.assign(category_names.begin(), category_names.end());
  corpus.users.assign(user_names.begin(), user_names.end());
  std::map<std::string, std::size_t> category_index, poi_index, user_index;
  for (std::size_t k = 0; k < corpus.categories.size(); ++k) category_index[corpus.categories[k]] = k;
  for (std::size_t k = 0; k < corpus.users.size(); ++k) user_index[corpus.users[k]] = k;
  for (const auto& [id, i] : poi_first) {
    poi_index[id] = corpus.pois.size();
    corpus.pois.push_back({id, checkins[i].latitude, checkins[i].longitude, category_index[checkins[i].category]});
  }

  Trajectory* open = nullptr;
  Timestamp session_start = 0;
  for (std::size_t i : kept) {
    const CheckIn& c = checkins[i];
    const std::size_t u = user_index[c.user_id];
    if (open == nullptr || open->user != u || c.timestamp - session_start >= options.session_gap) {
      Trajectory t;
      t.user = u;
      t.session = (open != nullptr && open->user == u) ? open->session + 1 : 0;
      corpus.trajectories.push_back(std::move(t));
      open = &corpus.trajectories.back();
      session_start = c.timestamp;
    }
    open->pois.push_back(poi_index[c.poi_id]);
    open->bins.push_back(time_bin(c.timestamp));
    open->times.push_back(c.timestamp);
  }
  split(corpus, options.train_ratio);

  rep.kept_checkins = kept.size();
  rep.dropped_pois = dropped_pois.size();
  rep.dropped_users = dropped_users.size();
  if (report) *report = rep;
  return corpus;
}

namespace {

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, '\t')) out.push_back(f);
  return out;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DataError("cannot open " + p.string());
  return in;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream vocab(dir / "vocab.tsv", std::ios::binary);
  vocab << "poi_id\tindex\tlat\tlon\tcategory_index\n";
  for (std::size_t i = 0; i < corpus.pois.size(); ++i) {
    const Poi& p = corpus.pois[i];
    vocab << p.id << '\t' << i << '\t' << fmt_double(p.latitude) << '\t' << fmt_double(p.longitude) << '\t'
          << p.category << '\n';
  }
  std::ofstream cats(dir / "categories.tsv", std::ios::binary);
  cats << "index\tname\n";
  for (std::size_t i = 0; i < corpus.categories.size(); ++i) cats << i << '\t' << corpus.categories[i] << '\n';

  std::ofstream traj(dir / "trajectories.jsonl", std::ios::binary);
  for (const Trajectory& t : corpus.trajectories) {
    nlohmann::json j;
    j["user"] = corpus.users[t.user];
    j["session"] = t.session;
    j["split"] = split_name(t.split);
    j["pois"] = t.pois;
    j["bins"] = t.bins;
    j["times"] = t.times;
    traj << j.dump() << '\n';
  }
  if (!vocab || !cats || !traj) throw DataError("failed writing corpus to " + dir.string());
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  std::string line;
  {
    auto in = open_in(dir / "categories.tsv");
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto f = split_tabs(line);
      if (f.size() != 2 || std::stoul(f[0]) != corpus.categories.size())
        throw DataError("categories.tsv: bad row '" + line + "'");
      corpus.categories.push_back(f[1]);
    }
  }
  {
    auto in = open_in(dir / "vocab.tsv");
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      auto f = split_tabs(line);
      if (f.size() != 5 || std::stoul(f[1]) != corpus.pois.size()) throw DataError("vocab.tsv: bad row '" + line + "'");
      corpus.pois.push_back({f[0], std::stod(f[2]), std::stod(f[3]), std::stoul(f[4])});
    }
  }
  {
    auto in = open_in(dir / "trajectories.jsonl");
    std::map<std::string, std::size_t> user_index;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line);
      const std::string user = j.at("user").get<std::string>();
      auto [it, fresh] = user_index.emplace(user, corpus.users.size());
      if (fresh) corpus.users.push_back(user);
      Trajectory t;
      t.user = it->second;
      t.session = j.at("session").get<std::size_t>();
      t.split = j.at("split").get<std::string>() == "test" ? Split::Test : Split::Train;
      t.pois = j.at("pois").get<std::vector<std::size_t>>();
      t.bins = j.at("bins").get<std::vector<int>>();
      if (j.contains("times")) t.times = j.at("times").get<std::vector<Timestamp>>();
      corpus.trajectories.push_back(std::move(t));
    }
  }
  corpus.validate();
  return corpus;
}

std::string corpus_hash(const Corpus& corpus) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::string_view s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  };
  for (const Poi& p : corpus.pois) {
    mix(p.id);
    mix(fmt_double(p.latitude));
    mix(fmt_double(p.longitude));
    mix(std::to_string(p.category));
  }
  for (const auto& c : corpus.categories) mix(c);
  for (const Trajectory& t : corpus.trajectories) {
    mix(corpus.users[t.user]);
    mix(split_name(t.split));
    for (std::size_t k = 0; k < t.length(); ++k) mix(std::to_string(t.pois[k]) + ":" + std::to_string(t.bins[k]));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ssdl::data
