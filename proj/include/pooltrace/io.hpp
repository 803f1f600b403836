// Copyright 2026 The pooltrace Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// File formats.
//
//   timeline     manifest.json, contacts.csv (day,i,j,tau,d),
//                truth.csv (day,node,state,viral_load), households.csv
//   matrix       matrix.csv (row,col) + matrix.json (m,n,k,blocks)
//   measurement  measurement.csv (pool_id,y_value) + measurement.json
//   posterior    posterior.csv (node,probability) + state.json
//   groups       groups.json
//
// Numbers are written in shortest round-trip form so files are byte-stable.

#pragma once

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "pooltrace/common.hpp"
#include "pooltrace/epidemic_sim.hpp"
#include "pooltrace/graph_analysis.hpp"
#include "pooltrace/measurement.hpp"
#include "pooltrace/pool_design.hpp"

namespace pooltrace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Low-level helpers

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string() + " for writing");
  f << text;
  if (!f) throw Error("write failed: " + path.string());
}

inline std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const fs::path& path) {
  try {
    return Json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const {
    for (std::size_t c = 0; c < header.size(); ++c)
      if (header[c] == name) return c;
    throw StructuralError("CSV column '" + std::string(name) + "' not found");
  }
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.emplace_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open " + path.string());
  CsvTable t;
  std::string line;
  bool first = true;
  while (std::getline(f, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      t.header = split_csv_line(line);
      first = false;
    } else {
      t.rows.push_back(split_csv_line(line));
      if (t.rows.back().size() != t.header.size())
        throw StructuralError(path.string() + ": row " + std::to_string(t.rows.size()) + " has wrong field count");
    }
  }
  return t;
}

template <typename T>
T parse_number(std::string_view s) {
  T v{};
  if constexpr (std::is_floating_point_v<T>) {
    if (s == "nan") return std::numeric_limits<T>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<T>::infinity();
    if (s == "-inf") return -std::numeric_limits<T>::infinity();
  }
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw StructuralError("malformed number '" + std::string(s) + "'");
  return v;
}

// ---------------------------------------------------------------------------
// Configuration <-> JSON

namespace detail {

// Rejects keys not in `known` so misspelt options fail loudly.
inline void check_keys(const Json& j, std::initializer_list<std::string_view> known, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (auto k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void get_if(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline Json ranges_to_json(const ContactAttributeRanges& r) {
  return Json{{"tau", {r.tau_lo, r.tau_hi}}, {"d", {r.d_lo, r.d_hi}}};
}

inline ContactAttributeRanges ranges_from_json(const Json& j, ContactAttributeRanges r) {
  check_keys(j, {"tau", "d"}, "contact ranges");
  std::vector<double> tau{r.tau_lo, r.tau_hi}, d{r.d_lo, r.d_hi};
  get_if(j, "tau", tau);
  get_if(j, "d", d);
  if (tau.size() != 2 || d.size() != 2) throw ConfigError("contact ranges must be [lo, hi] pairs");
  return {tau[0], tau[1], d[0], d[1]};
}

}  // namespace detail

inline GraphMode graph_mode_from_string(std::string_view s) {
  if (s == "disjoint-cliques") return GraphMode::disjoint_cliques;
  if (s == "overlapping-almost-cliques") return GraphMode::overlapping_almost_cliques;
  throw ConfigError("unknown graph_mode '" + std::string(s) + "'");
}

inline Json to_json(const SimConfig& c) {
  return Json{{"n", c.n},
              {"t_max", c.t_max},
              {"k1", c.k1},
              {"k2", c.k2},
              {"infection_days", c.infection_days},
              {"p1", c.p1},
              {"lambda0", c.lambda0},
              {"alpha", c.alpha},
              {"viral_load_max", c.viral_load_max},
              {"household_dist", c.household_dist},
              {"graph_mode", to_string(c.graph_mode)},
              {"edge_drop_frac", c.edge_drop_frac},
              {"intra", detail::ranges_to_json(c.intra)},
              {"inter", detail::ranges_to_json(c.inter)},
              {"rng_seed", c.rng_seed}};
}

inline SimConfig sim_config_from_json(const Json& j, SimConfig c = {}) {
  detail::check_keys(j,
                     {"n", "t_max", "k1", "k2", "infection_days", "p1", "lambda0", "alpha", "viral_load_max",
                      "household_dist", "graph_mode", "edge_drop_frac", "intra", "inter", "rng_seed"},
                     "sim");
  detail::get_if(j, "n", c.n);
  detail::get_if(j, "t_max", c.t_max);
  detail::get_if(j, "k1", c.k1);
  detail::get_if(j, "k2", c.k2);
  detail::get_if(j, "infection_days", c.infection_days);
  detail::get_if(j, "p1", c.p1);
  detail::get_if(j, "lambda0", c.lambda0);
  detail::get_if(j, "alpha", c.alpha);
  detail::get_if(j, "viral_load_max", c.viral_load_max);
  detail::get_if(j, "household_dist", c.household_dist);
  if (j.contains("graph_mode")) c.graph_mode = graph_mode_from_string(j.at("graph_mode").get<std::string>());
  detail::get_if(j, "edge_drop_frac", c.edge_drop_frac);
  if (j.contains("intra")) c.intra = detail::ranges_from_json(j.at("intra"), c.intra);
  if (j.contains("inter")) c.inter = detail::ranges_from_json(j.at("inter"), c.inter);
  detail::get_if(j, "rng_seed", c.rng_seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Timeline

inline NodeState node_state_from_string(std::string_view s) {
  for (auto st : {NodeState::susceptible, NodeState::infected, NodeState::infectious, NodeState::recovered})
    if (s == to_string(st)) return st;
  throw StructuralError("unknown node state '" + std::string(s) + "'");
}

inline void write_timeline(const fs::path& dir, const ContactTimeline& tl, const Json& extra = Json::object()) {
  fs::create_directories(dir);
  Json manifest{{"format", "pooltrace-timeline"}, {"days", tl.days()}, {"config", to_json(tl.config)}};
  for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
  write_json(dir / "manifest.json", manifest);

  std::string s = "day,i,j,tau,d\n";
  for (int t = 0; t < static_cast<int>(tl.daily_graphs.size()); ++t)
    for (const auto& e : tl.daily_graphs[static_cast<std::size_t>(t)])
      s += std::to_string(t) + ',' + std::to_string(e.i) + ',' + std::to_string(e.j) + ',' + format_double(e.tau) +
           ',' + format_double(e.d) + '\n';
  write_text(dir / "contacts.csv", s);

  s = "day,node,state,viral_load\n";
  for (int t = 0; t < tl.days(); ++t) {
    const auto& st = tl.daily_truth[static_cast<std::size_t>(t)];
    for (std::size_t i = 0; i < st.size(); ++i)
      s += std::to_string(t) + ',' + std::to_string(i) + ',' + to_string(st[i].state) + ',' +
           format_double(st[i].viral_load) + '\n';
  }
  write_text(dir / "truth.csv", s);

  s = "household_id,node\n";
  for (std::size_t h = 0; h < tl.households.size(); ++h)
    for (int v : tl.households[h]) s += std::to_string(h) + ',' + std::to_string(v) + '\n';
  write_text(dir / "households.csv", s);
}

inline ContactTimeline read_timeline(const fs::path& dir) {
  ContactTimeline tl;
  const auto manifest = read_json(dir / "manifest.json");
  tl.config = sim_config_from_json(manifest.at("config"));
  const int days = manifest.at("days").get<int>();
  const int n = tl.config.n;

  tl.daily_graphs.assign(static_cast<std::size_t>(days), {});
  const auto contacts = read_csv(dir / "contacts.csv");
  const auto cd = contacts.column("day"), ci = contacts.column("i"), cj = contacts.column("j"),
             ct = contacts.column("tau"), cdd = contacts.column("d");
  for (const auto& r : contacts.rows) {
    const int t = parse_number<int>(r[cd]);
    if (t < 0 || t >= days) throw StructuralError("contacts.csv: day out of range");
    tl.daily_graphs[static_cast<std::size_t>(t)].push_back(
        {parse_number<int>(r[ci]), parse_number<int>(r[cj]), parse_number<double>(r[ct]), parse_number<double>(r[cdd])});
  }

  tl.daily_truth.assign(static_cast<std::size_t>(days), PopulationState(static_cast<std::size_t>(n)));
  const auto truth = read_csv(dir / "truth.csv");
  const auto td = truth.column("day"), tn = truth.column("node"), ts = truth.column("state"),
             tv = truth.column("viral_load");
  for (const auto& r : truth.rows) {
    const int t = parse_number<int>(r[td]);
    const int i = parse_number<int>(r[tn]);
    if (t < 0 || t >= days || i < 0 || i >= n) throw StructuralError("truth.csv: index out of range");
    auto& rec = tl.daily_truth[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
    rec.state = node_state_from_string(r[ts]);
    rec.viral_load = parse_number<double>(r[tv]);
  }
  // Infection day = first day of the current infected run.
  for (int i = 0; i < n; ++i) {
    int start = -1;
    for (int t = 0; t < days; ++t) {
      auto& rec = tl.daily_truth[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)];
      const bool inf = rec.state == NodeState::infected || rec.state == NodeState::infectious;
      if (inf && start < 0) start = t;
      if (rec.state != NodeState::susceptible) rec.infection_day = start;
    }
  }

  const auto hh = read_csv(dir / "households.csv");
  const auto hid = hh.column("household_id"), hnode = hh.column("node");
  for (const auto& r : hh.rows) {
    const auto h = parse_number<std::size_t>(r[hid]);
    if (h >= tl.households.size()) tl.households.resize(h + 1);
    tl.households[h].push_back(parse_number<int>(r[hnode]));
  }
  return tl;
}

// ---------------------------------------------------------------------------
// Pooling matrix

inline Json blocks_to_json(const PoolingMatrix& a) {
  Json blocks = Json::array();
  for (const auto& b : a.blocks)
    blocks.push_back({{"group", b.group},
                      {"columns", {b.column_begin, b.column_end}},
                      {"rows", {b.row_begin, b.row_end}},
                      {"difference", b.difference}});
  return blocks;
}

inline void write_matrix(const fs::path& dir, const PoolingMatrix& a) {
  std::string s = "row,col\n";
  for (int j = 0; j < a.n; ++j)
    for (int i : a.column_rows[static_cast<std::size_t>(j)]) s += std::to_string(i) + ',' + std::to_string(j) + '\n';
  write_text(dir / "matrix.csv", s);
  write_json(dir / "matrix.json", Json{{"m", a.m},
                                       {"n", a.n},
                                       {"k", a.k},
                                       {"rule3_relaxed", a.rule3_relaxed},
                                       {"blocks", blocks_to_json(a)}});
}

inline PoolingMatrix read_matrix(const fs::path& dir) {
  const auto h = read_json(dir / "matrix.json");
  const int m = h.at("m").get<int>(), n = h.at("n").get<int>();
  std::vector<std::vector<int>> cols(static_cast<std::size_t>(n));
  const auto t = read_csv(dir / "matrix.csv");
  const auto cr = t.column("row"), cc = t.column("col");
  for (const auto& r : t.rows) {
    const int i = parse_number<int>(r[cr]), j = parse_number<int>(r[cc]);
    if (j < 0 || j >= n) throw StructuralError("matrix.csv: column index out of range");
    cols[static_cast<std::size_t>(j)].push_back(i);
  }
  PoolingMatrix a(m, n, std::move(cols));
  a.k = h.value("k", 0);
  a.rule3_relaxed = h.value("rule3_relaxed", false);
  for (const auto& b : h.value("blocks", Json::array()))
    a.blocks.push_back({b.at("group").get<int>(), b.at("columns")[0].get<int>(), b.at("columns")[1].get<int>(),
                        b.at("rows")[0].get<int>(), b.at("rows")[1].get<int>(), b.at("difference").get<int>()});
  return a;
}

// ---------------------------------------------------------------------------
// Measurements

struct Measurement {
  NoiseModel model = NoiseModel::m1;
  std::vector<double> y;
  Json header = Json::object();
};

inline void write_measurement(const fs::path& dir, const Measurement& meas) {
  std::string s = "pool_id,y_value\n";
  for (std::size_t i = 0; i < meas.y.size(); ++i) s += std::to_string(i) + ',' + format_double(meas.y[i]) + '\n';
  write_text(dir / "measurement.csv", s);
  Json h = meas.header;
  h["model"] = to_string(meas.model);
  h["pools"] = meas.y.size();
  write_json(dir / "measurement.json", h);
}

inline Measurement read_measurement(const fs::path& dir) {
  Measurement meas;
  meas.header = read_json(dir / "measurement.json");
  const auto model = meas.header.at("model").get<std::string>();
  if (model == "m1") meas.model = NoiseModel::m1;
  else if (model == "m2") meas.model = NoiseModel::m2;
  else throw ConfigError("measurement.json: unknown model '" + model + "'");
  const auto t = read_csv(dir / "measurement.csv");
  const auto cp = t.column("pool_id"), cy = t.column("y_value");
  meas.y.assign(t.rows.size(), 0.0);
  for (const auto& r : t.rows) {
    const auto i = parse_number<std::size_t>(r[cp]);
    if (i >= meas.y.size()) throw StructuralError("measurement.csv: pool id out of range");
    meas.y[i] = parse_number<double>(r[cy]);
  }
  return meas;
}

// ---------------------------------------------------------------------------
// Decoder output and groups

inline void write_posterior(const fs::path& dir, std::span<const double> values, const Json& state,
                            std::string_view value_name = "probability") {
  std::string s = "node," + std::string(value_name) + "\n";
  for (std::size_t i = 0; i < values.size(); ++i) s += std::to_string(i) + ',' + format_double(values[i]) + '\n';
  write_text(dir / "posterior.csv", s);
  write_json(dir / "state.json", state);
}

inline std::vector<double> read_posterior(const fs::path& dir) {
  const auto t = read_csv(dir / "posterior.csv");
  const auto cn = t.column("node");
  const std::size_t cv = cn == 0 ? 1 : 0;
  std::vector<double> out(t.rows.size(), 0.0);
  for (const auto& r : t.rows) {
    const auto i = parse_number<std::size_t>(r[cn]);
    if (i >= out.size()) throw StructuralError("posterior.csv: node out of range");
    out[i] = parse_number<double>(r[cv]);
  }
  return out;
}

inline Json groups_to_json(const GroupStructure& g, std::string_view mode) {
  return Json{{"mode", mode}, {"overlapping", g.overlapping}, {"groups", g.groups}};
}

inline GroupStructure groups_from_json(const Json& j) {
  GroupStructure g;
  g.groups = j.at("groups").get<std::vector<std::vector<int>>>();
  g.overlapping = j.value("overlapping", false);
  return g;
}

}  // namespace pooltrace
