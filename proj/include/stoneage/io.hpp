#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/violation.hpp"

namespace stoneage::io {

using nlohmann::json;

inline json graph_to_json(const Graph& g) {
  json edges = json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  return {{"n", g.size()}, {"diameter", g.diameter()}, {"edges", std::move(edges)}};
}

inline Graph graph_from_json(const json& j) {
  std::vector<Graph::Edge> edges;
  for (const auto& e : j.at("edges")) edges.push_back({e.at(0).get<NodeId>(), e.at(1).get<NodeId>()});
  return Graph(j.at("n").get<std::size_t>(), edges);
}

template <Protocol P>
json states_to_json(const P& protocol, const Configuration& c) {
  json out = json::array();
  for (StateId q : c) out.push_back(protocol.state_name(q));
  return out;
}

template <Protocol P>
Configuration states_from_json(const P& protocol, const json& j) {
  Configuration c;
  for (const auto& s : j) c.push_back(protocol.parse_state(s.get<std::string>()));
  return c;
}

inline json violation_to_json(const Violation& v) {
  return {{"monitor", v.monitor}, {"step", v.step}, {"nodes", v.nodes}, {"detail", v.detail}};
}

inline Violation violation_from_json(const json& j) {
  return {j.at("monitor").get<std::string>(), j.at("step").get<std::uint64_t>(),
          j.at("nodes").get<std::vector<NodeId>>(), j.at("detail").get<std::string>()};
}

/// One violation per line.
inline void write_violations(std::ostream& out, const ViolationLog& log) {
  for (const auto& v : log) out << violation_to_json(v).dump() << '\n';
}

inline ViolationLog read_violations(std::istream& in) {
  ViolationLog log;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      log.push_back(violation_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(e.what(), lineno);
    }
  }
  return log;
}

/// Trace as JSON lines: a header object, then one record per step with the
/// activation set and the full configuration after the step. `meta` carries
/// whatever the reader needs to rebuild the protocol and scheduler.
template <Protocol P>
void write_trace(std::ostream& out, const P& protocol, const Graph& g, const Trace& trace,
                 const json& meta) {
  json header = {{"type", "header"},
                 {"protocol", protocol.name()},
                 {"meta", meta},
                 {"graph", graph_to_json(g)},
                 {"seed", trace.seed},
                 {"R", trace.round_boundaries},
                 {"initial", states_to_json(protocol, trace.initial)}};
  out << header.dump() << '\n';
  for (std::size_t t = 0; t < trace.step_count(); ++t) {
    const auto& s = trace.steps[t];
    out << json{{"t", t}, {"activated", s.activated}, {"states", states_to_json(protocol, s.after)}}.dump()
        << '\n';
  }
}

/// Parsed trace file with the states still as names.
struct TraceFile {
  json header;
  std::vector<std::vector<NodeId>> activated;
  std::vector<std::vector<std::string>> states;
};

inline TraceFile read_trace_file(std::istream& in) {
  TraceFile f;
  std::string line;
  std::size_t lineno = 0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (lineno == 1) {
        if (j.value("type", "") != "header") throw ParseError("first line is not a trace header", 1);
        f.header = std::move(j);
        continue;
      }
      if (j.at("t").get<std::size_t>() != f.activated.size())
        throw ParseError("step records out of order", lineno);
      f.activated.push_back(j.at("activated").get<std::vector<NodeId>>());
      f.states.push_back(j.at("states").get<std::vector<std::string>>());
    }
  } catch (const json::exception& e) {
    throw ParseError(e.what(), lineno);
  }
  if (f.header.is_null()) throw ParseError("trace file is empty", 0);
  return f;
}

struct ReplayResult {
  bool ok = true;
  std::size_t steps = 0;
  std::optional<std::uint64_t> mismatch_step;
  std::string detail;
};

/// Re-executes the recorded activations from the recorded initial
/// configuration and seed, and compares every configuration.
template <Protocol P>
ReplayResult replay_trace(const P& protocol, const TraceFile& f) {
  ReplayResult r;
  const Graph g = graph_from_json(f.header.at("graph"));
  const auto seed = f.header.at("seed").get<std::uint64_t>();
  Configuration c = states_from_json(protocol, f.header.at("initial"));
  if (c.size() != g.size()) return {false, 0, 0, "initial configuration size mismatch"};
  for (std::size_t t = 0; t < f.activated.size(); ++t) {
    c = step(c, g, protocol, f.activated[t], seed, t);
    Configuration recorded;
    for (const auto& s : f.states[t]) recorded.push_back(protocol.parse_state(s));
    if (recorded != c) {
      r.ok = false;
      r.mismatch_step = t;
      for (NodeId v = 0; v < c.size() && v < recorded.size(); ++v)
        if (c[v] != recorded[v]) {
          r.detail = "node " + std::to_string(v) + ": recorded " + f.states[t][v] + ", replayed " +
                     protocol.state_name(c[v]);
          break;
        }
      if (r.detail.empty()) r.detail = "configuration size mismatch";
      return r;
    }
    ++r.steps;
  }
  return r;
}

}  // namespace stoneage::io
