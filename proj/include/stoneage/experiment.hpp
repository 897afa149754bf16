#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <json.hpp>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/failed_unison.hpp"
#include "stoneage/io.hpp"
#include "stoneage/le.hpp"
#include "stoneage/mis.hpp"
#include "stoneage/synchronizer.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/unison.hpp"
#include "stoneage/verification.hpp"

namespace stoneage::experiment {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration.

struct ProtocolSpec {
  std::string name = "au";  // au | mis | le | sync-mis | sync-le | failed-au
  int D = 1;
  double p0 = 0.25;
  int k_id = 4;
  std::string variant = "standard";  // au only: standard | aa_without_good_guard
  int c = 2;                         // failed-au only
};

struct SchedulerSpec {
  std::string kind = "synchronous";  // synchronous | round_robin | random_fair | scripted
  std::uint32_t B = 3;
  std::string path;  // scripted
};

struct InitSpec {
  std::string policy = "random";  // uniform | random | file
  std::string path;
};

struct GraphConfig {
  GraphSpec spec;
  std::optional<std::uint64_t> seed;          // fixed graph; otherwise derived from the run seed
  std::optional<std::uint32_t> diameter_bound;  // random graphs; defaults to D
};

struct ExperimentConfig {
  ProtocolSpec protocol;
  GraphConfig graph;
  SchedulerSpec scheduler;
  InitSpec init;
  std::vector<std::uint64_t> seeds{1};
  std::uint64_t max_rounds = 10000;
  bool hard_budget = false;
  std::optional<std::uint64_t> window;
  bool monitors = true;
  bool timing = false;
  std::string output;
  std::string trace_dir;
};

namespace detail {

inline const json& field(const json& j, const std::string& path, const char* key) {
  if (!j.contains(key)) throw ConfigError(path + "." + key, "missing");
  return j.at(key);
}

template <class T>
T get(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path, "has the wrong type");
  }
}

template <class T>
void read(const json& obj, const std::string& path, const char* key, T& out) {
  if (obj.contains(key)) out = get<T>(obj.at(key), path + "." + key);
}

inline void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError(path + "." + it.key(), "unknown field");
  }
}

inline GraphKind graph_kind(const std::string& s, const std::string& path) {
  if (s == "complete") return GraphKind::complete;
  if (s == "path") return GraphKind::path;
  if (s == "cycle") return GraphKind::cycle;
  if (s == "wheel") return GraphKind::wheel;
  if (s == "random") return GraphKind::random_bounded;
  if (s == "edge_list") return GraphKind::edge_list;
  throw ConfigError(path, "unknown graph kind `" + s + "`");
}

inline const char* graph_kind_name(GraphKind k) {
  switch (k) {
    case GraphKind::complete: return "complete";
    case GraphKind::path: return "path";
    case GraphKind::cycle: return "cycle";
    case GraphKind::wheel: return "wheel";
    case GraphKind::random_bounded: return "random";
    case GraphKind::edge_list: return "edge_list";
  }
  return "?";
}

}  // namespace detail

/// Parses and validates an experiment description. Errors name the field.
inline ExperimentConfig parse_config(const json& j) {
  using detail::read;
  ExperimentConfig c;
  detail::check_keys(j, "config", {"protocol", "graph", "scheduler", "init", "seeds", "budget",
                                   "window", "monitors", "timing", "output", "trace_dir"});

  const json& p = detail::field(j, "config", "protocol");
  if (p.is_string()) {
    c.protocol.name = p.get<std::string>();
  } else {
    detail::check_keys(p, "protocol", {"name", "D", "p0", "k_id", "variant", "c"});
    c.protocol.name = detail::get<std::string>(detail::field(p, "protocol", "name"), "protocol.name");
    read(p, "protocol", "D", c.protocol.D);
    read(p, "protocol", "p0", c.protocol.p0);
    read(p, "protocol", "k_id", c.protocol.k_id);
    read(p, "protocol", "variant", c.protocol.variant);
    read(p, "protocol", "c", c.protocol.c);
  }
  static const std::vector<std::string> names{"au", "mis", "le", "sync-mis", "sync-le", "failed-au"};
  if (std::find(names.begin(), names.end(), c.protocol.name) == names.end())
    throw ConfigError("protocol.name", "unknown protocol `" + c.protocol.name + "`");
  if (c.protocol.D < 1) throw ConfigError("protocol.D", "must be >= 1");
  if (!(c.protocol.p0 > 0.0 && c.protocol.p0 <= 0.5)) throw ConfigError("protocol.p0", "must lie in (0, 1/2]");
  if (c.protocol.k_id < 2) throw ConfigError("protocol.k_id", "must be >= 2");
  if (c.protocol.variant != "standard" && c.protocol.variant != "aa_without_good_guard")
    throw ConfigError("protocol.variant", "must be standard or aa_without_good_guard");
  if (c.protocol.c < 2) throw ConfigError("protocol.c", "must be >= 2");

  const json& g = detail::field(j, "config", "graph");
  detail::check_keys(g, "graph", {"kind", "n", "diameter_bound", "seed", "extra_edge_probability",
                                  "max_retries", "path"});
  c.graph.spec.kind = detail::graph_kind(
      detail::get<std::string>(detail::field(g, "graph", "kind"), "graph.kind"), "graph.kind");
  read(g, "graph", "n", c.graph.spec.n);
  read(g, "graph", "extra_edge_probability", c.graph.spec.extra_edge_probability);
  read(g, "graph", "max_retries", c.graph.spec.max_retries);
  read(g, "graph", "path", c.graph.spec.path);
  if (g.contains("seed")) c.graph.seed = detail::get<std::uint64_t>(g.at("seed"), "graph.seed");
  if (g.contains("diameter_bound"))
    c.graph.diameter_bound = detail::get<std::uint32_t>(g.at("diameter_bound"), "graph.diameter_bound");
  if (c.graph.spec.kind != GraphKind::edge_list && c.graph.spec.n < 1)
    throw ConfigError("graph.n", "must be >= 1");
  if (c.graph.spec.kind == GraphKind::edge_list && c.graph.spec.path.empty())
    throw ConfigError("graph.path", "required for edge_list graphs");
  if (c.graph.diameter_bound && *c.graph.diameter_bound > static_cast<std::uint32_t>(c.protocol.D))
    throw ConfigError("graph.diameter_bound", "exceeds protocol.D");

  if (j.contains("scheduler")) {
    const json& s = j.at("scheduler");
    if (s.is_string()) {
      c.scheduler.kind = s.get<std::string>();
    } else {
      detail::check_keys(s, "scheduler", {"kind", "B", "path"});
      read(s, "scheduler", "kind", c.scheduler.kind);
      read(s, "scheduler", "B", c.scheduler.B);
      read(s, "scheduler", "path", c.scheduler.path);
    }
    static const std::vector<std::string> kinds{"synchronous", "round_robin", "random_fair", "scripted"};
    if (std::find(kinds.begin(), kinds.end(), c.scheduler.kind) == kinds.end())
      throw ConfigError("scheduler.kind", "unknown scheduler `" + c.scheduler.kind + "`");
    if (c.scheduler.B < 1) throw ConfigError("scheduler.B", "must be >= 1");
    if (c.scheduler.kind == "scripted" && c.scheduler.path.empty())
      throw ConfigError("scheduler.path", "required for scripted schedules");
  }

  if (j.contains("init")) {
    const json& i = j.at("init");
    if (i.is_string()) {
      c.init.policy = i.get<std::string>();
    } else {
      detail::check_keys(i, "init", {"policy", "path"});
      read(i, "init", "policy", c.init.policy);
      read(i, "init", "path", c.init.path);
    }
    if (c.init.policy != "uniform" && c.init.policy != "random" && c.init.policy != "file")
      throw ConfigError("init.policy", "must be uniform, random or file");
    if (c.init.policy == "file" && c.init.path.empty()) throw ConfigError("init.path", "required for file init");
  }

  if (j.contains("seeds")) {
    const json& s = j.at("seeds");
    if (s.is_array()) {
      c.seeds = detail::get<std::vector<std::uint64_t>>(s, "seeds");
    } else {
      detail::check_keys(s, "seeds", {"count", "first"});
      const auto count = detail::get<std::uint64_t>(detail::field(s, "seeds", "count"), "seeds.count");
      std::uint64_t first = 1;
      read(s, "seeds", "first", first);
      c.seeds.clear();
      for (std::uint64_t i = 0; i < count; ++i) c.seeds.push_back(first + i);
    }
    if (c.seeds.empty()) throw ConfigError("seeds", "must not be empty");
  }

  if (j.contains("budget")) {
    const json& b = j.at("budget");
    detail::check_keys(b, "budget", {"max_rounds", "hard"});
    read(b, "budget", "max_rounds", c.max_rounds);
    read(b, "budget", "hard", c.hard_budget);
    if (c.max_rounds < 1) throw ConfigError("budget.max_rounds", "must be positive");
  }
  if (j.contains("window")) {
    c.window = detail::get<std::uint64_t>(j.at("window"), "window");
    if (*c.window < 1) throw ConfigError("window", "must be positive");
  }
  read(j, "config", "monitors", c.monitors);
  read(j, "config", "timing", c.timing);
  read(j, "config", "output", c.output);
  read(j, "config", "trace_dir", c.trace_dir);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open");
  json j;
  try {
    j = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path, e.what());
  }
  return parse_config(j);
}

/// The effective configuration, defaults included.
inline json config_to_json(const ExperimentConfig& c) {
  json graph = {{"kind", detail::graph_kind_name(c.graph.spec.kind)},
                {"n", c.graph.spec.n},
                {"extra_edge_probability", c.graph.spec.extra_edge_probability},
                {"max_retries", c.graph.spec.max_retries}};
  graph["seed"] = c.graph.seed ? json(*c.graph.seed) : json("per-run");
  graph["diameter_bound"] = c.graph.diameter_bound.value_or(static_cast<std::uint32_t>(c.protocol.D));
  if (!c.graph.spec.path.empty()) graph["path"] = c.graph.spec.path;
  json sched = {{"kind", c.scheduler.kind}, {"B", c.scheduler.B}};
  if (!c.scheduler.path.empty()) sched["path"] = c.scheduler.path;
  json init = {{"policy", c.init.policy}};
  if (!c.init.path.empty()) init["path"] = c.init.path;
  return {{"protocol",
           {{"name", c.protocol.name}, {"D", c.protocol.D}, {"p0", c.protocol.p0},
            {"k_id", c.protocol.k_id}, {"variant", c.protocol.variant}, {"c", c.protocol.c}}},
          {"graph", graph},
          {"scheduler", sched},
          {"init", init},
          {"seeds", c.seeds},
          {"budget", {{"max_rounds", c.max_rounds}, {"hard", c.hard_budget}}},
          {"window", c.window ? json(*c.window) : json("default")},
          {"monitors", c.monitors},
          {"timing", c.timing}};
}

// ---------------------------------------------------------------------------
// Protocol, graph and scheduler construction.

using SyncMis = sync::Synchronized<mis::MisWithRestart>;
using SyncLe = sync::Synchronized<le::LeWithRestart>;
using AnyProtocol = std::variant<unison::AuProtocol, mis::MisWithRestart, le::LeWithRestart, SyncMis,
                                 SyncLe, failed::FailedAu>;

inline AnyProtocol make_protocol(const ProtocolSpec& s) {
  const mis::MisParams mp{s.D, s.p0, s.k_id};
  const le::LeParams lp{s.D, s.p0, s.k_id};
  if (s.name == "au")
    return unison::AuProtocol(s.D, s.variant == "aa_without_good_guard" ? unison::AuVariant::aa_without_good_guard
                                                                       : unison::AuVariant::standard);
  if (s.name == "mis") return mis::mis_protocol(mp);
  if (s.name == "le") return le::le_protocol(lp);
  if (s.name == "sync-mis") return sync::synchronize(mis::mis_protocol(mp), s.D);
  if (s.name == "sync-le") return sync::synchronize(le::le_protocol(lp), s.D);
  if (s.name == "failed-au") return failed::FailedAu(s.c, s.D);
  throw ConfigError("protocol.name", "unknown protocol `" + s.name + "`");
}

inline json protocol_spec_to_json(const ProtocolSpec& s) {
  return {{"name", s.name}, {"D", s.D}, {"p0", s.p0}, {"k_id", s.k_id}, {"variant", s.variant}, {"c", s.c}};
}

inline ProtocolSpec protocol_spec_from_json(const json& j) {
  ProtocolSpec s;
  s.name = j.at("name").get<std::string>();
  s.D = j.at("D").get<int>();
  s.p0 = j.at("p0").get<double>();
  s.k_id = j.at("k_id").get<int>();
  s.variant = j.at("variant").get<std::string>();
  s.c = j.at("c").get<int>();
  return s;
}

inline Graph make_graph(const ExperimentConfig& c, std::uint64_t run_seed) {
  GraphSpec spec = c.graph.spec;
  spec.seed = c.graph.seed.value_or(run_seed);
  spec.diameter_bound = c.graph.diameter_bound.value_or(static_cast<std::uint32_t>(c.protocol.D));
  // The complete graph is the only diameter-1 graph, and the sampler would
  // have to stumble on it edge by edge.
  if (spec.kind == GraphKind::random_bounded && spec.diameter_bound == 1) spec.kind = GraphKind::complete;
  Graph g = build_graph(spec);
  if (g.diameter() > static_cast<std::uint32_t>(c.protocol.D))
    throw ConfigError("protocol.D", "graph diameter " + std::to_string(g.diameter()) + " exceeds D");
  return g;
}

inline Scheduler make_scheduler(const SchedulerSpec& s, std::uint64_t run_seed) {
  if (s.kind == "synchronous") return Scheduler::synchronous();
  if (s.kind == "round_robin") return Scheduler::round_robin();
  if (s.kind == "random_fair") return Scheduler::random_fair(s.B, run_seed);
  std::ifstream in(s.path);
  if (!in) throw ConfigError("scheduler.path", "cannot open `" + s.path + "`");
  try {
    return parse_schedule(in);
  } catch (const ParseError& e) {
    throw ConfigError("scheduler.path", e.what());
  }
}

template <Protocol P>
Configuration make_initial(const InitSpec& init, const P& protocol, std::size_t n, std::uint64_t seed) {
  if (init.policy == "uniform") return uniform_configuration(protocol, n);
  if (init.policy == "random") return random_configuration(protocol, n, seed);
  std::ifstream in(init.path);
  if (!in) throw ConfigError("init.path", "cannot open `" + init.path + "`");
  Configuration c;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty()) continue;
    try {
      c.push_back(protocol.parse_state(line));
    } catch (const std::exception& e) {
      throw ConfigError("init.path", e.what());
    }
  }
  if (c.size() != n)
    throw ConfigError("init.path", "has " + std::to_string(c.size()) + " states for " + std::to_string(n) + " nodes");
  return c;
}

// ---------------------------------------------------------------------------
// Per-protocol task and monitor wiring.

template <class P>
struct Wiring;

template <>
struct Wiring<unison::AuProtocol> {
  static verify::TaskChecker checker(const unison::AuProtocol& p) { return verify::TaskChecker::au(p); }
  static bool settled(const unison::AuProtocol& p, const Graph& g, const Configuration& c) {
    return unison::graph_good(p, c, g);
  }
  static std::optional<verify::AuMonitors> au_monitors(const unison::AuProtocol& p, const Graph& g) {
    return verify::AuMonitors::for_protocol(g, p);
  }
};

template <>
struct Wiring<failed::FailedAu> {
  static verify::TaskChecker checker(const failed::FailedAu& p) {
    return verify::TaskChecker::au(verify::clock_model(p), p.top() + 1);
  }
  static bool settled(const failed::FailedAu& p, const Graph& g, const Configuration& c) {
    return failed::failed_good(p, g, c);
  }
  static std::optional<verify::AuMonitors> au_monitors(const failed::FailedAu&, const Graph&) { return {}; }
};

template <class Host>
struct StaticWiring {
  static verify::TaskChecker checker(const Host& p) {
    const int D = p.diameter_bound();
    return std::is_same_v<Host, mis::MisWithRestart> ? verify::TaskChecker::mis(D) : verify::TaskChecker::le(D);
  }
  static bool settled(const Host& p, const Graph& g, const Configuration& c) {
    return verify::configuration_valid(c, g, p, checker(p));
  }
  static std::optional<verify::AuMonitors> au_monitors(const Host&, const Graph&) { return {}; }
};

template <>
struct Wiring<mis::MisWithRestart> : StaticWiring<mis::MisWithRestart> {};
template <>
struct Wiring<le::LeWithRestart> : StaticWiring<le::LeWithRestart> {};

template <class Pi>
struct Wiring<sync::Synchronized<Pi>> {
  using S = sync::Synchronized<Pi>;
  /// Asynchronous Π-rounds advance at least once every D + 1 rounds once the
  /// clock is good, so the static window is stretched by that factor.
  static verify::TaskChecker checker(const S& p) {
    verify::TaskChecker c = Wiring<Pi>::checker(p.pi());
    c.window *= static_cast<std::uint64_t>(p.au().diameter_bound() + 1);
    return c;
  }
  static bool settled(const S& p, const Graph& g, const Configuration& c) {
    const unison::TurnView view(g, p.au().levels(), p.clocks(c), p.au().diameter_bound());
    return view.graph_good() && verify::configuration_valid(c, g, p, checker(p));
  }
  static std::optional<verify::AuMonitors> au_monitors(const S& p, const Graph& g) {
    return verify::AuMonitors(g, p.au().diameter_bound(), [p](const Configuration& c) { return p.clocks(c); });
  }
};

// ---------------------------------------------------------------------------
// Running.

struct RunRecord {
  std::uint64_t seed = 0;
  bool stabilized = false;
  std::size_t stabilization_round = 0;
  std::uint64_t stabilization_time = 0;
  std::size_t rounds = 0;
  std::uint64_t steps = 0;
  bool budget_exceeded = false;
  std::map<std::string, std::uint64_t> monitor_hits;  // all hits, per monitor
  std::map<std::string, std::uint64_t> info;          // informational counters
  ViolationLog failures;  // post-stabilization monitor hits and checker failures
  std::optional<double> wall_ms;
  std::string error;
};

inline json record_to_json(const RunRecord& r) {
  json failures = json::array();
  for (const auto& v : r.failures) failures.push_back(io::violation_to_json(v));
  json j = {{"seed", r.seed},
            {"stabilized", r.stabilized},
            {"stabilization_round", r.stabilization_round},
            {"stabilization_time", r.stabilization_time},
            {"rounds", r.rounds},
            {"steps", r.steps},
            {"budget_exceeded", r.budget_exceeded},
            {"monitor_hits", r.monitor_hits},
            {"info", r.info},
            {"failures", failures}};
  if (r.wall_ms) j["wall_ms"] = *r.wall_ms;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

struct RunOutput {
  RunRecord record;
  std::optional<Trace> trace;
  Graph graph;
};

/// Executes one seeded run of a concrete protocol.
template <Protocol P>
RunOutput run_protocol(const ExperimentConfig& c, const P& protocol, std::uint64_t seed, bool keep_trace) {
  using W = Wiring<P>;
  const auto started = std::chrono::steady_clock::now();
  RunOutput out{{}, std::nullopt, make_graph(c, seed)};
  const Graph& g = out.graph;
  RunRecord& rec = out.record;
  rec.seed = seed;

  verify::TaskChecker checker = W::checker(protocol);
  if (c.window) checker.window = *c.window;
  StopCondition stop;
  stop.max_rounds = c.max_rounds;
  stop.window = checker.window;
  stop.predicate = [&](const Configuration& cfg) { return W::settled(protocol, g, cfg); };

  auto monitors = c.monitors ? W::au_monitors(protocol, g) : std::nullopt;
  StepObserver observer;
  if (monitors) observer = monitors->observer();

  RunResult res = run(g, protocol, make_scheduler(c.scheduler, seed),
                      make_initial(c.init, protocol, g.size(), seed), stop, seed, observer);
  const Trace& trace = res.trace;
  const auto report = verify::measure_stabilization(trace, g, protocol, checker);
  rec.stabilized = res.stabilized && report.stabilized;
  rec.stabilization_round = report.stabilization_round;
  rec.stabilization_time = report.stabilization_time;
  rec.rounds = trace.completed_rounds();
  rec.steps = trace.step_count();
  rec.budget_exceeded = !rec.stabilized;
  rec.failures = report.violations;

  ViolationLog hits;
  if (monitors) {
    for (const auto& [name, count] : monitors->log().counts()) rec.monitor_hits[name] = count.violations;
    hits = monitors->log().log();
  }
  if constexpr (std::is_same_v<P, mis::MisWithRestart>) {
    if (c.monitors && c.scheduler.kind == "synchronous") {
      const auto a = mis::analyze_phases(protocol, g, trace);
      for (const auto& v : a.violations) ++rec.monitor_hits[v.monitor];
      hits.insert(hits.end(), a.violations.begin(), a.violations.end());
      rec.info["phases"] = a.phases.size();
      rec.info["literal_z_checked"] = a.literal_z_checked;
      rec.info["literal_z_mismatches"] = a.literal_z_mismatches.size();
    }
  }
  if constexpr (std::is_same_v<P, le::LeWithRestart>) {
    if (c.monitors && c.scheduler.kind == "synchronous") {
      const auto a = le::analyze_epochs(protocol, g, trace);
      for (const auto& v : a.violations) ++rec.monitor_hits[v.monitor];
      hits.insert(hits.end(), a.violations.begin(), a.violations.end());
      rec.info["compute_epochs"] = a.compute_epochs;
    }
  }
  if (rec.stabilized) {
    const auto late = verify::after(hits, rec.stabilization_time);
    rec.failures.insert(rec.failures.end(), late.begin(), late.end());
  }
  if (c.timing)
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  if (keep_trace) out.trace = std::move(res.trace);
  return out;
}

inline json trace_meta(const ExperimentConfig& c) {
  json sched = {{"kind", c.scheduler.kind}, {"B", c.scheduler.B}};
  return {{"protocol", protocol_spec_to_json(c.protocol)}, {"scheduler", sched}};
}

/// One seeded run; the trace is written to trace_dir when configured.
inline RunRecord run_one(const ExperimentConfig& c, const AnyProtocol& protocol, std::uint64_t seed) {
  const bool keep = !c.trace_dir.empty();
  return std::visit(
      [&](const auto& p) {
        RunOutput out = run_protocol(c, p, seed, keep);
        if (keep) {
          std::filesystem::create_directories(c.trace_dir);
          std::ofstream f(std::filesystem::path(c.trace_dir) / ("trace-" + std::to_string(seed) + ".jsonl"));
          io::write_trace(f, p, out.graph, *out.trace, trace_meta(c));
        }
        return out.record;
      },
      protocol);
}

/// Worker count from STONEAGE_JOBS, else the hardware concurrency.
inline unsigned default_jobs() {
  if (const char* env = std::getenv("STONEAGE_JOBS")) {
    try {
      const int v = std::stoi(env);
      if (v >= 1) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs f(i) for i in [0, count) on up to `jobs` threads. Results land in
/// index order, so output never depends on the thread count.
template <class F>
auto parallel_map(std::size_t count, unsigned jobs, F f) {
  using R = decltype(f(std::size_t{0}));
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < count;) {
      try {
        slots[i] = f(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<R> out;
  out.reserve(count);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

struct BatchSummary {
  std::size_t runs = 0;
  std::size_t stabilized = 0;
  std::optional<double> median_round;
  std::optional<std::size_t> max_round;
  std::uint64_t monitor_hits = 0;
  std::uint64_t failures = 0;
  std::size_t budget_exceeded = 0;
};

struct BatchReport {
  json config;
  std::vector<RunRecord> records;
  BatchSummary summary;
  int exit_code = 0;
};

inline BatchSummary summarize(const std::vector<RunRecord>& records) {
  BatchSummary s;
  std::vector<std::size_t> rounds;
  for (const auto& r : records) {
    ++s.runs;
    if (r.stabilized) {
      ++s.stabilized;
      rounds.push_back(r.stabilization_round);
    }
    if (r.budget_exceeded) ++s.budget_exceeded;
    for (const auto& [_, n] : r.monitor_hits) s.monitor_hits += n;
    s.failures += r.failures.size();
  }
  if (!rounds.empty()) {
    std::sort(rounds.begin(), rounds.end());
    const std::size_t m = rounds.size();
    s.median_round = m % 2 ? static_cast<double>(rounds[m / 2]) : (rounds[m / 2 - 1] + rounds[m / 2]) / 2.0;
    s.max_round = rounds.back();
  }
  return s;
}

inline json summary_to_json(const BatchSummary& s) {
  return {{"runs", s.runs},
          {"stabilized", s.stabilized},
          {"median_stabilization_round", s.median_round ? json(*s.median_round) : json(nullptr)},
          {"max_stabilization_round", s.max_round ? json(*s.max_round) : json(nullptr)},
          {"monitor_hits", s.monitor_hits},
          {"post_stabilization_failures", s.failures},
          {"budget_exceeded", s.budget_exceeded}};
}

inline json report_to_json(const BatchReport& r) {
  json records = json::array();
  for (const auto& rec : r.records) records.push_back(record_to_json(rec));
  return {{"config", r.config}, {"summary", summary_to_json(r.summary)}, {"runs", records},
          {"exit_code", r.exit_code}};
}

enum ExitCode { exit_ok = 0, exit_violation = 1, exit_config = 2, exit_budget = 3 };

inline BatchReport run_experiment(const ExperimentConfig& c, unsigned jobs = default_jobs()) {
  BatchReport report;
  report.config = config_to_json(c);
  const AnyProtocol protocol = make_protocol(c.protocol);
  report.records = parallel_map(c.seeds.size(), jobs, [&](std::size_t i) { return run_one(c, protocol, c.seeds[i]); });
  report.summary = summarize(report.records);
  if (report.summary.failures > 0)
    report.exit_code = exit_violation;
  else if (c.hard_budget && report.summary.budget_exceeded > 0)
    report.exit_code = exit_budget;
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class Axis { n, D, B };

inline Axis parse_axis(const std::string& s) {
  if (s == "n") return Axis::n;
  if (s == "D") return Axis::D;
  if (s == "B" || s == "scheduler-B") return Axis::B;
  throw ConfigError("axis", "must be n, D or B");
}

inline const char* axis_name(Axis a) { return a == Axis::n ? "n" : a == Axis::D ? "D" : "B"; }

inline ExperimentConfig with_axis(ExperimentConfig c, Axis axis, std::uint64_t value) {
  switch (axis) {
    case Axis::n: c.graph.spec.n = value; break;
    case Axis::D:
      c.protocol.D = static_cast<int>(value);
      if (c.graph.diameter_bound) c.graph.diameter_bound = std::min<std::uint32_t>(*c.graph.diameter_bound, c.protocol.D);
      break;
    case Axis::B:
      if (c.scheduler.kind != "random_fair") throw ConfigError("scheduler.kind", "B sweeps need random_fair");
      c.scheduler.B = static_cast<std::uint32_t>(value);
      break;
  }
  return c;
}

struct SweepRow {
  std::uint64_t value = 0;
  BatchSummary summary;
};

struct SweepResult {
  Axis axis = Axis::n;
  json config;
  std::vector<SweepRow> rows;
  int exit_code = 0;
};

inline SweepResult sweep(const ExperimentConfig& base, Axis axis, const std::vector<std::uint64_t>& values,
                         unsigned jobs = default_jobs()) {
  if (values.empty()) throw ConfigError("values", "must not be empty");
  SweepResult out;
  out.axis = axis;
  out.config = config_to_json(base);
  for (std::uint64_t v : values) {
    const BatchReport r = run_experiment(with_axis(base, axis, v), jobs);
    out.rows.push_back({v, r.summary});
    out.exit_code = std::max(out.exit_code, r.exit_code == exit_violation ? 10 : r.exit_code);
  }
  if (out.exit_code == 10) out.exit_code = exit_violation;
  return out;
}

inline json sweep_to_json(const SweepResult& s) {
  json rows = json::array();
  for (const auto& r : s.rows) {
    json row = summary_to_json(r.summary);
    row[axis_name(s.axis)] = r.value;
    rows.push_back(row);
  }
  return {{"axis", axis_name(s.axis)}, {"config", s.config}, {"rows", rows}, {"exit_code", s.exit_code}};
}

inline void write_sweep_csv(std::ostream& out, const SweepResult& s) {
  out << axis_name(s.axis)
      << ",runs,stabilized,median_stabilization_round,max_stabilization_round,monitor_hits,"
         "post_stabilization_failures,budget_exceeded\n";
  for (const auto& r : s.rows) {
    const auto& m = r.summary;
    out << r.value << ',' << m.runs << ',' << m.stabilized << ','
        << (m.median_round ? json(*m.median_round).dump() : "") << ','
        << (m.max_round ? std::to_string(*m.max_round) : "") << ',' << m.monitor_hits << ',' << m.failures
        << ',' << m.budget_exceeded << '\n';
  }
}

// ---------------------------------------------------------------------------
// Trace replay.

inline io::ReplayResult replay_trace_file(std::istream& in) {
  const io::TraceFile f = io::read_trace_file(in);
  ProtocolSpec spec;
  try {
    spec = protocol_spec_from_json(f.header.at("meta").at("protocol"));
  } catch (const json::exception& e) {
    throw ParseError(std::string("trace header lacks protocol parameters: ") + e.what(), 1);
  }
  const AnyProtocol p = make_protocol(spec);
  return std::visit([&](const auto& proto) { return io::replay_trace(proto, f); }, p);
}

}  // namespace stoneage::experiment
