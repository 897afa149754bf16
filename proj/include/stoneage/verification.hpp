#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/failed_unison.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/unison.hpp"
#include "stoneage/violation.hpp"

namespace stoneage::verify {

// ---------------------------------------------------------------------------
// Task checkers. They read output values and the graph only.

/// Cyclic clock of an AU protocol: outputs are mapped to Z_modulus.
struct ClockModel {
  std::int64_t modulus = 0;
  std::function<std::int64_t(std::int64_t)> to_index;

  /// Forward distance from a to b in Z_modulus.
  std::int64_t advance(std::int64_t a, std::int64_t b) const {
    const std::int64_t d = (to_index(b) - to_index(a)) % modulus;
    return d < 0 ? d + modulus : d;
  }
  bool adjacent(std::int64_t a, std::int64_t b) const {
    const std::int64_t d = advance(a, b);
    return d == 0 || d == 1 || d == modulus - 1;
  }
};

inline ClockModel clock_model(const unison::AuProtocol& au) {
  const unison::LevelSpace levels = au.levels();
  return {levels.level_count(),
          [levels](std::int64_t l) { return levels.clock_index(static_cast<int>(l)); }};
}

inline ClockModel clock_model(const failed::FailedAu& p) {
  return {p.top() + 1, [](std::int64_t l) { return l; }};
}

enum class Status { ok, violation, not_output, budget };

inline const char* status_name(Status s) {
  switch (s) {
    case Status::ok: return "ok";
    case Status::violation: return "violation";
    case Status::not_output: return "not an output configuration";
    case Status::budget: return "budget exceeded";
  }
  return "?";
}

struct CheckResult {
  Status status = Status::ok;
  std::vector<NodeId> nodes;  // witnessing edge, node or leader set
  std::optional<std::uint64_t> step;
  std::string detail;

  bool ok() const noexcept { return status == Status::ok; }
};

inline CheckResult fail(Status s, std::vector<NodeId> nodes, std::string detail,
                        std::optional<std::uint64_t> step = std::nullopt) {
  return {s, std::move(nodes), step, std::move(detail)};
}

/// Neighboring outputs must be equal or one clock tick apart.
template <Protocol P>
CheckResult check_au_safety(const Configuration& c, const Graph& g, const P& protocol,
                            const ClockModel& clock) {
  const auto out = output_vector(protocol, c);
  if (!out) {
    for (NodeId v = 0; v < c.size(); ++v)
      if (!protocol.is_output(c[v])) return fail(Status::not_output, {v}, "not an output configuration");
  }
  for (auto [u, v] : g.edges()) {
    if (!clock.adjacent((*out)[u], (*out)[v]))
      return fail(Status::violation, {u, v},
                  "clocks " + std::to_string((*out)[u]) + " and " + std::to_string((*out)[v]) +
                      " are not adjacent");
  }
  return {};
}

inline CheckResult check_au_safety(const Configuration& c, const Graph& g,
                                   const unison::AuProtocol& au) {
  return check_au_safety(c, g, au, clock_model(au));
}

/// Liveness over [R(from_round), R(from_round + diam + i)): every node makes
/// at least i clock increments, and every output-to-output change is a
/// single forward tick. Changes hidden behind non-output states are compared
/// against the last output seen in the window.
template <Protocol P>
CheckResult check_au_liveness(const Trace& trace, const Graph& g, const P& protocol,
                              const ClockModel& clock, std::size_t from_round, int i) {
  const std::size_t to_round = from_round + g.diameter() + static_cast<std::size_t>(i);
  if (to_round >= trace.round_boundaries.size())
    return fail(Status::budget, {},
                "trace ends before round " + std::to_string(to_round) + " (has " +
                    std::to_string(trace.completed_rounds()) + ")");
  const std::uint64_t begin = trace.round_boundaries[from_round];
  const std::uint64_t end = trace.round_boundaries[to_round];
  const std::size_t n = g.size();
  std::vector<std::optional<std::int64_t>> last(n);
  std::vector<int> increments(n, 0);
  const auto& c0 = trace.config_at(begin);
  for (NodeId v = 0; v < n; ++v)
    if (protocol.is_output(c0[v])) last[v] = protocol.output(c0[v]);
  for (std::uint64_t t = begin; t < end; ++t) {
    const auto& after = trace.config_at(t + 1);
    for (NodeId v : trace.steps[t].activated) {
      if (!protocol.is_output(after[v])) continue;
      const std::int64_t now = protocol.output(after[v]);
      if (last[v] && *last[v] != now) {
        if (clock.advance(*last[v], now) != 1)
          return fail(Status::violation, {v},
                      "clock jumped from " + std::to_string(*last[v]) + " to " + std::to_string(now),
                      t);
        ++increments[v];
      }
      last[v] = now;
    }
  }
  for (NodeId v = 0; v < n; ++v)
    if (increments[v] < i)
      return fail(Status::violation, {v},
                  "node made " + std::to_string(increments[v]) + " of " + std::to_string(i) +
                      " increments in rounds [" + std::to_string(from_round) + ", " +
                      std::to_string(to_round) + ")");
  return {};
}

/// Sampling policy for the "for all t" part of liveness: consecutive windows
/// of diam + i rounds tiling the trace from `from_round` to its end. At least
/// one full window must fit.
template <Protocol P>
CheckResult check_au_liveness_tail(const Trace& trace, const Graph& g, const P& protocol,
                                   const ClockModel& clock, std::size_t from_round, int i) {
  const std::size_t span = g.diameter() + static_cast<std::size_t>(i);
  CheckResult r = check_au_liveness(trace, g, protocol, clock, from_round, i);
  for (std::size_t j = from_round + span; r.ok() && j + span <= trace.completed_rounds(); j += span)
    r = check_au_liveness(trace, g, protocol, clock, j, i);
  return r;
}

/// Independent and maximal: no 1-1 edge, every 0 has a 1-neighbor.
inline CheckResult check_mis(const std::vector<std::int64_t>& out, const Graph& g) {
  for (auto [u, v] : g.edges())
    if (out[u] == 1 && out[v] == 1) return fail(Status::violation, {u, v}, "independence violated");
  for (NodeId v = 0; v < g.size(); ++v) {
    if (out[v] == 1) continue;
    const auto& nb = g.neighbors(v);
    if (std::none_of(nb.begin(), nb.end(), [&](NodeId u) { return out[u] == 1; }))
      return fail(Status::violation, {v}, "maximality violated");
  }
  return {};
}

inline CheckResult check_le(const std::vector<std::int64_t>& out) {
  std::vector<NodeId> leaders;
  for (NodeId v = 0; v < out.size(); ++v)
    if (out[v] == 1) leaders.push_back(v);
  if (leaders.empty()) return fail(Status::violation, {}, "no leader");
  if (leaders.size() > 1) return fail(Status::violation, leaders, "multiple leaders");
  return {};
}

// ---------------------------------------------------------------------------
// Stabilization measurement.

enum class Task { au, mis, le };

inline const char* task_name(Task t) {
  switch (t) {
    case Task::au: return "au";
    case Task::mis: return "mis";
    case Task::le: return "le";
  }
  return "?";
}

struct TaskChecker {
  Task task = Task::au;
  std::uint64_t window = 0;           // W, in rounds
  std::optional<ClockModel> clock;    // AU only
  std::vector<int> liveness_i{1};     // AU only: sampled i values

  static TaskChecker au(const ClockModel& clock, int k) {
    return {Task::au, static_cast<std::uint64_t>(4 * 2 * k), clock, {1}};
  }
  static TaskChecker au(const unison::AuProtocol& p) { return au(clock_model(p), p.k()); }
  static TaskChecker mis(int D) { return {Task::mis, static_cast<std::uint64_t>(2 * D + 4), {}, {}}; }
  static TaskChecker le(int D) { return {Task::le, static_cast<std::uint64_t>(2 * D + 4), {}, {}}; }

  bool is_static() const noexcept { return task != Task::au; }
};

struct StabilizationReport {
  bool stabilized = false;
  std::size_t stabilization_round = 0;   // smallest i valid from R(i) to the end
  std::uint64_t stabilization_time = 0;  // R(stabilization_round)
  std::size_t rounds_observed = 0;
  std::uint64_t steps_used = 0;
  ViolationLog violations;               // failures after stabilization
};

/// Configuration-level validity for the task (output configuration that
/// passes the task predicate).
template <Protocol P>
bool configuration_valid(const Configuration& c, const Graph& g, const P& protocol,
                         const TaskChecker& checker) {
  const auto out = output_vector(protocol, c);
  if (!out) return false;
  switch (checker.task) {
    case Task::au: return check_au_safety(c, g, protocol, *checker.clock).ok();
    case Task::mis: return check_mis(*out, g).ok();
    case Task::le: return check_le(*out).ok();
  }
  return false;
}

/// Tail reading of "valid from R(i) through R(i+W)": i is the first round
/// after the last invalid configuration (and, for static tasks, not before
/// the last output change), and the trace must extend W rounds beyond it.
/// For AU, the liveness check then runs on the stabilized tail.
template <Protocol P>
StabilizationReport measure_stabilization(const Trace& trace, const Graph& g, const P& protocol,
                                          const TaskChecker& checker) {
  if (checker.task == Task::au && !checker.clock)
    throw std::invalid_argument("AU checker needs a clock model");
  StabilizationReport r;
  r.steps_used = trace.step_count();
  r.rounds_observed = trace.completed_rounds();
  const auto& R = trace.round_boundaries;
  std::uint64_t earliest = 0;  // R(i) must be >= earliest
  std::optional<std::vector<std::int64_t>> previous;
  for (std::uint64_t t = 0; t <= trace.step_count(); ++t) {
    const auto& c = trace.config_at(t);
    if (!configuration_valid(c, g, protocol, checker)) {
      earliest = t + 1;
      previous.reset();
      continue;
    }
    if (checker.is_static()) {
      auto out = output_vector(protocol, c);
      if (previous && *previous != *out) earliest = std::max(earliest, t);
      previous = std::move(out);
    }
  }
  const auto it = std::lower_bound(R.begin(), R.end(), earliest);
  if (it == R.end()) return r;
  r.stabilization_round = static_cast<std::size_t>(it - R.begin());
  r.stabilization_time = *it;
  if (r.stabilization_round + checker.window > r.rounds_observed) return r;
  r.stabilized = true;
  if (checker.task == Task::au) {
    for (int i : checker.liveness_i) {
      const auto live = check_au_liveness_tail(trace, g, protocol, *checker.clock, r.stabilization_round, i);
      if (!live.ok()) {
        r.violations.push_back({"au.liveness", live.step.value_or(r.stabilization_time), live.nodes,
                                "i=" + std::to_string(i) + ": " + live.detail});
        r.stabilized = false;
      }
    }
  }
  return r;
}

/// Splits a monitor log into informational (before `from`) and failing hits.
inline ViolationLog after(const ViolationLog& log, std::uint64_t from) {
  ViolationLog out;
  for (const auto& v : log)
    if (v.step >= from) out.push_back(v);
  return out;
}

// ---------------------------------------------------------------------------
// Invariant monitors.

/// Per-monitor tallies plus a bounded sample of the hits.
class MonitorLog {
 public:
  explicit MonitorLog(std::size_t keep_per_monitor = 16) : keep_(keep_per_monitor) {}

  void pass(const std::string& monitor) { ++counts_[monitor].checks; }
  void hit(Violation v) {
    auto& c = counts_[v.monitor];
    ++c.checks;
    if (c.violations++ < keep_) log_.push_back(std::move(v));
  }

  struct Count {
    std::uint64_t checks = 0;
    std::uint64_t violations = 0;
  };
  const std::map<std::string, Count>& counts() const noexcept { return counts_; }
  const ViolationLog& log() const noexcept { return log_; }
  std::uint64_t total_violations() const {
    std::uint64_t s = 0;
    for (const auto& [_, c] : counts_) s += c.violations;
    return s;
  }

 private:
  std::size_t keep_;
  std::map<std::string, Count> counts_;
  ViolationLog log_;
};

using TurnExtractor = std::function<std::vector<unison::Turn>(const Configuration&)>;

/// Step monitors for the structural invariants of AlgAU, evaluated on the
/// turns extracted from each configuration (AlgAU itself or the clock layer
/// of a synchronized protocol).
///
/// au.obs1          protected edge, levels not {-k, k}  -> still protected
/// au.obs3          out-protected node                  -> still out-protected
/// au.obs4          level changed                       -> out-protected after
/// au.obs5          non-protected edge, λu < λv          -> λu ≤ λu' < λv' ≤ λv
/// au.obs9          all nodes protected                 -> levels are a φ-block of ≤ diam+1
/// au.lemma1        graph good                          -> graph good after
/// au.lemma9        from the first out-protected time:  not unjustifiably faulty stays so
class AuMonitors {
 public:
  AuMonitors(const Graph& g, int D, TurnExtractor extract, std::size_t keep = 16)
      : g_(&g), levels_(3 * D + 2), d_(D), extract_(std::move(extract)), log_(keep) {}

  static AuMonitors for_protocol(const Graph& g, const unison::AuProtocol& au, std::size_t keep = 16) {
    return AuMonitors(g, au.diameter_bound(), [au](const Configuration& c) { return au.turns(c); },
                      keep);
  }

  void observe(std::uint64_t t, const Configuration& before, std::span<const NodeId>,
               const Configuration& after) {
    const unison::TurnView a(*g_, levels_, extract_(before), d_);
    const unison::TurnView b(*g_, levels_, extract_(after), d_);
    const int k = levels_.k();
    const std::size_t n = g_->size();

    for (auto [u, v] : g_->edges()) {
      const int lu = a.level(u), lv = a.level(v);
      if (a.edge_protected(u, v)) {
        if (!(std::min(lu, lv) == -k && std::max(lu, lv) == k))
          check("au.obs1", b.edge_protected(u, v), t, {u, v}, "protected edge lost protection");
      } else {
        const NodeId lo = lu < lv ? u : v, hi = lu < lv ? v : u;
        const int l0 = a.level(lo), l1 = a.level(hi), m0 = b.level(lo), m1 = b.level(hi);
        check("au.obs5", l0 <= m0 && m0 < m1 && m1 <= l1, t, {lo, hi},
              "levels " + std::to_string(l0) + "<" + std::to_string(l1) + " became " +
                  std::to_string(m0) + "," + std::to_string(m1));
      }
    }
    if (!out_protected_seen_ && a.graph_out_protected()) out_protected_seen_ = t;
    for (NodeId v = 0; v < n; ++v) {
      if (a.out_protected(v)) check("au.obs3", b.out_protected(v), t, {v}, "out-protection lost");
      if (a.level(v) != b.level(v))
        check("au.obs4", b.out_protected(v), t, {v}, "level changed without out-protection");
      if (out_protected_seen_ && !a.unjustifiably_faulty(v))
        check("au.lemma9", !b.unjustifiably_faulty(v), t, {v}, "became unjustifiably faulty");
    }
    if (b.graph_protected()) check_contiguous(b, t + 1);
    if (a.graph_good()) check("au.lemma1", b.graph_good(), t, {}, "good graph became not good");
  }

  StepObserver observer() {
    return [this](std::uint64_t t, const Configuration& before, std::span<const NodeId> act,
                  const Configuration& after) { observe(t, before, act, after); };
  }

  const MonitorLog& log() const noexcept { return log_; }
  std::uint64_t total_violations() const { return log_.total_violations(); }

 private:
  void check(const char* monitor, bool ok, std::uint64_t t, std::vector<NodeId> nodes,
             std::string detail) {
    if (ok)
      log_.pass(monitor);
    else
      log_.hit({monitor, t, std::move(nodes), std::move(detail)});
  }

  // Levels of a fully protected graph occupy a contiguous φ-block of at most
  // diam(G) + 1 levels.
  void check_contiguous(const unison::TurnView& view, std::uint64_t t) {
    const int m = levels_.level_count();
    std::vector<bool> present(m, false);
    for (NodeId v = 0; v < g_->size(); ++v) present[levels_.clock_index(view.level(v))] = true;
    int used = 0, starts = 0;
    for (int i = 0; i < m; ++i) {
      used += present[i];
      if (present[i] && !present[(i + m - 1) % m]) ++starts;
    }
    const bool ok = (starts == 1 || used == m) && used <= static_cast<int>(g_->diameter()) + 1;
    check("au.obs9", ok, t, {},
          std::to_string(used) + " levels in " + std::to_string(starts) + " blocks");
  }

  const Graph* g_;
  unison::LevelSpace levels_;
  int d_;
  TurnExtractor extract_;
  MonitorLog log_;
  std::optional<std::uint64_t> out_protected_seen_;
};

/// Replays a recorded trace through a step monitor.
template <class Monitor>
void replay(const Trace& trace, Monitor& monitor) {
  for (std::uint64_t t = 0; t < trace.step_count(); ++t)
    monitor.observe(t, trace.config_at(t), trace.steps[t].activated, trace.config_at(t + 1));
}

}  // namespace stoneage::verify
