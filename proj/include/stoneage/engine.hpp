#pragma once

#include <algorithm>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/errors.hpp"
#include "stoneage/rng.hpp"
#include "stoneage/topology.hpp"

namespace stoneage {

using StateId = std::uint32_t;

/// Per-node states, indexed by node id.
using Configuration = std::vector<StateId>;

/// The set of states present in a node's inclusive neighborhood.
///
/// Stored as a sorted duplicate-free list: presence only, no multiplicity and
/// no neighbor identity.
class Signal {
 public:
  Signal() = default;
  explicit Signal(std::vector<StateId> states) : states_(std::move(states)) {
    std::sort(states_.begin(), states_.end());
    states_.erase(std::unique(states_.begin(), states_.end()), states_.end());
  }

  bool contains(StateId q) const { return std::binary_search(states_.begin(), states_.end(), q); }
  std::size_t size() const noexcept { return states_.size(); }
  bool empty() const noexcept { return states_.empty(); }
  auto begin() const noexcept { return states_.begin(); }
  auto end() const noexcept { return states_.end(); }
  const std::vector<StateId>& states() const noexcept { return states_; }

  bool operator==(const Signal&) const = default;

 private:
  std::vector<StateId> states_;
};

/// One candidate next state. Engine picks among candidates with probability
/// proportional to weight; equal weights give the uniform choice.
struct Outcome {
  StateId state;
  std::uint32_t weight = 1;
};
using Outcomes = std::vector<Outcome>;

/// ⟨Q, Q_O, ω, δ⟩ plus the restart re-entry state and (de)serialization.
///
/// transition() appends candidates to `out` (which the caller clears). It must
/// append at least one candidate and never a duplicate state.
template <class P>
concept Protocol = requires(const P& p, StateId q, const Signal& s, Outcomes& out,
                            std::string_view text) {
  { p.state_count() } -> std::convertible_to<std::size_t>;
  { p.initial_state() } -> std::convertible_to<StateId>;
  { p.is_output(q) } -> std::convertible_to<bool>;
  { p.output(q) } -> std::convertible_to<std::int64_t>;
  p.transition(q, s, out);
  { p.state_name(q) } -> std::convertible_to<std::string>;
  { p.parse_state(text) } -> std::convertible_to<StateId>;
  { p.name() } -> std::convertible_to<std::string>;
};

inline Signal compute_signal(const Configuration& config, const Graph& g, NodeId v) {
  std::vector<StateId> present;
  present.reserve(g.degree(v) + 1);
  present.push_back(config.at(v));
  for (NodeId u : g.neighbors(v)) present.push_back(config[u]);
  return Signal(std::move(present));
}

/// Picks one outcome for a 64-bit draw. Validates the candidate list.
inline StateId select_outcome(const Outcomes& outcomes, std::uint64_t draw) {
  std::uint64_t total = 0;
  for (const auto& o : outcomes) total += o.weight;
  std::uint64_t pick = scale_draw(draw, total);
  for (const auto& o : outcomes) {
    if (pick < o.weight) return o.state;
    pick -= o.weight;
  }
  return outcomes.back().state;
}

namespace detail {

template <Protocol P>
std::string describe(const P& protocol, StateId q, const Signal& s) {
  std::ostringstream out;
  out << "state " << protocol.state_name(q) << " with signal {";
  bool first = true;
  for (StateId r : s) {
    out << (first ? "" : ", ") << protocol.state_name(r);
    first = false;
  }
  out << "}";
  return out.str();
}

template <Protocol P>
void validate_outcomes(const P& protocol, StateId q, const Signal& s, const Outcomes& out) {
  if (out.empty())
    throw ProtocolError("transition returned no candidates for " + describe(protocol, q, s));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].weight == 0 || out[i].state >= protocol.state_count())
      throw ProtocolError("invalid candidate for " + describe(protocol, q, s));
    for (std::size_t j = 0; j < i; ++j)
      if (out[j].state == out[i].state)
        throw ProtocolError("duplicate candidate for " + describe(protocol, q, s));
  }
}

}  // namespace detail

/// Draw used by node v in step t of a run seeded with `seed`.
constexpr std::uint64_t transition_draw(std::uint64_t seed, NodeId v, std::uint64_t t) noexcept {
  return counter_draw(seed, streams::transitions, v, t);
}

/// One execution step: every activated node reads the pre-step configuration
/// and moves to a candidate of δ(state, signal). `draws`, when given, receives
/// the draw used by each activated node, in activation order.
template <Protocol P>
Configuration step(const Configuration& config, const Graph& g, const P& protocol,
                   std::span<const NodeId> activated, std::uint64_t seed, std::uint64_t t,
                   std::vector<std::uint64_t>* draws = nullptr) {
  Configuration next = config;
  Outcomes outcomes;
  for (NodeId v : activated) {
    if (v >= g.size()) throw std::invalid_argument("activated node out of range");
    Signal s = compute_signal(config, g, v);
    outcomes.clear();
    protocol.transition(config[v], s, outcomes);
    detail::validate_outcomes(protocol, config[v], s, outcomes);
    const std::uint64_t draw = transition_draw(seed, v, t);
    if (draws) draws->push_back(draw);
    next[v] = select_outcome(outcomes, draw);
  }
  return next;
}

enum class SchedulerKind { synchronous, round_robin, random_fair, scripted };

/// Oblivious activation schedule: the sequence depends only on
/// (kind, seed, n, B, script), never on the execution.
class Scheduler {
 public:
  static Scheduler synchronous() { return Scheduler(SchedulerKind::synchronous, 0, 1); }
  static Scheduler round_robin() { return Scheduler(SchedulerKind::round_robin, 0, 0); }
  static Scheduler random_fair(std::uint32_t bound, std::uint64_t seed) {
    if (bound < 1) throw std::invalid_argument("fairness bound must be >= 1");
    return Scheduler(SchedulerKind::random_fair, seed, bound);
  }
  /// Each entry is one step's activation set; an empty optional means "all
  /// nodes". The script repeats cyclically.
  static Scheduler scripted(std::vector<std::optional<std::vector<NodeId>>> script) {
    if (script.empty()) throw std::invalid_argument("scripted schedule is empty");
    Scheduler s(SchedulerKind::scripted, 0, 0);
    s.script_ = std::move(script);
    return s;
  }

  SchedulerKind kind() const noexcept { return kind_; }
  std::uint32_t fairness_bound() const noexcept { return bound_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const auto& script() const noexcept { return script_; }

  /// Activation set of step t. Must be called for t = 0, 1, 2, ... in order
  /// (random_fair keeps per-node last-activation times).
  std::vector<NodeId> next(std::size_t n, std::uint64_t t) {
    std::vector<NodeId> out;
    switch (kind_) {
      case SchedulerKind::synchronous:
        out.resize(n);
        for (NodeId v = 0; v < n; ++v) out[v] = v;
        break;
      case SchedulerKind::round_robin:
        out.push_back(static_cast<NodeId>(t % n));
        break;
      case SchedulerKind::random_fair: {
        if (last_.size() != n) last_.assign(n, -1);
        std::vector<bool> pick(n, false);
        bool any = false;
        for (NodeId v = 0; v < n; ++v) {
          pick[v] = counter_draw(seed_, streams::scheduler, v, t) >> 63;
          any = any || pick[v];
        }
        if (!any) pick[scale_draw(counter_draw(seed_, streams::scheduler, n, t), n)] = true;
        for (NodeId v = 0; v < n; ++v) {
          if (static_cast<std::int64_t>(t) - last_[v] >= static_cast<std::int64_t>(bound_))
            pick[v] = true;
          if (pick[v]) {
            out.push_back(v);
            last_[v] = static_cast<std::int64_t>(t);
          }
        }
        break;
      }
      case SchedulerKind::scripted: {
        const auto& entry = script_[t % script_.size()];
        if (!entry) {
          out.resize(n);
          for (NodeId v = 0; v < n; ++v) out[v] = v;
        } else {
          out = *entry;
        }
        break;
      }
    }
    return out;
  }

 private:
  Scheduler(SchedulerKind kind, std::uint64_t seed, std::uint32_t bound)
      : kind_(kind), seed_(seed), bound_(bound) {}

  SchedulerKind kind_;
  std::uint64_t seed_;
  std::uint32_t bound_;
  std::vector<std::optional<std::vector<NodeId>>> script_;
  std::vector<std::int64_t> last_;
};

/// Scripted schedule file: one step per line, comma-separated node ids or `*`.
inline Scheduler parse_schedule(std::istream& in) {
  std::vector<std::optional<std::vector<NodeId>>> script;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line.erase(std::remove_if(line.begin(), line.end(),
                              [](char c) { return c == ' ' || c == '\t' || c == '\r'; }),
               line.end());
    if (line == "*") {
      script.emplace_back(std::nullopt);
      continue;
    }
    std::vector<NodeId> ids;
    std::istringstream fields(line);
    std::string token;
    while (std::getline(fields, token, ',')) {
      if (token.empty()) throw ParseError("empty node id", lineno);
      std::size_t used = 0;
      unsigned long id = 0;
      try {
        id = std::stoul(token, &used);
      } catch (const std::exception&) {
        throw ParseError("bad node id `" + token + "`", lineno);
      }
      if (used != token.size()) throw ParseError("bad node id `" + token + "`", lineno);
      ids.push_back(static_cast<NodeId>(id));
    }
    script.emplace_back(std::move(ids));
  }
  if (script.empty()) throw ParseError("schedule is empty", 0);
  return Scheduler::scripted(std::move(script));
}

/// Online round operator: R(i+1) is the earliest time by which every node
/// has been activated at least once since R(i).
class RoundTracker {
 public:
  explicit RoundTracker(std::size_t n) : seen_(n, false), boundaries_{0} {}

  /// Records the activations of step t (the step spanning [t, t+1)).
  /// Returns true if a round closed at time t + 1.
  bool record(std::span<const NodeId> activated, std::uint64_t t) {
    for (NodeId v : activated) {
      if (!seen_[v]) {
        seen_[v] = true;
        ++count_;
      }
    }
    if (count_ < seen_.size()) return false;
    boundaries_.push_back(t + 1);
    std::fill(seen_.begin(), seen_.end(), false);
    count_ = 0;
    return true;
  }

  const std::vector<std::uint64_t>& boundaries() const noexcept { return boundaries_; }
  std::size_t completed_rounds() const noexcept { return boundaries_.size() - 1; }

 private:
  std::vector<bool> seen_;
  std::size_t count_ = 0;
  std::vector<std::uint64_t> boundaries_;
};

struct StepRecord {
  std::vector<NodeId> activated;
  std::vector<std::uint64_t> draws;
  Configuration after;
};

/// Recorded execution. Time t = 0 is the initial configuration; step t maps
/// the configuration at time t to the one at time t + 1.
struct Trace {
  std::uint64_t seed = 0;
  Configuration initial;
  std::vector<StepRecord> steps;
  std::vector<std::uint64_t> round_boundaries{0};

  std::size_t step_count() const noexcept { return steps.size(); }
  std::size_t completed_rounds() const noexcept { return round_boundaries.size() - 1; }

  const Configuration& config_at(std::size_t t) const {
    if (t > steps.size()) throw OutOfRange("time beyond trace");
    return t == 0 ? initial : steps[t - 1].after;
  }
  const Configuration& final_config() const { return config_at(steps.size()); }

  bool operator==(const Trace& other) const {
    if (seed != other.seed || initial != other.initial ||
        round_boundaries != other.round_boundaries || steps.size() != other.steps.size())
      return false;
    for (std::size_t i = 0; i < steps.size(); ++i) {
      const auto& a = steps[i];
      const auto& b = other.steps[i];
      if (a.activated != b.activated || a.draws != b.draws || a.after != b.after) return false;
    }
    return true;
  }
};

/// Round index i with R(i) <= t < R(i+1).
inline std::size_t rounds_elapsed(const Trace& trace, std::uint64_t t) {
  if (t > trace.step_count()) throw OutOfRange("time " + std::to_string(t) + " beyond trace");
  const auto& r = trace.round_boundaries;
  auto it = std::upper_bound(r.begin(), r.end(), t);
  return static_cast<std::size_t>(it - r.begin()) - 1;
}

using ConfigPredicate = std::function<bool(const Configuration&)>;

struct StopCondition {
  std::uint64_t max_steps = std::numeric_limits<std::uint64_t>::max();
  std::uint64_t max_rounds = std::numeric_limits<std::uint64_t>::max();
  /// When set, stop once the predicate has held at every time since some
  /// round boundary R(i) and R(i + window) has been reached.
  ConfigPredicate predicate;
  std::uint64_t window = 0;
};

enum class StopReason { max_steps, max_rounds, predicate };

struct RunResult {
  Trace trace;
  StopReason reason = StopReason::max_steps;
  /// false when the predicate stop condition was requested but never met.
  bool stabilized = false;
};

/// Called after every step with (t, C^t, A^t, C^{t+1}).
using StepObserver = std::function<void(std::uint64_t, const Configuration&,
                                        std::span<const NodeId>, const Configuration&)>;

template <Protocol P>
RunResult run(const Graph& g, const P& protocol, Scheduler scheduler, Configuration init,
              const StopCondition& stop, std::uint64_t seed,
              const StepObserver& observer = {}) {
  if (init.size() != g.size()) throw std::invalid_argument("initial configuration size mismatch");
  for (StateId q : init)
    if (q >= protocol.state_count()) throw std::invalid_argument("initial state outside Q");

  RunResult result;
  Trace& trace = result.trace;
  trace.seed = seed;
  trace.initial = std::move(init);
  RoundTracker rounds(g.size());

  // Predicate bookkeeping: the round index from which it has held throughout.
  std::optional<std::size_t> holding_since;
  auto check_predicate = [&](const Configuration& c, std::size_t round, bool at_boundary) {
    if (!stop.predicate) return;
    if (!stop.predicate(c)) {
      holding_since.reset();
    } else if (!holding_since && at_boundary) {
      holding_since = round;
    }
  };
  check_predicate(trace.initial, 0, true);

  Configuration current = trace.initial;
  for (std::uint64_t t = 0;; ++t) {
    if (stop.predicate && holding_since &&
        rounds.completed_rounds() >= *holding_since + stop.window) {
      result.reason = StopReason::predicate;
      result.stabilized = true;
      break;
    }
    if (t >= stop.max_steps) {
      result.reason = StopReason::max_steps;
      break;
    }
    if (rounds.completed_rounds() >= stop.max_rounds) {
      result.reason = StopReason::max_rounds;
      break;
    }
    StepRecord rec;
    rec.activated = scheduler.next(g.size(), t);
    rec.after = step(current, g, protocol, rec.activated, seed, t, &rec.draws);
    const bool closed = rounds.record(rec.activated, t);
    if (observer) observer(t, current, rec.activated, rec.after);
    current = rec.after;
    trace.steps.push_back(std::move(rec));
    check_predicate(current, rounds.completed_rounds(), closed);
  }
  trace.round_boundaries = rounds.boundaries();
  return result;
}

/// Uniformly random configuration over the whole state universe.
template <Protocol P>
Configuration random_configuration(const P& protocol, std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, streams::init);
  Configuration c(n);
  for (auto& q : c) q = static_cast<StateId>(rng.uniform(protocol.state_count()));
  return c;
}

template <Protocol P>
Configuration uniform_configuration(const P& protocol, std::size_t n) {
  return Configuration(n, protocol.initial_state());
}

/// Outputs ω(C(v)) when C is an output configuration.
template <Protocol P>
std::optional<std::vector<std::int64_t>> output_vector(const P& protocol, const Configuration& c) {
  std::vector<std::int64_t> out(c.size());
  for (std::size_t v = 0; v < c.size(); ++v) {
    if (!protocol.is_output(c[v])) return std::nullopt;
    out[v] = protocol.output(c[v]);
  }
  return out;
}

}  // namespace stoneage
