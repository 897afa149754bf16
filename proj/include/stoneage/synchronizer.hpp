#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/unison.hpp"
#include "stoneage/violation.hpp"

namespace stoneage::sync {

using unison::Turn;

/// (current Π-state, previous Π-state, AU turn).
struct ProductState {
  StateId current = 0;
  StateId previous = 0;
  Turn clock = Turn::able(1);

  bool operator==(const ProductState&) const = default;
};

/// Π-states a node would sense in the synchronous round it is about to
/// simulate: current states of neighbors still on clock ν, previous states
/// of neighbors already on ν'. Neighbors on any other turn contribute nothing.
inline Signal simulated_signal(std::span<const ProductState> sensed, Turn nu, Turn nu_next) {
  std::vector<StateId> present;
  for (const auto& s : sensed) {
    if (s.clock == nu) present.push_back(s.current);
    if (s.clock == nu_next) present.push_back(s.previous);
  }
  return Signal(std::move(present));
}

/// Π*: the asynchronous version of a synchronous protocol Π, driven by the
/// AlgAU clock. A Π-step happens exactly when the clock makes an AA move.
template <Protocol Pi>
class Synchronized {
 public:
  Synchronized(Pi pi, int D) : pi_(std::move(pi)), au_(D) {
    q_ = pi_.state_count();
    t_ = au_.state_count();
    const auto limit = static_cast<std::size_t>(std::numeric_limits<StateId>::max());
    if (q_ > limit / q_ || q_ * q_ > limit / t_)
      throw DomainError("product state space does not fit a 32-bit state index");
  }

  const Pi& pi() const noexcept { return pi_; }
  const unison::AuProtocol& au() const noexcept { return au_; }

  std::size_t state_count() const { return q_ * q_ * t_; }
  StateId initial_state() const {
    return encode({pi_.initial_state(), pi_.initial_state(), Turn::able(1)});
  }
  bool is_output(StateId s) const {
    const ProductState p = decode(s);
    return !p.clock.faulty && pi_.is_output(p.current);
  }
  std::int64_t output(StateId s) const {
    const ProductState p = decode(s);
    if (p.clock.faulty) throw DomainError("faulty clock has no output");
    return pi_.output(p.current);
  }
  std::string name() const { return "sync-" + pi_.name(); }

  StateId encode(const ProductState& p) const {
    if (p.current >= q_ || p.previous >= q_) throw DomainError("Π-state out of range");
    return static_cast<StateId>((p.current * q_ + p.previous) * t_ + au_.encode(p.clock));
  }
  ProductState decode(StateId s) const {
    if (s >= state_count()) throw DomainError("product state out of range");
    const std::size_t turn = s % t_;
    const std::size_t pair = s / t_;
    return {static_cast<StateId>(pair / q_), static_cast<StateId>(pair % q_),
            au_.decode(static_cast<StateId>(turn))};
  }

  std::string state_name(StateId s) const {
    const ProductState p = decode(s);
    return "(" + pi_.state_name(p.current) + ";" + pi_.state_name(p.previous) + ";" +
           unison::turn_name(p.clock) + ")";
  }
  StateId parse_state(std::string_view text) const {
    if (text.size() < 2 || text.front() != '(' || text.back() != ')')
      throw DomainError("bad product state `" + std::string(text) + "`");
    auto body = text.substr(1, text.size() - 2);
    auto a = body.find(';');
    auto b = a == std::string_view::npos ? a : body.find(';', a + 1);
    if (b == std::string_view::npos) throw DomainError("bad product state `" + std::string(text) + "`");
    return encode({pi_.parse_state(body.substr(0, a)), pi_.parse_state(body.substr(a + 1, b - a - 1)),
                   unison::AuProtocol::parse_turn(body.substr(b + 1))});
  }

  std::vector<ProductState> decode_signal(const Signal& s) const {
    std::vector<ProductState> out;
    out.reserve(s.size());
    for (StateId r : s) out.push_back(decode(r));
    return out;
  }

  void transition(StateId s, const Signal& sig, Outcomes& out) const {
    const ProductState own = decode(s);
    const auto sensed = decode_signal(sig);
    std::vector<Turn> turns(sensed.size());
    std::transform(sensed.begin(), sensed.end(), turns.begin(),
                   [](const ProductState& p) { return p.clock; });
    const auto clock = au_.next_turn(own.clock, turns);
    if (clock.type != unison::TransitionType::able_able) {
      out.push_back({encode({own.current, own.previous, clock.next}), 1});
      return;
    }
    const Signal simulated = simulated_signal(sensed, own.clock, clock.next);
    Outcomes pi_out;
    pi_.transition(own.current, simulated, pi_out);
    detail::validate_outcomes(pi_, own.current, simulated, pi_out);
    for (const auto& o : pi_out) out.push_back({encode({o.state, own.current, clock.next}), o.weight});
  }

  /// Π* configuration with every clock at able(1) and previous = current.
  Configuration lift(const Configuration& pi_config) const {
    Configuration c(pi_config.size());
    for (std::size_t v = 0; v < c.size(); ++v)
      c[v] = encode({pi_config[v], pi_config[v], Turn::able(1)});
    return c;
  }

  Configuration project(const Configuration& c) const {
    Configuration out(c.size());
    for (std::size_t v = 0; v < c.size(); ++v) out[v] = decode(c[v]).current;
    return out;
  }

  std::vector<Turn> clocks(const Configuration& c) const {
    std::vector<Turn> out(c.size());
    for (std::size_t v = 0; v < c.size(); ++v) out[v] = decode(c[v]).clock;
    return out;
  }

 private:
  Pi pi_;
  unison::AuProtocol au_;
  std::size_t q_ = 0, t_ = 0;
};

template <Protocol Pi>
Synchronized<Pi> synchronize(Pi pi, int D) {
  return Synchronized<Pi>(std::move(pi), D);
}

struct FidelityReport {
  std::optional<std::uint64_t> good_from;  // first time the clock layer is good
  std::size_t checked_transitions = 0;
  ViolationLog violations;
};

/// Asynchronous fidelity oracle.
///
/// From the first time the clock layer is good, each node's Π-state
/// sequence is reconstructed from the trace, indexed by synchronous round.
/// Every Π-transition must read a simulated signal equal to the signal of
/// that reconstructed execution in its round, and must land on a candidate
/// of δ_Π for that signal.
template <Protocol Pi>
FidelityReport check_fidelity(const Synchronized<Pi>& sp, const Graph& g, const Trace& trace) {
  FidelityReport r;
  const auto& au = sp.au();
  const auto& levels = au.levels();
  const std::size_t T = trace.step_count();
  for (std::size_t t = 0; t <= T; ++t) {
    unison::TurnView view(g, levels, sp.clocks(trace.config_at(t)), au.diameter_bound());
    if (view.graph_good()) {
      r.good_from = t;
      break;
    }
  }
  if (!r.good_from) return r;

  // Round heights relative to the start of the contiguous level block.
  const auto& c0 = trace.config_at(*r.good_from);
  std::vector<bool> present(levels.level_count(), false);
  for (StateId s : c0) present[levels.clock_index(sp.decode(s).clock.level)] = true;
  int base = 0;
  for (int i = 0; i < levels.level_count(); ++i) {
    const int prev = (i + levels.level_count() - 1) % levels.level_count();
    if (present[i] && !present[prev]) base = i;
  }
  const std::size_t n = g.size();
  std::vector<std::map<std::int64_t, StateId>> history(n);
  std::vector<std::int64_t> height(n);
  for (NodeId v = 0; v < n; ++v) {
    const ProductState p = sp.decode(c0[v]);
    const int idx = levels.clock_index(p.clock.level);
    height[v] = (idx - base + levels.level_count()) % levels.level_count();
    history[v][height[v]] = p.current;
    history[v][height[v] - 1] = p.previous;
  }

  Outcomes cands;
  for (std::size_t t = *r.good_from; t < T; ++t) {
    const auto& before = trace.config_at(t);
    const auto& after = trace.config_at(t + 1);
    const auto& activated = trace.steps[t].activated;
    // Lookups use the histories as of the start of the step.
    std::vector<std::pair<NodeId, StateId>> updates;
    for (NodeId v : activated) {
      const ProductState a = sp.decode(before[v]), b = sp.decode(after[v]);
      if (a.clock == b.clock) continue;
      if (a.clock.faulty || b.clock.faulty || b.clock.level != levels.forward(a.clock.level)) {
        r.violations.push_back({"sync.clock", t, {v}, "non-AA clock move after stabilization"});
        continue;
      }
      ++r.checked_transitions;
      const std::int64_t i = height[v];
      std::vector<StateId> round_states;
      bool known = true;
      for (NodeId u : g.neighbors(v)) {
        auto it = history[u].find(i);
        if (it == history[u].end()) {
          known = false;
          break;
        }
        round_states.push_back(it->second);
      }
      round_states.push_back(history[v].at(i));
      if (!known) {
        r.violations.push_back({"sync.fidelity", t, {v}, "neighbor round state unavailable"});
        continue;
      }
      const Signal expected(std::move(round_states));
      const Signal used = simulated_signal(sp.decode_signal(compute_signal(before, g, v)), a.clock, b.clock);
      if (!(expected == used))
        r.violations.push_back({"sync.fidelity", t, {v}, "simulated signal differs from round signal"});
      if (b.previous != a.current)
        r.violations.push_back({"sync.fidelity", t, {v}, "previous coordinate not shifted"});
      cands.clear();
      sp.pi().transition(history[v].at(i), expected, cands);
      if (std::none_of(cands.begin(), cands.end(), [&](const Outcome& o) { return o.state == b.current; }))
        r.violations.push_back({"sync.fidelity", t, {v}, "new state is not a δ candidate"});
      updates.push_back({v, b.current});
    }
    for (auto [v, q] : updates) history[v][++height[v]] = q;
  }
  return r;
}

/// Lockstep fidelity: Π* from lift(init) under the synchronous scheduler
/// against Π from init, same seed. Returns the first step whose projected
/// configuration differs, or nullopt when all `steps` agree.
template <Protocol Pi>
std::optional<std::uint64_t> lockstep_mismatch(const Synchronized<Pi>& sp, const Graph& g,
                                               const Configuration& init, std::uint64_t steps,
                                               std::uint64_t seed) {
  StopCondition stop;
  stop.max_steps = steps;
  auto direct = run(g, sp.pi(), Scheduler::synchronous(), init, stop, seed);
  auto lifted = run(g, sp, Scheduler::synchronous(), sp.lift(init), stop, seed);
  for (std::uint64_t t = 0; t <= steps; ++t)
    if (sp.project(lifted.trace.config_at(t)) != direct.trace.config_at(t)) return t;
  return std::nullopt;
}

}  // namespace stoneage::sync
