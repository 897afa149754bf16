#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/unison.hpp"

namespace stoneage::failed {

/// Main turn ℓ in 0..cD, or reset turn R_i in 0..cD.
struct FailedTurn {
  bool reset = false;
  int value = 0;

  static FailedTurn main(int l) { return {false, l}; }
  static FailedTurn reset_turn(int i) { return {true, i}; }
  bool operator==(const FailedTurn&) const = default;
};

enum class FailedMove { none, st1, st2, st3 };

inline const char* move_name(FailedMove m) {
  switch (m) {
    case FailedMove::none: return "none";
    case FailedMove::st1: return "ST1";
    case FailedMove::st2: return "ST2";
    case FailedMove::st3: return "ST3";
  }
  return "?";
}

struct FailedStep {
  FailedTurn next;
  FailedMove move = FailedMove::none;
};

/// The reset-based unison attempt. It is not self-stabilizing: see
/// livelock_instance().
class FailedAu {
 public:
  FailedAu(int c, int D) : top_(c * D) {
    if (c < 2 || D < 1) throw DomainError("failed AU needs c >= 2 and D >= 1");
  }

  int top() const noexcept { return top_; }  // cD

  std::size_t state_count() const { return static_cast<std::size_t>(2 * (top_ + 1)); }
  StateId initial_state() const { return encode(FailedTurn::main(0)); }
  bool is_output(StateId q) const { return !decode(q).reset; }
  std::int64_t output(StateId q) const {
    const FailedTurn t = decode(q);
    if (t.reset) throw DomainError("reset turn has no output");
    return t.value;
  }
  std::string name() const { return "failed-au"; }

  StateId encode(FailedTurn t) const {
    if (t.value < 0 || t.value > top_) throw DomainError("failed-AU turn out of range");
    return static_cast<StateId>(t.reset ? top_ + 1 + t.value : t.value);
  }
  FailedTurn decode(StateId q) const {
    if (q >= state_count()) throw DomainError("failed-AU state out of range");
    const int x = static_cast<int>(q);
    return x <= top_ ? FailedTurn::main(x) : FailedTurn::reset_turn(x - top_ - 1);
  }
  std::string state_name(StateId q) const {
    const FailedTurn t = decode(q);
    return (t.reset ? "X" : "M") + std::to_string(t.value);
  }
  StateId parse_state(std::string_view text) const {
    if (text.size() < 2 || (text[0] != 'X' && text[0] != 'M'))
      throw DomainError("bad failed-AU turn `" + std::string(text) + "`");
    int v = 0;
    for (char ch : text.substr(1)) {
      if (ch < '0' || ch > '9') throw DomainError("bad failed-AU turn `" + std::string(text) + "`");
      v = v * 10 + (ch - '0');
    }
    return encode({text[0] == 'X', v});
  }

  /// ST1/ST2/ST3 on the sensed turns (own turn included). A sensed reset
  /// turn is never a level, so it blocks ST1 and triggers ST2 unless it is
  /// the R_cD exception at level 0.
  FailedStep next_turn(FailedTurn own, std::span<const FailedTurn> sensed) const {
    const int m = top_ + 1;
    if (!own.reset) {
      const int l = own.value, up = (l + 1) % m, down = (l + m - 1) % m;
      bool within_pair = true, within_triple = true;
      for (const auto& s : sensed) {
        if (s.reset) {
          within_pair = false;
          if (!(l == 0 && s.value == top_)) within_triple = false;
          continue;
        }
        if (s.value != l && s.value != up) within_pair = false;
        if (s.value != l && s.value != up && s.value != down) within_triple = false;
      }
      if (within_pair) return {FailedTurn::main(up), FailedMove::st1};
      if (!within_triple) return {FailedTurn::reset_turn(0), FailedMove::st2};
      return {own, FailedMove::none};
    }
    const int i = own.value;
    bool ok = true;
    for (const auto& s : sensed) {
      if (i != top_) {
        if (!s.reset || s.value < i) ok = false;
      } else if (!((s.reset && s.value == top_) || (!s.reset && s.value == 0))) {
        ok = false;
      }
    }
    if (!ok) return {own, FailedMove::none};
    return {i == top_ ? FailedTurn::main(0) : FailedTurn::reset_turn(i + 1), FailedMove::st3};
  }

  void transition(StateId q, const Signal& s, Outcomes& out) const {
    std::vector<FailedTurn> sensed;
    for (StateId r : s) sensed.push_back(decode(r));
    out.push_back({encode(next_turn(decode(q), sensed).next), 1});
  }

 private:
  int top_;
};

/// Wheel with hub v0 and rim v1..v7 (a 7-cycle); c = 2, D = 2.
struct LivelockInstance {
  Graph graph;
  FailedAu protocol;
  Configuration initial;
};

inline LivelockInstance livelock_instance() {
  FailedAu p(2, 2);
  GraphSpec spec;
  spec.kind = GraphKind::wheel;
  spec.n = 8;
  Graph g = build_graph(spec);
  using T = FailedTurn;
  const std::vector<T> turns{T::reset_turn(4), T::main(0),       T::main(0),
                             T::reset_turn(0), T::reset_turn(1), T::reset_turn(2),
                             T::reset_turn(3), T::reset_turn(4)};
  Configuration c;
  for (const auto& t : turns) c.push_back(p.encode(t));
  return {std::move(g), p, std::move(c)};
}

/// Rim node playing the role of v_r in the j-th 8-step iteration. Each
/// iteration shifts the configuration one position backwards along the rim,
/// so the script must follow the roles rather than the fixed node names.
constexpr NodeId rim_role(int r, int j) { return static_cast<NodeId>(((r - 1 - j) % 7 + 7) % 7 + 1); }

/// 56 single-node steps: per iteration j, the hub and then the rim roles
/// v1..v7 in order. Repeating it keeps the execution fair and periodic.
inline std::vector<std::optional<std::vector<NodeId>>> livelock_script() {
  std::vector<std::optional<std::vector<NodeId>>> script;
  for (int j = 0; j < 7; ++j) {
    script.emplace_back(std::vector<NodeId>{0});
    for (int r = 1; r <= 7; ++r) script.emplace_back(std::vector<NodeId>{rim_role(r, j)});
  }
  return script;
}

struct LivelockStep {
  std::uint64_t step = 0;  // 1-based, as in "v_{t-1} is activated in step t"
  NodeId node = 0;
  FailedTurn before, after;
  FailedMove move = FailedMove::none;
};

struct LivelockVerdict {
  bool figure_match = false;      // time-8 configuration is the rotated initial one
  bool classification_ok = false; // v0, v1 idle; v2 ST2; v3..v7 ST3
  bool orbit_closed = false;      // time-56 configuration equals the initial one
  bool never_good = false;        // no configuration on the orbit is AU-good
  std::vector<LivelockStep> steps;  // all 56 steps
  Configuration after_first_iteration;
  std::vector<std::string> failures;

  bool pass() const { return figure_match && classification_ok && orbit_closed && never_good; }
};

/// A configuration is good for the failed protocol when it has no reset
/// turn and all edges join equal or consecutive main turns.
inline bool failed_good(const FailedAu& p, const Graph& g, const Configuration& c) {
  const int m = p.top() + 1;
  for (StateId q : c)
    if (p.decode(q).reset) return false;
  for (auto [u, v] : g.edges()) {
    const int a = p.decode(c[u]).value, b = p.decode(c[v]).value;
    if (a != b && (a + 1) % m != b && (b + 1) % m != a) return false;
  }
  return true;
}

inline LivelockVerdict run_livelock_check() {
  LivelockVerdict verdict;
  const auto inst = livelock_instance();
  const auto& p = inst.protocol;
  Configuration c = inst.initial;
  const auto script = livelock_script();
  verdict.never_good = !failed_good(p, inst.graph, c);
  for (std::size_t t = 0; t < script.size(); ++t) {
    const NodeId v = script[t]->front();
    std::vector<FailedTurn> sensed;
    for (StateId r : compute_signal(c, inst.graph, v)) sensed.push_back(p.decode(r));
    const FailedStep st = p.next_turn(p.decode(c[v]), sensed);
    verdict.steps.push_back({t + 1, v, p.decode(c[v]), st.next, st.move});
    c[v] = p.encode(st.next);
    if (failed_good(p, inst.graph, c)) verdict.never_good = false;
    if (t + 1 == 8) verdict.after_first_iteration = c;
  }

  // Figure check: C8(v_i) = C0(v_{i+1}) on the rim, hub unchanged.
  const auto& c8 = verdict.after_first_iteration;
  verdict.figure_match = c8[0] == inst.initial[0];
  for (NodeId i = 1; i <= 7; ++i)
    if (c8[i] != inst.initial[i % 7 + 1]) verdict.figure_match = false;
  if (!verdict.figure_match) verdict.failures.push_back("time-8 configuration is not the rotated initial one");

  verdict.classification_ok = true;
  for (const auto& s : verdict.steps) {
    const int role = static_cast<int>((s.step - 1) % 8);  // 0 = hub, r = rim role v_r
    const FailedMove expect = role <= 1 ? FailedMove::none
                              : role == 2 ? FailedMove::st2
                                          : FailedMove::st3;
    if (s.move != expect) {
      verdict.classification_ok = false;
      std::ostringstream msg;
      msg << "step " << s.step << ": node v" << s.node << " did " << move_name(s.move)
          << ", expected " << move_name(expect);
      verdict.failures.push_back(msg.str());
    }
  }
  verdict.orbit_closed = c == inst.initial;
  if (!verdict.orbit_closed) verdict.failures.push_back("56 steps do not return the initial configuration");
  if (!verdict.never_good) verdict.failures.push_back("orbit reaches a good configuration");
  return verdict;
}

/// AlgAU counterpart of a failed-AU configuration: main ℓ becomes able(ℓ+1)
/// and R_i becomes faulty(-(i+2)), which keeps the ordering along the chain.
inline Configuration au_analog(const FailedAu& p, const unison::AuProtocol& au,
                               const Configuration& c) {
  Configuration out(c.size());
  for (std::size_t v = 0; v < c.size(); ++v) {
    const FailedTurn t = p.decode(c[v]);
    out[v] = au.encode(t.reset ? unison::Turn::fault(-(t.value + 2)) : unison::Turn::able(t.value + 1));
  }
  return out;
}

}  // namespace stoneage::failed
