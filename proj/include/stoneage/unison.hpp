#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdlib>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/topology.hpp"

namespace stoneage::unison {

/// Signed level ℓ with 1 <= |ℓ| <= k.
using Level = int;

/// The 2k levels with the forward operator φ and the outwards operator ψ.
///
/// In φ-order the levels read 1, 2, ..., k, -k, -k+1, ..., -1 and then wrap
/// back to 1; this cyclic order is the AU clock.
class LevelSpace {
 public:
  explicit LevelSpace(int k) : k_(k) {
    if (k < 2) throw DomainError("level space needs k >= 2");
  }

  int k() const noexcept { return k_; }
  int level_count() const noexcept { return 2 * k_; }

  bool valid(Level l) const noexcept { return l != 0 && std::abs(l) <= k_; }

  Level forward(Level l) const {
    check(l);
    if (l == -1) return 1;
    if (l == k_) return -k_;
    return l + 1;
  }

  Level backward(Level l) const {
    check(l);
    if (l == 1) return -1;
    if (l == -k_) return k_;
    return l - 1;
  }

  /// φ^j for any signed j (negative j applies the inverse).
  Level forward_iter(Level l, long long j) const {
    check(l);
    const long long m = level_count();
    long long idx = (clock_index(l) + j) % m;
    if (idx < 0) idx += m;
    return from_clock_index(static_cast<int>(idx));
  }

  /// Position in φ-order: 1 -> 0, k -> k-1, -k -> k, -1 -> 2k-1.
  int clock_index(Level l) const {
    check(l);
    return l > 0 ? l - 1 : k_ + (k_ + l);
  }

  Level from_clock_index(int idx) const {
    if (idx < 0 || idx >= level_count()) throw DomainError("clock index out of range");
    return idx < k_ ? idx + 1 : -(2 * k_ - idx);
  }

  /// ψ^j: same sign, magnitude |ℓ| + j. Defined for -|ℓ| < j <= k - |ℓ|.
  Level outwards(Level l, int j) const {
    check(l);
    const int mag = std::abs(l);
    if (j <= -mag || j > k_ - mag)
      throw DomainError("outwards offset " + std::to_string(j) + " out of range for level " +
                        std::to_string(l));
    return l > 0 ? mag + j : -(mag + j);
  }

  bool adjacent(Level a, Level b) const {
    return a == b || forward(a) == b || forward(b) == a;
  }

  /// Hop distance on the 2k-cycle {ℓ, φ(ℓ)}.
  int distance(Level a, Level b) const {
    const int m = level_count();
    int d = std::abs(clock_index(a) - clock_index(b));
    return std::min(d, m - d);
  }

  // Ψ-set membership without materializing the sets.
  bool in_psi_gt(Level l, Level x) const { return same_sign(l, x) && std::abs(x) > std::abs(l); }
  bool in_psi_ge(Level l, Level x) const { return same_sign(l, x) && std::abs(x) >= std::abs(l); }
  bool in_psi_gg(Level l, Level x) const {
    return same_sign(l, x) && std::abs(x) > std::abs(l) + 1;
  }
  bool in_psi_lt(Level l, Level x) const { return same_sign(l, x) && std::abs(x) < std::abs(l); }
  bool in_psi_le(Level l, Level x) const { return same_sign(l, x) && std::abs(x) <= std::abs(l); }
  bool in_psi_ll(Level l, Level x) const {
    return same_sign(l, x) && std::abs(x) < std::abs(l) - 1;
  }

 private:
  static bool same_sign(Level a, Level b) noexcept { return (a > 0) == (b > 0); }
  void check(Level l) const {
    if (!valid(l)) throw DomainError("invalid level " + std::to_string(l));
  }

  int k_;
};

/// The six Ψ-sets of a level, each sorted by magnitude.
struct PsiSets {
  std::vector<Level> gt, ge, gg, lt, le, ll;
};

inline PsiSets psi_sets(const LevelSpace& levels, Level l) {
  if (!levels.valid(l)) throw DomainError("invalid level " + std::to_string(l));
  PsiSets out;
  const int mag = std::abs(l);
  for (int j = 1; j <= levels.k() - mag; ++j) out.gt.push_back(levels.outwards(l, j));
  for (int j = -mag + 1; j <= -1; ++j) out.lt.push_back(levels.outwards(l, j));
  std::reverse(out.lt.begin(), out.lt.end());  // by increasing distance from ℓ
  out.ge = out.gt;
  out.ge.insert(out.ge.begin(), l);
  out.gg.assign(out.gt.begin() + (out.gt.empty() ? 0 : 1), out.gt.end());
  out.le = out.lt;
  out.le.insert(out.le.begin(), l);
  out.ll.assign(out.lt.begin() + (out.lt.empty() ? 0 : 1), out.lt.end());
  return out;
}

/// AlgAU state: able or faulty, with a level. Faulty turns need |ℓ| >= 2.
struct Turn {
  bool faulty = false;
  Level level = 1;

  static Turn able(Level l) { return {false, l}; }
  static Turn fault(Level l) { return {true, l}; }

  bool operator==(const Turn&) const = default;
};

inline std::string turn_name(Turn t) {
  return std::string(t.faulty ? "F" : "A") + (t.level > 0 ? "+" : "-") +
         std::to_string(std::abs(t.level));
}

enum class TransitionType { none, able_able, able_faulty, faulty_able };

inline const char* transition_name(TransitionType t) {
  switch (t) {
    case TransitionType::none: return "none";
    case TransitionType::able_able: return "AA";
    case TransitionType::able_faulty: return "AF";
    case TransitionType::faulty_able: return "FA";
  }
  return "?";
}

/// Test-only mutation switch: drops the "good" guard from the AA rule.
enum class AuVariant { standard, aa_without_good_guard };

struct TurnStep {
  Turn next;
  TransitionType type = TransitionType::none;
};

/// AlgAU as a protocol over the 4k-2 turns, k = 3D + 2.
class AuProtocol {
 public:
  explicit AuProtocol(int D, AuVariant variant = AuVariant::standard)
      : d_(D), levels_(check_d(D) * 3 + 2), variant_(variant) {}

  int diameter_bound() const noexcept { return d_; }
  int k() const noexcept { return levels_.k(); }
  const LevelSpace& levels() const noexcept { return levels_; }
  AuVariant variant() const noexcept { return variant_; }

  std::size_t state_count() const noexcept { return static_cast<std::size_t>(4 * k() - 2); }
  StateId initial_state() const { return encode(Turn::able(1)); }
  bool is_output(StateId q) const { return !decode(q).faulty; }
  std::int64_t output(StateId q) const {
    Turn t = decode(q);
    if (t.faulty) throw DomainError("faulty turn has no output");
    return t.level;
  }
  std::string name() const { return "au"; }

  StateId encode(Turn t) const {
    if (!levels_.valid(t.level) || (t.faulty && std::abs(t.level) < 2))
      throw DomainError("invalid turn " + turn_name(t));
    if (!t.faulty) return static_cast<StateId>(levels_.clock_index(t.level));
    const int base = 2 * k();
    const int mag = std::abs(t.level);
    return static_cast<StateId>(base + (t.level > 0 ? mag - 2 : (k() - 1) + (mag - 2)));
  }

  Turn decode(StateId q) const {
    const int idx = static_cast<int>(q);
    if (q >= state_count()) throw DomainError("turn index out of range");
    if (idx < 2 * k()) return Turn::able(levels_.from_clock_index(idx));
    const int off = idx - 2 * k();
    return off < k() - 1 ? Turn::fault(off + 2) : Turn::fault(-(off - (k() - 1) + 2));
  }

  std::string state_name(StateId q) const { return turn_name(decode(q)); }

  StateId parse_state(std::string_view text) const { return encode(parse_turn(text)); }

  static Turn parse_turn(std::string_view text) {
    if (text.size() < 3 || (text[0] != 'A' && text[0] != 'F') ||
        (text[1] != '+' && text[1] != '-'))
      throw DomainError("bad turn `" + std::string(text) + "`");
    int mag = 0;
    for (char c : text.substr(2)) {
      if (c < '0' || c > '9') throw DomainError("bad turn `" + std::string(text) + "`");
      mag = mag * 10 + (c - '0');
    }
    return {text[0] == 'F', text[1] == '+' ? mag : -mag};
  }

  /// δ of AlgAU on the sensed turns (inclusive neighborhood, own turn
  /// included). Deterministic.
  TurnStep next_turn(Turn own, std::span<const Turn> sensed) const {
    const Level l = own.level;
    bool is_protected = true;
    bool senses_faulty = false;
    bool within_forward_pair = true;   // Λ ⊆ {ℓ, φ(ℓ)}
    bool senses_inward_faulty = false; // faulty(ψ^{-1}(ℓ)) sensed
    bool senses_outwards = false;      // Λ ∩ Ψ^>(ℓ) ≠ ∅
    const Level fwd = levels_.forward(l);
    const Level inward = std::abs(l) >= 2 ? levels_.outwards(l, -1) : 0;
    for (const Turn& t : sensed) {
      if (!levels_.adjacent(l, t.level)) is_protected = false;
      if (t.faulty) senses_faulty = true;
      if (t.level != l && t.level != fwd) within_forward_pair = false;
      if (t.faulty && inward != 0 && t.level == inward) senses_inward_faulty = true;
      if (levels_.in_psi_gt(l, t.level)) senses_outwards = true;
    }
    const bool good = is_protected && !senses_faulty;

    if (own.faulty) {
      if (!senses_outwards) return {Turn::able(levels_.outwards(l, -1)), TransitionType::faulty_able};
      return {own, TransitionType::none};
    }
    const bool aa = within_forward_pair && (good || variant_ == AuVariant::aa_without_good_guard);
    const bool af = std::abs(l) >= 2 && (!is_protected || senses_inward_faulty);
    if (aa && af) {
      if (variant_ == AuVariant::standard)
        throw ProtocolError("AA and AF both enabled at " + turn_name(own));
      return {Turn::able(fwd), TransitionType::able_able};
    }
    if (aa) return {Turn::able(fwd), TransitionType::able_able};
    if (af) return {Turn::fault(l), TransitionType::able_faulty};
    return {own, TransitionType::none};
  }

  std::vector<Turn> decode_signal(const Signal& s) const {
    std::vector<Turn> out;
    out.reserve(s.size());
    for (StateId q : s) out.push_back(decode(q));
    return out;
  }

  void transition(StateId q, const Signal& s, Outcomes& out) const {
    std::vector<Turn> sensed = decode_signal(s);
    out.push_back({encode(next_turn(decode(q), sensed).next), 1});
  }

  std::vector<Turn> turns(const Configuration& c) const {
    std::vector<Turn> out(c.size());
    for (std::size_t v = 0; v < c.size(); ++v) out[v] = decode(c[v]);
    return out;
  }

 private:
  static int check_d(int D) {
    if (D < 1) throw DomainError("D must be >= 1");
    return D;
  }

  int d_;
  LevelSpace levels_;
  AuVariant variant_;
};

inline AuProtocol au_protocol(int D) { return AuProtocol(D); }

/// Per-node predicates of the AlgAU analysis, evaluated on a full turn
/// assignment (harness view).
struct NodePredicates {
  bool is_protected = false;
  bool out_protected = false;
  bool good = false;
  bool justifiably_faulty = false;
  bool unjustifiably_faulty = false;
  std::optional<std::vector<NodeId>> grounded_witness;
};

/// Predicate evaluator bound to one graph and one level space.
class TurnView {
 public:
  TurnView(const Graph& g, const LevelSpace& levels, std::vector<Turn> turns, int D)
      : g_(&g), levels_(&levels), turns_(std::move(turns)), d_(D) {
    node_protected_.assign(g.size(), true);
    for (auto [u, v] : g.edges()) {
      if (!edge_protected(u, v)) node_protected_[u] = node_protected_[v] = false;
    }
  }

  const std::vector<Turn>& turns() const noexcept { return turns_; }
  Level level(NodeId v) const { return turns_[v].level; }

  bool edge_protected(NodeId u, NodeId v) const {
    return levels_->adjacent(turns_[u].level, turns_[v].level);
  }
  bool node_protected(NodeId v) const { return node_protected_[v]; }

  bool out_protected(NodeId v) const {
    const Level l = level(v);
    for (NodeId u : g_->neighbors(v))
      if (levels_->in_psi_gg(l, level(u))) return false;
    return true;
  }

  bool good(NodeId v) const {
    if (!node_protected(v) || turns_[v].faulty) return false;
    for (NodeId u : g_->neighbors(v))
      if (turns_[u].faulty) return false;
    return true;
  }

  bool justifiably_faulty(NodeId v) const {
    const Turn t = turns_[v];
    if (!t.faulty) return false;
    if (!node_protected(v)) return true;
    const Level inward = levels_->outwards(t.level, -1);
    for (NodeId u : g_->neighbors(v))
      if (turns_[u].faulty && turns_[u].level == inward) return true;
    return false;
  }

  bool unjustifiably_faulty(NodeId v) const { return turns_[v].faulty && !justifiably_faulty(v); }

  /// Shortest all-protected path of length <= D from v to a node at level ±1.
  std::optional<std::vector<NodeId>> grounded_witness(NodeId v) const {
    if (!node_protected(v)) return std::nullopt;
    std::vector<std::int64_t> parent(g_->size(), -2);
    std::vector<int> depth(g_->size(), 0);
    std::deque<NodeId> queue{v};
    parent[v] = -1;
    while (!queue.empty()) {
      NodeId u = queue.front();
      queue.pop_front();
      if (std::abs(level(u)) == 1) {
        std::vector<NodeId> path;
        for (std::int64_t w = u; w != -1; w = parent[w]) path.push_back(static_cast<NodeId>(w));
        return path;
      }
      if (depth[u] == d_) continue;
      for (NodeId w : g_->neighbors(u)) {
        if (parent[w] != -2 || !node_protected(w)) continue;
        parent[w] = u;
        depth[w] = depth[u] + 1;
        queue.push_back(w);
      }
    }
    return std::nullopt;
  }

  NodePredicates predicates(NodeId v) const {
    NodePredicates p;
    p.is_protected = node_protected(v);
    p.out_protected = out_protected(v);
    p.good = good(v);
    p.justifiably_faulty = justifiably_faulty(v);
    p.unjustifiably_faulty = unjustifiably_faulty(v);
    p.grounded_witness = grounded_witness(v);
    return p;
  }

  bool graph_good() const {
    for (NodeId v = 0; v < g_->size(); ++v)
      if (!good(v)) return false;
    return true;
  }
  bool graph_protected() const {
    return std::all_of(node_protected_.begin(), node_protected_.end(), [](bool b) { return b; });
  }
  bool graph_out_protected() const {
    for (NodeId v = 0; v < g_->size(); ++v)
      if (!out_protected(v)) return false;
    return true;
  }
  bool graph_justified() const {
    for (NodeId v = 0; v < g_->size(); ++v)
      if (unjustifiably_faulty(v)) return false;
    return true;
  }

 private:
  const Graph* g_;
  const LevelSpace* levels_;
  std::vector<Turn> turns_;
  int d_;
  std::vector<bool> node_protected_;
};

inline NodePredicates node_predicates(const AuProtocol& au, const Configuration& c,
                                      const Graph& g, NodeId v) {
  return TurnView(g, au.levels(), au.turns(c), au.diameter_bound()).predicates(v);
}

inline bool graph_good(const AuProtocol& au, const Configuration& c, const Graph& g) {
  return TurnView(g, au.levels(), au.turns(c), au.diameter_bound()).graph_good();
}

}  // namespace stoneage::unison
