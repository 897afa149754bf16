#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/restart.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/violation.hpp"

namespace stoneage::mis {

struct MisParams {
  int D = 1;
  double p0 = 0.25;  // per-round flag reset probability
  int k_id = 4;      // temporary identifier range

  void validate() const {
    if (D < 1) throw DomainError("D must be >= 1");
    if (!(p0 > 0.0 && p0 <= 0.5)) throw DomainError("p0 must lie in (0, 1/2]");
    if (k_id < 2) throw DomainError("k_id must be >= 2");
  }
};

/// Integer weights (stay, reset) realizing the flag reset probability.
inline std::pair<std::uint32_t, std::uint32_t> reset_weights(double p) {
  constexpr std::uint32_t scale = 1u << 16;
  auto reset = static_cast<std::uint32_t>(std::lround(p * scale));
  reset = std::clamp<std::uint32_t>(reset, 1, scale - 1);
  return {scale - reset, reset};
}

enum class Decision { undecided, in, out };

inline constexpr int coin_unset = 2;

/// Decoded AlgMIS state. Decided nodes keep flag and step so the phase clock
/// stays global; candidate, coin and trial phase only matter while undecided.
struct MisState {
  Decision decision = Decision::undecided;
  int flag = 1;
  int step = 0;
  int candidate = 1;
  int coin = coin_unset;
  bool observe = false;  // trial phase: false = toss round, true = observe round
  int id = 0;            // IN only

  bool operator==(const MisState&) const = default;
};

class MisProtocol {
 public:
  explicit MisProtocol(MisParams params) : p_(params) {
    p_.validate();
    steps_ = p_.D + 3;
    undecided_count_ = 2 * steps_ * 2 * 3 * 2;
    in_count_ = 2 * steps_ * p_.k_id;
    out_count_ = 2 * steps_;
    weights_ = reset_weights(p_.p0);
  }

  const MisParams& params() const noexcept { return p_; }
  int diameter_bound() const noexcept { return p_.D; }

  std::size_t state_count() const {
    return static_cast<std::size_t>(undecided_count_ + in_count_ + out_count_);
  }
  StateId initial_state() const { return encode(MisState{}); }
  bool is_output(StateId q) const { return decode(q).decision != Decision::undecided; }
  std::int64_t output(StateId q) const {
    auto s = decode(q);
    if (s.decision == Decision::undecided) throw DomainError("undecided state has no output");
    return s.decision == Decision::in ? 1 : 0;
  }
  std::string name() const { return "mis"; }

  StateId encode(const MisState& s) const {
    check(s);
    const int fs = s.flag * steps_ + s.step;
    switch (s.decision) {
      case Decision::undecided:
        return static_cast<StateId>(((fs * 2 + s.candidate) * 3 + s.coin) * 2 + (s.observe ? 1 : 0));
      case Decision::in:
        return static_cast<StateId>(undecided_count_ + fs * p_.k_id + s.id);
      case Decision::out:
        return static_cast<StateId>(undecided_count_ + in_count_ + fs);
    }
    throw DomainError("bad decision");
  }

  MisState decode(StateId q) const {
    int x = static_cast<int>(q);
    if (q >= state_count()) throw DomainError("MIS state index out of range");
    MisState s;
    if (x < undecided_count_) {
      s.observe = x % 2 == 1;
      x /= 2;
      s.coin = x % 3;
      x /= 3;
      s.candidate = x % 2;
      x /= 2;
    } else if (x < undecided_count_ + in_count_) {
      x -= undecided_count_;
      s.decision = Decision::in;
      s.id = x % p_.k_id;
      x /= p_.k_id;
      s.candidate = 0;
    } else {
      x -= undecided_count_ + in_count_;
      s.decision = Decision::out;
      s.candidate = 0;
    }
    s.step = x % steps_;
    s.flag = x / steps_;
    return s;
  }

  std::string state_name(StateId q) const {
    const MisState s = decode(q);
    const std::string fs = "|f" + std::to_string(s.flag) + "|s" + std::to_string(s.step);
    switch (s.decision) {
      case Decision::undecided:
        return "U" + fs + "|c" + std::to_string(s.candidate) +
               (s.coin == coin_unset ? std::string("-") : std::to_string(s.coin)) +
               (s.observe ? "o" : "t");
      case Decision::in:
        return "IN" + fs + "|id" + std::to_string(s.id);
      case Decision::out:
        return "OUT" + fs;
    }
    return "?";
  }

  StateId parse_state(std::string_view text) const {
    auto fail = [&] { return DomainError("bad MIS state `" + std::string(text) + "`"); };
    std::vector<std::string_view> parts;
    std::size_t pos = 0;
    while (true) {
      auto bar = text.find('|', pos);
      parts.push_back(text.substr(pos, bar == std::string_view::npos ? bar : bar - pos));
      if (bar == std::string_view::npos) break;
      pos = bar + 1;
    }
    auto number = [&](std::string_view field, std::string_view prefix) {
      if (field.substr(0, prefix.size()) != prefix || field.size() == prefix.size()) throw fail();
      int v = 0;
      for (char c : field.substr(prefix.size())) {
        if (c < '0' || c > '9') throw fail();
        v = v * 10 + (c - '0');
      }
      return v;
    };
    if (parts.size() < 3) throw fail();
    MisState s;
    s.flag = number(parts[1], "f");
    s.step = number(parts[2], "s");
    if (parts[0] == "U" && parts.size() == 4) {
      auto c = parts[3];
      if (c.size() != 4 || c[0] != 'c') throw fail();
      if (c[1] != '0' && c[1] != '1') throw fail();
      s.candidate = c[1] - '0';
      if (c[2] == '-') s.coin = coin_unset;
      else if (c[2] == '0' || c[2] == '1') s.coin = c[2] - '0';
      else throw fail();
      if (c[3] != 't' && c[3] != 'o') throw fail();
      s.observe = c[3] == 'o';
    } else if (parts[0] == "IN" && parts.size() == 4) {
      s.decision = Decision::in;
      s.candidate = 0;
      s.id = number(parts[3], "id");
    } else if (parts[0] == "OUT" && parts.size() == 3) {
      s.decision = Decision::out;
      s.candidate = 0;
    } else {
      throw fail();
    }
    try {
      return encode(s);
    } catch (const DomainError&) {
      throw fail();
    }
  }

  /// Local fault detectors: a step gap above one across an edge, an OUT node
  /// that senses no IN node, or an IN node that senses a foreign identifier.
  bool fault(StateId q, const Signal& sig) const {
    const MisState own = decode(q);
    bool senses_in = false;
    for (StateId r : sig) {
      const MisState o = decode(r);
      if (std::abs(o.step - own.step) > 1) return true;
      if (o.decision == Decision::in) {
        senses_in = true;
        if (own.decision == Decision::in && o.id != own.id) return true;
      }
    }
    return own.decision == Decision::out && !senses_in;
  }

  void transition(StateId q, const Signal& sig, Outcomes& out) const {
    const MisState own = decode(q);
    const int D = p_.D;
    int smin = own.step;
    bool senses_in = false;
    bool senses_winning_coin = false;
    for (StateId r : sig) {
      const MisState o = decode(r);
      smin = std::min(smin, o.step);
      if (o.decision == Decision::in) senses_in = true;
      if (o.decision == Decision::undecided && o.candidate == 1 && o.coin == 1)
        senses_winning_coin = true;
    }

    MisState next = own;
    bool toss_coin = false;
    bool may_reset_flag = false;
    bool new_phase = false;
    if (own.flag == 1) {
      may_reset_flag = true;
    } else if (smin < D + 2) {
      next.step = smin + 1;
    } else {
      new_phase = true;
      next.step = 0;
      next.flag = 1;
    }

    if (own.decision == Decision::undecided) {
      if (new_phase) {
        next.candidate = 1;
        next.coin = coin_unset;
        next.observe = false;
      } else {
        next.observe = !own.observe;
        if (own.step <= D) {
          if (!own.observe) {
            toss_coin = true;
          } else if (own.candidate == 1 && own.coin == 0 && senses_winning_coin) {
            next.candidate = 0;
          }
        }
        if (own.step <= D && next.step == D + 1 && next.candidate == 1) {
          next = MisState{Decision::in, next.flag, next.step, 0, coin_unset, false, 0};
        } else if (own.step == D + 1 && senses_in) {
          next = MisState{Decision::out, next.flag, next.step, 0, coin_unset, false, 0};
        }
      }
    }
    if (next.decision != Decision::undecided) toss_coin = false;
    const bool draw_id = next.decision == Decision::in;

    // Cartesian product of the independent random choices of this round.
    std::vector<std::pair<MisState, std::uint32_t>> cands{{next, 1}};
    auto expand = [&](auto&& variants) {
      std::vector<std::pair<MisState, std::uint32_t>> grown;
      for (auto& [s, w] : cands)
        for (auto& [mod, vw] : variants) {
          MisState t = s;
          mod(t);
          grown.push_back({t, w * vw});
        }
      cands = std::move(grown);
    };
    using Mod = std::pair<std::function<void(MisState&)>, std::uint32_t>;
    if (may_reset_flag) {
      expand(std::vector<Mod>{{[](MisState&) {}, weights_.first},
                              {[](MisState& s) { s.flag = 0; }, weights_.second}});
    }
    if (toss_coin) {
      expand(std::vector<Mod>{{[](MisState& s) { s.coin = 0; }, 1},
                              {[](MisState& s) { s.coin = 1; }, 1}});
    }
    if (draw_id) {
      std::vector<Mod> ids;
      for (int j = 0; j < p_.k_id; ++j) ids.push_back({[j](MisState& s) { s.id = j; }, 1});
      expand(ids);
    }
    for (auto& [s, w] : cands) out.push_back({encode(s), w});
  }

 private:
  void check(const MisState& s) const {
    if (s.flag < 0 || s.flag > 1 || s.step < 0 || s.step >= steps_)
      throw DomainError("MIS flag/step out of range");
    if (s.decision == Decision::undecided &&
        (s.candidate < 0 || s.candidate > 1 || s.coin < 0 || s.coin > 2))
      throw DomainError("MIS candidate/coin out of range");
    if (s.decision == Decision::in && (s.id < 0 || s.id >= p_.k_id))
      throw DomainError("MIS identifier out of range");
  }

  MisParams p_;
  int steps_ = 0;
  int undecided_count_ = 0, in_count_ = 0, out_count_ = 0;
  std::pair<std::uint32_t, std::uint32_t> weights_;
};

using MisWithRestart = restart::Restart<MisProtocol>;

inline MisWithRestart mis_protocol(const MisParams& params) {
  return MisWithRestart(MisProtocol(params), params.D);
}

/// Maximum of n iid Geom(p) variables (support 1, 2, ...), drawn by
/// simulating the per-round flag coins.
inline std::uint64_t max_of_geometrics(std::size_t n, double p, CounterRng& rng) {
  std::uint64_t best = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t rounds = 1;
    while (!(rng.unit() < p)) ++rounds;
    best = std::max(best, rounds);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Phase-level trace analysis for synchronous runs.

struct PhaseRecord {
  std::uint64_t start = 0;  // time of the phase-start configuration
  std::uint64_t end = 0;    // time of the next phase-start configuration
  std::uint64_t all_flags_clear = 0;
  std::vector<NodeId> undecided;  // U: undecided at phase start
  std::vector<std::uint64_t> trial_times;  // toss rounds of complete trials
  std::vector<std::vector<int>> coins;     // coins[i][j]: trial i, j-th node of U
  std::vector<NodeId> joined_in;
  std::vector<NodeId> joined_out;
};

struct PhaseAnalysis {
  std::vector<PhaseRecord> phases;
  ViolationLog violations;
  /// Phases checked against the literal rule "v joins IN iff Z(v) >= Z(u)
  /// for every undecided neighbor u", and the disagreements found.
  std::size_t literal_z_checked = 0;
  ViolationLog literal_z_mismatches;
};

namespace detail {

inline bool is_phase_start(const MisWithRestart& p, const Configuration& c) {
  for (StateId q : c) {
    if (p.is_sigma(q)) return false;
    const MisState s = p.host().decode(q);
    if (s.flag != 1 || s.step != 0) return false;
    if (s.decision == Decision::undecided &&
        (s.candidate != 1 || s.coin != coin_unset || s.observe))
      return false;
  }
  return true;
}

/// Lexicographic comparison of coin columns, i.e. of the binary numbers Z.
inline int compare_z(const PhaseRecord& ph, std::size_t a, std::size_t b) {
  for (const auto& row : ph.coins) {
    if (row[a] != row[b]) return row[a] < row[b] ? -1 : 1;
  }
  return 0;
}

}  // namespace detail

/// Splits a synchronous trace into concurrent phases and checks, per phase:
/// elimination replay from the logged coins, the Z-maximum rule, OUT
/// correctness, the step-climb bounds after the last flag clears, and phase
/// synchrony. Phases interrupted by a restart are skipped.
inline PhaseAnalysis analyze_phases(const MisWithRestart& p, const Graph& g, const Trace& trace) {
  PhaseAnalysis result;
  const MisProtocol& mis = p.host();
  const int D = mis.diameter_bound();
  const std::size_t T = trace.step_count();
  auto state = [&](std::size_t t, NodeId v) { return mis.decode(trace.config_at(t)[v]); };

  // With every node decided, flag-1 rounds repeat the start pattern, so only
  // the first time of a run of matching configurations starts a phase.
  std::vector<std::size_t> starts;
  bool previous = false;
  for (std::size_t t = 0; t <= T; ++t) {
    const bool now = detail::is_phase_start(p, trace.config_at(t));
    if (now && !previous) starts.push_back(t);
    previous = now;
  }

  for (std::size_t si = 0; si + 1 < starts.size(); ++si) {
    const std::size_t t0 = starts[si], t1 = starts[si + 1];
    bool clean = true;
    for (std::size_t t = t0; t <= t1 && clean; ++t)
      for (StateId q : trace.config_at(t))
        if (p.is_sigma(q)) clean = false;
    if (!clean) continue;

    PhaseRecord ph;
    ph.start = t0;
    ph.end = t1;
    std::vector<int> index(g.size(), -1);
    for (NodeId v = 0; v < g.size(); ++v) {
      if (state(t0, v).decision == Decision::undecided) {
        index[v] = static_cast<int>(ph.undecided.size());
        ph.undecided.push_back(v);
      }
    }
    const std::size_t u_count = ph.undecided.size();
    auto report = [&](const char* monitor, std::uint64_t step, std::vector<NodeId> nodes,
                      std::string detail) {
      result.violations.push_back({monitor, step, std::move(nodes), std::move(detail)});
    };

    // Complete trials: a toss round at step <= D followed by an observe round
    // at step <= D. All of U must agree on the trial times.
    for (std::size_t t = t0; t + 1 < t1; ++t) {
      if (u_count == 0) break;
      std::size_t agree = 0;
      for (NodeId v : ph.undecided) {
        const MisState a = state(t, v), b = state(t + 1, v);
        if (a.decision == Decision::undecided && !a.observe && a.step <= D &&
            b.decision == Decision::undecided && b.observe && b.step <= D)
          ++agree;
      }
      if (agree == 0) continue;
      if (agree != u_count) {
        report("mis.trial_sync", t, {}, "undecided nodes disagree on trial timing");
        continue;
      }
      ph.trial_times.push_back(t);
      std::vector<int> row(u_count);
      for (std::size_t j = 0; j < u_count; ++j) row[j] = state(t + 1, ph.undecided[j]).coin;
      ph.coins.push_back(std::move(row));
    }

    for (NodeId v : ph.undecided) {
      const Decision d = state(t1, v).decision;
      if (d == Decision::in) ph.joined_in.push_back(v);
      if (d == Decision::out) ph.joined_out.push_back(v);
    }

    // Elimination replay: recompute candidacy from the coin matrix alone.
    std::vector<int> cand(u_count, 1);
    for (const auto& row : ph.coins) {
      std::vector<int> next = cand;
      for (std::size_t j = 0; j < u_count; ++j) {
        if (!cand[j] || row[j] != 0) continue;
        for (NodeId u : g.neighbors(ph.undecided[j])) {
          const int k = index[u];
          if (k >= 0 && cand[k] && row[k] == 1) next[j] = 0;
        }
      }
      cand = std::move(next);
    }
    for (std::size_t j = 0; j < u_count; ++j) {
      const NodeId v = ph.undecided[j];
      const bool in = state(t1, v).decision == Decision::in;
      if (in != (cand[j] == 1))
        report("mis.compete_replay", t1, {v},
               in ? "joined IN although the coin replay eliminates it"
                  : "survived the coin replay but did not join IN");

      bool z_max = true;
      for (NodeId u : g.neighbors(v))
        if (index[u] >= 0 && detail::compare_z(ph, j, static_cast<std::size_t>(index[u])) < 0)
          z_max = false;
      if (z_max && !in)
        report("mis.z_maximum", t1, {v}, "Z(v) is maximal among undecided neighbors but v is not IN");
      if (z_max != in)
        result.literal_z_mismatches.push_back(
            {"mis.z_literal", t1, {v},
             in ? "joined IN while some undecided neighbor has larger Z"
                : "Z maximal but not IN"});
    }
    ++result.literal_z_checked;

    // OUT correctness: an undecided node joins OUT in round r iff an
    // undecided neighbor joined IN in round r-1.
    auto joined = [&](NodeId v, std::size_t r, Decision d) {
      return state(r, v).decision == Decision::undecided && state(r + 1, v).decision == d;
    };
    for (std::size_t r = t0; r < t1; ++r) {
      for (NodeId v : ph.undecided) {
        if (state(r, v).decision != Decision::undecided) continue;
        bool neighbor_joined = false;
        if (r > t0)
          for (NodeId u : g.neighbors(v))
            if (index[u] >= 0 && joined(u, r - 1, Decision::in)) neighbor_joined = true;
        if (joined(v, r, Decision::out) != neighbor_joined)
          report("mis.out_correctness", r, {v},
                 neighbor_joined ? "neighbor joined IN but node did not join OUT"
                                 : "joined OUT without a neighbor joining IN");
      }
    }

    // Step climb after the last flag clears.
    std::size_t clear = t0;
    while (clear < t1) {
      const auto& c = trace.config_at(clear);
      if (std::all_of(c.begin(), c.end(), [&](StateId q) { return mis.decode(q).flag == 0; }))
        break;
      ++clear;
    }
    ph.all_flags_clear = clear;
    if (clear == t1 || clear == t0) {
      report("mis.phase_sync", t0, {}, "phase without a flag-clearing round");
    } else {
      std::vector<NodeId> last;
      for (NodeId v = 0; v < g.size(); ++v)
        if (state(clear - 1, v).flag == 1) last.push_back(v);
      for (int d = 0; d <= D && clear + d <= t1; ++d) {
        const std::size_t t = clear + d;
        for (auto [a, b] : g.edges())
          if (std::abs(state(t, a).step - state(t, b).step) > 1)
            report("mis.step_climb", t, {a, b}, "invalid edge");
        for (NodeId v = 0; v < g.size(); ++v) {
          const int s = state(t, v).step;
          if (s < d) report("mis.step_climb", t, {v}, "step below d");
          for (NodeId m : last)
            if (s > std::max<int>(d, static_cast<int>(g.distance(m, v))))
              report("mis.step_climb", t, {v, m}, "step above max(d, dist)");
        }
      }
      // Concurrent finish: D rounds of climbing, then D+1, D+2, then restart
      // of the phase, so the next phase-start configuration is D + 3 later.
      if (t1 != clear + static_cast<std::size_t>(D) + 3)
        report("mis.phase_sync", t1, {},
               "next phase starts " + std::to_string(t1 - clear) +
                   " steps after the last flag cleared");
    }
    result.phases.push_back(std::move(ph));
  }
  return result;
}

}  // namespace stoneage::mis
