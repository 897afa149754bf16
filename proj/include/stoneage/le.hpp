#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/mis.hpp"
#include "stoneage/restart.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/violation.hpp"

namespace stoneage::le {

struct LeParams {
  int D = 1;
  double p0 = 0.25;
  int k_id = 4;

  void validate() const { mis::MisParams{D, p0, k_id}.validate(); }
};

inline constexpr int unset = -1;  // ⊥ for coins and identifiers

/// Decoded AlgLE state.
///
/// Compute stage: flag, candidate, coin and the two flooding witnesses fw
/// (some flag is 1) and cw (some candidate tossed 1). Verify stage: leader
/// bit, the leader's temporary identifier and the first identifier seen.
struct LeState {
  bool verify = false;
  int round = 0;
  // compute stage
  int flag = 1;
  int candidate = 1;
  int coin = unset;
  int flag_witness = 1;
  int coin_witness = 0;
  // verify stage
  int leader = 0;
  int id = unset;
  int seen = unset;

  bool operator==(const LeState&) const = default;
};

class LeProtocol {
 public:
  explicit LeProtocol(LeParams params) : p_(params) {
    p_.validate();
    compute_count_ = p_.D * 2 * 2 * 3 * 2 * 2;
    verify_count_ = p_.D * 2 * (p_.k_id + 1) * (p_.k_id + 1);
    weights_ = mis::reset_weights(p_.p0);
  }

  const LeParams& params() const noexcept { return p_; }
  int diameter_bound() const noexcept { return p_.D; }

  std::size_t state_count() const { return static_cast<std::size_t>(compute_count_ + verify_count_); }
  StateId initial_state() const { return encode(LeState{}); }
  bool is_output(StateId q) const { return decode(q).verify; }
  std::int64_t output(StateId q) const {
    const LeState s = decode(q);
    if (!s.verify) throw DomainError("compute-stage state has no output");
    return s.leader;
  }
  std::string name() const { return "le"; }

  StateId encode(const LeState& s) const {
    check(s);
    if (!s.verify) {
      int x = s.round;
      x = x * 2 + s.flag;
      x = x * 2 + s.candidate;
      x = x * 3 + (s.coin + 1);
      x = x * 2 + s.flag_witness;
      x = x * 2 + s.coin_witness;
      return static_cast<StateId>(x);
    }
    const int k1 = p_.k_id + 1;
    int x = s.round;
    x = x * 2 + s.leader;
    x = x * k1 + (s.id + 1);
    x = x * k1 + (s.seen + 1);
    return static_cast<StateId>(compute_count_ + x);
  }

  LeState decode(StateId q) const {
    if (q >= state_count()) throw DomainError("LE state index out of range");
    int x = static_cast<int>(q);
    LeState s;
    if (x < compute_count_) {
      s.coin_witness = x % 2;
      x /= 2;
      s.flag_witness = x % 2;
      x /= 2;
      s.coin = x % 3 - 1;
      x /= 3;
      s.candidate = x % 2;
      x /= 2;
      s.flag = x % 2;
      x /= 2;
      s.round = x;
      return s;
    }
    x -= compute_count_;
    const int k1 = p_.k_id + 1;
    s = LeState{true, 0, 0, 0, unset, 0, 0, 0, unset, unset};
    s.seen = x % k1 - 1;
    x /= k1;
    s.id = x % k1 - 1;
    x /= k1;
    s.leader = x % 2;
    s.round = x / 2;
    return s;
  }

  std::string state_name(StateId q) const {
    const LeState s = decode(q);
    auto opt = [](int v) { return v == unset ? std::string("-") : std::to_string(v); };
    if (!s.verify)
      return "C|r" + std::to_string(s.round) + "|f" + std::to_string(s.flag) + "|c" +
             std::to_string(s.candidate) + opt(s.coin) + "|w" + std::to_string(s.flag_witness) +
             std::to_string(s.coin_witness);
    return "V|r" + std::to_string(s.round) + "|L" + std::to_string(s.leader) + "|id" + opt(s.id) +
           "|seen" + opt(s.seen);
  }

  StateId parse_state(std::string_view text) const {
    auto fail = [&] { return DomainError("bad LE state `" + std::string(text) + "`"); };
    std::vector<std::string_view> parts;
    for (std::size_t pos = 0;;) {
      auto bar = text.find('|', pos);
      parts.push_back(text.substr(pos, bar == std::string_view::npos ? bar : bar - pos));
      if (bar == std::string_view::npos) break;
      pos = bar + 1;
    }
    auto digits = [&](std::string_view f) {
      if (f.empty()) throw fail();
      if (f == "-") return unset;
      int v = 0;
      for (char c : f) {
        if (c < '0' || c > '9') throw fail();
        v = v * 10 + (c - '0');
      }
      return v;
    };
    auto field = [&](std::string_view f, std::string_view prefix) {
      if (f.substr(0, prefix.size()) != prefix) throw fail();
      return f.substr(prefix.size());
    };
    LeState s;
    if (parts.size() == 5 && parts[0] == "C") {
      s.round = digits(field(parts[1], "r"));
      s.flag = digits(field(parts[2], "f"));
      auto c = field(parts[3], "c");
      auto w = field(parts[4], "w");
      if (c.size() != 2 || w.size() != 2) throw fail();
      s.candidate = digits(c.substr(0, 1));
      s.coin = digits(c.substr(1, 1));
      s.flag_witness = digits(w.substr(0, 1));
      s.coin_witness = digits(w.substr(1, 1));
    } else if (parts.size() == 5 && parts[0] == "V") {
      s = LeState{true, 0, 0, 0, unset, 0, 0, 0, unset, unset};
      s.round = digits(field(parts[1], "r"));
      s.leader = digits(field(parts[2], "L"));
      s.id = digits(field(parts[3], "id"));
      s.seen = digits(field(parts[4], "seen"));
    } else {
      throw fail();
    }
    try {
      return encode(s);
    } catch (const DomainError&) {
      throw fail();
    }
  }

  /// Fault detectors: a neighbor in another epoch round or stage, two
  /// distinct identifiers in view, or no identifier by the end of a
  /// verification epoch.
  bool fault(StateId q, const Signal& sig) const {
    const LeState own = decode(q);
    int first = unset;
    for (StateId r : sig) {
      const LeState o = decode(r);
      if (o.round != own.round || o.verify != own.verify) return true;
      if (own.verify && o.seen != unset) {
        if (first != unset && first != o.seen) return true;
        first = o.seen;
      }
    }
    return own.verify && own.round == p_.D - 1 && first == unset;
  }

  void transition(StateId q, const Signal& sig, Outcomes& out) const {
    const LeState own = decode(q);
    const int D = p_.D;
    int fw = own.flag_witness, cw = own.coin_witness, sensed_id = unset;
    for (StateId r : sig) {
      const LeState o = decode(r);
      if (!o.verify) {
        fw |= o.flag_witness;
        cw |= o.coin_witness;
      } else if (o.seen != unset && sensed_id == unset) {
        sensed_id = o.seen;
      }
    }

    if (own.round + 1 < D) {
      LeState next = own;
      next.round = own.round + 1;
      if (!own.verify) {
        next.flag_witness = fw;
        next.coin_witness = cw;
      } else if (next.seen == unset) {
        next.seen = sensed_id;
      }
      out.push_back({encode(next), 1});
      return;
    }

    // Epoch boundary.
    if (own.verify) {
      start_verify_epoch(own.leader, out);
      return;
    }
    int candidate = own.candidate;
    if (candidate == 1 && own.coin == 0 && cw == 1) candidate = 0;
    if (fw == 0) {
      start_verify_epoch(candidate, out);
      return;
    }
    LeState next;
    next.round = 0;
    next.flag = own.flag;
    next.candidate = candidate;
    std::vector<std::pair<LeState, std::uint32_t>> cands;
    auto seed = [&](LeState s, std::uint32_t w) {
      s.flag_witness = s.flag;
      s.coin_witness = s.candidate == 1 && s.coin == 1 ? 1 : 0;
      cands.push_back({s, w});
    };
    auto with_coin = [&](LeState s, std::uint32_t w) {
      if (s.candidate == 1) {
        s.coin = 0;
        seed(s, w);
        s.coin = 1;
        seed(s, w);
      } else {
        s.coin = unset;
        seed(s, w);
      }
    };
    if (own.flag == 1) {
      with_coin(next, weights_.first);
      next.flag = 0;
      with_coin(next, weights_.second);
    } else {
      with_coin(next, 1);
    }
    for (auto& [s, w] : cands) out.push_back({encode(s), w});
  }

  /// Verify-epoch start: a leader draws an identifier and sees it at once.
  void start_verify_epoch(int leader, Outcomes& out) const {
    LeState s{true, 0, 0, 0, unset, 0, 0, leader, unset, unset};
    if (!leader) {
      out.push_back({encode(s), 1});
      return;
    }
    for (int j = 0; j < p_.k_id; ++j) {
      s.id = s.seen = j;
      out.push_back({encode(s), 1});
    }
  }

 private:
  void check(const LeState& s) const {
    auto bit = [](int b) { return b == 0 || b == 1; };
    if (s.round < 0 || s.round >= p_.D) throw DomainError("LE epoch round out of range");
    if (!s.verify) {
      if (!bit(s.flag) || !bit(s.candidate) || s.coin < unset || s.coin > 1 ||
          !bit(s.flag_witness) || !bit(s.coin_witness))
        throw DomainError("LE compute fields out of range");
    } else if (!bit(s.leader) || s.id < unset || s.id >= p_.k_id || s.seen < unset ||
               s.seen >= p_.k_id) {
      throw DomainError("LE verify fields out of range");
    }
  }

  LeParams p_;
  int compute_count_ = 0, verify_count_ = 0;
  std::pair<std::uint32_t, std::uint32_t> weights_;
};

using LeWithRestart = restart::Restart<LeProtocol>;

inline LeWithRestart le_protocol(const LeParams& params) {
  return LeWithRestart(LeProtocol(params), params.D);
}

/// Verification-stage configuration at an epoch start with the given leader
/// set. Leader identifiers come from `ids` (one per leader, in node order).
inline Configuration verify_configuration(const LeWithRestart& p, std::size_t n,
                                          const std::vector<NodeId>& leaders,
                                          const std::vector<int>& ids) {
  if (ids.size() != leaders.size()) throw std::invalid_argument("one id per leader");
  Configuration c(n);
  for (NodeId v = 0; v < n; ++v) {
    LeState s{true, 0, 0, 0, unset, 0, 0, 0, unset, unset};
    auto it = std::find(leaders.begin(), leaders.end(), v);
    if (it != leaders.end()) {
      s.leader = 1;
      s.id = s.seen = ids[static_cast<std::size_t>(it - leaders.begin())];
    }
    c[v] = p.host().encode(s);
  }
  return c;
}

// ---------------------------------------------------------------------------
// Epoch-level trace analysis for synchronous runs.

struct EpochAnalysis {
  std::size_t compute_epochs = 0;
  ViolationLog violations;
};

/// Checks every fault-free compute epoch: flooding completeness of both
/// witnesses, elimination soundness (a candidate drops out iff it tossed 0
/// while some candidate tossed 1) and survival of at least one candidate.
inline EpochAnalysis analyze_epochs(const LeWithRestart& p, const Graph& g, const Trace& trace) {
  EpochAnalysis result;
  const LeProtocol& le = p.host();
  const int D = le.diameter_bound();
  const std::size_t T = trace.step_count();
  auto aligned_start = [&](std::size_t t) {
    for (StateId q : trace.config_at(t)) {
      if (p.is_sigma(q)) return false;
      const LeState s = le.decode(q);
      if (s.verify || s.round != 0) return false;
    }
    return true;
  };
  for (std::size_t t = 0; t + D <= T; ++t) {
    if (!aligned_start(t)) continue;
    bool clean = true;
    for (std::size_t u = t; u <= t + D && clean; ++u)
      for (StateId q : trace.config_at(u))
        if (p.is_sigma(q)) clean = false;
    if (!clean) continue;
    ++result.compute_epochs;

    const auto& start = trace.config_at(t);
    const auto& last = trace.config_at(t + D - 1);
    const auto& after = trace.config_at(t + D);
    bool any_flag = false, any_winner = false;
    for (StateId q : start) {
      const LeState s = le.decode(q);
      any_flag |= s.flag_witness == 1;
      any_winner |= s.coin_witness == 1;
    }
    // Witness bits after the final read of the epoch are what each node acted
    // upon; recompute them from the last in-epoch configuration.
    for (NodeId v = 0; v < g.size(); ++v) {
      int fw = le.decode(last[v]).flag_witness, cw = le.decode(last[v]).coin_witness;
      for (NodeId u : g.neighbors(v)) {
        fw |= le.decode(last[u]).flag_witness;
        cw |= le.decode(last[u]).coin_witness;
      }
      if (fw != static_cast<int>(any_flag) || cw != static_cast<int>(any_winner))
        result.violations.push_back({"le.flooding", t + D, {v}, "witness did not reach node"});
    }
    bool survivor = false;
    bool had_candidate = false;
    for (NodeId v = 0; v < g.size(); ++v) {
      const LeState s = le.decode(start[v]);
      if (p.is_sigma(after[v])) continue;
      const LeState a = le.decode(after[v]);
      const int now = a.verify ? a.leader : a.candidate;
      const int expect = s.candidate == 1 && !(s.coin == 0 && any_winner) ? 1 : 0;
      had_candidate |= s.candidate == 1;
      survivor |= now == 1;
      if (now != expect)
        result.violations.push_back({"le.elimination", t + D, {v},
                                     "candidacy " + std::to_string(now) + ", expected " +
                                         std::to_string(expect)});
    }
    if (had_candidate && !survivor)
      result.violations.push_back({"le.survivor", t + D, {}, "no candidate survived the epoch"});
  }
  return result;
}

}  // namespace stoneage::le
