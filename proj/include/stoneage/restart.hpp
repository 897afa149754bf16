#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stoneage/engine.hpp"
#include "stoneage/errors.hpp"
#include "stoneage/topology.hpp"
#include "stoneage/violation.hpp"

namespace stoneage::restart {

/// The three Restart rules over a sensed set. Each entry is a σ index, or
/// nullopt for a host (non-Restart) state. Returns the next σ index, or
/// nullopt when the node exits to the host's initial state.
inline std::optional<int> restart_transition(std::span<const std::optional<int>> sensed, int D) {
  bool any_host = false;
  int i_min = 2 * D + 1;
  bool all_exit = true;
  for (const auto& s : sensed) {
    if (!s) {
      any_host = true;
      all_exit = false;
      continue;
    }
    if (*s < 0 || *s > 2 * D) throw DomainError("restart index out of range");
    i_min = std::min(i_min, *s);
    if (*s != 2 * D) all_exit = false;
  }
  if (i_min > 2 * D) throw DomainError("restart rules need a sensed restart state");
  if (any_host) return 0;
  if (all_exit) return std::nullopt;
  return i_min + 1;
}

/// Hosts may expose a local fault detector; a true result sends the node to
/// restart entry in the same step.
template <class H>
concept FaultDetecting = requires(const H& h, StateId q, const Signal& s) {
  { h.fault(q, s) } -> std::convertible_to<bool>;
};

/// Host protocol composed with the restart chain R0..R2D.
///
/// Host states keep their ids; restart state i gets id host.state_count() + i.
template <Protocol Host>
class Restart {
 public:
  Restart(Host host, int D) : host_(std::move(host)), d_(D) {
    if (D < 1) throw DomainError("D must be >= 1");
    base_ = static_cast<StateId>(host_.state_count());
    for (StateId q = 0; q < base_; ++q) {
      if (parse_sigma_name(host_.state_name(q)))
        throw ProtocolError("host state name `" + host_.state_name(q) +
                            "` collides with restart states");
    }
  }

  const Host& host() const noexcept { return host_; }
  int diameter_bound() const noexcept { return d_; }

  StateId sigma(int i) const {
    if (i < 0 || i > 2 * d_) throw DomainError("restart index out of range");
    return base_ + static_cast<StateId>(i);
  }
  bool is_sigma(StateId q) const noexcept { return q >= base_; }
  std::optional<int> sigma_index(StateId q) const {
    if (!is_sigma(q)) return std::nullopt;
    return static_cast<int>(q - base_);
  }
  StateId entry() const { return sigma(0); }
  StateId exit_state() const { return sigma(2 * d_); }

  std::size_t state_count() const { return host_.state_count() + 2 * d_ + 1; }
  StateId initial_state() const { return host_.initial_state(); }
  bool is_output(StateId q) const { return !is_sigma(q) && host_.is_output(q); }
  std::int64_t output(StateId q) const {
    if (is_sigma(q)) throw DomainError("restart state has no output");
    return host_.output(q);
  }
  std::string name() const { return host_.name(); }

  std::string state_name(StateId q) const {
    if (is_sigma(q)) return "R" + std::to_string(q - base_);
    return host_.state_name(q);
  }

  StateId parse_state(std::string_view text) const {
    if (auto i = parse_sigma_name(text)) return sigma(*i);
    return host_.parse_state(text);
  }

  /// True iff the host's detector fires (always false for hosts without one).
  bool host_fault(StateId q, const Signal& s) const {
    if constexpr (FaultDetecting<Host>) {
      return host_.fault(q, s);
    } else {
      return false;
    }
  }

  void transition(StateId q, const Signal& s, Outcomes& out) const {
    const bool senses_sigma = !s.empty() && is_sigma(s.states().back());
    if (!senses_sigma) {
      if (host_fault(q, s)) {
        out.push_back({entry(), 1});
        return;
      }
      host_.transition(q, s, out);
      return;
    }
    std::vector<std::optional<int>> sensed;
    sensed.reserve(s.size());
    for (StateId r : s) sensed.push_back(sigma_index(r));
    auto next = restart_transition(sensed, d_);
    out.push_back({next ? sigma(*next) : host_.initial_state(), 1});
  }

 private:
  static std::optional<int> parse_sigma_name(std::string_view text) {
    if (text.size() < 2 || text[0] != 'R') return std::nullopt;
    int i = 0;
    for (char c : text.substr(1)) {
      if (c < '0' || c > '9') return std::nullopt;
      i = i * 10 + (c - '0');
    }
    return i;
  }

  Host host_;
  int d_;
  StateId base_ = 0;
};

// ---------------------------------------------------------------------------
// Post-hoc checks on synchronous traces of a Restart-wrapped protocol.

struct ExitReport {
  /// First time a restart state is present.
  std::optional<std::uint64_t> first_restart_time;
  /// First time restart entry R0 is present.
  std::optional<std::uint64_t> first_entry_time;
  /// First step t with every node at R2D at time t and at q*0 at time t+1.
  std::optional<std::uint64_t> exit_step;

  /// exit_step - first_entry_time, the quantity bounded by 3D.
  std::optional<std::uint64_t> delay_from_entry() const {
    if (!exit_step || !first_entry_time) return std::nullopt;
    return *exit_step - *first_entry_time;
  }
  std::optional<std::uint64_t> delay_from_restart() const {
    if (!exit_step || !first_restart_time) return std::nullopt;
    return *exit_step - *first_restart_time;
  }
};

template <Protocol H>
ExitReport concurrent_exit(const Restart<H>& proto, const Trace& trace) {
  ExitReport r;
  const std::size_t T = trace.step_count();
  for (std::size_t t = 0; t <= T; ++t) {
    const auto& c = trace.config_at(t);
    bool any_sigma = false, any_entry = false;
    for (StateId q : c) {
      any_sigma = any_sigma || proto.is_sigma(q);
      any_entry = any_entry || q == proto.entry();
    }
    if (any_sigma && !r.first_restart_time) r.first_restart_time = t;
    if (any_entry && !r.first_entry_time) r.first_entry_time = t;
    if (!r.first_restart_time || t == T) continue;
    const auto& next = trace.config_at(t + 1);
    const bool all_exit = std::all_of(c.begin(), c.end(),
                                      [&](StateId q) { return q == proto.exit_state(); });
    const bool all_init = std::all_of(next.begin(), next.end(),
                                      [&](StateId q) { return q == proto.initial_state(); });
    if (all_exit && all_init) {
      r.exit_step = t;
      break;
    }
  }
  return r;
}

namespace detail {

template <Protocol H>
bool all_in_window(const Restart<H>& p, const Configuration& c, int lo, int hi) {
  return std::all_of(c.begin(), c.end(), [&](StateId q) {
    auto i = p.sigma_index(q);
    return i && *i >= lo && *i <= hi;
  });
}

template <Protocol H>
int min_index(const Restart<H>& p, const Configuration& c) {
  int m = 2 * p.diameter_bound() + 1;
  for (StateId q : c)
    if (auto i = p.sigma_index(q)) m = std::min(m, *i);
  return m;
}

}  // namespace detail

/// Growing ball from an entry node: if v is at R0 at time t, every node within
/// distance d is in R0..Rd at time t+d, for d <= D.
template <Protocol H>
ViolationLog check_entry_ball(const Restart<H>& p, const Graph& g, const Trace& trace) {
  ViolationLog log;
  const int D = p.diameter_bound();
  const std::size_t T = trace.step_count();
  for (std::size_t t = 0; t <= T; ++t) {
    const auto& c = trace.config_at(t);
    for (NodeId v = 0; v < g.size(); ++v) {
      if (c[v] != p.entry()) continue;
      for (int d = 0; d <= D && t + d <= T; ++d) {
        const auto& later = trace.config_at(t + d);
        for (NodeId u = 0; u < g.size(); ++u) {
          if (g.distance(u, v) > static_cast<std::uint32_t>(d)) continue;
          auto i = p.sigma_index(later[u]);
          if (!i || *i > d)
            log.push_back({"restart.entry_ball", t + d, {v, u},
                           "node at distance <= " + std::to_string(d) + " is " +
                               p.state_name(later[u])});
        }
      }
    }
  }
  return log;
}

/// Index window shift: if all nodes are in R0..RD at time t with minimum
/// index j, then at t+h all indices lie in [j+h, D+h] for h <= D.
template <Protocol H>
ViolationLog check_index_window(const Restart<H>& p, const Trace& trace) {
  ViolationLog log;
  const int D = p.diameter_bound();
  const std::size_t T = trace.step_count();
  for (std::size_t t = 0; t <= T; ++t) {
    const auto& c = trace.config_at(t);
    if (!detail::all_in_window(p, c, 0, D)) continue;
    const int j = detail::min_index(p, c);
    for (int h = 0; h <= D && t + h <= T; ++h) {
      if (!detail::all_in_window(p, trace.config_at(t + h), j + h, D + h))
        log.push_back({"restart.index_window", t + h, {},
                       "indices escape [" + std::to_string(j + h) + ", " +
                           std::to_string(D + h) + "]"});
    }
  }
  return log;
}

/// Exact ball: under the same premise, the radius-d ball around a
/// minimum-index node is exactly R(j+d) at t+d.
template <Protocol H>
ViolationLog check_exact_ball(const Restart<H>& p, const Graph& g, const Trace& trace) {
  ViolationLog log;
  const int D = p.diameter_bound();
  const std::size_t T = trace.step_count();
  for (std::size_t t = 0; t <= T; ++t) {
    const auto& c = trace.config_at(t);
    if (!detail::all_in_window(p, c, 0, D)) continue;
    const int j = detail::min_index(p, c);
    for (NodeId vmin = 0; vmin < g.size(); ++vmin) {
      if (c[vmin] != p.sigma(j)) continue;
      for (int d = 0; d <= D && t + d <= T; ++d) {
        const auto& later = trace.config_at(t + d);
        for (NodeId u = 0; u < g.size(); ++u) {
          if (g.distance(u, vmin) > static_cast<std::uint32_t>(d)) continue;
          if (later[u] != p.sigma(j + d))
            log.push_back({"restart.exact_ball", t + d, {vmin, u},
                           "expected R" + std::to_string(j + d) + ", found " +
                               p.state_name(later[u])});
        }
      }
    }
  }
  return log;
}

/// Random configuration with at least one restart state and at least one
/// host state (when n >= 2).
template <Protocol H>
Configuration mixed_configuration(const Restart<H>& p, std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, streams::init);
  const auto host_count = p.host().state_count();
  const int chain = 2 * p.diameter_bound() + 1;
  Configuration c(n);
  for (auto& q : c) {
    q = rng.bernoulli(1, 2) ? p.sigma(static_cast<int>(rng.uniform(chain)))
                            : static_cast<StateId>(rng.uniform(host_count));
  }
  const auto forced_sigma = rng.uniform(n);
  c[forced_sigma] = p.sigma(static_cast<int>(rng.uniform(chain)));
  if (n >= 2) {
    auto forced_host = rng.uniform(n - 1);
    if (forced_host >= forced_sigma) ++forced_host;
    c[forced_host] = static_cast<StateId>(rng.uniform(host_count));
  }
  return c;
}

/// Minimal host for exercising the chain in isolation: a fault-free cyclic
/// counter 0 -> 1 -> ... -> m-1 -> 0 with q*0 = 0.
class CounterHost {
 public:
  explicit CounterHost(std::uint32_t modulus = 4) : m_(modulus) {
    if (m_ < 1) throw DomainError("counter modulus must be positive");
  }
  std::size_t state_count() const { return m_; }
  StateId initial_state() const { return 0; }
  bool is_output(StateId) const { return true; }
  std::int64_t output(StateId q) const { return q; }
  void transition(StateId q, const Signal&, Outcomes& out) const {
    out.push_back({(q + 1) % m_, 1});
  }
  std::string state_name(StateId q) const { return "c" + std::to_string(q); }
  StateId parse_state(std::string_view text) const {
    if (text.size() < 2 || text[0] != 'c') throw DomainError("bad counter state");
    const auto v = std::stoul(std::string(text.substr(1)));
    if (v >= m_) throw DomainError("counter state out of range");
    return static_cast<StateId>(v);
  }
  std::string name() const { return "counter"; }

 private:
  std::uint32_t m_;
};

}  // namespace stoneage::restart
