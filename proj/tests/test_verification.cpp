#include <gtest/gtest.h>

#include "stoneage/mis.hpp"
#include "stoneage/verification.hpp"

using namespace stoneage;
using namespace stoneage::verify;
using unison::AuProtocol;
using unison::Turn;

namespace {

Graph path(std::size_t n) {
  GraphSpec s;
  s.kind = GraphKind::path;
  s.n = n;
  return build_graph(s);
}

Graph random_graph(std::size_t n, std::uint32_t D, std::uint64_t seed) {
  GraphSpec s;
  s.kind = GraphKind::random_bounded;
  s.n = n;
  s.diameter_bound = D;
  s.seed = seed;
  return build_graph(s);
}

Configuration turns(const AuProtocol& au, std::vector<Turn> t) {
  Configuration c;
  for (Turn x : t) c.push_back(au.encode(x));
  return c;
}

// Position of a signed level on the cycle -k, ..., -1, 1, ..., k.
int ring_position(int level, int k) { return level < 0 ? level + k : level + k - 1; }

bool oracle_au_valid(const AuProtocol& au, const Graph& g, const Configuration& c) {
  const int k = au.k(), m = 2 * k;
  for (StateId q : c)
    if (au.decode(q).faulty) return false;
  for (auto [u, v] : g.edges()) {
    const int d = ((ring_position(au.decode(c[u]).level, k) - ring_position(au.decode(c[v]).level, k)) % m + m) % m;
    if (d != 0 && d != 1 && d != m - 1) return false;
  }
  return true;
}

/// Hand-built trace on a fixed level script: every step activates all nodes
/// and closes a round.
Trace scripted_trace(const AuProtocol& au, std::vector<std::vector<Turn>> configs) {
  Trace t;
  t.initial = turns(au, configs.front());
  for (std::size_t i = 1; i < configs.size(); ++i) {
    StepRecord s;
    for (NodeId v = 0; v < configs[i].size(); ++v) s.activated.push_back(v);
    s.draws.assign(configs[i].size(), 0);
    s.after = turns(au, configs[i]);
    t.steps.push_back(std::move(s));
    t.round_boundaries.push_back(i);
  }
  return t;
}

}  // namespace

TEST(AuSafety, NeighboringClocks) {
  const AuProtocol au(1);  // k = 5
  const Graph g = path(3);
  const int k = au.k();
  EXPECT_TRUE(check_au_safety(turns(au, {Turn::able(1), Turn::able(2), Turn::able(2)}), g, au).ok());
  EXPECT_TRUE(check_au_safety(turns(au, {Turn::able(-1), Turn::able(1), Turn::able(2)}), g, au).ok());
  EXPECT_TRUE(check_au_safety(turns(au, {Turn::able(k), Turn::able(-k), Turn::able(-k)}), g, au).ok());

  const auto bad = check_au_safety(turns(au, {Turn::able(1), Turn::able(3), Turn::able(3)}), g, au);
  EXPECT_EQ(bad.status, Status::violation);
  EXPECT_EQ(bad.nodes, (std::vector<NodeId>{0, 1}));

  const auto wrap = check_au_safety(turns(au, {Turn::able(k), Turn::able(-k + 1), Turn::able(-k + 1)}), g, au);
  EXPECT_EQ(wrap.status, Status::violation);

  const auto fault = check_au_safety(turns(au, {Turn::able(1), Turn::fault(3), Turn::able(2)}), g, au);
  EXPECT_EQ(fault.status, Status::not_output);
  EXPECT_EQ(fault.nodes, (std::vector<NodeId>{1}));
}

TEST(AuSafety, AgreesWithRingOracle) {
  const AuProtocol au(2);
  const Graph g = random_graph(7, 2, 3);
  for (std::uint64_t seed = 1; seed <= 300; ++seed) {
    const auto c = random_configuration(au, g.size(), seed);
    EXPECT_EQ(configuration_valid(c, g, au, TaskChecker::au(au)), oracle_au_valid(au, g, c)) << seed;
  }
}

TEST(AuLiveness, LockstepRunPassesForSeveralIncrements) {
  const AuProtocol au(2);
  const Graph g = random_graph(8, 2, 5);
  StopCondition stop;
  stop.max_rounds = 60;
  const auto r = run(g, au, Scheduler::synchronous(), uniform_configuration(au, g.size()), stop, 1);
  for (int i : {1, 3}) {
    EXPECT_TRUE(check_au_liveness(r.trace, g, au, clock_model(au), 0, i).ok()) << i;
    EXPECT_TRUE(check_au_liveness_tail(r.trace, g, au, clock_model(au), 0, i).ok()) << i;
  }
}

TEST(AuLiveness, StalledNodeIsReported) {
  const AuProtocol au(1);
  const Graph g = path(2);
  const auto t = scripted_trace(au, {{Turn::able(1), Turn::able(1)},
                                     {Turn::able(2), Turn::able(1)},
                                     {Turn::able(2), Turn::able(1)},
                                     {Turn::able(2), Turn::able(1)}});
  const auto r = check_au_liveness(t, g, au, clock_model(au), 0, 1);
  EXPECT_EQ(r.status, Status::violation);
  EXPECT_EQ(r.nodes, (std::vector<NodeId>{1}));
}

TEST(AuLiveness, JumpIsReported) {
  const AuProtocol au(1);
  const Graph g = path(2);
  const auto t = scripted_trace(au, {{Turn::able(1), Turn::able(1)},
                                     {Turn::able(3), Turn::able(2)},
                                     {Turn::able(3), Turn::able(3)}});
  const auto r = check_au_liveness(t, g, au, clock_model(au), 0, 1);
  EXPECT_EQ(r.status, Status::violation);
  EXPECT_EQ(r.nodes, (std::vector<NodeId>{0}));
  EXPECT_EQ(r.step, 0u);
}

TEST(AuLiveness, ShortTraceIsABudgetProblem) {
  const AuProtocol au(1);
  const Graph g = path(2);
  const auto t = scripted_trace(au, {{Turn::able(1), Turn::able(1)}, {Turn::able(2), Turn::able(2)}});
  EXPECT_EQ(check_au_liveness(t, g, au, clock_model(au), 0, 1).status, Status::budget);
}

TEST(MisCheck, Examples) {
  const Graph g = path(3);
  EXPECT_TRUE(check_mis({1, 0, 1}, g).ok());
  EXPECT_TRUE(check_mis({0, 1, 0}, g).ok());
  auto r = check_mis({1, 1, 0}, g);
  EXPECT_EQ(r.detail, "independence violated");
  EXPECT_EQ(r.nodes, (std::vector<NodeId>{0, 1}));
  r = check_mis({0, 0, 1}, g);
  EXPECT_EQ(r.detail, "maximality violated");
  EXPECT_EQ(r.nodes, (std::vector<NodeId>{0}));
}

TEST(LeCheck, Examples) {
  EXPECT_TRUE(check_le({0, 1, 0}).ok());
  EXPECT_EQ(check_le({0, 0, 0}).detail, "no leader");
  const auto r = check_le({1, 0, 1});
  EXPECT_EQ(r.detail, "multiple leaders");
  EXPECT_EQ(r.nodes, (std::vector<NodeId>{0, 2}));
}

TEST(Stabilization, ValidFromTheStart) {
  const AuProtocol au(2);
  const Graph g = random_graph(8, 2, 2);
  StopCondition stop;
  stop.max_rounds = 100;
  const auto r = run(g, au, Scheduler::round_robin(), uniform_configuration(au, g.size()), stop, 1);
  const auto rep = measure_stabilization(r.trace, g, au, TaskChecker::au(au));
  EXPECT_TRUE(rep.stabilized);
  EXPECT_EQ(rep.stabilization_round, 0u);
  EXPECT_EQ(rep.stabilization_time, 0u);
  EXPECT_TRUE(rep.violations.empty());
}

TEST(Stabilization, MatchesIndependentTailReading) {
  const int D = 2;
  const AuProtocol au(D);
  for (std::uint64_t seed = 1; seed <= 15; ++seed) {
    const Graph g = random_graph(8, D, seed);
    StopCondition stop;
    stop.max_rounds = 8 * D * D * D + 8 * au.k() + 10;
    const auto r = run(g, au, Scheduler::random_fair(3, seed), random_configuration(au, g.size(), seed), stop, seed);
    const auto rep = measure_stabilization(r.trace, g, au, TaskChecker::au(au));

    std::uint64_t earliest = 0;
    for (std::uint64_t t = 0; t <= r.trace.step_count(); ++t)
      if (!oracle_au_valid(au, g, r.trace.config_at(t))) earliest = t + 1;
    std::size_t round = 0;
    while (r.trace.round_boundaries[round] < earliest) ++round;

    ASSERT_TRUE(rep.stabilized) << seed;
    EXPECT_EQ(rep.stabilization_round, round) << seed;
    EXPECT_LE(rep.stabilization_round, static_cast<std::size_t>(8 * D * D * D)) << seed;
  }
}

TEST(Stabilization, UnfinishedWindowIsNotStabilized) {
  const AuProtocol au(2);
  const Graph g = random_graph(8, 2, 2);
  StopCondition stop;
  stop.max_rounds = 10;
  const auto r = run(g, au, Scheduler::synchronous(), uniform_configuration(au, g.size()), stop, 1);
  EXPECT_FALSE(measure_stabilization(r.trace, g, au, TaskChecker::au(au)).stabilized);
}

TEST(Stabilization, InjectedMisFaultMovesTheRoundForward) {
  const int D = 2;
  const auto p = mis::mis_protocol({D, 0.25, 4});
  const Graph g = random_graph(10, D, 7);
  StopCondition stop;
  stop.max_rounds = 400;
  const auto first = run(g, p, Scheduler::synchronous(), random_configuration(p, g.size(), 7), stop, 7);
  const auto out = output_vector(p, first.trace.final_config());
  ASSERT_TRUE(out && check_mis(*out, g).ok());

  // Copy an IN node's state onto a neighbor: independence breaks.
  Configuration hurt = first.trace.final_config();
  NodeId victim = 0;
  for (auto [u, v] : g.edges())
    if ((*out)[u] == 1 || (*out)[v] == 1) {
      const NodeId in = (*out)[u] == 1 ? u : v;
      victim = in == u ? v : u;
      hurt[victim] = hurt[in];
      break;
    }
  const auto second = run(g, p, Scheduler::synchronous(), hurt, stop, 8);

  Trace joined = first.trace;
  StepRecord fault;
  fault.activated = {victim};
  fault.draws = {0};
  fault.after = hurt;
  joined.steps.push_back(fault);
  for (const auto& s : second.trace.steps) joined.steps.push_back(s);
  joined.round_boundaries.clear();
  for (std::uint64_t t = 0; t <= first.trace.step_count(); ++t) joined.round_boundaries.push_back(t);
  for (std::uint64_t t = 1; t <= second.trace.step_count(); ++t)
    joined.round_boundaries.push_back(first.trace.step_count() + 1 + t);

  const auto rep = measure_stabilization(joined, g, p, TaskChecker::mis(D));
  ASSERT_TRUE(rep.stabilized);
  EXPECT_GT(rep.stabilization_time, first.trace.step_count());
}

TEST(Monitors, QuietOnAlgAu) {
  for (int D : {1, 2, 3}) {
    const AuProtocol au(D);
    for (std::uint64_t seed = 1; seed <= 6; ++seed) {
      GraphSpec s;
      s.kind = D == 1 ? GraphKind::complete : GraphKind::random_bounded;
      s.n = 9;
      s.diameter_bound = static_cast<std::uint32_t>(D);
      s.seed = seed;
      const Graph g = build_graph(s);
      auto mon = AuMonitors::for_protocol(g, au);
      StopCondition stop;
      stop.max_rounds = 8 * D * D * D + 50;
      run(g, au, Scheduler::random_fair(3, seed), random_configuration(au, g.size(), seed), stop, seed,
          mon.observer());
      EXPECT_EQ(mon.total_violations(), 0u) << "D=" << D << " seed=" << seed << " "
                                            << (mon.log().log().empty() ? "" : mon.log().log().front().detail);
      EXPECT_GT(mon.log().counts().at("au.obs4").checks, 0u);
    }
  }
}

TEST(Monitors, CatchTheMutant) {
  const int D = 2;
  const AuProtocol mutant(D, unison::AuVariant::aa_without_good_guard);
  std::uint64_t hits = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Graph g = random_graph(9, D, seed);
    auto mon = AuMonitors::for_protocol(g, mutant);
    StopCondition stop;
    stop.max_rounds = 100;
    run(g, mutant, Scheduler::random_fair(3, seed), random_configuration(mutant, g.size(), seed), stop, seed,
        mon.observer());
    hits += mon.total_violations();
  }
  EXPECT_GT(hits, 0u);
}

TEST(Monitors, ReplayMatchesLiveObservation) {
  const AuProtocol au(2);
  const Graph g = random_graph(8, 2, 4);
  const AuProtocol mutant(2, unison::AuVariant::aa_without_good_guard);
  auto live = AuMonitors::for_protocol(g, mutant);
  StopCondition stop;
  stop.max_rounds = 60;
  const auto r = run(g, mutant, Scheduler::random_fair(3, 4), random_configuration(mutant, g.size(), 4), stop, 4,
                     live.observer());
  auto later = AuMonitors::for_protocol(g, mutant);
  replay(r.trace, later);
  EXPECT_EQ(live.total_violations(), later.total_violations());
  EXPECT_EQ(live.log().log(), later.log().log());
}

TEST(MonitorLog, CountsAndKeepsASample) {
  MonitorLog log(2);
  log.pass("a");
  for (std::uint64_t t = 0; t < 5; ++t) log.hit({"a", t, {}, "x"});
  log.hit({"b", 9, {1}, "y"});
  EXPECT_EQ(log.counts().at("a").checks, 6u);
  EXPECT_EQ(log.counts().at("a").violations, 5u);
  EXPECT_EQ(log.total_violations(), 6u);
  EXPECT_EQ(log.log().size(), 3u);
  EXPECT_EQ(after(log.log(), 1).size(), 2u);
}
