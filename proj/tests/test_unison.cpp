#include <gtest/gtest.h>

#include <deque>
#include <map>

#include "stoneage/unison.hpp"

using namespace stoneage;
using namespace stoneage::unison;

namespace {

// Hop distance on the level cycle by BFS over {ℓ, φ(ℓ)} edges.
int bfs_distance(const LevelSpace& L, Level a, Level b) {
  std::map<Level, int> dist{{a, 0}};
  std::deque<Level> q{a};
  while (!q.empty()) {
    Level x = q.front();
    q.pop_front();
    if (x == b) return dist[x];
    for (Level y : {L.forward(x), L.backward(x)})
      if (!dist.count(y)) {
        dist[y] = dist[x] + 1;
        q.push_back(y);
      }
  }
  return -1;
}

Graph path(std::size_t n) {
  std::vector<Graph::Edge> e;
  for (NodeId v = 0; v + 1 < n; ++v) e.push_back({v, v + 1});
  return Graph(n, e);
}

}  // namespace

TEST(Levels, ForwardOperator) {
  const LevelSpace L(8);
  EXPECT_EQ(L.forward(-1), 1);
  EXPECT_EQ(L.forward(8), -8);
  EXPECT_EQ(L.forward(3), 4);
  EXPECT_EQ(L.forward(-8), -7);
}

TEST(Levels, ForwardIterates) {
  const LevelSpace L(8);  // D = 2
  EXPECT_EQ(L.forward_iter(5, 0), 5);
  EXPECT_EQ(L.forward_iter(1, -1), -1);
  EXPECT_EQ(L.forward_iter(5, 16), 5);
  Level x = 5;
  for (int i = 0; i < 16; ++i) x = L.forward(x);
  EXPECT_EQ(x, 5);
  for (Level l : {1, 4, 8, -8, -3, -1}) EXPECT_EQ(L.backward(L.forward(l)), l);
}

TEST(Levels, ClockIndexIsABijection) {
  const LevelSpace L(5);
  for (int i = 0; i < L.level_count(); ++i) {
    EXPECT_EQ(L.clock_index(L.from_clock_index(i)), i);
    EXPECT_EQ(L.clock_index(L.forward(L.from_clock_index(i))), (i + 1) % L.level_count());
  }
}

TEST(Levels, OutwardsOperator) {
  const LevelSpace L(8);
  EXPECT_EQ(L.outwards(2, 1), 3);
  EXPECT_EQ(L.outwards(-3, -1), -2);
  EXPECT_THROW(L.outwards(-7, 2), DomainError);
  EXPECT_THROW(L.outwards(1, -1), DomainError);
  EXPECT_THROW(L.forward(0), DomainError);
  EXPECT_THROW(L.forward(9), DomainError);
}

TEST(Levels, PsiSets) {
  const LevelSpace L(8);
  EXPECT_TRUE(psi_sets(L, 8).gt.empty());
  EXPECT_TRUE(psi_sets(L, 1).lt.empty());
  EXPECT_EQ(psi_sets(L, 6).gt, (std::vector<Level>{7, 8}));
  EXPECT_EQ(psi_sets(L, 6).gg, (std::vector<Level>{8}));
  EXPECT_EQ(psi_sets(L, -2).lt, (std::vector<Level>{-1}));
  EXPECT_EQ(psi_sets(L, -2).le, (std::vector<Level>{-2, -1}));
  // Membership predicates agree with the enumerated sets.
  for (Level l = -8; l <= 8; ++l) {
    if (l == 0) continue;
    const auto s = psi_sets(L, l);
    for (Level x = -8; x <= 8; ++x) {
      if (x == 0) continue;
      auto in = [&](const std::vector<Level>& v) { return std::find(v.begin(), v.end(), x) != v.end(); };
      EXPECT_EQ(L.in_psi_gt(l, x), in(s.gt));
      EXPECT_EQ(L.in_psi_ge(l, x), in(s.ge));
      EXPECT_EQ(L.in_psi_gg(l, x), in(s.gg));
      EXPECT_EQ(L.in_psi_lt(l, x), in(s.lt));
      EXPECT_EQ(L.in_psi_le(l, x), in(s.le));
      EXPECT_EQ(L.in_psi_ll(l, x), in(s.ll));
    }
  }
}

TEST(Levels, DistanceMatchesBfsOracle) {
  const LevelSpace L(8);
  EXPECT_EQ(L.distance(4, 4), 0);
  EXPECT_EQ(L.distance(1, -1), 1);
  EXPECT_EQ(L.distance(2, -2), 3);
  for (Level a = -8; a <= 8; ++a)
    for (Level b = -8; b <= 8; ++b)
      if (a && b) {
        EXPECT_EQ(L.distance(a, b), bfs_distance(L, a, b)) << a << " " << b;
      }
}

TEST(AuStates, StateSpaceSizes) {
  EXPECT_EQ(AuProtocol(1).k(), 5);
  EXPECT_EQ(AuProtocol(1).state_count(), 18u);
  EXPECT_EQ(AuProtocol(2).k(), 8);
  EXPECT_EQ(AuProtocol(2).state_count(), 30u);
  const AuProtocol au(2);
  int outputs = 0;
  for (StateId q = 0; q < au.state_count(); ++q) outputs += au.is_output(q);
  EXPECT_EQ(outputs, 2 * au.k());
}

TEST(AuStates, EncodingRoundTrips) {
  const AuProtocol au(3);
  for (StateId q = 0; q < au.state_count(); ++q) {
    EXPECT_EQ(au.encode(au.decode(q)), q);
    EXPECT_EQ(au.parse_state(au.state_name(q)), q);
  }
  EXPECT_EQ(au.state_name(au.encode(Turn::able(3))), "A+3");
  EXPECT_EQ(au.state_name(au.encode(Turn::fault(-4))), "F-4");
  EXPECT_THROW(au.encode(Turn::fault(1)), DomainError);
  EXPECT_THROW(au.parse_state("B+1"), DomainError);
}

TEST(AuTransitions, UniformNeighborhoodAdvances) {
  const AuProtocol au(2);
  for (Level l : {1, 5, 8, -8, -1}) {
    const std::vector<Turn> sensed{Turn::able(l)};
    const auto s = au.next_turn(Turn::able(l), sensed);
    EXPECT_EQ(s.next, Turn::able(au.levels().forward(l)));
    EXPECT_EQ(s.type, TransitionType::able_able);
  }
}

TEST(AuTransitions, NonProtectedNodeTurnsFaulty) {
  const AuProtocol au(2);
  const std::vector<Turn> sensed{Turn::able(3), Turn::able(6)};
  const auto s = au.next_turn(Turn::able(3), sensed);
  EXPECT_EQ(s.next, Turn::fault(3));
  EXPECT_EQ(s.type, TransitionType::able_faulty);
}

TEST(AuTransitions, OutermostFaultyAlwaysRecovers) {
  const AuProtocol au(2);
  for (Level other : {1, 4, 8, -8, -2}) {
    const std::vector<Turn> sensed{Turn::fault(8), Turn::able(other)};
    const auto s = au.next_turn(Turn::fault(8), sensed);
    EXPECT_EQ(s.next, Turn::able(7));
    EXPECT_EQ(s.type, TransitionType::faulty_able);
  }
}

TEST(AuTransitions, FaultyWaitsWhileSensingOutwards) {
  const AuProtocol au(2);
  const std::vector<Turn> sensed{Turn::fault(4), Turn::able(6)};
  EXPECT_EQ(au.next_turn(Turn::fault(4), sensed).type, TransitionType::none);
}

TEST(AuTransitions, BehindNeighborBlocksAdvance) {
  const AuProtocol au(2);
  const std::vector<Turn> sensed{Turn::able(3), Turn::able(2)};
  EXPECT_EQ(au.next_turn(Turn::able(3), sensed).type, TransitionType::none);
}

TEST(AuTransitions, InwardFaultyNeighborPropagates) {
  const AuProtocol au(2);
  const std::vector<Turn> sensed{Turn::able(3), Turn::fault(2)};
  EXPECT_EQ(au.next_turn(Turn::able(3), sensed).next, Turn::fault(3));
}

TEST(AuTransitions, EveryStateHasExactlyOneSuccessor) {
  const AuProtocol au(1);
  for (StateId q = 0; q < au.state_count(); ++q)
    for (StateId r = 0; r < au.state_count(); ++r) {
      Outcomes out;
      au.transition(q, Signal({q, r}), out);
      ASSERT_EQ(out.size(), 1u);
      EXPECT_LT(out[0].state, au.state_count());
    }
}

TEST(AuPredicates, UniformConfigurationIsGood) {
  const Graph g = path(4);
  const AuProtocol au(3);
  const TurnView v(g, au.levels(), std::vector<Turn>(4, Turn::able(1)), 3);
  EXPECT_TRUE(v.graph_good());
  EXPECT_TRUE(v.graph_protected());
  EXPECT_TRUE(v.graph_out_protected());
  for (NodeId x = 0; x < 4; ++x) EXPECT_TRUE(v.grounded_witness(x).has_value());
}

TEST(AuPredicates, HandEvaluatedEdge) {
  const Graph g = path(2);
  const AuProtocol au(2);
  const TurnView v(g, au.levels(), {Turn::able(2), Turn::able(5)}, 2);
  EXPECT_FALSE(v.node_protected(0));
  EXPECT_FALSE(v.node_protected(1));
  EXPECT_TRUE(v.out_protected(1));
  EXPECT_FALSE(v.out_protected(0));
}

TEST(AuPredicates, JustifiedByInwardFaultyNeighbor) {
  const Graph g = path(2);
  const AuProtocol au(2);
  const TurnView v(g, au.levels(), {Turn::fault(3), Turn::fault(2)}, 2);
  EXPECT_TRUE(v.node_protected(0));
  EXPECT_TRUE(v.justifiably_faulty(0));
  EXPECT_FALSE(v.unjustifiably_faulty(0));
  // A lone faulty node with protected edges and no inward faulty neighbor.
  const TurnView w(g, au.levels(), {Turn::fault(3), Turn::able(3)}, 2);
  EXPECT_TRUE(w.unjustifiably_faulty(0));
}

TEST(AuPredicates, GroundedWitnessIsAProtectedPath) {
  const Graph g = path(4);
  const AuProtocol au(3);
  const TurnView v(g, au.levels(), {Turn::able(1), Turn::able(2), Turn::able(3), Turn::able(3)}, 3);
  const auto w = v.grounded_witness(3);
  ASSERT_TRUE(w.has_value());
  EXPECT_EQ(w->front(), 0u);
  EXPECT_EQ(w->back(), 3u);
  EXPECT_EQ(w->size(), 4u);
  // Depth limit D = 2 cuts the same path.
  const TurnView shallow(g, au.levels(), v.turns(), 2);
  EXPECT_FALSE(shallow.grounded_witness(3).has_value());
}

TEST(AuProtocolRuns, UniformStartAdvancesInLockstep) {
  const Graph g = path(5);
  const AuProtocol au(4);
  StopCondition stop;
  stop.max_steps = 3 * 2 * au.k();
  const auto r = run(g, au, Scheduler::synchronous(), uniform_configuration(au, 5), stop, 1);
  for (std::size_t t = 0; t <= r.trace.step_count(); ++t) {
    const auto& c = r.trace.config_at(t);
    EXPECT_TRUE(std::all_of(c.begin(), c.end(), [&](StateId q) { return q == c[0]; }));
    EXPECT_EQ(au.decode(c[0]).level, au.levels().forward_iter(1, static_cast<long long>(t)));
  }
}

TEST(AuProtocolRuns, MutantIgnoresFaultyNeighbors) {
  // A faulty neighbor one level ahead blocks AA only through the good guard.
  const AuProtocol std_au(2), mutant(2, AuVariant::aa_without_good_guard);
  const std::vector<Turn> sensed{Turn::able(3), Turn::fault(4)};
  EXPECT_EQ(std_au.next_turn(Turn::able(3), sensed).type, TransitionType::none);
  EXPECT_EQ(mutant.next_turn(Turn::able(3), sensed).type, TransitionType::able_able);
}
