#include <gtest/gtest.h>

#include <sstream>

#include "stoneage/experiment.hpp"
#include "stoneage/io.hpp"
#include "stoneage/le.hpp"

using namespace stoneage;
using namespace stoneage::io;

namespace {

Graph random_graph(std::size_t n, std::uint32_t D, std::uint64_t seed) {
  GraphSpec s;
  s.kind = GraphKind::random_bounded;
  s.n = n;
  s.diameter_bound = D;
  s.seed = seed;
  return build_graph(s);
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

}  // namespace

TEST(GraphJson, RoundTrip) {
  const Graph g = random_graph(9, 3, 4);
  const auto j = graph_to_json(g);
  EXPECT_EQ(j.at("diameter").get<std::uint32_t>(), g.diameter());
  EXPECT_EQ(graph_from_json(j), g);
}

TEST(TraceFile, WriteReadReplay) {
  const auto p = le::le_protocol({2, 0.25, 4});
  const Graph g = random_graph(8, 2, 3);
  StopCondition stop;
  stop.max_rounds = 40;
  const auto r = run(g, p, Scheduler::random_fair(2, 3), random_configuration(p, g.size(), 3), stop, 3);
  std::stringstream buf;
  write_trace(buf, p, g, r.trace, json{{"note", "test"}});

  const auto text = lines(buf.str());
  ASSERT_EQ(text.size(), r.trace.step_count() + 1);
  const auto header = json::parse(text[0]);
  EXPECT_EQ(header.at("type"), "header");
  EXPECT_EQ(header.at("protocol"), p.name());
  EXPECT_EQ(header.at("R").get<std::vector<std::uint64_t>>(), r.trace.round_boundaries);

  buf.seekg(0);
  const auto f = read_trace_file(buf);
  EXPECT_EQ(f.activated.size(), r.trace.step_count());
  EXPECT_EQ(states_from_json(p, f.header.at("initial")), r.trace.initial);
  EXPECT_EQ(f.activated[5], r.trace.steps[5].activated);

  const auto rep = replay_trace(p, f);
  EXPECT_TRUE(rep.ok) << rep.detail;
  EXPECT_EQ(rep.steps, r.trace.step_count());
}

TEST(TraceFile, TamperedStepIsFound) {
  const unison::AuProtocol au(2);
  const Graph g = random_graph(6, 2, 1);
  StopCondition stop;
  stop.max_rounds = 20;
  const auto r = run(g, au, Scheduler::round_robin(), random_configuration(au, g.size(), 1), stop, 1);
  std::stringstream buf;
  write_trace(buf, au, g, r.trace, json::object());
  auto f = read_trace_file(buf);
  const std::size_t t = 17, v = f.activated[t].front();
  const StateId q = au.parse_state(f.states[t][v]);
  f.states[t][v] = au.state_name((q + 1) % au.state_count());
  // Later records still hold the original run; only step t disagrees.
  const auto rep = replay_trace(au, f);
  EXPECT_FALSE(rep.ok);
  EXPECT_EQ(rep.mismatch_step, t);
  EXPECT_NE(rep.detail.find("node " + std::to_string(v)), std::string::npos);
}

TEST(TraceFile, Malformed) {
  std::istringstream empty("");
  EXPECT_THROW(read_trace_file(empty), ParseError);
  std::istringstream no_header(R"({"t":0,"activated":[0],"states":["A1"]})");
  EXPECT_THROW(read_trace_file(no_header), ParseError);
  std::istringstream bad_json("{\"type\":\"header\"}\n{oops\n");
  try {
    read_trace_file(bad_json);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::istringstream gap("{\"type\":\"header\"}\n{\"t\":1,\"activated\":[0],\"states\":[\"A1\"]}\n");
  EXPECT_THROW(read_trace_file(gap), ParseError);
}

TEST(ExperimentReplay, RebuildsTheProtocolFromTheHeader) {
  experiment::ExperimentConfig c;
  c.protocol.name = "mis";
  c.protocol.D = 2;
  c.graph.spec.kind = GraphKind::random_bounded;
  c.graph.spec.n = 8;
  c.max_rounds = 50;
  const auto p = mis::mis_protocol({2, 0.25, 4});
  const auto out = experiment::run_protocol(c, p, 5, true);
  ASSERT_TRUE(out.trace.has_value());
  std::stringstream buf;
  write_trace(buf, p, out.graph, *out.trace, experiment::trace_meta(c));
  const auto rep = experiment::replay_trace_file(buf);
  EXPECT_TRUE(rep.ok) << rep.detail;
  EXPECT_EQ(rep.steps, out.trace->step_count());
}

TEST(ViolationJsonl, RoundTrip) {
  const ViolationLog log{{"au.obs1", 4, {1, 2}, "protected edge lost protection"},
                         {"mis.phase", 90, {}, "phase \"x\"\nsplit"}};
  std::stringstream buf;
  write_violations(buf, log);
  EXPECT_EQ(lines(buf.str()).size(), 2u);
  EXPECT_EQ(read_violations(buf), log);
}

TEST(ViolationJsonl, ErrorsCarryTheLine) {
  std::istringstream in(
      "{\"monitor\":\"a\",\"step\":1,\"nodes\":[],\"detail\":\"\"}\n\n{\"monitor\":\"b\",\"step\":2}\n");
  try {
    read_violations(in);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}
