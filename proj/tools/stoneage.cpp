// Command-line front end: run and sweep experiments, check the live-lock
// counterexample, generate graphs and replay traces.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "stoneage/experiment.hpp"
#include "stoneage/failed_unison.hpp"
#include "stoneage/io.hpp"
#include "stoneage/topology.hpp"

namespace {

using namespace stoneage;
using experiment::json;

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw ConfigError("output", "cannot write `" + path + "`");
  out << text;
}

std::vector<std::uint64_t> parse_values(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoull(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("values", "bad value `" + tok + "`");
    }
  }
  return out;
}

int cmd_run(const std::string& config_path, const std::string& out_path, unsigned jobs,
            const std::string& trace_dir) {
  auto cfg = experiment::load_config(config_path);
  if (!trace_dir.empty()) cfg.trace_dir = trace_dir;
  const auto report = experiment::run_experiment(cfg, jobs);
  emit(out_path.empty() ? cfg.output : out_path, experiment::report_to_json(report).dump(2) + "\n");
  const auto& s = report.summary;
  std::cerr << s.stabilized << "/" << s.runs << " runs stabilized";
  if (s.max_round) std::cerr << ", median round " << *s.median_round << ", max round " << *s.max_round;
  std::cerr << ", " << s.failures << " post-stabilization failures\n";
  return report.exit_code;
}

int cmd_sweep(const std::string& config_path, const std::string& axis, const std::string& values,
              const std::string& out_path, const std::string& csv_path, unsigned jobs) {
  const auto cfg = experiment::load_config(config_path);
  const auto result = experiment::sweep(cfg, experiment::parse_axis(axis), parse_values(values), jobs);
  emit(out_path, experiment::sweep_to_json(result).dump(2) + "\n");
  if (!csv_path.empty()) {
    std::ostringstream csv;
    experiment::write_sweep_csv(csv, result);
    emit(csv_path, csv.str());
  }
  return result.exit_code;
}

int cmd_counterexample(bool as_json) {
  const auto inst = failed::livelock_instance();
  const auto v = failed::run_livelock_check();
  auto names = [&](const Configuration& c) {
    std::vector<std::string> out;
    for (StateId q : c) out.push_back(inst.protocol.state_name(q));
    return out;
  };
  if (as_json) {
    json steps = json::array();
    for (const auto& s : v.steps)
      steps.push_back({{"step", s.step},
                       {"node", s.node},
                       {"move", failed::move_name(s.move)},
                       {"before", inst.protocol.state_name(inst.protocol.encode(s.before))},
                       {"after", inst.protocol.state_name(inst.protocol.encode(s.after))}});
    json j = {{"initial", names(inst.initial)},
              {"after_first_iteration", names(v.after_first_iteration)},
              {"figure_match", v.figure_match},
              {"classification_ok", v.classification_ok},
              {"orbit_closed", v.orbit_closed},
              {"never_good", v.never_good},
              {"verdict", v.pass() ? "pass" : "fail"},
              {"failures", v.failures},
              {"steps", steps}};
    std::cout << j.dump(2) << "\n";
  } else {
    auto line = [](const std::vector<std::string>& c) {
      std::string s;
      for (std::size_t i = 0; i < c.size(); ++i) s += (i ? " " : "") + ("v" + std::to_string(i) + "=" + c[i]);
      return s;
    };
    std::cout << "wheel W8, c=2, D=2\n";
    std::cout << "time 0: " << line(names(inst.initial)) << "\n";
    for (std::size_t i = 0; i < 8; ++i) {
      const auto& s = v.steps[i];
      std::cout << "  step " << s.step << ": v" << s.node << " "
                << inst.protocol.state_name(inst.protocol.encode(s.before)) << " -> "
                << inst.protocol.state_name(inst.protocol.encode(s.after)) << " ("
                << failed::move_name(s.move) << ")\n";
    }
    std::cout << "time 8: " << line(names(v.after_first_iteration)) << "\n";
    std::cout << "rotated initial configuration at time 8: " << (v.figure_match ? "yes" : "no") << "\n";
    std::cout << "move pattern matches in all 56 steps: " << (v.classification_ok ? "yes" : "no") << "\n";
    std::cout << "initial configuration again at time 56: " << (v.orbit_closed ? "yes" : "no") << "\n";
    std::cout << "good configuration never reached: " << (v.never_good ? "yes" : "no") << "\n";
    for (const auto& f : v.failures) std::cout << "  " << f << "\n";
    std::cout << "verdict: " << (v.pass() ? "pass" : "fail") << "\n";
  }
  return v.pass() ? experiment::exit_ok : experiment::exit_violation;
}

int cmd_graph_gen(const std::string& kind, std::size_t n, std::uint32_t D, std::uint64_t seed, double p,
                  const std::string& out_path) {
  GraphSpec spec;
  spec.kind = experiment::detail::graph_kind(kind, "kind");
  if (spec.kind == GraphKind::edge_list) throw ConfigError("kind", "edge_list is an input format");
  spec.n = n;
  spec.diameter_bound = D;
  spec.seed = seed;
  spec.extra_edge_probability = p;
  const Graph g = build_graph(spec);
  std::ostringstream text;
  write_edge_list(text, g);
  emit(out_path, text.str());
  return experiment::exit_ok;
}

int cmd_trace_replay(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("trace", "cannot open `" + path + "`");
  const auto r = experiment::replay_trace_file(in);
  if (r.ok) {
    std::cout << "replayed " << r.steps << " steps: identical\n";
    return experiment::exit_ok;
  }
  std::cout << "mismatch at step " << *r.mismatch_step << ": " << r.detail << "\n";
  return experiment::exit_violation;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and verification workbench for stone-age protocols"};
  app.require_subcommand(1);
  unsigned jobs = experiment::default_jobs();
  app.add_option("-j,--jobs", jobs, "worker threads (default: $STONEAGE_JOBS or all cores)")
      ->check(CLI::PositiveNumber);

  std::string config, out, csv, axis, values, trace_dir;
  auto* run = app.add_subcommand("run", "run a seeded batch and print the JSON report");
  run->add_option("config", config, "experiment config (JSON)")->required();
  run->add_option("-o,--out", out, "report path (default: config output or stdout)");
  run->add_option("--trace-dir", trace_dir, "write one JSONL trace per seed here");

  auto* sw = app.add_subcommand("sweep", "repeat a batch over values of one axis");
  sw->add_option("config", config, "experiment config (JSON)")->required();
  sw->add_option("--axis", axis, "n, D or B")->required();
  sw->add_option("--values", values, "comma-separated values")->required();
  sw->add_option("-o,--out", out, "JSON table path (default: stdout)");
  sw->add_option("--csv", csv, "also write the table as CSV");

  bool as_json = false;
  auto* cx = app.add_subcommand("counterexample", "replay the live-lock of the reset-based unison");
  cx->add_flag("--json", as_json, "print the verdict as JSON");

  auto* graph = app.add_subcommand("graph", "graph utilities");
  graph->require_subcommand(1);
  std::string kind = "random";
  std::size_t n = 8;
  std::uint32_t D = 2;
  std::uint64_t seed = 1;
  double p = 0.3;
  auto* gen = graph->add_subcommand("gen", "write a graph as an edge list");
  gen->add_option("--kind", kind, "complete, path, cycle, wheel or random");
  gen->add_option("-n", n, "node count");
  gen->add_option("-D,--diameter", D, "diameter bound (random graphs)");
  gen->add_option("--seed", seed, "seed (random graphs)");
  gen->add_option("-p,--extra-edge-probability", p, "extra edge probability (random graphs)");
  gen->add_option("-o,--out", out, "output path (default: stdout)");

  auto* trace = app.add_subcommand("trace", "trace utilities");
  trace->require_subcommand(1);
  std::string trace_path;
  auto* replay = trace->add_subcommand("replay", "re-execute a JSONL trace and compare every step");
  replay->add_option("file", trace_path, "trace file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : experiment::exit_config;
  }

  try {
    if (*run) return cmd_run(config, out, jobs, trace_dir);
    if (*sw) return cmd_sweep(config, axis, values, out, csv, jobs);
    if (*cx) return cmd_counterexample(as_json);
    if (*gen) return cmd_graph_gen(kind, n, D, seed, p, out);
    if (*replay) return cmd_trace_replay(trace_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return experiment::exit_config;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return experiment::exit_config;
  } catch (const ProtocolError& e) {
    // A protocol broke its own contract mid-run: that is a violation, not bad input.
    std::cerr << "protocol error: " << e.what() << "\n";
    return experiment::exit_violation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return experiment::exit_config;
  }
  return experiment::exit_ok;
}
