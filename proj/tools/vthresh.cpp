// vthresh: simulate scenarios, build reports, benchmark the density update.
//
// Exit codes: 0 success, 2 config error, 3 missing input, 4 internal error.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vthresh/vthresh.hpp"

namespace {

int run_simulate(const std::string& config, const std::vector<std::uint64_t>& seeds, const std::string& out) {
  const vthresh::Scenario s = vthresh::load_scenario(config);
  const auto manifest = vthresh::simulate(s, seeds.empty() ? s.seeds : seeds, out, config);
  std::cout << "wrote " << manifest.at("records").size() << " record files to " << out << " (scenario " << s.hash
            << ")\n";
  return 0;
}

int run_report(const std::string& in, const std::string& out) {
  const auto report = vthresh::build_report(in, out);
  std::cout << "report for scenario " << report.at("scenario_hash").get<std::string>() << " written to " << out
            << '\n';
  return 0;
}

int run_bench(const std::vector<std::size_t>& grids, std::size_t events) {
  vthresh::BenchOptions o;
  o.grids = grids;
  o.events = events;
  const auto p = vthresh::run_bench(o);
  std::printf("grid,median_ns_per_event\n");
  for (const auto& [g, secs] : p.medians) std::printf("%.0f,%.2f\n", g, secs * 1e9);
  std::printf("slope %.3f\n", p.slope);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"capacity-aware valley thresholds"};
  app.set_version_flag("--version", vthresh::kToolVersion);
  app.require_subcommand(1);

  std::string config, out, in;
  std::vector<std::uint64_t> seeds;
  auto* sim = app.add_subcommand("simulate", "run every (policy, BA, seed) combination of a scenario");
  sim->add_option("--config", config, "scenario JSON")->required();
  sim->add_option("--seeds", seeds, "comma-separated seeds (overrides the scenario)")->delimiter(',');
  sim->add_option("--out", out, "output directory")->required();

  std::string report_out;
  auto* rep = app.add_subcommand("report", "metric tables and figure series from simulate output");
  rep->add_option("--in", in, "simulate output directory")->required();
  rep->add_option("--out", report_out, "report directory")->required();

  std::vector<std::size_t> grids{128, 512, 2048};
  std::size_t events = 20000;
  auto* bench = app.add_subcommand("bench", "per-event update time versus grid size");
  bench->add_option("--grids", grids, "comma-separated grid sizes")->delimiter(',');
  bench->add_option("--events", events, "events per grid size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*sim) return run_simulate(config, seeds, out);
    if (*rep) return run_report(in, report_out);
    if (*bench) return run_bench(grids, events);
  } catch (const vthresh::MissingInput& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return 3;
  } catch (const vthresh::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vthresh::InsufficientData& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const vthresh::EmptyReport& e) {
    std::cerr << "missing input: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
