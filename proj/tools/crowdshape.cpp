// crowdshape: run experiment scenarios, build oracles, plot curves and serve live sessions.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "crowdshape/experiment.hpp"

#ifdef CROWDSHAPE_HAVE_GATEWAY
#include "crowdshape/gateway/server.hpp"
#endif

namespace fs = std::filesystem;
using namespace crowdshape;

namespace {

struct RunArgs {
  std::string scenario;
  std::string preset;
  std::uint64_t trials = 0;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::size_t parallelism = std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::string> arms;
  std::string oracle;
  bool keep_trials = false;
  bool no_plot = false;
};

int cmd_run(const RunArgs& args) {
  Scenario sc = load_scenario(args.scenario);
  if (!args.preset.empty()) apply_preset(sc, args.preset);
  if (!args.oracle.empty()) sc.oracle.path = args.oracle;
  for (auto& arm : sc.arms) {
    if (args.trials > 0) arm.n_trials = args.trials;
    if (args.seed) arm.master_seed = *args.seed;
  }
  if (!args.arms.empty()) {
    std::erase_if(sc.arms, [&](const ExperimentSpec& a) {
      return std::find(args.arms.begin(), args.arms.end(), a.name) == args.arms.end();
    });
    if (sc.arms.empty()) throw ConfigError("no arm matches --arm");
  }
  const std::string out_dir = args.out.empty() ? (fs::path("results") / sc.name).string() : args.out;
  fs::create_directories(out_dir);

  const GridWorld world(scenario_layout(sc), sc.world_options);
  const bool needs_oracle = std::any_of(sc.arms.begin(), sc.arms.end(),
                                        [](const ExperimentSpec& a) { return !a.trainer_configs.empty(); });
  std::optional<OraclePolicy> oracle;
  if (needs_oracle) {
    const auto t0 = std::chrono::steady_clock::now();
    OracleVerification v;
    oracle.emplace(scenario_oracle(world, sc, &v));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (sc.oracle.path.empty()) {
      std::fprintf(stderr, "oracle: %llu episodes, %d/%d verification rollouts cleared (%.1fs)\n",
                   static_cast<unsigned long long>(sc.oracle.episodes), v.cleared, v.rollouts, secs);
    } else {
      std::fprintf(stderr, "oracle: loaded %s\n", sc.oracle.path.c_str());
    }
  }

  std::vector<CurveSet> curves;
  for (const auto& arm : sc.arms) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mutex progress_mu;
    std::uint64_t done = 0;
    RunOptions ro;
    ro.parallelism = args.parallelism;
    if (args.keep_trials) ro.trial_dir = (fs::path(out_dir) / "trials").string();
    ro.on_trial_done = [&](std::uint64_t) {
      std::lock_guard lock(progress_mu);
      std::fprintf(stderr, "\r%-14s %llu/%llu trials", arm.name.c_str(), static_cast<unsigned long long>(++done),
                   static_cast<unsigned long long>(arm.n_trials));
    };
    CurveSet c = run_experiment(world, oracle ? &*oracle : nullptr, arm, ro);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const MeanSe auc = mean_se(c.trial_auc);
    std::fprintf(stderr, "\r%-14s %llu trials in %.1fs  AUC %.0f +- %.0f", arm.name.c_str(),
                 static_cast<unsigned long long>(c.n_trials), secs, auc.mean, auc.se);
    if (!c.c_hat_mean.empty()) {
      std::fprintf(stderr, "  final c_hat");
      const std::size_t tail = std::min<std::size_t>(200, c.n_episodes());
      for (const auto& series : c.c_hat_mean) {
        double s = 0.0;
        for (std::size_t e = series.size() - tail; e < series.size(); ++e) s += series[e];
        std::fprintf(stderr, " %.3f", s / static_cast<double>(tail));
      }
    }
    std::fprintf(stderr, "\n");
    export_curves(c, (fs::path(out_dir) / (arm.name + ".curves.csv")).string());
    curves.push_back(std::move(c));
  }
  if (!args.no_plot) {
    for (const auto& p : plot_curves(curves, out_dir, sc.name)) std::fprintf(stderr, "wrote %s\n", p.c_str());
  }
  std::printf("%s\n", out_dir.c_str());
  return 0;
}

struct OracleArgs {
  std::string layout;
  std::uint64_t episodes = 10000;
  std::uint64_t seed = 7;
  std::string out;
  std::string ghost = "random";
  bool no_stay = false;
  int rollouts = 100;
};

int cmd_oracle_build(const OracleArgs& args) {
  GridWorldOptions wo;
  wo.ghost_policy = ghost_policy_from_string(args.ghost);
  wo.allow_stay = !args.no_stay;
  const GridWorld world(args.layout.empty() ? default_layout() : load_layout(args.layout), wo);
  OracleBuildOptions ob;
  ob.episodes = args.episodes;
  ob.seed = args.seed;
  ob.verification_rollouts = args.rollouts;
  OracleVerification v;
  const OraclePolicy oracle = build_oracle(world, ob, &v);
  OracleManifest m;
  m.layout_hash = layout_fingerprint(world.layout());
  m.ghost_policy = std::string(to_string(wo.ghost_policy));
  m.allow_stay = wo.allow_stay;
  m.episodes = ob.episodes;
  m.seed = ob.seed;
  m.params = ob.params;
  m.max_steps_per_episode = ob.max_steps_per_episode;
  m.verification_rollouts = v.rollouts;
  m.verification_cleared = v.cleared;
  save_oracle(oracle, m, args.out);
  std::fprintf(stderr, "cleared %d/%d rollouts, mean return %.1f; %zu states stored\n", v.cleared, v.rollouts,
               v.mean_return, oracle.q_table().stored_states());
  std::printf("%s\n", args.out.c_str());
  return 0;
}

int cmd_plot(const std::string& in_dir, std::string title) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 11 && name.ends_with(".curves.csv")) files.push_back(entry.path());
  }
  if (files.empty()) throw IoError("no *.curves.csv files in " + in_dir);
  std::sort(files.begin(), files.end());
  std::vector<CurveSet> curves;
  for (const auto& f : files) curves.push_back(load_curves(f.string()));
  if (title.empty()) title = fs::path(in_dir).filename().string();
  for (const auto& p : plot_curves(curves, in_dir, title)) std::printf("%s\n", p.c_str());
  return 0;
}

#ifdef CROWDSHAPE_HAVE_GATEWAY
int cmd_serve(const std::string& address, std::uint16_t port, int threads) {
  gateway::SessionManager sessions;
  gateway::Server server(sessions, {address, port, threads});
  server.start();
  std::fprintf(stderr, "listening on %s:%u\n", address.c_str(), static_cast<unsigned>(server.port()));
  server.wait();
  return 0;
}
#endif

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy shaping from multiple trainers of unknown consistency"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Run every arm of a scenario and write curves and plots");
  run_cmd->add_option("--scenario", run.scenario, "Scenario JSON file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--preset", run.preset, "paper (200x2000) or desk (30x2000)")
      ->check(CLI::IsMember({"paper", "desk"}));
  run_cmd->add_option("--trials", run.trials, "Override the trial count");
  run_cmd->add_option("--seed", run.seed, "Override the master seed");
  run_cmd->add_option("--out", run.out, "Output directory (default results/<scenario>)");
  run_cmd->add_option("--parallelism", run.parallelism, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_option("--arm", run.arms, "Only run the named arm (repeatable)");
  run_cmd->add_option("--oracle", run.oracle, "Prebuilt oracle (Q-table CSV with manifest)");
  run_cmd->add_flag("--keep-trials", run.keep_trials, "Also write one CSV per trial");
  run_cmd->add_flag("--no-plot", run.no_plot, "Skip SVG output");

  OracleArgs oracle;
  auto* oracle_cmd = app.add_subcommand("oracle", "Oracle utilities");
  oracle_cmd->require_subcommand(1);
  auto* build_cmd = oracle_cmd->add_subcommand("build", "Train, verify and save a greedy oracle");
  build_cmd->add_option("--layout", oracle.layout, "Layout file (default: built-in 5x5)");
  build_cmd->add_option("--episodes", oracle.episodes, "Training episodes");
  build_cmd->add_option("--seed", oracle.seed, "Training seed");
  build_cmd->add_option("--out", oracle.out, "Output Q-table CSV")->required();
  build_cmd->add_option("--ghost", oracle.ghost, "Ghost policy")->check(CLI::IsMember({"random", "chase"}));
  build_cmd->add_flag("--no-stay", oracle.no_stay, "Disable the Stay action");
  build_cmd->add_option("--rollouts", oracle.rollouts, "Greedy verification rollouts");

  std::string plot_in, plot_title;
  auto* plot_cmd = app.add_subcommand("plot", "Re-plot *.curves.csv files in a directory");
  plot_cmd->add_option("--in", plot_in, "Directory written by run")->required()->check(CLI::ExistingDirectory);
  plot_cmd->add_option("--title", plot_title, "Chart title");

#ifdef CROWDSHAPE_HAVE_GATEWAY
  std::string address = "127.0.0.1";
  std::uint16_t port = 8080;
  int threads = 2;
  auto* serve_cmd = app.add_subcommand("serve", "Run the live feedback gateway");
  serve_cmd->add_option("--address", address, "Bind address");
  serve_cmd->add_option("--port", port, "TCP port (0 picks one)");
  serve_cmd->add_option("--threads", threads, "I/O threads")->check(CLI::PositiveNumber);
#endif

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run_cmd) return cmd_run(run);
    if (*build_cmd) return cmd_oracle_build(oracle);
    if (*plot_cmd) return cmd_plot(plot_in, plot_title);
#ifdef CROWDSHAPE_HAVE_GATEWAY
    if (*serve_cmd) return cmd_serve(address, port, threads);
#endif
  } catch (const OracleQualityError& e) {
    std::cerr << "oracle quality error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
