#include "crowdshape/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace crowdshape {

namespace fs = std::filesystem;
using nlohmann::json;

void ExperimentSpec::validate() const {
  if (n_trials < 1) throw ConfigError(name + ": n_trials must be at least 1");
  if (n_episodes < 1) throw ConfigError(name + ": n_episodes must be at least 1");
  if (smoothing_window < 1 || smoothing_window % 2 == 0) {
    throw ConfigError(name + ": smoothing_window must be odd and at least 1");
  }
  if (smoothing_window > n_episodes) throw ConfigError(name + ": smoothing_window exceeds n_episodes");
  for (const auto& t : trainer_configs) {
    if (!(t.likelihood >= 0.0 && t.likelihood <= 1.0)) throw ConfigError(name + ": likelihood outside [0,1]");
    if (!(t.consistency >= 0.0 && t.consistency <= 1.0)) throw ConfigError(name + ": consistency outside [0,1]");
  }
  try {
    agent_config().validate();
  } catch (const ConfigError& e) {
    throw ConfigError(name + ": " + e.what());
  }
}

AgentConfig ExperimentSpec::agent_config() const {
  AgentConfig c;
  c.estimate_consistency = estimate_consistency;
  c.fixed_c = fixed_c;
  c.max_steps_per_episode = max_steps_per_episode;
  return c;
}

std::vector<OracleTrainerConfig> ExperimentSpec::oracle_trainers() const {
  std::vector<OracleTrainerConfig> out;
  for (std::size_t n = 0; n < trainer_configs.size(); ++n) {
    out.push_back({"t" + std::to_string(n + 1), trainer_configs[n].likelihood, trainer_configs[n].consistency, 0});
  }
  return out;
}

std::vector<double> moving_average(std::span<const double> series, std::size_t window) {
  require(window >= 1 && window % 2 == 1, "moving_average window must be odd");
  require(window <= series.size(), "moving_average window longer than the series");
  std::vector<double> out(series.size() - window + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < window; ++j) s += series[i + j];
    out[i] = s / static_cast<double>(window);
  }
  return out;
}

MeanSe mean_se(std::span<const double> samples) {
  require(!samples.empty(), "mean_se of an empty sample");
  const auto n = static_cast<double>(samples.size());
  double m = 0.0;
  for (double x : samples) m += x;
  m /= n;
  if (samples.size() == 1) return {m, 0.0};
  double ss = 0.0;
  for (double x : samples) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / (n - 1.0) / n)};
}

namespace {

struct TrialOutput {
  std::vector<double> reward;
  std::vector<std::vector<double>> c_hat;  // [trainer][episode]
};

TrialOutput run_trial(const GridWorld& world, const OraclePolicy* oracle, const ExperimentSpec& spec,
                      const std::vector<OracleTrainerConfig>& trainers, std::uint64_t trial,
                      const std::string& trial_dir) {
  const auto results = train(world, oracle, spec.agent_config(), spec.n_episodes, trainers, {spec.master_seed, trial});
  if (!trial_dir.empty()) {
    const fs::path p = fs::path(trial_dir) / (spec.name + ".trial_" + std::to_string(trial) + ".csv");
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    write_trial_csv(out, results, trainers.size());
  }
  TrialOutput t;
  t.reward.reserve(results.size());
  t.c_hat.assign(trainers.size(), std::vector<double>(results.size()));
  for (std::size_t e = 0; e < results.size(); ++e) {
    t.reward.push_back(results[e].total_reward);
    for (std::size_t n = 0; n < trainers.size(); ++n) t.c_hat[n][e] = results[e].c_hat[n];
  }
  return t;
}

}  // namespace

CurveSet run_experiment(const GridWorld& world, const OraclePolicy* oracle, const ExperimentSpec& spec,
                        const RunOptions& options) {
  spec.validate();
  const auto trainers = spec.oracle_trainers();
  if (!trainers.empty() && oracle == nullptr) throw ConfigError(spec.name + ": trainers need an oracle");
  if (!options.trial_dir.empty()) fs::create_directories(options.trial_dir);

  std::vector<std::uint64_t> order = options.trial_order;
  if (order.empty()) {
    for (std::uint64_t k = 0; k < spec.n_trials; ++k) order.push_back(k);
  } else {
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::uint64_t k = 0; k < spec.n_trials; ++k) {
      require(k < sorted.size() && sorted[k] == k, "trial_order must be a permutation of the trial indices");
    }
    require(sorted.size() == spec.n_trials, "trial_order must be a permutation of the trial indices");
  }

  std::vector<TrialOutput> slots(spec.n_trials);
  std::vector<std::exception_ptr> errors(spec.n_trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < order.size(); i = next++) {
      const std::uint64_t k = order[i];
      try {
        slots[k] = run_trial(world, oracle, spec, trainers, k, options.trial_dir);
        if (options.on_trial_done) options.on_trial_done(k);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(options.parallelism, 1, order.size());
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
  }
  for (std::uint64_t k = 0; k < spec.n_trials; ++k) {
    if (!errors[k]) continue;
    try {
      std::rethrow_exception(errors[k]);
    } catch (const OracleQualityError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error(spec.name + ": trial " + std::to_string(k) + " failed: " + e.what());
    }
  }

  CurveSet c;
  c.name = spec.name;
  c.n_trials = spec.n_trials;
  c.smoothing_window = spec.smoothing_window;
  c.smoothing_offset = (spec.smoothing_window - 1) / 2;
  c.reward_mean.resize(spec.n_episodes);
  c.reward_stderr.resize(spec.n_episodes);
  c.c_hat_mean.assign(trainers.size(), std::vector<double>(spec.n_episodes, 0.0));
  std::vector<double> column(spec.n_trials);
  for (std::size_t e = 0; e < spec.n_episodes; ++e) {
    for (std::uint64_t k = 0; k < spec.n_trials; ++k) column[k] = slots[k].reward[e];
    const MeanSe ms = mean_se(column);
    c.reward_mean[e] = ms.mean;
    c.reward_stderr[e] = ms.se;
    for (std::size_t n = 0; n < trainers.size(); ++n) {
      double s = 0.0;
      for (std::uint64_t k = 0; k < spec.n_trials; ++k) s += slots[k].c_hat[n][e];
      c.c_hat_mean[n][e] = s / static_cast<double>(spec.n_trials);
    }
  }
  for (std::uint64_t k = 0; k < spec.n_trials; ++k) {
    double s = 0.0;
    for (double r : slots[k].reward) s += r;
    c.trial_auc.push_back(s);
  }
  c.reward_smoothed = moving_average(c.reward_mean, spec.smoothing_window);
  return c;
}

// ---------------------------------------------------------------------------
// Curve files

void export_curves(const CurveSet& curves, const std::string& path) {
  require(!curves.reward_mean.empty(), "cannot export an empty curve set");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curves: " + path);
  out << "# name=" << curves.name << '\n';
  out << "# trials=" << curves.n_trials << '\n';
  out << "# window=" << curves.smoothing_window << '\n';
  out << "# offset=" << curves.smoothing_offset << '\n';
  out << "# trial_auc=";
  for (std::size_t k = 0; k < curves.trial_auc.size(); ++k) out << (k ? "," : "") << format_double(curves.trial_auc[k]);
  out << '\n';
  out << "episode,reward_mean,reward_stderr,reward_smoothed";
  for (std::size_t n = 1; n <= curves.c_hat_mean.size(); ++n) out << ",c_hat_" << n;
  out << '\n';
  for (std::size_t e = 0; e < curves.reward_mean.size(); ++e) {
    out << e << ',' << format_double(curves.reward_mean[e]) << ',' << format_double(curves.reward_stderr[e]) << ',';
    if (e >= curves.smoothing_offset && e - curves.smoothing_offset < curves.reward_smoothed.size()) {
      out << format_double(curves.reward_smoothed[e - curves.smoothing_offset]);
    }
    for (const auto& series : curves.c_hat_mean) out << ',' << format_double(series[e]);
    out << '\n';
  }
  if (!out) throw IoError("failed writing curves: " + path);
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> f;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      f.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  f.push_back(cur);
  return f;
}

}  // namespace

CurveSet parse_curves(std::string_view text) {
  CurveSet c;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t n_trainers = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(2, eq - 2);
      const std::string value = line.substr(eq + 1);
      if (key == "name") c.name = value;
      else if (key == "trials") c.n_trials = std::stoull(value);
      else if (key == "window") c.smoothing_window = std::stoull(value);
      else if (key == "offset") c.smoothing_offset = std::stoull(value);
      else if (key == "trial_auc" && !value.empty()) {
        for (const auto& v : split(value, ',')) c.trial_auc.push_back(parse_double(v));
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("episode,reward_mean,reward_stderr,reward_smoothed", 0) != 0) {
        throw IoError("curve file has an unexpected header: " + line);
      }
      n_trainers = split(line, ',').size() - 4;
      c.c_hat_mean.assign(n_trainers, {});
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 4 + n_trainers) throw IoError("malformed curve row: " + line);
    c.reward_mean.push_back(parse_double(f[1]));
    c.reward_stderr.push_back(parse_double(f[2]));
    if (!f[3].empty()) c.reward_smoothed.push_back(parse_double(f[3]));
    for (std::size_t n = 0; n < n_trainers; ++n) c.c_hat_mean[n].push_back(parse_double(f[4 + n]));
  }
  if (!header_seen) throw IoError("curve file has no header");
  return c;
}

CurveSet load_curves(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open curves: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_curves(ss.str());
}

// ---------------------------------------------------------------------------
// SVG plots

namespace {

constexpr std::array<const char*, 11> kPalette = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000"};

struct Series {
  std::string label;
  std::size_t x0 = 0;
  const std::vector<double>* y = nullptr;
};

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void write_svg(const std::string& path, const std::string& title, const std::string& y_label,
               const std::string& series_class, const std::vector<Series>& series, std::optional<std::pair<double, double>> y_range) {
  require(!series.empty(), "nothing to plot");
  constexpr double W = 860, H = 500, L = 70, R = 170, T = 40, B = 50;
  double x_max = 1, y_lo = 0, y_hi = 1;
  if (y_range) {
    y_lo = y_range->first;
    y_hi = y_range->second;
  } else {
    y_lo = INFINITY;
    y_hi = -INFINITY;
    for (const auto& s : series) {
      for (double v : *s.y) {
        y_lo = std::min(y_lo, v);
        y_hi = std::max(y_hi, v);
      }
    }
    if (!(y_hi > y_lo)) {
      y_lo -= 1;
      y_hi += 1;
    }
  }
  for (const auto& s : series) x_max = std::max(x_max, static_cast<double>(s.x0 + s.y->size()));
  auto px = [&](double x) { return L + (W - L - R) * x / x_max; };
  auto py = [&](double y) { return H - B - (H - T - B) * (y - y_lo) / (y_hi - y_lo); };

  std::ofstream out(path);
  if (!out) throw IoError("cannot write plot: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape_xml(title) << "</text>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x_max * i / 5.0, yv = y_lo + (y_hi - y_lo) * i / 5.0;
    out << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\">" << fixed(xv, 0) << "</text>\n";
    out << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\">" << fixed(yv, 2) << "</text>\n";
    out << "<line x1=\"" << L << "\" y1=\"" << py(yv) << "\" x2=\"" << W - R << "\" y2=\"" << py(yv)
        << "\" stroke=\"#dddddd\"/>\n";
  }
  out << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">episode</text>\n";
  out << "<text transform=\"translate(16," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
      << escape_xml(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const auto& s = series[i];
    const char* colour = kPalette[i % kPalette.size()];
    out << "<polyline class=\"" << series_class << "\" fill=\"none\" stroke=\"" << colour
        << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t j = 0; j < s.y->size(); ++j) {
      const double yv = std::clamp((*s.y)[j], y_lo, y_hi);
      out << fixed(px(static_cast<double>(s.x0 + j)), 1) << ',' << fixed(py(yv), 1) << ' ';
    }
    out << "\"/>\n";
    const double ly = T + 16.0 * static_cast<double>(i) + 8;
    out << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
        << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\">" << escape_xml(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("failed writing plot: " + path);
}

}  // namespace

void plot_reward(std::span<const CurveSet> arms, const std::string& path, const std::string& title) {
  std::vector<Series> s;
  for (const auto& c : arms) s.push_back({c.name, c.smoothing_offset, &c.reward_smoothed});
  write_svg(path, title, "mean total reward", "reward", s, std::nullopt);
}

void plot_c_hat(const CurveSet& curves, const std::string& path, const std::string& title) {
  require(!curves.c_hat_mean.empty(), "curve set has no trainers to plot");
  std::vector<Series> s;
  for (std::size_t n = 0; n < curves.c_hat_mean.size(); ++n) {
    s.push_back({"trainer " + std::to_string(n + 1), 0, &curves.c_hat_mean[n]});
  }
  write_svg(path, title, "estimated consistency", "c_hat", s, std::make_pair(0.0, 1.0));
}

std::vector<std::string> plot_curves(std::span<const CurveSet> arms, const std::string& dir, const std::string& title) {
  require(!arms.empty(), "no curves to plot");
  fs::create_directories(dir);
  std::vector<std::string> written;
  const std::string reward = (fs::path(dir) / "reward.svg").string();
  plot_reward(arms, reward, title);
  written.push_back(reward);
  for (const auto& c : arms) {
    if (c.c_hat_mean.empty()) continue;
    const std::string p = (fs::path(dir) / (c.name + ".c_hat.svg")).string();
    plot_c_hat(c, p, title + ": " + c.name);
    written.push_back(p);
  }
  return written;
}

// ---------------------------------------------------------------------------
// Scenarios

namespace {

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, const std::string& where) {
  for (const auto& [key, _] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
  }
}

std::string resolve(const std::string& p, const std::string& base_dir) {
  if (p.empty() || base_dir.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

void apply_run_fields(const json& j, ExperimentSpec& spec) {
  if (j.contains("n_trials")) spec.n_trials = j.at("n_trials").get<std::uint64_t>();
  if (j.contains("n_episodes")) spec.n_episodes = j.at("n_episodes").get<std::uint64_t>();
  if (j.contains("smoothing_window")) spec.smoothing_window = j.at("smoothing_window").get<std::size_t>();
  if (j.contains("master_seed")) spec.master_seed = j.at("master_seed").get<std::uint64_t>();
  if (j.contains("max_steps_per_episode")) spec.max_steps_per_episode = j.at("max_steps_per_episode").get<int>();
}

}  // namespace

Scenario parse_scenario(std::string_view text, const std::string& base_dir) {
  Scenario sc;
  try {
    const json j = json::parse(text);
    check_keys(j,
               {"name", "layout", "ghost_policy", "allow_stay", "oracle", "n_trials", "n_episodes", "smoothing_window",
                "master_seed", "max_steps_per_episode", "arms"},
               "scenario");
    sc.name = j.value("name", std::string("scenario"));
    sc.layout_path = resolve(j.value("layout", std::string()), base_dir);
    if (j.contains("ghost_policy")) sc.world_options.ghost_policy = ghost_policy_from_string(j.at("ghost_policy").get<std::string>());
    if (j.contains("allow_stay")) sc.world_options.allow_stay = j.at("allow_stay").get<bool>();
    if (j.contains("oracle")) {
      const json& o = j.at("oracle");
      check_keys(o, {"episodes", "seed", "path"}, "scenario oracle");
      sc.oracle.episodes = o.value("episodes", sc.oracle.episodes);
      sc.oracle.seed = o.value("seed", sc.oracle.seed);
      sc.oracle.path = resolve(o.value("path", std::string()), base_dir);
    }
    ExperimentSpec defaults;
    apply_run_fields(j, defaults);
    if (!j.contains("arms") || !j.at("arms").is_array() || j.at("arms").empty()) {
      throw ConfigError("scenario needs a non-empty \"arms\" array");
    }
    for (const json& a : j.at("arms")) {
      check_keys(a,
                 {"name", "trainers", "estimate_consistency", "fixed_c", "n_trials", "n_episodes", "smoothing_window",
                  "master_seed", "max_steps_per_episode"},
                 "scenario arm");
      ExperimentSpec spec = defaults;
      spec.name = a.at("name").get<std::string>();
      apply_run_fields(a, spec);
      spec.estimate_consistency = a.value("estimate_consistency", true);
      if (a.contains("fixed_c")) spec.fixed_c = a.at("fixed_c").get<double>();
      for (const json& t : a.value("trainers", json::array())) {
        check_keys(t, {"likelihood", "consistency"}, "scenario trainer");
        spec.trainer_configs.push_back({t.at("likelihood").get<double>(), t.at("consistency").get<double>()});
      }
      spec.validate();
      sc.arms.push_back(std::move(spec));
    }
  } catch (const json::exception& e) {
    throw ConfigError("malformed scenario: " + std::string(e.what()));
  }
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str(), fs::path(path).parent_path().string());
}

void apply_preset(Scenario& scenario, std::string_view preset) {
  std::uint64_t trials = 0;
  if (preset == "paper") trials = 200;
  else if (preset == "desk") trials = 30;
  else throw ConfigError("unknown preset: " + std::string(preset));
  for (auto& arm : scenario.arms) {
    arm.n_trials = trials;
    arm.n_episodes = 2000;
  }
}

Layout scenario_layout(const Scenario& scenario) {
  return scenario.layout_path.empty() ? default_layout() : load_layout(scenario.layout_path);
}

OraclePolicy scenario_oracle(const GridWorld& world, const Scenario& scenario, OracleVerification* verification) {
  if (!scenario.oracle.path.empty()) return load_oracle(world, scenario.oracle.path);
  OracleBuildOptions options;
  options.episodes = scenario.oracle.episodes;
  options.seed = scenario.oracle.seed;
  return build_oracle(world, options, verification);
}

}  // namespace crowdshape
