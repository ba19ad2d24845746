#include <spawn.h>
#include <sys/wait.h>
#include <termios.h>
#include <unistd.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "trackrl/config.hpp"
#include "trackrl/export.hpp"
#include "trackrl/oracle.hpp"
#include "trackrl/synergy.hpp"

extern char** environ;

namespace fs = std::filesystem;
using namespace trackrl;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Errors caused by the invocation itself (bad flags, files, configs).
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

river::RiverConfig river_map_or_default(const std::string& path) {
  return path.empty() ? river::default_river_config() : river::load_river_config(path);
}

void check_env_name(const std::string& env) {
  if (env != "cliff" && env != "river") throw UsageError("unknown env '" + env + "' (cliff or river)");
}

// Single key presses without waiting for Enter.
class RawTerminal {
 public:
  RawTerminal() {
    tcgetattr(STDIN_FILENO, &saved_);
    termios raw = saved_;
    raw.c_lflag &= static_cast<tcflag_t>(~(ICANON | ECHO));
    tcsetattr(STDIN_FILENO, TCSANOW, &raw);
  }
  ~RawTerminal() { tcsetattr(STDIN_FILENO, TCSANOW, &saved_); }

 private:
  termios saved_{};
};

struct CollectArgs {
  std::string env = "cliff";
  std::string source = "scripted";
  int n = 100;
  std::uint64_t seed = 0;
  std::string out;
  double noise = kCalibratedCliffNoise;
  double river_noise = 0.0;
  int steps = 50;
  std::string river_map;
  bool calibrate = false;
};

int run_collect(const CollectArgs& a) {
  check_env_name(a.env);
  if (a.n < 1) throw UsageError("--n must be at least 1");
  nlohmann::json meta = {{"env", a.env}, {"source", a.source}, {"seed", a.seed}, {"episodes", a.n}};
  DemoDataset dataset(a.env == "cliff");
  if (a.source == "keyboard") {
    if (!isatty(STDIN_FILENO)) throw UsageError("keyboard collection needs an interactive terminal");
    std::unique_ptr<Environment> env =
        a.env == "cliff" ? cliff::make_cliff_env() : river::make_river_env(river_map_or_default(a.river_map));
    RawTerminal raw;
    dataset = keyboard_play(*env, std::cin, std::cout, a.n, a.seed);
  } else if (a.source == "scripted") {
    DemoStats stats;
    if (a.env == "cliff") {
      double noise = a.noise;
      if (a.calibrate) noise = calibrate_cliff_noise(1000, a.seed);
      dataset = collect_cliff_demos(ScriptedCliffExpert{noise, true}, a.n, a.seed, &stats);
      meta["noise"] = noise;
      meta["calibrated"] = a.calibrate;
    } else {
      const river::RiverConfig map = river_map_or_default(a.river_map);
      dataset = collect_river_demos(ScriptedRiverFollower{a.river_noise}, map, a.n, a.steps, a.seed, &stats);
      meta["noise"] = a.river_noise;
      meta["max_steps"] = a.steps;
    }
    meta["mean_reward"] = stats.mean_reward;
    meta["mean_length"] = stats.mean_length;
    meta["fall_rate"] = stats.fall_rate;
  } else {
    throw UsageError("unknown source '" + a.source + "' (scripted or keyboard)");
  }
  std::ofstream out(a.out);
  if (!out) throw UsageError("cannot write " + a.out);
  write_demos_jsonl(out, dataset);
  meta["trajectories"] = dataset.trajectories().size();
  meta["transitions"] = dataset.transition_count();
  std::ofstream(a.out + ".meta.json") << meta.dump(2) << "\n";
  std::cout << "wrote " << dataset.trajectories().size() << " trajectories to " << a.out << "\n";
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out_dir;
  std::vector<std::uint64_t> seeds;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  std::optional<long> stop_after;
  int jobs = 1;
};

int fan_out(const TrainArgs& a) {
  std::vector<pid_t> running;
  int status_all = 0;
  auto reap = [&] {
    int status = 0;
    const pid_t pid = wait(&status);
    std::erase(running, pid);
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
      status_all = WIFEXITED(status) ? std::max(status_all, WEXITSTATUS(status)) : kExitRuntime;
    }
  };
  const std::string self = fs::read_symlink("/proc/self/exe").string();
  for (std::uint64_t seed : a.seeds) {
    const std::string dir = (fs::path(a.out_dir) / ("seed_" + std::to_string(seed))).string();
    std::vector<std::string> args = {self, "train", "--config", a.config, "--out-dir", dir, "--seed",
                                     std::to_string(seed)};
    if (a.resume) args.emplace_back("--resume");
    std::vector<char*> argv;
    for (auto& s : args) argv.push_back(s.data());
    argv.push_back(nullptr);
    while (static_cast<int>(running.size()) >= a.jobs) reap();
    pid_t pid = 0;
    if (posix_spawn(&pid, self.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
      throw std::runtime_error("cannot start child process");
    }
    running.push_back(pid);
  }
  while (!running.empty()) reap();
  return status_all;
}

int run_train(const TrainArgs& a) {
  SynergyConfig config = load_run_config(a.config);
  if (!a.seeds.empty()) return fan_out(a);
  if (a.seed) config.seed = *a.seed;
  const RunSummary s = run_training(config, a.out_dir, a.resume, a.stop_after);
  std::cout << method_name(config.method) << " seed " << config.seed << ": " << s.steps << " steps, "
            << s.metric_rows << " rows, mean reward (last 100) " << s.final_mean_reward_100 << ", best eval "
            << s.best_eval_mean << "\n";
  return 0;
}

struct EvalArgs {
  std::string weights;
  std::string env = "cliff";
  int episodes = 50;
  std::uint64_t seed = 0;
  std::string out;
  std::string river_map;
  int time_limit = 0;
};

int run_eval(const EvalArgs& a) {
  check_env_name(a.env);
  SynergyConfig config = default_synergy_config(a.env);
  if (a.env == "river") config.river = river_map_or_default(a.river_map);
  if (a.time_limit > 0) config.time_limit = a.time_limit;
  auto env = make_environment(config);
  Mlp<float> policy;
  try {
    policy = load_weights(a.weights);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (policy.input_dim() != env->spec().observation_dim || policy.output_dim() != env->spec().logits_dim()) {
    throw UsageError("weights " + a.weights + " do not match env " + a.env);
  }
  const EvalResult result = evaluate(policy, env->spec().action_branches, *env, a.episodes, a.seed);
  fs::create_directories(a.out);
  std::ofstream csv(fs::path(a.out) / "eval.csv");
  write_eval_csv(csv, result);
  std::ofstream stats(fs::path(a.out) / "eval_stats.csv");
  write_eval_stats(stats, result);
  std::ofstream traces(fs::path(a.out) / "traces.jsonl");
  write_traces_jsonl(traces, a.env, result);
  write_eval_stats(std::cout, result);
  return 0;
}

struct ExportArgs {
  std::string run_dir;
  std::string what;
  std::string out;
  std::string column = "mean_ep_reward_100";
  std::string river_map;
};

std::vector<fs::path> find_files(const fs::path& root, const std::string& name) {
  std::vector<fs::path> found;
  if (!fs::is_directory(root)) throw UsageError("no such run dir " + root.string());
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (entry.is_regular_file() && entry.path().filename() == name) found.push_back(entry.path());
  }
  std::sort(found.begin(), found.end());
  if (found.empty()) throw UsageError("no " + name + " under " + root.string());
  return found;
}

int run_export(const ExportArgs& a) {
  std::ofstream file;
  if (!a.out.empty()) {
    file.open(a.out);
    if (!file) throw UsageError("cannot write " + a.out);
  }
  std::ostream& out = a.out.empty() ? std::cout : file;
  const fs::path root(a.run_dir);
  auto labels_of = [&](const std::vector<fs::path>& files) {
    std::vector<std::string> labels, paths;
    for (const auto& f : files) {
      const std::string rel = fs::relative(f.parent_path(), root).string();
      labels.push_back(rel == "." ? root.filename().string() : rel);
      paths.push_back(f.string());
    }
    return std::pair{labels, paths};
  };
  if (a.what == "curves") {
    const auto [labels, paths] = labels_of(find_files(root, "metrics.csv"));
    export_curves(out, labels, paths, a.column);
  } else if (a.what == "violin") {
    const auto [labels, paths] = labels_of(find_files(root, "eval.csv"));
    export_violin(out, labels, paths);
  } else if (a.what == "traj-svg") {
    const fs::path traces = root / "traces.jsonl";
    if (!fs::exists(traces)) throw UsageError("no traces.jsonl in " + root.string());
    export_trajectory_svg(out, river_map_or_default(a.river_map), traces.string());
  } else {
    throw UsageError("unknown export '" + a.what + "' (curves, violin or traj-svg)");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Track-following agents: PPO guided by a retrained behavior-cloning expert"};
  app.require_subcommand(1);

  CollectArgs collect;
  auto* c = app.add_subcommand("collect", "Record demonstrations as JSONL");
  c->add_option("--env", collect.env, "cliff or river")->capture_default_str();
  c->add_option("--source", collect.source, "scripted or keyboard")->capture_default_str();
  c->add_option("--n", collect.n, "Episodes to record")->capture_default_str();
  c->add_option("--seed", collect.seed)->capture_default_str();
  c->add_option("--out", collect.out, "Demo file")->required();
  c->add_option("--noise", collect.noise, "Cliff expert random-action rate")->capture_default_str();
  c->add_flag("--calibrate", collect.calibrate, "Bisect the cliff noise rate to a zero mean reward first");
  c->add_option("--river-noise", collect.river_noise, "River follower random-action rate")->capture_default_str();
  c->add_option("--steps", collect.steps, "River episode cap")->capture_default_str();
  c->add_option("--river-map", collect.river_map, "River map file (default built-in)");
  c->footer(
      "Keyboard keys\n"
      "  cliff: w up, d right, s down, a left, space no-op\n"
      "  river: r/f up/down, q/e yaw left/right, w/s forward/back, a/d left/right, space no-op\n"
      "  after an episode: y keep, n discard; x quits");

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Run one training job (or one per seed)");
  t->add_option("--config", train.config, "Run config file")->required();
  t->add_option("--out-dir", train.out_dir)->required();
  t->add_option("--seed", train.seed, "Override the config seed");
  t->add_option("--seeds", train.seeds, "Run these seeds as child processes into out-dir/seed_<s>")->delimiter(',');
  t->add_option("--jobs", train.jobs, "Concurrent children for --seeds")->capture_default_str();
  t->add_flag("--resume", train.resume, "Continue from out-dir/checkpoint");
  t->add_option("--stop-after", train.stop_after, "Stop after this many steps");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a weight file");
  e->add_option("--weights", eval.weights)->required();
  e->add_option("--env", eval.env)->capture_default_str();
  e->add_option("--episodes", eval.episodes)->capture_default_str();
  e->add_option("--seed", eval.seed)->capture_default_str();
  e->add_option("--out", eval.out, "Output directory")->required();
  e->add_option("--river-map", eval.river_map);
  e->add_option("--time-limit", eval.time_limit, "Episode limit (default per env)");

  ExportArgs exp;
  auto* x = app.add_subcommand("export", "Plot data from run outputs");
  x->add_option("--run-dir", exp.run_dir)->required();
  x->add_option("--what", exp.what, "curves, violin or traj-svg")->required();
  x->add_option("--out", exp.out, "Output file (default stdout)");
  x->add_option("--column", exp.column, "Metrics column for curves")->capture_default_str();
  x->add_option("--river-map", exp.river_map);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? 0 : kExitConfig;
  }
  try {
    if (*c) return run_collect(collect);
    if (*t) return run_train(train);
    if (*e) return run_eval(eval);
    return run_export(exp);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const ConfigError& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const SchemaError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& err) {
    std::cerr << "failed: " << err.what() << "\n";
    return kExitRuntime;
  }
}
