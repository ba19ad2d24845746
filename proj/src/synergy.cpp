#include "trackrl/synergy.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "trackrl/cliff_circular.hpp"
#include "trackrl/config.hpp"

namespace trackrl {
namespace fs = std::filesystem;

namespace {

constexpr std::size_t kRecentEpisodes = 100;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

nlohmann::json rng_json(const Pcg32& rng) { return {rng.state(), rng.increment()}; }
void rng_restore(Pcg32& rng, const nlohmann::json& j) {
  rng.restore(j.at(0).get<std::uint64_t>(), j.at(1).get<std::uint64_t>());
}

double mean_of(const std::deque<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::kPpo: return "ppo";
    case Method::kStaticBc: return "static_bc";
    case Method::kDynamicBc: return "dynamic_bc";
    case Method::kPpoStaticBc: return "ppo_static_bc";
    case Method::kPpoDynamicBc: return "ppo_dynamic_bc";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kPpo, Method::kStaticBc, Method::kDynamicBc, Method::kPpoStaticBc,
                   Method::kPpoDynamicBc}) {
    if (method_name(m) == name) return m;
  }
  throw std::invalid_argument("unknown method '" + name + "'");
}

void SynergyConfig::validate() const {
  if (env != "cliff" && env != "river") throw std::invalid_argument("env must be cliff or river");
  if (total_steps <= 0) throw std::invalid_argument("total_steps must be positive");
  if (eval_every <= 0) throw std::invalid_argument("eval_every must be positive");
  if (eval_episodes < 1) throw std::invalid_argument("eval_episodes must be at least 1");
  if (time_limit < 1) throw std::invalid_argument("time_limit must be positive");
  if (window < 1) throw std::invalid_argument("window must be positive");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("hidden sizes must be positive");
  }
  if (pretrain.epochs < 0 || retrain.epochs < 0 || pretrain.batch_size < 1 || retrain.batch_size < 1) {
    throw std::invalid_argument("invalid behavior-cloning settings");
  }
  ppo.validate();
  if (env == "river") river.validate();
  if (needs_expert(method) && demos.empty()) {
    throw std::invalid_argument("method " + method_name(method) + " needs a demos file");
  }
}

SynergyConfig default_synergy_config(const std::string& env) {
  SynergyConfig c;
  c.env = env;
  if (env == "cliff") return c;
  if (env != "river") throw std::invalid_argument("env must be cliff or river");
  c.total_steps = 140000;
  c.t_reward = 4.0;
  c.eval_every = 5000;
  c.time_limit = 1000;
  c.hidden = {256, 256};
  c.river = river::default_river_config();
  return c;
}

double update_w3(W3Schedule& schedule, double eval_ppo_mean, double eval_bc_mean) {
  if (!schedule.latched && eval_ppo_mean > eval_bc_mean) {
    schedule.value = schedule.latched_value;
    schedule.latched = true;
  }
  return schedule.value;
}

EvalResult evaluate(Environment& env, int episodes, std::uint64_t seed, const ActFn& act) {
  if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  Pcg32 rng = Pcg32::stream(seed, "eval_actions");
  EvalResult result;
  for (int e = 0; e < episodes; ++e) {
    EpisodeRecord rec;
    Observation obs = e == 0 ? env.reset(seed) : env.reset();
    rec.layout = env.layout_json();
    bool done = false;
    while (!done) {
      rec.trace.push_back(env.trace_point());
      const Action action = act(obs, rng);
      StepResult step = env.step(action);
      rec.trajectory.observations.push_back(std::move(obs));
      rec.trajectory.actions.push_back(action);
      rec.trajectory.rewards.push_back(step.reward);
      obs = std::move(step.observation);
      done = step.done();
    }
    rec.trace.push_back(env.trace_point());
    result.rewards.push_back(rec.trajectory.episodic_reward());
    result.lengths.push_back(static_cast<int>(rec.trajectory.size()));
    result.episodes.push_back(std::move(rec));
  }
  result.mean_reward = std::accumulate(result.rewards.begin(), result.rewards.end(), 0.0) / episodes;
  result.mean_length = std::accumulate(result.lengths.begin(), result.lengths.end(), 0.0) / episodes;
  return result;
}

EvalResult evaluate(const Mlp<float>& policy, std::span<const int> branches, Environment& env, int episodes,
                    std::uint64_t seed) {
  return evaluate(env, episodes, seed, [&](const Observation& obs, Pcg32& rng) {
    const Eigen::MatrixXf logits = policy.forward(obs.cast<float>());
    const Eigen::VectorXd lp = log_softmax(logits, branches).col(0).cast<double>();
    return sample_action(lp, branches, rng);
  });
}

std::vector<Trajectory> harvest(const std::vector<EpisodeRecord>& episodes, double t_reward) {
  std::vector<Trajectory> kept;
  for (const EpisodeRecord& e : episodes) {
    if (e.trajectory.episodic_reward() > t_reward) kept.push_back(e.trajectory);
  }
  return kept;
}

std::unique_ptr<Environment> make_environment(const SynergyConfig& config) {
  if (config.env == "cliff") return cliff::make_cliff_env(config.time_limit);
  river::RiverConfig rc = config.river;
  rc.max_episode_steps = config.time_limit;
  return river::make_river_env(rc);
}

namespace {

// Everything a run mutates, so a checkpoint can capture it whole.
class Run {
 public:
  Run(const SynergyConfig& config, const std::string& out_dir)
      : config_(config),
        out_dir_(out_dir),
        env_(make_environment(config)),
        eval_env_(make_environment(config)),
        learner_(env_->spec(), config.ppo, config.hidden, config.seed),
        expert_(network_dims(env_->spec().observation_dim, config.hidden, env_->spec().logits_dim())),
        dataset_(config.env == "cliff"),
        buffer_(config.ppo.horizon, env_->spec().observation_dim,
                static_cast<int>(env_->spec().action_branches.size())),
        rollout_rng_(Pcg32::stream(config.seed, "rollout")),
        bc_rng_(Pcg32::stream(config.seed, "bc_train")),
        expert_rng_(Pcg32::stream(config.seed, "expert_sample")) {
    schedule_.value = config.w3_initial;
    schedule_.latched_value = config.w3_latched;
  }

  void start() {
    if (needs_expert(config_.method)) {
      const EnvSpec& spec = env_->spec();
      dataset_ = load_demos(config_.demos, config_.env == "cliff", spec.observation_dim,
                            static_cast<int>(spec.action_branches.size()));
      if (dataset_.transition_count() == 0) throw std::invalid_argument("demos file has no transitions");
      demo_trajectories_ = dataset_.trajectories().size();
      Pcg32 init = Pcg32::stream(config_.seed, "expert_init");
      expert_.init_orthogonal(init, std::sqrt(2.0), 0.01);
      train_bc(expert_, spec.action_branches, dataset_.all(), config_.pretrain, bc_rng_);
      measure_expert();
    }
    observation_ = env_->reset(config_.seed);
  }

  RunSummary train(std::optional<long> stop_after) {
    const long limit = stop_after ? std::min(*stop_after, config_.total_steps) : config_.total_steps;
    std::ofstream metrics(fs::path(out_dir_) / "metrics.csv", std::ios::app);
    while (steps_ + config_.ppo.horizon <= limit) {
      collect();
      UpdateStats stats;
      const bool ppo = trains_ppo(config_.method);
      if (ppo) {
        const Mlp<float>* expert = needs_expert(config_.method) ? &expert_ : nullptr;
        stats = learner_.update(buffer_, expert, current_w3(), &expert_rng_);
      }
      const long evals_due = steps_ / config_.eval_every;
      if (evals_due > eval_index_) {
        eval_index_ = evals_due;
        evaluation();
      }
      metrics << steps_ << ',' << fmt(mean_of(recent_rewards_)) << ',' << fmt(mean_of(recent_lengths_)) << ','
              << (has_eval_ ? fmt(eval_mean_) : "") << ',' << (has_eval_ ? fmt(eval_len_) : "") << ','
              << (needs_expert(config_.method) ? fmt(bc_mean_) : "") << ',' << fmt(current_w3()) << ','
              << dataset_.transition_count() << ',';
      if (ppo) {
        metrics << fmt(stats.policy_loss) << ',' << fmt(stats.value_loss) << ',' << fmt(stats.action_loss) << ','
                << fmt(stats.entropy) << ',' << fmt(stats.approx_kl) << ',' << fmt(stats.clip_fraction);
      } else {
        metrics << ",,,,,";
      }
      metrics << '\n';
      metrics.flush();
      ++rows_;
      if (just_evaluated_) {
        just_evaluated_ = false;
        checkpoint();
      }
    }
    const fs::path final_dir = fs::path(out_dir_) / "final";
    fs::create_directories(final_dir);
    save_weights(acting_policy(), (final_dir / "policy.bin").string());
    if (trains_ppo(config_.method)) save_weights(learner_.value_net(), (final_dir / "value.bin").string());
    if (needs_expert(config_.method)) save_weights(expert_, (final_dir / "expert.bin").string());
    RunSummary s;
    s.steps = steps_;
    s.metric_rows = rows_;
    s.final_mean_reward_100 = mean_of(recent_rewards_);
    s.final_mean_length_100 = mean_of(recent_lengths_);
    s.best_eval_mean = best_eval_;
    s.bc_eval_mean = bc_mean_;
    s.final_w3 = current_w3();
    s.dataset_transitions = dataset_.transition_count();
    return s;
  }

  void resume() {
    const fs::path dir = fs::path(out_dir_) / "checkpoint";
    std::ifstream in(dir / "state.json");
    if (!in) throw std::runtime_error("no checkpoint in " + out_dir_);
    const nlohmann::json s = nlohmann::json::parse(in);
    if (trains_ppo(config_.method)) learner_.load((dir / "learner").string());
    if (needs_expert(config_.method)) {
      Mlp<float> expert = load_weights((dir / "expert.bin").string());
      if (expert.dims() != expert_.dims()) throw std::runtime_error("checkpoint expert dims mismatch");
      expert_ = std::move(expert);
      dataset_ = load_demos((dir / "dataset.jsonl").string(), config_.env == "cliff");
      std::vector<TransitionRef> view;
      for (const auto& r : s.at("view")) view.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()});
      dataset_.set_view(std::move(view));
    }
    env_->load_state(s.at("env"));
    observation_ = Eigen::Map<const Eigen::VectorXd>(s.at("observation").get<std::vector<double>>().data(),
                                                     static_cast<Eigen::Index>(s.at("observation").size()));
    steps_ = s.at("steps").get<long>();
    rows_ = s.at("rows").get<int>();
    eval_index_ = s.at("eval_index").get<long>();
    episode_reward_ = s.at("episode_reward").get<double>();
    episode_length_ = s.at("episode_length").get<int>();
    for (double r : s.at("recent_rewards")) recent_rewards_.push_back(r);
    for (double l : s.at("recent_lengths")) recent_lengths_.push_back(l);
    rng_restore(rollout_rng_, s.at("rollout_rng"));
    rng_restore(bc_rng_, s.at("bc_rng"));
    rng_restore(expert_rng_, s.at("expert_rng"));
    schedule_.value = s.at("w3").get<double>();
    schedule_.latched = s.at("w3_latched").get<bool>();
    bc_mean_ = s.at("bc_mean").get<double>();
    best_eval_ = s.at("best_eval").get<double>();
    has_eval_ = s.at("has_eval").get<bool>();
    eval_mean_ = s.at("eval_mean").get<double>();
    eval_len_ = s.at("eval_len").get<double>();
    expert_evals_ = s.at("expert_evals").get<std::uint64_t>();
    demo_trajectories_ = s.at("demo_trajectories").get<std::size_t>();
    has_best_ = has_eval_;

    // Drop metric rows written after the checkpoint.
    const fs::path metrics_path = fs::path(out_dir_) / "metrics.csv";
    std::ifstream old(metrics_path);
    std::vector<std::string> lines;
    for (std::string line; std::getline(old, line) && static_cast<int>(lines.size()) < rows_ + 2;) {
      lines.push_back(line);
    }
    old.close();
    std::ofstream out(metrics_path, std::ios::trunc);
    for (const auto& line : lines) out << line << '\n';
  }

  void write_header() {
    std::ofstream metrics(fs::path(out_dir_) / "metrics.csv", std::ios::trunc);
    metrics << kMetricsSchema << '\n' << kMetricsHeader << '\n';
  }

 private:
  double current_w3() const {
    if (!needs_expert(config_.method) || !trains_ppo(config_.method)) return 0.0;
    return config_.force_w3 ? *config_.force_w3 : schedule_.value;
  }

  const Mlp<float>& acting_policy() const { return trains_ppo(config_.method) ? learner_.policy() : expert_; }

  void collect() {
    buffer_.clear();
    const auto& branches = env_->spec().action_branches;
    const bool ppo = trains_ppo(config_.method);
    for (int t = 0; t < config_.ppo.horizon; ++t) {
      PpoLearner::Decision d;
      if (ppo) {
        d = learner_.act(observation_, rollout_rng_);
      } else {
        const Eigen::MatrixXf logits = expert_.forward(observation_.cast<float>());
        d.action = sample_action(log_softmax(logits, branches).col(0).cast<double>(), branches, rollout_rng_);
      }
      StepResult step = env_->step(d.action);
      ++steps_;
      episode_reward_ += step.reward;
      ++episode_length_;
      EpisodeEnd end = EpisodeEnd::kNone;
      double bootstrap = 0.0;
      if (step.terminated) end = EpisodeEnd::kTerminated;
      if (step.truncated && !step.terminated) {
        end = EpisodeEnd::kTruncated;
        if (ppo) bootstrap = learner_.predict_value(step.observation);
      }
      buffer_.add(observation_, d.action, step.reward, d.value, d.log_prob, end, bootstrap);
      if (step.done()) {
        recent_rewards_.push_back(episode_reward_);
        recent_lengths_.push_back(episode_length_);
        if (recent_rewards_.size() > kRecentEpisodes) {
          recent_rewards_.pop_front();
          recent_lengths_.pop_front();
        }
        episode_reward_ = 0.0;
        episode_length_ = 0;
        observation_ = env_->reset();
      } else {
        observation_ = std::move(step.observation);
      }
    }
    if (ppo) buffer_.finish(learner_.predict_value(observation_), config_.ppo.gamma, config_.ppo.gae_lambda);
  }

  void measure_expert() {
    const auto seed = Pcg32::stream(config_.seed, "bc_eval", expert_evals_++).next_u64();
    bc_mean_ = evaluate(expert_, env_->spec().action_branches, *eval_env_, config_.eval_episodes, seed).mean_reward;
  }

  void evaluation() {
    just_evaluated_ = true;
    const auto seed = Pcg32::stream(config_.seed, "eval", static_cast<std::uint64_t>(eval_index_)).next_u64();
    const EvalResult result =
        evaluate(acting_policy(), env_->spec().action_branches, *eval_env_, config_.eval_episodes, seed);
    has_eval_ = true;
    eval_mean_ = result.mean_reward;
    eval_len_ = result.mean_length;
    if (needs_expert(config_.method) && trains_ppo(config_.method)) update_w3(schedule_, eval_mean_, bc_mean_);
    if (eval_mean_ >= best_eval_ || !has_best_) {
      has_best_ = true;
      best_eval_ = eval_mean_;
      fs::create_directories(fs::path(out_dir_) / "best");
      save_weights(acting_policy(), (fs::path(out_dir_) / "best" / "policy.bin").string());
    }
    if (!retrains_expert(config_.method) || !config_.harvest) return;
    std::vector<Trajectory> accepted = harvest(result.episodes, config_.t_reward);
    if (accepted.empty()) return;
    for (Trajectory& t : accepted) dataset_.append_trajectory(std::move(t));
    if (config_.dedup != SynergyConfig::Dedup::kOff) {
      dataset_.dedup(config_.dedup == SynergyConfig::Dedup::kLast,
                     config_.dedup == SynergyConfig::Dedup::kHarvested ? demo_trajectories_ : 0);
    }
    if (config_.cold_retrain) {
      Pcg32 init = Pcg32::stream(config_.seed, "expert_init", static_cast<std::uint64_t>(eval_index_));
      expert_.init_orthogonal(init, std::sqrt(2.0), 0.01);
    }
    const std::vector<TransitionRef> window = dataset_.latest_window(config_.window);
    train_bc(expert_, env_->spec().action_branches, dataset_.gather(window), config_.retrain, bc_rng_);
    measure_expert();
  }

  void checkpoint() {
    const fs::path dir = fs::path(out_dir_) / "checkpoint";
    const fs::path tmp = fs::path(out_dir_) / "checkpoint.tmp";
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    if (trains_ppo(config_.method)) learner_.save((tmp / "learner").string());
    nlohmann::json view = nlohmann::json::array();
    if (needs_expert(config_.method)) {
      save_weights(expert_, (tmp / "expert.bin").string());
      std::ofstream demos(tmp / "dataset.jsonl");
      write_demos_jsonl(demos, dataset_);
      for (const TransitionRef& r : dataset_.transitions()) view.push_back({r.trajectory, r.step});
    }
    nlohmann::json s;
    s["steps"] = steps_;
    s["rows"] = rows_;
    s["eval_index"] = eval_index_;
    s["env"] = env_->save_state();
    s["observation"] = std::vector<double>(observation_.data(), observation_.data() + observation_.size());
    s["episode_reward"] = episode_reward_;
    s["episode_length"] = episode_length_;
    s["recent_rewards"] = std::vector<double>(recent_rewards_.begin(), recent_rewards_.end());
    s["recent_lengths"] = std::vector<double>(recent_lengths_.begin(), recent_lengths_.end());
    s["rollout_rng"] = rng_json(rollout_rng_);
    s["bc_rng"] = rng_json(bc_rng_);
    s["expert_rng"] = rng_json(expert_rng_);
    s["w3"] = schedule_.value;
    s["w3_latched"] = schedule_.latched;
    s["bc_mean"] = bc_mean_;
    s["best_eval"] = best_eval_;
    s["has_eval"] = has_eval_;
    s["eval_mean"] = eval_mean_;
    s["eval_len"] = eval_len_;
    s["expert_evals"] = expert_evals_;
    s["demo_trajectories"] = demo_trajectories_;
    s["view"] = view;
    std::ofstream(tmp / "state.json") << s.dump() << '\n';
    fs::remove_all(dir);
    fs::rename(tmp, dir);
  }

 private:
  const SynergyConfig& config_;
  std::string out_dir_;
  std::unique_ptr<Environment> env_;
  std::unique_ptr<Environment> eval_env_;
  PpoLearner learner_;
  Mlp<float> expert_;
  DemoDataset dataset_;
  RolloutBuffer buffer_;
  Pcg32 rollout_rng_;
  Pcg32 bc_rng_;
  Pcg32 expert_rng_;
  W3Schedule schedule_;
  Observation observation_;
  long steps_ = 0;
  int rows_ = 0;
  long eval_index_ = 0;
  std::uint64_t expert_evals_ = 0;
  std::size_t demo_trajectories_ = 0;
  double episode_reward_ = 0.0;
  int episode_length_ = 0;
  std::deque<double> recent_rewards_;
  std::deque<double> recent_lengths_;
  double bc_mean_ = 0.0;
  double best_eval_ = 0.0;
  bool has_best_ = false;
  bool has_eval_ = false;
  bool just_evaluated_ = false;
  double eval_mean_ = 0.0;
  double eval_len_ = 0.0;
};

}  // namespace

RunSummary run_training(const SynergyConfig& config, const std::string& out_dir, bool resume,
                        std::optional<long> stop_after) {
  config.validate();
  fs::create_directories(out_dir);
  Run run(config, out_dir);
  if (resume) {
    run.resume();
  } else {
    {
      std::ofstream cfg(fs::path(out_dir) / "config.txt");
      write_run_config(cfg, config);
    }
    run.write_header();
    run.start();
  }
  return run.train(stop_after);
}

}  // namespace trackrl
