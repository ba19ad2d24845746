#include "trackrl/ppo.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>

namespace trackrl {

GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                      std::span<const EpisodeEnd> ends, std::span<const double> bootstrap_values,
                      double last_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || ends.size() != n || bootstrap_values.size() != n) {
    throw std::invalid_argument("compute_gae: sequence lengths differ");
  }
  GaeResult out{Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)),
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))};
  double carry = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    double next_value = i + 1 < n ? values[i + 1] : last_value;
    bool continues = true;
    if (ends[i] == EpisodeEnd::kTerminated) {
      next_value = 0.0;
      continues = false;
    } else if (ends[i] == EpisodeEnd::kTruncated) {
      next_value = bootstrap_values[i];
      continues = false;
    }
    const double delta = rewards[i] + gamma * next_value - values[i];
    carry = delta + (continues ? gamma * lambda * carry : 0.0);
    out.advantages[static_cast<Eigen::Index>(i)] = carry;
    out.returns[static_cast<Eigen::Index>(i)] = carry + values[i];
  }
  return out;
}

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw std::invalid_argument("gae_lambda must lie in [0, 1]");
  if (!(clip > 0.0)) throw std::invalid_argument("clip must be positive");
  if (epochs <= 0 || minibatch <= 0 || horizon <= 0) {
    throw std::invalid_argument("epochs, minibatch and horizon must be positive");
  }
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
}

RolloutBuffer::RolloutBuffer(int horizon, int observation_dim, int branch_count)
    : observations(observation_dim, horizon),
      actions(branch_count, horizon),
      rewards(static_cast<std::size_t>(horizon)),
      values(static_cast<std::size_t>(horizon)),
      log_probs(static_cast<std::size_t>(horizon)),
      ends(static_cast<std::size_t>(horizon)),
      bootstrap_values(static_cast<std::size_t>(horizon)),
      horizon_(horizon) {}

void RolloutBuffer::add(const Observation& observation, const Action& action, double reward,
                        double value, double log_prob, EpisodeEnd end, double bootstrap_value) {
  if (full()) throw std::logic_error("rollout buffer is full");
  const auto i = static_cast<std::size_t>(size_);
  observations.col(size_) = observation.cast<float>();
  for (std::size_t b = 0; b < action.size(); ++b) actions(static_cast<Eigen::Index>(b), size_) = action[b];
  rewards[i] = reward;
  values[i] = value;
  log_probs[i] = log_prob;
  ends[i] = end;
  bootstrap_values[i] = bootstrap_value;
  ++size_;
}

void RolloutBuffer::finish(double last_value, double gamma, double lambda) {
  const auto n = static_cast<std::size_t>(size_);
  GaeResult gae = compute_gae(std::span(rewards).first(n), std::span(values).first(n),
                              std::span(ends).first(n), std::span(bootstrap_values).first(n),
                              last_value, gamma, lambda);
  advantages = std::move(gae.advantages);
  returns = std::move(gae.returns);
}

nlohmann::json RolloutBuffer::save() const {
  const auto n = static_cast<std::size_t>(size_);
  std::vector<float> obs(observations.data(), observations.data() + observations.rows() * size_);
  std::vector<int> acts(actions.data(), actions.data() + actions.rows() * size_);
  std::vector<int> end_codes;
  for (std::size_t i = 0; i < n; ++i) end_codes.push_back(static_cast<int>(ends[i]));
  return {{"size", size_},
          {"observations", obs},
          {"actions", acts},
          {"rewards", std::vector<double>(rewards.begin(), rewards.begin() + size_)},
          {"values", std::vector<double>(values.begin(), values.begin() + size_)},
          {"log_probs", std::vector<double>(log_probs.begin(), log_probs.begin() + size_)},
          {"ends", end_codes},
          {"bootstrap", std::vector<double>(bootstrap_values.begin(), bootstrap_values.begin() + size_)}};
}

void RolloutBuffer::load(const nlohmann::json& state) {
  size_ = state.at("size").get<int>();
  const auto obs = state.at("observations").get<std::vector<float>>();
  const auto acts = state.at("actions").get<std::vector<int>>();
  std::copy(obs.begin(), obs.end(), observations.data());
  std::copy(acts.begin(), acts.end(), actions.data());
  const auto copy_into = [&](const char* key, std::vector<double>& dst) {
    const auto src = state.at(key).get<std::vector<double>>();
    std::copy(src.begin(), src.end(), dst.begin());
  };
  copy_into("rewards", rewards);
  copy_into("values", values);
  copy_into("log_probs", log_probs);
  copy_into("bootstrap", bootstrap_values);
  const auto codes = state.at("ends").get<std::vector<int>>();
  for (std::size_t i = 0; i < codes.size(); ++i) ends[i] = static_cast<EpisodeEnd>(codes[i]);
}

std::vector<int> network_dims(int input, const std::vector<int>& hidden, int output) {
  std::vector<int> dims{input};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output);
  return dims;
}

PpoLearner::PpoLearner(const EnvSpec& spec, PpoConfig config, const std::vector<int>& hidden,
                       std::uint64_t seed)
    : config_((config.validate(), config)),
      branches_(spec.action_branches),
      policy_(network_dims(spec.observation_dim, hidden, spec.logits_dim())),
      value_(network_dims(spec.observation_dim, hidden, 1)),
      shuffle_rng_(Pcg32::stream(seed, "ppo_minibatch")) {
  Pcg32 policy_init = Pcg32::stream(seed, "policy_init");
  Pcg32 value_init = Pcg32::stream(seed, "value_init");
  policy_.init_orthogonal(policy_init, std::sqrt(2.0F), 0.01F);
  value_.init_orthogonal(value_init, std::sqrt(2.0F), 1.0F);
  const AdamSettings adam{config_.lr, 0.9, 0.999, 1e-8};
  policy_opt_ = AdamState<float>(policy_.num_parameters(), adam);
  value_opt_ = AdamState<float>(value_.num_parameters(), adam);
}

PpoLearner::Decision PpoLearner::act(const Observation& observation, Pcg32& rng) const {
  const Eigen::MatrixXf logits = policy_.forward(observation.cast<float>());
  const Eigen::VectorXd lp = log_softmax(logits, branches_).col(0).cast<double>();
  Decision d;
  d.action = sample_action(lp, branches_, rng);
  const ActionBatch a = to_action_batch(std::span(&d.action, 1), branches_.size());
  d.log_prob = log_prob(Eigen::MatrixXd(lp), a, branches_)[0];
  d.value = predict_value(observation);
  return d;
}

double PpoLearner::predict_value(const Observation& observation) const {
  return static_cast<double>(value_.forward(observation.cast<float>())(0, 0));
}

UpdateStats PpoLearner::update(const RolloutBuffer& buffer, const Mlp<float>* expert, double w3,
                               Pcg32* expert_rng) {
  const int n = buffer.size();
  if (n == 0) throw std::invalid_argument("PPO update on an empty buffer");
  if (buffer.advantages.size() != n) throw std::logic_error("rollout buffer not finished");
  const bool guided = expert != nullptr && w3 > 0.0;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  UpdateStats stats;
  const auto w1 = static_cast<float>(config_.w1);
  const auto w2 = static_cast<float>(config_.w2);
  const auto w3f = static_cast<float>(w3);
  const auto ent = static_cast<float>(config_.entropy_coef);

  for (int epoch = 0; epoch < config_.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(shuffle_rng_.uniform_int(static_cast<std::uint32_t>(i + 1)));
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    for (int start = 0; start < n; start += config_.minibatch) {
      const int size = std::min(config_.minibatch, n - start);
      PpoBatch<float> batch;
      batch.observations.resize(buffer.observations.rows(), size);
      batch.actions.resize(buffer.actions.rows(), size);
      batch.old_log_probs.resize(size);
      batch.advantages.resize(size);
      batch.returns.resize(size);
      for (int k = 0; k < size; ++k) {
        const int idx = order[static_cast<std::size_t>(start + k)];
        batch.observations.col(k) = buffer.observations.col(idx);
        batch.actions.col(k) = buffer.actions.col(idx);
        batch.old_log_probs[k] = static_cast<float>(buffer.log_probs[static_cast<std::size_t>(idx)]);
        batch.advantages[k] = static_cast<float>(buffer.advantages[idx]);
        batch.returns[k] = static_cast<float>(buffer.returns[idx]);
      }
      batch.advantages = normalize_advantages(batch.advantages);
      if (guided) {
        batch.expert_probs = log_softmax(expert->forward(batch.observations), branches_).array().exp().matrix();
        if (config_.expert_target == ExpertTarget::kSampledAction) {
          if (expert_rng == nullptr) throw std::invalid_argument("sampled expert target needs an rng");
          for (int k = 0; k < size; ++k) {
            const Eigen::VectorXd lp = batch.expert_probs.col(k).cast<double>().array().log().matrix();
            const Action a = sample_action(lp, branches_, *expert_rng);
            batch.expert_probs.col(k).setZero();
            Eigen::Index offset = 0;
            for (std::size_t b = 0; b < branches_.size(); ++b) {
              batch.expert_probs(offset + a[b], k) = 1.0F;
              offset += branches_[b];
            }
          }
        }
      }
      PpoObjective<float> obj = ppo_objective(policy_, value_, batch, static_cast<float>(config_.clip), w1, w2,
                                              guided ? w3f : 0.0F, ent, branches_);
      if (config_.max_grad_norm > 0.0) {
        const double norm = std::sqrt(static_cast<double>(obj.policy_grad.squaredNorm()) +
                                      static_cast<double>(obj.value_grad.squaredNorm()));
        if (norm > config_.max_grad_norm) {
          const auto scale = static_cast<float>(config_.max_grad_norm / (norm + 1e-6));
          obj.policy_grad *= scale;
          obj.value_grad *= scale;
        }
      }
      adam_step(policy_opt_, policy_.parameters(), obj.policy_grad);
      adam_step(value_opt_, value_.parameters(), obj.value_grad);

      stats.policy_loss += obj.policy;
      stats.value_loss += obj.value;
      stats.action_loss += obj.action;
      stats.entropy += obj.entropy;
      stats.approx_kl += obj.approx_kl;
      stats.clip_fraction += obj.clip_fraction;
      ++stats.minibatches;
    }
  }
  const double m = stats.minibatches;
  stats.policy_loss /= m;
  stats.value_loss /= m;
  stats.action_loss /= m;
  stats.entropy /= m;
  stats.approx_kl /= m;
  stats.clip_fraction /= m;
  return stats;
}

namespace {

void write_bytes(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

void PpoLearner::save(const std::string& directory) const {
  const std::filesystem::path dir(directory);
  std::filesystem::create_directories(dir);
  save_weights(policy_, (dir / "policy.bin").string());
  save_weights(value_, (dir / "value.bin").string());
  write_bytes(dir / "policy_adam_m.bin", encode_vector(policy_opt_.m));
  write_bytes(dir / "policy_adam_v.bin", encode_vector(policy_opt_.v));
  write_bytes(dir / "value_adam_m.bin", encode_vector(value_opt_.m));
  write_bytes(dir / "value_adam_v.bin", encode_vector(value_opt_.v));
  const nlohmann::json meta = {{"policy_adam_step", policy_opt_.step},
                               {"value_adam_step", value_opt_.step},
                               {"shuffle_state", shuffle_rng_.state()},
                               {"shuffle_inc", shuffle_rng_.increment()}};
  std::ofstream(dir / "learner.json") << meta.dump(1) << "\n";
}

void PpoLearner::load(const std::string& directory) {
  const std::filesystem::path dir(directory);
  Mlp<float> policy = load_weights((dir / "policy.bin").string());
  Mlp<float> value = load_weights((dir / "value.bin").string());
  if (policy.dims() != policy_.dims() || value.dims() != value_.dims()) {
    throw std::runtime_error("checkpoint network dims do not match the configuration");
  }
  policy_ = std::move(policy);
  value_ = std::move(value);
  policy_opt_.m = decode_vector(read_bytes(dir / "policy_adam_m.bin"));
  policy_opt_.v = decode_vector(read_bytes(dir / "policy_adam_v.bin"));
  value_opt_.m = decode_vector(read_bytes(dir / "value_adam_m.bin"));
  value_opt_.v = decode_vector(read_bytes(dir / "value_adam_v.bin"));
  std::ifstream in(dir / "learner.json");
  const nlohmann::json meta = nlohmann::json::parse(in);
  policy_opt_.step = meta.at("policy_adam_step").get<std::int64_t>();
  value_opt_.step = meta.at("value_adam_step").get<std::int64_t>();
  shuffle_rng_.restore(meta.at("shuffle_state").get<std::uint64_t>(),
                       meta.at("shuffle_inc").get<std::uint64_t>());
}

}  // namespace trackrl
