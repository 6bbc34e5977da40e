#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "gamf/engine.hpp"
#include "gamf/estimators.hpp"
#include "gamf/params.hpp"

namespace gamf::learners {

enum class LearnerKind { mfq, mfac, pomfq_for, gamfq };

std::string kind_name(LearnerKind k);
LearnerKind kind_from_name(const std::string& s);

struct LearnerConfig {
  LearnerKind kind = LearnerKind::mfq;
  int feature_count = 0;  // F
  int action_count = 0;   // L
  int hidden = 64;
  double lr = 1e-4;
  double gamma = 0.95;
  double beta = 1.0;  // Boltzmann parameter, acting and backup
  double tau = 0.01;
  int minibatch = 64;
  int buffer_capacity = 1024;
  double actor_temperature = 0.1;
  double gumbel_temperature = 0.5;
  int dirichlet_samples = 100;
  double dirichlet_eta = 1.0;
  uint64_t scenario_hash = 0;

  nlohmann::json to_json() const;
  static LearnerConfig from_json(const nlohmann::json& j);
};

// pi(a) proportional to exp(beta * Q(a)), max-stabilized.
std::vector<double> boltzmann_policy(std::span<const double> qvals, double beta);
int sample_discrete(std::span<const double> probs, RngStream& rng);

struct Transition {
  std::vector<double> obs;       // F
  int action = 0;
  double reward = 0.0;
  std::vector<double> next_obs;  // F (unused when terminal)
  bool terminal = false;
  std::vector<double> mean_action;  // L, the estimator output stored with the step

  // GAMFQ recompute data: the centre/neighbour messages at the step plus
  // the neighbours' executed actions, aligned by position.
  std::vector<int> neighbor_ids;
  std::vector<int> neighbor_actions;
  std::vector<double> center_message;     // D
  std::vector<double> neighbor_messages;  // n * D row-major
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);
  void push(Transition t);
  int size() const { return static_cast<int>(items_.size()); }
  int capacity() const { return capacity_; }
  int64_t total_pushed() const { return pushed_; }
  const Transition& at(int i) const { return items_[i]; }

  // k distinct indices, uniform without replacement.
  std::vector<int> sample(int k, RngStream& rng) const;

  void write(std::ostream& os) const;
  void load(std::istream& is);  // capacity must match the serialized buffer

 private:
  std::vector<Transition> items_;
  int capacity_ = 0;
  int head_ = 0;
  int64_t pushed_ = 0;
};

// Linear 1 -> 0 exploration over the training episodes.
struct ExplorationSchedule {
  double eps_start = 1.0;
  double eps_end = 0.0;
  int total_episodes = 1;
  double at_episode(int episode) const;
};

// Message map for the GAMFQ estimator: agent id -> 1 x D message.
using MessageMap = std::unordered_map<int, nn::Tensor>;

struct MeanResult {
  estimators::MeanAction mean;
  estimators::AdjacencyMask mask;       // gamfq only
  estimators::NeighborActions actions;  // what the estimator averaged
};

// One team's parameter sets plus its replay buffer. Agents of the team
// share parameters; per-agent recurrent state lives with the rollout.
class Learner {
 public:
  Learner(const LearnerConfig& config, uint64_t init_seed);

  const LearnerConfig& config() const { return config_; }
  nn::ParamStore& online() { return online_; }
  nn::ParamStore& target() { return target_; }
  nn::ParamStore& actor_store() { return actor_store_; }
  const estimators::GraphAttentionPolicyNet& graph_net() const { return graph_; }
  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }

  std::vector<double> q_values(const std::vector<double>& obs,
                               const estimators::MeanAction& mean);
  std::vector<double> q_values_target(const std::vector<double>& obs,
                                      const estimators::MeanAction& mean);
  std::vector<double> actor_probs(const std::vector<double>& obs,
                                  const estimators::MeanAction& mean);

  // epsilon-mixed Boltzmann sampling (training); greedy argmax with
  // lowest-index tie-break (evaluation).
  int act(const std::vector<double>& obs, const estimators::MeanAction& mean, double eps,
          RngStream& rng);
  int greedy_action(const std::vector<double>& obs, const estimators::MeanAction& mean);

  // Estimator dispatch per the learner kind. `action_by_id` carries the
  // executed action per agent id; `messages` is required for gamfq.
  MeanResult compute_mean(int agent_id, const engine::ObservationView& obs,
                          const std::vector<int>& action_by_id, const MessageMap* messages,
                          uint64_t noise_key, RngStream& sample_rng);

  // TD backups. Means come from the stored transition; for gamfq they are
  // recomputed (value side) with the provided noise key.
  std::vector<double> td_targets(const std::vector<int>& indices, uint64_t noise_key);
  double q_loss(const std::vector<int>& indices, uint64_t noise_key);      // forward only
  double q_backward(const std::vector<int>& indices, uint64_t noise_key);  // no optimizer step
  double q_update(const std::vector<int>& indices, uint64_t noise_key);
  double actor_update(const std::vector<int>& indices);  // mfac only
  // critic step + policy-gradient actor step; returns (critic, actor) loss.
  std::pair<double, double> mfac_update(const std::vector<int>& indices, uint64_t noise_key);
  void soft_update_target();
  void sync_target_hard();

  int64_t update_count() const { return update_count_; }
  void set_update_count(int64_t c) { update_count_ = c; }

  void save_checkpoint(const std::string& path, const nlohmann::json& extras) const;
  static Learner load_checkpoint(const std::string& path, nlohmann::json* header_out = nullptr);

 private:
  struct RecomputedMean {
    estimators::MeanAction value;
    nn::Ref node;  // valid only for gamfq recomputes
  };
  RecomputedMean recompute_mean_node(nn::Tape& tape, const Transition& tr, uint64_t noise_key,
                                     bool with_grad);
  nn::Ref build_q_loss(nn::Tape& tape, const std::vector<int>& indices, uint64_t noise_key,
                       bool with_grad);

  LearnerConfig config_;
  nn::ParamStore online_;
  nn::ParamStore target_;
  nn::ParamStore actor_store_;
  estimators::GraphAttentionPolicyNet graph_;
  struct QNet {
    nn::FcLayer fc1, fc2, fc3;
  } qnet_, actor_;
  ReplayBuffer buffer_;
  int64_t update_count_ = 0;
};

}  // namespace gamf::learners
