#include "gamf/learners.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "gamf/checkpoint.hpp"
#include "gamf/tape.hpp"

namespace gamf::learners {

std::string kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::mfq: return "mfq";
    case LearnerKind::mfac: return "mfac";
    case LearnerKind::pomfq_for: return "pomfq_for";
    case LearnerKind::gamfq: return "gamfq";
  }
  return "?";
}

LearnerKind kind_from_name(const std::string& s) {
  if (s == "mfq") return LearnerKind::mfq;
  if (s == "mfac") return LearnerKind::mfac;
  if (s == "pomfq_for") return LearnerKind::pomfq_for;
  if (s == "gamfq") return LearnerKind::gamfq;
  throw std::invalid_argument("unknown learner kind: " + s);
}

nlohmann::json LearnerConfig::to_json() const {
  return {{"kind", kind_name(kind)},
          {"feature_count", feature_count},
          {"action_count", action_count},
          {"hidden", hidden},
          {"lr", lr},
          {"gamma", gamma},
          {"beta", beta},
          {"tau", tau},
          {"minibatch", minibatch},
          {"buffer_capacity", buffer_capacity},
          {"actor_temperature", actor_temperature},
          {"gumbel_temperature", gumbel_temperature},
          {"dirichlet_samples", dirichlet_samples},
          {"dirichlet_eta", dirichlet_eta},
          {"scenario_hash", scenario_hash}};
}

LearnerConfig LearnerConfig::from_json(const nlohmann::json& j) {
  LearnerConfig c;
  c.kind = kind_from_name(j.at("kind").get<std::string>());
  c.feature_count = j.at("feature_count").get<int>();
  c.action_count = j.at("action_count").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.lr = j.at("lr").get<double>();
  c.gamma = j.at("gamma").get<double>();
  c.beta = j.at("beta").get<double>();
  c.tau = j.at("tau").get<double>();
  c.minibatch = j.at("minibatch").get<int>();
  c.buffer_capacity = j.at("buffer_capacity").get<int>();
  c.actor_temperature = j.at("actor_temperature").get<double>();
  c.gumbel_temperature = j.at("gumbel_temperature").get<double>();
  c.dirichlet_samples = j.at("dirichlet_samples").get<int>();
  c.dirichlet_eta = j.at("dirichlet_eta").get<double>();
  c.scenario_hash = j.at("scenario_hash").get<uint64_t>();
  return c;
}

std::vector<double> boltzmann_policy(std::span<const double> qvals, double beta) {
  if (qvals.empty()) throw std::invalid_argument("boltzmann_policy: empty Q vector");
  if (beta < 0.0) throw std::invalid_argument("boltzmann_policy: beta must be >= 0");
  double mx = qvals[0];
  for (double q : qvals) mx = std::max(mx, q);
  std::vector<double> probs(qvals.size());
  double sum = 0.0;
  for (size_t i = 0; i < qvals.size(); ++i) {
    probs[i] = std::exp(beta * (qvals[i] - mx));
    sum += probs[i];
  }
  for (double& p : probs) p /= sum;
  return probs;
}

int sample_discrete(std::span<const double> probs, RngStream& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  for (size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return static_cast<int>(probs.size()) - 1;
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::push(Transition t) {
  if (size() < capacity_) {
    items_.push_back(std::move(t));
  } else {
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
  }
  ++pushed_;
}

std::vector<int> ReplayBuffer::sample(int k, RngStream& rng) const {
  if (k < 1 || k > size())
    throw std::invalid_argument("ReplayBuffer::sample: need 1 <= k <= size");
  std::vector<int> idx(size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<uint32_t>(size() - i)));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

namespace {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("ReplayBuffer: truncated stream");
  return v;
}
template <typename T>
void write_vec(std::ostream& os, const std::vector<T>& v) {
  write_pod<uint32_t>(os, static_cast<uint32_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(T)));
}
template <typename T>
std::vector<T> read_vec(std::istream& is) {
  const uint32_t n = read_pod<uint32_t>(is);
  std::vector<T> v(n);
  is.read(reinterpret_cast<char*>(v.data()), std::streamsize(size_t(n) * sizeof(T)));
  if (!is) throw std::runtime_error("ReplayBuffer: truncated stream");
  return v;
}

}  // namespace

void ReplayBuffer::write(std::ostream& os) const {
  write_pod<int32_t>(os, capacity_);
  write_pod<int32_t>(os, head_);
  write_pod<int64_t>(os, pushed_);
  write_pod<uint32_t>(os, static_cast<uint32_t>(items_.size()));
  for (const Transition& t : items_) {
    write_vec(os, t.obs);
    write_pod<int32_t>(os, t.action);
    write_pod<double>(os, t.reward);
    write_vec(os, t.next_obs);
    write_pod<uint8_t>(os, t.terminal ? 1 : 0);
    write_vec(os, t.mean_action);
    write_vec(os, t.neighbor_ids);
    write_vec(os, t.neighbor_actions);
    write_vec(os, t.center_message);
    write_vec(os, t.neighbor_messages);
  }
}

void ReplayBuffer::load(std::istream& is) {
  const int32_t cap = read_pod<int32_t>(is);
  if (cap != capacity_) throw std::runtime_error("ReplayBuffer::load: capacity mismatch");
  head_ = read_pod<int32_t>(is);
  pushed_ = read_pod<int64_t>(is);
  const uint32_t n = read_pod<uint32_t>(is);
  items_.clear();
  items_.reserve(n);
  for (uint32_t i = 0; i < n; ++i) {
    Transition t;
    t.obs = read_vec<double>(is);
    t.action = read_pod<int32_t>(is);
    t.reward = read_pod<double>(is);
    t.next_obs = read_vec<double>(is);
    t.terminal = read_pod<uint8_t>(is) != 0;
    t.mean_action = read_vec<double>(is);
    t.neighbor_ids = read_vec<int>(is);
    t.neighbor_actions = read_vec<int>(is);
    t.center_message = read_vec<double>(is);
    t.neighbor_messages = read_vec<double>(is);
    items_.push_back(std::move(t));
  }
}

double ExplorationSchedule::at_episode(int episode) const {
  if (total_episodes <= 0) return eps_end;
  const double t = std::clamp(double(episode) / double(total_episodes), 0.0, 1.0);
  return eps_start + (eps_end - eps_start) * t;
}

namespace {

std::vector<double> joined(const std::vector<double>& obs, const estimators::MeanAction& mean) {
  std::vector<double> row;
  row.reserve(obs.size() + mean.size());
  row.insert(row.end(), obs.begin(), obs.end());
  row.insert(row.end(), mean.begin(), mean.end());
  return row;
}

nn::Ref qnet_forward(const nn::FcLayer& fc1, const nn::FcLayer& fc2, const nn::FcLayer& fc3,
                     nn::Tape& t, nn::ParamStore& s, nn::Ref x, bool frozen) {
  nn::Ref h1 = t.relu(fc1.forward(t, s, x, frozen));
  nn::Ref h2 = t.relu(fc2.forward(t, s, h1, frozen));
  return fc3.forward(t, s, h2, frozen);
}

}  // namespace

Learner::Learner(const LearnerConfig& config, uint64_t init_seed)
    : config_(config), buffer_(config.buffer_capacity) {
  if (config.feature_count <= 0 || config.action_count <= 0)
    throw std::invalid_argument("Learner: feature_count and action_count must be set");
  const int in = config.feature_count + config.action_count;
  qnet_ = {nn::FcLayer("qnet/fc1", in, config.hidden),
           nn::FcLayer("qnet/fc2", config.hidden, config.hidden),
           nn::FcLayer("qnet/fc3", config.hidden, config.action_count)};
  RngStream rng(derive_key(init_seed, {rng_tag("learner_init")}));
  qnet_.fc1.init(online_, rng);
  qnet_.fc2.init(online_, rng);
  qnet_.fc3.init(online_, rng);
  if (config.kind == LearnerKind::gamfq) {
    graph_ = estimators::GraphAttentionPolicyNet(config.feature_count, config.hidden);
    graph_.init(online_, rng);
  }
  if (config.kind == LearnerKind::mfac) {
    actor_ = {nn::FcLayer("actor/fc1", in, config.hidden),
              nn::FcLayer("actor/fc2", config.hidden, config.hidden),
              nn::FcLayer("actor/fc3", config.hidden, config.action_count)};
    actor_.fc1.init(actor_store_, rng);
    actor_.fc2.init(actor_store_, rng);
    actor_.fc3.init(actor_store_, rng);
  }
  sync_target_hard();
}

void Learner::sync_target_hard() { target_ = online_.snapshot(); }

void Learner::soft_update_target() { nn::soft_update(online_, target_, config_.tau); }

std::vector<double> Learner::q_values(const std::vector<double>& obs,
                                      const estimators::MeanAction& mean) {
  nn::Tape t;
  nn::Ref x = t.constant(nn::Tensor::row(joined(obs, mean)));
  nn::Ref q = qnet_forward(qnet_.fc1, qnet_.fc2, qnet_.fc3, t, online_, x, /*frozen=*/true);
  if (!t.value(q).all_finite())
    throw std::runtime_error("q_values: non-finite forward pass (diverged parameters?)");
  return t.value(q).vec();
}

std::vector<double> Learner::q_values_target(const std::vector<double>& obs,
                                             const estimators::MeanAction& mean) {
  nn::Tape t;
  nn::Ref x = t.constant(nn::Tensor::row(joined(obs, mean)));
  nn::Ref q = qnet_forward(qnet_.fc1, qnet_.fc2, qnet_.fc3, t, target_, x, /*frozen=*/true);
  return t.value(q).vec();
}

std::vector<double> Learner::actor_probs(const std::vector<double>& obs,
                                         const estimators::MeanAction& mean) {
  if (config_.kind != LearnerKind::mfac)
    throw std::logic_error("actor_probs: learner has no actor head");
  nn::Tape t;
  nn::Ref x = t.constant(nn::Tensor::row(joined(obs, mean)));
  nn::Ref logits =
      qnet_forward(actor_.fc1, actor_.fc2, actor_.fc3, t, actor_store_, x, /*frozen=*/true);
  nn::Ref probs = t.softmax_rows(t.scale(logits, 1.0 / config_.actor_temperature));
  return t.value(probs).vec();
}

int Learner::act(const std::vector<double>& obs, const estimators::MeanAction& mean, double eps,
                 RngStream& rng) {
  if (eps > 0.0 && rng.next_double() < eps)
    return static_cast<int>(rng.next_below(static_cast<uint32_t>(config_.action_count)));
  const std::vector<double> q = q_values(obs, mean);
  const std::vector<double> probs = boltzmann_policy(q, config_.beta);
  return sample_discrete(probs, rng);
}

int Learner::greedy_action(const std::vector<double>& obs, const estimators::MeanAction& mean) {
  const std::vector<double> q = q_values(obs, mean);
  int best = 0;
  for (size_t i = 1; i < q.size(); ++i)
    if (q[i] > q[best]) best = static_cast<int>(i);
  return best;
}

MeanResult Learner::compute_mean(int agent_id, const engine::ObservationView& obs,
                                 const std::vector<int>& action_by_id, const MessageMap* messages,
                                 uint64_t noise_key, RngStream& sample_rng) {
  MeanResult out;
  out.actions.action_count = config_.action_count;
  for (const engine::NeighborInfo& nb : obs.neighbors) {
    const int act = action_by_id.at(nb.agent_id);
    if (act < 0 || act >= config_.action_count)
      throw std::invalid_argument("compute_mean: missing executed action for a neighbour");
    out.actions.items.push_back({nb.agent_id, act});
  }

  switch (config_.kind) {
    case LearnerKind::mfq:
    case LearnerKind::mfac: {
      out.mean = estimators::global_mean(out.actions);
      break;
    }
    case LearnerKind::pomfq_for: {
      estimators::DirichletState st;
      st.eta = config_.dirichlet_eta;
      st.samples = config_.dirichlet_samples;
      st.counts.assign(config_.action_count, 0);
      for (const auto& item : out.actions.items) st.counts[item.action] += 1;
      out.mean = estimators::dirichlet_mean(st, sample_rng);
      break;
    }
    case LearnerKind::gamfq: {
      if (messages == nullptr)
        throw std::invalid_argument("compute_mean: gamfq needs the message map");
      const int n = static_cast<int>(out.actions.items.size());
      if (n == 0) {
        out.mean = estimators::uniform_mean(config_.action_count);
        break;
      }
      const nn::Tensor& center = messages->at(agent_id);
      nn::Tensor nbrs(n, config_.hidden);
      std::vector<int> ids(n);
      for (int i = 0; i < n; ++i) {
        ids[i] = out.actions.items[i].agent_id;
        const nn::Tensor& m = messages->at(ids[i]);
        std::copy(m.data(), m.data() + m.size(), nbrs.data() + size_t(i) * config_.hidden);
      }
      out.mask = estimators::edge_select(graph_, online_, center, nbrs, ids, noise_key,
                                         /*hard=*/true, config_.gumbel_temperature);
      out.mean = estimators::masked_mean(out.mask, out.actions);
      break;
    }
  }
  return out;
}

Learner::RecomputedMean Learner::recompute_mean_node(nn::Tape& tape, const Transition& tr,
                                                     uint64_t noise_key, bool with_grad) {
  RecomputedMean out;
  if (config_.kind != LearnerKind::gamfq || tr.neighbor_ids.empty()) {
    out.value = tr.mean_action;
    if (config_.kind == LearnerKind::gamfq)
      out.node = tape.constant(nn::Tensor(1, config_.action_count,
                                          estimators::MeanAction(tr.mean_action)));
    return out;
  }
  const int n = static_cast<int>(tr.neighbor_ids.size());
  nn::Ref center = tape.constant(
      nn::Tensor(1, config_.hidden, std::vector<double>(tr.center_message)));
  nn::Ref nbrs = tape.constant(
      nn::Tensor(n, config_.hidden, std::vector<double>(tr.neighbor_messages)));
  estimators::EdgeSelection sel =
      estimators::edge_select_node(graph_, tape, online_, center, nbrs, tr.neighbor_ids,
                                   noise_key, /*hard=*/true, config_.gumbel_temperature,
                                   /*frozen=*/!with_grad);
  estimators::NeighborActions actions;
  actions.action_count = config_.action_count;
  for (int i = 0; i < n; ++i) actions.items.push_back({tr.neighbor_ids[i], tr.neighbor_actions[i]});
  out.node = estimators::masked_mean_node(tape, sel, actions);
  out.value = tape.value(out.node).vec();
  return out;
}

std::vector<double> Learner::td_targets(const std::vector<int>& indices, uint64_t noise_key) {
  std::vector<double> ys;
  ys.reserve(indices.size());
  for (size_t k = 0; k < indices.size(); ++k) {
    const Transition& tr = buffer_.at(indices[k]);
    if (static_cast<int>(tr.mean_action.size()) != config_.action_count)
      throw std::invalid_argument("td_targets: transition action-table size mismatch");
    if (tr.terminal) {
      ys.push_back(tr.reward);
      continue;
    }
    nn::Tape scratch;
    const RecomputedMean mean =
        recompute_mean_node(scratch, tr, derive_key(noise_key, {static_cast<uint64_t>(k)}),
                            /*with_grad=*/false);
    const std::vector<double> q = q_values_target(tr.next_obs, mean.value);
    const std::vector<double> pi = boltzmann_policy(q, config_.beta);
    double v = 0.0;
    for (size_t a = 0; a < q.size(); ++a) v += pi[a] * q[a];
    ys.push_back(tr.reward + config_.gamma * v);
  }
  return ys;
}

nn::Ref Learner::build_q_loss(nn::Tape& tape, const std::vector<int>& indices,
                              uint64_t noise_key, bool with_grad) {
  if (indices.empty()) throw std::invalid_argument("q_update: empty batch");
  const int k = static_cast<int>(indices.size());
  const int f = config_.feature_count;
  const int l = config_.action_count;

  std::vector<int> acts(k);
  std::vector<double> ys(k);
  nn::Ref input;

  if (config_.kind == LearnerKind::gamfq) {
    std::vector<nn::Ref> rows;
    rows.reserve(k);
    for (int i = 0; i < k; ++i) {
      const Transition& tr = buffer_.at(indices[i]);
      acts[i] = tr.action;
      const uint64_t key = derive_key(noise_key, {static_cast<uint64_t>(i)});
      const RecomputedMean mean = recompute_mean_node(tape, tr, key, with_grad);
      nn::Ref obs_row = tape.constant(nn::Tensor(1, f, std::vector<double>(tr.obs)));
      rows.push_back(tape.concat_cols(obs_row, mean.node));
      if (tr.terminal) {
        ys[i] = tr.reward;
      } else {
        const std::vector<double> q = q_values_target(tr.next_obs, mean.value);
        const std::vector<double> pi = boltzmann_policy(q, config_.beta);
        double v = 0.0;
        for (size_t a = 0; a < q.size(); ++a) v += pi[a] * q[a];
        ys[i] = tr.reward + config_.gamma * v;
      }
    }
    input = tape.vstack(rows);
  } else {
    nn::Tensor inputs(k, f + l);
    for (int i = 0; i < k; ++i) {
      const Transition& tr = buffer_.at(indices[i]);
      acts[i] = tr.action;
      std::copy(tr.obs.begin(), tr.obs.end(), inputs.data() + size_t(i) * (f + l));
      std::copy(tr.mean_action.begin(), tr.mean_action.end(),
                inputs.data() + size_t(i) * (f + l) + f);
      if (tr.terminal) {
        ys[i] = tr.reward;
      } else {
        const std::vector<double> q = q_values_target(tr.next_obs, tr.mean_action);
        const std::vector<double> pi = boltzmann_policy(q, config_.beta);
        double v = 0.0;
        for (size_t a = 0; a < q.size(); ++a) v += pi[a] * q[a];
        ys[i] = tr.reward + config_.gamma * v;
      }
    }
    input = tape.constant(std::move(inputs));
  }

  nn::Ref q = qnet_forward(qnet_.fc1, qnet_.fc2, qnet_.fc3, tape, online_, input,
                           /*frozen=*/!with_grad);
  nn::Ref qsel = tape.gather_cols(q, acts);
  nn::Ref diff = tape.sub(tape.constant(nn::Tensor::col(std::move(ys))), qsel);
  return tape.mean_all(tape.mul(diff, diff));
}

double Learner::q_loss(const std::vector<int>& indices, uint64_t noise_key) {
  nn::Tape tape;
  return tape.value(build_q_loss(tape, indices, noise_key, /*with_grad=*/false)).at(0, 0);
}

double Learner::q_backward(const std::vector<int>& indices, uint64_t noise_key) {
  online_.zero_grads();
  nn::Tape tape;
  nn::Ref loss = build_q_loss(tape, indices, noise_key, /*with_grad=*/true);
  const double loss_value = tape.value(loss).at(0, 0);
  tape.backward(loss);
  return loss_value;
}

double Learner::q_update(const std::vector<int>& indices, uint64_t noise_key) {
  const double loss_value = q_backward(indices, noise_key);
  online_.adam_step(config_.lr);
  ++update_count_;
  return loss_value;
}

std::pair<double, double> Learner::mfac_update(const std::vector<int>& indices,
                                               uint64_t noise_key) {
  const double critic_loss = q_update(indices, noise_key);
  const double actor_loss = actor_update(indices);
  return {critic_loss, actor_loss};
}

double Learner::actor_update(const std::vector<int>& indices) {
  if (config_.kind != LearnerKind::mfac)
    throw std::logic_error("actor_update: learner has no actor head");
  if (indices.empty()) throw std::invalid_argument("actor_update: empty batch");
  const int k = static_cast<int>(indices.size());
  const int f = config_.feature_count;
  const int l = config_.action_count;

  nn::Tensor inputs(k, f + l);
  std::vector<int> acts(k);
  for (int i = 0; i < k; ++i) {
    const Transition& tr = buffer_.at(indices[i]);
    acts[i] = tr.action;
    std::copy(tr.obs.begin(), tr.obs.end(), inputs.data() + size_t(i) * (f + l));
    std::copy(tr.mean_action.begin(), tr.mean_action.end(),
              inputs.data() + size_t(i) * (f + l) + f);
  }

  actor_store_.zero_grads();
  nn::Tape tape;
  nn::Ref x = tape.constant(std::move(inputs));
  nn::Ref logits =
      qnet_forward(actor_.fc1, actor_.fc2, actor_.fc3, tape, actor_store_, x, /*frozen=*/false);
  nn::Ref probs = tape.softmax_rows(tape.scale(logits, 1.0 / config_.actor_temperature));

  // Advantage under the online critic, treated as a constant.
  std::vector<double> advantage(k);
  const nn::Tensor& pv = tape.value(probs);
  for (int i = 0; i < k; ++i) {
    const Transition& tr = buffer_.at(indices[i]);
    const std::vector<double> q = q_values(tr.obs, tr.mean_action);
    double baseline = 0.0;
    for (int a = 0; a < l; ++a) baseline += pv.at(i, a) * q[a];
    advantage[i] = q[acts[i]] - baseline;
  }

  nn::Ref logp = tape.log_(tape.gather_cols(probs, acts));
  nn::Ref weighted = tape.mul(logp, tape.constant(nn::Tensor::col(std::move(advantage))));
  nn::Ref loss = tape.scale(tape.mean_all(weighted), -1.0);
  const double loss_value = tape.value(loss).at(0, 0);
  tape.backward(loss);
  actor_store_.adam_step(config_.lr);
  return loss_value;
}

void Learner::save_checkpoint(const std::string& path, const nlohmann::json& extras) const {
  nn::ParamStore combined;
  for (const std::string& n : online_.manifest())
    combined.add(n, online_.value(online_.index_of(n)));
  for (const std::string& n : actor_store_.manifest())
    combined.add(n, actor_store_.value(actor_store_.index_of(n)));

  nlohmann::json header = extras;
  header["learner"] = config_.to_json();
  header["replay_stats"] = {{"size", buffer_.size()},
                            {"capacity", buffer_.capacity()},
                            {"total_pushed", buffer_.total_pushed()}};
  nn::save_checkpoint(path, combined, header);
}

Learner Learner::load_checkpoint(const std::string& path, nlohmann::json* header_out) {
  nlohmann::json header;
  nn::ParamStore combined = nn::load_checkpoint(path, &header);
  const LearnerConfig config = LearnerConfig::from_json(header.at("learner"));
  Learner learner(config, /*init_seed=*/0);
  for (const std::string& n : combined.manifest()) {
    nn::ParamStore& dst = n.rfind("actor/", 0) == 0 ? learner.actor_store_ : learner.online_;
    dst.value(n) = combined.value(combined.index_of(n));
  }
  learner.sync_target_hard();
  if (header_out) *header_out = std::move(header);
  return learner;
}

}  // namespace gamf::learners
