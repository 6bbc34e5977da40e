#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gamf/learners.hpp"
#include "gamf/rng.hpp"

using namespace gamf;
using namespace gamf::learners;

namespace {

LearnerConfig small_config(LearnerKind kind, int f = 3, int l = 4) {
  LearnerConfig c;
  c.kind = kind;
  c.feature_count = f;
  c.action_count = l;
  c.hidden = 8;
  c.lr = 1e-2;
  c.buffer_capacity = 64;
  c.minibatch = 8;
  return c;
}

Transition make_transition(RngStream& rng, int f, int l, bool terminal = false) {
  Transition t;
  t.obs.resize(f);
  t.next_obs.resize(f);
  for (auto& v : t.obs) v = rng.next_double();
  for (auto& v : t.next_obs) v = rng.next_double();
  t.action = static_cast<int>(rng.next_below(l));
  t.reward = 2.0 * rng.next_double() - 1.0;
  t.terminal = terminal;
  t.mean_action.assign(l, 1.0 / l);
  return t;
}

// Pin the Q network to a constant output: zero weights, fc3 bias = qvals.
void freeze_q_output(Learner& learner, const std::vector<double>& qvals) {
  nn::ParamStore& s = learner.online();
  for (const char* n : {"qnet/fc1/w", "qnet/fc1/b", "qnet/fc2/w", "qnet/fc2/b", "qnet/fc3/w"})
    s.value(n).fill(0.0);
  s.value("qnet/fc3/b") = nn::Tensor(1, static_cast<int>(qvals.size()), qvals);
  learner.sync_target_hard();
}

}  // namespace

TEST_CASE("boltzmann: symmetry, zero beta, and the beta-10 two-action case") {
  std::vector<double> equal(5, 3.25);
  for (double p : boltzmann_policy(equal, 1.0)) CHECK(std::abs(p - 0.2) < 1e-9);
  std::vector<double> any{0.3, -2.0, 5.5};
  for (double p : boltzmann_policy(any, 0.0)) CHECK(std::abs(p - 1.0 / 3) < 1e-12);
  // direct evaluation of the softmax formula: e^10/(1+e^10)
  std::vector<double> q{1.0, 0.0};
  std::vector<double> pi = boltzmann_policy(q, 10.0);
  CHECK(pi[0] == doctest::Approx(0.9999546021312976).epsilon(1e-10));
  CHECK(pi[1] == doctest::Approx(1.0 - 0.9999546021312976).epsilon(1e-5));
  CHECK(pi[0] > pi[1]);  // higher Q must be more probable
  CHECK_THROWS_AS(boltzmann_policy(std::vector<double>{}, 1.0), std::invalid_argument);
}

TEST_CASE("act: pure exploration is uniform within 3 sigma") {
  Learner learner(small_config(LearnerKind::mfq), 1);
  RngStream rng(5);
  const int n = 10000, l = 4;
  std::vector<int> counts(l, 0);
  std::vector<double> obs(3, 0.1);
  const estimators::MeanAction mean(l, 0.25);
  for (int i = 0; i < n; ++i) counts[learner.act(obs, mean, 1.0, rng)]++;
  const double expect = double(n) / l;
  const double sigma = std::sqrt(n * (1.0 / l) * (1.0 - 1.0 / l));
  for (int c : counts) CHECK(std::abs(c - expect) <= 3.0 * sigma);
}

TEST_CASE("act: dominant Q-value wins nearly always at eps = 0") {
  Learner learner(small_config(LearnerKind::mfq), 1);
  freeze_q_output(learner, {0.0, 100.0, 0.0, 0.0});
  RngStream rng(7);
  std::vector<double> obs(3, 0.5);
  const estimators::MeanAction mean(4, 0.25);
  int hits = 0;
  for (int i = 0; i < 10000; ++i) hits += learner.act(obs, mean, 0.0, rng) == 1;
  CHECK(hits >= 9990);
  CHECK(learner.greedy_action(obs, mean) == 1);
}

TEST_CASE("act: fixed seed reproduces the action sequence") {
  Learner learner(small_config(LearnerKind::mfq), 3);
  std::vector<double> obs(3, 0.2);
  const estimators::MeanAction mean(4, 0.25);
  std::vector<int> s1, s2;
  RngStream r1(11), r2(11);
  for (int i = 0; i < 200; ++i) s1.push_back(learner.act(obs, mean, 0.3, r1));
  for (int i = 0; i < 200; ++i) s2.push_back(learner.act(obs, mean, 0.3, r2));
  CHECK(s1 == s2);
}

TEST_CASE("greedy ties break toward the lowest action index") {
  Learner learner(small_config(LearnerKind::mfq), 1);
  freeze_q_output(learner, {1.0, 1.0, 1.0, 0.0});
  CHECK(learner.greedy_action(std::vector<double>(3, 0.3), estimators::MeanAction(4, 0.25)) == 0);
}

TEST_CASE("replay buffer: capacity bound and FIFO eviction") {
  ReplayBuffer buf(4);
  RngStream rng(13);
  for (int i = 0; i < 6; ++i) {
    Transition t = make_transition(rng, 2, 3);
    t.reward = i;
    buf.push(std::move(t));
  }
  CHECK(buf.size() == 4);
  CHECK(buf.total_pushed() == 6);
  // rewards 0 and 1 were evicted first
  std::vector<double> rewards;
  for (int i = 0; i < buf.size(); ++i) rewards.push_back(buf.at(i).reward);
  std::sort(rewards.begin(), rewards.end());
  CHECK(rewards == std::vector<double>{2.0, 3.0, 4.0, 5.0});
  CHECK_THROWS_AS(buf.sample(5, rng), std::invalid_argument);
}

TEST_CASE("replay buffer: sampling is uniform (chi-squared at 1%) and without replacement") {
  ReplayBuffer buf(128);
  RngStream fill(17);
  for (int i = 0; i < 128; ++i) buf.push(make_transition(fill, 2, 3));
  RngStream rng(19);
  std::vector<int> counts(128, 0);
  const int batches = 1563;  // ~1e5 samples of size 64
  for (int b = 0; b < batches; ++b) {
    std::vector<int> idx = buf.sample(64, rng);
    std::vector<bool> seen(128, false);
    for (int i : idx) {
      CHECK(!seen[i]);
      seen[i] = true;
      counts[i]++;
    }
  }
  const double expect = batches * 64.0 / 128.0;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  // Wilson-Hilferty upper 1% critical value for 127 df ~ 166.99; sampling
  // without replacement only lowers the variance, so this is conservative.
  CHECK(chi2 < 167.0);
}

TEST_CASE("exploration schedule: eps(e) = 1 - e/epochs exactly") {
  ExplorationSchedule sched{1.0, 0.0, 10};
  for (int e = 0; e <= 10; ++e) CHECK(sched.at_episode(e) == doctest::Approx(1.0 - e / 10.0));
  CHECK(sched.at_episode(15) == 0.0);
}

TEST_CASE("td_targets: terminal cut and zero-target base cases") {
  Learner learner(small_config(LearnerKind::mfq), 21);
  RngStream rng(23);
  Transition t1 = make_transition(rng, 3, 4, /*terminal=*/true);
  t1.reward = 200.0;
  learner.buffer().push(t1);
  Transition t2 = make_transition(rng, 3, 4);
  t2.reward = 1.0;
  learner.buffer().push(t2);
  freeze_q_output(learner, {0.0, 0.0, 0.0, 0.0});  // target Q identically zero

  std::vector<double> ys = learner.td_targets({0, 1}, 0);
  CHECK(ys[0] == doctest::Approx(200.0));
  CHECK(ys[1] == doctest::Approx(1.0));  // r + gamma * 0
}

TEST_CASE("td_targets: hand-computed Boltzmann backup on a 2-action toy") {
  LearnerConfig cfg = small_config(LearnerKind::mfq, 2, 2);
  Learner learner(cfg, 29);
  freeze_q_output(learner, {0.7, -0.4});
  RngStream rng(31);
  Transition t = make_transition(rng, 2, 2);
  t.reward = 0.25;
  t.terminal = false;
  learner.buffer().push(t);

  // oracle: v = sum_a pi(a) q(a) with pi = softmax(beta (q - max))
  const double q0 = 0.7, q1 = -0.4, beta = cfg.beta;
  const double e0 = std::exp(beta * (q0 - q0)), e1 = std::exp(beta * (q1 - q0));
  const double pi0 = e0 / (e0 + e1), pi1 = e1 / (e0 + e1);
  const double want = 0.25 + cfg.gamma * (pi0 * q0 + pi1 * q1);
  CHECK(learner.td_targets({0}, 0)[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("q_update: already-consistent targets give zero loss and frozen params") {
  LearnerConfig cfg = small_config(LearnerKind::mfq, 2, 2);
  cfg.gamma = 0.0;  // y = r
  Learner learner(cfg, 37);
  freeze_q_output(learner, {0.5, 0.5});
  RngStream rng(41);
  Transition t = make_transition(rng, 2, 2, /*terminal=*/true);
  t.reward = 0.5;  // equals Q everywhere
  learner.buffer().push(t);

  nn::Tensor before = learner.online().value("qnet/fc3/b");
  const double loss = learner.q_update({0}, 0);
  CHECK(loss == doctest::Approx(0.0));
  for (size_t i = 0; i < before.size(); ++i)
    CHECK(learner.online().value("qnet/fc3/b")[i] == before[i]);
}

TEST_CASE("q_update: loss decreases on a frozen synthetic batch") {
  Learner learner(small_config(LearnerKind::mfq), 43);
  RngStream rng(47);
  std::vector<int> idx;
  for (int i = 0; i < 8; ++i) {
    learner.buffer().push(make_transition(rng, 3, 4, /*terminal=*/true));
    idx.push_back(i);
  }
  const double first = learner.q_loss(idx, 0);
  double last = first;
  for (int u = 0; u < 100; ++u) last = learner.q_update(idx, 0);
  CHECK(last < first);
  CHECK(learner.q_loss(idx, 0) < 0.5 * first);
  CHECK(learner.update_count() == 100);
}

TEST_CASE("q_update: analytic gradient matches finite differences at 1e-4") {
  Learner learner(small_config(LearnerKind::mfq), 53);
  RngStream rng(59);
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i) {
    learner.buffer().push(make_transition(rng, 3, 4, i % 2 == 0));
    idx.push_back(i);
  }
  learner.q_backward(idx, 0);
  nn::ParamStore& s = learner.online();
  std::vector<nn::Tensor> analytic;
  for (int i = 0; i < s.count(); ++i) analytic.push_back(s.grad(i));

  const double eps = 1e-6;
  for (int i = 0; i < s.count(); ++i) {
    nn::Tensor& v = s.value(i);
    for (size_t k = 0; k < v.size(); ++k) {
      const double keep = v[k];
      v[k] = keep + eps;
      const double up = learner.q_loss(idx, 0);
      v[k] = keep - eps;
      const double down = learner.q_loss(idx, 0);
      v[k] = keep;
      const double fd = (up - down) / (2.0 * eps);
      const double an = analytic[i][k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      CHECK(std::abs(fd - an) / denom < 1e-4);
    }
  }
}

TEST_CASE("q_update: no gradient ever reaches the target network") {
  Learner learner(small_config(LearnerKind::mfq), 61);
  RngStream rng(67);
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i) {
    learner.buffer().push(make_transition(rng, 3, 4));
    idx.push_back(i);
  }
  learner.q_backward(idx, 0);
  CHECK(learner.online().grad_norm() > 0.0);
  CHECK(learner.target().grad_norm() == 0.0);
}

TEST_CASE("gamfq: gradients reach the graph parameters through the recomputed mean") {
  LearnerConfig cfg = small_config(LearnerKind::gamfq, 6, 4);
  Learner learner(cfg, 71);
  RngStream rng(73);
  std::vector<int> idx;
  for (int i = 0; i < 6; ++i) {
    Transition t = make_transition(rng, 6, 4);
    const int n = 3;
    t.neighbor_ids = {i * 3 + 1, i * 3 + 2, i * 3 + 3};
    for (int j = 0; j < n; ++j) t.neighbor_actions.push_back(static_cast<int>(rng.next_below(4)));
    t.center_message.resize(cfg.hidden);
    t.neighbor_messages.resize(size_t(n) * cfg.hidden);
    for (auto& v : t.center_message) v = 2.0 * rng.next_double() - 1.0;
    for (auto& v : t.neighbor_messages) v = 2.0 * rng.next_double() - 1.0;
    learner.buffer().push(std::move(t));
    idx.push_back(i);
  }
  learner.q_backward(idx, /*noise_key=*/5);
  CHECK(learner.online().grad_norm("graph_attention") > 0.0);
  CHECK(learner.online().grad_norm("qnet") > 0.0);
}

TEST_CASE("mfac: zero advantage leaves the actor untouched") {
  LearnerConfig cfg = small_config(LearnerKind::mfac, 2, 2);
  Learner learner(cfg, 79);
  freeze_q_output(learner, {0.3, 0.3});  // equal Q => zero advantage
  // zero the actor so its probabilities are exactly (0.5, 0.5); the
  // advantage then cancels exactly instead of up to rounding
  for (int i = 0; i < learner.actor_store().count(); ++i)
    learner.actor_store().value(i).fill(0.0);
  RngStream rng(83);
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i) {
    learner.buffer().push(make_transition(rng, 2, 2));
    idx.push_back(i);
  }
  std::vector<nn::Tensor> before;
  nn::ParamStore& a = learner.actor_store();
  for (int i = 0; i < a.count(); ++i) before.push_back(a.value(i));
  learner.actor_update(idx);
  for (int i = 0; i < a.count(); ++i)
    for (size_t k = 0; k < before[i].size(); ++k) CHECK(a.value(i)[k] == before[i][k]);
}

TEST_CASE("mfac: bandit actor prefers the better action, monotonically") {
  LearnerConfig cfg = small_config(LearnerKind::mfac, 1, 2);
  cfg.lr = 1e-3;
  Learner learner(cfg, 89);
  freeze_q_output(learner, {1.0, 0.0});  // fixed critic preferring action 0
  RngStream rng(97);
  std::vector<int> idx;
  for (int i = 0; i < 8; ++i) {
    Transition t = make_transition(rng, 1, 2);
    t.action = i % 2;  // both actions appear in the batch
    learner.buffer().push(std::move(t));
    idx.push_back(i);
  }
  const std::vector<double> obs{0.5};
  const estimators::MeanAction mean(2, 0.5);
  double prev = learner.actor_probs(obs, mean)[0];
  bool crossed = false;
  for (int u = 0; u < 500; ++u) {
    learner.actor_update(idx);
    const double p0 = learner.actor_probs(obs, mean)[0];
    CHECK(p0 >= prev - 1e-9);
    prev = p0;
    if (p0 > 0.9) {
      crossed = true;
      break;
    }
  }
  CHECK(crossed);
  // actor outputs stay on the simplex
  const std::vector<double> probs = learner.actor_probs(obs, mean);
  CHECK(estimators::on_simplex(probs, 1e-9));
  Learner not_mfac(small_config(LearnerKind::mfq), 1);
  CHECK_THROWS_AS(not_mfac.actor_update({0}), std::logic_error);
}

TEST_CASE("mfac_update: one call steps both critic and actor") {
  LearnerConfig cfg = small_config(LearnerKind::mfac, 2, 2);
  Learner learner(cfg, 91);
  RngStream rng(93);
  std::vector<int> idx;
  for (int i = 0; i < 4; ++i) {
    learner.buffer().push(make_transition(rng, 2, 2, /*terminal=*/true));
    idx.push_back(i);
  }
  const nn::Tensor critic_before = learner.online().value("qnet/fc3/b");
  const nn::Tensor actor_before = learner.actor_store().value("actor/fc3/b");
  auto [critic_loss, actor_loss] = learner.mfac_update(idx, 0);
  CHECK(std::isfinite(critic_loss));
  CHECK(std::isfinite(actor_loss));
  CHECK(critic_loss >= 0.0);
  bool critic_moved = false, actor_moved = false;
  for (size_t k = 0; k < critic_before.size(); ++k)
    critic_moved |= learner.online().value("qnet/fc3/b")[k] != critic_before[k];
  for (size_t k = 0; k < actor_before.size(); ++k)
    actor_moved |= learner.actor_store().value("actor/fc3/b")[k] != actor_before[k];
  CHECK(critic_moved);
  CHECK(actor_moved);
}

TEST_CASE("determinism: identical seeds give identical loss sequences") {
  auto run = [](uint64_t seed) {
    Learner learner(small_config(LearnerKind::pomfq_for), seed);
    RngStream rng(101);
    std::vector<int> idx;
    for (int i = 0; i < 8; ++i) {
      learner.buffer().push(make_transition(rng, 3, 4, i % 3 == 0));
      idx.push_back(i);
    }
    std::vector<double> losses;
    for (int u = 0; u < 20; ++u) {
      losses.push_back(learner.q_update(idx, derive_key(7, {static_cast<uint64_t>(u)})));
      learner.soft_update_target();
    }
    return losses;
  };
  CHECK(run(5) == run(5));
  CHECK(run(5) != run(6));
}

TEST_CASE("learner checkpoints reload bit-exact parameters, actor included") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gamf_learner_ckpt";
  fs::create_directories(dir);

  for (LearnerKind kind : {LearnerKind::gamfq, LearnerKind::mfac}) {
    LearnerConfig cfg = small_config(kind, 5, 3);
    cfg.scenario_hash = 0xabcdef;
    Learner learner(cfg, 103);
    const std::string path = (dir / (kind_name(kind) + ".ckpt")).string();
    learner.save_checkpoint(path, {{"episode", 7}});
    nlohmann::json header;
    Learner loaded = Learner::load_checkpoint(path, &header);
    CHECK(header.at("episode").get<int>() == 7);
    CHECK(header.at("learner").at("kind").get<std::string>() == kind_name(kind));
    CHECK(header.at("replay_stats").at("capacity").get<int>() == 64);
    CHECK(loaded.config().scenario_hash == 0xabcdef);

    nn::ParamStore& a = learner.online();
    nn::ParamStore& b = loaded.online();
    REQUIRE(a.same_manifest(b));
    for (const std::string& n : a.manifest())
      for (size_t k = 0; k < a.value(a.index_of(n)).size(); ++k)
        CHECK(a.value(a.index_of(n))[k] == b.value(b.index_of(n))[k]);
    if (kind == LearnerKind::mfac) {
      nn::ParamStore& aa = learner.actor_store();
      nn::ParamStore& bb = loaded.actor_store();
      REQUIRE(aa.same_manifest(bb));
      for (const std::string& n : aa.manifest())
        for (size_t k = 0; k < aa.value(aa.index_of(n)).size(); ++k)
          CHECK(aa.value(aa.index_of(n))[k] == bb.value(bb.index_of(n))[k]);
    }

    // save -> load -> save with matching state is byte-identical
    const std::string path2 = (dir / (kind_name(kind) + "_again.ckpt")).string();
    loaded.save_checkpoint(path2, {{"episode", 7}});
    auto slurp = [](const std::string& p) {
      std::ifstream is(p, std::ios::binary);
      std::ostringstream ss;
      ss << is.rdbuf();
      return ss.str();
    };
    CHECK(slurp(path) == slurp(path2));
  }
  fs::remove_all(dir);
}
