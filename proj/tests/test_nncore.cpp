#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gamf/checkpoint.hpp"
#include "gamf/layers.hpp"
#include "gamf/params.hpp"
#include "gamf/rng.hpp"
#include "gamf/tape.hpp"

using namespace gamf;
using nn::Ref;
using nn::Tape;
using nn::Tensor;

namespace {

// Independent oracle: plain triple-loop matrix product.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (int k = 0; k < a.cols(); ++k) s += a.at(i, k) * b.at(k, j);
      c.at(i, j) = s;
    }
  return c;
}

Tensor random_tensor(int rows, int cols, RngStream& rng, double scale = 1.0) {
  Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_double() - 1.0) * scale;
  return t;
}

double read_file_bytes(const std::string& path, std::string* out) {
  std::ifstream is(path, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  *out = ss.str();
  return double(out->size());
}

// Upper 1% chi-squared critical value (Wilson-Hilferty approximation).
double chi2_crit_99(int df) {
  const double z = 2.3263478740408408;
  const double t = 1.0 - 2.0 / (9.0 * df) + z * std::sqrt(2.0 / (9.0 * df));
  return df * t * t * t;
}

}  // namespace

TEST_CASE("rng: streams are deterministic and children independent") {
  RngStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream c = RngStream(42).child(1);
  RngStream d = RngStream(42).child(2);
  CHECK(c.next_u64() != d.next_u64());
}

TEST_CASE("rng: next_below is uniform (chi-squared at 1%)") {
  RngStream rng(7);
  const int bins = 16, n = 160000;
  std::vector<int> counts(bins, 0);
  for (int i = 0; i < n; ++i) counts[rng.next_below(bins)]++;
  const double expect = double(n) / bins;
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < chi2_crit_99(bins - 1));
}

TEST_CASE("rng: gamma sampling matches moments for both shape regimes") {
  RngStream rng(11);
  for (double shape : {2.5, 0.5}) {
    const int n = 40000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const double g = rng.next_gamma(shape);
      CHECK(g > 0.0);
      sum += g;
      sq += g * g;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(mean == doctest::Approx(shape).epsilon(0.05));
    CHECK(var == doctest::Approx(shape).epsilon(0.10));
  }
  CHECK_THROWS_AS(rng.next_gamma(0.0), std::invalid_argument);
}

TEST_CASE("tape: matmul matches the naive oracle") {
  RngStream rng(1);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor(3 + trial, 4, rng);
    Tensor b = random_tensor(4, 2 + trial, rng);
    Tensor want = naive_matmul(a, b);
    Tape t;
    const Tensor& got = t.value(t.matmul(t.constant(a), t.constant(b)));
    REQUIRE(got.same_shape(want));
    for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("fc: identity weights pass through, zero input returns bias") {
  nn::ParamStore s;
  nn::FcLayer fc("fc", 3, 3);
  RngStream rng(3);
  fc.init(s, rng);
  Tensor& w = s.value("fc/w");
  w.fill(0.0);
  for (int i = 0; i < 3; ++i) w.at(i, i) = 1.0;

  Tape t;
  Tensor x = random_tensor(2, 3, rng);
  const Tensor& y = t.value(fc.forward(t, s, t.constant(x)));
  for (size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]));

  Tensor& b = s.value("fc/b");
  for (int j = 0; j < 3; ++j) b.at(0, j) = j + 0.5;
  Tape t2;
  const Tensor& yb = t2.value(fc.forward(t2, s, t2.constant(Tensor(2, 3))));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j) CHECK(yb.at(i, j) == doctest::Approx(b.at(0, j)));
}

TEST_CASE("fc: random case matches the naive oracle") {
  nn::ParamStore s;
  nn::FcLayer fc("fc", 5, 4);
  RngStream rng(5);
  fc.init(s, rng);
  Tensor x = random_tensor(3, 5, rng);
  Tensor want = naive_matmul(x, s.value("fc/w"));
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) want.at(i, j) += s.value("fc/b").at(0, j);
  Tape t;
  const Tensor& got = t.value(fc.forward(t, s, t.constant(x)));
  for (size_t i = 0; i < want.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
}

TEST_CASE("lstm: zero parameters give the hand-derived half-decay") {
  nn::ParamStore s;
  nn::LstmCell cell("lstm", 3, 4);
  RngStream rng(7);
  cell.init(s, rng);
  s.value("lstm/wx").fill(0.0);
  s.value("lstm/wh").fill(0.0);
  s.value("lstm/b").fill(0.0);  // including the +1 forget bias

  Tensor c0 = random_tensor(2, 4, rng);
  Tape t;
  auto [h1, c1] = cell.forward(t, s, t.constant(Tensor(2, 3)), t.constant(Tensor(2, 4)),
                               t.constant(c0));
  const Tensor& cv = t.value(c1);
  const Tensor& hv = t.value(h1);
  for (size_t i = 0; i < c0.size(); ++i) {
    CHECK(cv[i] == doctest::Approx(0.5 * c0[i]).epsilon(1e-12));
    CHECK(hv[i] == doctest::Approx(0.5 * std::tanh(0.5 * c0[i])).epsilon(1e-12));
  }
}

TEST_CASE("lstm: fresh init carries the +1 forget-gate bias") {
  nn::ParamStore s;
  nn::LstmCell cell("lstm", 2, 3);
  RngStream rng(9);
  cell.init(s, rng);
  const nn::Tensor& b = s.value("lstm/b");
  for (int j = 0; j < 12; ++j)
    CHECK(b.at(0, j) == (j >= 3 && j < 6 ? 1.0 : 0.0));
}

TEST_CASE("lstm: all-zero inputs and parameters stay at zero") {
  nn::ParamStore s;
  nn::LstmCell cell("lstm", 2, 3);
  RngStream rng(9);
  cell.init(s, rng);
  s.value("lstm/wx").fill(0.0);
  s.value("lstm/wh").fill(0.0);
  s.value("lstm/b").fill(0.0);
  Tape t;
  auto [h1, c1] = cell.forward(t, s, t.constant(Tensor(1, 2)), t.constant(Tensor(1, 3)),
                               t.constant(Tensor(1, 3)));
  for (size_t i = 0; i < t.value(h1).size(); ++i) {
    CHECK(t.value(h1)[i] == 0.0);
    CHECK(t.value(c1)[i] == 0.0);
  }
}

TEST_CASE("backward: sum of parameters gives all-ones gradient, constants give zero") {
  nn::ParamStore s;
  RngStream rng(13);
  s.add("p", random_tensor(3, 2, rng));
  {
    Tape t;
    Ref loss = t.sum_all(t.param(s, "p"));
    t.backward(loss);
    for (size_t i = 0; i < s.grad("p").size(); ++i) CHECK(s.grad("p")[i] == 1.0);
  }
  s.zero_grads();
  {
    Tape t;
    Ref loss = t.sum_all(t.constant(Tensor(1, 1)));
    t.backward(loss);
    for (size_t i = 0; i < s.grad("p").size(); ++i) CHECK(s.grad("p")[i] == 0.0);
  }
}

TEST_CASE("backward: tape cannot be consumed twice") {
  nn::ParamStore s;
  RngStream rng(1);
  s.add("p", random_tensor(1, 1, rng));
  Tape t;
  Ref loss = t.sum_all(t.param(s, "p"));
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), std::logic_error);
  t.reset();
}

TEST_CASE("backward: composite FC-ReLU-FC matches a local finite-difference oracle") {
  nn::ParamStore s;
  nn::FcLayer fc1("fc1", 4, 6), fc2("fc2", 6, 3);
  RngStream rng(17);
  fc1.init(s, rng);
  fc2.init(s, rng);
  Tensor x = random_tensor(5, 4, rng);

  auto loss_value = [&]() {
    Tape t;
    Ref y = fc2.forward(t, s, t.relu(fc1.forward(t, s, t.constant(x))));
    return t.value(t.mean_all(t.mul(y, y))).at(0, 0);
  };

  s.zero_grads();
  {
    Tape t;
    Ref y = fc2.forward(t, s, t.relu(fc1.forward(t, s, t.constant(x))));
    t.backward(t.mean_all(t.mul(y, y)));
  }
  const double eps = 1e-6;
  for (const char* name : {"fc1/w", "fc1/b", "fc2/w", "fc2/b"}) {
    Tensor& v = s.value(name);
    const Tensor& g = s.grad(name);
    for (size_t k = 0; k < v.size(); ++k) {
      const double keep = v[k];
      v[k] = keep + eps;
      const double up = loss_value();
      v[k] = keep - eps;
      const double down = loss_value();
      v[k] = keep;
      const double fd = (up - down) / (2.0 * eps);
      const double denom = std::max({std::abs(fd), std::abs(g[k]), 1e-6});
      CHECK(std::abs(fd - g[k]) / denom < 1e-5);
    }
  }
}

TEST_CASE("softmax rows sum to one within 1e-12") {
  RngStream rng(19);
  Tape t;
  const Tensor& y = t.value(t.softmax_rows(t.constant(random_tensor(20, 7, rng, 10.0))));
  for (int r = 0; r < y.rows(); ++r) {
    double sum = 0.0;
    for (int c = 0; c < y.cols(); ++c) {
      CHECK(y.at(r, c) >= 0.0);
      sum += y.at(r, c);
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("gat: a node with no neighbours attends only to itself") {
  nn::ParamStore s;
  nn::GatWeights gw("gat", 4);
  RngStream rng(23);
  gw.init(s, rng);
  Tensor m = random_tensor(3, 4, rng);
  Tensor adj(3, 3);  // no edges at all
  Tape t;
  const Tensor& feats = t.value(nn::gat_layer(t, s, gw, t.constant(m), adj));

  // Oracle: e_j = ELU(W_S m_j) when the softmax collapses to the self-loop.
  Tape t2;
  const Tensor& wm = t2.value(t2.matmul(t2.constant(m), t2.param(s, "gat/ws")));
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 4; ++k) {
      const double x = wm.at(j, k);
      const double want = x > 0.0 ? x : std::expm1(x);
      CHECK(feats.at(j, k) == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("gat: identical messages split attention evenly") {
  nn::ParamStore s;
  nn::GatWeights gw("gat", 5);
  RngStream rng(29);
  gw.init(s, rng);
  Tensor one = random_tensor(1, 5, rng);
  Tensor m(3, 5);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 5; ++j) m.at(i, j) = one.at(0, j);
  Tensor adj(3, 3);
  adj.fill(1.0);

  Tape t;
  const Tensor& feats = t.value(nn::gat_layer(t, s, gw, t.constant(m), adj));
  // With alpha = 1/3 each and identical messages, output equals the
  // single-node case.
  Tensor self_adj(1, 1);
  Tape t2;
  const Tensor& solo = t2.value(nn::gat_layer(t2, s, gw, t2.constant(one), self_adj));
  for (int j = 0; j < 3; ++j)
    for (int k = 0; k < 5; ++k) CHECK(feats.at(j, k) == doctest::Approx(solo.at(0, k)).epsilon(1e-12));
}

TEST_CASE("gat: non-neighbour messages cannot influence a node") {
  nn::ParamStore s;
  nn::GatWeights gw("gat", 4);
  RngStream rng(31);
  gw.init(s, rng);
  Tensor m = random_tensor(5, 4, rng);
  Tensor adj(5, 5);
  adj.at(0, 1) = 1.0;  // node 0 sees only node 1
  Tape t;
  Tensor before = t.value(nn::gat_layer(t, s, gw, t.constant(m), adj));
  m.at(3, 0) += 10.0;  // node 3 is invisible to node 0
  Tape t2;
  Tensor after = t2.value(nn::gat_layer(t2, s, gw, t2.constant(m), adj));
  for (int k = 0; k < 4; ++k) CHECK(before.at(0, k) == after.at(0, k));
  CHECK_THROWS_AS((void)nn::gat_layer(t2, s, gw, t2.constant(m), Tensor(4, 5)),
                  std::invalid_argument);
}

TEST_CASE("gumbel: hard outputs are exactly one-hot and soft stays on the simplex") {
  RngStream rng(37);
  Tape t;
  Ref logits = t.constant(random_tensor(50, 2, rng, 3.0));
  RngStream noise(101);
  Ref hard = nn::gumbel_softmax(t, logits, 0.5, /*hard=*/true, noise);
  const Tensor& hv = t.value(hard);
  for (int r = 0; r < hv.rows(); ++r) {
    CHECK(hv.at(r, 0) + hv.at(r, 1) == 1.0);
    CHECK((hv.at(r, 0) == 1.0 || hv.at(r, 1) == 1.0));
  }
  RngStream noise2(101);
  Ref soft = nn::gumbel_softmax(t, logits, 0.5, /*hard=*/false, noise2);
  const Tensor& sv = t.value(soft);
  for (int r = 0; r < sv.rows(); ++r)
    CHECK(std::abs(sv.at(r, 0) + sv.at(r, 1) - 1.0) < 1e-12);
  CHECK_THROWS_AS(nn::gumbel_softmax(t, logits, 0.0, true, noise2), std::invalid_argument);
}

TEST_CASE("gumbel: +5 logit gap selects the favoured class at least 95% of draws") {
  // Monte-Carlo oracle on the Gumbel-max identity: P = 1/(1+e^-5) ~ 0.9933.
  RngStream noise(43);
  int chosen = 0;
  const int n = 10000;
  Tensor logits(1, 2);
  logits.at(0, 0) = 5.0;
  for (int i = 0; i < n; ++i) {
    Tape t;
    const Tensor& y = t.value(nn::gumbel_softmax(t, t.constant(logits), 0.5, true, noise));
    chosen += y.at(0, 0) == 1.0;
  }
  CHECK(chosen >= int(0.95 * n));
}

TEST_CASE("gumbel: equal logits split 50/50 within 2%") {
  RngStream noise(47);
  int chosen = 0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Tape t;
    const Tensor& y = t.value(nn::gumbel_softmax(t, t.constant(Tensor(1, 2)), 0.5, true, noise));
    chosen += y.at(0, 0) == 1.0;
  }
  CHECK(std::abs(chosen / double(n) - 0.5) < 0.02);
}

TEST_CASE("adam: zero gradients leave parameters unchanged; counter increments") {
  nn::ParamStore s;
  RngStream rng(53);
  s.add("p", random_tensor(2, 2, rng));
  Tensor before = s.value("p");
  CHECK(s.steps() == 0);
  s.adam_step(1e-2);
  CHECK(s.steps() == 1);
  for (size_t i = 0; i < before.size(); ++i) CHECK(s.value("p")[i] == before[i]);
}

TEST_CASE("adam: constant unit gradient converges to lr-sized steps") {
  nn::ParamStore s;
  s.add("p", Tensor(1, 1));
  const double lr = 1e-3;
  double prev = 0.0;
  double delta = 0.0;
  for (int i = 0; i < 200; ++i) {
    s.grad("p").at(0, 0) = 1.0;
    prev = s.value("p").at(0, 0);
    s.adam_step(lr);
    delta = std::abs(s.value("p").at(0, 0) - prev);
    CHECK(s.grad("p").at(0, 0) == 0.0);  // zeroed by the step
  }
  CHECK(delta == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("soft_update: tau endpoints and midpoint arithmetic") {
  nn::ParamStore online, target;
  online.add("p", Tensor(1, 1, {2.0}));
  target.add("p", Tensor(1, 1, {0.0}));
  nn::ParamStore t1 = target.snapshot();
  nn::soft_update(online, t1, 1.0);
  CHECK(t1.value("p").at(0, 0) == 2.0);
  nn::ParamStore t2 = target.snapshot();
  nn::soft_update(online, t2, 0.0);
  CHECK(t2.value("p").at(0, 0) == 0.0);
  nn::ParamStore t3 = target.snapshot();
  nn::soft_update(online, t3, 0.5);
  CHECK(t3.value("p").at(0, 0) == 1.0);
  nn::ParamStore other;
  other.add("q", Tensor(1, 1));
  CHECK_THROWS_AS(nn::soft_update(online, other, 0.5), std::invalid_argument);
}

TEST_CASE("grad_check: fc and lstm pass at 1e-5, gat+gumbel soft at 1e-4") {
  RngStream rng(59);

  {
    nn::ParamStore s;
    nn::FcLayer fc("fc", 4, 3);
    fc.init(s, rng);
    Tensor x = random_tensor(2, 4, rng);
    auto report = nn::grad_check(
        [&](Tape& t, nn::ParamStore& ps) {
          Ref y = fc.forward(t, ps, t.constant(x));
          return t.mean_all(t.mul(y, y));
        },
        s, 1e-5);
    INFO(report.to_string());
    CHECK(report.pass());
  }

  {
    nn::ParamStore s;
    nn::LstmCell cell("lstm", 3, 4);
    cell.init(s, rng);
    Tensor x = random_tensor(2, 3, rng);
    Tensor h = random_tensor(2, 4, rng);
    Tensor c = random_tensor(2, 4, rng);
    auto report = nn::grad_check(
        [&](Tape& t, nn::ParamStore& ps) {
          auto [hn, cn] = cell.forward(t, ps, t.constant(x), t.constant(h), t.constant(c));
          return t.mean_all(t.add(t.mul(hn, hn), t.mul(cn, cn)));
        },
        s, 1e-5);
    INFO(report.to_string());
    CHECK(report.pass());
  }

  {
    nn::ParamStore s;
    nn::GatWeights gw("gat", 4);
    nn::Mlp2 mlp("mlp", 8, 6, 2);
    gw.init(s, rng);
    mlp.init(s, rng);
    Tensor m = random_tensor(4, 4, rng);
    Tensor adj(4, 4);
    adj.fill(1.0);
    Tensor noise(3, 2);
    for (size_t i = 0; i < noise.size(); ++i) noise[i] = rng.next_gumbel();
    auto report = nn::grad_check(
        [&](Tape& t, nn::ParamStore& ps) {
          Ref feats = nn::gat_layer(t, ps, gw, t.constant(m), adj);
          Ref center = t.gather_rows(feats, {0});
          Ref others = t.gather_rows(feats, {1, 2, 3});
          Ref stacked = t.concat_cols(others, t.repeat_row(center, 3));
          Ref logits = mlp.forward(t, ps, stacked);
          Ref soft = nn::gumbel_softmax_with_noise(t, logits, 0.5, /*hard=*/false, noise);
          return t.mean_all(t.mul(soft, soft));
        },
        s, 1e-4);
    INFO(report.to_string());
    CHECK(report.pass());
  }
}

TEST_CASE("straight-through: gradients flow through the soft surrogate") {
  nn::ParamStore s;
  RngStream rng(61);
  s.add("logits", random_tensor(3, 2, rng));
  Tensor noise(3, 2);
  for (size_t i = 0; i < noise.size(); ++i) noise[i] = rng.next_gumbel();
  Tape t;
  Ref hard = nn::gumbel_softmax_with_noise(t, t.param(s, "logits"), 0.5, true, noise);
  t.backward(t.mean_all(t.mul(hard, hard)));
  CHECK(s.grad_norm() > 0.0);
}

TEST_CASE("checkpoint: save -> load -> save is byte-identical") {
  nn::ParamStore s;
  RngStream rng(67);
  s.add("a/w", random_tensor(3, 5, rng));
  s.add("b/w", random_tensor(2, 2, rng));
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "gamf_ckpt_test";
  fs::create_directories(dir);
  const std::string p1 = (dir / "one.ckpt").string();
  const std::string p2 = (dir / "two.ckpt").string();
  nlohmann::json extras{{"scenario_hash", 1234u}};
  nn::save_checkpoint(p1, s, extras);
  nlohmann::json header;
  nn::ParamStore loaded = nn::load_checkpoint(p1, &header);
  CHECK(header.at("scenario_hash").get<uint64_t>() == 1234u);
  nn::save_checkpoint(p2, loaded, extras);
  std::string b1, b2;
  read_file_bytes(p1, &b1);
  read_file_bytes(p2, &b2);
  REQUIRE(!b1.empty());
  CHECK(b1 == b2);
  fs::remove_all(dir);
}

TEST_CASE("param store: full serialization round-trips moments and steps") {
  nn::ParamStore s;
  RngStream rng(71);
  s.add("p", random_tensor(2, 3, rng));
  s.grad("p").fill(0.25);
  s.adam_step(1e-3);
  std::ostringstream os(std::ios::binary);
  s.write_full(os);
  std::istringstream is(os.str(), std::ios::binary);
  nn::ParamStore r = nn::ParamStore::read_full(is);
  CHECK(r.steps() == s.steps());
  REQUIRE(r.same_manifest(s));
  for (size_t i = 0; i < s.value("p").size(); ++i) CHECK(r.value("p")[i] == s.value("p")[i]);
}
