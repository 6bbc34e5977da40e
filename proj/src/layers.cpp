#include "gamf/layers.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace gamf::nn {

std::pair<Ref, Ref> LstmCell::forward(Tape& t, ParamStore& s, Ref x, Ref h, Ref c,
                                      bool frozen) const {
  Ref z = t.add_row_broadcast(t.add(t.matmul(x, bind_param(t, s, wx, frozen)),
                                    t.matmul(h, bind_param(t, s, wh, frozen))),
                              bind_param(t, s, b, frozen));
  Ref i = t.sigmoid(t.slice_cols(z, 0, hidden));
  Ref f = t.sigmoid(t.slice_cols(z, hidden, hidden));
  Ref g = t.tanh_(t.slice_cols(z, 2 * hidden, hidden));
  Ref o = t.sigmoid(t.slice_cols(z, 3 * hidden, hidden));
  Ref c_next = t.add(t.mul(f, c), t.mul(i, g));
  Ref h_next = t.mul(o, t.tanh_(c_next));
  return {h_next, c_next};
}

Ref gat_layer(Tape& t, ParamStore& s, const GatWeights& gw, Ref messages,
              const Tensor& adjacency, bool frozen) {
  const Tensor& m = t.value(messages);
  const int n = m.rows();
  if (n == 0) throw std::invalid_argument("gat_layer: empty graph");
  if (adjacency.rows() != n || adjacency.cols() != n)
    throw std::invalid_argument("gat_layer: adjacency must be square and match node count");

  Ref ws = bind_param(t, s, gw.ws, frozen);
  Ref as = bind_param(t, s, gw.as, frozen);
  Ref p = t.matmul(messages, ws);  // n x D
  const int d = gw.dim;
  // a_S . [P_i || P_j] splits into u_i + w_j.
  Ref u = t.matmul(p, t.transpose(t.slice_cols(as, 0, d)));  // n x 1
  Ref w = t.matmul(p, t.transpose(t.slice_cols(as, d, d)));  // n x 1

  std::vector<Ref> features(n);
  for (int j = 0; j < n; ++j) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
      if (i == j || adjacency.at(j, i) != 0.0) idx.push_back(i);
    Ref srow = t.transpose(t.gather_rows(u, idx));                 // 1 x k
    srow = t.add_scalar(srow, t.gather_rows(w, {j}));
    Ref alpha = t.softmax_rows(t.leaky_relu(srow, 0.2));
    features[j] = t.elu(t.matmul(alpha, t.gather_rows(p, idx)));   // 1 x D
  }
  return t.vstack(features);
}

static Ref gumbel_core(Tape& t, Ref logits, double temperature, bool hard, Ref noise) {
  if (!(temperature > 0.0))
    throw std::invalid_argument("gumbel_softmax: temperature must be > 0");
  if (!t.value(logits).same_shape(t.value(noise)))
    throw std::invalid_argument("gumbel_softmax: noise shape mismatch");
  Ref soft = t.softmax_rows(t.scale(t.add(logits, noise), 1.0 / temperature));
  if (!hard) return soft;
  const Tensor& y = t.value(soft);
  Tensor onehot(y.rows(), y.cols());
  for (int r = 0; r < y.rows(); ++r) {
    int best = 0;
    for (int c = 1; c < y.cols(); ++c)
      if (y.at(r, c) > y.at(r, best)) best = c;
    onehot.at(r, best) = 1.0;
  }
  return t.straight_through(soft, std::move(onehot));
}

Ref gumbel_softmax_with_noise(Tape& t, Ref logits, double temperature, bool hard,
                              const Tensor& noise) {
  return gumbel_core(t, logits, temperature, hard, t.constant(noise));
}

Ref gumbel_softmax(Tape& t, Ref logits, double temperature, bool hard, RngStream& rng) {
  const Tensor& lv = t.value(logits);
  Tensor noise(lv.rows(), lv.cols());
  for (size_t i = 0; i < noise.size(); ++i) noise[i] = rng.next_gumbel();
  return gumbel_core(t, logits, temperature, hard, t.constant(std::move(noise)));
}

double GradCheckReport::max_rel_err() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.max_rel_err);
  return m;
}

bool GradCheckReport::pass() const { return max_rel_err() < tolerance; }

std::string GradCheckReport::to_string() const {
  std::ostringstream os;
  for (const auto& r : rows) {
    os << (r.max_rel_err < tolerance ? "  ok   " : "  FAIL ") << r.param
       << "  max_rel_err=" << r.max_rel_err << "\n";
  }
  os << (pass() ? "pass" : "FAIL") << " (tolerance " << tolerance << ")\n";
  return os.str();
}

GradCheckReport grad_check(const LossBuilder& build, ParamStore& store, double tolerance,
                           double fd_eps) {
  GradCheckReport report;
  report.tolerance = tolerance;

  // Analytic gradients.
  store.zero_grads();
  {
    Tape t;
    Ref loss = build(t, store);
    t.backward(loss);
  }
  std::vector<Tensor> analytic;
  analytic.reserve(store.count());
  for (int i = 0; i < store.count(); ++i) analytic.push_back(store.grad(i));

  auto eval = [&]() {
    Tape t;
    return t.value(build(t, store)).at(0, 0);
  };

  for (int i = 0; i < store.count(); ++i) {
    GradCheckRow row;
    row.param = store.name(i);
    Tensor& v = store.value(i);
    for (size_t k = 0; k < v.size(); ++k) {
      const double keep = v[k];
      v[k] = keep + fd_eps;
      const double up = eval();
      v[k] = keep - fd_eps;
      const double down = eval();
      v[k] = keep;
      const double fd = (up - down) / (2.0 * fd_eps);
      const double an = analytic[i][k];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-6});
      row.max_rel_err = std::max(row.max_rel_err, std::abs(fd - an) / denom);
    }
    report.rows.push_back(std::move(row));
  }
  store.zero_grads();
  return report;
}

}  // namespace gamf::nn
