#pragma once

#include <functional>
#include <string>
#include <utility>

#include "gamf/params.hpp"
#include "gamf/rng.hpp"
#include "gamf/tape.hpp"

namespace gamf::nn {

// Bind a stored parameter onto the tape; frozen params join as plain
// constants so no gradient is tracked through them.
inline Ref bind_param(Tape& t, ParamStore& s, const std::string& name, bool frozen) {
  return frozen ? t.borrow(s.value(s.index_of(name))) : t.param(s, name);
}

struct FcLayer {
  std::string w, b;
  int in = 0, out = 0;

  FcLayer() = default;
  FcLayer(const std::string& prefix, int in_dim, int out_dim)
      : w(prefix + "/w"), b(prefix + "/b"), in(in_dim), out(out_dim) {}

  void init(ParamStore& s, RngStream& rng) const {
    s.add(w, uniform_init(in, out, in, rng));
    s.add(b, Tensor(1, out));
  }
  // y = x W + b
  Ref forward(Tape& t, ParamStore& s, Ref x, bool frozen = false) const {
    return t.add_row_broadcast(t.matmul(x, bind_param(t, s, w, frozen)),
                               bind_param(t, s, b, frozen));
  }
};

// Standard LSTM cell, gates ordered (input, forget, cell, output).
struct LstmCell {
  std::string wx, wh, b;
  int in = 0, hidden = 0;

  LstmCell() = default;
  LstmCell(const std::string& prefix, int in_dim, int hidden_dim)
      : wx(prefix + "/wx"), wh(prefix + "/wh"), b(prefix + "/b"), in(in_dim), hidden(hidden_dim) {}

  void init(ParamStore& s, RngStream& rng) const {
    s.add(wx, uniform_init(in, 4 * hidden, in, rng));
    s.add(wh, uniform_init(hidden, 4 * hidden, hidden, rng));
    Tensor bias(1, 4 * hidden);
    for (int j = hidden; j < 2 * hidden; ++j) bias.at(0, j) = 1.0;  // forget gate
    s.add(b, std::move(bias));
  }
  // returns (h', c')
  std::pair<Ref, Ref> forward(Tape& t, ParamStore& s, Ref x, Ref h, Ref c,
                              bool frozen = false) const;
};

struct GatWeights {
  std::string ws, as;  // W_S is D x D, a_S is 1 x 2D
  int dim = 0;

  GatWeights() = default;
  GatWeights(const std::string& prefix, int d)
      : ws(prefix + "/ws"), as(prefix + "/as"), dim(d) {}

  void init(ParamStore& s, RngStream& rng) const {
    s.add(ws, uniform_init(dim, dim, dim, rng));
    s.add(as, uniform_init(1, 2 * dim, 2 * dim, rng));
  }
};

// Graph-attention layer over n node messages. Scores are
// LeakyReLU(a_S . [W_S m_i || W_S m_j]) with slope 0.2, the softmax for
// node j runs over its observable in-neighbours plus the forced
// self-loop, and node features come out through an ELU.
// adjacency(j, i) != 0 marks i as a neighbour of j.
Ref gat_layer(Tape& t, ParamStore& s, const GatWeights& gw, Ref messages,
              const Tensor& adjacency, bool frozen = false);

struct Mlp2 {
  std::string w1, b1, w2, b2;
  int in = 0, hidden = 0, out = 0;

  Mlp2() = default;
  Mlp2(const std::string& prefix, int in_dim, int hidden_dim, int out_dim)
      : w1(prefix + "/w1"), b1(prefix + "/b1"), w2(prefix + "/w2"), b2(prefix + "/b2"),
        in(in_dim), hidden(hidden_dim), out(out_dim) {}

  void init(ParamStore& s, RngStream& rng) const {
    s.add(w1, uniform_init(in, hidden, in, rng));
    s.add(b1, Tensor(1, hidden));
    s.add(w2, uniform_init(hidden, out, hidden, rng));
    s.add(b2, Tensor(1, out));
  }
  Ref forward(Tape& t, ParamStore& s, Ref x, bool frozen = false) const {
    Ref h = t.relu(t.add_row_broadcast(t.matmul(x, bind_param(t, s, w1, frozen)),
                                       bind_param(t, s, b1, frozen)));
    return t.add_row_broadcast(t.matmul(h, bind_param(t, s, w2, frozen)),
                               bind_param(t, s, b2, frozen));
  }
};

// y = softmax((logits + noise) / temperature), row-wise. In hard mode the
// forward value is the one-hot argmax while gradients follow the soft
// surrogate (straight-through).
Ref gumbel_softmax_with_noise(Tape& t, Ref logits, double temperature, bool hard,
                              const Tensor& noise);
Ref gumbel_softmax(Tape& t, Ref logits, double temperature, bool hard, RngStream& rng);

// Gradient checking against central finite differences.
struct GradCheckRow {
  std::string param;
  double max_rel_err = 0.0;
};
struct GradCheckReport {
  double tolerance = 0.0;
  std::vector<GradCheckRow> rows;
  double max_rel_err() const;
  bool pass() const;
  std::string to_string() const;
};
using LossBuilder = std::function<Ref(Tape&, ParamStore&)>;
GradCheckReport grad_check(const LossBuilder& build, ParamStore& store, double tolerance,
                           double fd_eps = 1e-6);

}  // namespace gamf::nn
