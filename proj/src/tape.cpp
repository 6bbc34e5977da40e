#include "gamf/tape.hpp"

#include <cmath>
#include <stdexcept>

#include "gamf/params.hpp"

namespace gamf::nn {

namespace {

void shape_check(bool ok, const char* op) {
  if (!ok) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

void Tape::check(Ref r) const {
  if (r.idx < 0 || r.idx >= static_cast<int>(nodes_.size()))
    throw std::invalid_argument("Tape: invalid ref");
}

Tensor& Tape::grad_buf(int i) {
  Node& n = nodes_[i];
  if (n.grad.size() == 0) {
    const Tensor& v = val(i);
    n.grad = Tensor(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::add_grad(int i, const Tensor& g) {
  Tensor& dst = grad_buf(i);
  for (size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
}

int Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  if (requires_grad) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Ref Tape::constant(Tensor v) { return Ref{push(std::move(v), false, nullptr)}; }

Ref Tape::borrow(const Tensor& v) {
  Node n;
  n.borrowed = &v;
  nodes_.push_back(std::move(n));
  return Ref{static_cast<int>(nodes_.size()) - 1};
}

Ref Tape::param(ParamStore& store, int entry) {
  Node n;
  n.borrowed = &store.value(entry);
  n.requires_grad = true;
  n.store = &store;
  n.entry = entry;
  nodes_.push_back(std::move(n));
  return Ref{static_cast<int>(nodes_.size()) - 1};
}

Ref Tape::param(ParamStore& store, const std::string& name) {
  return param(store, store.index_of(name));
}

const Tensor& Tape::grad_of(Ref r) const {
  check(r);
  return nodes_[r.idx].grad;
}

Ref Tape::matmul(Ref a, Ref b) {
  check(a);
  check(b);
  const Tensor& av = val(a.idx);
  const Tensor& bv = val(b.idx);
  shape_check(av.cols() == bv.rows(), "matmul");
  Tensor out(av.rows(), bv.cols());
  matmul_acc(av, bv, out);
  const bool rg = wants_grad(a) || wants_grad(b);
  return Ref{push(std::move(out), rg, [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.val(a.idx);
    const Tensor& bv = t.val(b.idx);
    if (t.wants_grad(a)) {
      // dA += G * B^T
      Tensor& da = t.grad_buf(a.idx);
      const int n = g.rows(), m = g.cols(), k = av.cols();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < k; ++j) {
          double s = 0.0;
          const double* gi = g.data() + size_t(i) * m;
          const double* bj = bv.data() + size_t(j) * m;
          for (int c = 0; c < m; ++c) s += gi[c] * bj[c];
          da.at(i, j) += s;
        }
    }
    if (t.wants_grad(b)) {
      // dB += A^T * G
      Tensor& db = t.grad_buf(b.idx);
      const int n = g.rows(), m = g.cols(), k = av.cols();
      for (int i = 0; i < n; ++i) {
        const double* ai = av.data() + size_t(i) * k;
        const double* gi = g.data() + size_t(i) * m;
        for (int j = 0; j < k; ++j) {
          const double aij = ai[j];
          if (aij == 0.0) continue;
          double* dbj = db.data() + size_t(j) * m;
          for (int c = 0; c < m; ++c) dbj[c] += aij * gi[c];
        }
      }
    }
  })};
}

Ref Tape::transpose(Ref a) {
  check(a);
  const Tensor& av = val(a.idx);
  Tensor out(av.cols(), av.rows());
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < av.cols(); ++j) out.at(j, i) = av.at(i, j);
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buf(a.idx);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) da.at(j, i) += g.at(i, j);
  })};
}

Ref Tape::add(Ref a, Ref b) {
  check(a);
  check(b);
  const Tensor& av = val(a.idx);
  const Tensor& bv = val(b.idx);
  shape_check(av.same_shape(bv), "add");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return Ref{push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) t.add_grad(a.idx, g);
    if (t.wants_grad(b)) t.add_grad(b.idx, g);
  })};
}

Ref Tape::sub(Ref a, Ref b) {
  check(a);
  check(b);
  const Tensor& av = val(a.idx);
  const Tensor& bv = val(b.idx);
  shape_check(av.same_shape(bv), "sub");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return Ref{push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) t.add_grad(a.idx, g);
    if (t.wants_grad(b)) {
      Tensor& db = t.grad_buf(b.idx);
      for (size_t i = 0; i < db.size(); ++i) db[i] -= g[i];
    }
  })};
}

Ref Tape::mul(Ref a, Ref b) {
  check(a);
  check(b);
  const Tensor& av = val(a.idx);
  const Tensor& bv = val(b.idx);
  shape_check(av.same_shape(bv), "mul");
  Tensor out = av;
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return Ref{push(std::move(out), wants_grad(a) || wants_grad(b), [a, b](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& av = t.val(a.idx);
    const Tensor& bv = t.val(b.idx);
    if (t.wants_grad(a)) {
      Tensor& da = t.grad_buf(a.idx);
      for (size_t i = 0; i < da.size(); ++i) da[i] += g[i] * bv[i];
    }
    if (t.wants_grad(b)) {
      Tensor& db = t.grad_buf(b.idx);
      for (size_t i = 0; i < db.size(); ++i) db[i] += g[i] * av[i];
    }
  })};
}

Ref Tape::scale(Ref a, double s) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i) out[i] *= s;
  return Ref{push(std::move(out), wants_grad(a), [a, s](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += s * g[i];
  })};
}

Ref Tape::add_row_broadcast(Ref x, Ref bias) {
  check(x);
  check(bias);
  const Tensor& xv = val(x.idx);
  const Tensor& bv = val(bias.idx);
  shape_check(bv.rows() == 1 && bv.cols() == xv.cols(), "add_row_broadcast");
  Tensor out = xv;
  for (int i = 0; i < out.rows(); ++i)
    for (int j = 0; j < out.cols(); ++j) out.at(i, j) += bv.at(0, j);
  return Ref{push(std::move(out), wants_grad(x) || wants_grad(bias),
                  [x, bias](Tape& t, int self) {
                    const Tensor& g = t.nodes_[self].grad;
                    if (t.wants_grad(x)) t.add_grad(x.idx, g);
                    if (t.wants_grad(bias)) {
                      Tensor& db = t.grad_buf(bias.idx);
                      for (int i = 0; i < g.rows(); ++i)
                        for (int j = 0; j < g.cols(); ++j) db.at(0, j) += g.at(i, j);
                    }
                  })};
}

Ref Tape::add_scalar(Ref a, Ref s) {
  check(a);
  check(s);
  const Tensor& sv = val(s.idx);
  shape_check(sv.rows() == 1 && sv.cols() == 1, "add_scalar");
  Tensor out = val(a.idx);
  const double c = sv.at(0, 0);
  for (size_t i = 0; i < out.size(); ++i) out[i] += c;
  return Ref{push(std::move(out), wants_grad(a) || wants_grad(s), [a, s](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) t.add_grad(a.idx, g);
    if (t.wants_grad(s)) {
      double sum = 0.0;
      for (size_t i = 0; i < g.size(); ++i) sum += g[i];
      t.grad_buf(s.idx).at(0, 0) += sum;
    }
  })};
}

Ref Tape::div_scalar(Ref a, Ref s) {
  check(a);
  check(s);
  const Tensor& sv = val(s.idx);
  shape_check(sv.rows() == 1 && sv.cols() == 1, "div_scalar");
  const double d = sv.at(0, 0);
  if (d == 0.0) throw std::domain_error("div_scalar: division by zero");
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i) out[i] /= d;
  return Ref{push(std::move(out), wants_grad(a) || wants_grad(s), [a, s](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    const double d = t.val(s.idx).at(0, 0);
    if (t.wants_grad(a)) {
      Tensor& da = t.grad_buf(a.idx);
      for (size_t i = 0; i < da.size(); ++i) da[i] += g[i] / d;
    }
    if (t.wants_grad(s)) {
      double sum = 0.0;
      for (size_t i = 0; i < g.size(); ++i) sum += g[i] * y[i];
      t.grad_buf(s.idx).at(0, 0) -= sum / d;
    }
  })};
}

// Unary activations; backward derivatives recovered from the output value.
Ref Tape::relu(Ref a) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = 0.0;
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i)
      if (y[i] > 0.0) da[i] += g[i];
  })};
}

Ref Tape::leaky_relu(Ref a, double slope) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] *= slope;
  return Ref{push(std::move(out), wants_grad(a), [a, slope](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += (y[i] > 0.0 ? 1.0 : slope) * g[i];
  })};
}

Ref Tape::sigmoid(Ref a) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += y[i] * (1.0 - y[i]) * g[i];
  })};
}

Ref Tape::tanh_(Ref a) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(out[i]);
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += (1.0 - y[i] * y[i]) * g[i];
  })};
}

Ref Tape::elu(Ref a) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i)
    if (out[i] < 0.0) out[i] = std::expm1(out[i]);
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += (y[i] > 0.0 ? 1.0 : y[i] + 1.0) * g[i];
  })};
}

Ref Tape::log_(Ref a) {
  check(a);
  Tensor out = val(a.idx);
  for (size_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& x = t.val(a.idx);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += g[i] / x[i];
  })};
}

Ref Tape::softmax_rows(Ref a) {
  check(a);
  Tensor out = val(a.idx);
  for (int r = 0; r < out.rows(); ++r) {
    double* row = out.data() + size_t(r) * out.cols();
    double mx = row[0];
    for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < out.cols(); ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < out.cols(); ++j) row[j] /= sum;
  }
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    const Tensor& y = t.val(self);
    Tensor& da = t.grad_buf(a.idx);
    for (int r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int j = 0; j < y.cols(); ++j) dot += g.at(r, j) * y.at(r, j);
      for (int j = 0; j < y.cols(); ++j) da.at(r, j) += y.at(r, j) * (g.at(r, j) - dot);
    }
  })};
}

Ref Tape::concat_cols(Ref a, Ref b) {
  check(a);
  check(b);
  const Tensor& av = val(a.idx);
  const Tensor& bv = val(b.idx);
  shape_check(av.rows() == bv.rows(), "concat_cols");
  Tensor out(av.rows(), av.cols() + bv.cols());
  for (int i = 0; i < av.rows(); ++i) {
    for (int j = 0; j < av.cols(); ++j) out.at(i, j) = av.at(i, j);
    for (int j = 0; j < bv.cols(); ++j) out.at(i, av.cols() + j) = bv.at(i, j);
  }
  const int ac = av.cols();
  return Ref{push(std::move(out), wants_grad(a) || wants_grad(b), [a, b, ac](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    if (t.wants_grad(a)) {
      Tensor& da = t.grad_buf(a.idx);
      for (int i = 0; i < da.rows(); ++i)
        for (int j = 0; j < ac; ++j) da.at(i, j) += g.at(i, j);
    }
    if (t.wants_grad(b)) {
      Tensor& db = t.grad_buf(b.idx);
      for (int i = 0; i < db.rows(); ++i)
        for (int j = 0; j < db.cols(); ++j) db.at(i, j) += g.at(i, ac + j);
    }
  })};
}

Ref Tape::vstack(const std::vector<Ref>& rows) {
  if (rows.empty()) throw std::invalid_argument("vstack: empty input");
  int total = 0;
  const int cols = val(rows[0].idx).cols();
  bool rg = false;
  for (Ref r : rows) {
    check(r);
    shape_check(val(r.idx).cols() == cols, "vstack");
    total += val(r.idx).rows();
    rg = rg || wants_grad(r);
  }
  Tensor out(total, cols);
  int at = 0;
  for (Ref r : rows) {
    const Tensor& v = val(r.idx);
    std::copy(v.data(), v.data() + v.size(), out.data() + size_t(at) * cols);
    at += v.rows();
  }
  std::vector<Ref> parents = rows;
  return Ref{push(std::move(out), rg, [parents](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    int at = 0;
    for (Ref r : parents) {
      const int n = t.val(r.idx).rows();
      if (t.wants_grad(r)) {
        Tensor& d = t.grad_buf(r.idx);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < g.cols(); ++j) d.at(i, j) += g.at(at + i, j);
      }
      at += n;
    }
  })};
}

Ref Tape::slice_cols(Ref a, int c0, int len) {
  check(a);
  const Tensor& av = val(a.idx);
  shape_check(c0 >= 0 && len > 0 && c0 + len <= av.cols(), "slice_cols");
  Tensor out(av.rows(), len);
  for (int i = 0; i < av.rows(); ++i)
    for (int j = 0; j < len; ++j) out.at(i, j) = av.at(i, c0 + j);
  return Ref{push(std::move(out), wants_grad(a), [a, c0](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buf(a.idx);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) da.at(i, c0 + j) += g.at(i, j);
  })};
}

Ref Tape::gather_rows(Ref a, std::vector<int> idx) {
  check(a);
  const Tensor& av = val(a.idx);
  Tensor out(static_cast<int>(idx.size()), av.cols());
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= av.rows()) throw std::out_of_range("gather_rows: bad index");
    std::copy(av.data() + size_t(idx[i]) * av.cols(), av.data() + size_t(idx[i] + 1) * av.cols(),
              out.data() + i * av.cols());
  }
  return Ref{push(std::move(out), wants_grad(a), [a, idx = std::move(idx)](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < g.cols(); ++j) da.at(idx[i], j) += g.at(static_cast<int>(i), j);
  })};
}

Ref Tape::gather_cols(Ref a, std::vector<int> col_per_row) {
  check(a);
  const Tensor& av = val(a.idx);
  shape_check(static_cast<int>(col_per_row.size()) == av.rows(), "gather_cols");
  Tensor out(av.rows(), 1);
  for (int i = 0; i < av.rows(); ++i) {
    if (col_per_row[i] < 0 || col_per_row[i] >= av.cols())
      throw std::out_of_range("gather_cols: bad index");
    out.at(i, 0) = av.at(i, col_per_row[i]);
  }
  return Ref{
      push(std::move(out), wants_grad(a), [a, idx = std::move(col_per_row)](Tape& t, int self) {
        const Tensor& g = t.nodes_[self].grad;
        Tensor& da = t.grad_buf(a.idx);
        for (size_t i = 0; i < idx.size(); ++i) da.at(static_cast<int>(i), idx[i]) += g.at(static_cast<int>(i), 0);
      })};
}

Ref Tape::repeat_row(Ref a, int count) {
  check(a);
  const Tensor& av = val(a.idx);
  shape_check(av.rows() == 1 && count > 0, "repeat_row");
  Tensor out(count, av.cols());
  for (int i = 0; i < count; ++i)
    std::copy(av.data(), av.data() + av.cols(), out.data() + size_t(i) * av.cols());
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& g = t.nodes_[self].grad;
    Tensor& da = t.grad_buf(a.idx);
    for (int i = 0; i < g.rows(); ++i)
      for (int j = 0; j < g.cols(); ++j) da.at(0, j) += g.at(i, j);
  })};
}

Ref Tape::sum_all(Ref a) {
  check(a);
  const Tensor& av = val(a.idx);
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += av[i];
  Tensor out(1, 1);
  out.at(0, 0) = s;
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const double g = t.nodes_[self].grad.at(0, 0);
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += g;
  })};
}

Ref Tape::mean_all(Ref a) {
  check(a);
  const Tensor& av = val(a.idx);
  if (av.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  double s = 0.0;
  for (size_t i = 0; i < av.size(); ++i) s += av[i];
  Tensor out(1, 1);
  out.at(0, 0) = s / static_cast<double>(av.size());
  return Ref{push(std::move(out), wants_grad(a), [a](Tape& t, int self) {
    const Tensor& av = t.val(a.idx);
    const double g = t.nodes_[self].grad.at(0, 0) / static_cast<double>(av.size());
    Tensor& da = t.grad_buf(a.idx);
    for (size_t i = 0; i < da.size(); ++i) da[i] += g;
  })};
}

Ref Tape::straight_through(Ref soft, Tensor hard) {
  check(soft);
  shape_check(val(soft.idx).same_shape(hard), "straight_through");
  return Ref{push(std::move(hard), wants_grad(soft), [soft](Tape& t, int self) {
    t.add_grad(soft.idx, t.nodes_[self].grad);
  })};
}

void Tape::backward(Ref loss) {
  check(loss);
  if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
  consumed_ = true;
  const Tensor& lv = val(loss.idx);
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("Tape::backward: loss must be a 1x1 scalar");
  grad_buf(loss.idx).at(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.back) n.back(*this, i);
    if (n.store != nullptr) n.store->accumulate_grad(n.entry, n.grad);
  }
}

void Tape::reset() {
  nodes_.clear();
  consumed_ = false;
}

}  // namespace gamf::nn
