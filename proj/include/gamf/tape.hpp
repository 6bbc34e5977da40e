#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gamf/tensor.hpp"

namespace gamf::nn {

class ParamStore;

struct Ref {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over whole-tensor operations. Values are computed
// eagerly; backward() walks the recorded list in reverse and accumulates
// gradients into every registered parameter it can reach.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaves.
  Ref constant(Tensor v);
  Ref borrow(const Tensor& v);  // zero-copy; caller keeps v alive
  Ref param(ParamStore& store, int entry);
  Ref param(ParamStore& store, const std::string& name);

  // Ops.
  Ref matmul(Ref a, Ref b);
  Ref transpose(Ref a);
  Ref add(Ref a, Ref b);
  Ref sub(Ref a, Ref b);
  Ref mul(Ref a, Ref b);
  Ref scale(Ref a, double s);
  Ref add_row_broadcast(Ref x, Ref bias);  // bias is 1 x C
  Ref add_scalar(Ref a, Ref s);            // s is 1 x 1
  Ref div_scalar(Ref a, Ref s);            // s is 1 x 1
  Ref relu(Ref a);
  Ref leaky_relu(Ref a, double slope);
  Ref sigmoid(Ref a);
  Ref tanh_(Ref a);
  Ref elu(Ref a);
  Ref log_(Ref a);
  Ref softmax_rows(Ref a);
  Ref concat_cols(Ref a, Ref b);
  Ref vstack(const std::vector<Ref>& rows);
  Ref slice_cols(Ref a, int c0, int len);
  Ref gather_rows(Ref a, std::vector<int> idx);
  Ref gather_cols(Ref a, std::vector<int> col_per_row);  // -> N x 1
  Ref repeat_row(Ref a, int count);                      // 1 x C -> count x C
  Ref sum_all(Ref a);
  Ref mean_all(Ref a);
  // Forward value is `hard`; gradients flow to `soft` unchanged.
  Ref straight_through(Ref soft, Tensor hard);

  const Tensor& value(Ref r) const { return val(r.idx); }
  const Tensor& grad_of(Ref r) const;

  // loss must be 1 x 1. Throws if the tape was already consumed.
  void backward(Ref loss);
  void reset();
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    bool requires_grad = false;
    ParamStore* store = nullptr;
    int entry = -1;
    std::function<void(Tape&, int)> back;
  };

  const Tensor& val(int i) const {
    const Node& n = nodes_[i];
    return n.borrowed ? *n.borrowed : n.owned;
  }
  Tensor& grad_buf(int i);
  void add_grad(int i, const Tensor& g);
  int push(Tensor value, bool requires_grad, std::function<void(Tape&, int)> back);
  bool wants_grad(Ref r) const { return nodes_[r.idx].requires_grad; }
  void check(Ref r) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace gamf::nn
