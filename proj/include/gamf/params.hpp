#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "gamf/rng.hpp"
#include "gamf/tensor.hpp"

namespace gamf::nn {

// Named parameters with gradients and Adam moment accumulators.
class ParamStore {
 public:
  int add(const std::string& name, Tensor init);
  int index_of(const std::string& name) const;  // throws if missing
  int find(const std::string& name) const;      // -1 if missing
  int count() const { return static_cast<int>(entries_.size()); }

  const std::string& name(int i) const { return names_[i]; }
  Tensor& value(int i) { return entries_[i].value; }
  const Tensor& value(int i) const { return entries_[i].value; }
  Tensor& value(const std::string& n) { return entries_[index_of(n)].value; }
  const Tensor& grad(int i) const { return entries_[i].grad; }
  Tensor& grad(int i) { return entries_[i].grad; }
  const Tensor& grad(const std::string& n) const { return entries_[index_of(n)].grad; }
  Tensor& grad(const std::string& n) { return entries_[index_of(n)].grad; }

  void accumulate_grad(int i, const Tensor& g);
  void zero_grads();
  double grad_norm() const;
  double grad_norm(const std::string& prefix) const;

  // One Adam update over every parameter; zeroes gradients afterwards
  // and bumps the step counter by exactly one.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  int64_t steps() const { return steps_; }
  void set_steps(int64_t s) { steps_ = s; }

  // Manifest order is sorted by name; checkpoint payloads follow it.
  std::vector<std::string> manifest() const;
  bool same_manifest(const ParamStore& other) const;

  // Raw (de)serialization used by checkpoints and training state.
  void write_values(std::ostream& os) const;            // manifest order
  void read_values(std::istream& is);                   // manifest order
  void write_full(std::ostream& os) const;              // values + grads + moments + steps
  static ParamStore read_full(std::istream& is);

  ParamStore snapshot() const { return *this; }

 private:
  struct Entry {
    Tensor value, grad, m, v;
  };
  std::vector<Entry> entries_;
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
  int64_t steps_ = 0;
};

// theta_target <- tau * theta_online + (1 - tau) * theta_target.
void soft_update(const ParamStore& online, ParamStore& target, double tau);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weight init.
Tensor uniform_init(int rows, int cols, int fan_in, RngStream& rng);

}  // namespace gamf::nn
