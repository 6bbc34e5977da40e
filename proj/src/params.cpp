#include "gamf/params.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace gamf::nn {

namespace {

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  if (!is) throw std::runtime_error("ParamStore: truncated stream");
  return v;
}
int64_t read_i64(std::istream& is) {
  int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  if (!is) throw std::runtime_error("ParamStore: truncated stream");
  return v;
}
void write_tensor(std::ostream& os, const Tensor& t) {
  os.write(reinterpret_cast<const char*>(t.data()), std::streamsize(t.size() * sizeof(double)));
}
void read_tensor(std::istream& is, Tensor& t) {
  is.read(reinterpret_cast<char*>(t.data()), std::streamsize(t.size() * sizeof(double)));
  if (!is) throw std::runtime_error("ParamStore: truncated tensor payload");
}
void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), std::streamsize(s.size()));
}
std::string read_string(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("ParamStore: truncated string");
  return s;
}

}  // namespace

int ParamStore::add(const std::string& name, Tensor init) {
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
  Entry e;
  e.grad = Tensor(init.rows(), init.cols());
  e.m = Tensor(init.rows(), init.cols());
  e.v = Tensor(init.rows(), init.cols());
  e.value = std::move(init);
  entries_.push_back(std::move(e));
  names_.push_back(name);
  const int idx = static_cast<int>(entries_.size()) - 1;
  index_[name] = idx;
  return idx;
}

int ParamStore::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
  return it->second;
}

int ParamStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? -1 : it->second;
}

void ParamStore::accumulate_grad(int i, const Tensor& g) {
  Tensor& dst = entries_[i].grad;
  if (!dst.same_shape(g)) throw std::invalid_argument("ParamStore: gradient shape mismatch");
  for (size_t k = 0; k < dst.size(); ++k) dst[k] += g[k];
}

void ParamStore::zero_grads() {
  for (Entry& e : entries_) e.grad.fill(0.0);
}

double ParamStore::grad_norm() const { return grad_norm(""); }

double ParamStore::grad_norm(const std::string& prefix) const {
  double s = 0.0;
  for (int i = 0; i < count(); ++i) {
    if (!prefix.empty() && names_[i].rfind(prefix, 0) != 0) continue;
    const Tensor& g = entries_[i].grad;
    for (size_t k = 0; k < g.size(); ++k) s += g[k] * g[k];
  }
  return std::sqrt(s);
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1, double(steps_));
  const double bc2 = 1.0 - std::pow(beta2, double(steps_));
  for (Entry& e : entries_) {
    for (size_t k = 0; k < e.value.size(); ++k) {
      const double g = e.grad[k];
      e.m[k] = beta1 * e.m[k] + (1.0 - beta1) * g;
      e.v[k] = beta2 * e.v[k] + (1.0 - beta2) * g * g;
      const double mhat = e.m[k] / bc1;
      const double vhat = e.v[k] / bc2;
      e.value[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    e.grad.fill(0.0);
  }
}

std::vector<std::string> ParamStore::manifest() const {
  std::vector<std::string> names = names_;
  std::sort(names.begin(), names.end());
  return names;
}

bool ParamStore::same_manifest(const ParamStore& other) const {
  if (count() != other.count()) return false;
  for (const std::string& n : manifest()) {
    const int j = other.find(n);
    if (j < 0 || !other.value(j).same_shape(value(index_of(n)))) return false;
  }
  return true;
}

void ParamStore::write_values(std::ostream& os) const {
  for (const std::string& n : manifest()) write_tensor(os, entries_[index_of(n)].value);
}

void ParamStore::read_values(std::istream& is) {
  for (const std::string& n : manifest()) read_tensor(is, entries_[index_of(n)].value);
}

void ParamStore::write_full(std::ostream& os) const {
  write_i64(os, steps_);
  write_u32(os, static_cast<uint32_t>(count()));
  for (const std::string& n : manifest()) {
    const Entry& e = entries_[index_of(n)];
    write_string(os, n);
    write_u32(os, static_cast<uint32_t>(e.value.rows()));
    write_u32(os, static_cast<uint32_t>(e.value.cols()));
    write_tensor(os, e.value);
    write_tensor(os, e.grad);
    write_tensor(os, e.m);
    write_tensor(os, e.v);
  }
}

ParamStore ParamStore::read_full(std::istream& is) {
  ParamStore s;
  s.steps_ = read_i64(is);
  const uint32_t n = read_u32(is);
  for (uint32_t i = 0; i < n; ++i) {
    const std::string name = read_string(is);
    const int rows = static_cast<int>(read_u32(is));
    const int cols = static_cast<int>(read_u32(is));
    const int idx = s.add(name, Tensor(rows, cols));
    read_tensor(is, s.entries_[idx].value);
    read_tensor(is, s.entries_[idx].grad);
    read_tensor(is, s.entries_[idx].m);
    read_tensor(is, s.entries_[idx].v);
  }
  return s;
}

void soft_update(const ParamStore& online, ParamStore& target, double tau) {
  if (!online.same_manifest(target))
    throw std::invalid_argument("soft_update: parameter manifests do not match");
  for (const std::string& n : online.manifest()) {
    const Tensor& src = online.value(online.index_of(n));
    Tensor& dst = target.value(n);
    for (size_t k = 0; k < dst.size(); ++k) dst[k] = tau * src[k] + (1.0 - tau) * dst[k];
  }
}

Tensor uniform_init(int rows, int cols, int fan_in, RngStream& rng) {
  Tensor t(rows, cols);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (size_t k = 0; k < t.size(); ++k) t[k] = (2.0 * rng.next_double() - 1.0) * bound;
  return t;
}

}  // namespace gamf::nn
