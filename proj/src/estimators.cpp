#include "gamf/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gamf::estimators {

MeanAction uniform_mean(int action_count) {
  if (action_count <= 0) throw std::invalid_argument("uniform_mean: action_count must be > 0");
  return MeanAction(action_count, 1.0 / action_count);
}

bool on_simplex(const MeanAction& m, double tol) {
  double sum = 0.0;
  for (double v : m) {
    if (v < 0.0 || !std::isfinite(v)) return false;
    sum += v;
  }
  return std::abs(sum - 1.0) <= tol;
}

NeighborActions from_onehots(const std::vector<std::vector<double>>& onehots) {
  NeighborActions out;
  for (size_t i = 0; i < onehots.size(); ++i) {
    const auto& v = onehots[i];
    if (out.action_count == 0) out.action_count = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != out.action_count)
      throw std::invalid_argument("from_onehots: inconsistent action-vector length");
    int hot = -1;
    for (size_t j = 0; j < v.size(); ++j) {
      if (v[j] == 1.0 && hot < 0) hot = static_cast<int>(j);
      else if (v[j] != 0.0)
        throw std::invalid_argument("from_onehots: vector is not exactly one-hot");
    }
    if (hot < 0) throw std::invalid_argument("from_onehots: vector is not exactly one-hot");
    out.items.push_back({static_cast<int>(i), hot});
  }
  return out;
}

MeanAction global_mean(const NeighborActions& actions) {
  if (actions.items.empty()) return uniform_mean(actions.action_count > 0 ? actions.action_count : 1);
  MeanAction sum(actions.action_count, 0.0);
  for (const auto& item : actions.items) {
    if (item.action < 0 || item.action >= actions.action_count)
      throw std::invalid_argument("global_mean: action index out of range");
    sum[item.action] += 1.0;
  }
  const double n = static_cast<double>(actions.items.size());
  for (double& v : sum) v /= n;
  return sum;
}

MeanAction dirichlet_mean(const DirichletState& state, RngStream& rng) {
  if (state.samples < 1) throw std::invalid_argument("dirichlet_mean: U must be >= 1");
  const int l = static_cast<int>(state.counts.size());
  if (l == 0) throw std::invalid_argument("dirichlet_mean: empty counts");
  std::vector<double> alpha(l);
  for (int i = 0; i < l; ++i) {
    if (state.counts[i] < 0) throw std::invalid_argument("dirichlet_mean: negative count");
    alpha[i] = state.eta + static_cast<double>(state.counts[i]);
    if (!(alpha[i] > 0.0)) throw std::invalid_argument("dirichlet_mean: eta + count must be > 0");
  }
  MeanAction acc(l, 0.0);
  std::vector<double> draw(l);
  for (int u = 0; u < state.samples; ++u) {
    double total = 0.0;
    for (int i = 0; i < l; ++i) {
      draw[i] = rng.next_gamma(alpha[i]);
      total += draw[i];
    }
    for (int i = 0; i < l; ++i) acc[i] += draw[i] / total;
  }
  for (double& v : acc) v /= state.samples;
  return acc;
}

MeanAction masked_mean(const AdjacencyMask& mask, const NeighborActions& actions) {
  if (mask.selected.size() != actions.items.size())
    throw std::invalid_argument("masked_mean: mask length does not match neighbour count");
  int selected = 0;
  for (int g : mask.selected) selected += (g != 0);
  if (actions.items.empty() || selected == 0)
    return uniform_mean(actions.action_count > 0 ? actions.action_count : 1);
  MeanAction sum(actions.action_count, 0.0);
  for (size_t i = 0; i < actions.items.size(); ++i) {
    if (!mask.selected[i]) continue;
    const auto& item = actions.items[i];
    if (item.action < 0 || item.action >= actions.action_count)
      throw std::invalid_argument("masked_mean: action index out of range");
    sum[item.action] += 1.0;
  }
  for (double& v : sum) v /= static_cast<double>(selected);
  return sum;
}

GraphAttentionPolicyNet::GraphAttentionPolicyNet(int feature_count_, int dim_)
    : feature_count(feature_count_),
      dim(dim_),
      obs_fc("graph_attention/obs_fc", feature_count_, dim_),
      lstm("graph_attention/lstm", dim_, dim_),
      msg_fc("graph_attention/msg_fc", dim_, dim_),
      gat("graph_attention/gat", dim_),
      edge_mlp("graph_attention/edge_mlp", 2 * dim_, dim_, 2) {}

void GraphAttentionPolicyNet::init(nn::ParamStore& store, RngStream& rng) const {
  obs_fc.init(store, rng);
  lstm.init(store, rng);
  msg_fc.init(store, rng);
  gat.init(store, rng);
  edge_mlp.init(store, rng);
}

EncodeRefs encode_obs_node(const GraphAttentionPolicyNet& net, nn::Tape& t, nn::ParamStore& s,
                           nn::Ref obs_row, nn::Ref h, nn::Ref c, bool frozen) {
  if (t.value(obs_row).cols() != net.feature_count)
    throw std::invalid_argument("encode_obs: feature length does not match the encoder");
  nn::Ref x = net.obs_fc.forward(t, s, obs_row, frozen);
  auto [h_next, c_next] = net.lstm.forward(t, s, x, h, c, frozen);
  nn::Ref m = net.msg_fc.forward(t, s, h_next, frozen);
  return {m, h_next, c_next};
}

nn::Tensor encode_obs(const GraphAttentionPolicyNet& net, nn::ParamStore& s,
                      const std::vector<double>& obs, RecurrentState& state) {
  nn::Tape t;
  nn::Ref obs_row = t.constant(nn::Tensor(1, static_cast<int>(obs.size()),
                                          std::vector<double>(obs)));
  EncodeRefs refs = encode_obs_node(net, t, s, obs_row, t.borrow(state.h), t.borrow(state.c),
                                    /*frozen=*/true);
  nn::Tensor message = t.value(refs.message);
  state.h = t.value(refs.h_next);
  state.c = t.value(refs.c_next);
  return message;
}

EdgeSelection edge_select_node(const GraphAttentionPolicyNet& net, nn::Tape& t,
                               nn::ParamStore& s, nn::Ref center_msg, nn::Ref neighbor_msgs,
                               const std::vector<int>& neighbor_ids, uint64_t noise_key,
                               bool hard, double temperature, bool frozen) {
  EdgeSelection out;
  out.hard = hard;
  const int n = static_cast<int>(neighbor_ids.size());
  out.mask.selected.assign(n, 0);
  if (n == 0) return out;
  if (t.value(neighbor_msgs).rows() != n)
    throw std::invalid_argument("edge_select: message rows do not match neighbour ids");
  out.empty = false;

  // Canonical id order keeps the computation independent of input order.
  out.order.resize(n);
  std::iota(out.order.begin(), out.order.end(), 0);
  std::sort(out.order.begin(), out.order.end(),
            [&](int a, int b) { return neighbor_ids[a] < neighbor_ids[b]; });

  std::vector<nn::Ref> rows;
  rows.push_back(center_msg);
  rows.push_back(t.gather_rows(neighbor_msgs, out.order));
  nn::Ref nodes = t.vstack(rows);

  nn::Tensor adjacency(n + 1, n + 1);
  for (int i = 1; i <= n; ++i) {
    adjacency.at(0, i) = 1.0;
    adjacency.at(i, 0) = 1.0;
  }
  nn::Ref node_feats = nn::gat_layer(t, s, net.gat, nodes, adjacency, frozen);

  std::vector<int> nbr_rows(n);
  std::iota(nbr_rows.begin(), nbr_rows.end(), 1);
  nn::Ref e_center = t.gather_rows(node_feats, {0});
  nn::Ref e_nbrs = t.gather_rows(node_feats, nbr_rows);
  nn::Ref stacked = t.concat_cols(e_nbrs, t.repeat_row(e_center, n));
  nn::Ref logits = net.edge_mlp.forward(t, s, stacked, frozen);

  nn::Tensor noise(n, 2);
  for (int p = 0; p < n; ++p) {
    RngStream nrng(derive_key(noise_key, {rng_tag("gumbel"),
                                          static_cast<uint64_t>(neighbor_ids[out.order[p]])}));
    noise.at(p, 0) = nrng.next_gumbel();
    noise.at(p, 1) = nrng.next_gumbel();
  }
  nn::Ref g = nn::gumbel_softmax_with_noise(t, logits, temperature, hard, noise);
  out.mask_col = t.slice_cols(g, 1, 1);

  const nn::Tensor& gv = t.value(g);
  for (int p = 0; p < n; ++p) {
    const int sel = gv.at(p, 1) > gv.at(p, 0) ? 1 : 0;
    out.mask.selected[out.order[p]] = sel;
    out.selected_count += sel;
  }
  return out;
}

AdjacencyMask edge_select(const GraphAttentionPolicyNet& net, nn::ParamStore& s,
                          const nn::Tensor& center_msg, const nn::Tensor& neighbor_msgs,
                          const std::vector<int>& neighbor_ids, uint64_t noise_key, bool hard,
                          double temperature) {
  nn::Tape t;
  EdgeSelection sel =
      edge_select_node(net, t, s, t.borrow(center_msg), t.borrow(neighbor_msgs), neighbor_ids,
                       noise_key, hard, temperature, /*frozen=*/true);
  return sel.mask;
}

nn::Ref masked_mean_node(nn::Tape& t, const EdgeSelection& sel, const NeighborActions& actions) {
  const int l = actions.action_count;
  if (static_cast<int>(actions.items.size()) != static_cast<int>(sel.mask.selected.size()))
    throw std::invalid_argument("masked_mean_node: actions do not match the selection");
  if (sel.empty || (sel.hard && sel.selected_count == 0))
    return t.constant(nn::Tensor(1, l, uniform_mean(l)));
  const int n = static_cast<int>(actions.items.size());
  nn::Tensor onehots(n, l);
  for (int p = 0; p < n; ++p) {
    const auto& item = actions.items[sel.order[p]];
    onehots.at(p, item.action) = 1.0;
  }
  nn::Ref total = t.sum_all(sel.mask_col);
  nn::Ref weighted = t.matmul(t.transpose(sel.mask_col), t.constant(std::move(onehots)));
  return t.div_scalar(weighted, total);
}

namespace {

nn::Tensor rand_tensor(int rows, int cols, RngStream& rng, double scale = 1.0) {
  nn::Tensor t(rows, cols);
  for (size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.next_double() - 1.0) * scale;
  return t;
}

}  // namespace

std::vector<GradCheckSuiteRow> gradcheck_suite(int seeds) {
  std::vector<GradCheckSuiteRow> rows;
  for (uint64_t seed = 1; seed <= static_cast<uint64_t>(seeds); ++seed) {
    RngStream rng(derive_key(seed, {rng_tag("gradcheck")}));

    {  // fully connected layer
      nn::ParamStore s;
      nn::FcLayer fc("fc", 5, 4);
      fc.init(s, rng);
      nn::Tensor x = rand_tensor(3, 5, rng);
      auto report = nn::grad_check(
          [&](nn::Tape& t, nn::ParamStore& ps) {
            nn::Ref y = fc.forward(t, ps, t.constant(x));
            return t.mean_all(t.mul(y, y));
          },
          s, 1e-5);
      rows.push_back({"fc", seed, std::move(report)});
    }

    {  // LSTM cell
      nn::ParamStore s;
      nn::LstmCell cell("lstm", 4, 5);
      cell.init(s, rng);
      nn::Tensor x = rand_tensor(2, 4, rng);
      nn::Tensor h = rand_tensor(2, 5, rng);
      nn::Tensor c = rand_tensor(2, 5, rng);
      auto report = nn::grad_check(
          [&](nn::Tape& t, nn::ParamStore& ps) {
            auto [hn, cn] = cell.forward(t, ps, t.constant(x), t.constant(h), t.constant(c));
            return t.mean_all(t.add(t.mul(hn, hn), t.mul(cn, cn)));
          },
          s, 1e-5);
      rows.push_back({"lstm_cell", seed, std::move(report)});
    }

    {  // graph attention layer
      nn::ParamStore s;
      nn::GatWeights gw("gat", 5);
      gw.init(s, rng);
      nn::Tensor m = rand_tensor(4, 5, rng);
      nn::Tensor adj(4, 4);
      adj.at(0, 1) = adj.at(1, 0) = adj.at(0, 2) = adj.at(2, 3) = 1.0;
      auto report = nn::grad_check(
          [&](nn::Tape& t, nn::ParamStore& ps) {
            nn::Ref y = nn::gat_layer(t, ps, gw, t.constant(m), adj);
            return t.mean_all(t.mul(y, y));
          },
          s, 1e-4);
      rows.push_back({"gat_layer", seed, std::move(report)});
    }

    {  // edge MLP behind a soft gumbel head
      nn::ParamStore s;
      nn::Mlp2 mlp("edge_mlp", 6, 5, 2);
      mlp.init(s, rng);
      nn::Tensor x = rand_tensor(3, 6, rng);
      nn::Tensor noise(3, 2);
      for (size_t i = 0; i < noise.size(); ++i) noise[i] = rng.next_gumbel();
      auto report = nn::grad_check(
          [&](nn::Tape& t, nn::ParamStore& ps) {
            nn::Ref soft =
                nn::gumbel_softmax_with_noise(t, mlp.forward(t, ps, t.constant(x)), 0.5,
                                              /*hard=*/false, noise);
            return t.mean_all(t.mul(soft, soft));
          },
          s, 1e-5);
      rows.push_back({"edge_mlp", seed, std::move(report)});
    }

    {  // full estimator pipeline, soft gumbel
      nn::ParamStore s;
      GraphAttentionPolicyNet net(8, 5);
      net.init(s, rng);
      const int n = 3;
      nn::Tensor obs_center = rand_tensor(1, 8, rng);
      std::vector<nn::Tensor> obs_nbrs;
      for (int i = 0; i < n; ++i) obs_nbrs.push_back(rand_tensor(1, 8, rng));
      nn::Tensor weight = rand_tensor(1, 4, rng);
      NeighborActions acts;
      acts.action_count = 4;
      acts.items = {{2, 0}, {4, 3}, {6, 1}};
      auto report = nn::grad_check(
          [&](nn::Tape& t, nn::ParamStore& ps) {
            nn::Ref h0 = t.constant(nn::Tensor(1, net.dim));
            nn::Ref c0 = t.constant(nn::Tensor(1, net.dim));
            EncodeRefs center = encode_obs_node(net, t, ps, t.constant(obs_center), h0, c0);
            std::vector<nn::Ref> msgs;
            for (int i = 0; i < n; ++i)
              msgs.push_back(encode_obs_node(net, t, ps, t.constant(obs_nbrs[i]), h0, c0).message);
            EdgeSelection sel =
                edge_select_node(net, t, ps, center.message, t.vstack(msgs), {2, 4, 6},
                                 derive_key(seed, {rng_tag("noise")}), /*hard=*/false, 0.5);
            nn::Ref mean = masked_mean_node(t, sel, acts);
            return t.mean_all(t.mul(mean, t.borrow(weight)));
          },
          s, 1e-4);
      rows.push_back({"gamfq_estimator", seed, std::move(report)});
    }
  }
  return rows;
}

}  // namespace gamf::estimators
