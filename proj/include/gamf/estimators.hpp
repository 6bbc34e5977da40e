#pragma once

#include <cstdint>
#include <vector>

#include "gamf/layers.hpp"
#include "gamf/rng.hpp"

namespace gamf::estimators {

// Probability vector over the action table.
using MeanAction = std::vector<double>;

MeanAction uniform_mean(int action_count);
bool on_simplex(const MeanAction& m, double tol = 1e-9);

// Observed neighbours together with their one-hot-coded actions
// (held as indices; the one-hot view is implied).
struct NeighborActions {
  int action_count = 0;
  struct Item {
    int agent_id = -1;
    int action = 0;
  };
  std::vector<Item> items;
};

// Builds from explicit one-hot vectors, validating exact one-hotness and a
// consistent length.
NeighborActions from_onehots(const std::vector<std::vector<double>>& onehots);

// Component-wise average of the neighbours' one-hot actions; empty input
// falls back to the uniform point.
MeanAction global_mean(const NeighborActions& actions);

struct DirichletState {
  double eta = 1.0;              // concentration prior per component
  std::vector<int64_t> counts;   // per-action occurrences among observed neighbours
  int samples = 100;             // U
};

// Average of U draws from Dirichlet(eta + c) via normalized Gamma variates.
MeanAction dirichlet_mean(const DirichletState& state, RngStream& rng);

// Binary selection per present neighbour, aligned with the neighbour list
// it was produced from.
struct AdjacencyMask {
  std::vector<int> selected;
};

// Average of the selected neighbours' actions; an all-zero mask (or no
// neighbours) falls back to the uniform point. With a full mask this is
// bitwise identical to global_mean (same summation order).
MeanAction masked_mean(const AdjacencyMask& mask, const NeighborActions& actions);

// Obs encoder + LSTM + message head + GAT + edge MLP, all hidden size D.
struct GraphAttentionPolicyNet {
  int feature_count = 0;  // F
  int dim = 64;           // D

  nn::FcLayer obs_fc;
  nn::LstmCell lstm;
  nn::FcLayer msg_fc;
  nn::GatWeights gat;
  nn::Mlp2 edge_mlp;

  GraphAttentionPolicyNet() = default;
  GraphAttentionPolicyNet(int feature_count_, int dim_);
  void init(nn::ParamStore& store, RngStream& rng) const;
};

struct RecurrentState {
  nn::Tensor h, c;
  RecurrentState() = default;
  explicit RecurrentState(int dim) : h(1, dim), c(1, dim) {}
  void reset() {
    h.fill(0.0);
    c.fill(0.0);
  }
};

struct EncodeRefs {
  nn::Ref message, h_next, c_next;
};

// message m = fc(h'), (h', c') = lstm(fc(obs), h, c).
EncodeRefs encode_obs_node(const GraphAttentionPolicyNet& net, nn::Tape& t, nn::ParamStore& s,
                           nn::Ref obs_row, nn::Ref h, nn::Ref c, bool frozen = false);

// Acting-time wrapper; advances the recurrent state in place.
nn::Tensor encode_obs(const GraphAttentionPolicyNet& net, nn::ParamStore& s,
                      const std::vector<double>& obs, RecurrentState& state);

// Hard-attention edge selection over the local star graph of one centre
// and its present neighbours. Gumbel noise is keyed by neighbour agent id,
// so permuting the neighbour order permutes the mask identically.
struct EdgeSelection {
  AdjacencyMask mask;          // input order
  nn::Ref mask_col;            // k x 1 select-class column, sorted-id order
  std::vector<int> order;      // sorted position -> input index
  int selected_count = 0;
  bool empty = true;
  bool hard = true;
};

EdgeSelection edge_select_node(const GraphAttentionPolicyNet& net, nn::Tape& t,
                               nn::ParamStore& s, nn::Ref center_msg, nn::Ref neighbor_msgs,
                               const std::vector<int>& neighbor_ids, uint64_t noise_key,
                               bool hard, double temperature, bool frozen = false);

AdjacencyMask edge_select(const GraphAttentionPolicyNet& net, nn::ParamStore& s,
                          const nn::Tensor& center_msg, const nn::Tensor& neighbor_msgs,
                          const std::vector<int>& neighbor_ids, uint64_t noise_key, bool hard,
                          double temperature);

// Training-time masked mean with gradients through the straight-through
// mask. `actions` must align with the neighbour ids passed to
// edge_select_node.
nn::Ref masked_mean_node(nn::Tape& t, const EdgeSelection& sel, const NeighborActions& actions);

// Gradient checks over every layer family plus the full estimator pipeline
// (soft Gumbel), on small random shapes. One row per (layer, seed).
struct GradCheckSuiteRow {
  std::string name;
  uint64_t seed = 0;
  nn::GradCheckReport report;
};
std::vector<GradCheckSuiteRow> gradcheck_suite(int seeds);

}  // namespace gamf::estimators
