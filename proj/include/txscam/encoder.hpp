#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "txscam/nn/autodiff.hpp"
#include "txscam/nn/params.hpp"
#include "txscam/strwalk.hpp"
#include "txscam/txgraph.hpp"

namespace txscam::encoder {

using nn::Matrix;
using nn::Tape;
using nn::Var;

class NoNeighbors : public Error {
 public:
  using Error::Error;
};

inline constexpr std::size_t kNodeFeatureDim = 4;
inline constexpr std::size_t kEdgeFeatureDim = 3;

struct FeatureConfig {
  std::size_t node_dim = kNodeFeatureDim;  // C_v
  std::size_t edge_dim = kEdgeFeatureDim;  // C_e
  std::size_t hidden = 16;                 // D
  std::size_t max_neighbors = 256;         // N_max; most recent slots are kept beyond it
  double leaky_slope = 0.01;
  double elu_alpha = 1.0;

  void validate() const;
};

/// Direction of an edge relative to the subgraph center. Edges that do not
/// touch the center are Detached.
enum class Direction : int { Outgoing = 1, Incoming = -1, Detached = 0 };

/// [log1p(value in ether), (t - t_first) / (86400 k), direction]
std::array<double, kEdgeFeatureDim> raw_edge_features(const Transaction& tx, std::int64_t t_first, int k,
                                                      Direction dir);

/// [log1p(in-degree), log1p(out-degree), log1p(sum in ether), log1p(sum out ether)]
/// counted over `edges` only.
std::array<double, kNodeFeatureDim> raw_node_features(const TemporalMultiDiGraph& g, std::span<const EdgeId> edges,
                                                      NodeId v);

/// Precomputed, parameter-free input for one interval. Row 0 of both blocks
/// is the center's self slot (edge block zero); rows 1.. are neighbor slots,
/// one per (neighbor, edge) pair.
struct SubgraphInput {
  Matrix node_block;  // (slots + 1) x C_v
  Matrix edge_block;  // (slots + 1) x C_e
  std::vector<double> member_mean;  // mean raw node features over members
  bool empty = true;                // no edges in this interval
};

struct EncoderInput {
  std::vector<SubgraphInput> intervals;
  std::size_t length() const noexcept { return intervals.size(); }
  /// m x C_v matrix of member-mean raw node features (graph-encoder ablation).
  Matrix pooled_raw() const;
};

EncoderInput prepare_input(const TemporalMultiDiGraph& g, const strwalk::SubgraphSequence& seq,
                           const FeatureConfig& cfg);

struct EncoderParams {
  nn::Param* edge_proj = nullptr;  // C_e x C_e, applied to each edge feature row
  nn::Param* align_w = nullptr;    // (C_v + C_e) x D
  nn::Param* align_b = nullptr;    // 1 x D
  nn::Param* score_w = nullptr;    // 2D x 1
  nn::Param* agg_w = nullptr;      // D x D

  static EncoderParams create(nn::ParamSet& set, const FeatureConfig& cfg, Rng& rng);
  static EncoderParams bind(nn::ParamSet& set);
  std::vector<nn::Param*> all() const { return {edge_proj, align_w, align_b, score_w, agg_w}; }
};

/// Parameters registered on one tape.
struct EncoderVars {
  Var edge_proj, align_w, align_b, score_w, agg_w;
  static EncoderVars bind(Tape& tape, const EncoderParams& p);
};

/// LeakyReLU([X_V | X_E W] Theta_v + b_0); one output row per slot.
Var align_neighbors(Var node_block, Var edge_block, Var edge_proj, Var align_w, Var align_b, double slope);

/// e_x = LeakyReLU([h_i | h_x] Theta_n) for every row h_x of `h`; returns n x 1.
Var attention_scores(Var h_i, Var h, Var score_w, double slope);

/// Softmax of an n x 1 score column over valid slots; returns 1 x n with
/// exact zeros at padding. Throws NoNeighbors when nothing is valid.
Var normalize_scores(Var scores, std::span<const std::uint8_t> valid);

/// ELU(sum_x alpha_x Theta h_x); alpha is 1 x n, h is n x D.
Var aggregate(Var alpha, Var h, Var agg_w, double alpha_elu);

/// Encodes one interval to a 1 x D row. Slots are zero-padded to `pad_to`
/// when it exceeds the real slot count. Empty intervals give the zero row.
Var encode_subgraph(Tape& tape, const SubgraphInput& in, const EncoderVars& p, const FeatureConfig& cfg,
                    std::size_t pad_to = 0);

/// m x D feature sequence; row tau encodes interval tau.
Var encode_sequence(Tape& tape, const EncoderInput& in, const EncoderVars& p, const FeatureConfig& cfg);

}  // namespace txscam::encoder
