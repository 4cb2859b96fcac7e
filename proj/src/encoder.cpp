#include "txscam/encoder.hpp"

#include <algorithm>
#include <cmath>

namespace txscam::encoder {

void FeatureConfig::validate() const {
  if (hidden < 1) throw ConfigError("hidden size must be >= 1");
  if (max_neighbors < 1) throw ConfigError("max_neighbors must be >= 1");
  if (node_dim != kNodeFeatureDim || edge_dim != kEdgeFeatureDim)
    throw ConfigError("raw feature layout is fixed at 4 node and 3 edge features");
}

std::array<double, kEdgeFeatureDim> raw_edge_features(const Transaction& tx, std::int64_t t_first, int k,
                                                      Direction dir) {
  const double span = static_cast<double>(strwalk::kSecondsPerDay) * static_cast<double>(k);
  return {std::log1p(wei_to_ether(tx.value)), static_cast<double>(tx.timestamp - t_first) / span,
          static_cast<double>(static_cast<int>(dir))};
}

std::array<double, kNodeFeatureDim> raw_node_features(const TemporalMultiDiGraph& g, std::span<const EdgeId> edges,
                                                      NodeId v) {
  double in_deg = 0, out_deg = 0, in_val = 0, out_val = 0;
  for (EdgeId e : edges) {
    const double eth = wei_to_ether(g.edge(e).value);
    if (g.target(e) == v) {
      in_deg += 1;
      in_val += eth;
    }
    if (g.source(e) == v) {
      out_deg += 1;
      out_val += eth;
    }
  }
  return {std::log1p(in_deg), std::log1p(out_deg), std::log1p(in_val), std::log1p(out_val)};
}

Matrix EncoderInput::pooled_raw() const {
  Matrix out(intervals.size(), kNodeFeatureDim);
  for (std::size_t t = 0; t < intervals.size(); ++t)
    for (std::size_t c = 0; c < kNodeFeatureDim; ++c) out(t, c) = intervals[t].member_mean[c];
  return out;
}

EncoderInput prepare_input(const TemporalMultiDiGraph& g, const strwalk::SubgraphSequence& seq,
                           const FeatureConfig& cfg) {
  cfg.validate();
  EncoderInput input;
  input.intervals.reserve(seq.intervals.size());
  for (const auto& sub : seq.intervals) {
    SubgraphInput in;
    in.empty = sub.edges.empty();
    in.member_mean.assign(kNodeFeatureDim, 0.0);

    // Sub edges are in time order; keep the most recent slots past N_max.
    std::span<const EdgeId> slots(sub.edges);
    if (slots.size() > cfg.max_neighbors) slots = slots.subspan(slots.size() - cfg.max_neighbors);

    const std::size_t n = slots.size() + 1;
    in.node_block = Matrix(n, kNodeFeatureDim);
    in.edge_block = Matrix(n, kEdgeFeatureDim);
    auto center = raw_node_features(g, sub.edges, sub.center);
    std::copy(center.begin(), center.end(), in.node_block.row(0).begin());

    for (std::size_t s = 0; s < slots.size(); ++s) {
      const EdgeId e = slots[s];
      Direction dir = Direction::Detached;
      NodeId other = g.source(e);
      if (g.source(e) == sub.center) {
        dir = Direction::Outgoing;
        other = g.target(e);
      } else if (g.target(e) == sub.center) {
        dir = Direction::Incoming;
        other = g.source(e);
      }
      auto nf = raw_node_features(g, sub.edges, other);
      auto ef = raw_edge_features(g.edge(e), seq.t_first, seq.interval_days, dir);
      std::copy(nf.begin(), nf.end(), in.node_block.row(s + 1).begin());
      std::copy(ef.begin(), ef.end(), in.edge_block.row(s + 1).begin());
    }

    for (NodeId v : sub.members) {
      auto nf = raw_node_features(g, sub.edges, v);
      for (std::size_t c = 0; c < kNodeFeatureDim; ++c) in.member_mean[c] += nf[c];
    }
    for (auto& x : in.member_mean) x /= static_cast<double>(std::max<std::size_t>(1, sub.members.size()));
    input.intervals.push_back(std::move(in));
  }
  return input;
}

EncoderParams EncoderParams::create(nn::ParamSet& set, const FeatureConfig& cfg, Rng& rng) {
  cfg.validate();
  set.add_xavier("enc.edge_proj", cfg.edge_dim, cfg.edge_dim, rng);
  set.add_xavier("enc.align_w", cfg.node_dim + cfg.edge_dim, cfg.hidden, rng);
  set.add_zeros("enc.align_b", 1, cfg.hidden);
  set.add_xavier("enc.score_w", 2 * cfg.hidden, 1, rng);
  set.add_xavier("enc.agg_w", cfg.hidden, cfg.hidden, rng);
  return bind(set);
}

EncoderParams EncoderParams::bind(nn::ParamSet& set) {
  return {&set.at("enc.edge_proj"), &set.at("enc.align_w"), &set.at("enc.align_b"), &set.at("enc.score_w"),
          &set.at("enc.agg_w")};
}

EncoderVars EncoderVars::bind(Tape& tape, const EncoderParams& p) {
  return {tape.param(*p.edge_proj), tape.param(*p.align_w), tape.param(*p.align_b), tape.param(*p.score_w),
          tape.param(*p.agg_w)};
}

Var align_neighbors(Var node_block, Var edge_block, Var edge_proj, Var align_w, Var align_b, double slope) {
  Var edges = nn::matmul(edge_block, edge_proj);
  Var joined = nn::concat_cols(node_block, edges);
  return nn::leaky_relu(nn::add_row(nn::matmul(joined, align_w), align_b), slope);
}

Var attention_scores(Var h_i, Var h, Var score_w, double slope) {
  if (h_i.rows() != 1 || h_i.cols() != h.cols() || score_w.rows() != 2 * h.cols())
    throw ShapeMismatch("attention_scores: h_i " + h_i.value().shape_str() + ", h " + h.value().shape_str() +
                        ", Theta_n " + score_w.value().shape_str());
  Tape& t = h.tape();
  Var ones = t.constant(Matrix(h.rows(), 1, 1.0));
  Var repeated = nn::matmul(ones, h_i);
  return nn::leaky_relu(nn::matmul(nn::concat_cols(repeated, h), score_w), slope);
}

Var normalize_scores(Var scores, std::span<const std::uint8_t> valid) {
  if (scores.cols() != 1) throw ShapeMismatch("scores must be a column");
  if (!valid.empty() && std::none_of(valid.begin(), valid.end(), [](bool b) { return b; }))
    throw NoNeighbors("no valid attention slots");
  return nn::softmax_rows(nn::transpose(scores), valid);
}

Var aggregate(Var alpha, Var h, Var agg_w, double alpha_elu) {
  return nn::elu(nn::matmul(alpha, nn::matmul(h, agg_w)), alpha_elu);
}

Var encode_subgraph(Tape& tape, const SubgraphInput& in, const EncoderVars& p, const FeatureConfig& cfg,
                    std::size_t pad_to) {
  if (in.empty) return tape.constant(Matrix(1, cfg.hidden));
  const std::size_t real = in.node_block.rows();
  const std::size_t n = std::max(real, pad_to);
  Matrix nodes = in.node_block, edges = in.edge_block;
  if (n > real) {
    nodes = Matrix(n, in.node_block.cols());
    edges = Matrix(n, in.edge_block.cols());
    std::copy(in.node_block.data().begin(), in.node_block.data().end(), nodes.data().begin());
    std::copy(in.edge_block.data().begin(), in.edge_block.data().end(), edges.data().begin());
  }
  nn::ValidMask valid(n, 0);
  std::fill_n(valid.begin(), real, 1);

  Var h = align_neighbors(tape.constant(std::move(nodes)), tape.constant(std::move(edges)), p.edge_proj, p.align_w,
                          p.align_b, cfg.leaky_slope);
  Var h_i = nn::slice_rows(h, 0, 1);
  Var scores = attention_scores(h_i, h, p.score_w, cfg.leaky_slope);
  Var alpha = normalize_scores(scores, valid);
  return aggregate(alpha, h, p.agg_w, cfg.elu_alpha);
}

Var encode_sequence(Tape& tape, const EncoderInput& in, const EncoderVars& p, const FeatureConfig& cfg) {
  if (in.intervals.empty()) throw ShapeMismatch("encode_sequence needs at least one interval");
  std::vector<Var> rows;
  rows.reserve(in.intervals.size());
  for (const auto& sub : in.intervals) rows.push_back(encode_subgraph(tape, sub, p, cfg));
  return nn::stack_rows(rows);
}

}  // namespace txscam::encoder
