#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "txscam/encoder.hpp"
#include "txscam/nn/autodiff.hpp"
#include "txscam/nn/params.hpp"

namespace txscam::seqmodel {

using nn::Matrix;
using nn::Tape;
using nn::Var;

class ConflictingFlags : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

struct SeqModelConfig {
  std::size_t hidden = 16;  // d
  std::size_t layers = 1;
  std::size_t heads = 2;
  std::size_t max_len = 157;  // M, in intervals (about 3 years of weeks)
  std::size_t conv_channels = 8;
  std::size_t conv_kernel = 3;
  double weight_decay = 5e-4;  // lambda
  double lr = 1e-3;
  std::size_t epochs = 30;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  bool causal = false;
  bool disable_graph_encoder = false;  // Phi <- linear map of pooled raw node features
  bool disable_transposed = false;     // attention over time steps of Phi directly

  void validate() const;
};

struct Mask {
  nn::ValidMask valid;  // per position
  bool causal = false;
};

/// Transposes an m x D feature sequence to D x L. Sequences longer than
/// `max_len` keep their most recent `max_len` rows; L = max(pad_to, kept)
/// where pad_to = 0 means max_len. Columns at and beyond the kept length are
/// zero and marked invalid.
struct Embedded {
  Matrix x;
  Mask mask;
};
Embedded transpose_embed(const Matrix& phi, std::size_t max_len, std::size_t pad_to = 0);

/// Sets masked entries of a square score matrix to -1e9 (columns flagged
/// invalid, plus j > i when causal).
Matrix apply_mask(const Matrix& scores, const Mask& mask);

/// softmax(Q K^T / sqrt(d)) V per block and head, Q = X Theta_Q, K = X Theta_K,
/// V = X Theta_V. `x` is (blocks * len) x d.
Var attention(Var x, Var theta_q, Var theta_k, Var theta_v, std::size_t blocks, const Mask& mask,
              std::size_t heads, std::vector<Matrix>* weights_out = nullptr);

/// sigmoid(h_s W_1 + b_1) W_2 + b_2.
Var feed_forward(Var h_s, Var w1, Var b1, Var w2, Var b2);

/// Centred 1-D convolution along rows (zero padding), max-pool over valid
/// rows, projection to two logits. Invalid rows of `h` must already be zero.
Var classify(Var h, Var conv_w, Var conv_b, Var proj_w, Var proj_b, std::size_t kernel,
             std::span<const std::uint8_t> valid);

/// Cross-entropy plus lambda times the squared norm of every decayed weight.
Var loss(Var logits, std::size_t label, std::span<const Var> weights, double lambda);

struct Prediction {
  bool malicious = false;
  double score = 0.0;  // softmax probability of the malicious class
  std::vector<double> logits;
};

/// Ties (equal logits) resolve to normal.
Prediction decide(const Matrix& logits);

struct ForwardTrace {
  Matrix phi;                         // encoder output (m x D)
  std::vector<Matrix> attention;      // per layer, block, head
  Mask mask;
};

/// Graph encoder plus sequence classifier sharing one parameter set.
class Model {
 public:
  Model(encoder::FeatureConfig feat, SeqModelConfig seq);

  const encoder::FeatureConfig& feature_config() const noexcept { return feat_; }
  const SeqModelConfig& config() const noexcept { return seq_; }
  SeqModelConfig& mutable_config() noexcept { return seq_; }
  nn::ParamSet& params() noexcept { return params_; }
  const nn::ParamSet& params() const noexcept { return params_; }

  /// m x D sequence fed to the transformer (graph encoder or its ablation).
  Var features(Tape& tape, const encoder::EncoderInput& in) const;
  /// Two logits. `pad_to` pads the time axis (0 = no extra padding).
  Var logits(Tape& tape, const encoder::EncoderInput& in, std::size_t pad_to = 0, ForwardTrace* trace = nullptr) const;
  Var logits_from_features(Tape& tape, Var phi, std::size_t pad_to = 0, ForwardTrace* trace = nullptr) const;
  Var objective(Tape& tape, const encoder::EncoderInput& in, std::size_t label, double lambda) const;

  Prediction predict(const encoder::EncoderInput& in) const;
  /// Encoder output only (inference).
  Matrix embed(const encoder::EncoderInput& in) const;

  nlohmann::ordered_json config_json() const;
  void save(const std::string& path, const nlohmann::ordered_json& extra_meta = {}) const;
  /// Throws InputError (missing/invalid file) or ShapeMismatch (config disagreement).
  static Model load(const std::string& path);

 private:
  Var bind(Tape& tape, const std::string& name) const;

  encoder::FeatureConfig feat_;
  SeqModelConfig seq_;
  mutable nn::ParamSet params_;
};

encoder::FeatureConfig feature_config_from_json(const nlohmann::json& j);
SeqModelConfig seq_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Training

struct Example {
  std::string account;
  encoder::EncoderInput input;
  std::size_t label = 0;  // 1 = malicious
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_weighted_f1 = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Adam with decoupled weight decay; shuffles deterministically from the
/// config seed and restores the best-validation parameters at the end.
/// Throws SingleClassDataset when the training set lacks a class.
TrainResult train(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set);

double mean_objective(const Model& model, const std::vector<Example>& set, double lambda);

}  // namespace txscam::seqmodel
