#include "txscam/seqmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "txscam/eval.hpp"

namespace txscam::seqmodel {

void SeqModelConfig::validate() const {
  if (hidden < 1 || heads < 1 || hidden % heads != 0) throw ConfigError("hidden size must be divisible by heads");
  if (max_len < 1) throw ConfigError("max_len must be >= 1");
  if (layers < 1) throw ConfigError("layers must be >= 1");
  if (conv_channels < 1 || conv_kernel < 1 || conv_kernel % 2 == 0)
    throw ConfigError("conv kernel must be odd and channels >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be >= 0");
  if (disable_graph_encoder && disable_transposed)
    throw ConflictingFlags("disable_graph_encoder and disable_transposed are mutually exclusive");
}

Embedded transpose_embed(const Matrix& phi, std::size_t max_len, std::size_t pad_to) {
  if (phi.rows() < 1) throw ShapeMismatch("transpose_embed needs at least one row");
  const std::size_t kept = std::min(phi.rows(), max_len);
  const std::size_t skip = phi.rows() - kept;
  const std::size_t len = std::max(kept, pad_to == 0 ? max_len : pad_to);
  Embedded out;
  out.x = Matrix(phi.cols(), len);
  out.mask.valid.assign(len, 0);
  for (std::size_t t = 0; t < kept; ++t) {
    out.mask.valid[t] = 1;
    for (std::size_t j = 0; j < phi.cols(); ++j) out.x(j, t) = phi(skip + t, j);
  }
  return out;
}

Matrix apply_mask(const Matrix& scores, const Mask& mask) {
  if (scores.rows() != scores.cols() || scores.cols() != mask.valid.size())
    throw ShapeMismatch("apply_mask: scores " + scores.shape_str() + " vs mask of " +
                        std::to_string(mask.valid.size()));
  Matrix out = scores;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j)
      if (!mask.valid[j] || (mask.causal && j > i)) out(i, j) = nn::kMaskFill;
  return out;
}

Var attention(Var x, Var theta_q, Var theta_k, Var theta_v, std::size_t blocks, const Mask& mask,
              std::size_t heads, std::vector<Matrix>* weights_out) {
  if (blocks == 0 || x.rows() % blocks != 0) throw ShapeMismatch("attention: rows not divisible by blocks");
  const std::size_t len = x.rows() / blocks;
  Var q = nn::matmul(x, theta_q);
  Var k = nn::matmul(x, theta_k);
  Var v = nn::matmul(x, theta_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  return nn::block_attention(q, k, v, blocks, len, heads, mask.valid, mask.causal, scale, weights_out);
}

Var feed_forward(Var h_s, Var w1, Var b1, Var w2, Var b2) {
  return nn::add_row(nn::matmul(nn::sigmoid(nn::add_row(nn::matmul(h_s, w1), b1)), w2), b2);
}

Var classify(Var h, Var conv_w, Var conv_b, Var proj_w, Var proj_b, std::size_t kernel,
             std::span<const std::uint8_t> valid) {
  if (valid.size() != h.rows()) throw ShapeMismatch("classify: mask length differs from sequence length");
  if (conv_w.rows() != kernel * h.cols())
    throw ShapeMismatch("classify: conv filter " + conv_w.value().shape_str() + " for input " + h.value().shape_str());
  Var conv = nn::add_row(nn::matmul(nn::unfold_rows(h, kernel), conv_w), conv_b);
  Var pooled = nn::masked_max_rows(conv, valid);
  return nn::add_row(nn::matmul(pooled, proj_w), proj_b);
}

Var loss(Var logits, std::size_t label, std::span<const Var> weights, double lambda) {
  if (label > 1) throw InputError("label must be 0 or 1");
  Var ce = nn::cross_entropy(logits, label);
  if (lambda == 0.0 || weights.empty()) return ce;
  std::vector<Var> terms;
  for (const Var& w : weights) terms.push_back(nn::sum_squares(w));
  Var penalty = nn::sum(nn::stack_rows(terms));
  return nn::add(ce, nn::scale(penalty, lambda));
}

Prediction decide(const Matrix& logits) {
  if (logits.size() != 2) throw ShapeMismatch("expected two logits, got " + logits.shape_str());
  Prediction p;
  p.logits = {logits[0], logits[1]};
  const double mx = std::max(logits[0], logits[1]);
  const double e0 = std::exp(logits[0] - mx), e1 = std::exp(logits[1] - mx);
  p.score = e1 / (e0 + e1);
  p.malicious = logits[1] > logits[0];
  return p;
}

// ---------------------------------------------------------------------------

namespace {

std::string layer_name(std::size_t l, const char* what) { return "seq.l" + std::to_string(l) + "." + what; }

bool transposed(const SeqModelConfig& c) { return !c.disable_transposed; }

std::size_t head_channels(const encoder::FeatureConfig& f, const SeqModelConfig& c) {
  return transposed(c) ? f.hidden : c.hidden;
}

}  // namespace

Model::Model(encoder::FeatureConfig feat, SeqModelConfig seq) : feat_(feat), seq_(seq) {
  feat_.validate();
  seq_.validate();
  Rng rng = Rng::stream(seq_.seed, fnv1a("model-init"));
  const std::size_t D = feat_.hidden, d = seq_.hidden;

  if (seq_.disable_graph_encoder) {
    params_.add_xavier("seq.raw_w", encoder::kNodeFeatureDim, D, rng);
    params_.add_zeros("seq.raw_b", 1, D);
  } else {
    encoder::EncoderParams::create(params_, feat_, rng);
  }

  if (transposed(seq_)) {
    params_.add_xavier("seq.token_u", 1, d, rng);
    params_.add_xavier("seq.channel_c", D, d, rng);
  } else if (D != d) {
    params_.add_xavier("seq.in_proj", D, d, rng);
  }
  for (std::size_t l = 0; l < seq_.layers; ++l) {
    params_.add_xavier(layer_name(l, "theta_q"), d, d, rng);
    params_.add_xavier(layer_name(l, "theta_k"), d, d, rng);
    params_.add_xavier(layer_name(l, "theta_v"), d, d, rng);
    params_.add_xavier(layer_name(l, "w1"), d, d, rng);
    params_.add_zeros(layer_name(l, "b1"), 1, d);
    params_.add_xavier(layer_name(l, "w2"), d, d, rng);
    params_.add_zeros(layer_name(l, "b2"), 1, d);
  }
  if (transposed(seq_)) params_.add_xavier("seq.readout", d, 1, rng);
  const std::size_t C = head_channels(feat_, seq_);
  params_.add_xavier("seq.conv_w", seq_.conv_kernel * C, seq_.conv_channels, rng);
  params_.add_zeros("seq.conv_b", 1, seq_.conv_channels);
  params_.add_xavier("seq.proj_w", seq_.conv_channels, 2, rng);
  params_.add_zeros("seq.proj_b", 1, 2);
}

Var Model::bind(Tape& tape, const std::string& name) const { return tape.param(params_.at(name)); }

Var Model::features(Tape& tape, const encoder::EncoderInput& in) const {
  if (in.intervals.empty()) throw ShapeMismatch("empty subgraph sequence");
  if (seq_.disable_graph_encoder) {
    Var raw = tape.constant(in.pooled_raw());
    return nn::add_row(nn::matmul(raw, bind(tape, "seq.raw_w")), bind(tape, "seq.raw_b"));
  }
  auto vars = encoder::EncoderVars::bind(tape, encoder::EncoderParams::bind(params_));
  return encoder::encode_sequence(tape, in, vars, feat_);
}

Var Model::logits(Tape& tape, const encoder::EncoderInput& in, std::size_t pad_to, ForwardTrace* trace) const {
  return logits_from_features(tape, features(tape, in), pad_to, trace);
}

Var Model::logits_from_features(Tape& tape, Var phi, std::size_t pad_to, ForwardTrace* trace) const {
  const std::size_t D = phi.cols(), d = seq_.hidden;
  if (D != feat_.hidden) throw ShapeMismatch("feature width " + std::to_string(D) + " != " + std::to_string(feat_.hidden));
  const std::size_t m = phi.rows();
  const std::size_t kept = std::min(m, seq_.max_len);
  const std::size_t L = std::max(kept, pad_to);

  Var seq = kept < m ? nn::slice_rows(phi, m - kept, kept) : phi;
  if (L > kept) {
    std::vector<Var> parts{seq, tape.constant(Matrix(L - kept, D))};
    seq = nn::stack_rows(parts);
  }
  Mask mask;
  mask.valid.assign(L, 0);
  std::fill_n(mask.valid.begin(), kept, 1);
  mask.causal = seq_.causal;
  if (trace) {
    trace->phi = phi.value();
    trace->mask = mask;
    trace->attention.clear();
  }

  const bool tr = transposed(seq_);
  const std::size_t blocks = tr ? D : 1;
  Var e;
  if (tr) {
    // Token (j, t) carries the scalar Phi[t][j]: x * u + c_j.
    Var x = nn::reshape(nn::transpose(seq), D * L, 1);
    Matrix onehot(D * L, D);
    for (std::size_t j = 0; j < D; ++j)
      for (std::size_t t = 0; t < L; ++t) onehot(j * L + t, j) = 1.0;
    e = nn::add(nn::matmul(x, bind(tape, "seq.token_u")),
                nn::matmul(tape.constant(std::move(onehot)), bind(tape, "seq.channel_c")));
  } else {
    e = D != d ? nn::matmul(seq, bind(tape, "seq.in_proj")) : seq;
  }

  Var h = e;
  for (std::size_t l = 0; l < seq_.layers; ++l) {
    std::vector<Matrix>* w = trace ? &trace->attention : nullptr;
    std::vector<Matrix> layer_w;
    Var hs = attention(h, bind(tape, layer_name(l, "theta_q")), bind(tape, layer_name(l, "theta_k")),
                       bind(tape, layer_name(l, "theta_v")), blocks, mask, seq_.heads, w ? &layer_w : nullptr);
    if (w) w->insert(w->end(), layer_w.begin(), layer_w.end());
    h = feed_forward(hs, bind(tape, layer_name(l, "w1")), bind(tape, layer_name(l, "b1")),
                     bind(tape, layer_name(l, "w2")), bind(tape, layer_name(l, "b2")));
  }

  Var y;
  if (tr) {
    y = nn::transpose(nn::reshape(nn::matmul(h, bind(tape, "seq.readout")), D, L));
  } else {
    y = h;
  }
  if (L > kept) {
    Matrix keep(L, y.cols());
    for (std::size_t t = 0; t < kept; ++t)
      for (std::size_t c = 0; c < y.cols(); ++c) keep(t, c) = 1.0;
    y = nn::hadamard(y, tape.constant(std::move(keep)));
  }
  return classify(y, bind(tape, "seq.conv_w"), bind(tape, "seq.conv_b"), bind(tape, "seq.proj_w"),
                  bind(tape, "seq.proj_b"), seq_.conv_kernel, mask.valid);
}

Var Model::objective(Tape& tape, const encoder::EncoderInput& in, std::size_t label, double lambda) const {
  Var out = logits(tape, in);
  std::vector<Var> weights;
  for (auto& p : params_)
    if (p.decay) weights.push_back(tape.param(p));
  return loss(out, label, weights, lambda);
}

Prediction Model::predict(const encoder::EncoderInput& in) const {
  Tape tape(false);
  return decide(logits(tape, in).value());
}

Matrix Model::embed(const encoder::EncoderInput& in) const {
  Tape tape(false);
  return features(tape, in).value();
}

nlohmann::ordered_json Model::config_json() const {
  nlohmann::ordered_json f;
  f["node_dim"] = feat_.node_dim;
  f["edge_dim"] = feat_.edge_dim;
  f["hidden"] = feat_.hidden;
  f["max_neighbors"] = feat_.max_neighbors;
  f["leaky_slope"] = feat_.leaky_slope;
  f["elu_alpha"] = feat_.elu_alpha;
  nlohmann::ordered_json s;
  s["hidden"] = seq_.hidden;
  s["layers"] = seq_.layers;
  s["heads"] = seq_.heads;
  s["max_len"] = seq_.max_len;
  s["conv_channels"] = seq_.conv_channels;
  s["conv_kernel"] = seq_.conv_kernel;
  s["weight_decay"] = seq_.weight_decay;
  s["lr"] = seq_.lr;
  s["epochs"] = seq_.epochs;
  s["batch_size"] = seq_.batch_size;
  s["seed"] = seq_.seed;
  s["causal"] = seq_.causal;
  s["disable_graph_encoder"] = seq_.disable_graph_encoder;
  s["disable_transposed"] = seq_.disable_transposed;
  return {{"feature", f}, {"seq", s}};
}

encoder::FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  encoder::FeatureConfig f;
  f.node_dim = j.value("node_dim", f.node_dim);
  f.edge_dim = j.value("edge_dim", f.edge_dim);
  f.hidden = j.value("hidden", f.hidden);
  f.max_neighbors = j.value("max_neighbors", f.max_neighbors);
  f.leaky_slope = j.value("leaky_slope", f.leaky_slope);
  f.elu_alpha = j.value("elu_alpha", f.elu_alpha);
  return f;
}

SeqModelConfig seq_config_from_json(const nlohmann::json& j) {
  SeqModelConfig s;
  s.hidden = j.value("hidden", s.hidden);
  s.layers = j.value("layers", s.layers);
  s.heads = j.value("heads", s.heads);
  s.max_len = j.value("max_len", s.max_len);
  s.conv_channels = j.value("conv_channels", s.conv_channels);
  s.conv_kernel = j.value("conv_kernel", s.conv_kernel);
  s.weight_decay = j.value("weight_decay", s.weight_decay);
  s.lr = j.value("lr", s.lr);
  s.epochs = j.value("epochs", s.epochs);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.seed = j.value("seed", s.seed);
  s.causal = j.value("causal", s.causal);
  s.disable_graph_encoder = j.value("disable_graph_encoder", s.disable_graph_encoder);
  s.disable_transposed = j.value("disable_transposed", s.disable_transposed);
  return s;
}

void Model::save(const std::string& path, const nlohmann::ordered_json& extra_meta) const {
  nlohmann::ordered_json meta = config_json();
  if (!extra_meta.is_null())
    for (auto it = extra_meta.begin(); it != extra_meta.end(); ++it) meta[it.key()] = it.value();
  nn::save_checkpoint(path, params_, meta);
}

Model Model::load(const std::string& path) {
  nlohmann::json doc = nn::load_checkpoint_document(path);
  if (!doc.contains("meta") || !doc["meta"].contains("feature") || !doc["meta"].contains("seq"))
    throw ShapeMismatch("checkpoint lacks model configuration");
  auto build = [&] {
    try {
      return Model(feature_config_from_json(doc["meta"]["feature"]), seq_config_from_json(doc["meta"]["seq"]));
    } catch (const nlohmann::json::exception& e) {
      throw ShapeMismatch(std::string("checkpoint configuration: ") + e.what());
    } catch (const ConfigError& e) {
      throw ShapeMismatch(std::string("checkpoint configuration: ") + e.what());
    }
  };
  Model m = build();
  if (!doc.contains("params")) throw ShapeMismatch("checkpoint lacks parameters");
  nn::params_from_json(doc["params"], m.params_);
  return m;
}

// ---------------------------------------------------------------------------
// Training

namespace {

struct Snapshot {
  std::vector<Matrix> values;
};

Snapshot snapshot(const nn::ParamSet& ps) {
  Snapshot s;
  for (const auto& p : ps) s.values.push_back(p.value);
  return s;
}

void restore(nn::ParamSet& ps, const Snapshot& s) {
  std::size_t i = 0;
  for (auto& p : ps) p.value = s.values[i++];
}

struct Evaluation {
  double ce = 0.0;
  double weighted_f1 = 0.0;
};

Evaluation evaluate(const Model& model, const std::vector<Example>& set) {
  Evaluation ev;
  std::vector<int> preds, truth;
  for (const auto& ex : set) {
    Tape tape(false);
    Var lg = model.logits(tape, ex.input);
    ev.ce += nn::cross_entropy(lg, ex.label).scalar();
    preds.push_back(decide(lg.value()).malicious ? 1 : 0);
    truth.push_back(static_cast<int>(ex.label));
  }
  ev.ce /= static_cast<double>(set.size());
  ev.weighted_f1 = eval::weighted_f1(preds, truth);
  return ev;
}

}  // namespace

double mean_objective(const Model& model, const std::vector<Example>& set, double lambda) {
  if (set.empty()) throw InputError("empty example set");
  return evaluate(model, set).ce + lambda * model.params().weight_norm_sq();
}

TrainResult train(Model& model, const std::vector<Example>& train_set, const std::vector<Example>& val_set) {
  const SeqModelConfig& cfg = model.config();
  cfg.validate();
  if (train_set.empty()) throw SingleClassDataset("training set is empty");
  bool has[2] = {false, false};
  for (const auto& ex : train_set) {
    if (ex.label > 1) throw InputError("label must be 0 or 1");
    has[ex.label] = true;
  }
  if (!has[0] || !has[1]) throw SingleClassDataset("training set contains a single class");

  // The L2 term enters through decoupled decay; gradients come from the
  // cross-entropy alone so the penalty is not applied twice.
  nn::AdamConfig acfg;
  acfg.lr = cfg.lr;
  acfg.weight_decay = cfg.weight_decay;
  nn::Adam adam(model.params(), acfg);
  Rng rng = Rng::stream(cfg.seed, fnv1a("shuffle"));

  const std::vector<Example>& val = val_set.empty() ? train_set : val_set;
  TrainResult result;
  Snapshot best = snapshot(model.params());
  double best_f1 = -1.0, best_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double ce_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      model.params().zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const Example& ex = train_set[order[b]];
        Tape tape;
        Var ce = nn::cross_entropy(model.logits(tape, ex.input), ex.label);
        if (!std::isfinite(ce.scalar())) throw nn::NonFiniteLoss("non-finite loss on " + ex.account);
        ce_sum += ce.scalar();
        tape.backward(ce);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& p : model.params()) p.grad *= inv;
      adam.step();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double penalty = cfg.weight_decay * model.params().weight_norm_sq();
    rec.train_loss = ce_sum / static_cast<double>(train_set.size()) + penalty;
    Evaluation ev = evaluate(model, val);
    rec.val_loss = ev.ce + penalty;
    rec.val_weighted_f1 = ev.weighted_f1;
    result.history.push_back(rec);
    if (ev.weighted_f1 > best_f1 || (ev.weighted_f1 == best_f1 && rec.val_loss < best_loss)) {
      best_f1 = ev.weighted_f1;
      best_loss = rec.val_loss;
      best = snapshot(model.params());
      result.best_epoch = epoch;
    }
  }
  if (result.best_epoch > 0) restore(model.params(), best);
  return result;
}

}  // namespace txscam::seqmodel
