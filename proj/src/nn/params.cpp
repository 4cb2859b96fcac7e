#include "txscam/nn/params.hpp"

#include <cmath>
#include <fstream>

namespace txscam::nn {

Param& ParamSet::add(std::string name, Matrix value, bool decay) {
  if (find(name)) throw Error("duplicate parameter name '" + name + "'");
  return params_.emplace_back(std::move(name), std::move(value), decay);
}

Param& ParamSet::add_xavier(std::string name, std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix m(rows, cols);
  xavier_uniform(m, rng);
  return add(std::move(name), std::move(m), true);
}

Param& ParamSet::add_zeros(std::string name, std::size_t rows, std::size_t cols, bool decay) {
  return add(std::move(name), Matrix(rows, cols), decay);
}

Param* ParamSet::find(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return &p;
  return nullptr;
}

Param& ParamSet::at(const std::string& name) {
  if (auto* p = find(name)) return *p;
  throw Error("no parameter named '" + name + "'");
}

const Param& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

void ParamSet::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double ParamSet::weight_norm_sq() const {
  double s = 0.0;
  for (const auto& p : params_)
    if (p.decay)
      for (double x : p.value.data()) s += x * x;
  return s;
}

void xavier_uniform(Matrix& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (auto& x : m.data()) x = rng.uniform(-limit, limit);
}

Adam::Adam(ParamSet& params, AdamConfig cfg) : params_(params), cfg_(cfg) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.rows(), p.value.cols());
    v_.emplace_back(p.value.rows(), p.value.cols());
  }
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t idx = 0;
  for (auto& p : params_) {
    auto& m = m_[idx];
    auto& v = v_[idx];
    ++idx;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg_.eps);
      if (p.decay) update += cfg_.weight_decay * p.value[i];
      p.value[i] -= cfg_.lr * update;
    }
  }
}

nlohmann::ordered_json params_to_json(const ParamSet& params) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& p : params) {
    nlohmann::ordered_json e;
    e["name"] = p.name;
    e["shape"] = {p.value.rows(), p.value.cols()};
    e["data"] = p.value.data();
    arr.push_back(std::move(e));
  }
  return arr;
}

void params_from_json(const nlohmann::json& j, ParamSet& params) {
  if (!j.is_array()) throw InputError("checkpoint params must be an array");
  for (auto& p : params) {
    const nlohmann::json* found = nullptr;
    for (const auto& e : j)
      if (e.at("name").get<std::string>() == p.name) found = &e;
    if (!found) throw ShapeMismatch("checkpoint lacks parameter '" + p.name + "'");
    const auto shape = found->at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != p.value.rows() || shape[1] != p.value.cols())
      throw ShapeMismatch("checkpoint shape for '" + p.name + "' disagrees with config " + p.value.shape_str());
    auto data = found->at("data").get<std::vector<double>>();
    p.value = Matrix(shape[0], shape[1], std::move(data));
    p.zero_grad();
  }
}

void save_checkpoint(const std::string& path, const ParamSet& params, const nlohmann::ordered_json& meta) {
  nlohmann::ordered_json doc;
  doc["format_version"] = kCheckpointVersion;
  doc["meta"] = meta;
  doc["params"] = params_to_json(params);
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path);
  out << doc.dump() << '\n';
}

nlohmann::json load_checkpoint_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open checkpoint " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InputError("checkpoint " + path + " is not valid JSON: " + e.what());
  }
  if (!doc.contains("format_version") || doc["format_version"] != kCheckpointVersion)
    throw InputError("unsupported checkpoint format version in " + path);
  return doc;
}

double grad_check(const ScalarFn& f, const std::vector<Param*>& params, double eps) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    if (!std::isfinite(loss.scalar())) throw NonFiniteLoss("objective is not finite");
    tape.backward(loss);
  }
  auto eval = [&]() {
    Tape tape(false);
    const double v = f(tape).scalar();
    if (!std::isfinite(v)) throw NonFiniteLoss("objective is not finite under perturbation");
    return v;
  };
  double worst = 0.0;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + eps;
      const double up = eval();
      p->value[i] = orig - eps;
      const double down = eval();
      p->value[i] = orig;
      const double fd = (up - down) / (2.0 * eps);
      const double err = std::abs(p->grad[i] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace txscam::nn
