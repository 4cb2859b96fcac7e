#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "txscam/nn/autodiff.hpp"
#include "txscam/rng.hpp"

namespace txscam::nn {

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

/// Ordered collection of named parameters with stable addresses.
class ParamSet {
 public:
  Param& add(std::string name, Matrix value, bool decay = true);
  /// Xavier-uniform weight matrix (fan_in = rows, fan_out = cols).
  Param& add_xavier(std::string name, std::size_t rows, std::size_t cols, Rng& rng);
  Param& add_zeros(std::string name, std::size_t rows, std::size_t cols, bool decay = false);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  Param* find(const std::string& name);

  std::size_t size() const noexcept { return params_.size(); }
  std::deque<Param>::iterator begin() { return params_.begin(); }
  std::deque<Param>::iterator end() { return params_.end(); }
  std::deque<Param>::const_iterator begin() const { return params_.begin(); }
  std::deque<Param>::const_iterator end() const { return params_.end(); }

  void zero_grad();
  /// Sum of squared entries over decayed (weight) parameters.
  double weight_norm_sq() const;

 private:
  std::deque<Param> params_;
};

void xavier_uniform(Matrix& m, Rng& rng);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // decoupled; applied to decay-flagged params only
};

class Adam {
 public:
  Adam(ParamSet& params, AdamConfig cfg);
  void step();
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  ParamSet& params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::uint64_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints: {"format_version": 1, "meta": {...}, "params": [{name, shape, data}]}

inline constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json params_to_json(const ParamSet& params);
/// Copies values into an already-shaped ParamSet. Throws ShapeMismatch when a
/// name is missing or a shape disagrees.
void params_from_json(const nlohmann::json& j, ParamSet& params);

void save_checkpoint(const std::string& path, const ParamSet& params, const nlohmann::ordered_json& meta);
/// Returns the full document; throws InputError when missing or unreadable.
nlohmann::json load_checkpoint_document(const std::string& path);

// ---------------------------------------------------------------------------
// Gradient checking

/// `f` records a scalar (1x1) objective on the given tape using the params.
using ScalarFn = std::function<Var(Tape&)>;

/// Max over all entries of |g_ad - g_fd| / max(1, |g_fd|) with central
/// differences of step `eps`. Throws NonFiniteLoss.
double grad_check(const ScalarFn& f, const std::vector<Param*>& params, double eps = 1e-6);

}  // namespace txscam::nn
