#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "txscam/errors.hpp"

namespace txscam::eval {

class LengthMismatch : public InputError {
 public:
  using InputError::InputError;
};

class Empty : public InputError {
 public:
  using InputError::InputError;
};

/// Positive class = malicious (label 1).
struct ConfusionMatrix {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Labels are 0 (normal) or 1 (malicious).
ConfusionMatrix confusion(std::span<const int> preds, std::span<const int> truth);

struct ClassMetrics {
  double precision = 0, recall = 0, f1 = 0;
  std::uint64_t support = 0;
};

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  double weighted_f1 = 0, macro_f1 = 0;
  ClassMetrics malicious, normal;
  /// Zero-denominator events, e.g. "precision_undefined".
  std::vector<std::string> flags;
};

/// Throws Empty when the matrix has no entries.
Metrics metrics(const ConfusionMatrix& cm);

double weighted_f1(std::span<const int> preds, std::span<const int> truth);

/// {counts, metrics, per_class, flags}
nlohmann::ordered_json report_json(const ConfusionMatrix& cm, const Metrics& m);

}  // namespace txscam::eval
