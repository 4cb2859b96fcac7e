#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "txscam/errors.hpp"
#include "txscam/rng.hpp"

namespace txscam {

class EmptyOrZeroWeights : public Error {
 public:
  using Error::Error;
};

/// Walker/Vose alias table: O(n) construction, O(1) draws.
class AliasTable {
 public:
  /// Throws EmptyOrZeroWeights when no weight is positive, or when any weight
  /// is negative or non-finite.
  explicit AliasTable(std::span<const double> weights);

  std::size_t size() const noexcept { return prob_.size(); }
  const std::vector<double>& prob() const noexcept { return prob_; }
  const std::vector<std::size_t>& alias() const noexcept { return alias_; }

  std::size_t sample(Rng& rng) const noexcept {
    const auto i = static_cast<std::size_t>(rng.below(prob_.size()));
    return rng.uniform() < prob_[i] ? i : alias_[i];
  }

  /// Exact probability of drawing index `i`, read back from the table.
  double probability(std::size_t i) const;

 private:
  std::vector<double> prob_;
  std::vector<std::size_t> alias_;
};

inline AliasTable build_alias(std::span<const double> weights) { return AliasTable(weights); }

}  // namespace txscam
