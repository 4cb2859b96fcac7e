#include "txscam/alias.hpp"

#include <cmath>

namespace txscam {

AliasTable::AliasTable(std::span<const double> weights) {
  const std::size_t n = weights.size();
  if (n == 0) throw EmptyOrZeroWeights("alias table needs at least one weight");
  double total = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) throw EmptyOrZeroWeights("weights must be finite and non-negative");
    total += w;
  }
  if (!(total > 0.0)) throw EmptyOrZeroWeights("all weights are zero");

  prob_.assign(n, 0.0);
  alias_.resize(n);
  for (std::size_t i = 0; i < n; ++i) alias_[i] = i;

  std::vector<double> scaled(n);
  std::vector<std::size_t> small, large;
  small.reserve(n);
  large.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    scaled[i] = weights[i] * static_cast<double>(n) / total;
    (scaled[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back();
    small.pop_back();
    const std::size_t l = large.back();
    prob_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] = (scaled[l] + scaled[s]) - 1.0;
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Leftovers are 1 up to rounding.
  for (auto i : large) prob_[i] = 1.0;
  for (auto i : small) prob_[i] = 1.0;
}

double AliasTable::probability(std::size_t i) const {
  const std::size_t n = prob_.size();
  double mass = prob_.at(i);
  for (std::size_t j = 0; j < n; ++j)
    if (alias_[j] == i && j != i) mass += 1.0 - prob_[j];
  return mass / static_cast<double>(n);
}

}  // namespace txscam
