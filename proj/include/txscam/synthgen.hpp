#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "txscam/alias.hpp"
#include "txscam/rng.hpp"
#include "txscam/txgraph.hpp"

namespace txscam::synthgen {

class InvalidPhaseConfig : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Synthetic corpus parameters. Class signatures are deliberately easy to
/// separate: the generator is a pipeline scaffold, not a model of real chains.
struct GenConfig {
  std::size_t normal_accounts = 10;
  std::size_t scam_accounts = 10;
  std::size_t phishing_accounts = 10;

  std::int64_t start_time = 1'600'000'000;
  int timeline_days = 180;
  int interval_days = 7;

  double power_law_exponent = 2.2;  // target degree-frequency exponent of the pool
  std::size_t pool_size = 2000;
  std::size_t background_tx = 8000;

  std::size_t normal_tx = 40;

  std::size_t mimic_intervals = 12;
  std::size_t harvest_intervals = 8;
  std::size_t mimic_tx_per_interval = 3;
  std::size_t harvest_victims = 60;
  double fresh_victim_ratio = 0.5;  // victims outside the shared pool
  std::size_t concentrators = 3;
  std::size_t forward_splits = 2;   // outgoing transfers per harvested deposit

  std::size_t phishing_counterparties = 6;
  std::size_t phishing_multiplicity = 8;

  std::uint64_t seed = 0;

  /// Throws InvalidPhaseConfig / ConfigError.
  void validate() const;
  /// validate() plus: mimic and harvest phases must fit in the timeline.
  void validate_scam_phases() const;
};

/// Shared background accounts with Zipf-like popularity, so counterparty
/// degrees come out heavy-tailed and classes overlap in counterparties.
struct CounterpartyPool {
  std::vector<Address> addresses;
  AliasTable popularity;

  const Address& draw(Rng& rng) const { return addresses[popularity.sample(rng)]; }
};

CounterpartyPool make_pool(const GenConfig& cfg);
/// Pool-internal transfers giving the background its degree distribution.
std::vector<Transaction> background_traffic(const GenConfig& cfg, const CounterpartyPool& pool);

struct Generated {
  std::vector<Transaction> transactions;
  Address seed;
};

Generated gen_normal(const GenConfig& cfg, const CounterpartyPool& pool, Rng& rng);
Generated gen_scam(const GenConfig& cfg, const CounterpartyPool& pool, Rng& rng);
Generated gen_phishing(const GenConfig& cfg, const CounterpartyPool& pool, Rng& rng);

// Convenience overloads building the pool from `cfg`.
Generated gen_normal(const GenConfig& cfg, Rng& rng);
Generated gen_scam(const GenConfig& cfg, Rng& rng);
Generated gen_phishing(const GenConfig& cfg, Rng& rng);

struct Corpus {
  std::vector<Transaction> transactions;  // sorted by (timestamp, hash)
  LabelMap labels;
};

/// Background plus every class, each account on its own RNG stream.
Corpus generate_corpus(const GenConfig& cfg);

/// Writes transactions.csv and labels.csv into `out_dir`. Throws IoError.
Corpus gen_dataset(const GenConfig& cfg, const std::string& out_dir);

/// Least-squares slope of log(count) against log(degree) over the non-empty
/// bins of the total-degree histogram.
double degree_loglog_slope(const TemporalMultiDiGraph& g);

}  // namespace txscam::synthgen
