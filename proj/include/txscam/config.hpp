#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>

#include "txscam/encoder.hpp"
#include "txscam/fetch.hpp"
#include "txscam/seqmodel.hpp"
#include "txscam/strwalk.hpp"
#include "txscam/synthgen.hpp"

namespace txscam::config {

/// Flat `key = value` document; '#' starts a comment.
using KeyValues = std::map<std::string, std::string>;

/// Throws ConfigError with the offending line number.
KeyValues parse_key_values(std::istream& in);
KeyValues parse_key_values_file(const std::string& path);
void write_key_values(std::ostream& out, const KeyValues& kv);

struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t threads = 0;  // 0 = hardware concurrency
  bool balance = true;      // subsample the majority class before splitting

  strwalk::WalkConfig walk;
  encoder::FeatureConfig feature;
  seqmodel::SeqModelConfig model;
  synthgen::GenConfig gen;
  fetch::FetchConfig fetch;
  fetch::CrawlSpec crawl;

  std::string transactions, labels, checkpoint, accounts, split, out;
  std::string format = "csv";

  /// Copies the global seed and shared interval length into every section.
  void propagate();
  void validate() const;
};

/// Unknown keys and unparsable values throw ConfigError. `api_key` is
/// rejected: the secret comes from the environment only.
void apply(RunConfig& cfg, const KeyValues& kv);
KeyValues to_key_values(const RunConfig& cfg);

}  // namespace txscam::config
