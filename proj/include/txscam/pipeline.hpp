#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "txscam/encoder.hpp"
#include "txscam/seqmodel.hpp"
#include "txscam/strwalk.hpp"
#include "txscam/txgraph.hpp"

namespace txscam::pipeline {

/// Runs fn(i) for i in [0, n) on up to `threads` workers (0 = hardware
/// concurrency). Work is handed out by index, so results written by index are
/// independent of scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

struct Dataset {
  std::vector<Address> accounts;  // ascending
  std::vector<int> labels;        // 1 = malicious
};

/// Labeled accounts with at least one transaction in `g`. With `balance`,
/// the larger class is subsampled (seeded) to the size of the smaller one.
Dataset labeled_dataset(const TemporalMultiDiGraph& g, bool balance, std::uint64_t seed);

struct Split {
  std::vector<std::size_t> train, val, test;  // indices into the dataset
};

/// Stratified 70/20/10 split from a seeded shuffle within each class.
Split split_dataset(const std::vector<int>& labels, std::uint64_t seed);
nlohmann::ordered_json split_to_json(const Split& s, const Dataset& d, std::uint64_t seed);
/// Throws InputError on malformed documents.
Split split_from_json(const nlohmann::json& j, const Dataset& d);

/// Sampled neighborhood of one account (STRWalk) or, with `full`, the
/// unsampled `hops`-hop neighborhood.
struct Sampling {
  strwalk::WalkConfig walk;
  bool full = false;
  int hops = 2;
};

strwalk::SampledGraph sample_account(const TemporalMultiDiGraph& g, const Address& account, const Sampling& s);
encoder::EncoderInput account_input(const TemporalMultiDiGraph& g, const Address& account, const Sampling& s,
                                    const encoder::FeatureConfig& feat);
std::vector<encoder::EncoderInput> build_inputs(const TemporalMultiDiGraph& g, const std::vector<Address>& accounts,
                                                const Sampling& s, const encoder::FeatureConfig& feat,
                                                std::size_t threads);

std::vector<seqmodel::Example> make_examples(const Dataset& d, const std::vector<std::size_t>& idx,
                                             const std::vector<encoder::EncoderInput>& inputs);

struct Detection {
  Address account;
  bool malicious = false;
  double score = 0.0;
};

std::vector<Detection> detect(const seqmodel::Model& model, const TemporalMultiDiGraph& g,
                              const std::vector<Address>& accounts, const Sampling& s, std::size_t threads);

}  // namespace txscam::pipeline
