#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "txscam/alias.hpp"
#include "txscam/errors.hpp"
#include "txscam/rng.hpp"
#include "txscam/txgraph.hpp"

namespace txscam::strwalk {

inline constexpr std::int64_t kSecondsPerDay = 86400;

class NegativeOffset : public Error {
 public:
  using Error::Error;
};

class EmptyTimestamps : public Error {
 public:
  using Error::Error;
};

/// How step weights are anchored over an incident-edge time set T.
///   MinAnchored:  mu(t) = t - min(T) + 1   (later edges weigh more)
///   MaxAnchored:  mu(t) = max(T) - t + 1   (earlier edges weigh more)
enum class TemporalVariant { MinAnchored, MaxAnchored };

struct WalkConfig {
  int structure_window = 10;  // w
  int interval_days = 7;      // k
  int walk_length = 20;       // xi
  TemporalVariant temporal_variant = TemporalVariant::MinAnchored;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct SampledEdge {
  EdgeId edge;
  std::int64_t tau;
};

/// Output of one walk. Edges are unique and ordered by (timestamp, edge id);
/// nodes are sorted by NodeId. All tau values share the start node's earliest
/// timestamp as origin.
struct SampledGraph {
  NodeId start = 0;
  std::int64_t t_first = 0;
  int interval_days = 7;
  std::vector<NodeId> nodes;
  std::vector<SampledEdge> edges;
  std::vector<NodeId> walk;
};

struct Subgraph {
  NodeId center = 0;
  std::vector<NodeId> members;  // sorted, includes the center
  std::vector<EdgeId> edges;    // time order
};

/// Position in `intervals` equals tau; gaps are explicit empty subgraphs.
struct SubgraphSequence {
  NodeId start = 0;
  std::int64_t t_first = 0;
  int interval_days = 7;
  std::vector<Subgraph> intervals;
};

/// Normalized step probabilities over T. Throws EmptyTimestamps.
std::vector<double> temporal_step_weights(std::span<const std::int64_t> timestamps, TemporalVariant variant);

/// floor((t - t_first) / (86400 k)). Throws NegativeOffset when t < t_first.
std::int64_t interval_index(std::int64_t t, std::int64_t t_first, int k);

struct StructureSample {
  std::vector<NodeId> nodes;
  std::vector<EdgeId> edges;  // deduplicated, time order
};

/// Draws `w` edges uniformly with replacement from the node's first
/// k-day window and deduplicates; returns every candidate when there are at
/// most `w` of them.
StructureSample structure_sample(const TemporalMultiDiGraph& g, NodeId v, int w, int k, Rng& rng);

/// Per-walk RNG stream derived from the global seed and the start address, so
/// that serial and parallel batches agree.
Rng walk_rng(std::uint64_t seed, const Address& start);

/// One structure-temporal random walk from `start`. Throws UnknownNode.
SampledGraph strwalk(const TemporalMultiDiGraph& g, const Address& start, const WalkConfig& cfg, Rng& rng);
/// Convenience: uses walk_rng(cfg.rng_seed, start).
SampledGraph strwalk(const TemporalMultiDiGraph& g, const Address& start, const WalkConfig& cfg);

/// Every edge within `hops` of `start` (no sampling); the unsampled baseline.
SampledGraph full_neighborhood(const TemporalMultiDiGraph& g, const Address& start, int hops, int k);

SubgraphSequence slice_subgraph_sequence(const TemporalMultiDiGraph& g, const SampledGraph& s);

/// Header record followed by one record per edge.
void write_sampled_graph_jsonl(std::ostream& out, const TemporalMultiDiGraph& g, const SampledGraph& s,
                               const WalkConfig& cfg);

}  // namespace txscam::strwalk
