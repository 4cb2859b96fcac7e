#include "txscam/strwalk.hpp"

#include <algorithm>
#include <ostream>
#include <set>

#include <json.hpp>

namespace txscam::strwalk {

void WalkConfig::validate() const {
  if (structure_window < 1) throw ConfigError("structure window must be >= 1");
  if (interval_days < 1) throw ConfigError("interval days must be >= 1");
  if (walk_length < 1) throw ConfigError("walk length must be >= 1");
}

std::vector<double> temporal_step_weights(std::span<const std::int64_t> timestamps, TemporalVariant variant) {
  if (timestamps.empty()) throw EmptyTimestamps("temporal step weights need at least one timestamp");
  const auto [lo, hi] = std::minmax_element(timestamps.begin(), timestamps.end());
  std::vector<double> p(timestamps.size());
  double total = 0.0;
  for (std::size_t i = 0; i < timestamps.size(); ++i) {
    const std::int64_t mu = variant == TemporalVariant::MinAnchored ? timestamps[i] - *lo + 1 : *hi - timestamps[i] + 1;
    p[i] = static_cast<double>(mu);
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

std::int64_t interval_index(std::int64_t t, std::int64_t t_first, int k) {
  if (k < 1) throw ConfigError("interval days must be >= 1");
  if (t < t_first) throw NegativeOffset("timestamp precedes the interval origin");
  return (t - t_first) / (kSecondsPerDay * static_cast<std::int64_t>(k));
}

StructureSample structure_sample(const TemporalMultiDiGraph& g, NodeId v, int w, int k, Rng& rng) {
  StructureSample out;
  if (g.incident_edges(v).empty()) return out;
  const std::int64_t sigma = min_timestamp(g, v);
  auto candidates = window_incidences(g, v, sigma, sigma + kSecondsPerDay * k);

  std::vector<std::size_t> picked;
  if (candidates.size() <= static_cast<std::size_t>(w)) {
    picked.resize(candidates.size());
    for (std::size_t i = 0; i < picked.size(); ++i) picked[i] = i;
  } else {
    const std::vector<double> uniform(candidates.size(), 1.0 / static_cast<double>(candidates.size()));
    AliasTable table(uniform);
    for (int i = 0; i < w; ++i) picked.push_back(table.sample(rng));
    std::sort(picked.begin(), picked.end());
    picked.erase(std::unique(picked.begin(), picked.end()), picked.end());
  }
  // A self loop is listed twice in the incidence list; dedupe by edge id.
  std::set<EdgeId> edges;
  std::set<NodeId> nodes;
  for (auto i : picked) {
    edges.insert(candidates[i].edge);
    nodes.insert(candidates[i].neighbor);
  }
  out.edges.assign(edges.begin(), edges.end());
  out.nodes.assign(nodes.begin(), nodes.end());
  return out;
}

Rng walk_rng(std::uint64_t seed, const Address& start) { return Rng::stream(seed, start.hash()); }

namespace {

SampledGraph finish(const TemporalMultiDiGraph& g, NodeId start, int k, const std::set<EdgeId>& edges,
                    std::set<NodeId> nodes, std::vector<NodeId> walk) {
  SampledGraph out;
  out.start = start;
  out.interval_days = k;
  out.walk = std::move(walk);
  nodes.insert(start);
  if (!g.incident_edges(start).empty()) {
    out.t_first = min_timestamp(g, start);
    // Edge ids are time ordered, so iterating the set keeps time order.
    for (EdgeId e : edges) {
      const auto t = g.edge(e).timestamp;
      if (t < out.t_first) continue;  // before the start account existed: no interval
      out.edges.push_back({e, interval_index(t, out.t_first, k)});
    }
  }
  out.nodes.assign(nodes.begin(), nodes.end());
  return out;
}

}  // namespace

SampledGraph strwalk(const TemporalMultiDiGraph& g, const Address& start, const WalkConfig& cfg, Rng& rng) {
  cfg.validate();
  const NodeId s = g.id(start);
  std::set<EdgeId> edges;
  std::set<NodeId> nodes{s};
  std::vector<NodeId> walk{s};

  auto absorb = [&](NodeId v) {
    auto ss = structure_sample(g, v, cfg.structure_window, cfg.interval_days, rng);
    edges.insert(ss.edges.begin(), ss.edges.end());
    nodes.insert(ss.nodes.begin(), ss.nodes.end());
  };

  absorb(s);
  std::vector<std::int64_t> times;
  for (int i = 1; i < cfg.walk_length; ++i) {
    const NodeId cur = walk.back();
    auto incident = g.incident_edges(cur);
    if (incident.empty()) break;
    times.clear();
    for (EdgeId e : incident) times.push_back(g.edge(e).timestamp);
    AliasTable table(temporal_step_weights(times, cfg.temporal_variant));
    const EdgeId step = incident[table.sample(rng)];
    const NodeId next = g.opposite(step, cur);
    walk.push_back(next);
    edges.insert(step);
    nodes.insert(next);
    absorb(next);
  }
  return finish(g, s, cfg.interval_days, edges, std::move(nodes), std::move(walk));
}

SampledGraph strwalk(const TemporalMultiDiGraph& g, const Address& start, const WalkConfig& cfg) {
  Rng rng = walk_rng(cfg.rng_seed, start);
  return strwalk(g, start, cfg, rng);
}

SampledGraph full_neighborhood(const TemporalMultiDiGraph& g, const Address& start, int hops, int k) {
  const NodeId s = g.id(start);
  std::set<EdgeId> edges;
  std::set<NodeId> nodes{s};
  std::vector<NodeId> frontier{s};
  for (int h = 0; h < hops && !frontier.empty(); ++h) {
    std::vector<NodeId> next;
    for (NodeId v : frontier) {
      for (EdgeId e : g.incident_edges(v)) {
        edges.insert(e);
        const NodeId u = g.opposite(e, v);
        if (nodes.insert(u).second) next.push_back(u);
      }
    }
    std::sort(next.begin(), next.end());
    frontier = std::move(next);
  }
  return finish(g, s, k, edges, std::move(nodes), {s});
}

SubgraphSequence slice_subgraph_sequence(const TemporalMultiDiGraph& g, const SampledGraph& s) {
  SubgraphSequence seq;
  seq.start = s.start;
  seq.t_first = s.t_first;
  seq.interval_days = s.interval_days;
  std::int64_t max_tau = 0;
  for (const auto& e : s.edges) max_tau = std::max(max_tau, e.tau);
  seq.intervals.resize(static_cast<std::size_t>(max_tau) + 1);
  std::vector<std::set<NodeId>> members(seq.intervals.size());
  for (std::size_t i = 0; i < seq.intervals.size(); ++i) {
    seq.intervals[i].center = s.start;
    members[i].insert(s.start);
  }
  for (const auto& e : s.edges) {
    auto& sub = seq.intervals[static_cast<std::size_t>(e.tau)];
    sub.edges.push_back(e.edge);
    members[e.tau].insert(g.source(e.edge));
    members[e.tau].insert(g.target(e.edge));
  }
  for (std::size_t i = 0; i < seq.intervals.size(); ++i)
    seq.intervals[i].members.assign(members[i].begin(), members[i].end());
  return seq;
}

void write_sampled_graph_jsonl(std::ostream& out, const TemporalMultiDiGraph& g, const SampledGraph& s,
                               const WalkConfig& cfg) {
  nlohmann::ordered_json header;
  header["start"] = g.address(s.start).str();
  header["t_first"] = s.t_first;
  header["k"] = s.interval_days;
  header["w"] = cfg.structure_window;
  header["xi"] = cfg.walk_length;
  header["seed"] = cfg.rng_seed;
  out << header.dump() << '\n';
  for (const auto& e : s.edges) {
    const auto& tx = g.edge(e.edge);
    nlohmann::ordered_json rec;
    rec["from"] = tx.from.str();
    rec["to"] = tx.to.str();
    rec["value"] = wei_to_string(tx.value);
    rec["timestamp"] = tx.timestamp;
    rec["tau"] = e.tau;
    out << rec.dump() << '\n';
  }
}

}  // namespace txscam::strwalk
