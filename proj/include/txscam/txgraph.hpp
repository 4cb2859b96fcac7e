#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace txscam {

/// 20-byte account identifier. Parsing is case-insensitive; rendering is
/// always lowercase with a 0x prefix.
class Address {
 public:
  Address() = default;
  explicit Address(const std::array<std::uint8_t, 20>& bytes) : bytes_(bytes) {}

  /// Throws InputError unless `text` is 0x followed by exactly 40 hex digits.
  static Address parse(std::string_view text);
  static std::optional<Address> try_parse(std::string_view text) noexcept;

  std::string str() const;
  const std::array<std::uint8_t, 20>& bytes() const noexcept { return bytes_; }
  std::uint64_t hash() const noexcept;

  friend auto operator<=>(const Address&, const Address&) = default;

 private:
  std::array<std::uint8_t, 20> bytes_{};
};

std::ostream& operator<<(std::ostream& os, const Address& a);

struct AddressHash {
  std::size_t operator()(const Address& a) const noexcept { return static_cast<std::size_t>(a.hash()); }
};

/// Amounts are kept as integer wei; 128 bits covers every realistic transfer.
using Wei = unsigned __int128;

Wei parse_wei(std::string_view text);
std::string wei_to_string(Wei v);
constexpr double kWeiPerEther = 1e18;
inline double wei_to_ether(Wei v) { return static_cast<double>(v) / kWeiPerEther; }

struct Transaction {
  std::string hash;
  Address from;
  Address to;
  Wei value = 0;
  std::int64_t timestamp = 0;
  std::int64_t block = 0;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

enum class Label { Normal, Phishing, Web3Scam, Unlabeled };

std::string_view to_string(Label l);
/// Accepts normal/phishing/web3scam (case-insensitive).
Label parse_label(std::string_view text);
inline bool is_malicious(Label l) { return l == Label::Phishing || l == Label::Web3Scam; }

using LabelMap = std::map<Address, Label>;

// ---------------------------------------------------------------------------
// Ingestion

enum class TxFormat { Csv, Jsonl };

struct ParseOptions {
  TxFormat format = TxFormat::Csv;
  bool strict = false;
};

struct ParseIssue {
  std::size_t line;
  std::string message;
};

struct ParseResult {
  std::vector<Transaction> transactions;
  std::size_t skipped = 0;
  std::vector<ParseIssue> issues;
};

/// CSV needs the header `hash,from,to,value,timestamp,block` (any column order).
/// In strict mode the first bad record throws MalformedRecord; otherwise it is
/// skipped and reported.
ParseResult parse_transactions(std::istream& in, const ParseOptions& opts = {});
ParseResult parse_transactions_file(const std::string& path, const ParseOptions& opts = {});

/// Labels CSV `address,class`.
LabelMap parse_labels(std::istream& in);
LabelMap parse_labels_file(const std::string& path);

void write_transactions_csv(std::ostream& out, std::span<const Transaction> txs);
void write_labels_csv(std::ostream& out, const LabelMap& labels);

// ---------------------------------------------------------------------------
// Graph

using NodeId = std::uint32_t;
using EdgeId = std::uint32_t;

struct Incidence {
  EdgeId edge;
  NodeId neighbor;
};

/// Immutable temporal multi-directed graph. Parallel edges and self loops are
/// kept. Every adjacency list is sorted by (timestamp, edge id).
class TemporalMultiDiGraph {
 public:
  TemporalMultiDiGraph() = default;

  std::size_t node_count() const noexcept { return addresses_.size(); }
  std::size_t edge_count() const noexcept { return edges_.size(); }

  const std::vector<Address>& addresses() const noexcept { return addresses_; }
  const Address& address(NodeId v) const { return addresses_.at(v); }
  std::optional<NodeId> find(const Address& a) const;
  /// Throws UnknownNode.
  NodeId id(const Address& a) const;

  const std::vector<Transaction>& edges() const noexcept { return edges_; }
  const Transaction& edge(EdgeId e) const { return edges_.at(e); }
  NodeId source(EdgeId e) const { return src_.at(e); }
  NodeId target(EdgeId e) const { return dst_.at(e); }
  NodeId opposite(EdgeId e, NodeId v) const { return src_[e] == v ? dst_[e] : src_[e]; }

  std::span<const EdgeId> out_edges(NodeId v) const { return out_.at(v); }
  std::span<const EdgeId> in_edges(NodeId v) const { return in_.at(v); }
  /// All incident edges (both directions) sorted by time; self loops appear twice.
  std::span<const EdgeId> incident_edges(NodeId v) const { return incident_.at(v); }

  Label label(const Address& a) const;
  const LabelMap& labels() const noexcept { return labels_; }

 private:
  friend TemporalMultiDiGraph build_graph(std::vector<Transaction> txs, const LabelMap& labels,
                                          std::span<const Address> extra_nodes);

  std::vector<Address> addresses_;
  std::unordered_map<Address, NodeId, AddressHash> index_;
  std::vector<Transaction> edges_;
  std::vector<NodeId> src_, dst_;
  std::vector<std::vector<EdgeId>> out_, in_, incident_;
  LabelMap labels_;
};

/// Order-insensitive: transactions are canonically sorted by
/// (timestamp, block, hash, from, to, value) before ids are assigned.
/// `extra_nodes` are added even without incident edges (e.g. labeled seeds
/// that never transacted).
TemporalMultiDiGraph build_graph(std::vector<Transaction> txs, const LabelMap& labels = {},
                                 std::span<const Address> extra_nodes = {});

struct DegreeStats {
  std::vector<std::uint64_t> in_degree;   // indexed by NodeId
  std::vector<std::uint64_t> out_degree;  // indexed by NodeId
  std::map<std::uint64_t, std::uint64_t> in_histogram;   // degree -> #nodes
  std::map<std::uint64_t, std::uint64_t> out_histogram;  // degree -> #nodes
  std::uint64_t node_count = 0;
  std::uint64_t edge_count = 0;
  std::uint64_t source_count = 0;  // labeled seed accounts present in the graph
  double sd_degree = 0.0;          // population SD of in+out degree
};

DegreeStats degree_stats(const TemporalMultiDiGraph& g);

struct WindowEdge {
  EdgeId edge;
  Address neighbor;
  friend bool operator==(const WindowEdge&, const WindowEdge&) = default;
};

/// Incident edges of `v` with t_start <= timestamp < t_end, ascending by time.
/// Throws UnknownNode.
std::vector<WindowEdge> neighbors_in_window(const TemporalMultiDiGraph& g, const Address& v,
                                            std::int64_t t_start, std::int64_t t_end);
/// Same as above but by node id, returning incidences.
std::vector<Incidence> window_incidences(const TemporalMultiDiGraph& g, NodeId v, std::int64_t t_start,
                                         std::int64_t t_end);

/// Earliest incident timestamp. Throws NoEdges for isolated nodes.
std::int64_t min_timestamp(const TemporalMultiDiGraph& g, const Address& v);
std::int64_t min_timestamp(const TemporalMultiDiGraph& g, NodeId v);

}  // namespace txscam
