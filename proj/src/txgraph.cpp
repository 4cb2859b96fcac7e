#include "txscam/txgraph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "txscam/errors.hpp"
#include "txscam/rng.hpp"

namespace txscam {

namespace {

int hex_value(char c) noexcept {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
}

std::int64_t parse_i64(std::string_view text, const char* field) {
  if (text.empty()) throw InputError(std::string("empty ") + field);
  std::int64_t v = 0;
  for (char c : text) {
    if (c < '0' || c > '9') throw InputError(std::string("non-numeric ") + field + " '" + std::string(text) + "'");
    if (v > (INT64_MAX - (c - '0')) / 10) throw InputError(std::string(field) + " overflows 64 bits");
    v = v * 10 + (c - '0');
  }
  return v;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

Transaction make_tx(std::string_view hash, std::string_view from, std::string_view to, std::string_view value,
                    std::string_view timestamp, std::string_view block) {
  Transaction tx;
  if (hash.empty()) throw InputError("empty hash");
  tx.hash = std::string(hash);
  tx.from = Address::parse(from);
  tx.to = Address::parse(to);
  tx.value = parse_wei(value);
  tx.timestamp = parse_i64(timestamp, "timestamp");
  if (tx.timestamp <= 0) throw InputError("timestamp must be positive");
  tx.block = parse_i64(block, "block");
  return tx;
}

std::string json_field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw InputError(std::string("missing key '") + key + "'");
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_unsigned()) return std::to_string(it->get<std::uint64_t>());
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw InputError(std::string("key '") + key + "' must be a string or integer");
}

}  // namespace

// ---------------------------------------------------------------------------
// Address

std::optional<Address> Address::try_parse(std::string_view text) noexcept {
  text = trim(text);
  if (text.size() != 42 || text[0] != '0' || (text[1] != 'x' && text[1] != 'X')) return std::nullopt;
  std::array<std::uint8_t, 20> bytes{};
  for (std::size_t i = 0; i < 20; ++i) {
    int hi = hex_value(text[2 + 2 * i]);
    int lo = hex_value(text[3 + 2 * i]);
    if (hi < 0 || lo < 0) return std::nullopt;
    bytes[i] = static_cast<std::uint8_t>(hi * 16 + lo);
  }
  return Address(bytes);
}

Address Address::parse(std::string_view text) {
  auto a = try_parse(text);
  if (!a) throw InputError("invalid address '" + std::string(text) + "'");
  return *a;
}

std::string Address::str() const {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "0x";
  out.reserve(42);
  for (auto b : bytes_) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::uint64_t Address::hash() const noexcept {
  return fnv1a(std::string_view(reinterpret_cast<const char*>(bytes_.data()), bytes_.size()));
}

std::ostream& operator<<(std::ostream& os, const Address& a) { return os << a.str(); }

// ---------------------------------------------------------------------------
// Wei

Wei parse_wei(std::string_view text) {
  text = trim(text);
  if (text.empty()) throw InputError("empty value");
  constexpr Wei kMax = ~Wei{0};
  Wei v = 0;
  for (char c : text) {
    if (c < '0' || c > '9') throw InputError("non-numeric value '" + std::string(text) + "'");
    auto d = static_cast<unsigned>(c - '0');
    if (v > (kMax - d) / 10) throw InputError("value exceeds 128 bits");
    v = v * 10 + d;
  }
  return v;
}

std::string wei_to_string(Wei v) {
  if (v == 0) return "0";
  std::string out;
  while (v > 0) {
    out.push_back(static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Labels

std::string_view to_string(Label l) {
  switch (l) {
    case Label::Normal: return "normal";
    case Label::Phishing: return "phishing";
    case Label::Web3Scam: return "web3scam";
    case Label::Unlabeled: return "unlabeled";
  }
  return "unlabeled";
}

Label parse_label(std::string_view text) {
  auto s = lower(trim(text));
  if (s == "normal") return Label::Normal;
  if (s == "phishing") return Label::Phishing;
  if (s == "web3scam") return Label::Web3Scam;
  throw InputError("unknown label class '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Parsing

ParseResult parse_transactions(std::istream& in, const ParseOptions& opts) {
  ParseResult result;
  if (!in) throw UnreadableInput("transaction stream is not readable");

  std::string line;
  std::size_t lineno = 0;
  std::array<int, 6> col{-1, -1, -1, -1, -1, -1};
  bool have_header = opts.format == TxFormat::Jsonl;
  std::size_t width = 0;

  auto fail = [&](const std::string& msg) {
    if (opts.strict) throw MalformedRecord(lineno, msg);
    ++result.skipped;
    result.issues.push_back({lineno, msg});
  };

  while (std::getline(in, line)) {
    ++lineno;
    std::string_view view = trim(line);
    if (view.empty()) continue;

    if (!have_header) {
      auto names = split_csv(view);
      static constexpr std::array<std::string_view, 6> kCols{"hash", "from", "to", "value", "timestamp", "block"};
      for (std::size_t i = 0; i < names.size(); ++i) {
        auto name = lower(names[i]);
        for (std::size_t k = 0; k < kCols.size(); ++k)
          if (name == kCols[k]) col[k] = static_cast<int>(i);
      }
      for (std::size_t k = 0; k < kCols.size(); ++k)
        if (col[k] < 0) throw UnreadableInput("CSV header is missing column '" + std::string(kCols[k]) + "'");
      width = names.size();
      have_header = true;
      continue;
    }

    try {
      if (opts.format == TxFormat::Csv) {
        auto f = split_csv(view);
        if (f.size() != width)
          throw InputError("expected " + std::to_string(width) + " fields, got " + std::to_string(f.size()));
        result.transactions.push_back(make_tx(f[col[0]], f[col[1]], f[col[2]], f[col[3]], f[col[4]], f[col[5]]));
      } else {
        auto obj = nlohmann::json::parse(view);
        if (!obj.is_object()) throw InputError("record is not a JSON object");
        result.transactions.push_back(make_tx(json_field(obj, "hash"), json_field(obj, "from"),
                                              json_field(obj, "to"), json_field(obj, "value"),
                                              json_field(obj, "timestamp"), json_field(obj, "block")));
      }
    } catch (const MalformedRecord&) {
      throw;
    } catch (const InputError& e) {
      fail(e.what());
    } catch (const nlohmann::json::exception& e) {
      fail(e.what());
    }
  }
  if (in.bad()) throw UnreadableInput("I/O error while reading transactions");
  return result;
}

ParseResult parse_transactions_file(const std::string& path, const ParseOptions& opts) {
  std::ifstream in(path);
  if (!in) throw UnreadableInput("cannot open " + path);
  return parse_transactions(in, opts);
}

LabelMap parse_labels(std::istream& in) {
  if (!in) throw UnreadableInput("label stream is not readable");
  LabelMap labels;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto view = trim(line);
    if (view.empty()) continue;
    auto f = split_csv(view);
    if (lineno == 1 && f.size() >= 1 && lower(f[0]) == "address") continue;
    if (f.size() != 2) throw MalformedRecord(lineno, "expected address,class");
    try {
      labels[Address::parse(f[0])] = parse_label(f[1]);
    } catch (const InputError& e) {
      throw MalformedRecord(lineno, e.what());
    }
  }
  return labels;
}

LabelMap parse_labels_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UnreadableInput("cannot open " + path);
  return parse_labels(in);
}

void write_transactions_csv(std::ostream& out, std::span<const Transaction> txs) {
  out << "hash,from,to,value,timestamp,block\n";
  for (const auto& tx : txs)
    out << tx.hash << ',' << tx.from << ',' << tx.to << ',' << wei_to_string(tx.value) << ',' << tx.timestamp
        << ',' << tx.block << '\n';
}

void write_labels_csv(std::ostream& out, const LabelMap& labels) {
  out << "address,class\n";
  for (const auto& [addr, label] : labels)
    if (label != Label::Unlabeled) out << addr << ',' << to_string(label) << '\n';
}

// ---------------------------------------------------------------------------
// Graph

TemporalMultiDiGraph build_graph(std::vector<Transaction> txs, const LabelMap& labels,
                                 std::span<const Address> extra_nodes) {
  std::sort(txs.begin(), txs.end(), [](const Transaction& a, const Transaction& b) {
    return std::tie(a.timestamp, a.block, a.hash, a.from, a.to, a.value) <
           std::tie(b.timestamp, b.block, b.hash, b.from, b.to, b.value);
  });

  TemporalMultiDiGraph g;
  // Node ids follow sorted address order so they do not depend on input order.
  std::vector<Address> addrs;
  addrs.reserve(txs.size() * 2);
  for (const auto& tx : txs) {
    addrs.push_back(tx.from);
    addrs.push_back(tx.to);
  }
  addrs.insert(addrs.end(), extra_nodes.begin(), extra_nodes.end());
  std::sort(addrs.begin(), addrs.end());
  addrs.erase(std::unique(addrs.begin(), addrs.end()), addrs.end());
  g.addresses_ = std::move(addrs);
  g.index_.reserve(g.addresses_.size());
  for (NodeId i = 0; i < g.addresses_.size(); ++i) g.index_.emplace(g.addresses_[i], i);

  const auto n = g.addresses_.size();
  g.out_.assign(n, {});
  g.in_.assign(n, {});
  g.incident_.assign(n, {});
  g.src_.reserve(txs.size());
  g.dst_.reserve(txs.size());
  for (EdgeId e = 0; e < txs.size(); ++e) {
    NodeId s = g.index_.at(txs[e].from);
    NodeId d = g.index_.at(txs[e].to);
    g.src_.push_back(s);
    g.dst_.push_back(d);
    // Edge ids are already in time order, so pushing keeps lists sorted.
    g.out_[s].push_back(e);
    g.in_[d].push_back(e);
    g.incident_[s].push_back(e);
    g.incident_[d].push_back(e);
  }
  g.edges_ = std::move(txs);
  for (const auto& [addr, label] : labels) g.labels_[addr] = label;
  return g;
}

std::optional<NodeId> TemporalMultiDiGraph::find(const Address& a) const {
  auto it = index_.find(a);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

NodeId TemporalMultiDiGraph::id(const Address& a) const {
  auto v = find(a);
  if (!v) throw UnknownNode("unknown node " + a.str());
  return *v;
}

Label TemporalMultiDiGraph::label(const Address& a) const {
  auto it = labels_.find(a);
  return it == labels_.end() ? Label::Unlabeled : it->second;
}

DegreeStats degree_stats(const TemporalMultiDiGraph& g) {
  DegreeStats s;
  const auto n = g.node_count();
  s.node_count = n;
  s.edge_count = g.edge_count();
  s.in_degree.resize(n);
  s.out_degree.resize(n);
  double sum = 0.0;
  for (NodeId v = 0; v < n; ++v) {
    s.in_degree[v] = g.in_edges(v).size();
    s.out_degree[v] = g.out_edges(v).size();
    ++s.in_histogram[s.in_degree[v]];
    ++s.out_histogram[s.out_degree[v]];
    sum += static_cast<double>(s.in_degree[v] + s.out_degree[v]);
  }
  if (n > 0) {
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (NodeId v = 0; v < n; ++v) {
      const double d = static_cast<double>(s.in_degree[v] + s.out_degree[v]) - mean;
      ss += d * d;
    }
    s.sd_degree = std::sqrt(ss / static_cast<double>(n));
  }
  for (const auto& [addr, label] : g.labels())
    if (label != Label::Unlabeled && g.find(addr)) ++s.source_count;
  return s;
}

std::vector<Incidence> window_incidences(const TemporalMultiDiGraph& g, NodeId v, std::int64_t t_start,
                                         std::int64_t t_end) {
  auto inc = g.incident_edges(v);
  auto ts = [&](EdgeId e) { return g.edge(e).timestamp; };
  auto lo = std::partition_point(inc.begin(), inc.end(), [&](EdgeId e) { return ts(e) < t_start; });
  auto hi = std::partition_point(lo, inc.end(), [&](EdgeId e) { return ts(e) < t_end; });
  std::vector<Incidence> out;
  out.reserve(static_cast<std::size_t>(hi - lo));
  for (auto it = lo; it != hi; ++it) out.push_back({*it, g.opposite(*it, v)});
  return out;
}

std::vector<WindowEdge> neighbors_in_window(const TemporalMultiDiGraph& g, const Address& v, std::int64_t t_start,
                                            std::int64_t t_end) {
  std::vector<WindowEdge> out;
  for (const auto& inc : window_incidences(g, g.id(v), t_start, t_end))
    out.push_back({inc.edge, g.address(inc.neighbor)});
  return out;
}

std::int64_t min_timestamp(const TemporalMultiDiGraph& g, NodeId v) {
  auto inc = g.incident_edges(v);
  if (inc.empty()) throw NoEdges("node " + g.address(v).str() + " has no incident edges");
  return g.edge(inc.front()).timestamp;
}

std::int64_t min_timestamp(const TemporalMultiDiGraph& g, const Address& v) { return min_timestamp(g, g.id(v)); }

}  // namespace txscam
