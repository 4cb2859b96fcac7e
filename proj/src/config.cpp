#include "txscam/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>
#include <vector>

namespace txscam::config {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end) throw ConfigError("invalid value for " + key + ": '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("invalid boolean for " + key + ": '" + v + "'");
}

std::string show(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define TX_SIZE(KEY, EXPR)                                                                                  \
  Field {                                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<std::size_t>(KEY, v); },           \
        [](const RunConfig& c) { return std::to_string(c.EXPR); }                                          \
  }
#define TX_INT(KEY, EXPR)                                                                                   \
  Field {                                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<decltype(c.EXPR)>(KEY, v); },      \
        [](const RunConfig& c) { return std::to_string(c.EXPR); }                                          \
  }
#define TX_REAL(KEY, EXPR)                                                                                  \
  Field {                                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_number<double>(KEY, v); },                \
        [](const RunConfig& c) { return show(c.EXPR); }                                                    \
  }
#define TX_BOOL(KEY, EXPR)                                                                                  \
  Field {                                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.EXPR = parse_bool(KEY, v); },                          \
        [](const RunConfig& c) { return std::string(c.EXPR ? "true" : "false"); }                          \
  }
#define TX_STR(KEY, EXPR)                                                                                   \
  Field {                                                                                                   \
    KEY, [](RunConfig& c, const std::string& v) { c.EXPR = v; }, [](const RunConfig& c) { return c.EXPR; } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      TX_INT("seed", seed),
      TX_SIZE("threads", threads),
      TX_BOOL("balance", balance),
      // walk
      TX_INT("structure_window", walk.structure_window),
      TX_INT("interval_days", walk.interval_days),
      TX_INT("walk_length", walk.walk_length),
      Field{"temporal_variant",
            [](RunConfig& c, const std::string& v) {
              if (v == "min")
                c.walk.temporal_variant = strwalk::TemporalVariant::MinAnchored;
              else if (v == "max")
                c.walk.temporal_variant = strwalk::TemporalVariant::MaxAnchored;
              else
                throw ConfigError("temporal_variant must be min or max");
            },
            [](const RunConfig& c) {
              return std::string(c.walk.temporal_variant == strwalk::TemporalVariant::MinAnchored ? "min" : "max");
            }},
      // encoder
      TX_SIZE("encoder_hidden", feature.hidden),
      TX_SIZE("max_neighbors", feature.max_neighbors),
      TX_REAL("leaky_slope", feature.leaky_slope),
      TX_REAL("elu_alpha", feature.elu_alpha),
      // sequence model
      TX_SIZE("hidden", model.hidden),
      TX_SIZE("layers", model.layers),
      TX_SIZE("heads", model.heads),
      TX_SIZE("max_len", model.max_len),
      TX_SIZE("conv_channels", model.conv_channels),
      TX_SIZE("conv_kernel", model.conv_kernel),
      TX_REAL("weight_decay", model.weight_decay),
      TX_REAL("lr", model.lr),
      TX_SIZE("epochs", model.epochs),
      TX_SIZE("batch_size", model.batch_size),
      TX_BOOL("causal", model.causal),
      TX_BOOL("disable_graph_encoder", model.disable_graph_encoder),
      TX_BOOL("disable_transposed", model.disable_transposed),
      // synthetic corpus
      TX_SIZE("normal_accounts", gen.normal_accounts),
      TX_SIZE("scam_accounts", gen.scam_accounts),
      TX_SIZE("phishing_accounts", gen.phishing_accounts),
      TX_INT("start_time", gen.start_time),
      TX_INT("timeline_days", gen.timeline_days),
      TX_REAL("power_law_exponent", gen.power_law_exponent),
      TX_SIZE("pool_size", gen.pool_size),
      TX_SIZE("background_tx", gen.background_tx),
      TX_SIZE("normal_tx", gen.normal_tx),
      TX_SIZE("mimic_intervals", gen.mimic_intervals),
      TX_SIZE("harvest_intervals", gen.harvest_intervals),
      TX_SIZE("mimic_tx_per_interval", gen.mimic_tx_per_interval),
      TX_SIZE("harvest_victims", gen.harvest_victims),
      TX_REAL("fresh_victim_ratio", gen.fresh_victim_ratio),
      TX_SIZE("concentrators", gen.concentrators),
      TX_SIZE("forward_splits", gen.forward_splits),
      TX_SIZE("phishing_counterparties", gen.phishing_counterparties),
      TX_SIZE("phishing_multiplicity", gen.phishing_multiplicity),
      // fetch
      TX_STR("base_url", fetch.base_url),
      TX_REAL("requests_per_second", fetch.requests_per_second),
      TX_REAL("query_timeout", fetch.query_timeout),
      TX_INT("max_retries", fetch.max_retries),
      TX_SIZE("page_size", fetch.page_size),
      TX_REAL("backoff_seconds", fetch.backoff_seconds),
      TX_INT("depth", crawl.depth),
      TX_INT("start_block", crawl.blocks.start),
      TX_INT("end_block", crawl.blocks.end),
      TX_SIZE("per_node_tx_cap", crawl.per_node_tx_cap),
      // paths
      TX_STR("transactions", transactions),
      TX_STR("labels", labels),
      TX_STR("checkpoint", checkpoint),
      TX_STR("accounts", accounts),
      TX_STR("split", split),
      TX_STR("out", out),
      TX_STR("format", format),
  };
  return table;
}

}  // namespace

KeyValues parse_key_values(std::istream& in) {
  KeyValues kv;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(no) + ": expected key = value");
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(no) + ": empty key");
    kv[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

KeyValues parse_key_values_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UnreadableInput("cannot open config " + path);
  return parse_key_values(in);
}

void write_key_values(std::ostream& out, const KeyValues& kv) {
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

void apply(RunConfig& cfg, const KeyValues& kv) {
  for (const auto& [key, value] : kv) {
    if (key == "api_key" || key == "apikey")
      throw ConfigError(std::string("API keys are read from ") + fetch::kApiKeyEnv + ", not from config files");
    bool found = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key: " + key);
  }
}

KeyValues to_key_values(const RunConfig& cfg) {
  KeyValues kv;
  for (const auto& f : fields()) kv[f.key] = f.get(cfg);
  return kv;
}

void RunConfig::propagate() {
  walk.rng_seed = seed;
  model.seed = seed;
  gen.seed = seed;
  gen.interval_days = walk.interval_days;
}

void RunConfig::validate() const {
  walk.validate();
  feature.validate();
  model.validate();
  if (format != "csv" && format != "jsonl") throw ConfigError("format must be csv or jsonl");
}

}  // namespace txscam::config
