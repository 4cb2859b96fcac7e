#include "txscam/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "txscam/strwalk.hpp"

namespace txscam::synthgen {

namespace {

constexpr std::int64_t kDay = strwalk::kSecondsPerDay;
constexpr std::int64_t kBlockBase = 10'000'000;
constexpr std::int64_t kSecondsPerBlock = 13;

Address random_address(Rng& rng) {
  std::array<std::uint8_t, 20> b{};
  for (std::size_t i = 0; i < b.size(); i += 8) {
    std::uint64_t x = rng.next();
    for (std::size_t j = 0; j < 8 && i + j < b.size(); ++j) b[i + j] = static_cast<std::uint8_t>(x >> (8 * j));
  }
  return Address(b);
}

std::string random_hash(Rng& rng) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string h = "0x";
  h.reserve(66);
  for (int w = 0; w < 4; ++w) {
    std::uint64_t x = rng.next();
    for (int i = 0; i < 16; ++i) {
      h.push_back(kHex[(x >> 60) & 0xf]);
      x <<= 4;
    }
  }
  return h;
}

double normal01(Rng& rng) {
  // Box-Muller; 1 - u keeps the log argument in (0, 1].
  const double u = 1.0 - rng.uniform();
  const double v = rng.uniform();
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

/// Log-normal amount around `median_ether`.
Wei amount(Rng& rng, double median_ether, double sigma = 0.8) {
  const double eth = median_ether * std::exp(sigma * normal01(rng));
  return static_cast<Wei>(std::llround(eth * 1e9)) * static_cast<Wei>(1'000'000'000);
}

class Builder {
 public:
  Builder(const GenConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {}

  void add(const Address& from, const Address& to, Wei value, std::int64_t t) {
    const std::int64_t end = cfg_.start_time + static_cast<std::int64_t>(cfg_.timeline_days) * kDay;
    t = std::clamp(t, cfg_.start_time, end - 1);
    Transaction tx;
    tx.hash = random_hash(rng_);
    tx.from = from;
    tx.to = to;
    tx.value = value;
    tx.timestamp = t;
    tx.block = kBlockBase + (t - cfg_.start_time) / kSecondsPerBlock;
    txs_.push_back(std::move(tx));
  }

  std::vector<Transaction> take() { return std::move(txs_); }

 private:
  const GenConfig& cfg_;
  Rng& rng_;
  std::vector<Transaction> txs_;
};

std::int64_t uniform_time(Rng& rng, std::int64_t from, std::int64_t span) {
  return from + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(std::max<std::int64_t>(1, span))));
}

}  // namespace

void GenConfig::validate() const {
  if (interval_days < 1) throw ConfigError("interval_days must be >= 1");
  if (timeline_days < interval_days) throw ConfigError("timeline must span at least one interval");
  if (mimic_intervals < 1 || harvest_intervals < 1)
    throw InvalidPhaseConfig("mimic and harvest phases need at least one interval each");
  if (harvest_victims < 1 || concentrators < 1 || forward_splits < 1)
    throw InvalidPhaseConfig("harvest phase needs victims, concentrators and forward transfers");
  if (pool_size < 2) throw ConfigError("pool_size must be >= 2");
  if (!(power_law_exponent > 1.0)) throw ConfigError("power_law_exponent must exceed 1");
  if (fresh_victim_ratio < 0.0 || fresh_victim_ratio > 1.0) throw ConfigError("fresh_victim_ratio must be in [0, 1]");
  if (phishing_counterparties < 1 || phishing_multiplicity < 1)
    throw ConfigError("phishing counterparties and multiplicity must be >= 1");
}

void GenConfig::validate_scam_phases() const {
  validate();
  if (static_cast<std::int64_t>(mimic_intervals + harvest_intervals) * interval_days > timeline_days)
    throw InvalidPhaseConfig("scam phases exceed the timeline");
}

CounterpartyPool make_pool(const GenConfig& cfg) {
  cfg.validate();
  Rng rng = Rng::stream(cfg.seed, fnv1a("pool"));
  std::vector<Address> addrs;
  addrs.reserve(cfg.pool_size);
  for (std::size_t i = 0; i < cfg.pool_size; ++i) addrs.push_back(random_address(rng));
  // Rank-popularity r^-s yields degree frequencies ~ d^-(1 + 1/s).
  const double s = 1.0 / (cfg.power_law_exponent - 1.0);
  std::vector<double> w(cfg.pool_size);
  for (std::size_t r = 0; r < w.size(); ++r) w[r] = std::pow(static_cast<double>(r + 1), -s);
  return CounterpartyPool{std::move(addrs), AliasTable(w)};
}

std::vector<Transaction> background_traffic(const GenConfig& cfg, const CounterpartyPool& pool) {
  Rng rng = Rng::stream(cfg.seed, fnv1a("background"));
  Builder b(cfg, rng);
  const std::int64_t span = static_cast<std::int64_t>(cfg.timeline_days) * kDay;
  for (std::size_t i = 0; i < cfg.background_tx; ++i) {
    const Address& from = pool.draw(rng);
    const Address* to = &pool.draw(rng);
    while (*to == from) to = &pool.draw(rng);
    b.add(from, *to, amount(rng, 0.5), uniform_time(rng, cfg.start_time, span));
  }
  return b.take();
}

Generated gen_normal(const GenConfig& cfg, const CounterpartyPool& pool, Rng& rng) {
  cfg.validate();
  Generated out;
  out.seed = random_address(rng);
  Builder b(cfg, rng);
  const std::int64_t span = static_cast<std::int64_t>(cfg.timeline_days) * kDay;
  // Exactly half outgoing (the odd one out is a coin flip), so in/out stay balanced.
  std::vector<bool> outgoing(cfg.normal_tx, false);
  for (std::size_t i = 0; i < cfg.normal_tx / 2; ++i) outgoing[i] = true;
  if (cfg.normal_tx % 2 == 1) outgoing.back() = rng.bernoulli(0.5);
  for (std::size_t i = 0; i < cfg.normal_tx; ++i) {
    const Address& other = pool.draw(rng);
    const Wei v = amount(rng, 0.5);
    const std::int64_t t = uniform_time(rng, cfg.start_time, span);
    if (outgoing[i])
      b.add(out.seed, other, v, t);
    else
      b.add(other, out.seed, v, t);
  }
  out.transactions = b.take();
  return out;
}

Generated gen_scam(const GenConfig& cfg, const CounterpartyPool& pool, Rng& rng) {
  cfg.validate_scam_phases();
  Generated out;
  out.seed = random_address(rng);
  Builder b(cfg, rng);
  const std::int64_t interval = static_cast<std::int64_t>(cfg.interval_days) * kDay;
  const std::int64_t active = static_cast<std::int64_t>(cfg.mimic_intervals + cfg.harvest_intervals) * interval;
  const std::int64_t slack = static_cast<std::int64_t>(cfg.timeline_days) * kDay - active;
  const std::int64_t t0 = uniform_time(rng, cfg.start_time, slack + 1);

  // Mimic: small, balanced two-way traffic with ordinary counterparties.
  for (std::size_t k = 0; k < cfg.mimic_intervals; ++k) {
    const std::int64_t base = t0 + static_cast<std::int64_t>(k) * interval;
    for (std::size_t i = 0; i < cfg.mimic_tx_per_interval; ++i) {
      const Address& other = pool.draw(rng);
      const Wei v = amount(rng, 0.05);
      const std::int64_t t = uniform_time(rng, base, interval);
      if ((k * cfg.mimic_tx_per_interval + i) % 2 == 0)
        b.add(other, out.seed, v, t);
      else
        b.add(out.seed, other, v, t);
    }
  }

  // Harvest: victim deposits, each promptly split across a few concentrators.
  std::vector<Address> sinks;
  for (std::size_t c = 0; c < cfg.concentrators; ++c) sinks.push_back(random_address(rng));
  const std::int64_t harvest_start = t0 + static_cast<std::int64_t>(cfg.mimic_intervals) * interval;
  const std::int64_t harvest_span = static_cast<std::int64_t>(cfg.harvest_intervals) * interval;
  std::set<Address> victims;
  for (std::size_t i = 0; i < cfg.harvest_victims; ++i) {
    Address victim = rng.uniform() < cfg.fresh_victim_ratio ? random_address(rng) : pool.draw(rng);
    while (victim == out.seed || !victims.insert(victim).second) victim = random_address(rng);
    const double eth = 2.0 * std::exp(0.8 * normal01(rng));
    const std::int64_t t = uniform_time(rng, harvest_start, harvest_span - 7200);
    b.add(victim, out.seed, static_cast<Wei>(std::llround(eth * 1e9)) * static_cast<Wei>(1'000'000'000), t);
    for (std::size_t s = 0; s < cfg.forward_splits; ++s) {
      const double part = eth / static_cast<double>(cfg.forward_splits) * 0.99;
      const Address& sink = sinks[rng.below(sinks.size())];
      b.add(out.seed, sink, static_cast<Wei>(std::llround(part * 1e9)) * static_cast<Wei>(1'000'000'000),
            t + 60 + static_cast<std::int64_t>(rng.below(3600)));
    }
  }
  out.transactions = b.take();
  return out;
}

Generated gen_phishing(const GenConfig& cfg, const CounterpartyPool& pool, Rng& rng) {
  cfg.validate();
  Generated out;
  out.seed = random_address(rng);
  Builder b(cfg, rng);
  const std::int64_t span = static_cast<std::int64_t>(cfg.timeline_days) * kDay;
  // Leave room for the consolidation transfer at the very end.
  const std::int64_t body = std::max<std::int64_t>(1, span - 3600);
  std::vector<Address> parties;
  for (std::size_t c = 0; c < cfg.phishing_counterparties; ++c) {
    Address a = rng.bernoulli(0.5) ? pool.draw(rng) : random_address(rng);
    while (a == out.seed || std::find(parties.begin(), parties.end(), a) != parties.end()) a = random_address(rng);
    parties.push_back(a);
  }
  double total = 0.0;
  std::int64_t last = cfg.start_time;
  for (const Address& p : parties) {
    for (std::size_t i = 0; i < cfg.phishing_multiplicity; ++i) {
      const double eth = 0.8 * std::exp(0.6 * normal01(rng));
      total += eth;
      const std::int64_t t = uniform_time(rng, cfg.start_time, body);
      last = std::max(last, t);
      b.add(p, out.seed, static_cast<Wei>(std::llround(eth * 1e9)) * static_cast<Wei>(1'000'000'000), t);
    }
  }
  const Address sink = random_address(rng);
  const std::int64_t final_t = std::min(cfg.start_time + span - 1, last + 60);
  b.add(out.seed, sink, static_cast<Wei>(std::llround(total * 0.99 * 1e9)) * static_cast<Wei>(1'000'000'000), final_t);
  out.transactions = b.take();
  return out;
}

Generated gen_normal(const GenConfig& cfg, Rng& rng) { return gen_normal(cfg, make_pool(cfg), rng); }
Generated gen_scam(const GenConfig& cfg, Rng& rng) { return gen_scam(cfg, make_pool(cfg), rng); }
Generated gen_phishing(const GenConfig& cfg, Rng& rng) { return gen_phishing(cfg, make_pool(cfg), rng); }

Corpus generate_corpus(const GenConfig& cfg) {
  if (cfg.scam_accounts > 0)
    cfg.validate_scam_phases();
  else
    cfg.validate();
  const CounterpartyPool pool = make_pool(cfg);
  Corpus c;
  c.transactions = background_traffic(cfg, pool);

  struct ClassPlan {
    const char* key;
    std::size_t count;
    Label label;
    Generated (*gen)(const GenConfig&, const CounterpartyPool&, Rng&);
  };
  const ClassPlan plans[] = {
      {"normal", cfg.normal_accounts, Label::Normal, &gen_normal},
      {"web3scam", cfg.scam_accounts, Label::Web3Scam, &gen_scam},
      {"phishing", cfg.phishing_accounts, Label::Phishing, &gen_phishing},
  };
  std::set<Address> pool_set(pool.addresses.begin(), pool.addresses.end());
  for (const auto& plan : plans) {
    for (std::size_t i = 0; i < plan.count; ++i) {
      Rng rng = Rng::stream(cfg.seed, fnv1a(plan.key) + i);
      Generated g = plan.gen(cfg, pool, rng);
      // Seeds never collide with the pool or each other in practice (160
      // random bits); the check keeps the label file unambiguous regardless.
      if (pool_set.count(g.seed) || c.labels.count(g.seed)) throw Error("address collision in synthetic corpus");
      c.labels.emplace(g.seed, plan.label);
      c.transactions.insert(c.transactions.end(), std::make_move_iterator(g.transactions.begin()),
                            std::make_move_iterator(g.transactions.end()));
    }
  }
  std::sort(c.transactions.begin(), c.transactions.end(), [](const Transaction& a, const Transaction& b) {
    return std::tie(a.timestamp, a.hash) < std::tie(b.timestamp, b.hash);
  });
  return c;
}

Corpus gen_dataset(const GenConfig& cfg, const std::string& out_dir) {
  Corpus c = generate_corpus(cfg);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
  const auto dir = std::filesystem::path(out_dir);
  {
    std::ofstream tx(dir / "transactions.csv", std::ios::binary);
    if (!tx) throw IoError("cannot write " + (dir / "transactions.csv").string());
    write_transactions_csv(tx, c.transactions);
    if (!tx) throw IoError("write failed: " + (dir / "transactions.csv").string());
  }
  {
    std::ofstream lb(dir / "labels.csv", std::ios::binary);
    if (!lb) throw IoError("cannot write " + (dir / "labels.csv").string());
    write_labels_csv(lb, c.labels);
    if (!lb) throw IoError("write failed: " + (dir / "labels.csv").string());
  }
  return c;
}

double degree_loglog_slope(const TemporalMultiDiGraph& g) {
  std::map<std::uint64_t, std::uint64_t> hist;
  for (NodeId v = 0; v < g.node_count(); ++v) {
    const std::uint64_t d = g.in_edges(v).size() + g.out_edges(v).size();
    if (d > 0) ++hist[d];
  }
  if (hist.size() < 2) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(hist.size());
  for (auto [d, c] : hist) {
    const double x = std::log(static_cast<double>(d)), y = std::log(static_cast<double>(c));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace txscam::synthgen
