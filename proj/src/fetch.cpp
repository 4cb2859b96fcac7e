#include "txscam/fetch.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <map>
#include <set>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace txscam::fetch {

void FetchConfig::validate() const {
  if (!(requests_per_second > 0.0)) throw ConfigError("requests_per_second must be positive");
  if (!(query_timeout > 0.0)) throw ConfigError("query_timeout must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (page_size < 1 || page_size > 10'000) throw ConfigError("page_size must be in [1, 10000]");
  if (backoff_seconds < 0.0) throw ConfigError("backoff_seconds must be >= 0");
  if (base_url.rfind("http://", 0) != 0 && base_url.rfind("https://", 0) != 0)
    throw ConfigError("base_url must start with http:// or https://");
}

FetchConfig FetchConfig::with_env_key() const {
  FetchConfig c = *this;
  if (const char* k = std::getenv(kApiKeyEnv)) c.api_key = k;
  return c;
}

void CrawlSpec::validate() const {
  if (depth < 0) throw ConfigError("crawl depth must be >= 0");
  if (blocks.start > blocks.end) throw ConfigError("block range start exceeds end");
  if (per_node_tx_cap < 1) throw ConfigError("per_node_tx_cap must be >= 1");
}

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("not an absolute URL: " + url);
  const auto slash = url.find('/', scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

HttplibTransport::HttplibTransport(std::string origin) : origin_(std::move(origin)) {}

HttpResponse HttplibTransport::get(const std::string& target, double timeout_seconds) {
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (origin_.rfind("https://", 0) == 0) throw HttpError(0, "built without TLS support; use an http:// base_url");
#endif
  httplib::Client cli(origin_);
  const auto secs = static_cast<time_t>(timeout_seconds);
  const auto usecs = static_cast<time_t>((timeout_seconds - static_cast<double>(secs)) * 1e6);
  cli.set_connection_timeout(secs, usecs);
  cli.set_read_timeout(secs, usecs);
  cli.set_write_timeout(secs, usecs);
  auto res = cli.Get(target);
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
      throw Timeout("request timed out after " + std::to_string(timeout_seconds) + " s");
    throw HttpError(0, "transport failure: " + httplib::to_string(err));
  }
  return {res->status, res->body};
}

double SteadyClock::now() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

void SteadyClock::sleep(double seconds) {
  if (seconds > 0) std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
}

RateLimiter::RateLimiter(double rate, Clock& clock) : interval_(1.0 / rate), clock_(clock) {
  if (!(rate > 0.0)) throw ConfigError("rate must be positive");
}

void RateLimiter::acquire() {
  std::lock_guard lock(mu_);
  const double now = clock_.now();
  if (now < next_) clock_.sleep(next_ - now);
  next_ = std::max(now, next_) + interval_;
}

namespace {

std::string field(const nlohmann::json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw DecodeError(std::string("missing field ") + key);
  if (it->is_string()) return it->get<std::string>();
  if (it->is_number_integer()) return std::to_string(it->get<std::int64_t>());
  throw DecodeError(std::string("field ") + key + " has unexpected type");
}

bool mentions_rate_limit(std::string text) {
  std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
  return text.find("rate limit") != std::string::npos;
}

std::string url_encode(const std::string& s) { return httplib::detail::encode_query_param(s); }

}  // namespace

std::vector<Transaction> decode_txlist(const std::string& body) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw DecodeError(std::string("response is not JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("result")) throw DecodeError("response lacks a result field");
  const std::string status = doc.contains("status") ? field(doc, "status") : "1";
  const auto& result = doc["result"];
  if (status != "1") {
    const std::string message = doc.value("message", std::string());
    const std::string detail = result.is_string() ? result.get<std::string>() : std::string();
    if (mentions_rate_limit(message) || mentions_rate_limit(detail)) throw RateLimited(detail.empty() ? message : detail);
    if (message.find("No transactions found") != std::string::npos ||
        (result.is_array() && result.empty()))
      return {};
    throw DecodeError("explorer error: " + message + (detail.empty() ? "" : " (" + detail + ")"));
  }
  if (!result.is_array()) throw DecodeError("result is not an array");
  std::vector<Transaction> out;
  out.reserve(result.size());
  for (const auto& r : result) {
    if (!r.is_object()) throw DecodeError("result entry is not an object");
    const std::string to = field(r, "to");
    if (to.empty()) continue;  // contract creation: no counterparty account
    try {
      Transaction tx;
      tx.hash = field(r, "hash");
      tx.from = Address::parse(field(r, "from"));
      tx.to = Address::parse(to);
      tx.value = parse_wei(field(r, "value"));
      tx.timestamp = std::stoll(field(r, "timeStamp"));
      tx.block = std::stoll(field(r, "blockNumber"));
      out.push_back(std::move(tx));
    } catch (const DecodeError&) {
      throw;
    } catch (const std::exception& e) {
      throw DecodeError(std::string("bad transaction record: ") + e.what());
    }
  }
  return out;
}

Client::Client(FetchConfig cfg, HttpTransport& transport, Clock& clock)
    : cfg_(std::move(cfg)), transport_(transport), clock_(clock), limiter_(cfg_.requests_per_second, clock) {
  cfg_.validate();
  path_ = split_url(cfg_.base_url).second;
}

std::vector<Transaction> Client::page(const Address& addr, const BlockRange& blocks, std::size_t page_no) {
  std::string target = path_ + "?module=account&action=txlist&address=" + addr.str() +
                       "&startblock=" + std::to_string(blocks.start) + "&endblock=" + std::to_string(blocks.end) +
                       "&page=" + std::to_string(page_no) + "&offset=" + std::to_string(cfg_.page_size) +
                       "&sort=asc";
  if (!cfg_.api_key.empty()) target += "&apikey=" + url_encode(cfg_.api_key);

  for (int attempt = 0;; ++attempt) {
    limiter_.acquire();
    ++requests_;
    const HttpResponse res = transport_.get(target, cfg_.query_timeout);
    bool retryable = false;
    std::string reason;
    if (res.status == 429) {
      retryable = true;
      reason = "HTTP 429";
    } else if (res.status >= 500) {
      if (attempt >= cfg_.max_retries) throw HttpError(res.status, "HTTP " + std::to_string(res.status));
      retryable = true;
    } else if (res.status != 200) {
      throw HttpError(res.status, "HTTP " + std::to_string(res.status));
    } else {
      try {
        return decode_txlist(res.body);
      } catch (const RateLimited& e) {
        retryable = true;
        reason = e.what();
      }
    }
    if (!retryable || attempt >= cfg_.max_retries)
      throw RateLimited("rate limited after " + std::to_string(attempt + 1) + " attempts: " + reason);
    clock_.sleep(cfg_.backoff_seconds * std::ldexp(1.0, attempt));
  }
}

std::vector<Transaction> Client::account_transactions(const Address& addr, const BlockRange& blocks, std::size_t cap) {
  std::vector<Transaction> out;
  for (std::size_t p = 1;; ++p) {
    auto batch = page(addr, blocks, p);
    const bool last = batch.size() < cfg_.page_size;
    out.insert(out.end(), std::make_move_iterator(batch.begin()), std::make_move_iterator(batch.end()));
    if (last || out.size() >= cap) break;
  }
  if (out.size() > cap) out.resize(cap);
  std::stable_sort(out.begin(), out.end(), [](const Transaction& a, const Transaction& b) {
    return std::tie(a.block, a.hash) < std::tie(b.block, b.hash);
  });
  return out;
}

std::vector<Transaction> fetch_account_transactions(const FetchConfig& cfg, const Address& addr,
                                                    const BlockRange& blocks) {
  HttplibTransport transport(split_url(cfg.base_url).first);
  SteadyClock clock;
  Client client(cfg, transport, clock);
  return client.account_transactions(addr, blocks);
}

CrawlResult crawl_neighborhood(Client& client, const CrawlSpec& spec) {
  spec.validate();
  CrawlResult result;
  std::map<std::string, Transaction> by_hash;
  std::set<Address> visited;
  std::set<Address> frontier(spec.seeds.begin(), spec.seeds.end());
  for (int level = 0; level <= spec.depth && !frontier.empty(); ++level) {
    std::set<Address> next;
    for (const Address& a : frontier) {
      visited.insert(a);
      std::vector<Transaction> txs;
      try {
        txs = client.account_transactions(a, spec.blocks, spec.per_node_tx_cap);
        ++result.accounts_fetched;
      } catch (const FetchError& e) {
        result.errors.push_back({a, e.what()});
        continue;
      }
      for (auto& tx : txs) {
        if (level < spec.depth) {
          for (const Address* other : {&tx.from, &tx.to})
            if (!visited.count(*other) && !frontier.count(*other)) next.insert(*other);
        }
        by_hash.emplace(tx.hash, std::move(tx));
      }
    }
    frontier = std::move(next);
  }
  result.transactions.reserve(by_hash.size());
  for (auto& [h, tx] : by_hash) result.transactions.push_back(std::move(tx));
  std::sort(result.transactions.begin(), result.transactions.end(), [](const Transaction& a, const Transaction& b) {
    return std::tie(a.block, a.hash) < std::tie(b.block, b.hash);
  });
  return result;
}

CrawlResult crawl_neighborhood(const FetchConfig& cfg, const CrawlSpec& spec) {
  HttplibTransport transport(split_url(cfg.base_url).first);
  SteadyClock clock;
  Client client(cfg, transport, clock);
  return crawl_neighborhood(client, spec);
}

}  // namespace txscam::fetch
