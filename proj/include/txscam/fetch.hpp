#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "txscam/errors.hpp"
#include "txscam/txgraph.hpp"

namespace txscam::fetch {

class FetchError : public Error {
 public:
  using Error::Error;
};
class Timeout : public FetchError {
 public:
  using FetchError::FetchError;
};
class RateLimited : public FetchError {
 public:
  using FetchError::FetchError;
};
class HttpError : public FetchError {
 public:
  HttpError(int status, const std::string& what) : FetchError(what), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};
class DecodeError : public FetchError {
 public:
  using FetchError::FetchError;
};

inline constexpr const char* kApiKeyEnv = "TXSCAM_API_KEY";

struct FetchConfig {
  std::string base_url = "https://api.etherscan.io/api";
  std::string api_key;  // only ever filled from the environment
  double requests_per_second = 5.0;
  double query_timeout = 180.0;  // seconds
  int max_retries = 3;
  std::size_t page_size = 1000;
  double backoff_seconds = 1.0;

  void validate() const;
  /// Copies `api_key` from TXSCAM_API_KEY when set.
  FetchConfig with_env_key() const;
};

struct BlockRange {
  std::int64_t start = 0;
  std::int64_t end = 99'999'999;
};

struct CrawlSpec {
  std::vector<Address> seeds;
  int depth = 2;
  BlockRange blocks;
  std::size_t per_node_tx_cap = 10'000;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Seams for testing: transport and time.

struct HttpResponse {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  /// `target` is path plus query string. Throws Timeout or HttpError(0, ...)
  /// on transport failure.
  virtual HttpResponse get(const std::string& target, double timeout_seconds) = 0;
};

/// cpp-httplib backed transport for "scheme://host[:port]" origins.
class HttplibTransport : public HttpTransport {
 public:
  explicit HttplibTransport(std::string origin);
  HttpResponse get(const std::string& target, double timeout_seconds) override;

 private:
  std::string origin_;
};

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now() = 0;  // seconds
  virtual void sleep(double seconds) = 0;
};

class SteadyClock : public Clock {
 public:
  double now() override;
  void sleep(double seconds) override;
};

/// Virtual time: sleep() advances now() instantly.
class FakeClock : public Clock {
 public:
  double now() override { return t_; }
  void sleep(double seconds) override {
    if (seconds > 0) t_ += seconds;
  }
  void advance(double seconds) { t_ += seconds; }

 private:
  double t_ = 0.0;
};

/// Token bucket of capacity one: consecutive grants are at least 1/rate apart.
class RateLimiter {
 public:
  RateLimiter(double rate, Clock& clock);
  void acquire();

 private:
  double interval_;
  double next_ = -1e300;
  Clock& clock_;
  std::mutex mu_;
};

/// Splits "https://host:port/path" into origin and path.
std::pair<std::string, std::string> split_url(const std::string& url);

/// Parses an explorer `txlist` body. Returns an empty list for the
/// "No transactions found" status. Throws DecodeError or RateLimited (for
/// rate-limit messages, so callers can retry).
std::vector<Transaction> decode_txlist(const std::string& body);

class Client {
 public:
  Client(FetchConfig cfg, HttpTransport& transport, Clock& clock);

  /// All external transactions of `addr` in the block range, across pages,
  /// at most `cap` of them, sorted by (block, hash).
  std::vector<Transaction> account_transactions(const Address& addr, const BlockRange& blocks,
                                                std::size_t cap = static_cast<std::size_t>(-1));
  std::size_t requests() const noexcept { return requests_; }

 private:
  std::vector<Transaction> page(const Address& addr, const BlockRange& blocks, std::size_t page_no);

  FetchConfig cfg_;
  std::string path_;
  HttpTransport& transport_;
  Clock& clock_;
  RateLimiter limiter_;
  std::size_t requests_ = 0;
};

std::vector<Transaction> fetch_account_transactions(const FetchConfig& cfg, const Address& addr,
                                                    const BlockRange& blocks);

struct CrawlFailure {
  Address address;
  std::string error;
};

struct CrawlResult {
  std::vector<Transaction> transactions;  // unique hashes, sorted by (block, hash)
  std::vector<CrawlFailure> errors;
  std::size_t accounts_fetched = 0;
};

/// Breadth-first expansion with a lexicographically ordered frontier.
CrawlResult crawl_neighborhood(Client& client, const CrawlSpec& spec);
CrawlResult crawl_neighborhood(const FetchConfig& cfg, const CrawlSpec& spec);

}  // namespace txscam::fetch
