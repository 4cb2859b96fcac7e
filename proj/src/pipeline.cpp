#include "txscam/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace txscam::pipeline {

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

namespace {

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

}  // namespace

Dataset labeled_dataset(const TemporalMultiDiGraph& g, bool balance, std::uint64_t seed) {
  std::vector<Address> cls[2];
  for (const auto& [addr, label] : g.labels()) {
    if (label == Label::Unlabeled) continue;
    auto id = g.find(addr);
    if (!id || g.incident_edges(*id).empty()) continue;
    cls[is_malicious(label) ? 1 : 0].push_back(addr);
  }
  if (balance && !cls[0].empty() && !cls[1].empty()) {
    const std::size_t keep = std::min(cls[0].size(), cls[1].size());
    Rng rng = Rng::stream(seed, fnv1a("balance"));
    for (auto& c : cls) {
      if (c.size() <= keep) continue;
      std::vector<std::size_t> idx(c.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      shuffle(idx, rng);
      idx.resize(keep);
      std::sort(idx.begin(), idx.end());
      std::vector<Address> kept;
      for (auto i : idx) kept.push_back(c[i]);
      c = std::move(kept);
    }
  }
  Dataset d;
  std::vector<std::pair<Address, int>> all;
  for (int c = 0; c < 2; ++c)
    for (const auto& a : cls[c]) all.emplace_back(a, c);
  std::sort(all.begin(), all.end());
  for (auto& [a, l] : all) {
    d.accounts.push_back(a);
    d.labels.push_back(l);
  }
  return d;
}

Split split_dataset(const std::vector<int>& labels, std::uint64_t seed) {
  Rng rng = Rng::stream(seed, fnv1a("split"));
  Split s;
  for (int c = 0; c < 2; ++c) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    shuffle(idx, rng);
    const std::size_t n = idx.size();
    const std::size_t n_train = (n * 7 + 5) / 10;
    const std::size_t n_val = std::min(n - n_train, (n * 2 + 5) / 10);
    s.train.insert(s.train.end(), idx.begin(), idx.begin() + n_train);
    s.val.insert(s.val.end(), idx.begin() + n_train, idx.begin() + n_train + n_val);
    s.test.insert(s.test.end(), idx.begin() + n_train + n_val, idx.end());
  }
  for (auto* part : {&s.train, &s.val, &s.test}) std::sort(part->begin(), part->end());
  return s;
}

nlohmann::ordered_json split_to_json(const Split& s, const Dataset& d, std::uint64_t seed) {
  auto names = [&](const std::vector<std::size_t>& idx) {
    nlohmann::ordered_json a = nlohmann::ordered_json::array();
    for (auto i : idx) a.push_back(d.accounts[i].str());
    return a;
  };
  nlohmann::ordered_json j;
  j["seed"] = seed;
  j["train"] = names(s.train);
  j["val"] = names(s.val);
  j["test"] = names(s.test);
  return j;
}

Split split_from_json(const nlohmann::json& j, const Dataset& d) {
  Split s;
  auto read = [&](const char* key, std::vector<std::size_t>& out) {
    if (!j.contains(key) || !j[key].is_array()) throw InputError(std::string("split file lacks ") + key);
    for (const auto& v : j[key]) {
      if (!v.is_string()) throw InputError("split entries must be address strings");
      const Address a = Address::parse(v.get<std::string>());
      auto it = std::lower_bound(d.accounts.begin(), d.accounts.end(), a);
      if (it == d.accounts.end() || *it != a) throw InputError("split account not in dataset: " + a.str());
      out.push_back(static_cast<std::size_t>(it - d.accounts.begin()));
    }
  };
  read("train", s.train);
  read("val", s.val);
  read("test", s.test);
  return s;
}

strwalk::SampledGraph sample_account(const TemporalMultiDiGraph& g, const Address& account, const Sampling& s) {
  if (s.full) return strwalk::full_neighborhood(g, account, s.hops, s.walk.interval_days);
  return strwalk::strwalk(g, account, s.walk);
}

encoder::EncoderInput account_input(const TemporalMultiDiGraph& g, const Address& account, const Sampling& s,
                                    const encoder::FeatureConfig& feat) {
  const auto sampled = sample_account(g, account, s);
  return encoder::prepare_input(g, strwalk::slice_subgraph_sequence(g, sampled), feat);
}

std::vector<encoder::EncoderInput> build_inputs(const TemporalMultiDiGraph& g, const std::vector<Address>& accounts,
                                                const Sampling& s, const encoder::FeatureConfig& feat,
                                                std::size_t threads) {
  std::vector<encoder::EncoderInput> out(accounts.size());
  parallel_for(accounts.size(), threads, [&](std::size_t i) { out[i] = account_input(g, accounts[i], s, feat); });
  return out;
}

std::vector<seqmodel::Example> make_examples(const Dataset& d, const std::vector<std::size_t>& idx,
                                             const std::vector<encoder::EncoderInput>& inputs) {
  std::vector<seqmodel::Example> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back({d.accounts[i].str(), inputs[i], static_cast<std::size_t>(d.labels[i])});
  return out;
}

std::vector<Detection> detect(const seqmodel::Model& model, const TemporalMultiDiGraph& g,
                              const std::vector<Address>& accounts, const Sampling& s, std::size_t threads) {
  std::vector<Detection> out(accounts.size());
  parallel_for(accounts.size(), threads, [&](std::size_t i) {
    const auto in = account_input(g, accounts[i], s, model.feature_config());
    const auto p = model.predict(in);
    out[i] = {accounts[i], p.malicious, p.score};
  });
  return out;
}

}  // namespace txscam::pipeline
