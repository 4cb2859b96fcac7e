// txscam: command-line front end for the detection pipeline.
//
// Exit codes: 0 success, 1 usage error, 2 input error, 3 runtime failure.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "txscam/config.hpp"
#include "txscam/eval.hpp"
#include "txscam/fetch.hpp"
#include "txscam/pipeline.hpp"
#include "txscam/synthgen.hpp"

namespace fs = std::filesystem;
using namespace txscam;

namespace {

constexpr int kOk = 0, kUsage = 1, kInput = 2, kRuntime = 3;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string out, tx, labels, checkpoint, accounts, split;
  std::optional<std::string> format;
  std::optional<int> window, interval_days;
  std::optional<std::string> variant, ablate;
  std::vector<std::string> sets;
  bool strict = false;
  bool full = false;
  int hops = 2;
  std::vector<std::string> addresses;
  std::optional<int> depth;
};

void log(const std::string& cmd, const std::string& msg) { std::cerr << "txscam " << cmd << ": " << msg << '\n'; }

// Options shared by every command.
void add_common(CLI::App* app, Options& o) {
  app->add_option("--config", o.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "Global random seed");
  app->add_option("--set", o.sets, "Override a config key (key=value); repeatable");
}

void add_walk(CLI::App* app, Options& o) {
  app->add_option("--window", o.window, "Structure window w")->check(CLI::IsMember({5, 10, 15}));
  app->add_option("--interval-days", o.interval_days, "Interval length k in days")->check(CLI::PositiveNumber);
  app->add_option("--variant", o.variant, "Temporal step weighting")->check(CLI::IsMember({"min", "max"}));
  app->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
}

void add_graph_inputs(CLI::App* app, Options& o, bool labels_required) {
  app->add_option("--tx", o.tx, "Transactions file")->required();
  auto* l = app->add_option("--labels", o.labels, "Labels CSV (address,class)");
  if (labels_required) l->required();
  app->add_option("--format", o.format, "Transactions format")->check(CLI::IsMember({"csv", "jsonl"}));
}

config::RunConfig resolve(const Options& o, const config::KeyValues& base = {}) {
  config::RunConfig cfg;
  config::apply(cfg, base);
  if (!o.config_path.empty()) config::apply(cfg, config::parse_key_values_file(o.config_path));
  config::KeyValues overrides;
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + s);
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  config::apply(cfg, overrides);
  if (o.seed) cfg.seed = *o.seed;
  if (o.threads) cfg.threads = *o.threads;
  if (o.window) cfg.walk.structure_window = *o.window;
  if (o.interval_days) cfg.walk.interval_days = *o.interval_days;
  if (o.variant)
    cfg.walk.temporal_variant =
        *o.variant == "min" ? strwalk::TemporalVariant::MinAnchored : strwalk::TemporalVariant::MaxAnchored;
  if (o.ablate) {
    cfg.model.disable_graph_encoder = *o.ablate == "graph";
    cfg.model.disable_transposed = *o.ablate == "transpose";
  }
  if (o.format) cfg.format = *o.format;
  if (!o.tx.empty()) cfg.transactions = o.tx;
  if (!o.labels.empty()) cfg.labels = o.labels;
  if (!o.checkpoint.empty()) cfg.checkpoint = o.checkpoint;
  if (!o.accounts.empty()) cfg.accounts = o.accounts;
  if (!o.split.empty()) cfg.split = o.split;
  if (!o.out.empty()) cfg.out = o.out;
  if (o.depth) cfg.crawl.depth = *o.depth;
  cfg.propagate();
  cfg.validate();
  return cfg;
}

fs::path prepare_out(const config::RunConfig& cfg) {
  if (cfg.out.empty()) throw ConfigError("--out is required");
  std::error_code ec;
  fs::create_directories(cfg.out, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out + ": " + ec.message());
  return fs::path(cfg.out);
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

void echo_config(const fs::path& dir, const config::RunConfig& cfg) {
  auto f = open_out(dir / "config.effective");
  config::write_key_values(f, config::to_key_values(cfg));
}

void write_json(const fs::path& p, const nlohmann::ordered_json& j) {
  auto f = open_out(p);
  f << j.dump(2) << '\n';
}

struct Loaded {
  TemporalMultiDiGraph graph;
  ParseResult parse;
};

Loaded load_graph(const config::RunConfig& cfg, const std::string& cmd, bool strict = false) {
  if (cfg.transactions.empty()) throw ConfigError("--tx is required");
  ParseOptions po;
  po.format = cfg.format == "jsonl" ? TxFormat::Jsonl : TxFormat::Csv;
  po.strict = strict;
  Loaded l;
  l.parse = parse_transactions_file(cfg.transactions, po);
  if (l.parse.skipped) log(cmd, "skipped " + std::to_string(l.parse.skipped) + " malformed records");
  LabelMap labels;
  if (!cfg.labels.empty()) labels = parse_labels_file(cfg.labels);
  l.graph = build_graph(l.parse.transactions, labels);
  return l;
}

std::vector<Address> read_accounts(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UnreadableInput("cannot open accounts file " + path);
  std::vector<Address> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
    if (auto c = line.find(','); c != std::string::npos) line.erase(c);
    line.erase(0, line.find_first_not_of(" \t\r"));
    line.erase(line.find_last_not_of(" \t\r") + 1);
    if (line.empty() || line == "address") continue;
    auto a = Address::try_parse(line);
    if (!a) throw MalformedRecord(no, "not an address: " + line);
    out.push_back(*a);
  }
  return out;
}

std::vector<Address> target_accounts(const config::RunConfig& cfg, const TemporalMultiDiGraph& g) {
  if (!cfg.accounts.empty()) {
    auto accs = read_accounts(cfg.accounts);
    for (const auto& a : accs) g.id(a);  // UnknownNode for absent accounts
    return accs;
  }
  if (cfg.labels.empty()) throw ConfigError("pass --accounts or --labels to choose accounts");
  return pipeline::labeled_dataset(g, false, cfg.seed).accounts;
}

pipeline::Sampling sampling(const config::RunConfig& cfg, const Options& o) {
  pipeline::Sampling s;
  s.walk = cfg.walk;
  s.full = o.full;
  s.hops = o.hops;
  return s;
}

/// Walk settings and seed stored at training time, so evaluation samples the
/// same way unless overridden.
config::KeyValues checkpoint_run(const std::string& path) {
  const auto doc = nn::load_checkpoint_document(path);
  config::KeyValues kv;
  if (doc.contains("meta") && doc["meta"].contains("run")) {
    for (const char* k : {"seed", "structure_window", "interval_days", "walk_length", "temporal_variant"})
      if (doc["meta"]["run"].contains(k)) kv[k] = doc["meta"]["run"][k].get<std::string>();
  }
  return kv;
}

seqmodel::Model load_model(const std::string& path) {
  try {
    return seqmodel::Model::load(path);
  } catch (const ShapeMismatch& e) {
    throw InputError(std::string("checkpoint does not match its configuration: ") + e.what());
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------

int cmd_gen(const Options& o) {
  auto cfg = resolve(o);
  const auto dir = prepare_out(cfg);
  log("gen", "seed=" + std::to_string(cfg.seed));
  auto corpus = synthgen::gen_dataset(cfg.gen, cfg.out);
  echo_config(dir, cfg);
  std::cout << "wrote " << corpus.transactions.size() << " transactions and " << corpus.labels.size()
            << " labels to " << cfg.out << '\n';
  return kOk;
}

int cmd_ingest(const Options& o) {
  auto cfg = resolve(o);
  const auto dir = prepare_out(cfg);
  log("ingest", "seed=" + std::to_string(cfg.seed));
  auto l = load_graph(cfg, "ingest", o.strict);
  {
    auto f = open_out(dir / "transactions.csv");
    write_transactions_csv(f, l.graph.edges());
  }
  if (!cfg.labels.empty()) {
    auto f = open_out(dir / "labels.csv");
    write_labels_csv(f, l.graph.labels());
  }
  nlohmann::ordered_json rep;
  rep["records"] = l.parse.transactions.size() + l.parse.skipped;
  rep["accepted"] = l.parse.transactions.size();
  rep["skipped"] = l.parse.skipped;
  rep["nodes"] = l.graph.node_count();
  rep["edges"] = l.graph.edge_count();
  auto issues = nlohmann::ordered_json::array();
  for (const auto& i : l.parse.issues) issues.push_back({{"line", i.line}, {"message", i.message}});
  rep["issues"] = issues;
  write_json(dir / "ingest_report.json", rep);
  echo_config(dir, cfg);
  std::cout << "ingested " << l.graph.edge_count() << " transactions over " << l.graph.node_count() << " accounts\n";
  return kOk;
}

nlohmann::ordered_json stats_json(const DegreeStats& s) {
  auto hist = [](const std::map<std::uint64_t, std::uint64_t>& h) {
    nlohmann::ordered_json a = nlohmann::ordered_json::object();
    for (auto [d, c] : h) a[std::to_string(d)] = c;
    return a;
  };
  nlohmann::ordered_json j;
  j["node_count"] = s.node_count;
  j["edge_count"] = s.edge_count;
  j["source_count"] = s.source_count;
  j["avg_degree"] = s.node_count ? 2.0 * static_cast<double>(s.edge_count) / static_cast<double>(s.node_count) : 0.0;
  j["sd_degree"] = s.sd_degree;
  j["in_histogram"] = hist(s.in_histogram);
  j["out_histogram"] = hist(s.out_histogram);
  return j;
}

int cmd_stats(const Options& o) {
  auto cfg = resolve(o);
  log("stats", "seed=" + std::to_string(cfg.seed));
  auto l = load_graph(cfg, "stats");
  const auto j = stats_json(degree_stats(l.graph));
  if (cfg.out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    const auto dir = prepare_out(cfg);
    write_json(dir / "stats.json", j);
    echo_config(dir, cfg);
  }
  return kOk;
}

int cmd_sample(const Options& o) {
  auto cfg = resolve(o);
  const auto dir = prepare_out(cfg);
  log("sample", "seed=" + std::to_string(cfg.seed));
  auto l = load_graph(cfg, "sample");
  const auto accounts = target_accounts(cfg, l.graph);
  const auto s = sampling(cfg, o);
  std::vector<strwalk::SampledGraph> out(accounts.size());
  pipeline::parallel_for(accounts.size(), cfg.threads,
                         [&](std::size_t i) { out[i] = pipeline::sample_account(l.graph, accounts[i], s); });
  fs::create_directories(dir / "samples");
  auto summary = open_out(dir / "samples.csv");
  summary << "address,nodes,edges,intervals\n";
  for (std::size_t i = 0; i < accounts.size(); ++i) {
    auto f = open_out(dir / "samples" / (accounts[i].str() + ".jsonl"));
    strwalk::write_sampled_graph_jsonl(f, l.graph, out[i], cfg.walk);
    const auto seq = strwalk::slice_subgraph_sequence(l.graph, out[i]);
    summary << accounts[i] << ',' << out[i].nodes.size() << ',' << out[i].edges.size() << ','
            << seq.intervals.size() << '\n';
  }
  echo_config(dir, cfg);
  std::cout << "sampled " << accounts.size() << " accounts\n";
  return kOk;
}

int cmd_train(const Options& o) {
  auto cfg = resolve(o);
  const auto dir = prepare_out(cfg);
  log("train", "seed=" + std::to_string(cfg.seed));
  auto l = load_graph(cfg, "train");
  const auto data = pipeline::labeled_dataset(l.graph, cfg.balance, cfg.seed);
  if (data.accounts.empty()) throw SingleClassDataset("no labeled accounts with transactions");
  const auto split = pipeline::split_dataset(data.labels, cfg.seed);
  write_json(dir / "split.json", pipeline::split_to_json(split, data, cfg.seed));

  const auto inputs = pipeline::build_inputs(l.graph, data.accounts, sampling(cfg, o), cfg.feature, cfg.threads);
  seqmodel::Model model(cfg.feature, cfg.model);
  const auto train_set = pipeline::make_examples(data, split.train, inputs);
  const auto val_set = pipeline::make_examples(data, split.val, inputs);
  const auto result = seqmodel::train(model, train_set, val_set);

  nlohmann::ordered_json run;
  for (const auto& [k, v] : config::to_key_values(cfg)) run[k] = v;
  model.save((dir / "model.json").string(), {{"run", run}, {"best_epoch", result.best_epoch}});
  auto hist = open_out(dir / "history.csv");
  hist << "epoch,train_loss,val_loss,val_weighted_f1\n";
  for (const auto& r : result.history)
    hist << r.epoch << ',' << fmt(r.train_loss) << ',' << fmt(r.val_loss) << ',' << fmt(r.val_weighted_f1) << '\n';
  echo_config(dir, cfg);
  std::cout << "trained on " << train_set.size() << " accounts; best epoch " << result.best_epoch << '\n';
  return kOk;
}

int cmd_eval(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto cfg = resolve(o, checkpoint_run(o.checkpoint));
  const auto dir = prepare_out(cfg);
  log("eval", "seed=" + std::to_string(cfg.seed));
  const auto model = load_model(cfg.checkpoint);
  auto l = load_graph(cfg, "eval");
  const auto data = pipeline::labeled_dataset(l.graph, false, cfg.seed);
  std::vector<std::size_t> idx;
  std::string split_path = cfg.split;
  if (split_path.empty()) {
    const auto guess = fs::path(cfg.checkpoint).parent_path() / "split.json";
    if (fs::exists(guess)) split_path = guess.string();
  }
  std::string subset = "all";
  if (!split_path.empty()) {
    std::ifstream in(split_path);
    if (!in) throw UnreadableInput("cannot open split " + split_path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw InputError("invalid split file: " + std::string(e.what()));
    }
    idx = pipeline::split_from_json(j, data).test;
    subset = "test";
  } else {
    for (std::size_t i = 0; i < data.accounts.size(); ++i) idx.push_back(i);
  }
  std::vector<Address> accs;
  std::vector<int> truth;
  for (auto i : idx) {
    accs.push_back(data.accounts[i]);
    truth.push_back(data.labels[i]);
  }
  const auto det = pipeline::detect(model, l.graph, accs, sampling(cfg, o), cfg.threads);
  std::vector<int> preds;
  for (const auto& d : det) preds.push_back(d.malicious ? 1 : 0);
  const auto cm = eval::confusion(preds, truth);
  auto rep = eval::report_json(cm, eval::metrics(cm));
  rep["subset"] = subset;
  write_json(dir / "metrics.json", rep);
  echo_config(dir, cfg);
  std::cout << rep["metrics"].dump() << '\n';
  return kOk;
}

int cmd_detect(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto cfg = resolve(o, checkpoint_run(o.checkpoint));
  const auto dir = prepare_out(cfg);
  log("detect", "seed=" + std::to_string(cfg.seed));
  const auto model = load_model(cfg.checkpoint);
  auto l = load_graph(cfg, "detect");
  const auto accounts = target_accounts(cfg, l.graph);
  const auto det = pipeline::detect(model, l.graph, accounts, sampling(cfg, o), cfg.threads);
  auto f = open_out(dir / "detections.csv");
  f << "address,label,score\n";
  for (const auto& d : det) f << d.account << ',' << (d.malicious ? "malicious" : "normal") << ',' << fmt(d.score) << '\n';
  echo_config(dir, cfg);
  std::cout << "scored " << det.size() << " accounts\n";
  return kOk;
}

int cmd_export(const Options& o) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto cfg = resolve(o, checkpoint_run(o.checkpoint));
  const auto dir = prepare_out(cfg);
  log("export-embeddings", "seed=" + std::to_string(cfg.seed));
  const auto model = load_model(cfg.checkpoint);
  auto l = load_graph(cfg, "export-embeddings");
  const auto accounts = target_accounts(cfg, l.graph);
  const auto inputs = pipeline::build_inputs(l.graph, accounts, sampling(cfg, o), model.feature_config(), cfg.threads);
  fs::create_directories(dir / "embeddings");
  auto index = open_out(dir / "embeddings" / "index.csv");
  index << "account,m,D,k\n";
  for (std::size_t i = 0; i < accounts.size(); ++i) {
    const auto phi = model.embed(inputs[i]);
    auto f = open_out(dir / "embeddings" / (accounts[i].str() + ".csv"));
    for (std::size_t r = 0; r < phi.rows(); ++r) {
      for (std::size_t c = 0; c < phi.cols(); ++c) f << (c ? "," : "") << fmt(phi(r, c));
      f << '\n';
    }
    index << accounts[i] << ',' << phi.rows() << ',' << phi.cols() << ',' << cfg.walk.interval_days << '\n';
  }
  echo_config(dir, cfg);
  std::cout << "exported " << accounts.size() << " embeddings\n";
  return kOk;
}

int cmd_fetch(const Options& o) {
  auto cfg = resolve(o);
  const auto dir = prepare_out(cfg);
  log("fetch", "seed=" + std::to_string(cfg.seed));
  cfg.crawl.seeds.clear();
  if (!cfg.accounts.empty()) cfg.crawl.seeds = read_accounts(cfg.accounts);
  for (const auto& a : o.addresses) cfg.crawl.seeds.push_back(Address::parse(a));
  if (cfg.crawl.seeds.empty()) throw ConfigError("pass --address or --accounts");
  const auto fc = cfg.fetch.with_env_key();
  if (fc.api_key.empty()) log("fetch", std::string("warning: ") + fetch::kApiKeyEnv + " is not set");
  const auto res = fetch::crawl_neighborhood(fc, cfg.crawl);
  {
    auto f = open_out(dir / "transactions.csv");
    write_transactions_csv(f, res.transactions);
  }
  nlohmann::ordered_json man;
  man["accounts_fetched"] = res.accounts_fetched;
  man["transactions"] = res.transactions.size();
  auto errs = nlohmann::ordered_json::array();
  for (const auto& e : res.errors) errs.push_back({{"address", e.address.str()}, {"error", e.error}});
  man["errors"] = errs;
  write_json(dir / "fetch_manifest.json", man);
  echo_config(dir, cfg);
  std::cout << "fetched " << res.transactions.size() << " transactions (" << res.errors.size() << " failures)\n";
  return res.accounts_fetched == 0 ? kRuntime : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"txscam: temporal transaction-graph scam detection"};
  app.require_subcommand(1);
  Options o;
  int (*handler)(const Options&) = nullptr;

  auto sub = [&](const char* name, const char* desc, int (*fn)(const Options&)) {
    auto* s = app.add_subcommand(name, desc);
    add_common(s, o);
    s->callback([&handler, fn] { handler = fn; });
    return s;
  };

  auto* gen = sub("gen", "Generate a labeled synthetic corpus", &cmd_gen);
  gen->add_option("--out", o.out, "Output directory")->required();
  gen->add_option("--interval-days", o.interval_days, "Interval length k in days")->check(CLI::PositiveNumber);

  auto* ingest = sub("ingest", "Validate and normalize a transaction file", &cmd_ingest);
  add_graph_inputs(ingest, o, false);
  ingest->add_flag("--strict", o.strict, "Fail (exit 2) on any malformed record");
  ingest->add_option("--out", o.out, "Output directory")->required();

  auto* stats = sub("stats", "Degree statistics of the transaction graph", &cmd_stats);
  add_graph_inputs(stats, o, false);
  stats->add_option("--out", o.out, "Output directory (default: print to stdout)");

  auto* sample = sub("sample", "Run STRWalk per account and write sampled graphs", &cmd_sample);
  add_graph_inputs(sample, o, false);
  add_walk(sample, o);
  sample->add_option("--accounts", o.accounts, "File with one address per line");
  sample->add_flag("--full", o.full, "Take the unsampled neighborhood instead");
  sample->add_option("--hops", o.hops, "Neighborhood radius with --full");
  sample->add_option("--out", o.out, "Output directory")->required();

  auto* train = sub("train", "Train the detector", &cmd_train);
  add_graph_inputs(train, o, true);
  add_walk(train, o);
  train->add_option("--ablate", o.ablate, "Ablation")->check(CLI::IsMember({"graph", "transpose"}));
  train->add_option("--out", o.out, "Output directory")->required();

  auto* ev = sub("eval", "Evaluate a checkpoint on the held-out split", &cmd_eval);
  add_graph_inputs(ev, o, true);
  add_walk(ev, o);
  ev->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  ev->add_option("--split", o.split, "split.json (default: next to the checkpoint)");
  ev->add_option("--out", o.out, "Output directory")->required();

  auto* det = sub("detect", "Score accounts with a trained model", &cmd_detect);
  add_graph_inputs(det, o, false);
  add_walk(det, o);
  det->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  det->add_option("--accounts", o.accounts, "File with one address per line");
  det->add_flag("--full", o.full, "Score on the unsampled neighborhood");
  det->add_option("--hops", o.hops, "Neighborhood radius with --full");
  det->add_option("--out", o.out, "Output directory")->required();

  auto* exp = sub("export-embeddings", "Write per-account interval feature matrices", &cmd_export);
  add_graph_inputs(exp, o, false);
  add_walk(exp, o);
  exp->add_option("--checkpoint", o.checkpoint, "Model checkpoint")->required();
  exp->add_option("--accounts", o.accounts, "File with one address per line");
  exp->add_option("--out", o.out, "Output directory")->required();

  auto* fet = sub("fetch", "Crawl account neighborhoods from an explorer API", &cmd_fetch);
  fet->add_option("--address", o.addresses, "Seed address; repeatable");
  fet->add_option("--accounts", o.accounts, "File with one seed address per line");
  fet->add_option("--depth", o.depth, "Breadth-first depth");
  fet->add_option("--out", o.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    return handler(o);
  } catch (const InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
}
