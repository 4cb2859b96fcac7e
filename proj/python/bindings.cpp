#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>

#include "txscam/alias.hpp"
#include "txscam/eval.hpp"
#include "txscam/pipeline.hpp"
#include "txscam/strwalk.hpp"
#include "txscam/synthgen.hpp"

namespace py = pybind11;
using namespace txscam;

namespace {

TemporalMultiDiGraph load(const std::string& tx, const std::string& labels) {
  auto parsed = parse_transactions_file(tx);
  LabelMap lm;
  if (!labels.empty()) lm = parse_labels_file(labels);
  return build_graph(std::move(parsed.transactions), lm);
}

strwalk::WalkConfig walk_cfg(int window, int interval_days, int walk_length, const std::string& variant,
                             std::uint64_t seed) {
  strwalk::WalkConfig w;
  w.structure_window = window;
  w.interval_days = interval_days;
  w.walk_length = walk_length;
  if (variant == "min")
    w.temporal_variant = strwalk::TemporalVariant::MinAnchored;
  else if (variant == "max")
    w.temporal_variant = strwalk::TemporalVariant::MaxAnchored;
  else
    throw ConfigError("variant must be 'min' or 'max'");
  w.rng_seed = seed;
  return w;
}

py::dict metrics_dict(const std::vector<int>& preds, const std::vector<int>& truth) {
  const auto cm = eval::confusion(preds, truth);
  const auto m = eval::metrics(cm);
  py::dict d;
  d["tp"] = cm.tp;
  d["fp"] = cm.fp;
  d["tn"] = cm.tn;
  d["fn"] = cm.fn;
  d["accuracy"] = m.accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  d["weighted_f1"] = m.weighted_f1;
  d["flags"] = m.flags;
  return d;
}

}  // namespace

PYBIND11_MODULE(_txscam, m) {
  m.doc() = "Temporal transaction-graph scam detection";

  // Base first: translators registered later are tried first.
  auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  const py::tuple input_bases = py::make_tuple(base, py::handle(PyExc_ValueError));
  py::register_exception<InputError>(m, "InputError", input_bases);

  m.def("interval_index", &strwalk::interval_index, py::arg("t"), py::arg("t_first"), py::arg("k"));

  m.def(
      "temporal_step_weights",
      [](const std::vector<std::int64_t>& ts, const std::string& variant) {
        return strwalk::temporal_step_weights(
            ts, variant == "max" ? strwalk::TemporalVariant::MaxAnchored : strwalk::TemporalVariant::MinAnchored);
      },
      py::arg("timestamps"), py::arg("variant") = "min");

  m.def(
      "alias_sample",
      [](const std::vector<double>& weights, std::size_t n, std::uint64_t seed) {
        AliasTable t(weights);
        Rng rng(seed);
        std::vector<std::size_t> out(n);
        for (auto& x : out) x = t.sample(rng);
        return out;
      },
      py::arg("weights"), py::arg("n"), py::arg("seed") = 0);

  m.def(
      "degree_stats",
      [](const std::string& tx, const std::string& labels) {
        const auto s = degree_stats(load(tx, labels));
        py::dict d;
        d["node_count"] = s.node_count;
        d["edge_count"] = s.edge_count;
        d["source_count"] = s.source_count;
        d["sd_degree"] = s.sd_degree;
        d["in_degree"] = s.in_degree;
        d["out_degree"] = s.out_degree;
        return d;
      },
      py::arg("transactions"), py::arg("labels") = "");

  m.def(
      "strwalk",
      [](const std::string& tx, const std::string& address, int window, int interval_days, int walk_length,
         const std::string& variant, std::uint64_t seed) {
        const auto g = load(tx, "");
        const auto s = strwalk::strwalk(g, Address::parse(address), walk_cfg(window, interval_days, walk_length, variant, seed));
        py::dict d;
        std::vector<std::string> nodes, walk;
        for (auto v : s.nodes) nodes.push_back(g.address(v).str());
        for (auto v : s.walk) walk.push_back(g.address(v).str());
        py::list edges;
        for (const auto& e : s.edges) edges.append(py::make_tuple(g.edge(e.edge).hash, e.tau));
        d["t_first"] = s.t_first;
        d["nodes"] = nodes;
        d["walk"] = walk;
        d["edges"] = edges;
        return d;
      },
      py::arg("transactions"), py::arg("address"), py::arg("window") = 10, py::arg("interval_days") = 7,
      py::arg("walk_length") = 20, py::arg("variant") = "min", py::arg("seed") = 0);

  m.def(
      "gen_dataset",
      [](const std::string& out_dir, std::size_t normal, std::size_t scam, std::size_t phishing, std::uint64_t seed) {
        synthgen::GenConfig c;
        c.normal_accounts = normal;
        c.scam_accounts = scam;
        c.phishing_accounts = phishing;
        c.seed = seed;
        const auto corpus = synthgen::gen_dataset(c, out_dir);
        return py::make_tuple(corpus.transactions.size(), corpus.labels.size());
      },
      py::arg("out_dir"), py::arg("normal") = 10, py::arg("scam") = 10, py::arg("phishing") = 10,
      py::arg("seed") = 0);

  m.def("metrics", &metrics_dict, py::arg("preds"), py::arg("truth"));

  m.def(
      "train",
      [](const std::string& tx, const std::string& labels, const std::string& checkpoint, std::size_t epochs,
         double lr, std::uint64_t seed, const std::string& ablate, int window) {
        const auto g = load(tx, labels);
        const auto data = pipeline::labeled_dataset(g, true, seed);
        const auto split = pipeline::split_dataset(data.labels, seed);
        pipeline::Sampling s;
        s.walk = walk_cfg(window, 7, 20, "min", seed);
        encoder::FeatureConfig fc;
        seqmodel::SeqModelConfig sc;
        sc.epochs = epochs;
        sc.lr = lr;
        sc.seed = seed;
        sc.disable_graph_encoder = ablate == "graph";
        sc.disable_transposed = ablate == "transpose";
        std::vector<int> preds, truth;
        std::vector<double> losses;
        std::size_t best_epoch = 0;
        {
          py::gil_scoped_release release;
          const auto inputs = pipeline::build_inputs(g, data.accounts, s, fc, 1);
          seqmodel::Model model(fc, sc);
          const auto res = seqmodel::train(model, pipeline::make_examples(data, split.train, inputs),
                                           pipeline::make_examples(data, split.val, inputs));
          nlohmann::ordered_json run = {{"seed", std::to_string(seed)}, {"structure_window", std::to_string(window)}};
          model.save(checkpoint, {{"run", run}});
          for (auto i : split.test) {
            preds.push_back(model.predict(inputs[i]).malicious ? 1 : 0);
            truth.push_back(data.labels[i]);
          }
          for (const auto& r : res.history) losses.push_back(r.train_loss);
          best_epoch = res.best_epoch;
        }
        py::dict d;
        d["train_loss"] = losses;
        d["best_epoch"] = best_epoch;
        d["test"] = preds.empty() ? py::object(py::none()) : py::object(metrics_dict(preds, truth));
        return d;
      },
      py::arg("transactions"), py::arg("labels"), py::arg("checkpoint"), py::arg("epochs") = 10,
      py::arg("lr") = 1e-2, py::arg("seed") = 0, py::arg("ablate") = "", py::arg("window") = 10);

  m.def(
      "detect",
      [](const std::string& tx, const std::string& checkpoint, const std::vector<std::string>& accounts,
         std::uint64_t seed, int window) {
        const auto g = load(tx, "");
        const auto model = seqmodel::Model::load(checkpoint);
        std::vector<Address> accs;
        for (const auto& a : accounts) accs.push_back(Address::parse(a));
        pipeline::Sampling s;
        s.walk = walk_cfg(window, 7, 20, "min", seed);
        const auto det = pipeline::detect(model, g, accs, s, 1);
        py::list out;
        for (const auto& d : det) out.append(py::make_tuple(d.account.str(), d.malicious, d.score));
        return out;
      },
      py::arg("transactions"), py::arg("checkpoint"), py::arg("accounts"), py::arg("seed") = 0,
      py::arg("window") = 10);
}
