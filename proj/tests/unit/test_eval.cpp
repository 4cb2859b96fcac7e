#include <doctest.h>

#include <algorithm>
#include <vector>

#include "txscam/eval.hpp"
#include "txscam/rng.hpp"

using namespace txscam;

namespace {

// Straight from the definitions, used to cross-check the library on random data.
struct Oracle {
  double p = 0, r = 0, f1 = 0, np = 0, nr = 0, nf1 = 0, wf1 = 0, mf1 = 0, acc = 0;
};

double safe_div(double a, double b) { return b == 0 ? 0.0 : a / b; }

Oracle oracle(const std::vector<int>& pred, const std::vector<int>& truth) {
  double tp = 0, fp = 0, tn = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) tp++;
    if (pred[i] == 1 && truth[i] == 0) fp++;
    if (pred[i] == 0 && truth[i] == 0) tn++;
    if (pred[i] == 0 && truth[i] == 1) fn++;
  }
  Oracle o;
  o.p = safe_div(tp, tp + fp);
  o.r = safe_div(tp, tp + fn);
  o.f1 = safe_div(2 * o.p * o.r, o.p + o.r);
  o.np = safe_div(tn, tn + fn);
  o.nr = safe_div(tn, tn + fp);
  o.nf1 = safe_div(2 * o.np * o.nr, o.np + o.nr);
  const double n = static_cast<double>(pred.size());
  o.wf1 = ((tp + fn) * o.f1 + (tn + fp) * o.nf1) / n;
  o.mf1 = (o.f1 + o.nf1) / 2;
  o.acc = (tp + tn) / n;
  return o;
}

bool has_flag(const eval::Metrics& m, const std::string& f) {
  return std::find(m.flags.begin(), m.flags.end(), f) != m.flags.end();
}

}  // namespace

TEST_SUITE("eval") {

TEST_CASE("all correct") {
  const std::vector<int> y{1, 0, 1, 0};
  const auto cm = eval::confusion(y, y);
  CHECK(cm == eval::ConfusionMatrix{2, 0, 2, 0});
  const auto m = eval::metrics(cm);
  CHECK(m.accuracy == 1.0);
  CHECK(m.precision == 1.0);
  CHECK(m.recall == 1.0);
  CHECK(m.f1 == 1.0);
  CHECK(m.weighted_f1 == 1.0);
  CHECK(m.flags.empty());
}

TEST_CASE("all wrong") {
  const std::vector<int> p{0, 1, 0, 1}, y{1, 0, 1, 0};
  const auto cm = eval::confusion(p, y);
  CHECK(cm == eval::ConfusionMatrix{0, 2, 0, 2});
  const auto m = eval::metrics(cm);
  CHECK(m.accuracy == 0.0);
  CHECK(m.f1 == 0.0);
  CHECK(has_flag(m, "f1_undefined"));
}

TEST_CASE("half right") {
  const std::vector<int> p{1, 0, 0, 1}, y{1, 1, 0, 0};
  const auto cm = eval::confusion(p, y);
  CHECK(cm == eval::ConfusionMatrix{1, 1, 1, 1});
  const auto m = eval::metrics(cm);
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.precision == doctest::Approx(0.5));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(0.5));
  CHECK(m.weighted_f1 == doctest::Approx(0.5));
}

TEST_CASE("no positive predictions flags precision") {
  const std::vector<int> p{0, 0, 0}, y{1, 0, 0};
  const auto m = eval::metrics(eval::confusion(p, y));
  CHECK(m.precision == 0.0);
  CHECK(has_flag(m, "precision_undefined"));
  CHECK(m.recall == 0.0);
}

TEST_CASE("no positives at all flags recall") {
  const std::vector<int> p{0, 0}, y{0, 0};
  const auto m = eval::metrics(eval::confusion(p, y));
  CHECK(m.recall == 0.0);
  CHECK(has_flag(m, "recall_undefined"));
  CHECK(m.normal.f1 == 1.0);
  CHECK(m.normal.support == 2);
}

TEST_CASE("errors") {
  const std::vector<int> a{1, 0}, b{1};
  CHECK_THROWS_AS(eval::confusion(a, b), eval::LengthMismatch);
  CHECK_THROWS_AS(eval::metrics(eval::ConfusionMatrix{}), eval::Empty);
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(eval::confusion(bad, bad), InputError);
}

TEST_CASE("matches the definitions on random predictions") {
  Rng rng(77);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    std::vector<int> p(n), y(n);
    const double bias = rng.uniform();
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = rng.uniform() < bias ? 1 : 0;
      y[i] = rng.bernoulli(0.5) ? 1 : 0;
    }
    const auto m = eval::metrics(eval::confusion(p, y));
    const Oracle o = oracle(p, y);
    CHECK(m.precision == doctest::Approx(o.p).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(o.r).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(o.f1).epsilon(1e-12));
    CHECK(m.normal.f1 == doctest::Approx(o.nf1).epsilon(1e-12));
    CHECK(m.weighted_f1 == doctest::Approx(o.wf1).epsilon(1e-12));
    CHECK(m.macro_f1 == doctest::Approx(o.mf1).epsilon(1e-12));
    CHECK(m.accuracy == doctest::Approx(o.acc).epsilon(1e-12));
    CHECK(eval::weighted_f1(p, y) == doctest::Approx(o.wf1).epsilon(1e-12));

    for (double v : {m.accuracy, m.precision, m.recall, m.f1, m.weighted_f1, m.macro_f1}) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    CHECK(m.f1 <= std::max(m.precision, m.recall) + 1e-12);
  }
}

TEST_CASE("weighted F1 equals macro F1 on balanced truth") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t half = 1 + rng.below(20);
    std::vector<int> y, p;
    for (std::size_t i = 0; i < half; ++i) {
      y.push_back(1);
      y.push_back(0);
    }
    for (std::size_t i = 0; i < y.size(); ++i) p.push_back(rng.bernoulli(0.5) ? 1 : 0);
    const auto m = eval::metrics(eval::confusion(p, y));
    CHECK(m.weighted_f1 == doctest::Approx(m.macro_f1).epsilon(1e-12));
  }
}

TEST_CASE("report json layout") {
  const std::vector<int> p{1, 0, 0, 1}, y{1, 1, 0, 0};
  const auto cm = eval::confusion(p, y);
  const auto j = eval::report_json(cm, eval::metrics(cm));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  CHECK(keys == std::vector<std::string>{"counts", "metrics", "per_class", "flags"});
  CHECK(j["counts"]["tp"] == 1);
  CHECK(j["metrics"]["f1"].get<double>() == doctest::Approx(0.5));
  CHECK(j["flags"].is_array());
}

}  // TEST_SUITE
