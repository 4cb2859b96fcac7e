#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "txscam/nn/autodiff.hpp"
#include "txscam/nn/params.hpp"

using namespace txscam;
using namespace txscam::nn;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

// Keeps entries at least `gap` away from zero so kinked activations are probed smoothly.
Matrix away_from_zero(std::size_t r, std::size_t c, Rng& rng, double gap = 0.05) {
  Matrix m = random_matrix(r, c, rng);
  for (auto& x : m.data()) x = x < 0 ? x - gap : x + gap;
  return m;
}

// Contracts an arbitrary-shaped output against fixed random weights.
Var probe(Var out, const Matrix& w) { return sum(hadamard(out, out.tape().constant(w))); }

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("matmul examples") {
    Matrix m{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}};
    CHECK(matmul(Matrix::identity(3), m) == m);
    CHECK(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{5}, {6}}) == Matrix{{17}, {39}});
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(4, 2)), ShapeMismatch);
    Tape t;
    CHECK_THROWS_AS(matmul(t.constant(Matrix(2, 3)), t.constant(Matrix(4, 2))), ShapeMismatch);
    CHECK_THROWS_AS(add(t.constant(Matrix(2, 3)), t.constant(Matrix(3, 2))), ShapeMismatch);
  }

  TEST_CASE("softmax examples") {
    Tape t;
    auto u = softmax_rows(t.constant(Matrix{{2, 2, 2, 2}})).value();
    for (double x : u.data()) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));
    auto p = softmax_rows(t.constant(Matrix{{0, std::log(3.0)}})).value();
    CHECK(std::abs(p[0] - 0.25) < 1e-15);
    CHECK(std::abs(p[1] - 0.75) < 1e-15);
    auto col = softmax_rows(t.constant(Matrix{{3}, {-7}, {100}})).value();
    for (double x : col.data()) CHECK(x == 1.0);
    std::uint8_t valid[] = {1, 0, 1, 0};
    auto masked = softmax_rows(t.constant(Matrix{{1, 50, 1, -50}}), valid).value();
    CHECK(masked(0, 1) == 0.0);
    CHECK(masked(0, 3) == 0.0);
    CHECK(std::abs(masked(0, 0) - 0.5) < 1e-15);
  }

  TEST_CASE("property: softmax rows sum to one for |x| <= 50") {
    Rng rng(4);
    Tape t(false);
    for (int i = 0; i < 200; ++i) {
      auto s = softmax_rows(t.constant(random_matrix(1 + rng.below(8), 1 + rng.below(40), rng, -50, 50))).value();
      for (std::size_t r = 0; r < s.rows(); ++r) {
        double total = 0;
        for (double x : s.row(r)) {
          CHECK(x >= 0);
          total += x;
        }
        CHECK(std::abs(total - 1) < 1e-12);
      }
    }
  }

  TEST_CASE("activation examples") {
    Tape t;
    auto lr = leaky_relu(t.constant(Matrix{{-1, 2}})).value();
    CHECK(lr(0, 0) == doctest::Approx(-0.01));
    CHECK(lr(0, 1) == 2);
    auto e = elu(t.constant(Matrix{{0, -1, 3}})).value();
    CHECK(e(0, 0) == 0);
    CHECK(std::abs(e(0, 1) - (std::exp(-1.0) - 1)) < 1e-15);
    CHECK(e(0, 2) == 3);
    CHECK(sigmoid(t.constant(Matrix{{0}})).scalar() == 0.5);
  }

  TEST_CASE("cross entropy of uniform logits is ln 2") {
    Tape t;
    CHECK(std::abs(cross_entropy(t.constant(Matrix{{0.3, 0.3}}), 1).scalar() - std::log(2.0)) < 1e-15);
    CHECK_THROWS(cross_entropy(t.constant(Matrix{{0.3, 0.3}}), 2));
  }

  TEST_CASE("unfold and masked max") {
    Tape t;
    Matrix a{{1, 10}, {2, 20}, {3, 30}};
    auto u = unfold_rows(t.constant(a), 3).value();
    REQUIRE(u.rows() == 3);
    REQUIRE(u.cols() == 6);
    // Row 0 sees (pad, row0, row1).
    CHECK(u(0, 0) == 0);
    CHECK(u(0, 1) == 0);
    CHECK(u(0, 2) == 1);
    CHECK(u(0, 5) == 20);
    CHECK(u(2, 4) == 0);
    std::uint8_t valid[] = {1, 1, 0};
    auto mx = masked_max_rows(t.constant(Matrix{{1, -5}, {4, -6}, {100, 100}}), valid).value();
    CHECK(mx == Matrix{{4, -5}});
  }

  TEST_CASE("gradient check: quadratic is exact") {
    Rng rng(1);
    Param x("x", random_matrix(3, 4, rng));
    auto err = grad_check([&](Tape& t) { return sum_squares(t.param(x)); }, {&x});
    CHECK(err < 1e-8);
  }

  TEST_CASE("gradient check: every differentiable op") {
    Rng rng(2);
    Param a("a", away_from_zero(3, 4, rng)), b("b", random_matrix(4, 2, rng)), c("c", random_matrix(3, 4, rng));
    Param bias("bias", random_matrix(1, 4, rng));
    Param sq("sq", random_matrix(4, 4, rng));
    const Matrix w34 = random_matrix(3, 4, rng), w32 = random_matrix(3, 2, rng), w43 = random_matrix(4, 3, rng),
                 w26 = random_matrix(2, 6, rng), w14 = random_matrix(1, 4, rng), w312 = random_matrix(3, 12, rng),
                 w18 = random_matrix(1, 8, rng), w38 = random_matrix(3, 8, rng), w44 = random_matrix(4, 4, rng);

    auto check = [&](const char* name, const ScalarFn& f, std::vector<Param*> params) {
      INFO(name);
      CHECK(grad_check(f, params) < 1e-6);
    };
    check("matmul", [&](Tape& t) { return probe(matmul(t.param(a), t.param(b)), w32); }, {&a, &b});
    check("add/sub", [&](Tape& t) { return probe(sub(add(t.param(a), t.param(c)), t.param(a)), w34); }, {&a, &c});
    check("add_row", [&](Tape& t) { return probe(add_row(t.param(a), t.param(bias)), w34); }, {&a, &bias});
    check("hadamard", [&](Tape& t) { return probe(hadamard(t.param(a), t.param(c)), w34); }, {&a, &c});
    check("scale", [&](Tape& t) { return probe(scale(t.param(a), -2.5), w34); }, {&a});
    check("leaky_relu", [&](Tape& t) { return probe(leaky_relu(t.param(a)), w34); }, {&a});
    check("elu", [&](Tape& t) { return probe(elu(t.param(a)), w34); }, {&a});
    check("sigmoid", [&](Tape& t) { return probe(sigmoid(t.param(c)), w34); }, {&c});
    check("softmax", [&](Tape& t) { return probe(softmax_rows(t.param(c)), w34); }, {&c});
    std::uint8_t valid_cols[] = {1, 0, 1, 1};
    check("masked softmax", [&](Tape& t) { return probe(softmax_rows(t.param(c), valid_cols), w34); }, {&c});
    check("transpose", [&](Tape& t) { return probe(transpose(t.param(a)), w43); }, {&a});
    check("reshape", [&](Tape& t) { return probe(reshape(t.param(a), 2, 6), w26); }, {&a});
    check("concat", [&](Tape& t) { return probe(concat_cols(t.param(a), t.param(c)), w38); },
          {&a, &c});
    check("stack/slice", [&](Tape& t) {
            Var parts[] = {slice_rows(t.param(a), 1, 1), slice_rows(t.param(c), 0, 1)};
            Var s = stack_rows(parts);
            return probe(reshape(s, 1, 8), w18);
          },
          {&a, &c});
    check("sum_squares", [&](Tape& t) { return sum_squares(t.param(a)); }, {&a});
    check("unfold", [&](Tape& t) { return probe(unfold_rows(t.param(a), 3), w312); }, {&a});
    std::uint8_t valid_rows[] = {1, 1, 0};
    check("masked_max", [&](Tape& t) { return probe(masked_max_rows(t.param(a), valid_rows), w14); }, {&a});
    check("cross_entropy", [&](Tape& t) { return cross_entropy(slice_rows(matmul(t.param(a), t.param(b)), 2, 1), 1); }, {&a, &b});
    check("shared use accumulates", [&](Tape& t) {
            Var x = t.param(sq);
            return probe(matmul(x, x), w44);
          },
          {&sq});
  }

  TEST_CASE("gradient check: attention layer with random inputs") {
    Rng rng(3);
    const std::size_t blocks = 3, len = 5, d = 4;
    Param x("x", random_matrix(blocks * len, d, rng));
    Param tq("tq", random_matrix(d, d, rng)), tk("tk", random_matrix(d, d, rng)), tv("tv", random_matrix(d, d, rng));
    std::vector<std::uint8_t> valid{1, 1, 1, 0, 0};
    const Matrix w = random_matrix(blocks * len, d, rng);
    for (bool causal : {false, true}) {
      auto err = grad_check(
          [&](Tape& t) {
            Var xv = t.param(x);
            Var out = block_attention(matmul(xv, t.param(tq)), matmul(xv, t.param(tk)), matmul(xv, t.param(tv)),
                                      blocks, len, 2, valid, causal, 1.0 / std::sqrt(double(d)));
            return probe(out, w);
          },
          {&x, &tq, &tk, &tv});
      CHECK(err < 1e-4);
    }
  }

  TEST_CASE("property: attention rows normalize and masked weights vanish") {
    Rng rng(8);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t blocks = 1 + rng.below(4), len = 1 + rng.below(10), heads = 1 + rng.below(2), d = 2 * heads;
      std::vector<std::uint8_t> valid(len, 0);
      const std::size_t real = 1 + rng.below(len);
      std::fill_n(valid.begin(), real, 1);
      const bool causal = rng.bernoulli(0.5);
      Tape t(false);
      std::vector<Matrix> weights;
      Var q = t.constant(random_matrix(blocks * len, d, rng, -3, 3));
      Var k = t.constant(random_matrix(blocks * len, d, rng, -3, 3));
      Var v = t.constant(random_matrix(blocks * len, d, rng, -3, 3));
      block_attention(q, k, v, blocks, len, heads, valid, causal, 0.5, &weights);
      REQUIRE(weights.size() == blocks * heads);
      for (const auto& a : weights)
        for (std::size_t i = 0; i < len; ++i) {
          double total = 0;
          for (std::size_t j = 0; j < len; ++j) {
            const bool masked = !valid[j] || (causal && j > i);
            if (masked)
              CHECK(a(i, j) < 1e-12);
            else
              total += a(i, j);
          }
          if (!(causal && i >= real)) CHECK(std::abs(total - 1) < 1e-12);
        }
    }
  }

  TEST_CASE("backward accumulates and rejects non-scalar losses") {
    Param p("p", Matrix{{2.0}});
    Tape t;
    Var x = t.param(p);
    t.backward(add(scale(x, 3.0), x));
    CHECK(p.grad[0] == 4.0);
    Tape t2;
    Var y = t2.param(p);
    t2.backward(scale(y, 1.0));
    CHECK(p.grad[0] == 5.0);  // additive until zeroed
    p.zero_grad();
    CHECK(p.grad[0] == 0.0);
    Tape t3;
    CHECK_THROWS_AS(t3.backward(t3.constant(Matrix(2, 1))), ShapeMismatch);
    Tape inference(false);
    CHECK_THROWS(inference.backward(inference.constant(Matrix{{1}})));
  }

  TEST_CASE("grad_check reports non-finite objectives") {
    Param p("p", Matrix{{0.0}});
    CHECK_THROWS_AS(grad_check([&](Tape& t) { return scale(t.param(p), NAN); }, {&p}), NonFiniteLoss);
  }

  TEST_CASE("xavier init is seeded and bounded") {
    Rng r1(5), r2(5);
    ParamSet s1, s2;
    auto& w1 = s1.add_xavier("w", 6, 10, r1);
    auto& w2 = s2.add_xavier("w", 6, 10, r2);
    CHECK(w1.value == w2.value);
    const double bound = std::sqrt(6.0 / 16.0);
    for (double x : w1.value.data()) CHECK(std::abs(x) <= bound);
    CHECK(s1.add_zeros("b", 1, 10).decay == false);
    CHECK_THROWS(s1.at("missing"));
  }

  TEST_CASE("adam minimizes a quadratic and decays only weights") {
    ParamSet set;
    auto& w = set.add("w", Matrix{{3.0, -2.0}});
    auto& b = set.add("b", Matrix{{0.0}}, false);
    AdamConfig cfg;
    cfg.lr = 0.05;
    Adam opt(set, cfg);
    for (int i = 0; i < 2000; ++i) {
      set.zero_grad();
      Tape t;
      t.backward(sum_squares(t.param(w)));
      opt.step();
    }
    CHECK(std::abs(w.value[0]) < 1e-2);
    CHECK(std::abs(w.value[1]) < 1e-2);
    CHECK(b.value[0] == 0.0);

    // Zero gradient: weights shrink by lr * decay per step, biases do not move.
    ParamSet s2;
    auto& w2 = s2.add("w", Matrix{{1.0}});
    auto& b2 = s2.add("b", Matrix{{1.0}}, false);
    Adam o2(s2, AdamConfig{});
    o2.step();
    CHECK(std::abs(w2.value[0] - (1.0 - 1e-3 * 5e-4)) < 1e-15);
    CHECK(b2.value[0] == 1.0);
  }

  TEST_CASE("checkpoint round trip and shape checks") {
    Rng rng(9);
    ParamSet a;
    a.add_xavier("w", 3, 2, rng);
    a.add_zeros("b", 1, 2);
    const auto path = (std::filesystem::temp_directory_path() / "txscam_nn_ckpt.json").string();
    save_checkpoint(path, a, {{"note", "x"}});
    auto doc = load_checkpoint_document(path);
    CHECK(doc["format_version"] == kCheckpointVersion);
    CHECK(doc["meta"]["note"] == "x");
    ParamSet b;
    b.add("w", Matrix(3, 2));
    b.add("b", Matrix(1, 2), false);
    params_from_json(doc["params"], b);
    CHECK(b.at("w").value == a.at("w").value);
    ParamSet wrong;
    wrong.add("w", Matrix(2, 3));
    wrong.add("b", Matrix(1, 2));
    CHECK_THROWS_AS(params_from_json(doc["params"], wrong), ShapeMismatch);
    ParamSet missing;
    missing.add("z", Matrix(1, 1));
    CHECK_THROWS_AS(params_from_json(doc["params"], missing), ShapeMismatch);
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_checkpoint_document(path), InputError);
  }

  TEST_CASE("determinism: same seed and ops give identical bits") {
    auto run = [] {
      Rng rng(42);
      ParamSet s;
      auto& w = s.add_xavier("w", 4, 4, rng);
      Tape t;
      Var x = t.constant(random_matrix(3, 4, rng));
      t.backward(sum(softmax_rows(matmul(x, t.param(w)))));
      return std::make_pair(w.value, w.grad);
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
  }
}
