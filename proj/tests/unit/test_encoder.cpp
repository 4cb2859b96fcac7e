#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "txscam/encoder.hpp"

using namespace txscam;
using namespace txscam::encoder;
using fx::addr;
using fx::tx;

namespace {

using fx::kDay;
using fx::kT0;
using fx::toy_graph;

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1) {
  Matrix m(r, c);
  for (auto& x : m.data()) x = rng.uniform(lo, hi);
  return m;
}

double leaky(double x, double s = 0.01) { return x > 0 ? x : s * x; }
double elu1(double x) { return x > 0 ? x : std::exp(x) - 1; }

// Plain-loop evaluation of one interval, sharing no code with the tape ops.
std::vector<double> oracle_encode(const SubgraphInput& in, const nn::ParamSet& ps) {
  const Matrix& W = ps.at("enc.edge_proj").value;
  const Matrix& Tv = ps.at("enc.align_w").value;
  const Matrix& b0 = ps.at("enc.align_b").value;
  const Matrix& Tn = ps.at("enc.score_w").value;
  const Matrix& Th = ps.at("enc.agg_w").value;
  const std::size_t n = in.node_block.rows(), D = Tv.cols(), Cv = in.node_block.cols(), Ce = in.edge_block.cols();
  std::vector<std::vector<double>> h(n, std::vector<double>(D));
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<double> row;
    for (std::size_t c = 0; c < Cv; ++c) row.push_back(in.node_block(s, c));
    for (std::size_t c = 0; c < Ce; ++c) {
      double acc = 0;
      for (std::size_t j = 0; j < Ce; ++j) acc += in.edge_block(s, j) * W(j, c);
      row.push_back(acc);
    }
    for (std::size_t d = 0; d < D; ++d) {
      double acc = b0(0, d);
      for (std::size_t j = 0; j < row.size(); ++j) acc += row[j] * Tv(j, d);
      h[s][d] = leaky(acc);
    }
  }
  std::vector<double> e(n);
  double mx = -1e300;
  for (std::size_t s = 0; s < n; ++s) {
    double acc = 0;
    for (std::size_t d = 0; d < D; ++d) acc += h[0][d] * Tn(d, 0) + h[s][d] * Tn(D + d, 0);
    e[s] = leaky(acc);
    mx = std::max(mx, e[s]);
  }
  double z = 0;
  for (auto& x : e) z += (x = std::exp(x - mx));
  std::vector<double> out(D, 0.0);
  for (std::size_t d = 0; d < D; ++d) {
    double acc = 0;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t j = 0; j < D; ++j) acc += e[s] / z * h[s][j] * Th(j, d);
    out[d] = elu1(acc);
  }
  return out;
}

struct Fixture {
  nn::ParamSet ps;
  EncoderParams p;
  FeatureConfig cfg;
  explicit Fixture(std::uint64_t seed, std::size_t hidden = 16) {
    cfg.hidden = hidden;
    Rng rng(seed);
    p = EncoderParams::create(ps, cfg, rng);
    // Non-zero bias so padding rows would leak if they were not masked.
    for (auto& x : ps.at("enc.align_b").value.data()) x = rng.uniform(-0.5, 0.5);
  }
  Matrix encode(const SubgraphInput& in, std::size_t pad_to = 0) {
    Tape t(false);
    auto vars = EncoderVars::bind(t, p);
    return encode_subgraph(t, in, vars, cfg, pad_to).value();
  }
};

EncoderInput toy_input(const TemporalMultiDiGraph& g, const FeatureConfig& cfg) {
  auto s = strwalk::full_neighborhood(g, addr(1), 2, 7);
  return prepare_input(g, strwalk::slice_subgraph_sequence(g, s), cfg);
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("raw edge features") {
    Transaction t = tx(1, 2, kT0, 0);
    auto a = raw_edge_features(t, kT0, 7, Direction::Outgoing);
    CHECK(a == std::array<double, 3>{0, 0, 1});
    Transaction u = tx(2, 1, kT0 + 7 * kDay, fx::kEther);
    auto b = raw_edge_features(u, kT0, 7, Direction::Incoming);
    CHECK(std::abs(b[0] - std::log(2.0)) < 1e-15);
    CHECK(b[1] == 1.0);
    CHECK(b[2] == -1.0);
  }

  TEST_CASE("self loop at the center is outgoing; detached edges are 0") {
    auto g = build_graph({tx(1, 1, kT0), tx(1, 2, kT0 + 1), tx(2, 3, kT0 + 2)});
    auto s = strwalk::full_neighborhood(g, addr(1), 2, 7);
    auto in = prepare_input(g, strwalk::slice_subgraph_sequence(g, s), FeatureConfig{});
    REQUIRE(in.length() == 1);
    const auto& eb = in.intervals[0].edge_block;
    REQUIRE(eb.rows() == 4);
    CHECK(eb(1, 2) == 1.0);  // self loop
    CHECK(eb(2, 2) == 1.0);  // 1 -> 2
    CHECK(eb(3, 2) == 0.0);  // 2 -> 3 does not touch the center
    for (std::size_t c = 0; c < 3; ++c) CHECK(eb(0, c) == 0.0);
  }

  TEST_CASE("raw node features") {
    auto g = build_graph({tx(1, 2, kT0, 1), tx(3, 4, kT0 + 1), tx(4, 3, kT0 + 2)});
    std::vector<EdgeId> none;
    auto z = raw_node_features(g, none, g.id(addr(1)));
    CHECK(z == std::array<double, 4>{0, 0, 0, 0});
    std::vector<EdgeId> all{0, 1, 2};
    auto one = raw_node_features(g, all, g.id(addr(2)));
    CHECK(std::abs(one[0] - std::log(2.0)) < 1e-15);
    CHECK(one[1] == 0);
    CHECK(std::abs(one[2] - 1e-18) < 1e-30);
    CHECK(one[3] == 0);
    auto cyc = raw_node_features(g, all, g.id(addr(3)));
    CHECK(cyc[0] == cyc[1]);
    CHECK(cyc[2] == cyc[3]);
  }

  TEST_CASE("alignment: zero and identity cases") {
    Tape t;
    Var zeros7 = t.constant(Matrix(3, 4));
    Var zeros3 = t.constant(Matrix(3, 3));
    Var out = align_neighbors(zeros7, zeros3, t.constant(Matrix::identity(3)), t.constant(Matrix(7, 5)),
                              t.constant(Matrix(1, 5)), 0.01);
    for (double x : out.value().data()) CHECK(x == 0.0);

    Rng rng(1);
    Matrix nb = random_matrix(2, 4, rng, 0.1, 2), ebk = random_matrix(2, 3, rng, 0.1, 2);
    Var id = align_neighbors(t.constant(nb), t.constant(ebk), t.constant(Matrix::identity(3)),
                             t.constant(Matrix::identity(7)), t.constant(Matrix(1, 7)), 0.01);
    for (std::size_t r = 0; r < 2; ++r) {
      for (std::size_t c = 0; c < 4; ++c) CHECK(id.value()(r, c) == nb(r, c));
      for (std::size_t c = 0; c < 3; ++c) CHECK(id.value()(r, 4 + c) == ebk(r, c));
    }
    CHECK_THROWS_AS(align_neighbors(t.constant(Matrix(3, 4)), t.constant(Matrix(2, 3)), t.constant(Matrix::identity(3)),
                                    t.constant(Matrix(7, 5)), t.constant(Matrix(1, 5)), 0.01),
                    ShapeMismatch);
  }

  TEST_CASE("attention scores: zero weights, symmetry, random oracle") {
    Rng rng(2);
    Tape t;
    Matrix h = random_matrix(4, 5, rng);
    Var hv = t.constant(h);
    Var hi = nn::slice_rows(hv, 0, 1);
    auto zero = attention_scores(hi, hv, t.constant(Matrix(10, 1)), 0.01).value();
    for (double x : zero.data()) CHECK(x == 0.0);

    Matrix half = random_matrix(5, 1, rng);
    Matrix sym(10, 1);
    for (std::size_t i = 0; i < 5; ++i) sym(i, 0) = sym(5 + i, 0) = half(i, 0);
    Var one = nn::slice_rows(hv, 1, 1), two = nn::slice_rows(hv, 2, 1);
    const double ab = attention_scores(one, two, t.constant(sym), 0.01).scalar();
    const double ba = attention_scores(two, one, t.constant(sym), 0.01).scalar();
    CHECK(std::abs(ab - ba) < 1e-15);

    Matrix w = random_matrix(10, 1, rng);
    auto got = attention_scores(hi, hv, t.constant(w), 0.01).value();
    for (std::size_t x = 0; x < 4; ++x) {
      double acc = 0;
      for (std::size_t d = 0; d < 5; ++d) acc += h(0, d) * w(d, 0) + h(x, d) * w(5 + d, 0);
      CHECK(std::abs(got(x, 0) - leaky(acc)) < 1e-14);
    }
    CHECK_THROWS_AS(attention_scores(hi, hv, t.constant(Matrix(9, 1)), 0.01), ShapeMismatch);
  }

  TEST_CASE("score normalization") {
    Tape t;
    auto eq = normalize_scores(t.constant(Matrix(4, 1, 0.7)), {}).value();
    for (double x : eq.data()) CHECK(std::abs(x - 0.25) < 1e-15);
    std::uint8_t half[] = {1, 1, 0, 0};
    auto m = normalize_scores(t.constant(Matrix{{0.3}, {0.3}, {9}, {-9}}), half).value();
    CHECK(m == Matrix{{0.5, 0.5, 0, 0}});
    auto l3 = normalize_scores(t.constant(Matrix{{0}, {std::log(3.0)}}), {}).value();
    CHECK(std::abs(l3[0] - 0.25) < 1e-15);
    CHECK(std::abs(l3[1] - 0.75) < 1e-15);
    std::uint8_t none[] = {0, 0};
    CHECK_THROWS_AS(normalize_scores(t.constant(Matrix(2, 1)), none), NoNeighbors);
  }

  TEST_CASE("aggregation: zeros, convexity collapse, random oracle") {
    Tape t;
    auto z = aggregate(t.constant(Matrix{{0.5, 0.5}}), t.constant(Matrix(2, 3)), t.constant(Matrix::identity(3)), 1.0);
    for (double x : z.value().data()) CHECK(x == 0.0);

    Matrix h{{0.4, -0.7, 1.2}, {0.4, -0.7, 1.2}};
    auto c = aggregate(t.constant(Matrix{{0.3, 0.7}}), t.constant(h), t.constant(Matrix::identity(3)), 1.0).value();
    for (std::size_t d = 0; d < 3; ++d) CHECK(std::abs(c(0, d) - elu1(h(0, d))) < 1e-15);

    Rng rng(3);
    Matrix hr = random_matrix(4, 3, rng), th = random_matrix(3, 3, rng);
    Matrix a{{0.1, 0.2, 0.3, 0.4}};
    auto r = aggregate(t.constant(a), t.constant(hr), t.constant(th), 1.0).value();
    for (std::size_t d = 0; d < 3; ++d) {
      double acc = 0;
      for (std::size_t s = 0; s < 4; ++s)
        for (std::size_t j = 0; j < 3; ++j) acc += a(0, s) * hr(s, j) * th(j, d);
      CHECK(std::abs(r(0, d) - elu1(acc)) < 1e-14);
    }
  }

  TEST_CASE("encode_subgraph matches the plain-loop oracle") {
    Fixture f(7);
    auto g = toy_graph();
    auto in = toy_input(g, f.cfg);
    for (const auto& sub : in.intervals) {
      auto got = f.encode(sub);
      REQUIRE(got.rows() == 1);
      REQUIRE(got.cols() == 16);
      if (sub.empty) {
        for (double x : got.data()) CHECK(x == 0.0);
        continue;
      }
      auto want = oracle_encode(sub, f.ps);
      for (std::size_t d = 0; d < 16; ++d) CHECK(std::abs(got(0, d) - want[d]) < 1e-12);
    }
  }

  TEST_CASE("sequence shape, empty rows and row independence") {
    Fixture f(8);
    auto g = toy_graph();
    auto in = toy_input(g, f.cfg);
    REQUIRE(in.length() == 3);
    Tape t(false);
    auto vars = EncoderVars::bind(t, f.p);
    auto phi = encode_sequence(t, in, vars, f.cfg).value();
    CHECK(phi.rows() == 3);
    CHECK(phi.cols() == 16);
    for (std::size_t r = 0; r < 3; ++r) {
      auto row = f.encode(in.intervals[r]);
      for (std::size_t d = 0; d < 16; ++d) CHECK(phi(r, d) == row(0, d));
    }

    EncoderInput one;
    one.intervals.resize(1);
    one.intervals[0].member_mean.assign(4, 0.0);
    CHECK(encode_sequence(t, one, vars, f.cfg).value().rows() == 1);

    EncoderInput empties;
    empties.intervals.resize(4);
    for (double x : encode_sequence(t, empties, vars, f.cfg).value().data()) CHECK(x == 0.0);
    CHECK_THROWS_AS(encode_sequence(t, EncoderInput{}, vars, f.cfg), ShapeMismatch);
  }

  TEST_CASE("property: attention weights normalize over real slots") {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + rng.below(12), real = 1 + rng.below(n);
      std::vector<std::uint8_t> valid(n, 0);
      std::fill_n(valid.begin(), real, 1);
      Tape t(false);
      auto a = normalize_scores(t.constant(random_matrix(n, 1, rng, -20, 20)), valid).value();
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        CHECK(a[i] >= 0);
        if (valid[i])
          s += a[i];
        else
          CHECK(a[i] == 0.0);
      }
      CHECK(std::abs(s - 1) < 1e-12);
    }
  }

  TEST_CASE("property: neighbor permutation and padding invariance") {
    Rng rng(12);
    Fixture f(13);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t slots = 1 + rng.below(20);
      SubgraphInput in;
      in.empty = false;
      in.node_block = random_matrix(slots + 1, 4, rng, 0, 3);
      in.edge_block = random_matrix(slots + 1, 3, rng, -1, 2);
      for (std::size_t c = 0; c < 3; ++c) in.edge_block(0, c) = 0;
      const auto base = f.encode(in);

      SubgraphInput perm = in;
      std::vector<std::size_t> order(slots);
      for (std::size_t i = 0; i < slots; ++i) order[i] = i + 1;
      for (std::size_t i = slots; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
      for (std::size_t i = 0; i < slots; ++i) {
        for (std::size_t c = 0; c < 4; ++c) perm.node_block(i + 1, c) = in.node_block(order[i], c);
        for (std::size_t c = 0; c < 3; ++c) perm.edge_block(i + 1, c) = in.edge_block(order[i], c);
      }
      CHECK(nn::max_abs_diff(base, f.encode(perm)) < 1e-12);
      CHECK(nn::max_abs_diff(base, f.encode(in, slots + 1 + 1 + rng.below(40))) < 1e-12);
    }
  }

  TEST_CASE("past N_max the most recent slots are kept") {
    std::vector<Transaction> txs;
    for (unsigned i = 0; i < 10; ++i) txs.push_back(tx(1, 10 + i, kT0 + i, fx::kEther * (i + 1)));
    auto g = build_graph(txs);
    FeatureConfig cfg;
    cfg.max_neighbors = 4;
    auto s = strwalk::full_neighborhood(g, addr(1), 1, 7);
    auto in = prepare_input(g, strwalk::slice_subgraph_sequence(g, s), cfg);
    const auto& eb = in.intervals[0].edge_block;
    REQUIRE(eb.rows() == 5);
    CHECK(std::abs(eb(1, 0) - std::log1p(7.0)) < 1e-12);
    CHECK(std::abs(eb(4, 0) - std::log1p(10.0)) < 1e-12);
    FeatureConfig bad;
    bad.max_neighbors = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }

  TEST_CASE("gradient check of the full encoder") {
    Fixture f(21, 6);
    auto g = toy_graph();
    auto in = toy_input(g, f.cfg);
    Rng rng(22);
    const Matrix w = random_matrix(in.length(), 6, rng);
    auto err = nn::grad_check(
        [&](Tape& t) {
          auto vars = EncoderVars::bind(t, f.p);
          return nn::sum(nn::hadamard(encode_sequence(t, in, vars, f.cfg), t.constant(w)));
        },
        f.p.all());
    CHECK(err < 1e-4);
  }
}
