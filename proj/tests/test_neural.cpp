#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "otcr/error.hpp"
#include "otcr/neural.hpp"
#include "otcr/rng.hpp"
#include "test_util.hpp"

using namespace otcr;
using otcr::testing::max_abs_diff;

namespace {

// Loss = sum(Y .* C) for a fixed random C, so dY = C.
double probe_loss(const Mlp& net, const Matrix& x, const Matrix& c) {
  return frobenius_dot(net.forward(x), c);
}

std::vector<std::span<const double>> as_const(const std::vector<ParamBlock>& ps) {
  std::vector<std::span<const double>> out;
  for (const auto& p : ps) out.emplace_back(p.values);
  return out;
}

}  // namespace

TEST_CASE("zero network outputs the final bias") {
  Mlp net({3, 4, 2}, Activation::Elu, false);
  net.mutable_layer(1).b = {0.5, -1.5};
  Matrix y = net.forward(Matrix{{1, 2, 3}, {4, 5, 6}});
  CHECK(y == Matrix{{0.5, -1.5}, {0.5, -1.5}});
}

TEST_CASE("single linear layer is affine") {
  Mlp net({2, 3}, Activation::Identity, true);
  Dense& l = net.mutable_layer(0);
  l.w = Matrix{{1, 2, 3}, {4, 5, 6}};
  l.b = {1, 0, -1};
  Matrix x{{1, -1}, {0.5, 2}};
  Matrix expect = matmul(x, l.w);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 3; ++j) expect(i, j) += l.b[j];
  CHECK(max_abs_diff(net.forward(x), expect) < 1e-15);
}

TEST_CASE("random net gives finite outputs of the right shape") {
  SeededRng rng(1);
  for (Activation a : {Activation::Elu, Activation::Relu}) {
    Mlp net({5, 16, 16, 3}, a, true, rng);
    Matrix y = net.forward(rng.gaussian(10, 5));
    CHECK(y.rows() == 10);
    CHECK(y.cols() == 3);
    CHECK(y.all_finite());
  }
  Mlp net({5, 4}, Activation::Elu, true, rng);
  CHECK_THROWS_AS(net.forward(Matrix(2, 4)), DimensionError);
}

TEST_CASE("zero output gradient gives zero parameter gradients") {
  SeededRng rng(2);
  Mlp net({4, 6, 2}, Activation::Elu, false, rng);
  Tape tape;
  Matrix x = rng.gaussian(5, 4);
  net.forward(x, tape);
  MlpGrads g = net.backward(tape, Matrix(5, 2));
  for (auto b : g.blocks())
    for (double v : b) CHECK(v == 0.0);
  for (double v : g.dx.values()) CHECK(v == 0.0);
}

TEST_CASE("scalar linear model gradient of y squared") {
  Mlp net({1, 1}, Activation::Identity, false);
  net.mutable_layer(0).w(0, 0) = 1.7;
  Tape tape;
  const double x = 0.6;
  Matrix y = net.forward(Matrix{{x}}, tape);
  MlpGrads g = net.backward(tape, Matrix{{2 * y(0, 0)}});
  CHECK(std::abs(g.dw[0](0, 0) - 2 * x * y(0, 0)) < 1e-15);
  CHECK(std::abs(g.dx(0, 0) - 2 * 1.7 * y(0, 0)) < 1e-15);
}

TEST_CASE("backward matches central differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    SeededRng rng(100 + seed);
    Activation act = seed % 2 ? Activation::Relu : Activation::Elu;
    Mlp net({4, 7, 5, 2}, act, seed % 3 == 0, rng);
    Matrix x = rng.gaussian(6, 4), c = rng.gaussian(6, 2);
    Tape tape;
    net.forward(x, tape);
    MlpGrads g = net.backward(tape, c);
    auto grads = g.blocks();

    const double h = 1e-5;
    auto params = net.parameters();
    for (int s = 0; s < 20; ++s) {
      const std::size_t b = rng.below(params.size());
      const std::size_t k = rng.below(params[b].values.size());
      double& p = params[b].values[k];
      const double keep = p;
      p = keep + h;
      const double up = probe_loss(net, x, c);
      p = keep - h;
      const double down = probe_loss(net, x, c);
      p = keep;
      const double fd = (up - down) / (2 * h);
      const double an = grads[b][k];
      CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
    for (int s = 0; s < 10; ++s) {
      const std::size_t i = rng.below(6), j = rng.below(4);
      Matrix xp = x, xm = x;
      xp(i, j) += h;
      xm(i, j) -= h;
      const double fd = (probe_loss(net, xp, c) - probe_loss(net, xm, c)) / (2 * h);
      CHECK(std::abs(fd - g.dx(i, j)) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("stale and foreign tapes are rejected") {
  SeededRng rng(3);
  Mlp net({2, 3, 1}, Activation::Elu, false, rng);
  Mlp other({2, 3, 1}, Activation::Elu, false, rng);
  Tape tape;
  net.forward(Matrix{{1, 2}}, tape);
  CHECK_THROWS_AS(other.backward(tape, Matrix{{1}}), StaleTapeError);
  CHECK_NOTHROW(net.backward(tape, Matrix{{1}}));
  net.mutable_layer(0).b[0] += 1.0;
  CHECK_THROWS_AS(net.backward(tape, Matrix{{1}}), StaleTapeError);
  Tape fresh;
  net.forward(Matrix{{1, 2}}, fresh);
  CHECK_THROWS_AS(net.backward(fresh, Matrix{{1, 1}}), DimensionError);
}

TEST_CASE("adam with zero gradient and no decay leaves parameters") {
  std::vector<double> p{1.0, -2.0, 3.0};
  std::vector<double> g(3, 0.0);
  std::vector<ParamBlock> ps{{"p", p}};
  std::vector<std::span<const double>> gs{g};
  AdamState st(AdamConfig{.lr = 1e-3, .weight_decay = 0.0});
  for (int i = 0; i < 5; ++i) adam_step(ps, gs, st);
  CHECK(p == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(st.step == 5);
}

TEST_CASE("adam first two steps follow the closed form") {
  const double lr = 1e-3, wd = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> p{0.3, -0.7, 0.0};
  const std::vector<double> g{0.5, -2.0, 1e-9};
  std::vector<ParamBlock> ps{{"p", p}};
  std::vector<std::span<const double>> gs{g};
  AdamState st;
  const std::vector<double> p0 = p;
  adam_step(ps, gs, st);
  std::vector<double> p1 = p;
  for (std::size_t k = 0; k < 3; ++k) {
    // m1/bc1 = g, v1/bc2 = g^2
    const double expect = p0[k] * (1 - lr * wd) - lr * g[k] / (std::abs(g[k]) + eps);
    CHECK(std::abs(p1[k] - expect) < 1e-15);
  }
  adam_step(ps, gs, st);
  for (std::size_t k = 0; k < 3; ++k) {
    const double m2 = (b1 * (1 - b1) + (1 - b1)) * g[k];
    const double v2 = (b2 * (1 - b2) + (1 - b2)) * g[k] * g[k];
    const double mh = m2 / (1 - b1 * b1), vh = v2 / (1 - b2 * b2);
    const double expect = p1[k] * (1 - lr * wd) - lr * mh / (std::sqrt(vh) + eps);
    CHECK(std::abs(p[k] - expect) < 1e-15);
  }
  // With a constant gradient both bias corrections cancel exactly, so the
  // two deltas coincide up to the epsilon term; with decay they differ.
  const double d1 = p1[0] - p0[0], d2 = p[0] - p1[0];
  CHECK(d1 != d2);
}

TEST_CASE("adam rejects non-finite gradients atomically") {
  std::vector<double> a{1.0}, b{2.0};
  const std::vector<double> ga{0.1}, gb{NAN};
  std::vector<ParamBlock> ps{{"psi.layer0.w", a}, {"head1.layer2.b", b}};
  std::vector<std::span<const double>> gs{ga, gb};
  AdamState st;
  try {
    adam_step(ps, gs, st);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("head1.layer2.b") != std::string::npos);
  }
  CHECK(a[0] == 1.0);
  CHECK(st.step == 0);
  std::vector<std::span<const double>> short_gs{ga};
  CHECK_THROWS_AS(adam_step(ps, short_gs, st), DimensionError);
}

TEST_CASE("training with adam reduces a regression loss") {
  SeededRng rng(9);
  Mlp net({3, 16, 16, 1}, Activation::Elu, false, rng);
  Matrix x = rng.gaussian(64, 3);
  Matrix y(64, 1);
  for (std::size_t i = 0; i < 64; ++i) y(i, 0) = std::sin(x(i, 0)) + 0.5 * x(i, 1) * x(i, 2);
  AdamState st(AdamConfig{.lr = 1e-2});
  auto loss = [&] {
    Matrix r = net.forward(x) - y;
    return frobenius_dot(r, r);
  };
  const double before = loss();
  for (int it = 0; it < 300; ++it) {
    Tape tape;
    Matrix r = net.forward(x, tape) - y;
    MlpGrads g = net.backward(tape, 2.0 * r);
    auto ps = net.parameters();
    adam_step(ps, g.blocks(), st);
  }
  CHECK(loss() < 0.2 * before);
}

TEST_CASE("identical seeds give bitwise identical training") {
  auto run = [](std::uint64_t seed) {
    SeededRng rng(seed);
    Mlp net({4, 8, 2}, Activation::Elu, false, rng);
    AdamState st;
    for (int it = 0; it < 25; ++it) {
      Matrix x = rng.gaussian(8, 4);
      Tape tape;
      Matrix y = net.forward(x, tape);
      auto g = net.backward(tape, y);
      auto ps = net.parameters();
      adam_step(ps, g.blocks(), st);
    }
    return net;
  };
  CHECK(run(4) == run(4));
  CHECK_FALSE(run(4) == run(5));
}

TEST_CASE("early stopping fires patience+1 epochs after the best") {
  EarlyStopper es(30);
  for (std::size_t e = 0; e <= 10; ++e) es.observe(e, static_cast<double>(e));
  CHECK(es.best_epoch() == 10);
  std::size_t fired = 0;
  for (std::size_t e = 11; e < 100; ++e) {
    CHECK_FALSE(es.observe(e, 10.0 - static_cast<double>(e)));
    if (es.should_stop(e)) {
      fired = e;
      break;
    }
  }
  CHECK(fired == 41);

  EarlyStopper lower(2, false, "loss");
  lower.observe(0, 5.0);
  CHECK(lower.observe(1, 4.0));
  CHECK_FALSE(lower.observe(2, 4.0));
  CHECK_FALSE(lower.observe(3, NAN));
  CHECK_FALSE(lower.should_stop(3));
  CHECK(lower.should_stop(4));
}

TEST_CASE("json round trip is exact and corruption is typed") {
  SeededRng rng(12);
  Mlp net({3, 5, 2}, Activation::Relu, true, rng);
  Mlp back = Mlp::from_json(nlohmann::json::parse(net.to_json().dump()));
  CHECK(back == net);
  Matrix x = rng.gaussian(4, 3);
  CHECK(back.forward(x) == net.forward(x));

  auto j = net.to_json();
  j["layers"][0]["w"].erase(0);
  CHECK_THROWS_AS(Mlp::from_json(j), CheckpointError);
  auto k = net.to_json();
  k["activation"] = "tanh";
  CHECK_THROWS_AS(Mlp::from_json(k), CheckpointError);
  CHECK_THROWS_AS(Mlp::from_json(nlohmann::json::object()), CheckpointError);
}

TEST_CASE("activation names") {
  CHECK(activation_from_string("elu") == Activation::Elu);
  CHECK(to_string(Activation::Relu) == "relu");
  CHECK_THROWS_AS(activation_from_string("gelu"), ConfigError);
}
