#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "otcr/error.hpp"
#include "otcr/metrics.hpp"
#include "otcr/rng.hpp"

using namespace otcr;

namespace {

// Per-unit prefix enumeration for distinct scores.
double naive_auuc(const std::vector<double>& s, const std::vector<int>& t, const std::vector<double>& y) {
  const std::size_t n = s.size();
  std::vector<std::size_t> ord(n);
  std::iota(ord.begin(), ord.end(), 0);
  std::sort(ord.begin(), ord.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  std::vector<double> u(n + 1, 0.0);
  for (std::size_t k = 1; k <= n; ++k) {
    double st = 0, sc = 0;
    int nt = 0, nc = 0;
    for (std::size_t p = 0; p < k; ++p) {
      if (t[ord[p]]) st += y[ord[p]], ++nt;
      else sc += y[ord[p]], ++nc;
    }
    u[k] = (nt && nc) ? (st / nt - sc / nc) * k / double(n) : 0.0;
  }
  double a = 0;
  for (std::size_t k = 1; k <= n; ++k) a += 0.5 * (u[k] + u[k - 1]) / double(n);
  return a - 0.5 * u[n];
}

struct Instance {
  std::vector<double> s, y;
  std::vector<int> t;
};

Instance random_instance(SeededRng& rng, std::size_t n) {
  Instance in;
  for (std::size_t i = 0; i < n; ++i) {
    in.s.push_back(rng.normal());
    in.t.push_back(i < 2 ? static_cast<int>(i) : rng.bernoulli(0.5));
    in.y.push_back(rng.normal() + (in.t.back() ? in.s.back() : 0.0));
  }
  return in;
}

}  // namespace

TEST_CASE("pehe hand values") {
  std::vector<double> tau{1, 1, 1};
  CHECK(pehe(tau, tau) == 0.0);
  CHECK(pehe(std::vector<double>{2, 2, 2}, tau) == doctest::Approx(1.0));
  CHECK(std::abs(pehe(std::vector<double>{1, 2, 4}, tau) - std::sqrt(10.0 / 3.0)) < 1e-15);
  CHECK_THROWS_AS(pehe(std::vector<double>{1}, tau), DimensionError);
}

TEST_CASE("ate and att errors") {
  std::vector<double> tau{0.5, -1, 2};
  std::vector<int> t{1, 0, 1};
  CHECK(ate_err(tau, tau) == 0.0);
  CHECK(*att_err(tau, tau, t) == 0.0);
  std::vector<double> shifted{-0.5, -2, 1};
  CHECK(ate_err(shifted, tau) == doctest::Approx(1.0));
  CHECK(*att_err(shifted, tau, t) == doctest::Approx(1.0));
  CHECK_FALSE(att_err(shifted, tau, std::vector<int>{0, 0, 0}).has_value());

  std::vector<double> truth{0, 0}, est{1, -1};
  std::vector<int> both{1, 1};
  CHECK(*att_err(est, truth, both) == 0.0);
  CHECK(pehe(est, truth) == doctest::Approx(1.0));
}

TEST_CASE("pehe and ate relations on random data") {
  SeededRng rng(1);
  for (int r = 0; r < 100; ++r) {
    std::vector<double> a(20), b(20);
    for (auto& v : a) v = rng.normal();
    for (auto& v : b) v = rng.normal();
    CHECK(pehe(a, b) >= 0.0);
    CHECK(ate_err(a, b) <= pehe(a, b) + 1e-12);
    std::vector<std::size_t> p(20);
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(std::span<std::size_t>(p));
    std::vector<double> ap, bp;
    for (auto i : p) ap.push_back(a[i]), bp.push_back(b[i]);
    CHECK(std::abs(pehe(ap, bp) - pehe(a, b)) < 1e-12);
  }
}

TEST_CASE("flat outcomes give zero auuc") {
  std::vector<double> s{3, 1, 2, 5, 4}, y(5, 7.0);
  std::vector<int> t{1, 0, 1, 0, 1};
  CHECK(std::abs(*auuc(s, t, y)) < 1e-15);
}

TEST_CASE("four unit hand traced auuc") {
  std::vector<int> t{1, 0, 1, 0};
  std::vector<double> y{5, 1, 1, 1};
  std::vector<double> perfect{4, 3, 2, 1}, reversed{1, 2, 3, 4};
  // Curve (0,0) (.25,0) (.5,2) (.75,1.5) (1,2); area 1.125, baseline 1.
  auto c = uplift_curve(perfect, t, y);
  CHECK(c.partial_prefix);
  CHECK(c.uplift == std::vector<double>{0, 0, 2, 1.5, 2});
  CHECK(std::abs(c.area - 0.125) < 1e-15);
  // Reversed: (0,0) (.25,0) (.5,0) (.75,0) (1,2); area .25 - 1.
  CHECK(std::abs(*auuc(reversed, t, y) - (-0.75)) < 1e-15);
  CHECK(*auuc(reversed, t, y) <= *auuc(perfect, t, y));
}

TEST_CASE("auuc matches per-unit enumeration for distinct scores") {
  SeededRng rng(7);
  for (int r = 0; r < 200; ++r) {
    auto in = random_instance(rng, 3 + rng.below(30));
    CHECK(std::abs(*auuc(in.s, in.t, in.y) - naive_auuc(in.s, in.t, in.y)) < 1e-12);
  }
}

TEST_CASE("auuc is a rank statistic") {
  SeededRng rng(8);
  for (int r = 0; r < 50; ++r) {
    auto in = random_instance(rng, 40);
    std::vector<double> mono;
    for (double v : in.s) mono.push_back(std::exp(2.0 * v) + 3.0);
    CHECK(*auuc(mono, in.t, in.y) == *auuc(in.s, in.t, in.y));
  }
}

TEST_CASE("auuc ignores unit order even with ties") {
  SeededRng rng(9);
  for (int r = 0; r < 50; ++r) {
    auto in = random_instance(rng, 30);
    for (auto& v : in.s) v = std::round(v);
    std::vector<std::size_t> p(30);
    std::iota(p.begin(), p.end(), 0);
    rng.shuffle(std::span<std::size_t>(p));
    Instance q;
    for (auto i : p) q.s.push_back(in.s[i]), q.t.push_back(in.t[i]), q.y.push_back(in.y[i]);
    CHECK(std::abs(*auuc(q.s, q.t, q.y) - *auuc(in.s, in.t, in.y)) < 1e-12);
  }
}

TEST_CASE("constant scores score zero") {
  SeededRng rng(10);
  auto in = random_instance(rng, 25);
  std::vector<double> flat(25, 1.0);
  CHECK(std::abs(*auuc(flat, in.t, in.y)) < 1e-14);
}

TEST_CASE("single group auuc unavailable") {
  std::vector<double> s{1, 2}, y{1, 2};
  CHECK_FALSE(auuc(s, std::vector<int>{1, 1}, y).has_value());
  CHECK_FALSE(auuc(s, std::vector<int>{0, 0}, y).has_value());
}

TEST_CASE("regression metrics") {
  std::vector<double> y{0, 2};
  auto same = regression_metrics(y, y);
  CHECK(same.rmse == 0.0);
  CHECK(*same.r2 == 1.0);
  auto mean = regression_metrics(std::vector<double>{1, 1}, y);
  CHECK(mean.rmse == 1.0);
  CHECK(*mean.r2 == 0.0);
  CHECK_FALSE(regression_metrics(std::vector<double>{1, 2}, std::vector<double>{3, 3}).r2.has_value());
  CHECK_FALSE(regression_metrics(std::vector<double>{1}, std::vector<double>{3}).r2.has_value());
}

TEST_CASE("evaluation flags what it cannot compute") {
  CausalDataset ds;
  ds.x = Matrix(4, 1);
  ds.t = {1, 0, 1, 0};
  ds.yf = {2, 1, 3, 0};
  std::vector<double> m0{1, 1, 0, 0}, m1{2, 2, 3, 1};
  EvalReport r = evaluate_predictions(m0, m1, ds);
  CHECK_FALSE(r.pehe_sqrt.has_value());
  CHECK_FALSE(r.rmse_cf.has_value());
  CHECK(r.rmse_f.has_value());
  CHECK(*r.rmse_f == 0.0);
  auto j = r.to_json();
  CHECK(j["pehe_sqrt"].is_null());
  CHECK(j["available"]["pehe_sqrt"] == false);
  CHECK(j["available"]["auuc"] == true);

  ds.mu0 = m0;
  ds.mu1 = m1;
  ds.ycf = {1, 2, 0, 1};
  EvalReport full = evaluate_predictions(m0, m1, ds);
  CHECK(*full.pehe_sqrt == 0.0);
  CHECK(*full.ate_err == 0.0);
  CHECK(*full.att_err == 0.0);
  CHECK(*full.rmse_cf == 0.0);
}
