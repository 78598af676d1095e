#include "doctest.h"

#include <cmath>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/simulate.hpp"
#include "oracles.hpp"

using namespace crashgan;
using namespace crashgan::simulate;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

template <typename Draw>
Moments moments(std::size_t n, Draw draw) {
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  const double m = s / static_cast<double>(n);
  return {m, s2 / static_cast<double>(n) - m * m};
}

}  // namespace

TEST_CASE("gamma heterogeneity has mean one and variance alpha") {
  Rng rng(1);
  const auto m = moments(1'000'000, [&] { return sample_gamma_heterogeneity(0.5, rng); });
  CHECK(m.mean == doctest::Approx(1.0).epsilon(0.01));
  CHECK(std::abs(m.var - 0.5) < 0.02);

  for (double alpha : {0.1, 1.0, 1.5, 3.0}) {
    const auto mm = moments(100'000, [&] { return sample_gamma_heterogeneity(alpha, rng); });
    CHECK(mm.mean >= 0.99 - 0.01 * alpha);  // sd of the mean is sqrt(alpha / 1e5)
    CHECK(mm.mean <= 1.01 + 0.01 * alpha);
  }

  const auto tiny = moments(10'000, [&] { return sample_gamma_heterogeneity(1e-6, rng); });
  CHECK(std::abs(tiny.mean - 1.0) < 1e-3);
  CHECK(tiny.var < 1e-5);

  CHECK_THROWS_AS(sample_gamma_heterogeneity(0.0, rng), ValidationError);
  CHECK_THROWS_AS(sample_gamma_heterogeneity(-1.0, rng), ValidationError);
}

TEST_CASE("gamma with shape < 1 and > 1 matches moment formulas") {
  Rng rng(2);
  for (auto [shape, scale] : {std::pair{0.3, 2.0}, std::pair{4.5, 0.5}}) {
    const auto m = moments(400'000, [&, s = shape, c = scale] { return sample_gamma(s, c, rng); });
    CHECK(m.mean == doctest::Approx(shape * scale).epsilon(0.01));
    CHECK(m.var == doctest::Approx(shape * scale * scale).epsilon(0.03));
  }
}

TEST_CASE("poisson sampler") {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) CHECK(sample_poisson(0.0, rng) == 0);
  const auto m = moments(1'000'000, [&] { return static_cast<double>(sample_poisson(1.6, rng)); });
  CHECK(std::abs(m.mean - 1.6) < 0.01);
  CHECK(std::abs(m.var - m.mean) < 0.02);

  // rejection branch
  const auto big = moments(200'000, [&] { return static_cast<double>(sample_poisson(37.5, rng)); });
  CHECK(std::abs(big.mean - 37.5) < 0.1);
  CHECK(std::abs(big.var - 37.5) < 0.6);

  CHECK_THROWS_AS(sample_poisson(-0.1, rng), ValidationError);
}

TEST_CASE("gen_dataset: degenerate constant-mean case") {
  SimConfig c;
  c.beta0 = 0.0;
  c.coefficients = {0.0, 0.0};
  c.dispersion = 1e-9;
  c.sample_size = 50;
  const auto d = gen_dataset(c);
  for (Eigen::Index i = 0; i < d.data.true_means->size(); ++i) {
    CHECK((*d.data.true_means)(i) == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("gen_dataset: default configuration moments") {
  SimConfig c;
  c.sample_size = 100'000;
  c.seed = 17;
  const auto d = gen_dataset(c);
  double s = 0.0, s2 = 0.0;
  std::size_t zeros = 0, ones = 0;
  for (auto y : d.data.counts) {
    s += static_cast<double>(y);
    s2 += static_cast<double>(y * y);
    zeros += y == 0;
    ones += y == 1;
  }
  const double mean = s / 1e5;
  const double var = s2 / 1e5 - mean * mean;
  const double expected = oracle::expected_count_mean(0.5, {0.5, -0.5, 1.0, -1.0});
  CHECK(expected == doctest::Approx(1.83).epsilon(0.005));
  CHECK(std::abs(mean - expected) < 0.05);
  CHECK(var / mean > 1.0);
  // low-mean regime: zero is the mode and 0/1 make up the largest share
  CHECK(zeros > ones / 2);
  CHECK(zeros + ones > 40'000);

  c.dispersion = 1.5;
  c.sample_size = 50'000;
  const auto h = gen_dataset(c);
  double hs = 0.0, hs2 = 0.0;
  for (auto y : h.data.counts) {
    hs += static_cast<double>(y);
    hs2 += static_cast<double>(y * y);
  }
  const double hm = hs / 5e4;
  CHECK(hs2 / 5e4 - hm * hm > hm);
}

TEST_CASE("gen_dataset: type invariants over random configs") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    SimConfig c;
    c.beta0 = 2.0 * uniform01(rng) - 1.0;
    c.coefficients.assign(1 + rng() % 5, 0.0);
    for (double& b : c.coefficients) b = 4.0 * uniform01(rng) - 2.0;
    c.dispersion = 0.05 + 3.0 * uniform01(rng);
    c.sample_size = 1 + rng() % 200;
    c.seed = rng();
    const auto d = gen_dataset(c);
    CHECK_NOTHROW(d.data.validate());
    CHECK(d.data.rows() == c.sample_size);
    CHECK((d.data.features.array() >= 0.0).all());
    CHECK((d.data.features.array() <= 1.0).all());
    CHECK((d.data.true_means->array() > 0.0).all());
  }
}

TEST_CASE("experiment suite layout and determinism") {
  SimConfig c;
  c.seed = 42;
  const auto a = gen_experiment_suite(c, 3, 2);
  const auto b = gen_experiment_suite(c, 3, 2);
  CHECK(a.ns_test.size() == 3);
  CHECK(a.prediction_test.size() == 2);
  CHECK(a.cgan_train.data.rows() == 100);
  std::ostringstream sa, sb;
  write_csv(sa, a.ns_test[2].data);
  write_csv(sb, b.ns_test[2].data);
  CHECK(sa.str() == sb.str());
  CHECK(a.ns_test[0].data.counts != a.ns_test[1].data.counts);

  const auto smoke = gen_experiment_suite(c, 1, 1);
  CHECK(smoke.ns_test.size() == 1);
  CHECK_THROWS_AS(gen_experiment_suite(c, 0, 1), ValidationError);

  SimConfig bad = c;
  bad.dispersion = 0.0;
  CHECK_THROWS_AS(gen_dataset(bad), ValidationError);
}
