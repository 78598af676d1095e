#include "doctest.h"

#include <cmath>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/simulate.hpp"
#include "crashgan/spf.hpp"

using namespace crashgan;
using namespace crashgan::spf;

namespace {

simulate::SimDataset simulated(std::size_t n, double alpha, std::uint64_t seed) {
  simulate::SimConfig c;
  c.sample_size = n;
  c.dispersion = alpha;
  c.seed = seed;
  return simulate::gen_dataset(c);
}

const std::vector<double> kTruth{0.5, 0.5, -0.5, 1.0, -1.0};

}  // namespace

TEST_CASE("fit_poisson: intercept-only MLE is the log sample mean") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  const std::vector<CrashCount> y{1, 2, 3};
  const auto fit = fit_poisson(x, y);
  CHECK(fit.coefficients(0) == doctest::Approx(std::log(2.0)).epsilon(1e-10));
  // Var(log mean) = 1 / sum(mu) = 1/6
  CHECK(fit.covariance(0, 0) == doctest::Approx(1.0 / 6.0).epsilon(1e-8));
}

TEST_CASE("fit_poisson: error paths") {
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1);
  const std::vector<CrashCount> zeros{0, 0, 0, 0};
  CHECK_THROWS_AS(fit_poisson(x, zeros), DegenerateResponse);

  const auto d = simulated(200, 0.5, 5);
  Eigen::MatrixXd dup(200, 3);
  dup.col(0).setOnes();
  dup.col(1) = d.data.features.col(0);
  dup.col(2) = d.data.features.col(0);
  CHECK_THROWS_AS(fit_poisson(dup, d.data.counts), CollinearFeatures);

  const Eigen::MatrixXd few = Eigen::MatrixXd::Ones(2, 1);
  const std::vector<CrashCount> two{1, 2};
  CHECK_THROWS_AS(fit_poisson(few, two), ValidationError);
}

TEST_CASE("fit_poisson: consistency and score equation on large Poisson data") {
  const auto d = simulated(10'000, 1e-12, 77);
  const auto x = design_matrix(d.data, d.data.feature_names, std::vector<bool>(4, false));
  const auto fit = fit_poisson(x, d.data.counts);
  for (Eigen::Index j = 0; j < 5; ++j) {
    CHECK(std::abs(fit.coefficients(j) - kTruth[static_cast<std::size_t>(j)]) < 0.05);
  }
  const Eigen::VectorXd mu = (x * fit.coefficients).array().exp();
  Eigen::VectorXd y(mu.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) y(i) = static_cast<double>(d.data.counts[static_cast<std::size_t>(i)]);
  const Eigen::VectorXd score = x.transpose() * (y - mu);
  CHECK(score.cwiseAbs().maxCoeff() < 1e-6);
  // covariance is symmetric positive definite
  CHECK((fit.covariance - fit.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.covariance.llt().info() == Eigen::Success);
}

TEST_CASE("estimate_dispersion: hand examples") {
  Eigen::VectorXd mu1(1);
  mu1 << 2.0;
  const std::vector<CrashCount> y1{4};
  CHECK(estimate_dispersion(y1, mu1) == 0.0);

  Eigen::VectorXd mu2(2);
  mu2 << 2.0, 2.0;
  const std::vector<CrashCount> y2{0, 6};
  CHECK(estimate_dispersion(y2, mu2) == doctest::Approx(1.75).epsilon(1e-14));

  // under-dispersed sample floors at zero
  Eigen::VectorXd mu3(3);
  mu3 << 2.0, 2.0, 2.0;
  const std::vector<CrashCount> y3{2, 2, 2};
  CHECK(estimate_dispersion(y3, mu3) == 0.0);

  const std::vector<CrashCount> none;
  CHECK_THROWS_AS(estimate_dispersion(none, Eigen::VectorXd()), ValidationError);
}

TEST_CASE("estimate_dispersion: Monte Carlo consistency") {
  const auto f = Formula::linear(default_feature_names(4));
  const auto half = fit_spf(simulated(10'000, 0.5, 123).data, f);
  CHECK(half.dispersion >= 0.45);
  CHECK(half.dispersion <= 0.55);
  const auto high = fit_spf(simulated(10'000, 1.5, 124).data, f);
  CHECK(std::abs(high.dispersion - 1.5) < 0.15);
  const auto pois = fit_spf(simulated(10'000, 1e-12, 125).data, f);
  CHECK(pois.dispersion < 0.05);
}

TEST_CASE("fit_spf: estimation error shrinks with sample size") {
  const auto f = Formula::linear(default_feature_names(4));
  auto mean_abs_error = [&](std::size_t n) {
    double total = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      const auto m = fit_spf(simulated(n, 0.5, 1000 + rep).data, f);
      for (Eigen::Index j = 0; j < 5; ++j) total += std::abs(m.coefficients(j) - kTruth[static_cast<std::size_t>(j)]);
    }
    return total / 100.0;
  };
  CHECK(mean_abs_error(2000) < 0.5 * mean_abs_error(100));
}

TEST_CASE("fit_spf: appending an empty synthetic set changes nothing") {
  const auto d = simulated(100, 0.5, 9).data;
  Dataset empty;
  empty.feature_names = d.feature_names;
  empty.features.resize(0, 4);
  const auto f = Formula::linear(d.feature_names);
  const auto base = fit_spf(d, f);
  const auto aug = fit_spf(concat(d, empty), f);
  CHECK(base.coefficients == aug.coefficients);
  CHECK(base.dispersion == aug.dispersion);
}

TEST_CASE("fit_spf: log-volume formula") {
  const auto d = simulate::gen_intersection_standin(400, 3);
  const auto m = fit_spf(d, Formula::logged({"aadt_major", "aadt_minor"}));
  CHECK(m.coefficient_names() == std::vector<std::string>{"(intercept)", "ln(aadt_major)", "ln(aadt_minor)"});
  CHECK(m.coefficients.size() == 3);
  CHECK(m.coefficients(1) > 0.0);

  Dataset bad = d;
  bad.features(0, 0) = 0.0;
  CHECK_THROWS_AS(fit_spf(bad, Formula::logged({"aadt_major"})), ValidationError);
  CHECK_THROWS_AS(fit_spf(d, Formula::logged({"speed_limit"})), ValidationError);
}

TEST_CASE("predict") {
  SpfModel zero;
  zero.feature_names = {"a"};
  zero.log_flags = {false};
  zero.coefficients = Eigen::VectorXd::Zero(2);
  const std::vector<double> row{3.0};
  CHECK(predict(zero, row) == 1.0);

  SpfModel base;
  base.feature_names = {"aadt_major"};
  base.log_flags = {true};
  base.coefficients.resize(2);
  base.coefficients << -4.64, 0.53;
  const std::vector<double> aadt{10000.0};
  CHECK(predict(base, aadt) == doctest::Approx(std::exp(0.2414)).epsilon(1e-3));
  CHECK(predict(base, aadt) == doctest::Approx(1.273).epsilon(1e-3));
  const std::vector<double> more{12000.0};
  CHECK(predict(base, more) > predict(base, aadt));
  const std::vector<double> nonpositive{0.0};
  CHECK_THROWS_AS(predict(base, nonpositive), ValidationError);
  const std::vector<double> wrong{1.0, 2.0};
  CHECK_THROWS_AS(predict(base, wrong), DimensionError);
}

TEST_CASE("eb_estimate examples and properties") {
  const auto e = eb_estimate(2.0, 4, 0.5);
  CHECK(e.weight == 0.5);
  CHECK(e.eb == 3.0);
  CHECK(eb_estimate(2.0, 4, 0.5, EbWeighting::Swapped).eb == 3.0);
  CHECK(eb_estimate(2.5, 7, 0.0).eb == 2.5);
  CHECK(eb_estimate(3.0, 3, 1.7).eb == doctest::Approx(3.0).epsilon(1e-15));

  crashgan::Rng rng(4);
  for (int i = 0; i < 10'000; ++i) {
    const double mu = 0.01 + 10.0 * uniform01(rng);
    const auto y = static_cast<CrashCount>(rng() % 15);
    const double alpha = 3.0 * uniform01(rng);
    for (auto w : {EbWeighting::Classical, EbWeighting::Swapped}) {
      const auto est = eb_estimate(mu, y, alpha, w);
      CHECK(est.eb >= std::min(mu, static_cast<double>(y)) - 1e-12);
      CHECK(est.eb <= std::max(mu, static_cast<double>(y)) + 1e-12);
    }
    CHECK(eb_estimate(mu, y, alpha).weight == doctest::Approx(1.0 / (1.0 + alpha * mu)));
  }
  // weight decreases in alpha and in mu
  CHECK(eb_estimate(2.0, 1, 0.6).weight < eb_estimate(2.0, 1, 0.5).weight);
  CHECK(eb_estimate(2.5, 1, 0.5).weight < eb_estimate(2.0, 1, 0.5).weight);
  CHECK_THROWS_AS(eb_estimate(0.0, 1, 0.5), ValidationError);
  CHECK(parse_eb_weighting(to_string(EbWeighting::Swapped)) == EbWeighting::Swapped);
}

TEST_CASE("coefficient_significance") {
  SpfModel m;
  m.feature_names = {"a"};
  m.log_flags = {false};
  m.coefficients = Eigen::VectorXd::Zero(2);
  m.covariance = Eigen::MatrixXd::Identity(2, 2);
  auto t = coefficient_significance(m);
  CHECK(t[1].p_value == 1.0);
  m.covariance(1, 1) = 0.0;
  t = coefficient_significance(m);
  CHECK_FALSE(t[1].defined);

  const auto big = fit_spf(simulated(10'000, 0.5, 55).data, Formula::linear(default_feature_names(4)));
  const auto tests = coefficient_significance(big);
  CHECK(tests[3].p_value < 0.001);  // true coefficient 1

  // A pure-noise feature gives roughly uniform p-values under the null.
  int rejections = 0;
  double p_sum = 0.0;
  crashgan::Rng rng(8);
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    auto d = simulated(300, 1e-12, 5000 + rep).data;
    Dataset noisy;
    noisy.feature_names = {"x1", "noise"};
    noisy.features.resize(300, 2);
    noisy.features.col(0) = d.features.col(0);
    for (Eigen::Index i = 0; i < 300; ++i) noisy.features(i, 1) = uniform01(rng);
    noisy.counts = d.counts;
    const auto fit = fit_spf(noisy, Formula::linear(noisy.feature_names));
    const double p = coefficient_significance(fit)[2].p_value;
    p_sum += p;
    rejections += p < 0.05;
  }
  CHECK(rejections >= 2);
  CHECK(rejections <= 20);
  CHECK(p_sum / 200.0 == doctest::Approx(0.5).epsilon(0.15));
}

TEST_CASE("spf serialization round-trips") {
  const auto m = fit_spf(simulate::gen_intersection_standin(200, 1), Formula::logged({"aadt_major", "aadt_minor"}));
  std::stringstream ss;
  write_spf(ss, m);
  const auto back = read_spf(ss);
  CHECK(back.feature_names == m.feature_names);
  CHECK(back.log_flags == m.log_flags);
  CHECK(back.coefficients == m.coefficients);
  CHECK(back.covariance == m.covariance);
  CHECK(back.dispersion == m.dispersion);
  std::stringstream bad("spf v1\nfeatures 1\nfeature a sqrt\n");
  CHECK_THROWS_AS(read_spf(bad), ParseError);
}
