// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--only 3,5,9] [--work DIR]
//
// Criteria 9-11 drive the crashgan binary; the rest call the library.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "crashgan/cgan.hpp"
#include "crashgan/evaluate.hpp"
#include "crashgan/format.hpp"
#include "crashgan/nn.hpp"
#include "crashgan/random.hpp"
#include "crashgan/simulate.hpp"
#include "crashgan/spf.hpp"
#include "json.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace crashgan;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

fs::path g_work;
const fs::path kCli = CRASHGAN_CLI;
const fs::path kStandin = CRASHGAN_STANDIN;

std::string num(double v, int precision = 4) {
  std::ostringstream out;
  out << std::setprecision(precision) << v;
  return out.str();
}

int run_cli(const std::string& args, const fs::path& log) {
  const auto cmd = "\"" + kCli.string() + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---- 1 ----------------------------------------------------------------------

Verdict gradients() {
  Rng rng(20240101);
  const nn::Activation acts[] = {nn::Activation::ELU, nn::Activation::ReLU, nn::Activation::Sigmoid};
  double worst = 0.0;
  std::set<nn::Activation> used;
  for (int trial = 0; trial < 100; ++trial) {
    const int depth = 1 + static_cast<int>(rng() % 5);
    Eigen::Index width = 1 + static_cast<Eigen::Index>(rng() % 6);
    const Eigen::Index in = width;
    std::vector<nn::DenseLayer> trunk;
    for (int k = 0; k < depth; ++k) {
      const Eigen::Index out = 1 + static_cast<Eigen::Index>(rng() % 6);
      const auto act = acts[rng() % 3];
      used.insert(act);
      auto layer = nn::DenseLayer::glorot(width, out, act, rng);
      for (Eigen::Index i = 0; i < out; ++i) layer.biases(i) = 0.2 * standard_normal(rng);
      trunk.push_back(std::move(layer));
      width = out;
    }
    const nn::DenseNetwork net({}, std::move(trunk));
    std::vector<Eigen::MatrixXd> inputs{Eigen::MatrixXd(in, 4)};
    for (Eigen::Index i = 0; i < inputs[0].size(); ++i) inputs[0](i) = standard_normal(rng);
    worst = std::max(worst, nn::gradient_check(net, inputs, 1e-5));
  }
  return {worst < 1e-4 && used.size() == 3, "max relative error " + num(worst, 3) + " over 100 networks"};
}

// ---- 2 ----------------------------------------------------------------------

Verdict equilibrium_loss() {
  const double a = nn::bce_loss(0.5, 1.0);
  const double b = nn::bce_loss(0.5, 0.0);
  const bool ok = std::abs(a - 0.693147) <= 1e-6 && std::abs(b - 0.693147) <= 1e-6;
  return {ok, "bce(0.5, 1) = " + format_double(a) + ", bce(0.5, 0) = " + format_double(b)};
}

// ---- 3 ----------------------------------------------------------------------

Verdict simulator_moments() {
  simulate::SimConfig c;
  c.sample_size = 100000;
  c.seed = 3;
  const auto d = simulate::gen_dataset(c).data;
  double sum = 0.0, sq = 0.0;
  for (auto y : d.counts) {
    sum += static_cast<double>(y);
    sq += static_cast<double>(y) * static_cast<double>(y);
  }
  const double n = static_cast<double>(d.rows());
  const double mean = sum / n;
  const double var = (sq - n * mean * mean) / (n - 1.0);
  const double expected = oracle::expected_count_mean(c.beta0, c.coefficients);
  const bool ok = std::abs(mean - expected) <= 0.05 && var / mean > 1.0;
  return {ok, "mean " + num(mean) + " vs closed form " + num(expected) + ", variance/mean " + num(var / mean) +
                  "; quoted low sample mean 1.6 (about exp(beta0) = " + num(std::exp(c.beta0)) + ")"};
}

// ---- 4 ----------------------------------------------------------------------

Verdict estimator_consistency() {
  std::ostringstream detail;
  bool ok = true;
  for (double alpha : {0.5, 1.5}) {
    simulate::SimConfig c;
    c.dispersion = alpha;
    c.sample_size = 10000;
    c.seed = alpha == 0.5 ? 41 : 42;
    const auto d = simulate::gen_dataset(c).data;
    const auto m = spf::fit_spf(d, spf::Formula::linear(d.feature_names));
    const double tol = alpha == 0.5 ? 0.05 : 0.15;
    const bool alpha_ok = std::abs(m.dispersion - alpha) <= tol;
    ok = ok && alpha_ok;
    detail << "alpha " << alpha << ": alpha_hat " << num(m.dispersion) << (alpha_ok ? "" : " (out)");
    if (alpha == 0.5) {
      std::vector<double> truth{c.beta0};
      truth.insert(truth.end(), c.coefficients.begin(), c.coefficients.end());
      double worst = 0.0;
      for (std::size_t j = 0; j < truth.size(); ++j) {
        worst = std::max(worst, std::abs(m.coefficients(static_cast<Eigen::Index>(j)) - truth[j]));
      }
      ok = ok && worst <= 0.05;
      detail << ", max |beta_hat - beta| " << num(worst, 3);
    }
    detail << "; ";
  }
  return {ok, detail.str()};
}

// ---- 5 ----------------------------------------------------------------------

Verdict eb_oracle() {
  const double e = spf::eb_estimate(2.0, 4, 0.5).eb;
  bool ok = e == 3.0;
  Rng rng(5);
  int alpha_zero_bad = 0, bound_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const double mu = 0.01 + 20.0 * uniform01(rng);
    const auto y = static_cast<CrashCount>(rng() % 40);
    if (spf::eb_estimate(mu, y, 0.0).eb != mu) ++alpha_zero_bad;
  }
  for (int i = 0; i < 10000; ++i) {
    const double mu = 0.01 + 20.0 * uniform01(rng);
    const auto y = static_cast<CrashCount>(rng() % 40);
    const double alpha = 5.0 * uniform01(rng);
    const double eb = spf::eb_estimate(mu, y, alpha).eb;
    const double lo = std::min(mu, static_cast<double>(y)), hi = std::max(mu, static_cast<double>(y));
    if (!(eb >= lo * (1.0 - 1e-15) && eb <= hi * (1.0 + 1e-15))) ++bound_bad;
  }
  ok = ok && alpha_zero_bad == 0 && bound_bad == 0;
  return {ok, "eb(2, 4, 0.5) = " + format_double(e) + "; alpha = 0 mismatches " + std::to_string(alpha_zero_bad) +
                  "/1000; bound violations " + std::to_string(bound_bad) + "/10000"};
}

// ---- 6 ----------------------------------------------------------------------

evaluate::HotspotRanking ranking(std::vector<std::size_t> order) {
  evaluate::HotspotRanking r;
  r.order = std::move(order);
  return r;
}

Verdict metric_oracles() {
  using evaluate::fi_test;
  using evaluate::pmd_test;
  const auto truth = ranking({0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  bool hand = fi_test(truth, truth, 5) == 0.0 && pmd_test(std::vector<double>(10, 2.0), truth, truth, 5) == 0.0 &&
              fi_test(ranking({5, 6, 7, 8, 9, 0, 1, 2, 3, 4}), truth, 5) == 100.0 &&
              fi_test(ranking({0, 1, 2, 3, 9, 4, 5, 6, 7, 8}), truth, 5) == 20.0;
  const std::vector<double> lambda3{10.0, 5.0, 1.0};
  const auto t3 = evaluate::HotspotRanking::from_scores(lambda3, evaluate::ScoreSource::TrueMean);
  hand = hand && pmd_test(lambda3, ranking({1, 0, 2}), t3, 1) == 50.0;

  Rng rng(66);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> lambda(100), eb(100);
    for (auto& v : lambda) v = 0.1 + 10.0 * uniform01(rng);
    for (auto& v : eb) v = 10.0 * uniform01(rng);
    const auto tr = evaluate::HotspotRanking::from_scores(lambda, evaluate::ScoreSource::TrueMean);
    const auto sg = evaluate::HotspotRanking::from_scores(eb, evaluate::ScoreSource::EbEstimate);
    for (std::size_t k : evaluate::kDefaultKs) {
      const auto ts = oracle::brute_top_k(lambda, k);
      const auto ss = oracle::brute_top_k(eb, k);
      if (fi_test(sg, tr, k) != oracle::brute_fi(ss, ts)) ++mismatches;
      if (std::abs(pmd_test(lambda, sg, tr, k) - oracle::brute_pmd(lambda, ss, ts)) > 1e-10) ++mismatches;
    }
  }
  return {hand && mismatches == 0,
          std::string("hand examples ") + (hand ? "exact" : "WRONG") + "; oracle mismatches " +
              std::to_string(mismatches) + " over 1000 rankings x 4 k"};
}

// ---- 7 ----------------------------------------------------------------------

Verdict test_calibration() {
  Rng rng(77);
  int reject[3] = {0, 0, 0};
  const int reps = 2000;
  std::vector<double> a(100), b(100);
  for (int r = 0; r < reps; ++r) {
    for (auto& v : a) v = standard_normal(rng);
    for (auto& v : b) v = standard_normal(rng);
    if (evaluate::welch_t_test(a, b).p_value < 0.05) ++reject[0];
    if (evaluate::levene_test(a, b).p_value < 0.05) ++reject[1];
    if (evaluate::ks_test(a, b).p_value < 0.05) ++reject[2];
  }
  bool ok = true;
  std::ostringstream detail;
  const char* names[] = {"t", "Levene", "KS"};
  for (int i = 0; i < 3; ++i) {
    const double rate = 100.0 * reject[i] / reps;
    ok = ok && rate >= 3.0 && rate <= 7.0;
    detail << names[i] << " " << num(rate, 3) << "%" << (i < 2 ? ", " : "");
  }
  return {ok, "type-I error at 5%: " + detail.str()};
}

// ---- 8 ----------------------------------------------------------------------

// Two simulated road-segment features on [0, 1] with negative binomial counts,
// the same generator the simulation experiment uses.
Dataset known_distribution(std::size_t n, std::uint64_t seed) {
  simulate::SimConfig c;
  c.coefficients = {0.5, -0.5};
  c.sample_size = n;
  c.seed = seed;
  return simulate::gen_dataset(c).data;
}

Verdict cgan_recovery() {
  std::vector<double> p[2];
  std::vector<double> accuracy;
  std::ostringstream per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto train = known_distribution(200, derive_seed(8, "train", seed));
    const auto held = known_distribution(200, derive_seed(8, "held_out", seed));
    cgan::TrainConfig cfg;  // default training settings
    cfg.seed = derive_seed(8, "cgan", seed);
    const auto model = cgan::train_cgan(train, cfg);
    const auto synthetic = cgan::synthesize(model, 200, derive_seed(8, "synthesize", seed));
    for (Eigen::Index j = 0; j < 2; ++j) {
      const Eigen::VectorXd s = synthetic.features.col(j), h = held.features.col(j);
      p[j].push_back(evaluate::ks_test({s.data(), 200}, {h.data(), 200}).p_value);
    }
    accuracy.push_back(cgan::discriminator_accuracy(model, held, synthetic));
    per_seed << " [" << num(p[0].back(), 2) << "," << num(p[1].back(), 2) << "|" << num(accuracy.back(), 3) << "]";
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  };
  const double m0 = median(p[0]), m1 = median(p[1]);
  const auto in_band = std::count_if(accuracy.begin(), accuracy.end(), [](double a) { return a >= 0.35 && a <= 0.65; });
  const bool ok = m0 > 0.05 && m1 > 0.05 && in_band >= 7;
  return {ok, "median KS p " + num(m0, 3) + " / " + num(m1, 3) + ", accuracy in [0.35, 0.65] for " +
                  std::to_string(in_band) + "/10 seeds; per seed [p1,p2|acc]:" + per_seed.str()};
}

// ---- 9, 10, 11 ----------------------------------------------------------------

const std::string kScaledRun =
    "experiment --preset paper-sim --scale 0.1 --dispersions 0.5 --synthetic-sizes 0,200 --seed 2024 --workers 1 ";

std::vector<evaluate::ExperimentCell> g_scaled;

Verdict scaled_replication() {
  const auto dir = g_work / "scaled_a";
  fs::remove_all(dir);
  const int rc = run_cli(kScaledRun + "--out \"" + dir.string() + "\"", g_work / "scaled_a.log");
  if (rc != 0) return {false, "experiment exited with " + std::to_string(rc) + "; see " + (g_work / "scaled_a.log").string()};
  std::ifstream in(dir / "report.csv");
  g_scaled = evaluate::cells_from_rows(evaluate::read_report_csv(in));
  const auto it = std::find_if(g_scaled.begin(), g_scaled.end(), [](const auto& c) { return c.synthetic_size == 200; });
  if (it == g_scaled.end()) return {false, "no size-200 cell in the report"};
  const auto s = it->summarize();
  bool ok = s.completed == 100;
  std::ostringstream detail;
  detail << s.completed << " replications (" << s.failed << " failed); improvement % [paired p]:";
  for (std::size_t i = 0; i < evaluate::kAllMetrics.size(); ++i) {
    const auto m = evaluate::kAllMetrics[i];
    ok = ok && s.mean_augmented.get(m) <= s.mean_base.get(m);
    detail << " " << evaluate::to_string(m) << " " << num(s.improvement.get(m), 3) << " [" << num(s.paired[i].p_value, 3)
           << "]";
  }
  const double fi = s.improvement.get(evaluate::Metric::FI), pmd = s.improvement.get(evaluate::Metric::PMD);
  ok = ok && fi >= 0.0 && fi <= 10.0 && pmd >= 0.0 && pmd <= 15.0;
  return {ok, detail.str()};
}

Verdict augmentation_identity() {
  if (g_scaled.empty()) return {false, "scaled run unavailable"};
  const auto it = std::find_if(g_scaled.begin(), g_scaled.end(), [](const auto& c) { return c.synthetic_size == 0; });
  if (it == g_scaled.end()) return {false, "no size-0 cell in the report"};
  const auto s = it->summarize();
  bool ok = s.completed > 0;
  for (auto m : evaluate::kAllMetrics) ok = ok && s.improvement.get(m) == 0.0;
  for (const auto& r : it->results) {
    for (auto m : evaluate::kAllMetrics) ok = ok && r.base.get(m) == r.augmented.get(m);
  }
  return {ok, "size-0 cell, " + std::to_string(s.completed) + " replications: " +
                  (ok ? "every metric identical, improvement exactly 0" : "Augmented differs from Base")};
}

Verdict determinism() {
  const auto a = g_work / "scaled_a";
  const auto b = g_work / "scaled_b";
  if (!fs::exists(a / "report.csv")) return {false, "first run unavailable"};
  fs::remove_all(b);
  const int rc = run_cli(kScaledRun + "--out \"" + b.string() + "\"", g_work / "scaled_b.log");
  if (rc != 0) return {false, "rerun exited with " + std::to_string(rc)};
  bool ok = true;
  std::ostringstream detail;
  for (const char* f : {"report.csv", "long.csv", "summary.json", "models/cgan_dispersion_0.5.txt"}) {
    const bool same = slurp(a / f) == slurp(b / f);
    ok = ok && same;
    detail << f << (same ? " identical; " : " DIFFERS; ");
  }
  return {ok, detail.str()};
}

// ---- 12 ---------------------------------------------------------------------

Verdict real_pipeline() {
  const auto data = read_csv(kStandin);
  evaluate::RealWorldOptions opt;
  opt.seed = 12;
  opt.train.seed = derive_seed(12, "cgan");
  const auto report = evaluate::run_realworld_experiment(data, opt);
  const auto j = nlohmann::json::parse(evaluate::realworld_json(report));
  bool ok = data.rows() == 200 && data.feature_names.size() == 2;
  for (const char* key : {"split", "synthetic_rows", "base_spf", "augmented_spf", "feature_tests", "mape"}) {
    ok = ok && j.contains(key);
  }
  for (const char* arm : {"base_spf", "augmented_spf"}) {
    ok = ok && j[arm]["coefficients"].size() == 3;
    for (const auto& c : j[arm]["coefficients"]) ok = ok && c.contains("p_value") && c["estimate"].is_number();
  }
  ok = ok && j["feature_tests"].size() == 2;
  for (const auto& f : j["feature_tests"]) {
    for (const char* t : {"t_test", "levene", "ks"}) ok = ok && f[t].contains("p_value");
  }
  ok = ok && std::isfinite(report.mape_base) && std::isfinite(report.mape_augmented) &&
       report.augmented.coefficients.allFinite() && report.synthetic_rows == 1000;
  std::ostringstream detail;
  detail << report.train_rows << "/" << report.test_rows << " split, " << report.synthetic_rows
         << " synthetic rows; MAPE base " << num(report.mape_base, 4) << "% vs augmented "
         << num(report.mape_augmented, 4) << "%; feature KS p";
  for (const auto& f : report.feature_tests) detail << " " << f.feature << "=" << num(f.ks.p_value, 3);
  return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  g_work = fs::temp_directory_path() / "crashgan_acceptance";
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else if (a == "--work" && i + 1 < argc) {
      g_work = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...] [--work DIR]\n";
      return 2;
    }
  }
  fs::create_directories(g_work);

  struct Criterion {
    int id;
    const char* name;
    double limit_seconds;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "gradient correctness", 10, gradients},
      {2, "equilibrium loss constant", 0, equilibrium_loss},
      {3, "simulator moments", 5, simulator_moments},
      {4, "estimator consistency", 30, estimator_consistency},
      {5, "EB oracle", 0, eb_oracle},
      {6, "metric oracles", 0, metric_oracles},
      {7, "statistical-test calibration", 60, test_calibration},
      {8, "CGAN distribution recovery", 600, cgan_recovery},
      {9, "scaled experiment direction", 1800, scaled_replication},
      {10, "augmentation identity", 0, augmentation_identity},
      {11, "determinism", 1800, determinism},
      {12, "real-data pipeline on the stand-in", 0, real_pipeline},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    // 10 and 11 reuse the output of 9
    if ((c.id == 10 || c.id == 11) && g_scaled.empty() && (only.empty() || !only.count(9))) {
      std::cerr << "(running criterion 9 first for its output)\n";
      scaled_replication();
    }
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_seconds > 0 && secs >= c.limit_seconds) {
      v.pass = false;
      v.detail += " (over the " + num(c.limit_seconds) + " s limit)";
    }
    if (!v.pass) ++failures;
    std::cout << "Criterion " << c.id << " (" << c.name << "): " << (v.pass ? "PASS" : "FAIL") << "  ["
              << std::fixed << std::setprecision(1) << secs << " s] " << std::defaultfloat << v.detail << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion/criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
