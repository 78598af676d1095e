#include "crashgan/evaluate.hpp"

#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <iterator>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "crashgan/error.hpp"
#include "crashgan/format.hpp"
#include "crashgan/random.hpp"

namespace crashgan::evaluate {

namespace {

void check_k(std::size_t k, std::size_t sites, const char* what) {
  if (k == 0) throw ValidationError(std::string(what) + ": k must be > 0");
  if (k > sites) {
    throw ValidationError(std::string(what) + ": k = " + std::to_string(k) + " exceeds the site count " +
                          std::to_string(sites));
  }
}

std::vector<bool> top_k_mask(const HotspotRanking& r, std::size_t k) {
  std::vector<bool> mask(r.size(), false);
  for (std::size_t i = 0; i < k; ++i) mask[r.order[i]] = true;
  return mask;
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x, double mean) {
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(x.size() - 1);
}

double median_of(std::span<const double> x) {
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const auto n = s.size();
  return n % 2 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
}

void require_finite(std::span<const double> x, const char* what) {
  for (double v : x) {
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite sample value");
  }
}

double student_two_sided(double t, double df) {
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t))));
}

// Survival function of the Kolmogorov distribution.
double kolmogorov_q(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 1.18) {
    const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
    const double cdf = std::sqrt(2.0 * std::numbers::pi) / lambda * (y + std::pow(y, 9) + std::pow(y, 25) + std::pow(y, 49));
    return std::clamp(1.0 - cdf, 0.0, 1.0);
  }
  const double x = std::exp(-2.0 * lambda * lambda);
  return std::clamp(2.0 * (x - std::pow(x, 4) + std::pow(x, 9)), 0.0, 1.0);
}

TestResult zero_spread(bool equal) {
  return equal ? TestResult{0.0, 1.0, true} : TestResult{INFINITY, 0.0, true};
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  return std::vector<double>(m.col(j).data(), m.col(j).data() + m.rows());
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

MetricSet score_model(const spf::SpfModel& model, const simulate::SimDataset& ns,
                      const simulate::SimDataset& prediction, spf::EbWeighting weighting) {
  if (!ns.data.true_means || !prediction.data.true_means) {
    throw ValidationError("experiment: simulated datasets must carry true means");
  }
  const auto lambda = to_vector(*ns.data.true_means);
  const auto eb_rows = spf::eb_estimates(model, ns.data, weighting);
  std::vector<double> eb(eb_rows.size());
  for (std::size_t i = 0; i < eb.size(); ++i) eb[i] = eb_rows[i].eb;

  const auto truth = HotspotRanking::from_scores(lambda, ScoreSource::TrueMean);
  const auto suggested = HotspotRanking::from_scores(eb, ScoreSource::EbEstimate);

  MetricSet m;
  m.fi = multi_k_average([&](std::size_t k) { return fi_test(suggested, truth, k); });
  m.pmd = multi_k_average([&](std::size_t k) { return pmd_test(lambda, suggested, truth, k); });
  m.mape_eb = mape(eb, lambda);
  m.mape_crash = mape(to_vector(spf::predict(model, prediction.data)), to_vector(*prediction.data.true_means));
  const double alpha = ns.config.dispersion;
  m.mape_dispersion = 100.0 * std::abs(model.dispersion - alpha) / alpha;
  return m;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  }
  return s;
}

std::vector<std::string> split_commas(const std::string& line, std::size_t max_fields) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (out.size() + 1 < max_fields) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) break;
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  out.push_back(line.substr(start));
  return out;
}

nlohmann::json test_json(const TestResult& t) {
  return {{"statistic", t.statistic}, {"p_value", t.p_value}, {"degenerate", t.degenerate}};
}

Dataset select_features(const Dataset& data, const std::vector<std::string>& names) {
  Dataset out;
  out.feature_names = names;
  out.features.resize(static_cast<Eigen::Index>(data.rows()), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    out.features.col(static_cast<Eigen::Index>(j)) = data.features.col(static_cast<Eigen::Index>(data.feature_index(names[j])));
  }
  out.counts = data.counts;
  return out;
}

}  // namespace

HotspotRanking HotspotRanking::from_scores(std::span<const double> scores, ScoreSource source) {
  for (double s : scores) {
    if (std::isnan(s)) throw ValidationError("ranking: NaN score");
  }
  HotspotRanking r;
  r.source = source;
  r.order.resize(scores.size());
  std::iota(r.order.begin(), r.order.end(), std::size_t{0});
  std::stable_sort(r.order.begin(), r.order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return r;
}

double fi_test(const HotspotRanking& suggested, const HotspotRanking& truth, std::size_t k) {
  if (suggested.size() != truth.size()) throw DimensionError("fi_test: rankings cover different site counts");
  check_k(k, truth.size(), "fi_test");
  const auto true_top = top_k_mask(truth, k);
  std::size_t misses = 0;
  for (std::size_t i = 0; i < k; ++i) misses += !true_top[suggested.order[i]];
  return 100.0 * static_cast<double>(misses) / static_cast<double>(k);
}

double pmd_test(std::span<const double> true_means, const HotspotRanking& suggested, const HotspotRanking& truth,
                std::size_t k) {
  if (suggested.size() != truth.size() || true_means.size() != truth.size()) {
    throw DimensionError("pmd_test: rankings and true means cover different site counts");
  }
  check_k(k, truth.size(), "pmd_test");
  double true_sum = 0.0, suggested_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    true_sum += true_means[truth.order[i]];
    suggested_sum += true_means[suggested.order[i]];
  }
  if (!(true_sum > 0.0)) throw ValidationError("pmd_test: true top-k mean sum must be > 0");
  return 100.0 * (true_sum - suggested_sum) / true_sum;
}

double multi_k_average(const std::function<double(std::size_t)>& metric, std::span<const std::size_t> ks) {
  if (ks.empty()) throw ValidationError("multi_k_average: no k values");
  double total = 0.0;
  for (auto k : ks) total += metric(k);
  return total / static_cast<double>(ks.size());
}

double mape(std::span<const double> predictions, std::span<const double> truths, ZeroTruthPolicy policy) {
  if (predictions.size() != truths.size()) throw DimensionError("mape: prediction and truth lengths differ");
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double t = truths[i];
    if (t == 0.0 && policy == ZeroTruthPolicy::Exclude) continue;
    if (!(t > 0.0)) throw ValidationError("mape: truth " + std::to_string(i) + " is not positive");
    total += std::abs(predictions[i] - t) / t;
    ++used;
  }
  if (used == 0) throw ValidationError("mape: no usable pairs");
  return 100.0 * total / static_cast<double>(used);
}

TestResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("t test: each sample needs at least 2 points");
  require_finite(a, "t test");
  require_finite(b, "t test");
  const double ma = mean_of(a), mb = mean_of(b);
  const double qa = sample_variance(a, ma) / static_cast<double>(a.size());
  const double qb = sample_variance(b, mb) / static_cast<double>(b.size());
  const double se2 = qa + qb;
  if (se2 == 0.0) return zero_spread(ma == mb);
  const double t = (ma - mb) / std::sqrt(se2);
  const double df = se2 * se2 / (qa * qa / static_cast<double>(a.size() - 1) + qb * qb / static_cast<double>(b.size() - 1));
  return {t, student_two_sided(t, df), false};
}

TestResult levene_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw ValidationError("levene test: each sample needs at least 2 points");
  require_finite(a, "levene test");
  require_finite(b, "levene test");
  auto deviations = [](std::span<const double> x) {
    const double med = median_of(x);
    std::vector<double> z(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) z[i] = std::abs(x[i] - med);
    return z;
  };
  const auto za = deviations(a), zb = deviations(b);
  const double na = static_cast<double>(za.size()), nb = static_cast<double>(zb.size());
  const double ma = mean_of(za), mb = mean_of(zb);
  const double grand = (na * ma + nb * mb) / (na + nb);
  const double between = na * (ma - grand) * (ma - grand) + nb * (mb - grand) * (mb - grand);
  double within = 0.0;
  for (double z : za) within += (z - ma) * (z - ma);
  for (double z : zb) within += (z - mb) * (z - mb);
  if (within == 0.0) return zero_spread(between == 0.0);
  const double df2 = na + nb - 2.0;
  const double f = df2 * between / within;
  const boost::math::fisher_f dist(1.0, df2);
  return {f, boost::math::cdf(boost::math::complement(dist, f)), false};
}

TestResult ks_test(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ValidationError("ks test: each sample needs at least 1 point");
  require_finite(a, "ks test");
  require_finite(b, "ks test");
  std::vector<double> x(a.begin(), a.end()), y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size()), m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double en = std::sqrt(n * m / (n + m));
  return {d, kolmogorov_q((en + 0.12 + 0.11 / en) * d), false};
}

TestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("paired t test: samples differ in length");
  if (a.size() < 2) throw ValidationError("paired t test: need at least 2 pairs");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  require_finite(d, "paired t test");
  const double md = mean_of(d);
  const double var = sample_variance(d, md);
  if (var == 0.0) return zero_spread(md == 0.0);
  const double n = static_cast<double>(d.size());
  const double t = md / std::sqrt(var / n);
  return {t, student_two_sided(t, n - 1.0), false};
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::FI: return "fi";
    case Metric::PMD: return "pmd";
    case Metric::MapeEb: return "mape_eb";
    case Metric::MapeCrash: return "mape_crash";
    case Metric::MapeDispersion: return "mape_dispersion";
  }
  return "?";
}

double MetricSet::get(Metric m) const { return const_cast<MetricSet*>(this)->get(m); }

double& MetricSet::get(Metric m) {
  switch (m) {
    case Metric::FI: return fi;
    case Metric::PMD: return pmd;
    case Metric::MapeEb: return mape_eb;
    case Metric::MapeCrash: return mape_crash;
    case Metric::MapeDispersion: return mape_dispersion;
  }
  throw ValidationError("unknown metric");
}

double improvement(double mean_base, double mean_aug) {
  if (mean_base == mean_aug) return 0.0;
  return (mean_base - mean_aug) / mean_base * 100.0;
}

CellSummary ExperimentCell::summarize() const {
  CellSummary s;
  std::array<std::vector<double>, 5> base, aug;
  for (const auto& r : results) {
    if (r.failed) {
      ++s.failed;
      continue;
    }
    ++s.completed;
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      base[i].push_back(r.base.get(kAllMetrics[i]));
      aug[i].push_back(r.augmented.get(kAllMetrics[i]));
    }
  }
  for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
    const auto m = kAllMetrics[i];
    if (s.completed == 0) {
      s.mean_base.get(m) = s.mean_augmented.get(m) = s.improvement.get(m) = NAN;
      s.paired[i] = {NAN, NAN, true};
      continue;
    }
    s.mean_base.get(m) = mean_of(base[i]);
    s.mean_augmented.get(m) = mean_of(aug[i]);
    s.improvement.get(m) = improvement(s.mean_base.get(m), s.mean_augmented.get(m));
    s.paired[i] = s.completed >= 2 ? paired_t_test(base[i], aug[i]) : TestResult{NAN, NAN, true};
  }
  return s;
}

ReplicationResult evaluate_replication(const simulate::SimDataset& ns, const simulate::SimDataset& prediction,
                                       const Dataset& synthetic, const spf::Formula& formula,
                                       spf::EbWeighting weighting, std::size_t replication) {
  ReplicationResult r;
  r.replication = replication;
  try {
    const auto f = formula.features.empty() ? spf::Formula::linear(ns.data.feature_names) : formula;
    const auto base = spf::fit_spf(ns.data, f);
    r.base = score_model(base, ns, prediction, weighting);
    if (synthetic.empty()) {
      r.augmented = r.base;
    } else {
      r.augmented = score_model(spf::fit_spf(concat(ns.data, synthetic), f), ns, prediction, weighting);
    }
  } catch (const Error& e) {
    r.failed = true;
    r.error = e.what();
    r.base = r.augmented = MetricSet{};
  }
  return r;
}

std::uint64_t synthetic_seed(std::uint64_t master, std::size_t synthetic_size, std::size_t replication) {
  return derive_seed(master, "synthetic/" + std::to_string(synthetic_size), replication);
}

std::vector<ExperimentCell> run_simulation_experiment(const simulate::ExperimentSuite& suite,
                                                      const cgan::CganModel& model,
                                                      const ExperimentOptions& options) {
  if (model.feature_count() != suite.config.feature_count()) {
    throw DimensionError("experiment: CGAN feature count " + std::to_string(model.feature_count()) +
                         " does not match the suite's " + std::to_string(suite.config.feature_count()));
  }
  if (suite.ns_test.size() != suite.prediction_test.size()) {
    throw ValidationError("experiment: screening and prediction replication counts differ");
  }
  const auto reps = suite.ns_test.size();
  const auto& sizes = options.synthetic_sizes;
  std::vector<std::vector<ReplicationResult>> slots(reps);
  std::vector<bool> ready(reps, false);
  std::size_t next_emit = 0;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;

  auto run_one = [&](std::size_t rep) {
    std::vector<ReplicationResult> out;
    for (auto size : sizes) {
      const auto cached = options.completed.find(size);
      if (cached != options.completed.end()) {
        const auto hit = cached->second.find(rep);
        if (hit != cached->second.end()) {
          out.push_back(hit->second);
          continue;
        }
      }
      const auto synthetic = cgan::synthesize(model, size, synthetic_seed(options.seed, size, rep));
      out.push_back(evaluate_replication(suite.ns_test[rep], suite.prediction_test[rep], synthetic, options.formula,
                                         options.weighting, rep));
    }
    return out;
  };

  auto worker = [&]() {
    for (;;) {
      const auto rep = next.fetch_add(1);
      if (rep >= reps) return;
      {
        std::lock_guard lock(mutex);
        if (failure) return;
      }
      try {
        auto result = run_one(rep);
        std::lock_guard lock(mutex);
        slots[rep] = std::move(result);
        ready[rep] = true;
        while (next_emit < reps && ready[next_emit]) {
          if (options.on_replication) options.on_replication(next_emit, slots[next_emit]);
          ++next_emit;
        }
      } catch (...) {
        std::lock_guard lock(mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };

  const auto workers = std::max<std::size_t>(1, std::min(options.workers, std::max<std::size_t>(reps, 1)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<ExperimentCell> cells(sizes.size());
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    cells[s].dispersion = suite.config.dispersion;
    cells[s].synthetic_size = sizes[s];
    cells[s].results.reserve(reps);
    for (std::size_t rep = 0; rep < reps; ++rep) cells[s].results.push_back(slots[rep][s]);
  }
  return cells;
}

RealWorldReport run_realworld_experiment(const Dataset& data, const RealWorldOptions& options) {
  data.validate();
  if (data.rows() < 4) throw ValidationError("split: need at least 4 rows, got " + std::to_string(data.rows()));
  const auto names = options.features.empty() ? data.feature_names : options.features;
  if (names.empty()) throw ValidationError("real-data experiment: no features");
  const Dataset d = select_features(data, names);

  std::vector<std::size_t> order(d.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng split_rng = make_rng(options.seed, "split");
  for (std::size_t i = order.size() - 1; i > 0; --i) {
    std::swap(order[i], order[static_cast<std::size_t>(split_rng() % (i + 1))]);
  }
  const auto half = order.size() / 2;
  const Dataset train = select_rows(d, std::span(order).first(half));
  const Dataset test = select_rows(d, std::span(order).subspan(half));

  RealWorldReport rep;
  rep.train_rows = train.rows();
  rep.test_rows = test.rows();
  rep.model = cgan::train_cgan(train, options.train, std::vector<bool>(names.size(), options.log_features));
  rep.synthetic = cgan::synthesize(rep.model, options.synthetic_size, derive_seed(options.seed, "synthetic"));
  const Dataset& synthetic = rep.synthetic;
  rep.synthetic_rows = synthetic.rows();

  const auto formula = options.log_features ? spf::Formula::logged(names) : spf::Formula::linear(names);
  rep.base = spf::fit_spf(train, formula);
  rep.augmented = synthetic.empty() ? rep.base : spf::fit_spf(concat(train, synthetic), formula);
  rep.base_tests = spf::coefficient_significance(rep.base);
  rep.augmented_tests = spf::coefficient_significance(rep.augmented);

  if (synthetic.rows() >= 2) {
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto real = column(train.features, static_cast<Eigen::Index>(j));
      const auto fake = column(synthetic.features, static_cast<Eigen::Index>(j));
      rep.feature_tests.push_back({names[j], welch_t_test(fake, real), levene_test(fake, real), ks_test(fake, real)});
    }
  }

  std::vector<double> observed(test.rows());
  for (std::size_t i = 0; i < test.rows(); ++i) observed[i] = static_cast<double>(test.counts[i]);
  rep.scored_rows = options.zero_policy == ZeroTruthPolicy::Exclude
                        ? static_cast<std::size_t>(std::count_if(observed.begin(), observed.end(), [](double y) { return y != 0.0; }))
                        : observed.size();
  rep.mape_base = mape(to_vector(spf::predict(rep.base, test)), observed, options.zero_policy);
  rep.mape_augmented = mape(to_vector(spf::predict(rep.augmented, test)), observed, options.zero_policy);
  rep.mape_target = options.zero_policy == ZeroTruthPolicy::Exclude
                        ? "observed counts of the test half, zero-count sites excluded"
                        : "observed counts of the test half";
  return rep;
}

void write_report_header(std::ostream& out) {
  out << "dispersion,synthetic_size,replication,status";
  for (const char* arm : {"base", "aug"}) {
    for (auto m : kAllMetrics) out << ',' << arm << '_' << to_string(m);
  }
  out << ",error\n";
}

void write_report_row(std::ostream& out, double dispersion, std::size_t synthetic_size, const ReplicationResult& r) {
  out << format_double(dispersion) << ',' << synthetic_size << ',' << r.replication << ','
      << (r.failed ? "failed" : "ok");
  for (const MetricSet* set : {&r.base, &r.augmented}) {
    for (auto m : kAllMetrics) {
      out << ',';
      if (!r.failed) out << format_double(set->get(m));
    }
  }
  out << ',' << sanitize(r.error) << '\n';
}

void write_report_csv(std::ostream& out, const std::vector<ExperimentCell>& cells) {
  write_report_header(out);
  // dispersion blocks in order; within a block replication-major, matching
  // the order in which runs stream their rows
  for (std::size_t first = 0; first < cells.size();) {
    std::size_t last = first;
    while (last < cells.size() && cells[last].dispersion == cells[first].dispersion) ++last;
    std::size_t reps = 0;
    for (std::size_t c = first; c < last; ++c) reps = std::max(reps, cells[c].results.size());
    for (std::size_t r = 0; r < reps; ++r) {
      for (std::size_t c = first; c < last; ++c) {
        if (r < cells[c].results.size()) write_report_row(out, cells[c].dispersion, cells[c].synthetic_size, cells[c].results[r]);
      }
    }
    first = last;
  }
}

std::vector<ReportRow> read_report_csv(std::istream& in) {
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::vector<ReportRow> rows;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  constexpr std::size_t kFields = 4 + 2 * kAllMetrics.size() + 1;
  while (pos < text.size()) {
    const auto end = text.find('\n', pos);
    if (end == std::string::npos) break;  // truncated final line
    const std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (line_no++ == 0) continue;  // header
    if (trim(line).empty()) continue;
    const auto f = split_commas(line, kFields);
    const auto where = "report line " + std::to_string(line_no);
    if (f.size() != kFields) throw ParseError(where + ": expected " + std::to_string(kFields) + " fields");
    ReportRow row;
    row.dispersion = parse_double(f[0]);
    row.synthetic_size = static_cast<std::size_t>(parse_int(f[1]));
    row.result.replication = static_cast<std::size_t>(parse_int(f[2]));
    if (f[3] != "ok" && f[3] != "failed") throw ParseError(where + ": bad status '" + f[3] + "'");
    row.result.failed = f[3] == "failed";
    if (!row.result.failed) {
      std::size_t k = 4;
      for (MetricSet* set : {&row.result.base, &row.result.augmented}) {
        for (auto m : kAllMetrics) set->get(m) = parse_double(f[k++]);
      }
    }
    row.result.error = f[kFields - 1];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<ExperimentCell> cells_from_rows(const std::vector<ReportRow>& rows) {
  std::vector<ExperimentCell> cells;
  for (const auto& row : rows) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const ExperimentCell& c) {
      return c.dispersion == row.dispersion && c.synthetic_size == row.synthetic_size;
    });
    if (it == cells.end()) {
      // keep each dispersion's cells contiguous
      auto pos = cells.end();
      for (auto c = cells.begin(); c != cells.end(); ++c) {
        if (c->dispersion == row.dispersion) pos = c + 1;
      }
      it = cells.insert(pos, ExperimentCell{row.dispersion, row.synthetic_size, {}});
    }
    it->results.push_back(row.result);
  }
  for (auto& c : cells) {
    std::stable_sort(c.results.begin(), c.results.end(),
                     [](const ReplicationResult& a, const ReplicationResult& b) { return a.replication < b.replication; });
  }
  return cells;
}

void write_long_csv(std::ostream& out, const std::vector<ExperimentCell>& cells) {
  out << "dispersion,synthetic_size,replication,arm,metric,value\n";
  for (const auto& c : cells) {
    for (const auto& r : c.results) {
      if (r.failed) continue;
      for (const auto& [arm, set] : {std::pair{"base", &r.base}, std::pair{"augmented", &r.augmented}}) {
        for (auto m : kAllMetrics) {
          out << format_double(c.dispersion) << ',' << c.synthetic_size << ',' << r.replication << ',' << arm << ','
              << to_string(m) << ',' << format_double(set->get(m)) << '\n';
        }
      }
    }
  }
}

std::string summary_json(const std::vector<ExperimentCell>& cells, const std::string& metadata_json) {
  nlohmann::json root;
  root["metadata"] = nlohmann::json::parse(metadata_json);
  root["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    const auto s = c.summarize();
    nlohmann::json cell{{"dispersion", c.dispersion},
                        {"synthetic_size", c.synthetic_size},
                        {"replications", c.results.size()},
                        {"completed", s.completed},
                        {"failed", s.failed}};
    for (std::size_t i = 0; i < kAllMetrics.size(); ++i) {
      const auto m = kAllMetrics[i];
      cell["metrics"][std::string(to_string(m))] = {{"base_mean", s.mean_base.get(m)},
                                                    {"augmented_mean", s.mean_augmented.get(m)},
                                                    {"improvement_pct", s.improvement.get(m)},
                                                    {"paired_t", test_json(s.paired[i])}};
    }
    root["cells"].push_back(std::move(cell));
  }
  return root.dump(2) + "\n";
}

std::string realworld_json(const RealWorldReport& report) {
  auto coef_table = [](const std::vector<spf::CoefficientTest>& tests) {
    auto arr = nlohmann::json::array();
    for (const auto& t : tests) {
      arr.push_back({{"name", t.name},
                     {"estimate", t.estimate},
                     {"std_error", t.std_error},
                     {"z", t.z},
                     {"p_value", t.p_value},
                     {"defined", t.defined}});
    }
    return arr;
  };
  nlohmann::json root;
  root["split"] = {{"train_rows", report.train_rows},
                   {"test_rows", report.test_rows},
                   {"scored_test_rows", report.scored_rows}};
  root["synthetic_rows"] = report.synthetic_rows;
  root["base_spf"] = {{"coefficients", coef_table(report.base_tests)}, {"dispersion", report.base.dispersion}};
  root["augmented_spf"] = {{"coefficients", coef_table(report.augmented_tests)},
                           {"dispersion", report.augmented.dispersion}};
  auto tests = nlohmann::json::array();
  for (const auto& f : report.feature_tests) {
    tests.push_back({{"feature", f.feature}, {"t_test", test_json(f.t)}, {"levene", test_json(f.levene)},
                     {"ks", test_json(f.ks)}});
  }
  root["feature_tests"] = tests;
  root["mape"] = {{"base", report.mape_base}, {"augmented", report.mape_augmented}, {"target", report.mape_target}};
  return root.dump(2) + "\n";
}

}  // namespace crashgan::evaluate
