#pragma once

// Hotspot-identification metrics, MAPE, two-sample tests, and the Base vs
// Augmented SPF experiment harness.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crashgan/cgan.hpp"
#include "crashgan/dataset.hpp"
#include "crashgan/simulate.hpp"
#include "crashgan/spf.hpp"

namespace crashgan::evaluate {

enum class ScoreSource { TrueMean, EbEstimate };

// Site indices by descending score, ties by ascending index.
struct HotspotRanking {
  std::vector<std::size_t> order;
  ScoreSource source = ScoreSource::EbEstimate;

  static HotspotRanking from_scores(std::span<const double> scores, ScoreSource source);
  std::size_t size() const { return order.size(); }
};

// 100 * |top-k(suggested) \ top-k(truth)| / k
double fi_test(const HotspotRanking& suggested, const HotspotRanking& truth, std::size_t k);

// 100 * (sum of lambda over the true top-k - sum over the suggested top-k)
//     / sum of lambda over the true top-k
double pmd_test(std::span<const double> true_means, const HotspotRanking& suggested, const HotspotRanking& truth,
                std::size_t k);

inline constexpr std::array<std::size_t, 4> kDefaultKs{5, 10, 15, 20};

double multi_k_average(const std::function<double(std::size_t)>& metric,
                       std::span<const std::size_t> ks = kDefaultKs);

// Reject: any non-positive truth is an error. Exclude: pairs with a zero
// truth are dropped (observed-count targets).
enum class ZeroTruthPolicy { Reject, Exclude };

double mape(std::span<const double> predictions, std::span<const double> truths,
            ZeroTruthPolicy policy = ZeroTruthPolicy::Reject);

struct TestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  bool degenerate = false;  // zero spread; statistic/p follow the conventions below
};

// Welch unequal-variance t, two-sided. Two zero-variance samples are
// degenerate: p = 1 when the means agree, 0 otherwise.
TestResult welch_t_test(std::span<const double> a, std::span<const double> b);

// Levene with median centering (Brown-Forsythe), F(1, n_a + n_b - 2).
TestResult levene_test(std::span<const double> a, std::span<const double> b);

// Two-sample KS. p = Q_KS((sqrt(Ne) + 0.12 + 0.11 / sqrt(Ne)) * D),
// Ne = n_a n_b / (n_a + n_b).
TestResult ks_test(std::span<const double> a, std::span<const double> b);

// Paired t on a - b. All-zero differences are degenerate with p = 1.
TestResult paired_t_test(std::span<const double> a, std::span<const double> b);

enum class Metric { FI, PMD, MapeEb, MapeCrash, MapeDispersion };
inline constexpr std::array<Metric, 5> kAllMetrics{Metric::FI, Metric::PMD, Metric::MapeEb, Metric::MapeCrash,
                                                   Metric::MapeDispersion};
std::string_view to_string(Metric m);

struct MetricSet {
  double fi = 0.0;
  double pmd = 0.0;
  double mape_eb = 0.0;
  double mape_crash = 0.0;
  double mape_dispersion = 0.0;

  double get(Metric m) const;
  double& get(Metric m);
};

struct ReplicationResult {
  std::size_t replication = 0;
  bool failed = false;
  std::string error;
  MetricSet base;
  MetricSet augmented;
};

// (mean_base - mean_aug) / mean_base * 100; exactly 0 when the means are equal.
double improvement(double mean_base, double mean_aug);

struct CellSummary {
  std::size_t completed = 0;
  std::size_t failed = 0;
  MetricSet mean_base;
  MetricSet mean_augmented;
  MetricSet improvement;
  std::array<TestResult, 5> paired{};  // indexed like kAllMetrics
};

struct ExperimentCell {
  double dispersion = 0.0;
  std::size_t synthetic_size = 0;
  std::vector<ReplicationResult> results;  // ordered by replication

  CellSummary summarize() const;
};

struct ExperimentOptions {
  std::vector<std::size_t> synthetic_sizes{200, 500, 1000};
  std::size_t workers = 1;
  std::uint64_t seed = 0;  // synthetic-data streams
  spf::Formula formula;    // empty: all features, linear
  spf::EbWeighting weighting = spf::EbWeighting::Classical;
  // Replications already computed (e.g. from a partial report), keyed by
  // synthetic size then replication index. Complete replications are reused
  // instead of recomputed.
  std::map<std::size_t, std::map<std::size_t, ReplicationResult>> completed;
  // Called in replication order, once per replication, with one result per
  // synthetic size (in synthetic_sizes order). Serialized.
  std::function<void(std::size_t replication, const std::vector<ReplicationResult>&)> on_replication;
};

// Metrics for one NS replication against one synthetic set (possibly empty).
ReplicationResult evaluate_replication(const simulate::SimDataset& ns, const simulate::SimDataset& prediction,
                                       const Dataset& synthetic, const spf::Formula& formula,
                                       spf::EbWeighting weighting, std::size_t replication);

// One cell per synthetic size, all at the suite's dispersion. Replication i
// pairs ns_test[i] with prediction_test[i].
std::vector<ExperimentCell> run_simulation_experiment(const simulate::ExperimentSuite& suite,
                                                      const cgan::CganModel& model,
                                                      const ExperimentOptions& options);

// Seed of the synthetic set for (replication, size).
std::uint64_t synthetic_seed(std::uint64_t master, std::size_t synthetic_size, std::size_t replication);

struct RealWorldOptions {
  std::size_t synthetic_size = 1000;
  std::uint64_t seed = 0;
  cgan::TrainConfig train;
  std::vector<std::string> features;  // empty: every feature
  bool log_features = true;           // ln(x) in both the CGAN and the SPF
  ZeroTruthPolicy zero_policy = ZeroTruthPolicy::Exclude;
};

struct FeatureTests {
  std::string feature;
  TestResult t;
  TestResult levene;
  TestResult ks;
};

struct RealWorldReport {
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  std::size_t scored_rows = 0;  // test rows entering the MAPE
  std::size_t synthetic_rows = 0;
  spf::SpfModel base;
  spf::SpfModel augmented;
  std::vector<spf::CoefficientTest> base_tests;
  std::vector<spf::CoefficientTest> augmented_tests;
  std::vector<FeatureTests> feature_tests;  // synthetic vs real training half
  double mape_base = 0.0;
  double mape_augmented = 0.0;
  std::string mape_target;
  cgan::CganModel model;
  Dataset synthetic;
};

RealWorldReport run_realworld_experiment(const Dataset& data, const RealWorldOptions& options);

// report.csv: one row per (dispersion, replication, synthetic size), in that
// nesting order.
void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, double dispersion, std::size_t synthetic_size, const ReplicationResult& r);
void write_report_csv(std::ostream& out, const std::vector<ExperimentCell>& cells);

struct ReportRow {
  double dispersion = 0.0;
  std::size_t synthetic_size = 0;
  ReplicationResult result;
};
// Reads back rows written by write_report_row; a truncated trailing line is
// ignored.
std::vector<ReportRow> read_report_csv(std::istream& in);

// Regroups report rows into cells: dispersions in order of first appearance,
// synthetic sizes in order of first appearance within each dispersion.
std::vector<ExperimentCell> cells_from_rows(const std::vector<ReportRow>& rows);

// dispersion,synthetic_size,replication,arm,metric,value
void write_long_csv(std::ostream& out, const std::vector<ExperimentCell>& cells);

std::string summary_json(const std::vector<ExperimentCell>& cells, const std::string& metadata_json = "{}");
std::string realworld_json(const RealWorldReport& report);

}  // namespace crashgan::evaluate
