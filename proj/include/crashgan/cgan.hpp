#pragma once

// Conditional GAN for crash-frequency tables. The generator maps a crash count
// y and a noise vector z (same width as the feature vector) to a normalized
// feature vector; the discriminator scores (X, y) pairs as real or generated.
//
//   generator:     y -> Dense(100, ELU) | z -> Dense(100, ELU) -> concat(200)
//                  -> Dense(50, ELU) x3 -> Dense(FS, ReLU)
//   discriminator: X -> Dense(100, ELU) | y -> Dense(100, ELU) -> concat(200)
//                  -> Dense(50, ELU) x2 -> Dense(1, Sigmoid)

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "crashgan/dataset.hpp"
#include "crashgan/nn.hpp"
#include "crashgan/random.hpp"

namespace crashgan::cgan {

struct TrainConfig {
  int epochs = 5000;
  int batch_size = 100;
  double lr_g = 0.001;
  double lr_d = 0.001;
  double decay_g = 0.001;
  double decay_d = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

// Per-feature min/max (after the optional ln transform) used to map features
// into [0, 1]. Degenerate features (max == min) map to 0.
struct NormalizationStats {
  Eigen::VectorXd min;
  Eigen::VectorXd max;
  std::vector<bool> log_features;

  static NormalizationStats fit(const Eigen::MatrixXd& features, std::vector<bool> log_features = {});
  Eigen::MatrixXd normalize(const Eigen::MatrixXd& features) const;
  Eigen::MatrixXd denormalize(const Eigen::MatrixXd& normalized) const;
};

struct NormalizedData {
  Eigen::MatrixXd features;  // rows = sites, values in [0, 1] for in-range data
  NormalizationStats stats;
};

// Fits stats on `data` unless `stats` is given, in which case they are reused.
NormalizedData normalize(const Dataset& data, const NormalizationStats* stats = nullptr);

struct EpochLoss {
  double discriminator = 0.0;
  double generator = 0.0;
};

struct CganModel {
  std::vector<std::string> feature_names;
  nn::DenseNetwork generator;
  nn::DenseNetwork discriminator;
  NormalizationStats norm;
  std::vector<CrashCount> empirical_counts;
  std::vector<EpochLoss> history;

  std::size_t feature_count() const { return feature_names.size(); }
};

nn::DenseNetwork build_generator(int feature_count, Rng& rng);
nn::DenseNetwork build_discriminator(int feature_count, Rng& rng);

// Freshly initialized model (what train_cgan returns for zero epochs).
CganModel init_cgan(const Dataset& data, const TrainConfig& config, const std::vector<bool>& log_features = {});

// Alternating full-batch training: one discriminator step on a real batch and
// an equal-size generated batch, then one generator step through the frozen
// discriminator, per epoch. Throws NumericalError naming the epoch if a loss
// turns non-finite.
CganModel train_cgan(const Dataset& data, const TrainConfig& config, const std::vector<bool>& log_features = {});

// n rows: y bootstrapped from the training counts, z ~ N(0, I), features
// G(y, z) clipped to [0, 1] and mapped back to data units. Rows are flagged
// synthetic.
Dataset synthesize(const CganModel& model, std::size_t n, std::uint64_t seed);
Dataset synthesize(const CganModel& model, std::size_t n, Rng& rng);

// Discriminator outputs for a dataset in data units.
Eigen::VectorXd discriminate(const CganModel& model, const Dataset& data);

// Fraction of rows classified correctly at threshold 0.5 (real > 0.5,
// generated < 0.5) over the union of both sets.
double discriminator_accuracy(const CganModel& model, const Dataset& real, const Dataset& generated);

void write_model(std::ostream& out, const CganModel& model);
CganModel read_model(std::istream& in);
void write_model(const std::filesystem::path& path, const CganModel& model);
CganModel read_model(const std::filesystem::path& path);

// epoch,loss_d,loss_g
void write_history(std::ostream& out, const CganModel& model);

}  // namespace crashgan::cgan
