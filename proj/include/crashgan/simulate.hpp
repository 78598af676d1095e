#pragma once

// Gamma-Poisson crash data simulator:
//   X ~ U[0,1]^FS,  lambda = exp(beta0 + beta'X) * exp(eps),  Y ~ Poisson(lambda)
// with exp(eps) drawn from a mean-1, variance-alpha gamma distribution, so
// that Var(Y | X) = mu + alpha * mu^2.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "crashgan/dataset.hpp"
#include "crashgan/random.hpp"

namespace crashgan::simulate {

struct SimConfig {
  double beta0 = 0.5;
  std::vector<double> coefficients{0.5, -0.5, 1.0, -1.0};
  double dispersion = 0.5;
  std::size_t sample_size = 100;
  std::uint64_t seed = 0;

  std::size_t feature_count() const { return coefficients.size(); }
  void validate() const;
};

struct SimDataset {
  Dataset data;  // carries true_means
  SimConfig config;
};

struct ExperimentSuite {
  SimConfig config;
  SimDataset cgan_train;
  std::vector<SimDataset> ns_test;
  std::vector<SimDataset> prediction_test;
};

// Gamma(shape, scale) via Marsaglia-Tsang; shape < 1 uses the U^(1/shape)
// boost.
double sample_gamma(double shape, double scale, Rng& rng);

// exp(eps) with mean 1 and variance alpha (shape 1/alpha, scale alpha).
double sample_gamma_heterogeneity(double alpha, Rng& rng);

// Exact Poisson draw: sequential inversion below 10, PTRS transformed
// rejection above.
CrashCount sample_poisson(double lambda, Rng& rng);

SimDataset gen_dataset(const SimConfig& config);

// One CGAN training set plus n_ns network-screening sets and n_pred
// prediction sets. Dataset seeds derive from config.seed and the stream
// labels "cgan_train", "ns_test", "prediction_test".
ExperimentSuite gen_experiment_suite(const SimConfig& config, std::size_t n_ns, std::size_t n_pred);

// Stand-in for a real intersection inventory: two log-normal volume
// features (aadt_major, aadt_minor) and NB counts from a log-volume SPF.
Dataset gen_intersection_standin(std::size_t rows, std::uint64_t seed);

}  // namespace crashgan::simulate
