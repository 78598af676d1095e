#pragma once

// Small dense feed-forward networks with exact reverse-mode gradients and an
// Adam optimizer. Everything is double precision. Batches are stored as
// columns: an input of width `in` for `b` samples is an in x b matrix.

#include <Eigen/Dense>

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "crashgan/random.hpp"

namespace crashgan::nn {

enum class Activation { Identity, ReLU, ELU, Sigmoid };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view name);

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::Identity;

  Eigen::Index in_size() const { return weights.cols(); }
  Eigen::Index out_size() const { return weights.rows(); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(weights.size() + biases.size());
  }

  // Glorot-uniform weights, zero biases.
  static DenseLayer glorot(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng);
};

// One dense layer per named input ("branch"), outputs concatenated in branch
// order, then a trunk of dense layers. A network without branches feeds its
// single input straight into the trunk.
class DenseNetwork {
 public:
  DenseNetwork() = default;
  DenseNetwork(std::vector<DenseLayer> branches, std::vector<DenseLayer> trunk);

  std::size_t input_arity() const { return branches_.empty() ? 1 : branches_.size(); }
  Eigen::Index input_width(std::size_t input) const;
  Eigen::Index concat_width() const;
  Eigen::Index output_width() const;
  std::size_t parameter_count() const;

  const std::vector<DenseLayer>& branches() const { return branches_; }
  const std::vector<DenseLayer>& trunk() const { return trunk_; }
  std::vector<DenseLayer>& branches() { return branches_; }
  std::vector<DenseLayer>& trunk() { return trunk_; }

  // Parameters in a fixed order: branches then trunk; per layer the weights
  // row-major, then the biases.
  std::vector<double> flatten_parameters() const;
  void assign_parameters(std::span<const double> values);

  // Throws DimensionError when layer shapes do not chain.
  void validate() const;

 private:
  std::vector<DenseLayer> branches_;
  std::vector<DenseLayer> trunk_;
};

// Same architecture and bitwise-equal parameters.
bool identical(const DenseNetwork& a, const DenseNetwork& b);

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;
  std::vector<Eigen::MatrixXd> branch_pre;
  std::vector<Eigen::MatrixXd> branch_out;
  Eigen::MatrixXd concat;
  std::vector<Eigen::MatrixXd> trunk_pre;
  std::vector<Eigen::MatrixXd> trunk_out;
  bool valid = false;
};

struct LayerGradient {
  Eigen::MatrixXd weights;
  Eigen::VectorXd biases;
};

struct Gradients {
  std::vector<LayerGradient> branches;
  std::vector<LayerGradient> trunk;
  std::vector<Eigen::MatrixXd> inputs;  // dLoss/dInput per input, same shape as the input

  std::vector<double> flatten_parameters() const;
};

Eigen::MatrixXd forward(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs);
Eigen::MatrixXd forward(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs,
                        ForwardCache& cache);
// Single-sample convenience.
Eigen::VectorXd forward(const DenseNetwork& net, const std::vector<Eigen::VectorXd>& inputs);

// `upstream` is dLoss/dOutput (output_width x batch). With
// `parameter_gradients == false` only the input gradients are filled.
Gradients backward(const DenseNetwork& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& upstream, bool parameter_gradients = true);

inline constexpr double kBceClamp = 1e-7;

// -(t log p + (1 - t) log(1 - p)) with p clamped to [1e-7, 1 - 1e-7].
double bce_loss(double prediction, double target);

// Mean BCE over a row of predictions against a constant target. When `grad`
// is non-null it receives dMean/dPrediction per column.
double bce_mean(const Eigen::MatrixXd& predictions, double target, Eigen::MatrixXd* grad);

struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  long step_count = 0;
  double learning_rate = 0.001;
  double decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState create(std::size_t parameter_count, double learning_rate, double decay = 0.0);

  // Inverse-time decay: lr / (1 + decay * step_count).
  double effective_learning_rate() const {
    return learning_rate / (1.0 + decay * static_cast<double>(step_count));
  }
};

// Bias-corrected Adam update in place. Throws NumericalError on a
// non-finite gradient or parameter.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);
void adam_step(DenseNetwork& net, const Gradients& grads, AdamState& state);

// Numerical verification against the scalar objective sum(forward(inputs)).
std::vector<double> analytic_gradient(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs);
std::vector<double> numeric_gradient(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs,
                                     double h);
// max_i |a_i - n_i| / max(|n_i|, 1e-6)
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);
double gradient_check(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs, double h = 1e-5);

void write_network(std::ostream& out, const DenseNetwork& net);
DenseNetwork read_network(std::istream& in);

}  // namespace crashgan::nn
