#include "crashgan/nn.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/format.hpp"

namespace crashgan::nn {

namespace {

double activate(Activation a, double z) {
  switch (a) {
    case Activation::Identity: return z;
    case Activation::ReLU: return z > 0.0 ? z : 0.0;
    case Activation::ELU: return z > 0.0 ? z : std::expm1(z);
    case Activation::Sigmoid:
      if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
      else {
        const double e = std::exp(z);
        return e / (1.0 + e);
      }
  }
  return z;
}

// Derivative expressed through the pre-activation z and the output y.
double activation_slope(Activation a, double z, double y) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    case Activation::ELU: return z > 0.0 ? 1.0 : y + 1.0;
    case Activation::Sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

Eigen::MatrixXd apply_layer(const DenseLayer& layer, const Eigen::MatrixXd& x, Eigen::MatrixXd* pre_out) {
  Eigen::MatrixXd pre = layer.weights * x;
  pre.colwise() += layer.biases;
  Eigen::MatrixXd out = pre.unaryExpr([a = layer.activation](double z) { return activate(a, z); });
  if (pre_out) *pre_out = std::move(pre);
  return out;
}

void check_input(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs) {
  if (inputs.size() != net.input_arity()) {
    throw DimensionError("forward: network takes " + std::to_string(net.input_arity()) +
                         " input(s), got " + std::to_string(inputs.size()));
  }
  const auto batch = inputs.front().cols();
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].rows() != net.input_width(i)) {
      const std::string where = net.branches().empty() ? "trunk layer 0" : "branch " + std::to_string(i);
      throw DimensionError("forward: " + where + " expects input width " +
                           std::to_string(net.input_width(i)) + ", got " + std::to_string(inputs[i].rows()));
    }
    if (inputs[i].cols() != batch) throw DimensionError("forward: inputs disagree on batch size");
  }
}

LayerGradient layer_backward(const DenseLayer& layer, const Eigen::MatrixXd& pre, const Eigen::MatrixXd& out,
                             const Eigen::MatrixXd& layer_input, const Eigen::MatrixXd& upstream,
                             bool parameter_gradients, Eigen::MatrixXd* input_grad) {
  Eigen::MatrixXd delta(upstream.rows(), upstream.cols());
  for (Eigen::Index c = 0; c < upstream.cols(); ++c) {
    for (Eigen::Index r = 0; r < upstream.rows(); ++r) {
      delta(r, c) = upstream(r, c) * activation_slope(layer.activation, pre(r, c), out(r, c));
    }
  }
  LayerGradient g;
  if (parameter_gradients) {
    g.weights.noalias() = delta * layer_input.transpose();
    g.biases = delta.rowwise().sum();
  }
  if (input_grad) input_grad->noalias() = layer.weights.transpose() * delta;
  return g;
}

// Pointer to the k-th parameter in flatten order.
double* parameter_ptr(DenseNetwork& net, std::size_t k) {
  auto visit = [&k](std::vector<DenseLayer>& layers) -> double* {
    for (auto& layer : layers) {
      const auto nw = static_cast<std::size_t>(layer.weights.size());
      if (k < nw) {
        const auto cols = static_cast<std::size_t>(layer.weights.cols());
        return &layer.weights(static_cast<Eigen::Index>(k / cols), static_cast<Eigen::Index>(k % cols));
      }
      k -= nw;
      const auto nb = static_cast<std::size_t>(layer.biases.size());
      if (k < nb) return &layer.biases(static_cast<Eigen::Index>(k));
      k -= nb;
    }
    return nullptr;
  };
  if (double* p = visit(net.branches())) return p;
  if (double* p = visit(net.trunk())) return p;
  throw DimensionError("parameter index out of range");
}

void append_layer(std::vector<double>& out, const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c) out.push_back(w(r, c));
  for (Eigen::Index r = 0; r < b.size(); ++r) out.push_back(b(r));
}

}  // namespace

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::ELU: return "elu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

Activation parse_activation(std::string_view name) {
  if (name == "identity") return Activation::Identity;
  if (name == "relu") return Activation::ReLU;
  if (name == "elu") return Activation::ELU;
  if (name == "sigmoid") return Activation::Sigmoid;
  throw ParseError("unknown activation '" + std::string(name) + "'");
}

DenseLayer DenseLayer::glorot(Eigen::Index in, Eigen::Index out, Activation act, Rng& rng) {
  if (in < 1 || out < 1) throw DimensionError("dense layer sizes must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  DenseLayer layer;
  layer.weights.resize(out, in);
  for (Eigen::Index r = 0; r < out; ++r)
    for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
  layer.biases = Eigen::VectorXd::Zero(out);
  layer.activation = act;
  return layer;
}

DenseNetwork::DenseNetwork(std::vector<DenseLayer> branches, std::vector<DenseLayer> trunk)
    : branches_(std::move(branches)), trunk_(std::move(trunk)) {
  validate();
}

void DenseNetwork::validate() const {
  if (trunk_.empty()) throw DimensionError("network needs at least one trunk layer");
  auto check_layer = [](const DenseLayer& l, const std::string& where) {
    if (l.weights.rows() < 1 || l.weights.cols() < 1) throw DimensionError(where + ": empty weight matrix");
    if (l.biases.size() != l.weights.rows()) throw DimensionError(where + ": bias length != output width");
  };
  Eigen::Index width = 0;
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    check_layer(branches_[i], "branch " + std::to_string(i));
    width += branches_[i].out_size();
  }
  if (branches_.empty()) width = trunk_.front().in_size();
  for (std::size_t i = 0; i < trunk_.size(); ++i) {
    const auto where = "trunk layer " + std::to_string(i);
    check_layer(trunk_[i], where);
    if (trunk_[i].in_size() != width) {
      throw DimensionError(where + ": input width " + std::to_string(trunk_[i].in_size()) +
                           " does not match preceding width " + std::to_string(width));
    }
    width = trunk_[i].out_size();
  }
}

Eigen::Index DenseNetwork::input_width(std::size_t input) const {
  if (branches_.empty()) return trunk_.front().in_size();
  return branches_.at(input).in_size();
}

Eigen::Index DenseNetwork::concat_width() const {
  if (branches_.empty()) return trunk_.front().in_size();
  Eigen::Index w = 0;
  for (const auto& b : branches_) w += b.out_size();
  return w;
}

Eigen::Index DenseNetwork::output_width() const { return trunk_.back().out_size(); }

std::size_t DenseNetwork::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : branches_) n += l.parameter_count();
  for (const auto& l : trunk_) n += l.parameter_count();
  return n;
}

std::vector<double> DenseNetwork::flatten_parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& l : branches_) append_layer(out, l.weights, l.biases);
  for (const auto& l : trunk_) append_layer(out, l.weights, l.biases);
  return out;
}

void DenseNetwork::assign_parameters(std::span<const double> values) {
  if (values.size() != parameter_count()) throw DimensionError("assign_parameters: length mismatch");
  std::size_t k = 0;
  auto fill = [&](std::vector<DenseLayer>& layers) {
    for (auto& l : layers) {
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
        for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = values[k++];
      for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = values[k++];
    }
  };
  fill(branches_);
  fill(trunk_);
}

bool identical(const DenseNetwork& a, const DenseNetwork& b) {
  auto same = [](const std::vector<DenseLayer>& x, const std::vector<DenseLayer>& y) {
    if (x.size() != y.size()) return false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].activation != y[i].activation || x[i].weights.rows() != y[i].weights.rows() ||
          x[i].weights.cols() != y[i].weights.cols() || x[i].weights != y[i].weights ||
          x[i].biases != y[i].biases) {
        return false;
      }
    }
    return true;
  };
  return same(a.branches(), b.branches()) && same(a.trunk(), b.trunk());
}

std::vector<double> Gradients::flatten_parameters() const {
  std::vector<double> out;
  for (const auto& g : branches) append_layer(out, g.weights, g.biases);
  for (const auto& g : trunk) append_layer(out, g.weights, g.biases);
  return out;
}

Eigen::MatrixXd forward(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs) {
  check_input(net, inputs);
  Eigen::MatrixXd x;
  if (net.branches().empty()) {
    x = inputs.front();
  } else {
    x.resize(net.concat_width(), inputs.front().cols());
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < net.branches().size(); ++i) {
      const auto& b = net.branches()[i];
      x.middleRows(row, b.out_size()) = apply_layer(b, inputs[i], nullptr);
      row += b.out_size();
    }
  }
  for (const auto& layer : net.trunk()) x = apply_layer(layer, x, nullptr);
  return x;
}

Eigen::MatrixXd forward(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs, ForwardCache& cache) {
  check_input(net, inputs);
  cache = ForwardCache{};
  cache.inputs.assign(inputs.begin(), inputs.end());
  if (net.branches().empty()) {
    cache.concat = inputs.front();
  } else {
    cache.concat.resize(net.concat_width(), inputs.front().cols());
    Eigen::Index row = 0;
    for (std::size_t i = 0; i < net.branches().size(); ++i) {
      const auto& b = net.branches()[i];
      Eigen::MatrixXd pre;
      Eigen::MatrixXd out = apply_layer(b, inputs[i], &pre);
      cache.concat.middleRows(row, b.out_size()) = out;
      row += b.out_size();
      cache.branch_pre.push_back(std::move(pre));
      cache.branch_out.push_back(std::move(out));
    }
  }
  const Eigen::MatrixXd* x = &cache.concat;
  for (const auto& layer : net.trunk()) {
    Eigen::MatrixXd pre;
    cache.trunk_out.push_back(apply_layer(layer, *x, &pre));
    cache.trunk_pre.push_back(std::move(pre));
    x = &cache.trunk_out.back();
  }
  cache.valid = true;
  return cache.trunk_out.back();
}

Eigen::VectorXd forward(const DenseNetwork& net, const std::vector<Eigen::VectorXd>& inputs) {
  std::vector<Eigen::MatrixXd> batch(inputs.begin(), inputs.end());
  return forward(net, std::span<const Eigen::MatrixXd>(batch)).col(0);
}

Gradients backward(const DenseNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& upstream,
                   bool parameter_gradients) {
  if (!cache.valid || cache.trunk_out.size() != net.trunk().size() ||
      cache.branch_out.size() != net.branches().size()) {
    throw Error("backward: no forward cache for this network");
  }
  if (upstream.rows() != net.output_width() || upstream.cols() != cache.trunk_out.back().cols()) {
    throw DimensionError("backward: upstream gradient shape does not match network output");
  }
  Gradients g;
  g.trunk.resize(net.trunk().size());
  Eigen::MatrixXd grad = upstream;
  for (std::size_t k = net.trunk().size(); k-- > 0;) {
    const Eigen::MatrixXd& layer_input = k == 0 ? cache.concat : cache.trunk_out[k - 1];
    Eigen::MatrixXd next;
    g.trunk[k] = layer_backward(net.trunk()[k], cache.trunk_pre[k], cache.trunk_out[k], layer_input, grad,
                                parameter_gradients, &next);
    grad = std::move(next);
  }
  if (net.branches().empty()) {
    g.inputs.push_back(std::move(grad));
    return g;
  }
  g.branches.resize(net.branches().size());
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < net.branches().size(); ++i) {
    const auto& b = net.branches()[i];
    Eigen::MatrixXd in_grad;
    g.branches[i] = layer_backward(b, cache.branch_pre[i], cache.branch_out[i], cache.inputs[i],
                                   grad.middleRows(row, b.out_size()), parameter_gradients, &in_grad);
    g.inputs.push_back(std::move(in_grad));
    row += b.out_size();
  }
  return g;
}

double bce_loss(double prediction, double target) {
  const double p = std::clamp(prediction, kBceClamp, 1.0 - kBceClamp);
  return -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
}

double bce_mean(const Eigen::MatrixXd& predictions, double target, Eigen::MatrixXd* grad) {
  const auto n = static_cast<double>(predictions.size());
  double total = 0.0;
  if (grad) grad->resize(predictions.rows(), predictions.cols());
  for (Eigen::Index c = 0; c < predictions.cols(); ++c) {
    for (Eigen::Index r = 0; r < predictions.rows(); ++r) {
      const double p = std::clamp(predictions(r, c), kBceClamp, 1.0 - kBceClamp);
      total += bce_loss(p, target);
      if (grad) (*grad)(r, c) = (-target / p + (1.0 - target) / (1.0 - p)) / n;
    }
  }
  return total / n;
}

AdamState AdamState::create(std::size_t parameter_count, double learning_rate, double decay) {
  if (!(learning_rate > 0.0)) throw ValidationError("adam: learning rate must be > 0");
  if (!(decay >= 0.0)) throw ValidationError("adam: decay must be >= 0");
  AdamState s;
  s.first_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count));
  s.second_moment = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(parameter_count));
  s.learning_rate = learning_rate;
  s.decay = decay;
  return s;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
  const auto n = params.size();
  if (grads.size() != n || static_cast<std::size_t>(state.first_moment.size()) != n ||
      static_cast<std::size_t>(state.second_moment.size()) != n) {
    throw DimensionError("adam_step: parameter, gradient and moment sizes disagree");
  }
  if (state.step_count < 0) throw ValidationError("adam_step: negative step count");
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericalError("adam_step: non-finite gradient at parameter " + std::to_string(i) +
                           " (step " + std::to_string(state.step_count) + ")");
    }
  }
  const double lr = state.effective_learning_rate();
  const auto t = static_cast<double>(state.step_count + 1);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    double& m = state.first_moment(k);
    double& v = state.second_moment(k);
    m = state.beta1 * m + (1.0 - state.beta1) * grads[i];
    v = state.beta2 * v + (1.0 - state.beta2) * grads[i] * grads[i];
    params[i] -= lr * (m / c1) / (std::sqrt(v / c2) + state.epsilon);
    if (!std::isfinite(params[i])) throw NumericalError("adam_step: parameter became non-finite");
  }
  ++state.step_count;
}

void adam_step(DenseNetwork& net, const Gradients& grads, AdamState& state) {
  auto params = net.flatten_parameters();
  const auto flat = grads.flatten_parameters();
  adam_step(std::span<double>(params), std::span<const double>(flat), state);
  net.assign_parameters(params);
}

std::vector<double> analytic_gradient(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs) {
  ForwardCache cache;
  const Eigen::MatrixXd out = forward(net, inputs, cache);
  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(out.rows(), out.cols());
  return backward(net, cache, ones).flatten_parameters();
}

std::vector<double> numeric_gradient(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs, double h) {
  if (!(h > 0.0 && h <= 1e-3)) throw ValidationError("numeric_gradient: h must lie in (0, 1e-3]");
  DenseNetwork work = net;
  const auto n = work.parameter_count();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double* p = parameter_ptr(work, k);
    const double saved = *p;
    *p = saved + h;
    const double up = forward(work, inputs).sum();
    *p = saved - h;
    const double down = forward(work, inputs).sum();
    *p = saved;
    out[k] = (up - down) / (2.0 * h);
  }
  return out;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw DimensionError("max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max(std::abs(numeric[i]), 1e-6);
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

double gradient_check(const DenseNetwork& net, std::span<const Eigen::MatrixXd> inputs, double h) {
  const auto a = analytic_gradient(net, inputs);
  const auto n = numeric_gradient(net, inputs, h);
  return max_relative_error(a, n);
}

void write_network(std::ostream& out, const DenseNetwork& net) {
  out << "dense_network v1\n";
  out << "branches " << net.branches().size() << '\n';
  out << "trunk " << net.trunk().size() << '\n';
  auto header = [&](const DenseLayer& l) {
    out << "layer " << l.in_size() << ' ' << l.out_size() << ' ' << to_string(l.activation) << '\n';
  };
  for (const auto& l : net.branches()) header(l);
  for (const auto& l : net.trunk()) header(l);
  auto block = [&](const DenseLayer& l) {
    out << "weights\n";
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out << (c ? " " : "") << format_double(l.weights(r, c));
      out << '\n';
    }
    out << "biases\n";
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) out << (r ? " " : "") << format_double(l.biases(r));
    out << '\n';
  };
  for (const auto& l : net.branches()) block(l);
  for (const auto& l : net.trunk()) block(l);
}

namespace {

std::string next_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) return std::string(trim(line));
  }
  throw ParseError("network: unexpected end of input");
}

std::vector<std::string> words(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> out;
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

std::size_t keyed_count(std::istream& in, const std::string& key) {
  const auto w = words(next_line(in));
  if (w.size() != 2 || w[0] != key) throw ParseError("network: expected '" + key + " <n>'");
  return static_cast<std::size_t>(parse_int(w[1]));
}

}  // namespace

DenseNetwork read_network(std::istream& in) {
  if (next_line(in) != "dense_network v1") throw ParseError("network: bad header");
  const auto nb = keyed_count(in, "branches");
  const auto nt = keyed_count(in, "trunk");
  std::vector<DenseLayer> layers(nb + nt);
  for (auto& l : layers) {
    const auto w = words(next_line(in));
    if (w.size() != 4 || w[0] != "layer") throw ParseError("network: expected 'layer <in> <out> <activation>'");
    const auto rows = parse_int(w[2]);
    const auto cols = parse_int(w[1]);
    if (rows < 1 || cols < 1) throw ParseError("network: layer sizes must be positive");
    l.weights.resize(rows, cols);
    l.biases.resize(rows);
    l.activation = parse_activation(w[3]);
  }
  for (auto& l : layers) {
    if (next_line(in) != "weights") throw ParseError("network: expected 'weights'");
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      const auto w = words(next_line(in));
      if (static_cast<Eigen::Index>(w.size()) != l.weights.cols()) throw ParseError("network: weight row length mismatch");
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = parse_double(w[static_cast<std::size_t>(c)]);
    }
    if (next_line(in) != "biases") throw ParseError("network: expected 'biases'");
    const auto w = words(next_line(in));
    if (static_cast<Eigen::Index>(w.size()) != l.biases.size()) throw ParseError("network: bias length mismatch");
    for (Eigen::Index r = 0; r < l.biases.size(); ++r) l.biases(r) = parse_double(w[static_cast<std::size_t>(r)]);
  }
  std::vector<DenseLayer> branches(layers.begin(), layers.begin() + static_cast<std::ptrdiff_t>(nb));
  std::vector<DenseLayer> trunk(layers.begin() + static_cast<std::ptrdiff_t>(nb), layers.end());
  return DenseNetwork(std::move(branches), std::move(trunk));
}

}  // namespace crashgan::nn
