#include "crashgan/cgan.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "crashgan/error.hpp"
#include "crashgan/format.hpp"

namespace crashgan::cgan {

namespace {

using nn::Activation;
using nn::DenseLayer;

constexpr Eigen::Index kBranchWidth = 100;
constexpr Eigen::Index kTrunkWidth = 50;

Eigen::MatrixXd counts_row(std::span<const CrashCount> counts) {
  Eigen::MatrixXd y(1, static_cast<Eigen::Index>(counts.size()));
  for (std::size_t i = 0; i < counts.size(); ++i) y(0, static_cast<Eigen::Index>(i)) = static_cast<double>(counts[i]);
  return y;
}

Eigen::MatrixXd noise(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Eigen::MatrixXd z(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) z(r, c) = standard_normal(rng);
  return z;
}

// Mean BCE over columns with per-column targets; fills dMean/dp.
double bce_targets(const Eigen::MatrixXd& p, const Eigen::RowVectorXd& targets, Eigen::MatrixXd& grad) {
  const auto n = static_cast<double>(p.cols());
  grad.resize(1, p.cols());
  double total = 0.0;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    const double q = std::clamp(p(0, c), nn::kBceClamp, 1.0 - nn::kBceClamp);
    const double t = targets(c);
    total += nn::bce_loss(q, t);
    grad(0, c) = (-t / q + (1.0 - t) / (1.0 - q)) / n;
  }
  return total / n;
}

std::string feature_line(const std::string& name, bool log, double lo, double hi) {
  return "feature " + name + ' ' + (log ? "log" : "linear") + ' ' + format_double(lo) + ' ' + format_double(hi);
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw ValidationError("epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("batch size must be > 0");
  if (!(lr_g > 0.0) || !(lr_d > 0.0)) throw ValidationError("learning rates must be > 0");
  if (!(decay_g >= 0.0) || !(decay_d >= 0.0)) throw ValidationError("learning rate decays must be >= 0");
}

NormalizationStats NormalizationStats::fit(const Eigen::MatrixXd& features, std::vector<bool> log_features) {
  if (features.rows() == 0) throw ValidationError("normalize: empty dataset");
  if (log_features.empty()) log_features.assign(static_cast<std::size_t>(features.cols()), false);
  if (log_features.size() != static_cast<std::size_t>(features.cols())) {
    throw DimensionError("normalize: one log flag per feature required");
  }
  NormalizationStats s;
  s.log_features = std::move(log_features);
  s.min.resize(features.cols());
  s.max.resize(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    double lo = INFINITY, hi = -INFINITY;
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      double v = features(i, j);
      if (s.log_features[static_cast<std::size_t>(j)]) {
        if (!(v > 0.0)) throw ValidationError("normalize: log-transformed feature has a non-positive value");
        v = std::log(v);
      }
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    s.min(j) = lo;
    s.max(j) = hi;
  }
  return s;
}

Eigen::MatrixXd NormalizationStats::normalize(const Eigen::MatrixXd& features) const {
  if (features.cols() != min.size()) throw DimensionError("normalize: feature count mismatch");
  Eigen::MatrixXd out(features.rows(), features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double range = max(j) - min(j);
    const bool log = log_features[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
      const double v = log ? std::log(features(i, j)) : features(i, j);
      out(i, j) = range > 0.0 ? (v - min(j)) / range : 0.0;
    }
  }
  return out;
}

Eigen::MatrixXd NormalizationStats::denormalize(const Eigen::MatrixXd& normalized) const {
  if (normalized.cols() != min.size()) throw DimensionError("denormalize: feature count mismatch");
  Eigen::MatrixXd out(normalized.rows(), normalized.cols());
  for (Eigen::Index j = 0; j < normalized.cols(); ++j) {
    const double range = max(j) - min(j);
    const bool log = log_features[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < normalized.rows(); ++i) {
      const double v = min(j) + normalized(i, j) * range;
      out(i, j) = log ? std::exp(v) : v;
    }
  }
  return out;
}

NormalizedData normalize(const Dataset& data, const NormalizationStats* stats) {
  if (data.empty()) throw ValidationError("normalize: empty dataset");
  NormalizedData out;
  out.stats = stats ? *stats : NormalizationStats::fit(data.features);
  out.features = out.stats.normalize(data.features);
  return out;
}

nn::DenseNetwork build_generator(int feature_count, Rng& rng) {
  if (feature_count < 1) throw ValidationError("generator: feature count must be >= 1");
  const Eigen::Index fs = feature_count;
  std::vector<DenseLayer> branches{
      DenseLayer::glorot(1, kBranchWidth, Activation::ELU, rng),   // crash count
      DenseLayer::glorot(fs, kBranchWidth, Activation::ELU, rng),  // noise
  };
  std::vector<DenseLayer> trunk{
      DenseLayer::glorot(2 * kBranchWidth, kTrunkWidth, Activation::ELU, rng),
      DenseLayer::glorot(kTrunkWidth, kTrunkWidth, Activation::ELU, rng),
      DenseLayer::glorot(kTrunkWidth, kTrunkWidth, Activation::ELU, rng),
      DenseLayer::glorot(kTrunkWidth, fs, Activation::ReLU, rng),
  };
  return nn::DenseNetwork(std::move(branches), std::move(trunk));
}

nn::DenseNetwork build_discriminator(int feature_count, Rng& rng) {
  if (feature_count < 1) throw ValidationError("discriminator: feature count must be >= 1");
  const Eigen::Index fs = feature_count;
  std::vector<DenseLayer> branches{
      DenseLayer::glorot(fs, kBranchWidth, Activation::ELU, rng),  // features
      DenseLayer::glorot(1, kBranchWidth, Activation::ELU, rng),   // crash count
  };
  std::vector<DenseLayer> trunk{
      DenseLayer::glorot(2 * kBranchWidth, kTrunkWidth, Activation::ELU, rng),
      DenseLayer::glorot(kTrunkWidth, kTrunkWidth, Activation::ELU, rng),
      DenseLayer::glorot(kTrunkWidth, 1, Activation::Sigmoid, rng),
  };
  return nn::DenseNetwork(std::move(branches), std::move(trunk));
}

CganModel init_cgan(const Dataset& data, const TrainConfig& config, const std::vector<bool>& log_features) {
  config.validate();
  data.validate();
  if (data.empty()) throw ValidationError("train_cgan: empty dataset");
  if (data.feature_count() < 1) throw ValidationError("train_cgan: dataset has no features");
  CganModel m;
  m.feature_names = data.feature_names;
  m.norm = NormalizationStats::fit(data.features, log_features);
  m.empirical_counts = data.counts;
  const int fs = static_cast<int>(data.feature_count());
  Rng g_rng = make_rng(config.seed, "generator_init");
  Rng d_rng = make_rng(config.seed, "discriminator_init");
  m.generator = build_generator(fs, g_rng);
  m.discriminator = build_discriminator(fs, d_rng);
  return m;
}

CganModel train_cgan(const Dataset& data, const TrainConfig& config, const std::vector<bool>& log_features) {
  CganModel m = init_cgan(data, config, log_features);
  const Eigen::MatrixXd x_all = m.norm.normalize(data.features).transpose();  // FS x n
  const auto n = static_cast<std::size_t>(x_all.cols());
  const auto fs = x_all.rows();
  const auto batch = std::min<std::size_t>(n, static_cast<std::size_t>(config.batch_size));

  // Learning-rate decay runs on the epoch index, set per epoch below.
  auto adam_g = nn::AdamState::create(m.generator.parameter_count(), config.lr_g);
  auto adam_d = nn::AdamState::create(m.discriminator.parameter_count(), config.lr_d);
  Rng rng = make_rng(config.seed, "training");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  // One D step then one G step on rows order[first, first + size).
  auto step = [&](std::size_t first, std::size_t size) -> EpochLoss {
    const auto b = static_cast<Eigen::Index>(size);
    Eigen::MatrixXd x_real(fs, b), y_batch(1, b);
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto src = order[first + static_cast<std::size_t>(i)];
      x_real.col(i) = x_all.col(static_cast<Eigen::Index>(src));
      y_batch(0, i) = static_cast<double>(data.counts[src]);
    }

    // Discriminator: real and generated halves as one batch.
    const std::array<Eigen::MatrixXd, 2> g_in{y_batch, noise(fs, b, rng)};
    const Eigen::MatrixXd x_fake = nn::forward(m.generator, g_in);
    Eigen::MatrixXd d_x(fs, 2 * b), d_y(1, 2 * b);
    d_x << x_real, x_fake;
    d_y << y_batch, y_batch;
    Eigen::RowVectorXd targets(2 * b);
    targets.head(b).setOnes();
    targets.tail(b).setZero();
    const std::array<Eigen::MatrixXd, 2> d_in{d_x, d_y};
    nn::ForwardCache d_cache;
    const Eigen::MatrixXd p = nn::forward(m.discriminator, d_in, d_cache);
    Eigen::MatrixXd grad_p;
    const double loss_d = bce_targets(p, targets, grad_p);
    if (!std::isfinite(loss_d)) throw NumericalError("non-finite discriminator loss");
    nn::adam_step(m.discriminator, nn::backward(m.discriminator, d_cache, grad_p), adam_d);

    // Generator through the frozen discriminator, fresh noise.
    const std::array<Eigen::MatrixXd, 2> g_in2{y_batch, noise(fs, b, rng)};
    nn::ForwardCache g_cache;
    const Eigen::MatrixXd x_gen = nn::forward(m.generator, g_in2, g_cache);
    const std::array<Eigen::MatrixXd, 2> d_in2{x_gen, y_batch};
    nn::ForwardCache d_cache2;
    const Eigen::MatrixXd p_gen = nn::forward(m.discriminator, d_in2, d_cache2);
    Eigen::MatrixXd grad_gen;
    const double loss_g = nn::bce_mean(p_gen, 1.0, &grad_gen);
    if (!std::isfinite(loss_g)) throw NumericalError("non-finite generator loss");
    const auto d_grads = nn::backward(m.discriminator, d_cache2, grad_gen, false);
    nn::adam_step(m.generator, nn::backward(m.generator, g_cache, d_grads.inputs[0]), adam_g);
    return {loss_d, loss_g};
  };

  m.history.reserve(static_cast<std::size_t>(config.epochs));
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // One batch per epoch: the first `batch` slots of a partial shuffle, or
    // every row when the dataset is no larger than a batch.
    if (batch < n) {
      for (std::size_t i = 0; i < batch; ++i) std::swap(order[i], order[i + static_cast<std::size_t>(rng() % (n - i))]);
    }
    adam_g.learning_rate = config.lr_g / (1.0 + config.decay_g * static_cast<double>(epoch));
    adam_d.learning_rate = config.lr_d / (1.0 + config.decay_d * static_cast<double>(epoch));
    try {
      m.history.push_back(step(0, batch));
    } catch (const NumericalError& e) {
      throw NumericalError("train_cgan: epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  return m;
}

Dataset synthesize(const CganModel& model, std::size_t n, Rng& rng) {
  if (model.empirical_counts.empty()) throw ValidationError("synthesize: model has no empirical counts");
  const auto fs = static_cast<Eigen::Index>(model.feature_count());
  const auto cols = static_cast<Eigen::Index>(n);
  Dataset out;
  out.feature_names = model.feature_names;
  out.counts.resize(n);
  out.synthetic.assign(n, 1);
  if (n == 0) {
    out.features.resize(0, fs);
    return out;
  }
  const auto pool = static_cast<std::uint64_t>(model.empirical_counts.size());
  for (std::size_t i = 0; i < n; ++i) out.counts[i] = model.empirical_counts[static_cast<std::size_t>(rng() % pool)];
  const std::array<Eigen::MatrixXd, 2> in{counts_row(out.counts), noise(fs, cols, rng)};
  const Eigen::MatrixXd generated = nn::forward(model.generator, in).cwiseMax(0.0).cwiseMin(1.0);
  out.features = model.norm.denormalize(generated.transpose());
  // min + t * (max - min) and exp(log x) can land an ulp outside the box
  for (Eigen::Index j = 0; j < fs; ++j) {
    const bool log = model.norm.log_features[static_cast<std::size_t>(j)];
    const double lo = log ? std::exp(model.norm.min(j)) : model.norm.min(j);
    const double hi = log ? std::exp(model.norm.max(j)) : model.norm.max(j);
    out.features.col(j) = out.features.col(j).cwiseMax(lo).cwiseMin(hi);
  }
  return out;
}

Dataset synthesize(const CganModel& model, std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "synthesize");
  return synthesize(model, n, rng);
}

Eigen::VectorXd discriminate(const CganModel& model, const Dataset& data) {
  if (data.feature_names.size() != model.feature_count()) throw DimensionError("discriminate: feature count mismatch");
  if (data.empty()) return Eigen::VectorXd();
  const std::array<Eigen::MatrixXd, 2> in{model.norm.normalize(data.features).transpose(), counts_row(data.counts)};
  return nn::forward(model.discriminator, in).row(0).transpose();
}

double discriminator_accuracy(const CganModel& model, const Dataset& real, const Dataset& generated) {
  const auto total = real.rows() + generated.rows();
  if (total == 0) throw ValidationError("discriminator_accuracy: no rows");
  const Eigen::VectorXd pr = discriminate(model, real);
  const Eigen::VectorXd pg = discriminate(model, generated);
  std::size_t correct = 0;
  for (Eigen::Index i = 0; i < pr.size(); ++i) correct += pr(i) > 0.5;
  for (Eigen::Index i = 0; i < pg.size(); ++i) correct += pg(i) < 0.5;
  return static_cast<double>(correct) / static_cast<double>(total);
}

void write_model(std::ostream& out, const CganModel& model) {
  out << "cgan v1\n";
  out << "features " << model.feature_count() << '\n';
  for (std::size_t j = 0; j < model.feature_count(); ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    out << feature_line(model.feature_names[j], model.norm.log_features[j], model.norm.min(k), model.norm.max(k)) << '\n';
  }
  out << "counts " << model.empirical_counts.size() << '\n';
  for (std::size_t i = 0; i < model.empirical_counts.size(); ++i) out << (i ? " " : "") << model.empirical_counts[i];
  out << '\n';
  out << "generator\n";
  nn::write_network(out, model.generator);
  out << "discriminator\n";
  nn::write_network(out, model.discriminator);
}

CganModel read_model(std::istream& in) {
  auto next = [&in]() {
    std::string line;
    while (std::getline(in, line)) {
      if (!trim(line).empty()) return std::string(trim(line));
    }
    throw ParseError("cgan model: unexpected end of input");
  };
  auto words = [](const std::string& line) {
    std::istringstream ss(line);
    std::vector<std::string> w;
    for (std::string s; ss >> s;) w.push_back(s);
    return w;
  };
  if (next() != "cgan v1") throw ParseError("cgan model: bad header");
  CganModel m;
  auto w = words(next());
  if (w.size() != 2 || w[0] != "features") throw ParseError("cgan model: expected 'features <n>'");
  const auto fs = parse_int(w[1]);
  if (fs < 1) throw ParseError("cgan model: feature count must be >= 1");
  m.norm.min.resize(fs);
  m.norm.max.resize(fs);
  for (long long j = 0; j < fs; ++j) {
    w = words(next());
    if (w.size() != 5 || w[0] != "feature" || (w[2] != "log" && w[2] != "linear")) {
      throw ParseError("cgan model: expected 'feature <name> log|linear <min> <max>'");
    }
    m.feature_names.push_back(w[1]);
    m.norm.log_features.push_back(w[2] == "log");
    m.norm.min(j) = parse_double(w[3]);
    m.norm.max(j) = parse_double(w[4]);
    if (!(m.norm.max(j) >= m.norm.min(j))) throw ParseError("cgan model: feature max < min");
  }
  w = words(next());
  if (w.size() != 2 || w[0] != "counts") throw ParseError("cgan model: expected 'counts <n>'");
  const auto nc = parse_int(w[1]);
  if (nc < 1) throw ParseError("cgan model: empirical counts must be non-empty");
  w = words(next());
  if (static_cast<long long>(w.size()) != nc) throw ParseError("cgan model: count list length mismatch");
  for (const auto& s : w) {
    const auto y = parse_int(s);
    if (y < 0) throw ParseError("cgan model: negative count");
    m.empirical_counts.push_back(y);
  }
  if (next() != "generator") throw ParseError("cgan model: expected 'generator'");
  m.generator = nn::read_network(in);
  if (next() != "discriminator") throw ParseError("cgan model: expected 'discriminator'");
  m.discriminator = nn::read_network(in);
  if (m.generator.output_width() != fs || m.discriminator.output_width() != 1 ||
      m.discriminator.input_width(0) != fs) {
    throw ParseError("cgan model: network shapes do not match the feature count");
  }
  return m;
}

void write_model(const std::filesystem::path& path, const CganModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  write_model(out, model);
}

CganModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open model '" + path.string() + "'");
  return read_model(in);
}

void write_history(std::ostream& out, const CganModel& model) {
  out << "epoch,loss_d,loss_g\n";
  for (std::size_t e = 0; e < model.history.size(); ++e) {
    out << e << ',' << format_double(model.history[e].discriminator) << ','
        << format_double(model.history[e].generator) << '\n';
  }
}

}  // namespace crashgan::cgan
