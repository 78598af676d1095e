// crashgan command-line tool.

#include <CLI11.hpp>
#include "json.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "crashgan/cgan.hpp"
#include "crashgan/dataset.hpp"
#include "crashgan/error.hpp"
#include "crashgan/evaluate.hpp"
#include "crashgan/format.hpp"
#include "crashgan/random.hpp"
#include "crashgan/simulate.hpp"
#include "crashgan/spf.hpp"
#include "settings.hpp"

#ifndef CRASHGAN_DATA_DIR
#define CRASHGAN_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace crashgan;
using crashgan::cli::Settings;

namespace {

// ---- plumbing ---------------------------------------------------------------

struct Flags {
  std::vector<std::tuple<CLI::Option*, std::string, std::shared_ptr<std::string>>> items;

  CLI::Option* add(CLI::App* app, const std::string& name, const std::string& key, const std::string& help) {
    auto value = std::make_shared<std::string>();
    auto* opt = app->add_option(name, *value, help);
    items.emplace_back(opt, key, value);
    return opt;
  }

  void apply(Settings& s) const {
    for (const auto& [opt, key, value] : items) {
      if (opt->count() > 0) s.flag(key, *value);
    }
  }
};

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::trunc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::out | mode);
  if (!out) throw ValidationError("cannot write '" + path.string() + "'");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

std::ifstream open_in(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + what + " '" + path.string() + "'");
  return in;
}

void write_manifest(const fs::path& dir, const std::string& command, const std::vector<std::string>& files,
                    const Settings& s) {
  nlohmann::json m;
  m["command"] = command;
  m["created_utc"] = timestamp_utc();
  m["files"] = files;
  m["config_file"] = "resolved_config.ini";
  write_text(dir / "resolved_config.ini", s.ini());
  write_text(dir / "manifest.json", m.dump(2) + "\n");
}

// Resolved config beside a single-file output.
void write_sidecar(const fs::path& output, const Settings& s) {
  write_text(fs::path(output.string() + ".config.ini"), s.ini());
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(precision) << v;
  return out.str();
}

std::uint64_t seed_of(const Settings& s) {
  const auto v = s.integer("run.seed");
  if (v < 0) throw ValidationError("seed must be >= 0");
  return static_cast<std::uint64_t>(v);
}

void declare_run(Settings& s) {
  s.declare("run.seed", "0");
}

void declare_simulation(Settings& s) {
  s.declare("simulation.beta0", "0.5");
  s.declare("simulation.coefficients", "0.5,-0.5,1,-1");
  s.declare("simulation.dispersion", "0.5");
  s.declare("simulation.sample_size", "100");
}

void declare_train(Settings& s) {
  const cgan::TrainConfig d;
  s.declare("train.epochs", std::to_string(d.epochs));
  s.declare("train.batch_size", std::to_string(d.batch_size));
  s.declare("train.lr_g", format_double(d.lr_g));
  s.declare("train.lr_d", format_double(d.lr_d));
  s.declare("train.decay_g", format_double(d.decay_g));
  s.declare("train.decay_d", format_double(d.decay_d));
}

void add_train_flags(CLI::App* app, Flags& f) {
  f.add(app, "--epochs", "train.epochs", "training epochs");
  f.add(app, "--batch-size", "train.batch_size", "rows per batch");
  f.add(app, "--lr-g", "train.lr_g", "generator learning rate");
  f.add(app, "--lr-d", "train.lr_d", "discriminator learning rate");
  f.add(app, "--decay-g", "train.decay_g", "generator learning-rate decay");
  f.add(app, "--decay-d", "train.decay_d", "discriminator learning-rate decay");
}

simulate::SimConfig sim_config(const Settings& s) {
  simulate::SimConfig c;
  c.beta0 = s.num("simulation.beta0");
  c.coefficients = s.nums("simulation.coefficients");
  c.dispersion = s.num("simulation.dispersion");
  const auto n = s.integer("simulation.sample_size");
  if (n < 1) throw ValidationError("sample size must be >= 1");
  c.sample_size = static_cast<std::size_t>(n);
  c.seed = seed_of(s);
  c.validate();
  return c;
}

cgan::TrainConfig train_config(const Settings& s, std::uint64_t seed) {
  cgan::TrainConfig t;
  const auto epochs = s.integer("train.epochs");
  const auto batch = s.integer("train.batch_size");
  if (epochs < 0 || epochs > 100'000'000) throw ValidationError("epochs must be in [0, 1e8]");
  if (batch < 1 || batch > 100'000'000) throw ValidationError("batch size must be in [1, 1e8]");
  t.epochs = static_cast<int>(epochs);
  t.batch_size = static_cast<int>(batch);
  t.lr_g = s.num("train.lr_g");
  t.lr_d = s.num("train.lr_d");
  t.decay_g = s.num("train.decay_g");
  t.decay_d = s.num("train.decay_d");
  t.seed = seed;
  t.validate();
  return t;
}

std::vector<bool> log_flags_for(const std::vector<std::string>& features, const std::vector<std::string>& logged) {
  std::vector<bool> flags(features.size(), false);
  for (const auto& name : logged) {
    const auto it = std::find(features.begin(), features.end(), name);
    if (it == features.end()) throw ValidationError("log feature '" + name + "' is not a dataset feature");
    flags[static_cast<std::size_t>(it - features.begin())] = true;
  }
  return flags;
}

std::string replication_file(std::size_t i) {
  std::ostringstream out;
  out << "replication_" << std::setw(4) << std::setfill('0') << i << ".csv";
  return out.str();
}

// ---- simulate ---------------------------------------------------------------

int cmd_simulate(const Settings& s, const fs::path& out, bool suite, std::size_t intersections) {
  const auto seed = seed_of(s);
  std::vector<std::string> files;
  if (intersections > 0) {
    const auto d = simulate::gen_intersection_standin(intersections, seed);
    fs::create_directories(out);
    write_csv(out / "intersections.csv", d);
    files.push_back("intersections.csv");
  } else {
    const auto c = sim_config(s);
    const auto reps = s.count("simulation.replications");
    if (reps < 1) throw ValidationError("replications must be >= 1");
    const auto x = simulate::gen_experiment_suite(c, reps, reps);
    fs::create_directories(out);
    if (suite) {
      fs::create_directories(out / "ns_test");
      fs::create_directories(out / "prediction_test");
    }
    if (suite) {
      write_csv(out / "cgan_train.csv", x.cgan_train.data);
      files.push_back("cgan_train.csv");
      for (std::size_t i = 0; i < reps; ++i) {
        for (const auto& [dir, sets] : {std::pair{"ns_test", &x.ns_test}, std::pair{"prediction_test", &x.prediction_test}}) {
          const auto rel = fs::path(dir) / replication_file(i);
          write_csv(out / rel, (*sets)[i].data);
          files.push_back(rel.generic_string());
        }
      }
    } else {
      for (std::size_t i = 0; i < reps; ++i) {
        write_csv(out / replication_file(i), x.ns_test[i].data);
        files.push_back(replication_file(i));
      }
    }
  }
  write_manifest(out, "simulate", files, s);
  std::cout << "wrote " << files.size() << " dataset file(s) to " << out.string() << "\n";
  return 0;
}

// ---- train / augment --------------------------------------------------------

int cmd_train(const Settings& s, const fs::path& data_path, const fs::path& out, fs::path history) {
  const auto data = read_csv(data_path);
  const auto t = train_config(s, seed_of(s));
  const auto flags = log_flags_for(data.feature_names, s.names("train.log_features"));
  const auto model = cgan::train_cgan(data, t, flags);
  cgan::write_model(out, model);
  if (history.empty()) history = fs::path(out.string() + ".history.csv");
  {
    auto h = open_out(history);
    cgan::write_history(h, model);
  }
  write_sidecar(out, s);
  std::cout << "trained " << t.epochs << " epoch(s) on " << data.rows() << " rows";
  if (!model.history.empty()) {
    std::cout << "; final Loss(D) " << fmt(model.history.back().discriminator) << ", Loss(G) "
              << fmt(model.history.back().generator);
  }
  std::cout << "\n";
  return 0;
}

int cmd_augment(const Settings& s, const fs::path& model_path, const fs::path& out) {
  const auto model = cgan::read_model(model_path);
  const auto n = s.count("augment.rows");
  const auto synthetic = cgan::synthesize(model, n, seed_of(s));
  write_csv(out, synthetic);
  write_sidecar(out, s);
  std::cout << "wrote " << n << " synthetic row(s) to " << out.string() << "\n";
  return 0;
}

// ---- fit / screen -----------------------------------------------------------

void print_coefficients(const spf::SpfModel& m) {
  std::cout << std::left << std::setw(24) << "coefficient" << std::right << std::setw(12) << "estimate"
            << std::setw(12) << "std.err" << std::setw(12) << "p-value" << "\n";
  for (const auto& t : spf::coefficient_significance(m)) {
    std::cout << std::left << std::setw(24) << t.name << std::right << std::setw(12) << fmt(t.estimate)
              << std::setw(12) << fmt(t.std_error) << std::setw(12) << (t.defined ? fmt(t.p_value) : "n/a") << "\n";
  }
  std::cout << "dispersion " << fmt(m.dispersion) << "\n";
}

int cmd_fit(const Settings& s, const fs::path& data_path, const fs::path& out) {
  const auto data = read_csv(data_path);
  spf::Formula f;
  f.features = s.names("spf.features");
  if (f.features.empty()) f.features = data.feature_names;
  const auto logged = s.names("spf.log_features");
  f.log_flags.assign(f.features.size(), false);
  for (const auto& name : logged) {
    const auto it = std::find(f.features.begin(), f.features.end(), name);
    if (it == f.features.end()) throw ValidationError("log feature '" + name + "' is not in the formula");
    f.log_flags[static_cast<std::size_t>(it - f.features.begin())] = true;
  }
  const auto model = spf::fit_spf(data, f);
  {
    auto o = open_out(out);
    spf::write_spf(o, model);
  }
  write_sidecar(out, s);
  print_coefficients(model);
  return 0;
}

int cmd_screen(const Settings& s, const fs::path& data_path, const fs::path& model_path, const fs::path& out) {
  const auto data = read_csv(data_path);
  auto in = open_in(model_path, "SPF model");
  const auto model = spf::read_spf(in);
  const auto weighting = spf::parse_eb_weighting(s.str("spf.eb_weighting"));
  auto k = s.count("screen.top_k");
  if (k > data.rows()) {
    throw ValidationError("top-k " + std::to_string(k) + " exceeds the site count " + std::to_string(data.rows()));
  }
  if (k == 0) k = data.rows();
  const auto eb = spf::eb_estimates(model, data, weighting);
  std::vector<double> scores(eb.size());
  for (std::size_t i = 0; i < eb.size(); ++i) scores[i] = eb[i].eb;
  const auto ranking = evaluate::HotspotRanking::from_scores(scores, evaluate::ScoreSource::EbEstimate);
  auto o = open_out(out);
  o << "rank,site_id,mu,observed,eb,weight\n";
  for (std::size_t r = 0; r < k; ++r) {
    const auto& e = eb[ranking.order[r]];
    o << r + 1 << ',' << e.site_id << ',' << format_double(e.mu) << ',' << e.observed << ',' << format_double(e.eb)
      << ',' << format_double(e.weight) << '\n';
  }
  write_sidecar(out, s);
  std::cout << "ranked " << data.rows() << " site(s); wrote top " << k << " to " << out.string() << "\n";
  return 0;
}

// ---- experiment / report ----------------------------------------------------

void print_table(const std::vector<evaluate::ExperimentCell>& cells) {
  std::cout << "improvement % (Augmented vs Base), paired t-test p in brackets\n";
  std::cout << std::left << std::setw(12) << "dispersion" << std::setw(10) << "size";
  for (const char* h : {"FI", "PMD", "MAPE(crash)", "MAPE(EB)", "MAPE(disp)"}) std::cout << std::setw(22) << h;
  std::cout << "n/failed\n";
  const std::array<evaluate::Metric, 5> order{evaluate::Metric::FI, evaluate::Metric::PMD, evaluate::Metric::MapeCrash,
                                              evaluate::Metric::MapeEb, evaluate::Metric::MapeDispersion};
  for (const auto& c : cells) {
    const auto s = c.summarize();
    std::cout << std::left << std::setw(12) << format_double(c.dispersion) << std::setw(10) << c.synthetic_size;
    for (auto m : order) {
      const auto idx = static_cast<std::size_t>(
          std::find(evaluate::kAllMetrics.begin(), evaluate::kAllMetrics.end(), m) - evaluate::kAllMetrics.begin());
      std::cout << std::setw(22) << (fmt(s.improvement.get(m), 2) + " [" + fmt(s.paired[idx].p_value, 3) + "]");
    }
    std::cout << s.completed << "/" << s.failed << "\n";
  }
}

struct ExperimentPaths {
  fs::path out;
  bool dry_run = false;
  bool resume = false;
};

void write_summary(const fs::path& out, const std::vector<evaluate::ExperimentCell>& cells, const Settings& s) {
  nlohmann::json meta;
  meta["seed"] = seed_of(s);
  meta["mape_eb_target"] = "true Poisson mean of each screening site";
  meta["mape_crash_target"] = "true Poisson mean of each prediction-test site";
  meta["eb_weighting"] = s.str("spf.eb_weighting");
  meta["improvement"] = "(mean_base - mean_augmented) / mean_base * 100";
  write_text(out / "summary.json", evaluate::summary_json(cells, meta.dump()));
  auto lc = open_out(out / "long.csv");
  evaluate::write_long_csv(lc, cells);
}

int run_sim_experiment(const Settings& s, const ExperimentPaths& p) {
  const auto seed = seed_of(s);
  const auto dispersions = s.nums("experiment.dispersions");
  const auto sizes = s.counts("experiment.synthetic_sizes");
  const double scale = s.num("experiment.scale");
  if (!(scale > 0.0)) throw ValidationError("scale must be > 0");
  const auto reps = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(
                                                 static_cast<double>(s.count("experiment.replications")) * scale)));
  const auto workers = s.count("run.workers");
  if (dispersions.empty() || sizes.empty()) throw ValidationError("experiment needs dispersions and synthetic sizes");
  auto base_cfg = sim_config(s);
  for (double d : dispersions) {
    auto c = base_cfg;
    c.dispersion = d;
    c.validate();
  }
  const auto train = train_config(s, 0);
  const auto weighting = spf::parse_eb_weighting(s.str("spf.eb_weighting"));

  if (p.dry_run) {
    std::cout << "plan: simulation experiment\n"
              << "  dispersions: " << s.str("experiment.dispersions") << "\n"
              << "  synthetic sizes: " << s.str("experiment.synthetic_sizes") << "\n"
              << "  replications per dispersion: " << reps << " (scale " << format_double(scale) << ")\n"
              << "  CGAN trainings: " << dispersions.size() << " x " << train.epochs << " epochs\n"
              << "  SPF fits: " << dispersions.size() * reps * (1 + sizes.size()) << "\n"
              << "  workers: " << workers << "\n"
              << "  output: " << p.out.string() << " (report.csv, summary.json, long.csv, models/, manifest.json)\n\n"
              << s.ini();
    return 0;
  }

  fs::create_directories(p.out / "models");
  const auto report_path = p.out / "report.csv";
  std::vector<evaluate::ReportRow> previous;
  if (p.resume && fs::exists(report_path)) {
    std::string text;
    {
      auto in = open_in(report_path, "report");
      text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    const auto complete = text.rfind('\n');
    text = complete == std::string::npos ? std::string() : text.substr(0, complete + 1);
    std::istringstream in(text);
    previous = evaluate::read_report_csv(in);
    fs::resize_file(report_path, text.size());
  }
  if (previous.empty()) {
    auto o = open_out(report_path);
    evaluate::write_report_header(o);
  }
  std::set<std::tuple<double, std::size_t, std::size_t>> written;
  for (const auto& r : previous) written.emplace(r.dispersion, r.synthetic_size, r.result.replication);
  auto report = open_out(report_path, std::ios::app);

  std::vector<evaluate::ExperimentCell> cells;
  for (double d : dispersions) {
    const auto tag = format_double(d);
    auto c = base_cfg;
    c.dispersion = d;
    c.seed = derive_seed(seed, "suite/" + tag);
    const auto suite = simulate::gen_experiment_suite(c, reps, reps);

    const auto model_path = p.out / "models" / ("cgan_dispersion_" + tag + ".txt");
    cgan::CganModel model;
    if (p.resume && fs::exists(model_path)) {
      model = cgan::read_model(model_path);
    } else {
      auto t = train;
      t.seed = derive_seed(seed, "cgan/" + tag);
      std::cerr << "training CGAN for dispersion " << tag << " (" << t.epochs << " epochs)\n";
      model = cgan::train_cgan(suite.cgan_train.data, t);
      cgan::write_model(model_path, model);
      auto h = open_out(fs::path(model_path.string() + ".history.csv"));
      cgan::write_history(h, model);
    }

    evaluate::ExperimentOptions opt;
    opt.synthetic_sizes = sizes;
    opt.workers = workers;
    opt.seed = derive_seed(seed, "synthetic/" + tag);
    opt.weighting = weighting;
    for (const auto& r : previous) {
      if (r.dispersion == d) opt.completed[r.synthetic_size][r.result.replication] = r.result;
    }
    opt.on_replication = [&](std::size_t rep, const std::vector<evaluate::ReplicationResult>& results) {
      for (std::size_t k = 0; k < results.size(); ++k) {
        if (results[k].failed) {
          std::cerr << "replication " << rep << " (dispersion " << tag << ", size " << sizes[k]
                    << ") failed: " << results[k].error << "\n";
        }
        if (written.count({d, sizes[k], rep})) continue;
        evaluate::write_report_row(report, d, sizes[k], results[k]);
      }
      report.flush();
    };
    auto part = evaluate::run_simulation_experiment(suite, model, opt);
    cells.insert(cells.end(), part.begin(), part.end());
  }
  report.close();

  write_summary(p.out, cells, s);
  std::vector<std::string> files{"report.csv", "summary.json", "long.csv"};
  for (double d : dispersions) files.push_back("models/cgan_dispersion_" + format_double(d) + ".txt");
  write_manifest(p.out, "experiment", files, s);
  print_table(cells);
  return 0;
}

int run_real_experiment(const Settings& s, const ExperimentPaths& p) {
  const auto seed = seed_of(s);
  evaluate::RealWorldOptions opt;
  opt.synthetic_size = s.count("real.synthetic_size");
  opt.seed = seed;
  opt.train = train_config(s, derive_seed(seed, "cgan"));
  opt.features = s.names("real.features");
  opt.log_features = s.boolean("real.log_features");
  opt.zero_policy = s.boolean("real.exclude_zero_counts") ? evaluate::ZeroTruthPolicy::Exclude
                                                          : evaluate::ZeroTruthPolicy::Reject;
  const fs::path data_path = s.str("real.data");
  if (p.dry_run) {
    std::cout << "plan: real-data experiment\n"
              << "  data: " << data_path.string() << "\n"
              << "  50/50 split, CGAN " << opt.train.epochs << " epochs, " << opt.synthetic_size
              << " synthetic rows\n"
              << "  output: " << p.out.string() << " (realworld.json, synthetic.csv, base.spf, augmented.spf, cgan.txt)\n\n"
              << s.ini();
    return 0;
  }
  const auto data = read_csv(data_path);
  const auto rep = evaluate::run_realworld_experiment(data, opt);
  fs::create_directories(p.out);
  write_text(p.out / "realworld.json", evaluate::realworld_json(rep));
  write_csv(p.out / "synthetic.csv", rep.synthetic);
  {
    auto b = open_out(p.out / "base.spf");
    spf::write_spf(b, rep.base);
    auto a = open_out(p.out / "augmented.spf");
    spf::write_spf(a, rep.augmented);
  }
  cgan::write_model(p.out / "cgan.txt", rep.model);
  write_manifest(p.out, "experiment", {"realworld.json", "synthetic.csv", "base.spf", "augmented.spf", "cgan.txt"}, s);

  std::cout << "Base SPF\n";
  print_coefficients(rep.base);
  std::cout << "\nAugmented SPF\n";
  print_coefficients(rep.augmented);
  std::cout << "\nfeature tests (synthetic vs real): t / Levene / KS p-values\n";
  for (const auto& f : rep.feature_tests) {
    std::cout << "  " << f.feature << ": " << fmt(f.t.p_value, 3) << " / " << fmt(f.levene.p_value, 3) << " / "
              << fmt(f.ks.p_value, 3) << "\n";
  }
  std::cout << "\nMAPE on " << rep.scored_rows << " test site(s) (" << rep.mape_target << "): base "
            << fmt(rep.mape_base, 2) << "%, augmented " << fmt(rep.mape_augmented, 2) << "%\n";
  return 0;
}

int cmd_report(const fs::path& dir) {
  auto in = open_in(dir / "report.csv", "report");
  const auto cells = evaluate::cells_from_rows(evaluate::read_report_csv(in));
  if (cells.empty()) throw ValidationError("report.csv has no rows");
  write_text(dir / "summary.json", evaluate::summary_json(cells));
  auto lc = open_out(dir / "long.csv");
  evaluate::write_long_csv(lc, cells);
  print_table(cells);
  return 0;
}

void apply_preset(Settings& s, const std::string& name) {
  if (name.empty()) return;
  if (name == "paper-sim") {
    s.preset("experiment.mode", "sim");
    s.preset("experiment.dispersions", "0.5,1.5");
    s.preset("experiment.synthetic_sizes", "200,500,1000");
    s.preset("experiment.replications", "1000");
  } else if (name == "paper-real") {
    s.preset("experiment.mode", "real");
    s.preset("real.data", std::string(CRASHGAN_DATA_DIR) + "/standin_intersections.csv");
    s.preset("real.synthetic_size", "1000");
    s.preset("real.log_features", "true");
  } else {
    throw ValidationError("unknown preset '" + name + "' (expected paper-sim or paper-real)");
  }
}

std::string default_workers() {
  if (const char* env = std::getenv("CRASHGAN_WORKERS"); env && *env) return env;
  return "1";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crash-frequency data augmentation with a conditional GAN"};
  app.require_subcommand(1);

  struct Command {
    CLI::App* app = nullptr;
    Settings settings;
    Flags flags;
    std::string config;
  };
  std::vector<std::unique_ptr<Command>> commands;
  auto make = [&](const std::string& name, const std::string& help) {
    auto c = std::make_unique<Command>();
    c->app = app.add_subcommand(name, help);
    c->app->add_option("--config", c->config, "INI config file (flags take precedence)");
    declare_run(c->settings);
    c->flags.add(c->app, "--seed", "run.seed", "master seed");
    commands.push_back(std::move(c));
    return commands.back().get();
  };

  // simulate
  auto* sim = make("simulate", "write simulated crash datasets");
  declare_simulation(sim->settings);
  sim->settings.declare("simulation.replications", "1");
  sim->flags.add(sim->app, "--dispersion", "simulation.dispersion", "dispersion alpha (> 0)");
  sim->flags.add(sim->app, "--size", "simulation.sample_size", "rows per dataset");
  sim->flags.add(sim->app, "--replications", "simulation.replications", "number of datasets");
  sim->flags.add(sim->app, "--beta0", "simulation.beta0", "intercept");
  sim->flags.add(sim->app, "--coefficients", "simulation.coefficients", "comma-separated feature coefficients");
  fs::path sim_out;
  bool sim_suite = false;
  std::size_t sim_intersections = 0;
  sim->app->add_option("--out", sim_out, "output directory")->required();
  sim->app->add_flag("--suite", sim_suite, "write a CGAN training set plus screening and prediction sets");
  sim->app->add_option("--intersections", sim_intersections,
                       "write an intersection inventory with N rows (two volume features) instead");

  // train
  auto* tr = make("train", "train a CGAN on a dataset CSV");
  declare_train(tr->settings);
  tr->settings.declare("train.log_features", "");
  add_train_flags(tr->app, tr->flags);
  tr->flags.add(tr->app, "--log-features", "train.log_features", "comma-separated features modelled as ln(x)");
  fs::path tr_data, tr_out, tr_history;
  tr->app->add_option("--data", tr_data, "training CSV")->required();
  tr->app->add_option("--out", tr_out, "model file")->required();
  tr->app->add_option("--history", tr_history, "loss history CSV (default <out>.history.csv)");

  // augment
  auto* au = make("augment", "synthesize rows from a trained CGAN");
  au->settings.declare("augment.rows", "1000");
  au->flags.add(au->app, "-n,--rows", "augment.rows", "rows to synthesize");
  fs::path au_model, au_out;
  au->app->add_option("--model", au_model, "CGAN model file")->required();
  au->app->add_option("--out", au_out, "synthetic CSV")->required();

  // fit
  auto* fi = make("fit", "fit a negative binomial SPF");
  fi->settings.declare("spf.features", "");
  fi->settings.declare("spf.log_features", "");
  fi->flags.add(fi->app, "--features", "spf.features", "comma-separated features (default: all)");
  fi->flags.add(fi->app, "--log-features", "spf.log_features", "features entering as ln(x)");
  fs::path fi_data, fi_out;
  fi->app->add_option("--data", fi_data, "dataset CSV")->required();
  fi->app->add_option("--out", fi_out, "SPF model file")->required();

  // screen
  auto* sc = make("screen", "rank sites by empirical Bayes estimate");
  sc->settings.declare("spf.eb_weighting", "classical");
  sc->settings.declare("screen.top_k", "0");
  sc->flags.add(sc->app, "--eb-weighting", "spf.eb_weighting", "classical or swapped");
  sc->flags.add(sc->app, "-k,--top-k", "screen.top_k", "write only the top k sites (0: all)");
  fs::path sc_data, sc_model, sc_out;
  sc->app->add_option("--data", sc_data, "dataset CSV")->required();
  sc->app->add_option("--model", sc_model, "SPF model file")->required();
  sc->app->add_option("--out", sc_out, "ranked CSV")->required();

  // experiment
  auto* ex = make("experiment", "run the Base vs Augmented SPF experiment");
  ex->settings.declare("run.workers", default_workers());
  ex->settings.declare("experiment.mode", "sim");
  ex->settings.declare("experiment.dispersions", "0.5,1.5");
  ex->settings.declare("experiment.synthetic_sizes", "200,500,1000");
  ex->settings.declare("experiment.replications", "1000");
  ex->settings.declare("experiment.scale", "1");
  declare_simulation(ex->settings);
  declare_train(ex->settings);
  ex->settings.declare("spf.eb_weighting", "classical");
  ex->settings.declare("real.data", std::string(CRASHGAN_DATA_DIR) + "/standin_intersections.csv");
  ex->settings.declare("real.synthetic_size", "1000");
  ex->settings.declare("real.features", "");
  ex->settings.declare("real.log_features", "true");
  ex->settings.declare("real.exclude_zero_counts", "true");
  ex->flags.add(ex->app, "--workers", "run.workers", "parallel replication workers");
  ex->flags.add(ex->app, "--mode", "experiment.mode", "sim or real");
  ex->flags.add(ex->app, "--dispersions", "experiment.dispersions", "comma-separated dispersions");
  ex->flags.add(ex->app, "--synthetic-sizes", "experiment.synthetic_sizes", "comma-separated synthetic set sizes");
  ex->flags.add(ex->app, "--replications", "experiment.replications", "replications per dispersion before scaling");
  ex->flags.add(ex->app, "--scale", "experiment.scale", "multiplier on the replication count");
  ex->flags.add(ex->app, "--size", "simulation.sample_size", "rows per simulated dataset");
  ex->flags.add(ex->app, "--eb-weighting", "spf.eb_weighting", "classical or swapped");
  ex->flags.add(ex->app, "--data", "real.data", "real-data CSV");
  ex->flags.add(ex->app, "--synthetic-size", "real.synthetic_size", "synthetic rows in real-data mode");
  add_train_flags(ex->app, ex->flags);
  std::string ex_preset;
  ExperimentPaths ex_paths;
  ex->app->add_option("--preset", ex_preset, "paper-sim or paper-real");
  ex->app->add_option("--out", ex_paths.out, "output directory");
  ex->app->add_flag("--dry-run", ex_paths.dry_run, "print the resolved plan and exit");
  ex->app->add_flag("--resume", ex_paths.resume, "reuse completed rows of an interrupted run");

  // report
  auto* rp = app.add_subcommand("report", "rebuild summary.json and long.csv from report.csv");
  fs::path rp_dir;
  rp->add_option("--in", rp_dir, "experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (rp->parsed()) return cmd_report(rp_dir);
    for (auto& c : commands) {
      if (!c->app->parsed()) continue;
      if (c.get() == ex) apply_preset(c->settings, ex_preset);
      if (!c->config.empty()) c->settings.load_ini(c->config);
      c->flags.apply(c->settings);
      auto& s = c->settings;
      if (c.get() == sim) return cmd_simulate(s, sim_out, sim_suite, sim_intersections);
      if (c.get() == tr) return cmd_train(s, tr_data, tr_out, tr_history);
      if (c.get() == au) return cmd_augment(s, au_model, au_out);
      if (c.get() == fi) return cmd_fit(s, fi_data, fi_out);
      if (c.get() == sc) return cmd_screen(s, sc_data, sc_model, sc_out);
      if (c.get() == ex) {
        const auto mode = s.str("experiment.mode");
        if (mode != "sim" && mode != "real") throw ValidationError("mode must be sim or real");
        if (!ex_paths.dry_run && ex_paths.out.empty()) throw ValidationError("--out is required");
        return mode == "sim" ? run_sim_experiment(s, ex_paths) : run_real_experiment(s, ex_paths);
      }
    }
    return 2;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}
