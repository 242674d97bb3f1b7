#include "cli.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "effdim/bayes_linear.hpp"
#include "effdim/csv.hpp"
#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/measures.hpp"
#include "effdim/random.hpp"
#include "effdim/train.hpp"
#include "manifest.hpp"

namespace effdim::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kOutEnv = "EFFDIM_OUT";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
  std::optional<double> z;
};

struct Context {
  fs::path out_dir;
  Manifest manifest;

  std::ofstream open(const std::string& name) {
    std::ofstream os(out_dir / name, std::ios::binary);
    if (!os) throw Error(ErrorKind::Io, "cannot write " + (out_dir / name).string());
    manifest.outputs.emplace_back(name);
    return os;
  }
  void write_json(const std::string& name, const json& j) {
    auto os = open(name);
    os << j.dump(2) << '\n';
  }
};

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  try {
    while (std::getline(ss, item, ',')) {
      if (item.empty()) continue;
      const auto dash = item.find('-', 1);
      if (dash == std::string::npos) {
        out.push_back(std::stoi(item));
      } else {
        const int a = std::stoi(item.substr(0, dash));
        const int b = std::stoi(item.substr(dash + 1));
        if (b < a) throw UsageError("descending range '" + item + "'");
        for (int v = a; v <= b; ++v) out.push_back(v);
      }
    }
  } catch (const std::logic_error&) {
    throw UsageError("cannot parse integer list '" + text + "'");
  }
  if (out.empty()) throw UsageError("empty integer list");
  return out;
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::istringstream is(s);
  is.imbue(std::locale::classic());
  double v = 0.0;
  if (!(is >> v)) throw Error(ErrorKind::InvalidInput, "bad number '" + s + "'");
  return v;
}

std::vector<MeasureReport> read_measure_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InvalidInput, path.string() + " is empty");
  const std::vector<std::string> header = split_csv_line(line);
  static const std::map<std::string, double MeasureReport::*> numeric = {
      {"n_eff_hessian", &MeasureReport::n_eff_hessian}, {"z_used", &MeasureReport::z_used},
      {"path_norm", &MeasureReport::path_norm},         {"log_path_norm", &MeasureReport::log_path_norm},
      {"pac_bayes", &MeasureReport::pac_bayes},         {"mag_pac_bayes", &MeasureReport::mag_pac_bayes},
      {"occam_log_factor", &MeasureReport::occam_log_factor},
      {"train_loss", &MeasureReport::train_loss},       {"train_error", &MeasureReport::train_error},
      {"test_loss", &MeasureReport::test_loss},         {"test_error", &MeasureReport::test_error}};
  std::vector<MeasureReport> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw Error(ErrorKind::InvalidInput, path.string() + ": row has " + std::to_string(fields.size()) +
                                               " fields, header has " + std::to_string(header.size()));
    MeasureReport r;
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "model_id") r.model_id = fields[i];
      else if (header[i] == "status") r.status = fields[i];
      else if (auto it = numeric.find(header[i]); it != numeric.end()) r.*(it->second) = parse_double(fields[i]);
    }
    out.push_back(std::move(r));
  }
  return out;
}

// ---- Swiss-roll model shared by loss-surface and perturb-agreement ----------

struct SwissRollOptions {
  Eigen::Index n = 1000;
  double noise = SwissRollConfig{}.noise;
  int steps = SwissRollConfig{}.train.steps;
  double lr = SwissRollConfig{}.train.learning_rate;
  double weight_decay = SwissRollConfig{}.train.weight_decay;
  std::string model;
  bool save_model = false;
};

void add_swiss_roll_options(CLI::App* sub, SwissRollOptions& o) {
  sub->add_option("--n", o.n, "Training points (the test set has the same size)");
  sub->add_option("--noise", o.noise, "Gaussian noise std added to the spiral arms");
  sub->add_option("--steps", o.steps, "Full-batch Adam steps");
  sub->add_option("--lr", o.lr, "Adam learning rate");
  sub->add_option("--weight-decay", o.weight_decay, "L2 weight decay");
  sub->add_option("--model", o.model, "Load parameters from a checkpoint instead of training");
  sub->add_flag("--save-model", o.save_model, "Write the trained parameters to model.ckpt");
}

struct SwissRollFit {
  TrainedModel model;
  SymmetricSpectrum spectrum;
};

SwissRollFit fit_swiss_roll(const SwissRollOptions& o, std::uint64_t seed, Context& ctx) {
  SwissRollConfig cfg;
  cfg.n = o.n;
  cfg.noise = o.noise;
  cfg.train.steps = o.steps;
  cfg.train.learning_rate = o.lr;
  cfg.train.weight_decay = o.weight_decay;
  cfg.seed = seed;

  SwissRollFit fit;
  if (!o.model.empty()) {
    const Checkpoint ck = load_checkpoint(o.model);
    ctx.manifest.inputs.emplace_back(o.model);
    if (ck.spec.input_dim != 2) throw Error(ErrorKind::InvalidInput, "checkpoint is not a 2-D classifier");
    fit.model.spec = ck.spec;
    fit.model.params = ck.params;
    fit.model.train = gen_swiss_roll(cfg.n, cfg.noise, derive_seed({seed, 1}));
    fit.model.test = gen_swiss_roll(cfg.n, cfg.noise, derive_seed({seed, 2}));
  } else {
    fit.model = train_swiss_roll(cfg);
  }
  if (o.save_model) {
    save_checkpoint((ctx.out_dir / "model.ckpt").string(), {fit.model.spec, fit.model.params, seed, o.steps});
    ctx.manifest.outputs.emplace_back("model.ckpt");
  }
  fit.spectrum = dense_eigh(full_hessian(fit.model.spec, fit.model.params, fit.model.train).matrix);
  return fit;
}

void write_spectrum(Context& ctx, const SymmetricSpectrum& s) {
  auto os = ctx.open("spectrum.csv");
  os << "index,eigenvalue\n";
  for (Eigen::Index i = 0; i < s.size(); ++i) write_csv_row(os, {std::to_string(i), format_double(s.eigenvalues[i])});
}

// ---- subcommands ----------------------------------------------------------------

struct TheoremOptions {
  Eigen::Index k = 200, n = 10;
  double alpha = 1.0, sigma = 1.0;
};

void cmd_theorem_check(const TheoremOptions& o, std::uint64_t seed, Context& ctx) {
  const TheoremCheck t = theorem_check(o.k, o.n, o.alpha * o.alpha, o.sigma * o.sigma, seed);
  json j;
  j["k"] = t.k;
  j["n"] = t.n;
  j["prior_eigenvalue_count"] = t.prior_eigen_count;
  j["expected_prior_eigenvalue_count"] = std::max<Eigen::Index>(t.k - t.n, 0);
  j["max_rest_deviation"] = t.max_rest_deviation;
  j["nullspace_deviation"] = t.nullspace_deviation;
  j["rowspace_loss_change"] = t.rowspace_loss_change;
  j["pass"] = t.pass;
  ctx.write_json("theorem_check.json", j);
  std::cout << j.dump(2) << '\n';
}

struct ContractionOptions {
  int k = 200;
  Eigen::Index n_max = 500;
  double alpha = 1.0, sigma = 1.0;
  std::optional<double> z_hessian;
};

void cmd_contraction_curve(const ContractionOptions& o, const Common& c, std::uint64_t seed, Context& ctx) {
  ContractionConfig cfg;
  cfg.k = o.k;
  cfg.n_max = o.n_max;
  cfg.prior_variance = o.alpha * o.alpha;
  cfg.noise_variance = o.sigma * o.sigma;
  if (c.z) cfg.z_covariance = *c.z;
  cfg.z_hessian = o.z_hessian;
  cfg.seed = seed;
  auto os = ctx.open("contraction_curve.csv");
  os << "n,n_eff_covariance,n_eff_hessian,contraction,identity_residual\n";
  for (const ContractionRecord& r : contraction_curve(cfg))
    write_csv_row(os, {std::to_string(r.n), format_double(r.n_eff_covariance), format_double(r.n_eff_hessian),
                       format_double(r.contraction), format_double(r.identity_residual)});
}

struct SurfaceOptions {
  SwissRollOptions model;
  std::string basis = "top_k";
  Eigen::Index k = 0;
  double radius = -1.0;
  int resolution = kDefaultGridResolution;
};

void cmd_loss_surface(const SurfaceOptions& o, std::uint64_t seed, Context& ctx) {
  const BasisSelector sel = basis_selector_from_string(o.basis);
  const SwissRollFit fit = fit_swiss_roll(o.model, seed, ctx);
  const double theta_norm = fit.model.params.norm();
  Eigen::Index k = o.k;
  if (k <= 0) k = sel == BasisSelector::top_k ? 3 : std::min<Eigen::Index>(2000, fit.spectrum.size());
  const double radius = o.radius >= 0.0 ? o.radius : (sel == BasisSelector::top_k ? 1.0 : theta_norm);
  const LossSurfaceGrid g = loss_surface_projection(fit.model.spec, fit.model.params, fit.model.train,
                                                    select_basis(fit.spectrum, sel, k), radius, radius,
                                                    derive_seed({seed, 7}), o.resolution);
  {
    auto os = ctx.open("loss_surface.csv");
    os << "alpha,beta,loss\n";
    for (Eigen::Index i = 0; i < g.alphas.size(); ++i)
      for (Eigen::Index j = 0; j < g.betas.size(); ++j)
        write_csv_row(os, {format_double(g.alphas[i]), format_double(g.betas[j]), format_double(g.losses(i, j))});
  }
  write_spectrum(ctx, fit.spectrum);
  json j;
  j["basis"] = to_string(sel);
  j["k"] = k;
  j["radius"] = radius;
  j["theta_norm"] = theta_norm;
  j["centre_loss"] = g.losses(g.alphas.size() / 2, g.betas.size() / 2);
  j["loss_range"] = g.range();
  ctx.write_json("loss_surface.json", j);
}

struct AgreementOptions {
  SwissRollOptions model;
  Eigen::Index bottom_k = 500, top_k = 3;
  double bottom_scale = -1.0;
  double top_scale = 0.1;
  int draws = 1;
};

void cmd_perturb_agreement(const AgreementOptions& o, std::uint64_t seed, Context& ctx) {
  if (o.draws < 1) throw UsageError("--draws must be positive");
  const SwissRollFit fit = fit_swiss_roll(o.model, seed, ctx);
  const TrainedModel& m = fit.model;
  const double theta_norm = m.params.norm();
  const double bottom_scale = o.bottom_scale >= 0.0 ? o.bottom_scale : theta_norm / 2.0;

  auto os = ctx.open("agreement.csv");
  os << "basis,k,scale,draw,train_agreement,test_agreement\n";
  auto run = [&](BasisSelector sel, Eigen::Index k, double scale, std::uint64_t stream) {
    for (int d = 0; d < o.draws; ++d) {
      const ParamVector moved =
          subspace_perturb(m.params, fit.spectrum, {sel, k, scale, derive_seed({seed, stream, std::uint64_t(d)})});
      write_csv_row(os, {to_string(sel), std::to_string(k), format_double(scale), std::to_string(d),
                         format_double(function_agreement(m.spec, m.params, moved, m.train)),
                         format_double(function_agreement(m.spec, m.params, moved, m.test))});
    }
  };
  run(BasisSelector::bottom_k, o.bottom_k, bottom_scale, 5);
  run(BasisSelector::top_k, o.top_k, o.top_scale, 6);
  write_spectrum(ctx, fit.spectrum);

  json j;
  j["train_accuracy"] = 1.0 - classification_error(m.spec, m.params, m.train);
  j["test_accuracy"] = 1.0 - classification_error(m.spec, m.params, m.test);
  j["theta_norm"] = theta_norm;
  j["top_eigenvalue"] = fit.spectrum.eigenvalues[0];
  ctx.write_json("model_summary.json", j);
}

struct DoubleDescentOptions {
  DoubleDescentConfig cfg;
};

void cmd_double_descent(DoubleDescentOptions o, const Common& c, std::uint64_t seed, Context& ctx) {
  o.cfg.seed = seed;
  if (c.z) o.cfg.z_hessian = *c.z;
  const auto rows = double_descent_linear(o.cfg, c.jobs);
  auto os = ctx.open("double_descent.csv");
  write_double_descent_csv(os, rows);
}

struct SweepOptions {
  std::string values;
  int reps = 25;
  Eigen::Index n = 3000;
  int width = 20;
  int depth = 3;
  double noise = kTwoSpiralsNoise;
  std::string activation = "elu";
  std::string optimizer = "adam";
  int steps = 4000;
  double lr = 0.01;
  int batch_size = 128;
  double weight_decay = 0.0;
  int lanczos_steps = 100;
  std::string measures = "n_eff";
  double prior_variance = 1.0;
  int mc_samples = SigmaSearchConfig{}.mc_samples;
};

void add_sweep_options(CLI::App* sub, SweepOptions& o) {
  sub->add_option("--values", o.values, "Axis values, e.g. 1-15 or 1,2,4,8");
  sub->add_option("--reps", o.reps, "Repetitions (fresh data draws) per value");
  sub->add_option("--n", o.n, "Training points");
  sub->add_option("--width", o.width, "Hidden width for depth sweeps");
  sub->add_option("--depth", o.depth, "Hidden layers for width sweeps");
  sub->add_option("--noise", o.noise, "Two-spirals noise std");
  sub->add_option("--activation", o.activation, "elu, tanh or relu");
  sub->add_option("--optimizer", o.optimizer, "adam or sgd_momentum");
  sub->add_option("--steps", o.steps, "Optimizer steps");
  sub->add_option("--lr", o.lr, "Learning rate");
  sub->add_option("--batch-size", o.batch_size, "Minibatch size (0 = full batch)");
  sub->add_option("--weight-decay", o.weight_decay, "L2 weight decay");
  sub->add_option("--lanczos-steps", o.lanczos_steps, "Lanczos steps for the Hessian spectrum");
  sub->add_option("--measures", o.measures, "Comma list of n_eff, path_norm, pac_bayes, mag_pac_bayes, occam, all");
  sub->add_option("--prior-variance", o.prior_variance, "Prior variance behind the default z and the Occam factor");
  sub->add_option("--mc-samples", o.mc_samples, "Monte-Carlo samples per sigma evaluation");
}

MeasureConfig measure_config(const std::string& measures, double prior_variance, int lanczos_steps, int mc_samples,
                             Eigen::Index n, const Common& c) {
  MeasureConfig mc;
  mc.set = MeasureSet::parse(measures);
  mc.prior_variance = prior_variance;
  mc.z = c.z ? *c.z : 1.0 / (static_cast<double>(n) * prior_variance);
  mc.lanczos.steps = lanczos_steps;
  mc.lanczos.compute_eigenvectors = false;
  mc.sigma.mc_samples = mc_samples;
  return mc;
}

void cmd_sweep(SweepAxis axis, const SweepOptions& o, const Common& c, std::uint64_t seed, Context& ctx) {
  SweepConfig cfg;
  cfg.axis = axis;
  cfg.values = parse_int_list(o.values.empty() ? (axis == SweepAxis::depth ? "1-15" : "1-30") : o.values);
  cfg.repetitions = o.reps;
  cfg.n_train = o.n;
  cfg.base_width = o.width;
  cfg.base_depth = o.depth;
  cfg.data_noise = o.noise;
  cfg.seed = seed;
  cfg.train.optimizer = optimizer_from_string(o.optimizer);
  cfg.train.steps = o.steps;
  cfg.train.learning_rate = o.lr;
  cfg.train.batch_size = o.batch_size;
  cfg.train.weight_decay = o.weight_decay;
  const MeasureConfig mc = measure_config(o.measures, o.prior_variance, o.lanczos_steps, o.mc_samples, o.n, c);
  ctx.manifest.config["z"] = format_double(mc.z);

  const MlpSpec base{2, 1, {}, activation_from_string(o.activation), true};
  const auto rows = depth_width_sweep(base, cfg, mc, c.jobs);
  auto os = ctx.open("sweep_" + to_string(axis) + ".csv");
  write_sweep_csv(os, axis, rows);
}

struct MeasuresOptions {
  std::string model;
  std::string data = "two_spirals";
  Eigen::Index n = 3000;
  std::optional<double> noise;
  std::string measures = "all";
  double prior_variance = 1.0;
  int lanczos_steps = 100;
  int mc_samples = SigmaSearchConfig{}.mc_samples;
};

void cmd_measures(const MeasuresOptions& o, const Common& c, std::uint64_t seed, Context& ctx) {
  const Checkpoint ck = load_checkpoint(o.model);
  ctx.manifest.inputs.emplace_back(o.model);
  Dataset train, test;
  if (o.data == "two_spirals") {
    const double noise = o.noise.value_or(kTwoSpiralsNoise);
    train = gen_two_spirals(o.n, derive_seed({seed, 1}), noise);
    test = gen_two_spirals(o.n, derive_seed({seed, 2}), noise);
  } else if (o.data == "swiss_roll") {
    const double noise = o.noise.value_or(SwissRollConfig{}.noise);
    train = gen_swiss_roll(o.n, noise, derive_seed({seed, 1}));
    test = gen_swiss_roll(o.n, noise, derive_seed({seed, 2}));
  } else {
    throw UsageError("--data must be two_spirals or swiss_roll");
  }
  MeasureConfig mc = measure_config(o.measures, o.prior_variance, o.lanczos_steps, o.mc_samples, o.n, c);
  mc.lanczos.seed = derive_seed({seed, 3});
  mc.sigma.seed = derive_seed({seed, 4});
  ctx.manifest.config["z"] = format_double(mc.z);
  const MeasureReport r = evaluate_measures(fs::path(o.model).stem().string(), ck.spec, ck.params, train, test, mc);
  auto os = ctx.open("measures.csv");
  write_measure_csv(os, {r});
}

struct CorrelateOptions {
  std::vector<std::string> inputs;
  std::string measures = "n_eff_hessian,path_norm,log_path_norm,pac_bayes,mag_pac_bayes,occam_log_factor";
  std::string targets = "test_loss,test_error,generalization_gap";
  double cutoff = 0.1;
};

void cmd_correlate(const CorrelateOptions& o, Context& ctx) {
  std::vector<MeasureReport> reports;
  for (const std::string& path : o.inputs) {
    const auto part = read_measure_csv(path);
    reports.insert(reports.end(), part.begin(), part.end());
    ctx.manifest.inputs.emplace_back(path);
  }
  json rows = json::array();
  auto os = ctx.open("correlations.csv");
  os << "measure,target,pearson,status\n";
  for (const std::string& m : split(o.measures, ','))
    for (const std::string& t : split(o.targets, ',')) {
      json row{{"measure", m}, {"target", t}};
      std::string status = "ok";
      double rho = std::numeric_limits<double>::quiet_NaN();
      try {
        rho = pearson_correlation(reports, m, t, o.cutoff);
        row["pearson"] = rho;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::InsufficientData && e.kind() != ErrorKind::UndefinedCorrelation) throw;
        status = to_string(e.kind());
        row["pearson"] = nullptr;
        row["error"] = status;
      }
      write_csv_row(os, {m, t, format_double(rho), status});
      rows.push_back(row);
    }
  json j;
  j["train_loss_cutoff"] = std::isfinite(o.cutoff) ? json(o.cutoff) : json("inf");
  j["models"] = reports.size();
  j["correlations"] = rows;
  ctx.write_json("correlations.json", j);
}

// ---- plumbing ---------------------------------------------------------------------

void add_common(CLI::App* sub, Common& c, bool with_z, bool with_jobs) {
  sub->add_option("--config", c.config, "key = value file; command-line flags take precedence");
  sub->add_option("--seed", c.seed, "Root seed (required for stochastic subcommands)");
  sub->add_option("--out", c.out, std::string("Output directory (default $") + kOutEnv + " or ./effdim-out)");
  if (with_jobs) sub->add_option("--jobs", c.jobs, "Worker threads for independent cells")->check(CLI::PositiveNumber);
  if (with_z) sub->add_option("--z", c.z, "Regularizer z of the effective dimensionality");
}

// Folds the config file into the argument list: each key becomes --key=value
// unless the same flag was given on the command line.
std::vector<std::string> expand_config(const std::vector<std::string>& args, CLI::App& app) {
  if (args.empty() || args[0].starts_with("-")) return args;
  CLI::App* sub = app.get_subcommand_no_throw(args[0]);
  if (!sub) return args;

  std::string config_path;
  std::set<std::string> given;
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (!a.starts_with("--")) continue;
    const auto eq = a.find('=');
    const std::string name = normalize_key(a.substr(2, eq == std::string::npos ? std::string::npos : eq - 2));
    given.insert(name);
    if (name == "config") {
      if (eq != std::string::npos) config_path = a.substr(eq + 1);
      else if (i + 1 < args.size()) config_path = args[i + 1];
    }
  }
  if (config_path.empty()) return args;

  std::vector<std::string> out{args[0]};
  for (const auto& [key, value] : read_config_file(config_path)) {
    if (key == "config") throw UsageError("config files cannot include other config files");
    if (!sub->get_option_no_throw("--" + key))
      throw UsageError("config key '" + key + "' is not an option of " + args[0]);
    if (!given.count(key)) out.push_back("--" + key + "=" + value);
  }
  out.insert(out.end(), args.begin() + 1, args.end());
  return out;
}

std::map<std::string, std::string> resolved_options(const CLI::App* sub) {
  std::map<std::string, std::string> out;
  for (const CLI::Option* opt : sub->get_options()) {
    const auto& names = opt->get_lnames();
    if (names.empty() || names[0] == "help" || names[0] == "config" || names[0] == "out") continue;
    if (opt->count() > 0) {
      std::string joined;
      for (const std::string& r : opt->results()) joined += (joined.empty() ? "" : ",") + r;
      out[names[0]] = joined;
    } else if (!opt->get_default_str().empty()) {
      out[names[0]] = opt->get_default_str();
    }
  }
  return out;
}

}  // namespace

int run(const std::vector<std::string>& raw_args) {
  CLI::App app{"Effective dimensionality experiments", "effdim"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  Common common;
  TheoremOptions theorem;
  ContractionOptions contraction;
  SurfaceOptions surface;
  AgreementOptions agreement;
  DoubleDescentOptions dd;
  SweepOptions sweep_depth, sweep_width;
  MeasuresOptions measures;
  CorrelateOptions correlate;

  auto* s_contraction = app.add_subcommand("contraction-curve", "Posterior contraction on sinusoidal features, one point at a time");
  add_common(s_contraction, common, true, false);
  s_contraction->add_option("--k", contraction.k, "Number of sinusoidal features (even)");
  s_contraction->add_option("--n-max", contraction.n_max, "Observations to add");
  s_contraction->add_option("--alpha", contraction.alpha, "Prior standard deviation");
  s_contraction->add_option("--sigma", contraction.sigma, "Noise standard deviation");
  s_contraction->add_option("--z-hessian", contraction.z_hessian, "z for the Hessian curve (default 1/alpha^2)");

  auto* s_theorem = app.add_subcommand("theorem-check", "Posterior covariance spectrum and null-space invariance for k > n");
  add_common(s_theorem, common, false, false);
  s_theorem->add_option("--k", theorem.k, "Number of sinusoidal features (even)");
  s_theorem->add_option("--n", theorem.n, "Observations");
  s_theorem->add_option("--alpha", theorem.alpha, "Prior standard deviation");
  s_theorem->add_option("--sigma", theorem.sigma, "Noise standard deviation");

  auto* s_surface = app.add_subcommand("loss-surface", "Loss on a 2-D slice spanned by Hessian eigenvectors of the Swiss-roll net");
  add_common(s_surface, common, false, false);
  add_swiss_roll_options(s_surface, surface.model);
  s_surface->add_option("--basis", surface.basis, "top_k, bottom_k, nullspace or random");
  s_surface->add_option("--k", surface.k, "Basis size (default 3 for top_k, 2000 otherwise)");
  s_surface->add_option("--radius", surface.radius, "Grid half-width (default 1 for top_k, ||theta|| otherwise)");
  s_surface->add_option("--resolution", surface.resolution, "Grid points per axis (odd)");

  auto* s_agree = app.add_subcommand("perturb-agreement", "Prediction agreement after perturbing along low and high curvature eigenvectors");
  add_common(s_agree, common, false, false);
  add_swiss_roll_options(s_agree, agreement.model);
  s_agree->add_option("--bottom-k", agreement.bottom_k, "Smallest-|eigenvalue| directions");
  s_agree->add_option("--top-k", agreement.top_k, "Largest-eigenvalue directions");
  s_agree->add_option("--bottom-scale", agreement.bottom_scale, "Perturbation norm in the bottom basis (default ||theta||/2)");
  s_agree->add_option("--top-scale", agreement.top_scale, "Perturbation norm in the top basis");
  s_agree->add_option("--draws", agreement.draws, "Random directions per basis");

  auto* s_dd = app.add_subcommand("double-descent-linear", "Ridge regression sweep over the number of features");
  add_common(s_dd, common, true, true);
  s_dd->add_option("--n", dd.cfg.n, "Training points");
  s_dd->add_option("--informative", dd.cfg.informative, "Informative features");
  s_dd->add_option("--k-min", dd.cfg.k_min, "Smallest feature count");
  s_dd->add_option("--k-max", dd.cfg.k_max, "Largest feature count");
  s_dd->add_option("--k-step", dd.cfg.k_step, "Feature count increment");
  s_dd->add_option("--seeds", dd.cfg.seeds, "Data draws per feature count");
  s_dd->add_option("--prior-variance", dd.cfg.prior_variance, "Prior variance of the ridge fit");

  auto* s_depth = app.add_subcommand("sweep-depth", "Train two-spirals MLPs of increasing depth and evaluate measures");
  add_common(s_depth, common, true, true);
  add_sweep_options(s_depth, sweep_depth);
  auto* s_width = app.add_subcommand("sweep-width", "Train two-spirals MLPs of increasing width and evaluate measures");
  add_common(s_width, common, true, true);
  add_sweep_options(s_width, sweep_width);

  auto* s_measures = app.add_subcommand("measures", "Evaluate generalization measures for a checkpoint");
  add_common(s_measures, common, true, false);
  s_measures->add_option("--model", measures.model, "Checkpoint file")->required();
  s_measures->add_option("--data", measures.data, "two_spirals or swiss_roll");
  s_measures->add_option("--n", measures.n, "Points per split");
  s_measures->add_option("--noise", measures.noise, "Data noise std");
  s_measures->add_option("--measures", measures.measures, "Comma list of measures or all");
  s_measures->add_option("--prior-variance", measures.prior_variance, "Prior variance behind the default z and the Occam factor");
  s_measures->add_option("--lanczos-steps", measures.lanczos_steps, "Lanczos steps");
  s_measures->add_option("--mc-samples", measures.mc_samples, "Monte-Carlo samples per sigma evaluation");

  auto* s_corr = app.add_subcommand("correlate", "Pearson correlation of measures with generalization over measure CSVs");
  add_common(s_corr, common, false, false);
  s_corr->add_option("--input", correlate.inputs, "Measure or sweep CSV files")->required();
  s_corr->add_option("--measures", correlate.measures, "Comma list of measure columns");
  s_corr->add_option("--targets", correlate.targets, "Comma list of targets");
  s_corr->add_option("--cutoff", correlate.cutoff, "Keep models with train loss below this");

  try {
    std::vector<std::string> args = expand_config(raw_args, app);
    std::vector<const char*> argv{"effdim"};
    for (const std::string& a : args) argv.push_back(a.c_str());
    try {
      app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
      const int code = app.exit(e);
      return code == 0 ? 0 : 2;
    }

    CLI::App* sub = app.get_subcommands().front();
    const std::string name = sub->get_name();
    const bool stochastic = name != "correlate";
    if (stochastic && !common.seed) {
      std::cerr << "effdim " << name << ": --seed is required\n";
      return 2;
    }
    const std::uint64_t seed = common.seed.value_or(0);

    Context ctx;
    std::string out = common.out;
    if (out.empty()) {
      const char* env = std::getenv(kOutEnv);
      out = env && *env ? env : "effdim-out";
    }
    ctx.out_dir = out;
    fs::create_directories(ctx.out_dir);
    ctx.manifest.subcommand = name;
    ctx.manifest.config = resolved_options(sub);
    if (stochastic) ctx.manifest.seeds["root"] = std::to_string(seed);
    if (!common.config.empty()) ctx.manifest.inputs.emplace_back(common.config);

    if (name == "contraction-curve") cmd_contraction_curve(contraction, common, seed, ctx);
    else if (name == "theorem-check") cmd_theorem_check(theorem, seed, ctx);
    else if (name == "loss-surface") cmd_loss_surface(surface, seed, ctx);
    else if (name == "perturb-agreement") cmd_perturb_agreement(agreement, seed, ctx);
    else if (name == "double-descent-linear") cmd_double_descent(dd, common, seed, ctx);
    else if (name == "sweep-depth") cmd_sweep(SweepAxis::depth, sweep_depth, common, seed, ctx);
    else if (name == "sweep-width") cmd_sweep(SweepAxis::width, sweep_width, common, seed, ctx);
    else if (name == "measures") cmd_measures(measures, common, seed, ctx);
    else if (name == "correlate") cmd_correlate(correlate, ctx);

    const fs::path manifest = write_manifest(ctx.out_dir, ctx.manifest);
    std::cerr << "wrote " << manifest.string() << '\n';
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "effdim: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "effdim: " << e.what() << '\n';
    return e.kind() == ErrorKind::InvalidConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "effdim: " << e.what() << '\n';
    return 1;
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace effdim::cli
