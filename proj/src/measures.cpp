#include "effdim/measures.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "effdim/csv.hpp"
#include "effdim/error.hpp"

namespace effdim {

HessianEffDim hessian_eff_dim(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double z,
                              LanczosConfig cfg) {
  if (!(z > 0.0)) throw Error(ErrorKind::InvalidRegularizer, "z must be positive");
  const MatrixFreeOperator op = hessian_operator(spec, params, data, 0.0);
  cfg.steps = static_cast<int>(std::min<Eigen::Index>(cfg.steps, op.dim));
  HessianEffDim out;
  out.spectrum = lanczos_topk(op, cfg);
  out.n_eff = effective_dimensionality(out.spectrum, z, true);
  return out;
}

double path_norm(const MlpSpec& spec, const ParamVector& params) {
  spec.validate();
  if (params.size() != spec.parameter_count()) throw Error(ErrorKind::Shape, "parameter vector has the wrong length");
  Eigen::VectorXd a = Eigen::VectorXd::Ones(spec.input_dim);
  Eigen::Index offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.width(l);
    const int out = spec.width(l + 1);
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(params.data() + offset,
                                                                                               out, in);
    offset += static_cast<Eigen::Index>(in) * out;
    Eigen::VectorXd next = w.array().square().matrix() * a;
    if (spec.use_bias) {
      next += params.segment(offset, out).array().square().matrix();
      offset += out;
    }
    a = std::move(next);
  }
  const double total = a.sum();
  if (total < 0.0) throw Error(ErrorKind::DefinitionViolation, "negative path sum");
  return std::sqrt(total);
}

double occam_log_factor(const Eigen::VectorXd& eigenvalues, const ParamVector& theta, double prior_variance,
                        double z) {
  if (!(prior_variance > 0.0)) throw Error(ErrorKind::InvalidInput, "prior variance must be positive");
  if (!(z > 0.0)) throw Error(ErrorKind::InvalidRegularizer, "z must be positive");
  if (eigenvalues.size() > theta.size())
    throw Error(ErrorKind::Shape, "more eigenvalues than parameters");
  const double two_pi = 2.0 * std::numbers::pi;
  const double k = static_cast<double>(theta.size());
  const double log_prior = -0.5 * k * std::log(two_pi * prior_variance) - 0.5 * theta.squaredNorm() / prior_variance;
  double log_det = 0.0;
  for (double lambda : eigenvalues) log_det += std::log((std::max(lambda, 0.0) + z) / two_pi);
  log_det += static_cast<double>(theta.size() - eigenvalues.size()) * std::log(z / two_pi);
  return log_prior - 0.5 * log_det;
}

double occam_log_factor(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double prior_variance,
                        double z) {
  HessianMatrix h = full_hessian(spec, params, data, 0.0);
  h.matrix *= static_cast<double>(data.size());
  return occam_log_factor(dense_eigh(h.matrix).eigenvalues, params, prior_variance, z);
}

const std::vector<std::string>& measure_fields() {
  static const std::vector<std::string> fields = {
      "n_eff_hessian", "z_used",     "path_norm",  "log_path_norm", "pac_bayes", "mag_pac_bayes",
      "occam_log_factor", "train_loss", "train_error", "test_loss", "test_error", "generalization_gap"};
  return fields;
}

double report_field(const MeasureReport& r, const std::string& field) {
  if (field == "n_eff_hessian") return r.n_eff_hessian;
  if (field == "z_used") return r.z_used;
  if (field == "path_norm") return r.path_norm;
  if (field == "log_path_norm") return r.log_path_norm;
  if (field == "pac_bayes") return r.pac_bayes;
  if (field == "mag_pac_bayes") return r.mag_pac_bayes;
  if (field == "occam_log_factor") return r.occam_log_factor;
  if (field == "train_loss") return r.train_loss;
  if (field == "train_error") return r.train_error;
  if (field == "test_loss") return r.test_loss;
  if (field == "test_error") return r.test_error;
  if (field == "generalization_gap") return r.test_error - r.train_error;
  throw Error(ErrorKind::InvalidConfig, "unknown report field '" + field + "'");
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw Error(ErrorKind::Shape, "correlation inputs differ in length");
  if (x.size() < 3)
    throw Error(ErrorKind::InsufficientData, "need at least 3 points, got " + std::to_string(x.size()));
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw Error(ErrorKind::UndefinedCorrelation, "a column has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double pearson_correlation(const std::vector<MeasureReport>& reports, const std::string& measure_field,
                           const std::string& target_field, double train_loss_cutoff) {
  std::vector<double> x, y;
  for (const MeasureReport& r : reports) {
    if (!r.ok() || !(r.train_loss < train_loss_cutoff)) continue;
    x.push_back(report_field(r, measure_field));
    y.push_back(report_field(r, target_field));
  }
  return pearson(x, y);
}

MeasureSet MeasureSet::parse(const std::string& csv_list) {
  MeasureSet s{false, false, false, false, false};
  std::stringstream ss(csv_list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "all") s = all();
    else if (item == "n_eff") s.n_eff = true;
    else if (item == "path_norm") s.path_norm = true;
    else if (item == "pac_bayes") s.pac_bayes = true;
    else if (item == "mag_pac_bayes") s.mag_pac_bayes = true;
    else if (item == "occam") s.occam = true;
    else if (!item.empty()) throw Error(ErrorKind::InvalidConfig, "unknown measure '" + item + "'");
  }
  return s;
}

MeasureReport evaluate_measures(const std::string& model_id, const MlpSpec& spec, const ParamVector& params,
                                const Dataset& train, const Dataset& test, const MeasureConfig& cfg) {
  if (train.task != Task::classification || test.task != Task::classification)
    throw Error(ErrorKind::InvalidInput, "measure reports need classification data");
  MeasureReport r;
  r.model_id = model_id;
  r.z_used = cfg.z;
  r.train_loss = loss(spec, params, train).data;
  r.train_error = classification_error(spec, params, train);
  r.test_loss = loss(spec, params, test).data;
  r.test_error = classification_error(spec, params, test);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.n_eff_hessian = cfg.set.n_eff ? hessian_eff_dim(spec, params, train, cfg.z, cfg.lanczos).n_eff : nan;
  if (cfg.set.path_norm) {
    r.path_norm = path_norm(spec, params);
    r.log_path_norm = r.path_norm > 0.0 ? std::log(r.path_norm) : -std::numeric_limits<double>::infinity();
  } else {
    r.path_norm = r.log_path_norm = nan;
  }
  r.pac_bayes = cfg.set.pac_bayes ? pac_bayes_sharpness(spec, params, train, cfg.sigma).measure : nan;
  r.mag_pac_bayes = cfg.set.mag_pac_bayes ? mag_pac_bayes_sharpness(spec, params, train, cfg.sigma).measure : nan;
  // The Occam factor works on the summed-loss Hessian, so its regularizer is
  // the prior precision itself.
  r.occam_log_factor = cfg.set.occam && spec.parameter_count() <= kFullHessianGuard
                           ? occam_log_factor(spec, params, train, cfg.prior_variance, 1.0 / cfg.prior_variance)
                           : nan;
  return r;
}

const char* const kMeasureCsvHeader =
    "model_id,n_eff_hessian,z_used,path_norm,log_path_norm,pac_bayes,mag_pac_bayes,occam_log_factor,"
    "train_loss,train_error,test_loss,test_error,status";

void write_measure_csv(std::ostream& os, const std::vector<MeasureReport>& reports) {
  os << kMeasureCsvHeader << '\n';
  for (const MeasureReport& r : reports) {
    write_csv_row(os, {r.model_id, format_double(r.n_eff_hessian), format_double(r.z_used),
                       format_double(r.path_norm), format_double(r.log_path_norm), format_double(r.pac_bayes),
                       format_double(r.mag_pac_bayes), format_double(r.occam_log_factor), format_double(r.train_loss),
                       format_double(r.train_error), format_double(r.test_loss), format_double(r.test_error),
                       r.status});
  }
}

}  // namespace effdim
