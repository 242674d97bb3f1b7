#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "effdim/mlp.hpp"
#include "effdim/spectral.hpp"

namespace effdim {

struct HessianEffDim {
  double n_eff = 0.0;
  SymmetricSpectrum spectrum;
};

/// N_eff of the top Ritz values of the mean training-loss Hessian (negatives
/// clamped). Since only the leading eigenvalues are seen this is a lower bound
/// on the full-spectrum value. cfg.steps is capped at the parameter count.
HessianEffDim hessian_eff_dim(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double z,
                              LanczosConfig cfg = {});

/// sqrt(sum of outputs) of one forward pass on the all-ones input with every
/// weight and bias squared and identity activations, i.e. the l2 norm over
/// all input-output paths.
double path_norm(const MlpSpec& spec, const ParamVector& params);

struct SigmaSearchConfig {
  double target_increase = 0.1;
  int mc_samples = 200;
  double search_tolerance = 1e-3;  // stop when hi/lo - 1 falls below this
  int max_iterations = 40;
  double sigma_lo = 1e-5;
  double sigma_hi = 10.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SharpnessResult {
  double measure = 0.0;  // 1 / sigma^2
  double sigma = 0.0;
  double base_error = 0.0;
  bool saturated = false;  // sigma pinned at one of the bounds
  bool unstable = false;   // the MC estimate was non-monotone in sigma beyond its noise
};

using ErrorFunctional = std::function<double(const ParamVector&)>;

/// Largest sigma in [lo, hi] with E_xi[err(theta + u(sigma, xi))] - err(theta) <= target,
/// where u_i = sqrt(sigma^2 c_i + eps) xi_i. The same xi samples (common random
/// numbers, one derived seed per sample) are reused at every bisection step.
SharpnessResult sigma_search(const ParamVector& theta, const ErrorFunctional& error,
                             const Eigen::VectorXd& variance_coeffs, double variance_floor,
                             const SigmaSearchConfig& cfg);

/// 1/sigma^2 for isotropic N(0, sigma^2 I) perturbations of the training error.
SharpnessResult pac_bayes_sharpness(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                    const SigmaSearchConfig& cfg);

enum class MagnitudeScaling { squared, absolute };  // variance sigma'^2 theta_i^2 + eps, or sigma'^2 |theta_i| + eps

inline constexpr double kMagnitudeEpsilon = 1e-3;

SharpnessResult mag_pac_bayes_sharpness(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                        const SigmaSearchConfig& cfg,
                                        MagnitudeScaling scaling = MagnitudeScaling::squared,
                                        double epsilon = kMagnitudeEpsilon);

/// ln N(theta; 0, prior_variance I) - 1/2 sum_i ln((max(l_i, 0) + z) / 2pi).
/// `eigenvalues` should hold the full spectrum of the summed negative
/// log-likelihood Hessian; missing eigenvalues are treated as zero up to
/// theta.size().
double occam_log_factor(const Eigen::VectorXd& eigenvalues, const ParamVector& theta, double prior_variance, double z);

/// Network version: dense Hessian of the summed training loss (n times the
/// mean-loss Hessian). Size-guarded like full_hessian.
double occam_log_factor(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double prior_variance,
                        double z);

struct MeasureReport {
  std::string model_id;
  double n_eff_hessian = 0.0;
  double z_used = 0.0;
  double path_norm = 0.0;
  double log_path_norm = 0.0;
  double pac_bayes = 0.0;
  double mag_pac_bayes = 0.0;
  double occam_log_factor = 0.0;
  double train_loss = 0.0;
  double train_error = 0.0;
  double test_loss = 0.0;
  double test_error = 0.0;
  std::string status = "ok";  // anything else marks a failed cell

  bool ok() const { return status == "ok"; }
};

/// Column names accepted by report_field / pearson_correlation; also
/// "generalization_gap" (test_error - train_error).
double report_field(const MeasureReport& r, const std::string& field);
const std::vector<std::string>& measure_fields();

/// Sample Pearson correlation of two report columns over reports with
/// status ok and train_loss < cutoff.
double pearson_correlation(const std::vector<MeasureReport>& reports, const std::string& measure_field,
                           const std::string& target_field, double train_loss_cutoff);

/// Plain sample Pearson correlation; throws InsufficientData below 3 points
/// and UndefinedCorrelation on zero variance.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

struct MeasureSet {
  bool n_eff = true;
  bool path_norm = true;
  bool pac_bayes = true;
  bool mag_pac_bayes = true;
  bool occam = true;  // only computed when the full Hessian fits the guard

  static MeasureSet all() { return {}; }
  static MeasureSet only_n_eff() { return {true, false, false, false, false}; }
  static MeasureSet parse(const std::string& csv_list);
};

struct MeasureConfig {
  double z = 1.0;
  double prior_variance = 1.0;
  LanczosConfig lanczos;
  SigmaSearchConfig sigma;
  MeasureSet set;
};

/// Evaluates the selected measures plus train/test loss and error.
MeasureReport evaluate_measures(const std::string& model_id, const MlpSpec& spec, const ParamVector& params,
                                const Dataset& train, const Dataset& test, const MeasureConfig& cfg);

extern const char* const kMeasureCsvHeader;
void write_measure_csv(std::ostream& os, const std::vector<MeasureReport>& reports);

}  // namespace effdim
