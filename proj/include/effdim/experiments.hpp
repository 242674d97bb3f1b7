#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "effdim/bayes_linear.hpp"
#include "effdim/measures.hpp"
#include "effdim/mlp.hpp"
#include "effdim/spectral.hpp"
#include "effdim/train.hpp"

namespace effdim {

// ---- data generators -------------------------------------------------------

/// Two interleaved Swiss-roll arms, t = 1.5 pi (1 + 2 u) with u uniform; class 1
/// is class 0 rotated by pi. Balanced labels (n/2 each, the extra point of an
/// odd n goes to class 0). Gaussian noise of std `noise` is added before the
/// optional per-coordinate standardization.
Dataset gen_swiss_roll(Eigen::Index n, double noise, std::uint64_t seed, bool standardize = true);

inline constexpr double kTwoSpiralsNoise = 0.5;

/// Classic two-spirals task: angle t = 3 pi sqrt(u), radius t. Class 1 is
/// exactly class 0 rotated by pi (noise included), coordinates standardized.
Dataset gen_two_spirals(Eigen::Index n, std::uint64_t seed, double noise = kTwoSpiralsNoise);

struct LinearTask {
  Eigen::MatrixXd train_features;
  Eigen::VectorXd train_targets;
  Eigen::MatrixXd test_features;
  Eigen::VectorXd test_targets;
};

/// y ~ N(0, 1); the first min(k, informative) features are y + N(0, 1), the rest
/// pure N(0, 1) noise. The test set repeats the process with fresh draws.
LinearTask gen_double_descent_features(Eigen::Index n, Eigen::Index k, std::uint64_t seed, int informative = 20);

/// y = w1 x + w2 x^2 + w3 x^3 + (0.5 + x^2)^2 + sin(4 x^2) + eps, w ~ N(0, I),
/// eps ~ N(0, 0.05^2), x ~ U(-1, 1). x is de-meaned and standardized
/// (population std) and the inputs are its powers [1, x, x^2].
inline constexpr double kBnnNoiseStd = 0.05;
Dataset gen_bnn_regression(Eigen::Index n, std::uint64_t seed);

/// Single-logit 2-20-20-20-20-20-20-1 ELU network (2181 parameters).
MlpSpec swiss_roll_spec();
/// 3-20-20-1 tanh network without biases (480 parameters).
MlpSpec bnn_spec();

// ---- perturbations and projections ------------------------------------------

enum class BasisSelector { top_k, bottom_k, random, nullspace };

std::string to_string(BasisSelector s);
BasisSelector basis_selector_from_string(const std::string& name);

struct PerturbationSpec {
  BasisSelector selector = BasisSelector::random;
  Eigen::Index k = 0;  // columns for top_k / bottom_k
  double scale = 0.0;
  std::uint64_t seed = 0;
};

/// Columns of the requested basis. top_k takes the k largest eigenvalues,
/// bottom_k the k smallest in magnitude, nullspace the eigenvectors with
/// |lambda| <= kRankTolerance * max|lambda|, random the identity.
Eigen::MatrixXd select_basis(const SymmetricSpectrum& spectrum, BasisSelector selector, Eigen::Index k);

/// theta + s B v / ||B v|| with v ~ N(0, I). Degenerate draws are retried up
/// to 8 times before a DegenerateDirection error.
ParamVector subspace_perturb(const ParamVector& theta, const SymmetricSpectrum& spectrum, const PerturbationSpec& p);

struct LossSurfaceGrid {
  Eigen::VectorXd u, v;
  Eigen::VectorXd alphas, betas;
  Eigen::MatrixXd losses;  // losses(i, j) at theta + alphas[i] u + betas[j] v

  double range() const { return losses.maxCoeff() - losses.minCoeff(); }
};

inline constexpr int kDefaultGridResolution = 41;

/// Random orthonormal pair (u, v) from span(basis) via Gram-Schmidt, then the
/// data loss on a symmetric resolution x resolution grid. The centre cell is
/// exactly loss(theta). A zero radius collapses that axis to one point.
LossSurfaceGrid loss_surface_projection(const MlpSpec& spec, const ParamVector& theta, const Dataset& data,
                                        const Eigen::MatrixXd& basis, double alpha_radius, double beta_radius,
                                        std::uint64_t seed, int resolution = kDefaultGridResolution);

/// Fraction of points whose predicted class agrees under the two parameter vectors.
double function_agreement(const MlpSpec& spec, const ParamVector& a, const ParamVector& b, const Dataset& data);

// ---- Swiss-roll degeneracy study --------------------------------------------

// Weight decay 1e-3 is the MAP under a N(0, I) prior at n = 1000.
struct SwissRollConfig {
  Eigen::Index n = 1000;
  double noise = 0.5;
  TrainConfig train{Optimizer::adam, 0.01, 0.9, 1e-3, 0.9, 0.999, 1e-8, 4000, 0, 0};
  std::uint64_t seed = 0;
};

struct TrainedModel {
  MlpSpec spec;
  ParamVector params;
  Dataset train;
  Dataset test;
  std::vector<double> loss_trace;
};

/// Trains the Swiss-roll network on fresh train and test draws.
TrainedModel train_swiss_roll(const SwissRollConfig& cfg);

struct AgreementReport {
  std::string basis;
  Eigen::Index k = 0;
  double scale = 0.0;
  double train_agreement = 0.0;
  double test_agreement = 0.0;
};

struct SwissRollStudyConfig {
  SwissRollConfig model;
  Eigen::Index bottom_k = 500;
  Eigen::Index top_k = 3;
  double top_scale = 0.1;
  Eigen::Index surface_bottom_k = 2000;
  int resolution = kDefaultGridResolution;
};

struct SwissRollStudy {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  double theta_norm = 0.0;
  double top_eigenvalue_init = 0.0;
  double top_eigenvalue_final = 0.0;
  double hessian_asymmetry = 0.0;
  double n_eff_init = 0.0;   // 100-step Lanczos, z = 1/n
  double n_eff_final = 0.0;
  AgreementReport bottom;  // bottom_k basis at ||theta|| / 2
  AgreementReport top;     // top_k basis at top_scale
  LossSurfaceGrid top_grid;     // top_k basis, radius 1
  LossSurfaceGrid bottom_grid;  // surface_bottom_k basis, radius ||theta||
  SymmetricSpectrum spectrum;

  bool agreement_pass() const;
  bool surface_pass() const;
  bool pass() const { return agreement_pass() && surface_pass(); }
};

/// Trains the network, takes the dense Hessian spectrum at the optimum and
/// runs the perturbation and loss-surface protocol on it.
SwissRollStudy swiss_roll_study(const SwissRollStudyConfig& cfg);

// ---- Bayesian linear experiments ---------------------------------------------

struct TheoremCheck {
  Eigen::Index k = 0;
  Eigen::Index n = 0;
  Eigen::Index prior_eigen_count = 0;  // covariance eigenvalues within 1e-8 of alpha^2
  double max_rest_deviation = 0.0;     // max |lambda_i - (gamma_i + alpha^-2)^-1| over the other n
  double nullspace_deviation = 0.0;    // relative train-prediction change under a null-space move of norm ||beta||
  double rowspace_loss_change = 0.0;   // train-loss change under an equal-norm row-space move
  bool pass = false;
};

/// Sinusoidal model with x ~ U(-1, 1), targets from the prior predictive.
TheoremCheck theorem_check(Eigen::Index k, Eigen::Index n, double prior_variance, double noise_variance,
                           std::uint64_t seed);

struct ContractionConfig {
  int k = 200;
  Eigen::Index n_max = 500;
  double prior_variance = 1.0;
  double noise_variance = 1.0;
  double z_covariance = 5.0;
  std::optional<double> z_hessian;  // defaults to 1 / prior_variance
  std::uint64_t seed = 0;
};

struct ContractionRecord {
  Eigen::Index n = 0;
  double n_eff_covariance = 0.0;
  double n_eff_hessian = 0.0;
  double contraction = 0.0;          // k alpha^2 - tr(Sigma)
  double identity_residual = 0.0;    // |r - N_eff(H, z) - N_eff(H+, 1/z)|
};

/// Adds sinusoidal-feature observations one at a time (x ~ U(-1, 1)) and
/// records both effective dimensionalities for n = 0..n_max.
std::vector<ContractionRecord> contraction_curve(const ContractionConfig& cfg);

struct DoubleDescentConfig {
  Eigen::Index n = 200;
  int informative = 20;
  int k_min = 5;
  int k_max = 400;
  int k_step = 5;
  int seeds = 10;
  std::uint64_t seed = 0;
  double prior_variance = 1e8;  // near the minimum-norm interpolant
  double z_hessian = 1.0;
};

struct DoubleDescentRecord {
  int k = 0;
  int seed_index = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double n_eff = 0.0;          // N_eff((Phi^T Phi)^+, alpha^2)
  double n_eff_hessian = 0.0;  // N_eff(Phi^T Phi, z_hessian)
};

std::vector<DoubleDescentRecord> double_descent_linear(const DoubleDescentConfig& cfg, int jobs = 1);

extern const char* const kDoubleDescentCsvHeader;
void write_double_descent_csv(std::ostream& os, const std::vector<DoubleDescentRecord>& rows);

/// Posterior mean of the conjugate model with unit noise, computed through the
/// SVD so that huge prior variances stay stable.
Eigen::VectorXd ridge_mean(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double prior_variance);

// ---- network sweeps -------------------------------------------------------------

enum class SweepAxis { width, depth, feature_count, data_count };

std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& name);

struct SweepConfig {
  SweepAxis axis = SweepAxis::depth;
  std::vector<int> values;
  int repetitions = 1;
  TrainConfig train;
  std::uint64_t seed = 0;
  Eigen::Index n_train = 3000;  // data_count sweeps override this per cell
  int base_width = 20;          // hidden width for depth sweeps
  int base_depth = 3;           // hidden layers for width sweeps
  double data_noise = kTwoSpiralsNoise;

  void validate() const;
};

struct SweepRecord {
  int value = 0;
  int repetition = 0;
  Eigen::Index param_count = 0;
  MeasureReport report;
};

/// Trains one network per (value, repetition) on two-spirals data and
/// evaluates the chosen measures. Data depend only on the repetition; init
/// and minibatch order on derive_seed(seed, value, repetition). Cells run on
/// `jobs` threads and are merged in (value, repetition) order. A diverged cell
/// is reported with its status and the sweep continues.
std::vector<SweepRecord> depth_width_sweep(const MlpSpec& base, const SweepConfig& cfg, const MeasureConfig& measures,
                                           int jobs = 1);

void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRecord>& rows);

/// Runs fn(i) for i in [0, count) on `jobs` threads; fn must write only to its own slot.
void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn);

// ---- Laplace approximation of a small BNN -------------------------------------

struct BnnLaplaceRecord {
  Eigen::Index n = 0;
  double n_eff_covariance = 0.0;
  double train_loss = 0.0;
  double gradient_norm = 0.0;
};

/// MAP fit of bnn_spec() on gen_bnn_regression(n) with Gaussian prior and noise
/// std kBnnNoiseStd, then N_eff(Laplace covariance, z) from the dense precision.
BnnLaplaceRecord bnn_laplace_neff(Eigen::Index n, std::uint64_t seed, double prior_variance, double z,
                                  const TrainConfig& train);

}  // namespace effdim
