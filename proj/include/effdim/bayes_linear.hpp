#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "effdim/spectral.hpp"

namespace effdim {

// Conjugate Gaussian linear model y ~ N(Phi beta, noise_variance I) with
// prior beta ~ N(0, prior_variance I). Phi is n x k; n may be zero.
struct GaussianLinearModel {
  Eigen::MatrixXd features;
  double prior_variance = 1.0;
  double noise_variance = 1.0;

  Eigen::Index num_observations() const { return features.rows(); }
  Eigen::Index num_features() const { return features.cols(); }

  // Throws InvalidInput on non-finite entries, k == 0 or non-positive variances.
  void validate() const;
};

struct PosteriorSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
  SymmetricSpectrum covariance_spectrum;
};

enum class Link { logit };

// MAP fit of an isotropic-prior logistic regression.
struct GlmModel {
  Eigen::MatrixXd features;
  Eigen::VectorXd targets;  // in {0, 1}
  Link link = Link::logit;
  Eigen::VectorXd map_estimate;
  double prior_variance = 1.0;
  double gradient_norm = 0.0;
  int iterations = 0;
};

/// Row i is [cos(pi x_i), sin(pi x_i), cos(2 pi x_i), sin(2 pi x_i), ...].
Eigen::MatrixXd sinusoidal_features(const Eigen::VectorXd& x, int num_features);

/// Exact posterior; the precision Phi^T Phi / sigma^2 + I / alpha^2 is
/// Cholesky-factored and the covariance recovered by triangular solves.
PosteriorSummary posterior(const GaussianLinearModel& model, const Eigen::VectorXd& targets);

/// k alpha^2 - tr(posterior covariance).
double posterior_contraction_trace(const GaussianLinearModel& model, const Eigen::VectorXd& targets);

/// alpha^2 * N_eff(Phi^T Phi / sigma^2, alpha^-2), summed over the nonzero
/// Gram eigenvalues (min(n, k) of them).
double posterior_contraction_closed_form(const GaussianLinearModel& model);

/// Contraction of the function-space covariance on the training inputs,
///   alpha^2 N_eff((Phi^T Phi)^+, alpha^2/sigma^2) + (alpha^2 - sigma^2) N_eff(Phi^T Phi, sigma^2/alpha^2)
/// which equals alpha^2 r - sigma^2 N_eff(Phi^T Phi, sigma^2/alpha^2).
/// Requires tr(Phi Phi^T) = rank(Phi Phi^T) within 1e-6 (Precondition error otherwise).
double function_space_contraction(const GaussianLinearModel& model);

/// Risk of the posterior-mean predictor on fresh noise at the training
/// inputs: sigma^2 (1 + N_eff(Phi Phi^T, sigma^2/alpha^2) / n). With unit
/// noise this is 1 + N_eff(Phi Phi^T, alpha^-2) / n.
double predictive_risk(const GaussianLinearModel& model);

/// E ||f||_H^2 = N_eff(K, sigma^2) for y ~ N(0, K + sigma^2 I).
double expected_rkhs_norm(const Eigen::MatrixXd& kernel, double noise_variance);

/// Orthonormal basis (k x (k - rank)) of null(Phi), from the right singular
/// vectors of Phi. Empty when Phi has full column rank.
Eigen::MatrixXd undetermined_subspace(const GaussianLinearModel& model);

/// Orthonormal basis (k x rank) of the row space of Phi.
Eigen::MatrixXd determined_subspace(const GaussianLinearModel& model);

enum class PerturbationSubspace {
  nullspace,      // null(Phi): the undetermined directions
  row_space,      // row space of Phi
  top_contracted  // single most-contracted posterior eigenvector
};

struct InvarianceReport {
  double max_prediction_deviation = 0.0;  // max_i |g^-1(Phi(beta+u))_i - g^-1(Phi beta)_i|
  double hessian_deviation = 0.0;         // ||H(beta+u) - H(beta)||_F (GLM only)
  double train_loss_change = 0.0;         // |L(beta+u) - L(beta)|
  double perturbation_norm = 0.0;
};

/// Perturbs the posterior mean by a random vector of norm `scale` drawn from
/// the chosen subspace and reports how the training predictions move.
/// Train loss is the mean squared residual.
InvarianceReport nullspace_prediction_invariance(const GaussianLinearModel& model, const Eigen::VectorXd& targets,
                                                 double perturbation_scale, std::uint64_t seed,
                                                 PerturbationSubspace subspace = PerturbationSubspace::nullspace);

/// Newton iterations with backtracking on the penalized logistic negative
/// log-likelihood; converges when the gradient norm is <= 1e-8.
GlmModel glm_fit_map(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double prior_variance);

/// Same protocol as nullspace_prediction_invariance for a fitted GLM; also
/// reports the Frobenius change of the log-likelihood Hessian Phi^T W Phi.
/// Train loss is the mean negative log-likelihood.
InvarianceReport glm_nullspace_invariance(const GlmModel& glm, double perturbation_scale, std::uint64_t seed,
                                          PerturbationSubspace subspace = PerturbationSubspace::nullspace);

/// Log-likelihood Hessian Phi^T diag(p (1 - p)) Phi of a logistic model.
Eigen::MatrixXd glm_loglik_hessian(const Eigen::MatrixXd& features, const Eigen::VectorXd& beta);

/// Orthonormal bases of null(M) and of the row space of M from the SVD of M;
/// singular values <= kRankTolerance * s_max count as zero.
Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& m);
Eigen::MatrixXd row_space_basis(const Eigen::MatrixXd& m);

/// Eigenvalues (descending, length min(n, k)) of Phi^T Phi computed from the
/// smaller Gram matrix.
Eigen::VectorXd gram_eigenvalues(const Eigen::MatrixXd& features);

}  // namespace effdim
