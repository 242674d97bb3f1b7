#include "effdim/bayes_linear.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "effdim/error.hpp"
#include "effdim/random.hpp"
#include "span_sampling.hpp"

namespace effdim {

void GaussianLinearModel::validate() const {
  if (features.cols() < 1) throw Error(ErrorKind::InvalidInput, "model needs at least one feature");
  if (!features.allFinite()) throw Error(ErrorKind::InvalidInput, "features contain non-finite values");
  if (!(prior_variance > 0.0) || !std::isfinite(prior_variance))
    throw Error(ErrorKind::InvalidInput, "prior variance must be positive and finite");
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
    throw Error(ErrorKind::InvalidInput, "noise variance must be positive and finite");
}

Eigen::MatrixXd sinusoidal_features(const Eigen::VectorXd& x, int num_features) {
  if (num_features < 2 || num_features % 2 != 0)
    throw Error(ErrorKind::InvalidConfig, "number of sinusoidal features must be even and >= 2");
  Eigen::MatrixXd phi(x.size(), num_features);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    for (int j = 1; j <= num_features / 2; ++j) {
      const double arg = j * std::numbers::pi * x[i];
      phi(i, 2 * j - 2) = std::cos(arg);
      phi(i, 2 * j - 1) = std::sin(arg);
    }
  }
  return phi;
}

Eigen::VectorXd gram_eigenvalues(const Eigen::MatrixXd& features) {
  const Eigen::Index n = features.rows();
  const Eigen::Index k = features.cols();
  if (n == 0 || k == 0) return Eigen::VectorXd(0);
  const Eigen::MatrixXd gram = n <= k ? Eigen::MatrixXd(features * features.transpose())
                                      : Eigen::MatrixXd(features.transpose() * features);
  return dense_eigh(gram).eigenvalues;
}

namespace {

struct Svd {
  Eigen::MatrixXd v;  // full k x k right singular vectors
  Eigen::Index rank = 0;
};

Svd right_singular_vectors(const Eigen::MatrixXd& m) {
  const Eigen::Index k = m.cols();
  Svd out;
  if (m.rows() == 0) {
    out.v = Eigen::MatrixXd::Identity(k, k);
    return out;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double top = s.size() > 0 ? s[0] : 0.0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (top > 0.0 && s[i] > kRankTolerance * top) ++out.rank;
  out.v = svd.matrixV();
  return out;
}

void check_targets(const GaussianLinearModel& model, const Eigen::VectorXd& targets) {
  if (targets.size() != model.num_observations())
    throw Error(ErrorKind::Shape, "targets have length " + std::to_string(targets.size()) + ", expected " +
                                      std::to_string(model.num_observations()));
}

}  // namespace

Eigen::MatrixXd nullspace_basis(const Eigen::MatrixXd& m) {
  const Svd svd = right_singular_vectors(m);
  return svd.v.rightCols(m.cols() - svd.rank);
}

Eigen::MatrixXd row_space_basis(const Eigen::MatrixXd& m) {
  const Svd svd = right_singular_vectors(m);
  return svd.v.leftCols(svd.rank);
}

PosteriorSummary posterior(const GaussianLinearModel& model, const Eigen::VectorXd& targets) {
  model.validate();
  check_targets(model, targets);
  const Eigen::Index k = model.num_features();
  const auto& phi = model.features;

  Eigen::MatrixXd precision = phi.transpose() * phi / model.noise_variance;
  precision.diagonal().array() += 1.0 / model.prior_variance;

  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success) throw Error(ErrorKind::InvalidInput, "posterior precision is not SPD");

  PosteriorSummary out;
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(k, k));
  out.covariance = 0.5 * (cov + cov.transpose());
  out.mean = llt.solve(phi.transpose() * targets / model.noise_variance);
  out.covariance_spectrum = dense_eigh(out.covariance);
  return out;
}

double posterior_contraction_trace(const GaussianLinearModel& model, const Eigen::VectorXd& targets) {
  const PosteriorSummary post = posterior(model, targets);
  return static_cast<double>(model.num_features()) * model.prior_variance - post.covariance.trace();
}

double posterior_contraction_closed_form(const GaussianLinearModel& model) {
  model.validate();
  const Eigen::VectorXd gamma = gram_eigenvalues(model.features) / model.noise_variance;
  return model.prior_variance * effective_dimensionality(gamma, 1.0 / model.prior_variance);
}

double function_space_contraction(const GaussianLinearModel& model) {
  model.validate();
  SymmetricSpectrum gram;
  gram.eigenvalues = gram_eigenvalues(model.features);
  gram.source_dim = model.num_features();

  const double rank = static_cast<double>(numerical_rank(gram.eigenvalues));
  const double trace = gram.eigenvalues.sum();
  if (std::abs(trace - rank) > 1e-6 * std::max(1.0, rank))
    throw Error(ErrorKind::Precondition, "features must satisfy tr(Phi Phi^T) = rank; measured trace " +
                                             std::to_string(trace) + " vs rank " + std::to_string(rank));

  const double a2 = model.prior_variance;
  const double s2 = model.noise_variance;
  const double ratio = s2 / a2;
  const SymmetricSpectrum pinv = pseudo_inverse_spectrum(gram);
  return a2 * effective_dimensionality(pinv, 1.0 / ratio) + (a2 - s2) * effective_dimensionality(gram, ratio);
}

double predictive_risk(const GaussianLinearModel& model) {
  model.validate();
  const Eigen::Index n = model.num_observations();
  if (n < 1) throw Error(ErrorKind::InvalidInput, "predictive risk needs at least one observation");
  const double s2 = model.noise_variance;
  const double n_eff = effective_dimensionality(gram_eigenvalues(model.features), s2 / model.prior_variance);
  return s2 * (1.0 + n_eff / static_cast<double>(n));
}

double expected_rkhs_norm(const Eigen::MatrixXd& kernel, double noise_variance) {
  if (!(noise_variance > 0.0)) throw Error(ErrorKind::InvalidRegularizer, "noise variance must be positive");
  if (kernel.rows() == 0) return 0.0;
  const SymmetricSpectrum spec = dense_eigh(kernel);
  const double top = spec.eigenvalues.cwiseAbs().maxCoeff();
  if (spec.eigenvalues.minCoeff() < -kRankTolerance * top)
    throw Error(ErrorKind::InvalidInput, "kernel is not positive semi-definite");
  return effective_dimensionality(spec, noise_variance);
}

Eigen::MatrixXd undetermined_subspace(const GaussianLinearModel& model) {
  model.validate();
  return nullspace_basis(model.features);
}

Eigen::MatrixXd determined_subspace(const GaussianLinearModel& model) {
  model.validate();
  return row_space_basis(model.features);
}

namespace {

double mean_squared_residual(const Eigen::MatrixXd& phi, const Eigen::VectorXd& beta, const Eigen::VectorXd& y) {
  if (phi.rows() == 0) return 0.0;
  return (phi * beta - y).squaredNorm() / static_cast<double>(phi.rows());
}

}  // namespace

InvarianceReport nullspace_prediction_invariance(const GaussianLinearModel& model, const Eigen::VectorXd& targets,
                                                 double perturbation_scale, std::uint64_t seed,
                                                 PerturbationSubspace subspace) {
  if (perturbation_scale < 0.0) throw Error(ErrorKind::InvalidInput, "perturbation scale must be non-negative");
  const PosteriorSummary post = posterior(model, targets);
  const auto& phi = model.features;

  Eigen::MatrixXd basis;
  switch (subspace) {
    case PerturbationSubspace::nullspace: basis = nullspace_basis(phi); break;
    case PerturbationSubspace::row_space: basis = row_space_basis(phi); break;
    case PerturbationSubspace::top_contracted: {
      const auto& vecs = *post.covariance_spectrum.eigenvectors;
      basis = vecs.rightCols(1);  // smallest posterior variance
      break;
    }
  }

  const Eigen::VectorXd u = detail::draw_in_span(basis, perturbation_scale, seed);
  const Eigen::VectorXd beta = post.mean;
  const Eigen::VectorXd moved = beta + u;

  InvarianceReport report;
  report.perturbation_norm = u.norm();
  if (phi.rows() > 0) report.max_prediction_deviation = (phi * moved - phi * beta).cwiseAbs().maxCoeff();
  report.train_loss_change =
      std::abs(mean_squared_residual(phi, moved, targets) - mean_squared_residual(phi, beta, targets));
  return report;
}

}  // namespace effdim
