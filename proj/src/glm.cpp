#include <cmath>

#include <Eigen/Cholesky>

#include "effdim/bayes_linear.hpp"
#include "effdim/error.hpp"
#include "span_sampling.hpp"

namespace effdim {

namespace {

constexpr int kMaxNewtonIterations = 200;
constexpr double kGradientTolerance = 1e-8;

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& eta) { return eta.unaryExpr([](double v) { return sigmoid(v); }); }

// Sum of per-observation negative log-likelihoods.
double negative_loglik(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd eta = phi * beta;
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) total += softplus(eta[i]) - y[i] * eta[i];
  return total;
}

double penalized_objective(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                           double prior_variance) {
  return negative_loglik(phi, y, beta) + 0.5 * beta.squaredNorm() / prior_variance;
}

}  // namespace

Eigen::MatrixXd glm_loglik_hessian(const Eigen::MatrixXd& features, const Eigen::VectorXd& beta) {
  const Eigen::VectorXd p = sigmoid(Eigen::VectorXd(features * beta));
  const Eigen::VectorXd w = p.array() * (1.0 - p.array());
  return features.transpose() * w.asDiagonal() * features;
}

GlmModel glm_fit_map(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double prior_variance) {
  if (targets.size() != features.rows()) throw Error(ErrorKind::Shape, "targets and features disagree on n");
  if (features.cols() < 1) throw Error(ErrorKind::InvalidInput, "GLM needs at least one feature");
  if (!features.allFinite()) throw Error(ErrorKind::InvalidInput, "features contain non-finite values");
  if (!(prior_variance > 0.0)) throw Error(ErrorKind::InvalidInput, "prior variance must be positive");
  for (double t : targets)
    if (t != 0.0 && t != 1.0) throw Error(ErrorKind::InvalidInput, "logistic targets must be 0 or 1");

  const Eigen::Index k = features.cols();
  GlmModel model;
  model.features = features;
  model.targets = targets;
  model.prior_variance = prior_variance;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
  double objective = penalized_objective(features, targets, beta, prior_variance);
  for (int it = 0; it <= kMaxNewtonIterations; ++it) {
    const Eigen::VectorXd p = sigmoid(Eigen::VectorXd(features * beta));
    const Eigen::VectorXd grad = features.transpose() * (p - targets) + beta / prior_variance;
    model.gradient_norm = grad.norm();
    model.iterations = it;
    if (model.gradient_norm <= kGradientTolerance) {
      model.map_estimate = beta;
      return model;
    }
    if (it == kMaxNewtonIterations) break;

    Eigen::MatrixXd hess = glm_loglik_hessian(features, beta);
    hess.diagonal().array() += 1.0 / prior_variance;
    const Eigen::VectorXd step = Eigen::LLT<Eigen::MatrixXd>(hess).solve(grad);

    // Armijo backtracking; the objective is strictly convex so a full Newton
    // step is accepted close to the optimum.
    const double slope = grad.dot(step);
    double t = 1.0;
    Eigen::VectorXd candidate = beta - step;
    double cand_obj = penalized_objective(features, targets, candidate, prior_variance);
    while (cand_obj > objective - 1e-4 * t * slope && t > 1e-10) {
      t *= 0.5;
      candidate = beta - t * step;
      cand_obj = penalized_objective(features, targets, candidate, prior_variance);
    }
    // Near machine precision the line search can stall on rounding noise; take
    // the Newton step anyway since the quadratic model is exact there.
    if (t <= 1e-10) {
      candidate = beta - step;
      cand_obj = penalized_objective(features, targets, candidate, prior_variance);
    }
    beta = candidate;
    objective = cand_obj;
  }
  throw Error(ErrorKind::Convergence, "Newton did not converge in " + std::to_string(kMaxNewtonIterations) +
                                          " iterations; final gradient norm " + std::to_string(model.gradient_norm));
}

InvarianceReport glm_nullspace_invariance(const GlmModel& glm, double perturbation_scale, std::uint64_t seed,
                                          PerturbationSubspace subspace) {
  if (perturbation_scale < 0.0) throw Error(ErrorKind::InvalidInput, "perturbation scale must be non-negative");
  const auto& phi = glm.features;
  const Eigen::VectorXd& beta = glm.map_estimate;

  Eigen::MatrixXd basis;
  switch (subspace) {
    case PerturbationSubspace::nullspace: basis = nullspace_basis(phi); break;
    case PerturbationSubspace::row_space: basis = row_space_basis(phi); break;
    case PerturbationSubspace::top_contracted: {
      Eigen::MatrixXd precision = glm_loglik_hessian(phi, beta);
      precision.diagonal().array() += 1.0 / glm.prior_variance;
      basis = dense_eigh(precision).eigenvectors->leftCols(1);
      break;
    }
  }

  const Eigen::VectorXd u = detail::draw_in_span(basis, perturbation_scale, seed);
  const Eigen::VectorXd moved = beta + u;

  InvarianceReport report;
  report.perturbation_norm = u.norm();
  if (phi.rows() > 0) {
    const Eigen::VectorXd before = sigmoid(Eigen::VectorXd(phi * beta));
    const Eigen::VectorXd after = sigmoid(Eigen::VectorXd(phi * moved));
    report.max_prediction_deviation = (after - before).cwiseAbs().maxCoeff();
    const double n = static_cast<double>(phi.rows());
    report.train_loss_change =
        std::abs(negative_loglik(phi, glm.targets, moved) - negative_loglik(phi, glm.targets, beta)) / n;
  }
  report.hessian_deviation = (glm_loglik_hessian(phi, moved) - glm_loglik_hessian(phi, beta)).norm();
  return report;
}

}  // namespace effdim
