#include <algorithm>
#include <cmath>

#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/random.hpp"

namespace effdim {

namespace {

Eigen::VectorXd uniform_inputs(Eigen::Index n, Rng& rng) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = unit(rng);
  return x;
}

}  // namespace

TheoremCheck theorem_check(Eigen::Index k, Eigen::Index n, double prior_variance, double noise_variance,
                           std::uint64_t seed) {
  if (k < 2 || k % 2 != 0) throw Error(ErrorKind::InvalidConfig, "k must be even and >= 2");
  if (n < 0) throw Error(ErrorKind::InvalidConfig, "n must be non-negative");
  Rng rng(seed);
  GaussianLinearModel model;
  model.features = sinusoidal_features(uniform_inputs(n, rng), static_cast<int>(k));
  model.prior_variance = prior_variance;
  model.noise_variance = noise_variance;
  model.validate();
  const Eigen::VectorXd beta = std::sqrt(prior_variance) * standard_normal(k, rng);
  const Eigen::VectorXd y = model.features * beta + std::sqrt(noise_variance) * standard_normal(n, rng);

  TheoremCheck out;
  out.k = k;
  out.n = n;
  const PosteriorSummary post = posterior(model, y);
  const Eigen::VectorXd& cov = post.covariance_spectrum.eigenvalues;  // descending
  for (Eigen::Index i = 0; i < cov.size(); ++i)
    if (std::abs(cov[i] - prior_variance) <= 1e-8 * prior_variance) ++out.prior_eigen_count;

  // The remaining eigenvalues pair with the nonzero Gram eigenvalues.
  Eigen::VectorXd gamma = gram_eigenvalues(model.features) / noise_variance;
  const Eigen::Index r = numerical_rank(gamma);
  Eigen::VectorXd expected(r);
  for (Eigen::Index i = 0; i < r; ++i) expected[i] = 1.0 / (gamma[i] + 1.0 / prior_variance);  // ascending
  for (Eigen::Index i = 0; i < r; ++i) {
    const double got = cov[k - 1 - i];
    out.max_rest_deviation = std::max(out.max_rest_deviation, std::abs(got - expected[i]) / expected[i]);
  }

  const double scale = post.mean.norm();
  const double phi_norm = model.features.norm();
  if (k > r && scale > 0.0 && phi_norm > 0.0) {
    const InvarianceReport null_move =
        nullspace_prediction_invariance(model, y, scale, derive_seed({seed, 1}), PerturbationSubspace::nullspace);
    out.nullspace_deviation = null_move.max_prediction_deviation / (scale * phi_norm);
  }
  if (r > 0 && scale > 0.0) {
    const InvarianceReport row_move =
        nullspace_prediction_invariance(model, y, scale, derive_seed({seed, 2}), PerturbationSubspace::row_space);
    out.rowspace_loss_change = row_move.train_loss_change;
  }
  out.pass = out.prior_eigen_count == k - r && out.max_rest_deviation <= 1e-8 && out.nullspace_deviation <= 1e-8 &&
             (r == 0 || out.rowspace_loss_change > 1e-3);
  return out;
}

std::vector<ContractionRecord> contraction_curve(const ContractionConfig& cfg) {
  if (cfg.k < 2 || cfg.k % 2 != 0) throw Error(ErrorKind::InvalidConfig, "k must be even and >= 2");
  if (cfg.n_max < 0) throw Error(ErrorKind::InvalidConfig, "n_max must be non-negative");
  if (!(cfg.prior_variance > 0.0) || !(cfg.noise_variance > 0.0))
    throw Error(ErrorKind::InvalidConfig, "variances must be positive");
  const double z_h = cfg.z_hessian.value_or(1.0 / cfg.prior_variance);

  Rng rng(cfg.seed);
  const Eigen::MatrixXd phi = sinusoidal_features(uniform_inputs(cfg.n_max, rng), cfg.k);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(cfg.k, cfg.k);

  std::vector<ContractionRecord> out;
  out.reserve(static_cast<std::size_t>(cfg.n_max) + 1);
  for (Eigen::Index n = 0; n <= cfg.n_max; ++n) {
    if (n > 0) gram.selfadjointView<Eigen::Lower>().rankUpdate(phi.row(n - 1).transpose());
    Eigen::MatrixXd hessian = gram.selfadjointView<Eigen::Lower>();
    hessian /= cfg.noise_variance;
    SymmetricSpectrum h = dense_eigh(hessian);
    h.eigenvectors.reset();

    ContractionRecord rec;
    rec.n = n;
    Eigen::VectorXd cov(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) cov[i] = 1.0 / (std::max(h.eigenvalues[i], 0.0) + 1.0 / cfg.prior_variance);
    rec.n_eff_covariance = effective_dimensionality(cov, cfg.z_covariance);
    rec.n_eff_hessian = effective_dimensionality(h, z_h);
    rec.contraction = cfg.k * cfg.prior_variance - cov.sum();

    // Eigenvalues at or below the rank tolerance are zeros of the rank count,
    // so zero them on both sides too.
    SymmetricSpectrum psd = h;
    const double cut = kRankTolerance * psd.eigenvalues.cwiseAbs().maxCoeff();
    psd.eigenvalues = psd.eigenvalues.unaryExpr([cut](double l) { return l > cut ? l : 0.0; });
    const double rank = static_cast<double>(numerical_rank(psd.eigenvalues));
    rec.identity_residual = std::abs(rank - effective_dimensionality(psd, z_h) -
                                     effective_dimensionality(pseudo_inverse_spectrum(psd), 1.0 / z_h));
    out.push_back(rec);
  }
  return out;
}

BnnLaplaceRecord bnn_laplace_neff(Eigen::Index n, std::uint64_t seed, double prior_variance, double z,
                                  const TrainConfig& train_cfg) {
  const MlpSpec spec = bnn_spec();
  const Dataset data = gen_bnn_regression(n, derive_seed({seed, 1}));
  const double noise_variance = kBnnNoiseStd * kBnnNoiseStd;

  // MAP of sum (f - y)^2 / (2 s^2) + |theta|^2 / (2 a^2) = (n / s^2) * (mean loss + wd/2 |theta|^2).
  TrainConfig tc = train_cfg;
  tc.weight_decay = noise_variance / (static_cast<double>(n) * prior_variance);
  tc.seed = derive_seed({seed, 3});
  const TrainResult fit = train(spec, init_params(spec, derive_seed({seed, 2})), data, tc);

  BnnLaplaceRecord rec;
  rec.n = n;
  const LossAndGradient lg = loss_and_gradient(spec, fit.params, data, tc.weight_decay);
  rec.train_loss = lg.loss.data;
  rec.gradient_norm = lg.gradient.norm();

  const MatrixFreeOperator precision = laplace_precision(spec, fit.params, data, prior_variance, noise_variance);
  Eigen::MatrixXd dense(precision.dim, precision.dim);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(precision.dim);
  for (Eigen::Index j = 0; j < precision.dim; ++j) {
    e[j] = 1.0;
    dense.col(j) = precision.apply(e);
    e[j] = 0.0;
  }
  dense = 0.5 * (dense + dense.transpose()).eval();
  const Eigen::VectorXd mu = dense_eigh(dense).eigenvalues;
  // Covariance eigenvalues are 1/mu; directions of negative curvature away
  // from an exact optimum get clamped to zero.
  Eigen::VectorXd cov(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) cov[i] = mu[i] > 0.0 ? 1.0 / mu[i] : 0.0;
  rec.n_eff_covariance = effective_dimensionality(cov, z);
  return rec;
}

}  // namespace effdim
