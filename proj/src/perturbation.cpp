#include <algorithm>
#include <cmath>
#include <numeric>

#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/random.hpp"

namespace effdim {

namespace {

constexpr int kMaxResamples = 8;

const Eigen::MatrixXd& eigenvectors_of(const SymmetricSpectrum& spectrum) {
  if (!spectrum.eigenvectors) throw Error(ErrorKind::InvalidInput, "basis selector needs eigenvectors");
  return *spectrum.eigenvectors;
}

Eigen::VectorXd symmetric_grid(double radius, int resolution) {
  if (radius == 0.0 || resolution == 1) return Eigen::VectorXd::Zero(1);
  Eigen::VectorXd g(resolution);
  const int half = (resolution - 1) / 2;
  for (int i = 0; i < resolution; ++i) g[i] = radius * static_cast<double>(i - half) / half;
  return g;
}

}  // namespace

std::string to_string(BasisSelector s) {
  switch (s) {
    case BasisSelector::top_k: return "top_k";
    case BasisSelector::bottom_k: return "bottom_k";
    case BasisSelector::random: return "random";
    case BasisSelector::nullspace: return "nullspace";
  }
  return "?";
}

BasisSelector basis_selector_from_string(const std::string& name) {
  if (name == "top_k" || name == "top") return BasisSelector::top_k;
  if (name == "bottom_k" || name == "bottom") return BasisSelector::bottom_k;
  if (name == "random") return BasisSelector::random;
  if (name == "nullspace") return BasisSelector::nullspace;
  throw Error(ErrorKind::InvalidConfig, "unknown basis selector '" + name + "'");
}

Eigen::MatrixXd select_basis(const SymmetricSpectrum& spectrum, BasisSelector selector, Eigen::Index k) {
  if (selector == BasisSelector::random) return Eigen::MatrixXd::Identity(spectrum.source_dim, spectrum.source_dim);
  const Eigen::MatrixXd& vecs = eigenvectors_of(spectrum);
  const Eigen::VectorXd& vals = spectrum.eigenvalues;
  const Eigen::Index m = vals.size();
  if ((selector == BasisSelector::top_k || selector == BasisSelector::bottom_k) && (k < 0 || k > m))
    throw Error(ErrorKind::InvalidInput, "k = " + std::to_string(k) + " outside the " + std::to_string(m) +
                                             " available eigenvectors");
  switch (selector) {
    case BasisSelector::top_k:
      return vecs.leftCols(k);
    case BasisSelector::bottom_k: {
      std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
      std::iota(order.begin(), order.end(), Eigen::Index{0});
      std::stable_sort(order.begin(), order.end(),
                       [&](Eigen::Index a, Eigen::Index b) { return std::abs(vals[a]) < std::abs(vals[b]); });
      Eigen::MatrixXd out(vecs.rows(), k);
      for (Eigen::Index j = 0; j < k; ++j) out.col(j) = vecs.col(order[static_cast<std::size_t>(j)]);
      return out;
    }
    case BasisSelector::nullspace: {
      const double top = m > 0 ? vals.cwiseAbs().maxCoeff() : 0.0;
      std::vector<Eigen::Index> keep;
      for (Eigen::Index i = 0; i < m; ++i)
        if (std::abs(vals[i]) <= kRankTolerance * top) keep.push_back(i);
      Eigen::MatrixXd out(vecs.rows(), static_cast<Eigen::Index>(keep.size()));
      for (std::size_t j = 0; j < keep.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = vecs.col(keep[j]);
      return out;
    }
    case BasisSelector::random:
      break;
  }
  return {};
}

ParamVector subspace_perturb(const ParamVector& theta, const SymmetricSpectrum& spectrum, const PerturbationSpec& p) {
  if (p.scale < 0.0) throw Error(ErrorKind::InvalidInput, "perturbation scale must be non-negative");
  if (spectrum.source_dim != theta.size()) throw Error(ErrorKind::Shape, "spectrum and parameters differ in dimension");
  if (p.scale == 0.0) return theta;
  const Eigen::MatrixXd basis = select_basis(spectrum, p.selector, p.k);
  if (basis.cols() == 0) throw Error(ErrorKind::DegenerateDirection, "empty perturbation basis");
  for (int attempt = 0; attempt <= kMaxResamples; ++attempt) {
    Rng rng(derive_seed({p.seed, static_cast<std::uint64_t>(attempt)}));
    const Eigen::VectorXd d = basis * standard_normal(basis.cols(), rng);
    const double norm = d.norm();
    if (norm > 0.0 && std::isfinite(norm)) return theta + (p.scale / norm) * d;
  }
  throw Error(ErrorKind::DegenerateDirection, "B v vanished on every draw");
}

LossSurfaceGrid loss_surface_projection(const MlpSpec& spec, const ParamVector& theta, const Dataset& data,
                                        const Eigen::MatrixXd& basis, double alpha_radius, double beta_radius,
                                        std::uint64_t seed, int resolution) {
  if (resolution < 1 || resolution % 2 == 0) throw Error(ErrorKind::InvalidConfig, "grid resolution must be odd");
  if (alpha_radius < 0.0 || beta_radius < 0.0) throw Error(ErrorKind::InvalidInput, "grid radii must be non-negative");
  if (basis.rows() != theta.size()) throw Error(ErrorKind::Shape, "basis rows must match the parameter count");
  if (basis.cols() < 2) throw Error(ErrorKind::DegenerateDirection, "need at least two basis columns");

  LossSurfaceGrid grid;
  Rng rng(seed);
  grid.u = basis * standard_normal(basis.cols(), rng);
  if (!(grid.u.norm() > 0.0)) throw Error(ErrorKind::DegenerateDirection, "first direction vanished");
  grid.u.normalize();
  bool found = false;
  for (int attempt = 0; attempt <= kMaxResamples && !found; ++attempt) {
    Eigen::VectorXd v = basis * standard_normal(basis.cols(), rng);
    const double before = v.norm();
    v -= v.dot(grid.u) * grid.u;
    v -= v.dot(grid.u) * grid.u;
    const double after = v.norm();
    if (after > 1e-8 * before) {
      grid.v = v / after;
      found = true;
    }
  }
  if (!found) throw Error(ErrorKind::DegenerateDirection, "second direction stayed parallel to the first");

  grid.alphas = symmetric_grid(alpha_radius, resolution);
  grid.betas = symmetric_grid(beta_radius, resolution);
  grid.losses.resize(grid.alphas.size(), grid.betas.size());
  for (Eigen::Index i = 0; i < grid.alphas.size(); ++i)
    for (Eigen::Index j = 0; j < grid.betas.size(); ++j) {
      const ParamVector p = theta + grid.alphas[i] * grid.u + grid.betas[j] * grid.v;
      grid.losses(i, j) = loss(spec, p, data).data;
    }
  return grid;
}

double function_agreement(const MlpSpec& spec, const ParamVector& a, const ParamVector& b, const Dataset& data) {
  if (data.task != Task::classification) throw Error(ErrorKind::InvalidInput, "agreement needs a classification task");
  if (data.size() == 0) return 1.0;
  const Eigen::VectorXi pa = predict(spec, a, data.inputs);
  const Eigen::VectorXi pb = predict(spec, b, data.inputs);
  return static_cast<double>((pa.array() == pb.array()).count()) / static_cast<double>(data.size());
}

TrainedModel train_swiss_roll(const SwissRollConfig& cfg) {
  TrainedModel m;
  m.spec = swiss_roll_spec();
  m.train = gen_swiss_roll(cfg.n, cfg.noise, derive_seed({cfg.seed, 1}));
  m.test = gen_swiss_roll(cfg.n, cfg.noise, derive_seed({cfg.seed, 2}));
  const ParamVector init = init_params(m.spec, derive_seed({cfg.seed, 3}));
  TrainConfig tc = cfg.train;
  tc.seed = derive_seed({cfg.seed, 4});
  TrainResult r = train(m.spec, init, m.train, tc);
  m.params = std::move(r.params);
  m.loss_trace = std::move(r.loss_trace);
  return m;
}

bool SwissRollStudy::agreement_pass() const {
  return bottom.train_agreement >= 0.99 && bottom.test_agreement >= 0.99 &&
         top.train_agreement <= bottom.train_agreement - 0.05 && top.test_agreement <= bottom.test_agreement - 0.05;
}

bool SwissRollStudy::surface_pass() const { return 100.0 * bottom_grid.range() <= top_grid.range(); }

SwissRollStudy swiss_roll_study(const SwissRollStudyConfig& cfg) {
  const std::uint64_t seed = cfg.model.seed;
  SwissRollStudy s;
  const double z = 1.0 / static_cast<double>(cfg.model.n);
  LanczosConfig lc;
  lc.steps = 100;
  lc.seed = derive_seed({seed, 9});
  lc.compute_eigenvectors = false;

  {
    // Curvature at initialization, for comparison with the trained optimum.
    const MlpSpec spec = swiss_roll_spec();
    const Dataset train = gen_swiss_roll(cfg.model.n, cfg.model.noise, derive_seed({seed, 1}));
    const ParamVector init = init_params(spec, derive_seed({seed, 3}));
    const HessianEffDim he = hessian_eff_dim(spec, init, train, z, lc);
    s.top_eigenvalue_init = he.spectrum.eigenvalues[0];
    s.n_eff_init = he.n_eff;
  }

  const TrainedModel m = train_swiss_roll(cfg.model);
  s.n_eff_final = hessian_eff_dim(m.spec, m.params, m.train, z, lc).n_eff;
  s.train_accuracy = 1.0 - classification_error(m.spec, m.params, m.train);
  s.test_accuracy = 1.0 - classification_error(m.spec, m.params, m.test);
  s.theta_norm = m.params.norm();

  HessianMatrix h = full_hessian(m.spec, m.params, m.train);
  s.hessian_asymmetry = h.max_asymmetry;
  s.spectrum = dense_eigh(h.matrix);
  s.top_eigenvalue_final = s.spectrum.eigenvalues[0];

  auto agreement = [&](BasisSelector sel, Eigen::Index k, double scale, std::uint64_t pseed) {
    const ParamVector moved = subspace_perturb(m.params, s.spectrum, {sel, k, scale, pseed});
    AgreementReport r;
    r.basis = to_string(sel);
    r.k = k;
    r.scale = scale;
    r.train_agreement = function_agreement(m.spec, m.params, moved, m.train);
    r.test_agreement = function_agreement(m.spec, m.params, moved, m.test);
    return r;
  };
  s.bottom = agreement(BasisSelector::bottom_k, cfg.bottom_k, s.theta_norm / 2.0, derive_seed({seed, 5}));
  s.top = agreement(BasisSelector::top_k, cfg.top_k, cfg.top_scale, derive_seed({seed, 6}));

  s.top_grid = loss_surface_projection(m.spec, m.params, m.train, select_basis(s.spectrum, BasisSelector::top_k, cfg.top_k),
                                       1.0, 1.0, derive_seed({seed, 7}), cfg.resolution);
  s.bottom_grid = loss_surface_projection(m.spec, m.params, m.train,
                                          select_basis(s.spectrum, BasisSelector::bottom_k, cfg.surface_bottom_k),
                                          s.theta_norm, s.theta_norm, derive_seed({seed, 8}), cfg.resolution);
  return s;
}

}  // namespace effdim
