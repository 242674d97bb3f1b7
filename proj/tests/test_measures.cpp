#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>

#include "effdim/error.hpp"
#include "effdim/measures.hpp"
#include "test_util.hpp"

using namespace effdim;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an effdim::Error");
  return ErrorKind::Io;
}

// Sum over every input->output path (bias units count as path sources) of
// the product of squared weights along it.
double brute_force_path_sum(const MlpSpec& spec, const ParamVector& p) {
  struct Layer {
    Eigen::Index w, b;
    int in, out;
  };
  std::vector<Layer> layers;
  Eigen::Index off = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const int in = spec.width(l), out = spec.width(l + 1);
    layers.push_back({off, off + Eigen::Index(in) * out, in, out});
    off += Eigen::Index(in) * out + (spec.use_bias ? out : 0);
  }
  std::function<double(int, int)> from = [&](int l, int unit) -> double {
    // Paths leaving `unit` of layer boundary l and ending at any output.
    if (l == spec.num_layers()) return 1.0;
    const Layer& L = layers[static_cast<std::size_t>(l)];
    double s = 0.0;
    for (int o = 0; o < L.out; ++o) {
      const double w = p[L.w + Eigen::Index(o) * L.in + unit];
      s += w * w * from(l + 1, o);
    }
    return s;
  };
  double total = 0.0;
  for (int i = 0; i < spec.input_dim; ++i) total += from(0, i);
  if (spec.use_bias)
    for (int l = 0; l < spec.num_layers(); ++l) {
      const Layer& L = layers[static_cast<std::size_t>(l)];
      for (int o = 0; o < L.out; ++o) total += p[L.b + o] * p[L.b + o] * from(l + 1, o);
    }
  return total;
}

MeasureReport report(double n_eff, double test_loss, double train_loss = 0.0) {
  MeasureReport r;
  r.n_eff_hessian = n_eff;
  r.test_loss = test_loss;
  r.train_loss = train_loss;
  return r;
}

}  // namespace

TEST_CASE("path norm examples") {
  Rng rng(1);
  const MlpSpec linear{3, 2, {}, Activation::elu, false};
  const ParamVector w = standard_normal(6, rng);
  CHECK(path_norm(linear, w) == doctest::Approx(w.norm()).epsilon(1e-14));

  const MlpSpec chain{1, 1, {1}, Activation::relu, false};
  CHECK(path_norm(chain, Eigen::Vector2d(-1.5, 4.0)) == doctest::Approx(6.0));

  for (const MlpSpec& spec : {MlpSpec{2, 2, {2}, Activation::elu, false}, MlpSpec{2, 2, {2}, Activation::tanh, true},
                              MlpSpec{3, 2, {4, 4}, Activation::relu, true}}) {
    const ParamVector p = standard_normal(spec.parameter_count(), rng);
    CHECK(std::abs(path_norm(spec, p) - std::sqrt(brute_force_path_sum(spec, p))) <= 1e-10);
  }
}

TEST_CASE("property: path norm ignores hidden-unit permutations") {
  Rng rng(2);
  const MlpSpec spec{2, 1, {3}, Activation::elu, true};
  const ParamVector p = standard_normal(spec.parameter_count(), rng);
  // Layout: W1 (3x2) | b1 (3) | W2 (1x3) | b2 (1). Swap hidden units 0 and 2.
  ParamVector q = p;
  const int perm[3] = {2, 1, 0};
  for (int h = 0; h < 3; ++h) {
    q[2 * h] = p[2 * perm[h]];
    q[2 * h + 1] = p[2 * perm[h] + 1];
    q[6 + h] = p[6 + perm[h]];
    q[9 + h] = p[9 + perm[h]];
  }
  CHECK(forward(spec, p, Eigen::MatrixXd::Ones(1, 2)).isApprox(forward(spec, q, Eigen::MatrixXd::Ones(1, 2))));
  CHECK(path_norm(spec, p) == doctest::Approx(path_norm(spec, q)).epsilon(1e-14));
}

TEST_CASE("sigma search saturates on a constant landscape") {
  SigmaSearchConfig cfg;
  cfg.mc_samples = 20;
  const SharpnessResult r =
      sigma_search(ParamVector::Zero(4), [](const ParamVector&) { return 0.3; }, Eigen::VectorXd::Ones(4), 0.0, cfg);
  CHECK(r.saturated);
  CHECK(r.sigma == cfg.sigma_hi);
  CHECK(r.measure == doctest::Approx(1.0 / (cfg.sigma_hi * cfg.sigma_hi)));
}

TEST_CASE("sigma search on the quadratic surrogate") {
  Rng rng(3);
  const Eigen::Index p = 20;
  const Eigen::VectorXd a = (standard_normal(p, rng).array().abs() + 0.1).matrix();
  const ParamVector theta = standard_normal(p, rng);
  const double e0 = 0.01;
  auto surrogate = [&](const Eigen::VectorXd& curv) {
    return [&theta, curv, e0](const ParamVector& t) {
      const Eigen::VectorXd u = t - theta;
      return std::min(1.0, e0 + 0.5 * u.dot(curv.cwiseProduct(u)));
    };
  };
  SigmaSearchConfig cfg;
  cfg.mc_samples = 10000;
  cfg.seed = 4;
  const SharpnessResult r = sigma_search(theta, surrogate(a), Eigen::VectorXd::Ones(p), 0.0, cfg);
  CHECK_FALSE(r.saturated);
  CHECK(testutil::rel_err(r.measure, 5.0 * a.sum()) <= 0.05);

  // Flatter landscape, smaller measure.
  const SharpnessResult flat = sigma_search(theta, surrogate(0.5 * a), Eigen::VectorXd::Ones(p), 0.0, cfg);
  CHECK(flat.measure < r.measure);

  // Same per-coordinate curvature in twice the dimension, larger measure.
  Eigen::VectorXd a2(2 * p);
  a2 << a, a;
  const ParamVector theta2 = ParamVector::Zero(2 * p);
  auto wide = [&a2, e0](const ParamVector& t) { return std::min(1.0, e0 + 0.5 * t.dot(a2.cwiseProduct(t))); };
  CHECK(sigma_search(theta2, wide, Eigen::VectorXd::Ones(2 * p), 0.0, cfg).measure > r.measure);
}

TEST_CASE("magnitude-aware sigma search on the diagonal surrogate") {
  Rng rng(5);
  const Eigen::Index p = 15;
  const Eigen::VectorXd a = (standard_normal(p, rng).array().abs() + 0.2).matrix();
  const ParamVector theta = 2.0 * standard_normal(p, rng);
  const double eps = kMagnitudeEpsilon;
  auto err = [&](const ParamVector& t) {
    const Eigen::VectorXd u = t - theta;
    return std::min(1.0, 0.5 * u.dot(a.cwiseProduct(u)));
  };
  SigmaSearchConfig cfg;
  cfg.mc_samples = 10000;
  cfg.seed = 6;
  const Eigen::VectorXd coeffs = theta.array().square();
  const SharpnessResult r = sigma_search(theta, err, coeffs, eps, cfg);
  // E[0.5 u^T A u] = 0.5 sum A_ii (s^2 theta_i^2 + eps) = 0.1
  const double s2 = (0.2 - eps * a.sum()) / a.dot(coeffs);
  CHECK(testutil::rel_err(r.measure, 1.0 / s2) <= 0.05);

  // theta = 0: only the floor is left, nothing depends on sigma'.
  const SharpnessResult zero = sigma_search(ParamVector::Zero(p), err, Eigen::VectorXd::Zero(p), eps, cfg);
  CHECK(zero.saturated);
}

TEST_CASE("sharpness measures on a network need classification data") {
  Rng rng(7);
  const MlpSpec spec{2, 2, {4}, Activation::tanh, true};
  Dataset d;
  d.task = Task::regression;
  d.inputs = standard_normal(5, 2, rng);
  d.targets = standard_normal(5, 2, rng);
  const ParamVector p = init_params(spec, 1);
  CHECK(kind_of([&] { pac_bayes_sharpness(spec, p, d, {}); }) == ErrorKind::InvalidInput);
  CHECK(kind_of([&] { mag_pac_bayes_sharpness(spec, p, d, {}); }) == ErrorKind::InvalidInput);
  SigmaSearchConfig bad;
  bad.sigma_lo = 2.0;
  bad.sigma_hi = 1.0;
  CHECK(kind_of([&] { bad.validate(); }) == ErrorKind::InvalidConfig);
}

TEST_CASE("Occam factor examples") {
  Rng rng(8);
  const ParamVector theta = standard_normal(6, rng);
  const double pv = 1.3;
  const double z = 0.25;
  const double log_prior = -0.5 * theta.squaredNorm() / pv - 3.0 * std::log(2.0 * M_PI * pv);
  const Eigen::VectorXd at_2pi = Eigen::VectorXd::Constant(6, 2.0 * M_PI - z);
  CHECK(occam_log_factor(at_2pi, theta, pv, z) == doctest::Approx(log_prior).epsilon(1e-12));

  // Strictly decreasing in every eigenvalue.
  const Eigen::VectorXd lam = standard_normal(6, rng).cwiseAbs();
  const double base = occam_log_factor(lam, theta, pv, z);
  for (Eigen::Index i = 0; i < 6; ++i) {
    Eigen::VectorXd up = lam;
    up[i] += 0.1;
    CHECK(occam_log_factor(up, theta, pv, z) < base);
  }
}

TEST_CASE("Occam factor completes the conjugate evidence") {
  Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index n = 4 + trial, k = 3 + trial % 5;
    const Eigen::MatrixXd phi = standard_normal(n, k, rng);
    const double a2 = 0.5 + trial * 0.3, s2 = 0.4 + trial * 0.1;
    const Eigen::VectorXd y = phi * (std::sqrt(a2) * standard_normal(k, rng)) + std::sqrt(s2) * standard_normal(n, rng);
    const Eigen::MatrixXd hdata = phi.transpose() * phi / s2;
    const Eigen::MatrixXd precision = hdata + Eigen::MatrixXd::Identity(k, k) / a2;
    const Eigen::VectorXd mp = precision.ldlt().solve(phi.transpose() * y / s2);
    const double log_lik = -0.5 * (y - phi * mp).squaredNorm() / s2 - 0.5 * n * std::log(2.0 * M_PI * s2);

    const Eigen::MatrixXd cov = a2 * phi * phi.transpose() + s2 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::LLT<Eigen::MatrixXd> llt(cov);
    const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    const double log_evidence = -0.5 * y.dot(llt.solve(y)) - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);

    const double occam = occam_log_factor(dense_eigh(hdata).eigenvalues, mp, a2, 1.0 / a2);
    CHECK(std::abs(log_lik + occam - log_evidence) <= 1e-6);
  }
}

TEST_CASE("Hessian effective dimensionality via Lanczos") {
  Rng rng(10);
  const MlpSpec spec{2, 2, {6}, Activation::tanh, true};
  Dataset d;
  d.inputs = standard_normal(40, 2, rng);
  d.labels.resize(40);
  for (int i = 0; i < 40; ++i) d.labels[i] = d.inputs(i, 0) * d.inputs(i, 1) > 0;
  const ParamVector p = 2.0 * init_params(spec, 3);
  const double z = 1e-3;

  const double dense = effective_dimensionality(dense_eigh(full_hessian(spec, p, d).matrix), z);
  LanczosConfig cfg;
  cfg.steps = static_cast<int>(spec.parameter_count());
  const HessianEffDim lz = hessian_eff_dim(spec, p, d, z, cfg);
  CHECK(testutil::rel_err(lz.n_eff, dense) <= 0.01);
  CHECK(hessian_eff_dim(spec, p, d, 1e12, cfg).n_eff < 1e-9);

  // Clamped eigenvalues are non-negative, so more Ritz values never lower the estimate.
  const Eigen::VectorXd& ritz = lz.spectrum.eigenvalues;
  double prev = 0.0;
  for (Eigen::Index m = 1; m <= ritz.size(); ++m) {
    const double ne = effective_dimensionality(Eigen::VectorXd(ritz.head(m)), z);
    CHECK(ne >= prev);
    prev = ne;
  }
}

TEST_CASE("Pearson correlation") {
  std::vector<MeasureReport> rs;
  const double xs[] = {1, 2, 4, 7};
  const double ys[] = {2, 1, 5, 6};
  for (int i = 0; i < 4; ++i) rs.push_back(report(xs[i], ys[i]));
  CHECK(pearson_correlation(rs, "test_loss", "test_loss", 0.1) == doctest::Approx(1.0));
  for (auto& r : rs) r.path_norm = -r.test_loss;
  CHECK(pearson_correlation(rs, "path_norm", "test_loss", 0.1) == doctest::Approx(-1.0));

  // Both means are 3.5: sxy = 17, sxx = 21, syy = 17.
  CHECK(pearson_correlation(rs, "n_eff_hessian", "test_loss", 0.1) == doctest::Approx(std::sqrt(17.0 / 21.0)));

  rs[0].train_loss = 0.5;  // dropped by the cutoff
  rs[1].status = "diverged";
  CHECK(kind_of([&] { pearson_correlation(rs, "n_eff_hessian", "test_loss", 0.1); }) == ErrorKind::InsufficientData);
  CHECK(kind_of([] { pearson({1, 1, 1}, {1, 2, 3}); }) == ErrorKind::UndefinedCorrelation);
  CHECK(kind_of([&] { report_field(rs[0], "nope"); }) == ErrorKind::InvalidConfig);
  rs[2].test_error = 0.3;
  rs[2].train_error = 0.1;
  CHECK(report_field(rs[2], "generalization_gap") == doctest::Approx(0.2));
}

TEST_CASE("measure sets and report CSV") {
  const MeasureSet s = MeasureSet::parse("n_eff,occam");
  CHECK(s.n_eff);
  CHECK(s.occam);
  CHECK_FALSE(s.path_norm);
  CHECK(MeasureSet::parse("all").pac_bayes);
  CHECK(kind_of([] { MeasureSet::parse("margin"); }) == ErrorKind::InvalidConfig);

  MeasureReport r = report(3.25, 0.5);
  r.model_id = "m,1";
  std::ostringstream os;
  write_measure_csv(os, {r});
  const std::string csv = os.str();
  CHECK(csv.rfind(std::string(kMeasureCsvHeader) + "\n", 0) == 0);
  CHECK(csv.find("\"m,1\",3.25,") != std::string::npos);
}

TEST_CASE("evaluate_measures fills the selected columns") {
  Rng rng(11);
  const MlpSpec spec{2, 1, {5}, Activation::elu, true};
  auto make = [&](Eigen::Index n) {
    Dataset d;
    d.inputs = standard_normal(n, 2, rng);
    d.labels.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) d.labels[i] = d.inputs(i, 0) > 0;
    return d;
  };
  const Dataset train = make(50), test = make(50);
  MeasureConfig cfg;
  cfg.z = 0.01;
  cfg.lanczos.steps = 10;
  cfg.sigma.mc_samples = 20;
  cfg.set = MeasureSet::parse("n_eff,path_norm,occam");
  const MeasureReport r = evaluate_measures("tiny", spec, init_params(spec, 2), train, test, cfg);
  CHECK(r.ok());
  CHECK(r.z_used == 0.01);
  CHECK(std::isfinite(r.n_eff_hessian));
  CHECK(r.log_path_norm == doctest::Approx(std::log(r.path_norm)));
  CHECK(std::isfinite(r.occam_log_factor));
  CHECK(std::isnan(r.pac_bayes));
  CHECK(std::isnan(r.mag_pac_bayes));
  CHECK(r.train_error >= 0.0);
  CHECK(r.test_error <= 1.0);
}
