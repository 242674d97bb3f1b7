#include <cmath>
#include <numbers>

#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/random.hpp"

namespace effdim {

namespace {

void standardize_columns(Eigen::MatrixXd& x) {
  const Eigen::Index n = x.rows();
  if (n == 0) return;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    auto col = x.col(j);
    col.array() -= col.mean();
    const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) col /= sd;
  }
}

Dataset paired_arms(Eigen::Index n, const Eigen::MatrixXd& arm0, const Eigen::MatrixXd& arm1, bool standardize) {
  // Rows alternate class 0 / class 1; an odd n ends on class 0.
  Dataset d;
  d.task = Task::classification;
  d.inputs.resize(n, 2);
  d.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index j = i / 2;
    if (i % 2 == 0) {
      d.inputs.row(i) = arm0.row(j);
      d.labels[i] = 0;
    } else {
      d.inputs.row(i) = arm1.row(j);
      d.labels[i] = 1;
    }
  }
  if (standardize) standardize_columns(d.inputs);
  return d;
}

}  // namespace

Dataset gen_swiss_roll(Eigen::Index n, double noise, std::uint64_t seed, bool standardize) {
  if (n < 2) throw Error(ErrorKind::InvalidInput, "Swiss roll needs at least 2 points");
  if (noise < 0.0) throw Error(ErrorKind::InvalidInput, "noise must be non-negative");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index n0 = n - n / 2;
  const Eigen::Index n1 = n / 2;
  auto arm = [&](Eigen::Index count, double sign) {
    Eigen::MatrixXd pts(count, 2);
    for (Eigen::Index i = 0; i < count; ++i) {
      const double t = 1.5 * std::numbers::pi * (1.0 + 2.0 * unit(rng));
      pts(i, 0) = sign * t * std::cos(t) + noise * gauss(rng);
      pts(i, 1) = sign * t * std::sin(t) + noise * gauss(rng);
    }
    return pts;
  };
  const Eigen::MatrixXd a0 = arm(n0, 1.0);
  const Eigen::MatrixXd a1 = arm(n1, -1.0);
  return paired_arms(n, a0, a1, standardize);
}

Dataset gen_two_spirals(Eigen::Index n, std::uint64_t seed, double noise) {
  if (n < 2) throw Error(ErrorKind::InvalidInput, "two spirals needs at least 2 points");
  if (noise < 0.0) throw Error(ErrorKind::InvalidInput, "noise must be non-negative");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index n0 = n - n / 2;
  Eigen::MatrixXd a0(n0, 2);
  for (Eigen::Index i = 0; i < n0; ++i) {
    const double t = 3.0 * std::numbers::pi * std::sqrt(unit(rng));
    a0(i, 0) = -t * std::cos(t) + noise * gauss(rng);
    a0(i, 1) = t * std::sin(t) + noise * gauss(rng);
  }
  const Eigen::MatrixXd a1 = -a0.topRows(n / 2);
  return paired_arms(n, a0, a1, true);
}

LinearTask gen_double_descent_features(Eigen::Index n, Eigen::Index k, std::uint64_t seed, int informative) {
  if (k < 1) throw Error(ErrorKind::InvalidInput, "need at least one feature");
  if (n < 0 || informative < 0) throw Error(ErrorKind::InvalidInput, "sizes must be non-negative");
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index inf = std::min<Eigen::Index>(k, informative);
  auto draw = [&](Eigen::MatrixXd& x, Eigen::VectorXd& y) {
    y.resize(n);
    x.resize(n, k);
    for (Eigen::Index i = 0; i < n; ++i) y[i] = gauss(rng);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < k; ++j) x(i, j) = (j < inf ? y[i] : 0.0) + gauss(rng);
  };
  LinearTask task;
  draw(task.train_features, task.train_targets);
  draw(task.test_features, task.test_targets);
  return task;
}

Dataset gen_bnn_regression(Eigen::Index n, std::uint64_t seed) {
  if (n < 1) throw Error(ErrorKind::InvalidInput, "need at least one point");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double w1 = gauss(rng), w2 = gauss(rng), w3 = gauss(rng);
  Dataset d;
  d.task = Task::regression;
  Eigen::MatrixXd x(n, 1);
  d.targets.resize(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = unit(rng);
    const double x2 = xi * xi;
    x(i, 0) = xi;
    d.targets(i, 0) = w1 * xi + w2 * x2 + w3 * x2 * xi + (0.5 + x2) * (0.5 + x2) + std::sin(4.0 * x2) +
                      kBnnNoiseStd * gauss(rng);
  }
  standardize_columns(x);
  // Powers 0..2 of the standardized input; a bias-free tanh net on x alone is odd.
  d.inputs.resize(n, 3);
  d.inputs.col(0).setOnes();
  d.inputs.col(1) = x.col(0);
  d.inputs.col(2) = x.col(0).array().square().matrix();
  return d;
}

MlpSpec swiss_roll_spec() { return MlpSpec{2, 1, std::vector<int>(6, 20), Activation::elu, true}; }

MlpSpec bnn_spec() { return MlpSpec{3, 1, {20, 20}, Activation::tanh, false}; }

}  // namespace effdim
