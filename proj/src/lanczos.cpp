#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "effdim/error.hpp"
#include "effdim/random.hpp"
#include "effdim/spectral.hpp"

namespace effdim {

namespace {

// Relative size of the Krylov residual below which the subspace is treated
// as invariant.
constexpr double kBreakdownTolerance = 1e-10;

}  // namespace

SymmetricSpectrum lanczos_topk(const MatrixFreeOperator& op, const LanczosConfig& cfg) {
  const Eigen::Index n = op.dim;
  if (n <= 0 || !op.apply) throw Error(ErrorKind::InvalidInput, "operator is empty");
  if (cfg.steps < 1) throw Error(ErrorKind::InvalidConfig, "lanczos steps must be positive");
  if (cfg.steps > n)
    throw Error(ErrorKind::InvalidConfig, "lanczos steps (" + std::to_string(cfg.steps) +
                                              ") exceed operator dimension (" + std::to_string(n) + ")");
  if (!(cfg.tolerance > 0.0)) throw Error(ErrorKind::InvalidConfig, "lanczos tolerance must be positive");

  const int steps = cfg.steps;
  Eigen::MatrixXd basis(n, steps);
  Eigen::VectorXd alpha(steps);
  Eigen::VectorXd beta(steps);

  Rng rng(cfg.seed);
  Eigen::VectorXd q = standard_normal(n, rng);
  q /= q.norm();
  basis.col(0) = q;

  int m = 0;
  double anorm = 0.0;
  double last_beta = 0.0;
  bool broke_down = false;
  for (int j = 0; j < steps; ++j) {
    Eigen::VectorXd w = op.apply(basis.col(j));
    if (w.size() != n) throw Error(ErrorKind::Shape, "operator returned a vector of the wrong size");
    if (!w.allFinite()) throw Error(ErrorKind::InvalidInput, "operator produced non-finite values");

    alpha[j] = basis.col(j).dot(w);
    w -= alpha[j] * basis.col(j);
    if (j > 0) w -= beta[j - 1] * basis.col(j - 1);

    if (cfg.reorthogonalize) {
      // Two passes of classical Gram-Schmidt against the whole basis.
      for (int pass = 0; pass < 2; ++pass) {
        const auto active = basis.leftCols(j + 1);
        w -= active * (active.transpose() * w);
      }
    }

    beta[j] = w.norm();
    anorm = std::max(anorm, std::abs(alpha[j]) + beta[j] + (j > 0 ? beta[j - 1] : 0.0));
    m = j + 1;
    last_beta = beta[j];

    if (beta[j] <= kBreakdownTolerance * std::max(anorm, std::numeric_limits<double>::min())) {
      broke_down = m < steps;
      last_beta = 0.0;
      break;
    }
    if (j + 1 < steps) basis.col(j + 1) = w / beta[j];
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> tri;
  const Eigen::VectorXd diag = alpha.head(m);
  const Eigen::VectorXd sub = beta.head(std::max(m - 1, 0));
  tri.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (tri.info() != Eigen::Success) throw Error(ErrorKind::Convergence, "tridiagonal eigensolver failed");

  // Ascending -> descending.
  const Eigen::VectorXd ritz = tri.eigenvalues().reverse();
  const Eigen::MatrixXd s = tri.eigenvectors().rowwise().reverse();

  SymmetricSpectrum out;
  out.source_dim = n;
  out.eigenvalues = ritz;
  out.truncated = broke_down;
  out.residuals = (last_beta * s.row(m - 1).transpose()).cwiseAbs();
  if (cfg.compute_eigenvectors) out.eigenvectors = basis.leftCols(m) * s;
  return out;
}

}  // namespace effdim
