#include "effdim/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>

#include "effdim/error.hpp"
#include "effdim/random.hpp"

namespace effdim {

MatrixFreeOperator MatrixFreeOperator::from_dense(Eigen::MatrixXd matrix) {
  MatrixFreeOperator op;
  op.dim = matrix.rows();
  op.apply = [m = std::move(matrix)](const Eigen::VectorXd& v) -> Eigen::VectorXd { return m * v; };
  return op;
}

SymmetricSpectrum dense_eigh(const Eigen::MatrixXd& matrix) {
  if (matrix.rows() != matrix.cols())
    throw Error(ErrorKind::Shape, "dense_eigh expects a square matrix");
  if (!matrix.allFinite()) throw Error(ErrorKind::InvalidInput, "matrix has non-finite entries");

  const double scale = matrix.cwiseAbs().maxCoeff();
  const double asym = (matrix - matrix.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale)
    throw Error(ErrorKind::SymmetryViolation,
                "max |A - A^T| = " + std::to_string(asym) + " exceeds 1e-10 relative");

  SymmetricSpectrum out;
  out.source_dim = matrix.rows();
  if (matrix.rows() == 0) {
    out.eigenvalues.resize(0);
    out.eigenvectors = Eigen::MatrixXd(0, 0);
    return out;
  }

  const Eigen::MatrixXd sym = 0.5 * (matrix + matrix.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  if (solver.info() != Eigen::Success)
    throw Error(ErrorKind::Convergence, "symmetric eigensolver failed");

  // Eigen returns ascending order.
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

double effective_dimensionality(const Eigen::VectorXd& eigenvalues, double z, bool clamp_negative) {
  if (!(z > 0.0)) throw Error(ErrorKind::InvalidRegularizer, "z must be positive");
  double sum = 0.0;
  for (double lambda : eigenvalues) {
    if (clamp_negative) lambda = std::max(lambda, 0.0);
    const double denom = lambda + z;
    if (denom == 0.0 || std::abs(denom) <= 4 * std::numeric_limits<double>::epsilon() * z)
      throw Error(ErrorKind::Pole, "eigenvalue equals -z");
    sum += lambda / denom;
  }
  return sum;
}

double effective_dimensionality(const SymmetricSpectrum& spectrum, double z, bool clamp_negative) {
  return effective_dimensionality(spectrum.eigenvalues, z, clamp_negative);
}

Eigen::Index numerical_rank(const Eigen::VectorXd& eigenvalues) {
  if (eigenvalues.size() == 0) return 0;
  const double top = eigenvalues.cwiseAbs().maxCoeff();
  if (top == 0.0) return 0;
  Eigen::Index r = 0;
  for (double lambda : eigenvalues)
    if (std::abs(lambda) > kRankTolerance * top) ++r;
  return r;
}

SymmetricSpectrum pseudo_inverse_spectrum(const SymmetricSpectrum& spectrum) {
  const Eigen::Index m = spectrum.size();
  const double top = m > 0 ? spectrum.eigenvalues.cwiseAbs().maxCoeff() : 0.0;

  Eigen::VectorXd inverted(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lambda = spectrum.eigenvalues[i];
    inverted[i] = (top > 0.0 && std::abs(lambda) > kRankTolerance * top) ? 1.0 / lambda : 0.0;
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return inverted[a] > inverted[b]; });

  SymmetricSpectrum out;
  out.source_dim = spectrum.source_dim;
  out.eigenvalues.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) out.eigenvalues[i] = inverted[order[static_cast<std::size_t>(i)]];
  if (spectrum.eigenvectors) {
    Eigen::MatrixXd vecs(spectrum.eigenvectors->rows(), m);
    for (Eigen::Index i = 0; i < m; ++i)
      vecs.col(i) = spectrum.eigenvectors->col(order[static_cast<std::size_t>(i)]);
    out.eigenvectors = std::move(vecs);
  }
  return out;
}

double symmetry_defect(const MatrixFreeOperator& op, int trials, std::uint64_t seed) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const Eigen::VectorXd v = standard_normal(op.dim, rng);
    const Eigen::VectorXd w = standard_normal(op.dim, rng);
    const double avw = op.apply(v).dot(w);
    const double vaw = v.dot(op.apply(w));
    const double denom = std::abs(avw) + std::abs(vaw);
    if (denom > 0.0) worst = std::max(worst, std::abs(avw - vaw) / denom);
  }
  return worst;
}

}  // namespace effdim
