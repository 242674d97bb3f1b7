#pragma once

#include <cstdint>
#include <functional>
#include <optional>

#include <Eigen/Core>

namespace effdim {

/// Eigenvalues (descending) and optionally the matching orthonormal
/// eigenvectors of a symmetric operator of ambient dimension `source_dim`.
struct SymmetricSpectrum {
  Eigen::VectorXd eigenvalues;
  std::optional<Eigen::MatrixXd> eigenvectors;  // source_dim x count, column i pairs with eigenvalues[i]
  Eigen::Index source_dim = 0;

  // Set by Lanczos when the Krylov space was exhausted before the requested
  // number of steps; the spectrum then holds only the converged subset.
  bool truncated = false;
  // Lanczos residual estimates |beta_m * s_{m,i}| per Ritz pair, when available.
  std::optional<Eigen::VectorXd> residuals;

  Eigen::Index size() const { return eigenvalues.size(); }
};

/// Relative threshold below which an eigenvalue is treated as zero:
/// |lambda| <= kRankTolerance * max|lambda|.
inline constexpr double kRankTolerance = 1e-10;

/// Apply-only symmetric operator. `apply` must be deterministic and safe to
/// call concurrently.
struct MatrixFreeOperator {
  Eigen::Index dim = 0;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;

  static MatrixFreeOperator from_dense(Eigen::MatrixXd matrix);
};

struct LanczosConfig {
  int steps = 100;
  bool reorthogonalize = true;
  std::uint64_t seed = 0;
  double tolerance = 1e-8;
  bool compute_eigenvectors = true;
};

/// Full symmetric eigendecomposition; throws SymmetryViolation when the
/// input is asymmetric beyond 1e-10 relative and InvalidInput on non-finite
/// entries.
SymmetricSpectrum dense_eigh(const Eigen::MatrixXd& matrix);

/// Ritz values (descending) of `op` after `cfg.steps` Lanczos iterations from
/// a seeded Gaussian start vector.
SymmetricSpectrum lanczos_topk(const MatrixFreeOperator& op, const LanczosConfig& cfg);

/// sum_i l_i / (l_i + z). With clamp_negative the eigenvalues are replaced by
/// max(l_i, 0) first, which keeps the result in [0, count].
double effective_dimensionality(const Eigen::VectorXd& eigenvalues, double z, bool clamp_negative = true);
double effective_dimensionality(const SymmetricSpectrum& spectrum, double z, bool clamp_negative = true);

/// Moore-Penrose inverse of the spectrum: nonzero eigenvalues inverted, zero
/// eigenvalues (per kRankTolerance) kept at zero, result re-sorted.
SymmetricSpectrum pseudo_inverse_spectrum(const SymmetricSpectrum& spectrum);

/// Number of eigenvalues with |lambda| > kRankTolerance * max|lambda|.
Eigen::Index numerical_rank(const Eigen::VectorXd& eigenvalues);

/// Largest |<Av,w> - <v,Aw>| / (|<Av,w>| + |<v,Aw>|) over `trials` random pairs.
double symmetry_defect(const MatrixFreeOperator& op, int trials, std::uint64_t seed);

}  // namespace effdim
