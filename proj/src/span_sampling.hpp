#pragma once

#include <cstdint>

#include <Eigen/Core>

#include "effdim/random.hpp"

namespace effdim::detail {

// Random vector B v / ||B v|| * scale with v ~ N(0, I); zero for an empty
// basis or zero scale.
inline Eigen::VectorXd draw_in_span(const Eigen::MatrixXd& basis, double scale, std::uint64_t seed) {
  if (basis.cols() == 0 || scale == 0.0) return Eigen::VectorXd::Zero(basis.rows());
  Rng rng(seed);
  const Eigen::VectorXd u = basis * standard_normal(basis.cols(), rng);
  return u * (scale / u.norm());
}

}  // namespace effdim::detail
