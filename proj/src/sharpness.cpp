#include <algorithm>
#include <cmath>
#include <vector>

#include "effdim/error.hpp"
#include "effdim/measures.hpp"
#include "effdim/random.hpp"

namespace effdim {

void SigmaSearchConfig::validate() const {
  if (!(target_increase > 0.0)) throw Error(ErrorKind::InvalidConfig, "target increase must be positive");
  if (mc_samples < 1) throw Error(ErrorKind::InvalidConfig, "need at least one Monte-Carlo sample");
  if (!(sigma_lo > 0.0) || !(sigma_lo < sigma_hi))
    throw Error(ErrorKind::InvalidConfig, "sigma bounds must satisfy 0 < lo < hi");
  if (!(search_tolerance > 0.0)) throw Error(ErrorKind::InvalidConfig, "search tolerance must be positive");
  if (max_iterations < 1) throw Error(ErrorKind::InvalidConfig, "need at least one bisection iteration");
}

namespace {

struct Estimate {
  double sigma;
  double increase;
  double stderr_;
};

}  // namespace

SharpnessResult sigma_search(const ParamVector& theta, const ErrorFunctional& error,
                             const Eigen::VectorXd& variance_coeffs, double variance_floor,
                             const SigmaSearchConfig& cfg) {
  cfg.validate();
  const Eigen::Index p = theta.size();
  if (variance_coeffs.size() != p) throw Error(ErrorKind::Shape, "variance coefficients must match the parameters");
  if (variance_floor < 0.0 || (variance_coeffs.array() < 0.0).any())
    throw Error(ErrorKind::InvalidInput, "perturbation variances must be non-negative");

  // Common random numbers: sample j always uses the same standard normal draw.
  Eigen::MatrixXd xi(p, cfg.mc_samples);
  for (int j = 0; j < cfg.mc_samples; ++j) {
    Rng rng(derive_seed({cfg.seed, static_cast<std::uint64_t>(j)}));
    xi.col(j) = standard_normal(p, rng);
  }

  SharpnessResult out;
  out.base_error = error(theta);
  std::vector<Estimate> seen;

  auto evaluate = [&](double sigma) {
    const Eigen::VectorXd scale = (sigma * sigma * variance_coeffs.array() + variance_floor).sqrt();
    double sum = 0.0;
    double sum_sq = 0.0;
    ParamVector moved(p);
    for (int j = 0; j < cfg.mc_samples; ++j) {
      moved = theta + scale.cwiseProduct(xi.col(j));
      const double e = error(moved) - out.base_error;
      sum += e;
      sum_sq += e * e;
    }
    const double m = cfg.mc_samples;
    const double mean = sum / m;
    const double var = cfg.mc_samples > 1 ? std::max(0.0, (sum_sq - m * mean * mean) / (m - 1.0)) : 0.0;
    seen.push_back({sigma, mean, std::sqrt(var / m)});
    return mean;
  };

  double lo = cfg.sigma_lo;
  double hi = cfg.sigma_hi;
  if (evaluate(hi) <= cfg.target_increase) {
    out.sigma = hi;
    out.saturated = true;
  } else if (evaluate(lo) > cfg.target_increase) {
    out.sigma = lo;
    out.saturated = true;
  } else {
    for (int it = 0; it < cfg.max_iterations && hi / lo - 1.0 > cfg.search_tolerance; ++it) {
      const double mid = std::sqrt(lo * hi);
      if (evaluate(mid) <= cfg.target_increase) lo = mid;
      else hi = mid;
    }
    out.sigma = lo;
  }
  out.measure = 1.0 / (out.sigma * out.sigma);

  std::sort(seen.begin(), seen.end(), [](const Estimate& a, const Estimate& b) { return a.sigma < b.sigma; });
  for (std::size_t i = 0; i < seen.size() && !out.unstable; ++i)
    for (std::size_t j = i + 1; j < seen.size(); ++j) {
      const double noise = 3.0 * std::hypot(seen[i].stderr_, seen[j].stderr_);
      if (seen[i].increase > seen[j].increase + noise + 1e-12) {
        out.unstable = true;
        break;
      }
    }
  return out;
}

namespace {

ErrorFunctional training_error(const MlpSpec& spec, const Dataset& data) {
  if (data.task != Task::classification)
    throw Error(ErrorKind::InvalidInput, "sharpness measures are defined on the classification error");
  data.validate(spec);
  return [&spec, &data](const ParamVector& p) { return classification_error(spec, p, data); };
}

}  // namespace

SharpnessResult pac_bayes_sharpness(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                    const SigmaSearchConfig& cfg) {
  return sigma_search(params, training_error(spec, data), Eigen::VectorXd::Ones(params.size()), 0.0, cfg);
}

SharpnessResult mag_pac_bayes_sharpness(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                        const SigmaSearchConfig& cfg, MagnitudeScaling scaling, double epsilon) {
  const Eigen::VectorXd coeffs =
      scaling == MagnitudeScaling::squared ? Eigen::VectorXd(params.array().square()) : Eigen::VectorXd(params.cwiseAbs());
  return sigma_search(params, training_error(spec, data), coeffs, epsilon, cfg);
}

}  // namespace effdim
