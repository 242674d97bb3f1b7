#include <ostream>

#include <Eigen/SVD>

#include "effdim/csv.hpp"
#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/random.hpp"

namespace effdim {

Eigen::VectorXd ridge_mean(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double prior_variance) {
  if (targets.size() != features.rows()) throw Error(ErrorKind::Shape, "targets and features disagree on n");
  if (!(prior_variance > 0.0)) throw Error(ErrorKind::InvalidInput, "prior variance must be positive");
  if (features.rows() == 0) return Eigen::VectorXd::Zero(features.cols());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(features, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd& s = svd.singularValues();
  const double ridge = 1.0 / prior_variance;
  const Eigen::VectorXd shrink = s.array() / (s.array().square() + ridge);
  return svd.matrixV() * shrink.cwiseProduct(svd.matrixU().transpose() * targets);
}

std::vector<DoubleDescentRecord> double_descent_linear(const DoubleDescentConfig& cfg, int jobs) {
  if (cfg.k_min < 1 || cfg.k_step < 1 || cfg.k_max < cfg.k_min)
    throw Error(ErrorKind::InvalidConfig, "need 1 <= k_min <= k_max and k_step >= 1");
  if (cfg.seeds < 1) throw Error(ErrorKind::InvalidConfig, "need at least one seed");
  if (cfg.n < 1) throw Error(ErrorKind::InvalidConfig, "need at least one observation");

  std::vector<int> ks;
  for (int k = cfg.k_min; k <= cfg.k_max; k += cfg.k_step) ks.push_back(k);
  std::vector<DoubleDescentRecord> rows(ks.size() * static_cast<std::size_t>(cfg.seeds));

  parallel_for(rows.size(), jobs, [&](std::size_t cell) {
    const int k = ks[cell / static_cast<std::size_t>(cfg.seeds)];
    const int s = static_cast<int>(cell % static_cast<std::size_t>(cfg.seeds));
    const LinearTask task = gen_double_descent_features(
        cfg.n, k, derive_seed({cfg.seed, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(k)}), cfg.informative);
    const Eigen::VectorXd beta = ridge_mean(task.train_features, task.train_targets, cfg.prior_variance);

    DoubleDescentRecord r;
    r.k = k;
    r.seed_index = s;
    r.train_loss = (task.train_features * beta - task.train_targets).squaredNorm() / static_cast<double>(cfg.n);
    r.test_loss = (task.test_features * beta - task.test_targets).squaredNorm() / static_cast<double>(cfg.n);

    SymmetricSpectrum gram;
    gram.eigenvalues = gram_eigenvalues(task.train_features).cwiseMax(0.0);
    gram.source_dim = k;
    r.n_eff = effective_dimensionality(pseudo_inverse_spectrum(gram), cfg.prior_variance);
    r.n_eff_hessian = effective_dimensionality(gram, cfg.z_hessian);
    rows[cell] = r;
  });
  return rows;
}

const char* const kDoubleDescentCsvHeader = "k,seed,train_loss,test_loss,n_eff,n_eff_hessian";

void write_double_descent_csv(std::ostream& os, const std::vector<DoubleDescentRecord>& rows) {
  os << kDoubleDescentCsvHeader << '\n';
  for (const DoubleDescentRecord& r : rows)
    write_csv_row(os, {std::to_string(r.k), std::to_string(r.seed_index), format_double(r.train_loss),
                       format_double(r.test_loss), format_double(r.n_eff), format_double(r.n_eff_hessian)});
}

}  // namespace effdim
