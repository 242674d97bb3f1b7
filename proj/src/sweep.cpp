#include <algorithm>
#include <atomic>
#include <exception>
#include <limits>
#include <mutex>
#include <ostream>
#include <thread>

#include "effdim/csv.hpp"
#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/random.hpp"

namespace effdim {

void parallel_for(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::width: return "width";
    case SweepAxis::depth: return "depth";
    case SweepAxis::feature_count: return "feature_count";
    case SweepAxis::data_count: return "data_count";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& name) {
  if (name == "width") return SweepAxis::width;
  if (name == "depth") return SweepAxis::depth;
  if (name == "feature_count") return SweepAxis::feature_count;
  if (name == "data_count") return SweepAxis::data_count;
  throw Error(ErrorKind::InvalidConfig, "unknown sweep axis '" + name + "'");
}

void SweepConfig::validate() const {
  if (values.empty()) throw Error(ErrorKind::InvalidConfig, "sweep needs at least one value");
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] <= values[i - 1]) throw Error(ErrorKind::InvalidConfig, "sweep values must be strictly increasing");
  if (repetitions < 1) throw Error(ErrorKind::InvalidConfig, "repetitions must be positive");
  if (axis == SweepAxis::feature_count)
    throw Error(ErrorKind::InvalidConfig, "feature_count sweeps apply to linear models (double-descent-linear)");
  const int lowest = axis == SweepAxis::depth ? 0 : 1;
  if (values.front() < lowest) throw Error(ErrorKind::InvalidConfig, "sweep values out of range");
  if (base_width < 1 || base_depth < 0) throw Error(ErrorKind::InvalidConfig, "base width/depth out of range");
  train.validate();
}

std::vector<SweepRecord> depth_width_sweep(const MlpSpec& base, const SweepConfig& cfg, const MeasureConfig& measures,
                                           int jobs) {
  cfg.validate();
  const std::size_t reps = static_cast<std::size_t>(cfg.repetitions);
  std::vector<SweepRecord> out(cfg.values.size() * reps);

  parallel_for(out.size(), jobs, [&](std::size_t cell) {
    const int value = cfg.values[cell / reps];
    const int rep = static_cast<int>(cell % reps);
    const auto v = static_cast<std::uint64_t>(value);
    const auto r = static_cast<std::uint64_t>(rep);

    MlpSpec spec = base;
    Eigen::Index n = cfg.n_train;
    switch (cfg.axis) {
      case SweepAxis::depth: spec.hidden_layers.assign(static_cast<std::size_t>(value), cfg.base_width); break;
      case SweepAxis::width: spec.hidden_layers.assign(static_cast<std::size_t>(cfg.base_depth), value); break;
      case SweepAxis::data_count: n = value; break;
      case SweepAxis::feature_count: break;
    }

    SweepRecord rec;
    rec.value = value;
    rec.repetition = rep;
    rec.param_count = spec.parameter_count();
    rec.report.model_id = to_string(cfg.axis) + "=" + std::to_string(value) + "/rep=" + std::to_string(rep);
    try {
      const Dataset train_set = gen_two_spirals(n, derive_seed({cfg.seed, 0xda7a, r}), cfg.data_noise);
      const Dataset test_set = gen_two_spirals(n, derive_seed({cfg.seed, 0x7e57, r}), cfg.data_noise);
      TrainConfig tc = cfg.train;
      tc.seed = derive_seed({cfg.seed, v, r, 2});
      const TrainResult fit = train(spec, init_params(spec, derive_seed({cfg.seed, v, r, 1})), train_set, tc);

      MeasureConfig mc = measures;
      mc.lanczos.seed = derive_seed({cfg.seed, v, r, 3});
      mc.sigma.seed = derive_seed({cfg.seed, v, r, 4});
      rec.report = evaluate_measures(rec.report.model_id, spec, fit.params, train_set, test_set, mc);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Divergence) throw;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      MeasureReport failed;
      failed.model_id = rec.report.model_id;
      failed.z_used = measures.z;
      failed.n_eff_hessian = failed.path_norm = failed.log_path_norm = failed.pac_bayes = failed.mag_pac_bayes =
          failed.occam_log_factor = failed.train_loss = failed.train_error = failed.test_loss = failed.test_error = nan;
      failed.status = "diverged";
      rec.report = failed;
    }
    out[cell] = std::move(rec);
  });
  return out;
}

void write_sweep_csv(std::ostream& os, SweepAxis axis, const std::vector<SweepRecord>& rows) {
  os << "axis,value,rep,param_count," << kMeasureCsvHeader << '\n';
  for (const SweepRecord& s : rows) {
    const MeasureReport& r = s.report;
    write_csv_row(os, {to_string(axis), std::to_string(s.value), std::to_string(s.repetition),
                       std::to_string(s.param_count), r.model_id, format_double(r.n_eff_hessian),
                       format_double(r.z_used), format_double(r.path_norm), format_double(r.log_path_norm),
                       format_double(r.pac_bayes), format_double(r.mag_pac_bayes), format_double(r.occam_log_factor),
                       format_double(r.train_loss), format_double(r.train_error), format_double(r.test_loss),
                       format_double(r.test_error), r.status});
  }
}

}  // namespace effdim
