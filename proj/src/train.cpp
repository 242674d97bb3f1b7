#include "effdim/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "effdim/error.hpp"
#include "effdim/random.hpp"

namespace effdim {

std::string to_string(Optimizer o) { return o == Optimizer::adam ? "adam" : "sgd_momentum"; }

Optimizer optimizer_from_string(const std::string& name) {
  if (name == "adam") return Optimizer::adam;
  if (name == "sgd" || name == "sgd_momentum") return Optimizer::sgd_momentum;
  throw Error(ErrorKind::InvalidConfig, "unknown optimizer '" + name + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(ErrorKind::InvalidConfig, "learning rate must be finite and non-negative");
  if (steps < 0) throw Error(ErrorKind::InvalidConfig, "steps must be non-negative");
  if (batch_size < 0) throw Error(ErrorKind::InvalidConfig, "batch size must be non-negative");
}

namespace {

class BatchSampler {
 public:
  BatchSampler(Eigen::Index n, int batch_size, std::uint64_t seed)
      : n_(n), batch_(batch_size <= 0 || batch_size >= n ? n : batch_size), rng_(seed), order_(static_cast<std::size_t>(n)) {
    std::iota(order_.begin(), order_.end(), Eigen::Index{0});
    cursor_ = order_.size();
  }

  bool full() const { return batch_ == n_; }

  std::vector<Eigen::Index> next() {
    std::vector<Eigen::Index> rows;
    rows.reserve(static_cast<std::size_t>(batch_));
    while (static_cast<Eigen::Index>(rows.size()) < batch_) {
      if (cursor_ == order_.size()) {
        std::shuffle(order_.begin(), order_.end(), rng_);
        cursor_ = 0;
      }
      rows.push_back(order_[cursor_++]);
    }
    return rows;
  }

 private:
  Eigen::Index n_;
  Eigen::Index batch_;
  Rng rng_;
  std::vector<Eigen::Index> order_;
  std::size_t cursor_;
};

}  // namespace

TrainResult train(const MlpSpec& spec, const ParamVector& initial, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  data.validate(spec);
  if (initial.size() != spec.parameter_count()) throw Error(ErrorKind::Shape, "initial parameters have the wrong length");
  if (data.size() == 0) throw Error(ErrorKind::InvalidInput, "cannot train on an empty dataset");

  TrainResult out;
  out.params = initial;
  out.loss_trace.reserve(static_cast<std::size_t>(cfg.steps));
  ParamVector m = ParamVector::Zero(initial.size());
  ParamVector v = ParamVector::Zero(initial.size());
  BatchSampler sampler(data.size(), cfg.batch_size, cfg.seed);

  double b1t = 1.0;
  double b2t = 1.0;
  for (int step = 0; step < cfg.steps; ++step) {
    LossAndGradient lg = sampler.full() ? loss_and_gradient(spec, out.params, data, cfg.weight_decay)
                                        : loss_and_gradient(spec, out.params, data.subset(sampler.next()), cfg.weight_decay);
    if (!std::isfinite(lg.loss.data) || !lg.gradient.allFinite())
      throw Error(ErrorKind::Divergence, "non-finite loss at step " + std::to_string(step));
    out.loss_trace.push_back(lg.loss.data);

    const ParamVector& g = lg.gradient;
    if (cfg.optimizer == Optimizer::sgd_momentum) {
      m = cfg.momentum * m + g;
      out.params -= cfg.learning_rate * m;
    } else {
      b1t *= cfg.beta1;
      b2t *= cfg.beta2;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
      const double step_size = cfg.learning_rate / (1.0 - b1t);
      const double denom_scale = 1.0 / std::sqrt(1.0 - b2t);
      out.params.array() -= step_size * m.array() / ((v.array().sqrt() * denom_scale) + cfg.epsilon);
    }
    if (!out.params.allFinite())
      throw Error(ErrorKind::Divergence, "non-finite parameters after step " + std::to_string(step));
  }
  return out;
}

}  // namespace effdim
