#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "effdim/mlp.hpp"

namespace effdim {

enum class Optimizer { sgd_momentum, adam };

std::string to_string(Optimizer o);
Optimizer optimizer_from_string(const std::string& name);

struct TrainConfig {
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 0.01;
  double momentum = 0.9;       // sgd_momentum only
  double weight_decay = 0.0;   // L2 term added to the gradient
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int steps = 1000;
  int batch_size = 0;          // 0 = full batch
  std::uint64_t seed = 0;      // minibatch order

  void validate() const;
};

struct TrainResult {
  ParamVector params;
  std::vector<double> loss_trace;  // data loss of the batch seen at each step
};

/// Runs cfg.steps optimizer updates. Minibatches are drawn by reshuffling the
/// data every epoch. Throws Divergence naming the step when the loss or the
/// parameters stop being finite.
TrainResult train(const MlpSpec& spec, const ParamVector& initial, const Dataset& data, const TrainConfig& cfg);

/// Flat checkpoint: "EFFDIMCK", u64 little-endian header length, JSON header,
/// then the parameters as little-endian float64.
struct Checkpoint {
  MlpSpec spec;
  ParamVector params;
  std::uint64_t seed = 0;
  std::int64_t steps = 0;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace effdim
