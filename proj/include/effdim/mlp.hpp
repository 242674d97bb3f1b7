#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "effdim/spectral.hpp"

namespace effdim {

enum class Activation { elu, tanh, relu };
enum class Task { classification, regression };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& name);

/// Fully connected feed-forward network. Hidden layers apply `activation`,
/// the output layer is linear (logits for classification).
///
/// Parameters live in one flat vector, layer by layer from the input side.
/// Within a layer the out x in weight matrix is stored row-major, followed by
/// the bias (when use_bias is set).
struct MlpSpec {
  int input_dim = 1;
  int output_dim = 1;
  std::vector<int> hidden_layers;
  Activation activation = Activation::elu;
  bool use_bias = true;

  int num_layers() const { return static_cast<int>(hidden_layers.size()) + 1; }
  // Width of layer boundary i (0 = input, num_layers() = output).
  int width(int i) const;
  Eigen::Index parameter_count() const;
  void validate() const;
};

using ParamVector = Eigen::VectorXd;

/// Inputs are n x d. Classification uses `labels` (class indices; with a
/// single output unit the labels are 0/1 and the head is a sigmoid). Regression
/// uses `targets` (n x output_dim).
struct Dataset {
  Eigen::MatrixXd inputs;
  Task task = Task::classification;
  Eigen::VectorXi labels;
  Eigen::MatrixXd targets;

  Eigen::Index size() const { return inputs.rows(); }
  void validate(const MlpSpec& spec) const;
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
};

struct LossValue {
  double data = 0.0;
  double penalty = 0.0;
  double total() const { return data + penalty; }
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
ParamVector init_params(const MlpSpec& spec, std::uint64_t seed);

/// Outputs are n x output_dim.
Eigen::MatrixXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs);

/// Predicted class per row.
Eigen::VectorXi predict(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs);

/// Fraction of misclassified points.
double classification_error(const MlpSpec& spec, const ParamVector& params, const Dataset& data);

/// Mean cross-entropy (softmax, or sigmoid for one output) or mean
/// 0.5 ||f - y||^2, plus (weight_decay / 2) ||theta||^2 reported separately.
LossValue loss(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay = 0.0);

struct LossAndGradient {
  LossValue loss;
  ParamVector gradient;
};
LossAndGradient loss_and_gradient(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                  double weight_decay = 0.0);
ParamVector gradient(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay = 0.0);

/// Forward and backward state at a fixed parameter vector, reused across
/// Hessian-vector products (forward-over-reverse / R-operator). apply() is
/// const and may be called from several threads.
class CurvatureContext {
 public:
  CurvatureContext(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay);
  ~CurvatureContext();
  CurvatureContext(CurvatureContext&&) noexcept;
  CurvatureContext& operator=(CurvatureContext&&) noexcept;

  Eigen::Index dim() const;
  ParamVector apply(const ParamVector& v) const;
  const LossValue& loss() const;
  const ParamVector& gradient() const;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

ParamVector hvp(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay,
                const ParamVector& v);

/// Operator v -> H v of the (mean) training loss, shared state held by the closure.
MatrixFreeOperator hessian_operator(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                    double weight_decay = 0.0);

inline constexpr Eigen::Index kFullHessianGuard = 10000;

struct HessianMatrix {
  Eigen::MatrixXd matrix;       // symmetrized
  double max_asymmetry = 0.0;   // max |H_ij - H_ji| / max |H| before symmetrization
};

/// Dense Hessian of the mean loss, one HVP per column. Throws Size when the
/// parameter count exceeds kFullHessianGuard.
HessianMatrix full_hessian(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                           double weight_decay = 0.0);

/// Laplace precision of the posterior with Gaussian prior N(0, prior_variance I):
/// v -> (n / noise_variance) H_mean v + v / prior_variance, i.e. the Hessian of
/// the summed negative log-likelihood plus the prior term. noise_variance only
/// scales regression losses.
MatrixFreeOperator laplace_precision(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                     double prior_variance, double noise_variance = 1.0);

}  // namespace effdim
