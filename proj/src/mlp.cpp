#include "effdim/mlp.hpp"

#include <algorithm>
#include <cmath>

#include "effdim/error.hpp"
#include "effdim/random.hpp"

namespace effdim {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

Activation activation_from_string(const std::string& name) {
  if (name == "elu") return Activation::elu;
  if (name == "tanh") return Activation::tanh;
  if (name == "relu") return Activation::relu;
  throw Error(ErrorKind::InvalidConfig, "unknown activation '" + name + "'");
}

int MlpSpec::width(int i) const {
  if (i == 0) return input_dim;
  if (i == num_layers()) return output_dim;
  return hidden_layers[static_cast<std::size_t>(i - 1)];
}

Eigen::Index MlpSpec::parameter_count() const {
  Eigen::Index count = 0;
  for (int l = 0; l < num_layers(); ++l)
    count += static_cast<Eigen::Index>(width(l) + (use_bias ? 1 : 0)) * width(l + 1);
  return count;
}

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) throw Error(ErrorKind::InvalidConfig, "input/output dims must be positive");
  for (int w : hidden_layers)
    if (w < 1) throw Error(ErrorKind::InvalidConfig, "hidden widths must be positive");
}

void Dataset::validate(const MlpSpec& spec) const {
  const Eigen::Index n = size();
  if (inputs.cols() != spec.input_dim)
    throw Error(ErrorKind::Shape, "inputs have " + std::to_string(inputs.cols()) + " columns, network expects " +
                                      std::to_string(spec.input_dim));
  if (task == Task::classification) {
    if (labels.size() != n) throw Error(ErrorKind::Shape, "label count does not match inputs");
    const int classes = std::max(spec.output_dim, 2);
    for (Eigen::Index i = 0; i < n; ++i)
      if (labels[i] < 0 || labels[i] >= classes) throw Error(ErrorKind::InvalidInput, "class index out of range");
  } else {
    if (targets.rows() != n || targets.cols() != spec.output_dim)
      throw Error(ErrorKind::Shape, "regression targets must be n x output_dim");
  }
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.task = task;
  out.inputs.resize(static_cast<Eigen::Index>(rows.size()), inputs.cols());
  if (task == Task::classification) out.labels.resize(static_cast<Eigen::Index>(rows.size()));
  else out.targets.resize(static_cast<Eigen::Index>(rows.size()), targets.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out.inputs.row(r) = inputs.row(rows[i]);
    if (task == Task::classification) out.labels[r] = labels[rows[i]];
    else out.targets.row(r) = targets.row(rows[i]);
  }
  return out;
}

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajorMatrix>;
using MutWeights = Eigen::Map<RowMajorMatrix>;

struct Layer {
  Eigen::Index weight_offset = 0;
  Eigen::Index bias_offset = 0;  // valid when has_bias
  int in = 0;
  int out = 0;
  bool has_bias = false;
};

std::vector<Layer> layout(const MlpSpec& spec) {
  std::vector<Layer> layers;
  Eigen::Index offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    Layer layer;
    layer.in = spec.width(l);
    layer.out = spec.width(l + 1);
    layer.has_bias = spec.use_bias;
    layer.weight_offset = offset;
    offset += static_cast<Eigen::Index>(layer.in) * layer.out;
    layer.bias_offset = offset;
    if (spec.use_bias) offset += layer.out;
    layers.push_back(layer);
  }
  return layers;
}

ConstWeights weights(const ParamVector& p, const Layer& l) { return {p.data() + l.weight_offset, l.out, l.in}; }

Eigen::Map<const Eigen::VectorXd> bias(const ParamVector& p, const Layer& l) {
  return {p.data() + l.bias_offset, l.out};
}

void check_params(const MlpSpec& spec, const ParamVector& params) {
  spec.validate();
  if (params.size() != spec.parameter_count())
    throw Error(ErrorKind::Shape, "parameter vector has length " + std::to_string(params.size()) + ", spec needs " +
                                      std::to_string(spec.parameter_count()));
}

// Applies the activation in place on z, optionally emitting the first and
// second derivatives evaluated at the pre-activation.
void activate(Activation act, Eigen::MatrixXd& z, Eigen::MatrixXd* d1, Eigen::MatrixXd* d2) {
  const Eigen::Index size = z.size();
  if (d1) d1->resize(z.rows(), z.cols());
  if (d2) d2->resize(z.rows(), z.cols());
  double* zp = z.data();
  double* p1 = d1 ? d1->data() : nullptr;
  double* p2 = d2 ? d2->data() : nullptr;
  switch (act) {
    case Activation::elu:
      for (Eigen::Index i = 0; i < size; ++i) {
        const double x = zp[i];
        if (x > 0.0) {
          if (p1) p1[i] = 1.0;
          if (p2) p2[i] = 0.0;
        } else {
          const double e = std::exp(x);
          if (p1) p1[i] = e;
          if (p2) p2[i] = e;
          zp[i] = std::expm1(x);
        }
      }
      break;
    case Activation::tanh:
      for (Eigen::Index i = 0; i < size; ++i) {
        const double t = std::tanh(zp[i]);
        const double s = 1.0 - t * t;
        if (p1) p1[i] = s;
        if (p2) p2[i] = -2.0 * t * s;
        zp[i] = t;
      }
      break;
    case Activation::relu:
      // The kink at 0 gets derivative 0 and curvature 0.
      for (Eigen::Index i = 0; i < size; ++i) {
        const bool on = zp[i] > 0.0;
        if (p1) p1[i] = on ? 1.0 : 0.0;
        if (p2) p2[i] = 0.0;
        if (!on) zp[i] = 0.0;
      }
      break;
  }
}

Eigen::MatrixXd affine(const ParamVector& params, const Layer& layer, const Eigen::MatrixXd& a) {
  Eigen::MatrixXd z = weights(params, layer) * a;
  if (layer.has_bias) z.colwise() += bias(params, layer);
  return z;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

enum class Head { sigmoid_bce, softmax_ce, squared };

Head head_for(const MlpSpec& spec, const Dataset& data) {
  if (data.task == Task::regression) return Head::squared;
  return spec.output_dim == 1 ? Head::sigmoid_bce : Head::softmax_ce;
}

// Loss over the logits (out x n). Returns the mean loss; fills delta with
// dL/dlogits and cache with the head's probabilities when requested.
double head_loss(Head head, const Eigen::MatrixXd& logits, const Dataset& data, Eigen::MatrixXd* delta,
                 Eigen::MatrixXd* cache) {
  const Eigen::Index n = logits.cols();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  double total = 0.0;
  if (delta) delta->resize(logits.rows(), n);
  if (cache) cache->resize(logits.rows(), n);

  switch (head) {
    case Head::sigmoid_bce:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double z = logits(0, i);
        const double y = data.labels[i];
        total += softplus(z) - y * z;
        const double p = sigmoid(z);
        if (delta) (*delta)(0, i) = (p - y) * inv_n;
        if (cache) (*cache)(0, i) = p;
      }
      break;
    case Head::softmax_ce:
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto z = logits.col(i);
        const double top = z.maxCoeff();
        const Eigen::VectorXd e = (z.array() - top).exp();
        const double sum = e.sum();
        const int y = data.labels[i];
        total += std::log(sum) + top - z[y];
        if (delta || cache) {
          const Eigen::VectorXd p = e / sum;
          if (cache) cache->col(i) = p;
          if (delta) {
            delta->col(i) = p * inv_n;
            (*delta)(y, i) -= inv_n;
          }
        }
      }
      break;
    case Head::squared: {
      const Eigen::MatrixXd resid = logits - data.targets.transpose();
      total = 0.5 * resid.squaredNorm();
      if (delta) *delta = resid * inv_n;
      break;
    }
  }
  return total * inv_n;
}

// Directional derivative of delta along R{logits}.
Eigen::MatrixXd head_r_delta(Head head, const Eigen::MatrixXd& r_logits, const Eigen::MatrixXd& cache) {
  const Eigen::Index n = r_logits.cols();
  const double inv_n = n > 0 ? 1.0 / static_cast<double>(n) : 0.0;
  switch (head) {
    case Head::sigmoid_bce:
      return (cache.array() * (1.0 - cache.array()) * r_logits.array() * inv_n).matrix();
    case Head::softmax_ce: {
      Eigen::MatrixXd pr = cache.cwiseProduct(r_logits);
      const Eigen::RowVectorXd s = pr.colwise().sum();
      pr -= cache * s.asDiagonal();
      return pr * inv_n;
    }
    case Head::squared:
      return r_logits * inv_n;
  }
  return {};
}

Eigen::MatrixXd forward_logits(const MlpSpec& spec, const std::vector<Layer>& layers, const ParamVector& params,
                               const Eigen::MatrixXd& inputs_t) {
  Eigen::MatrixXd a = inputs_t;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = affine(params, layers[l], a);
    if (l + 1 < layers.size()) activate(spec.activation, z, nullptr, nullptr);
    a = std::move(z);
  }
  return a;
}

}  // namespace

ParamVector init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ParamVector p(spec.parameter_count());
  for (const Layer& layer : layout(spec)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Eigen::Index count = static_cast<Eigen::Index>(layer.in) * layer.out + (layer.has_bias ? layer.out : 0);
    for (Eigen::Index i = 0; i < count; ++i) p[layer.weight_offset + i] = dist(rng);
  }
  return p;
}

Eigen::MatrixXd forward(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs) {
  check_params(spec, params);
  if (inputs.cols() != spec.input_dim) throw Error(ErrorKind::Shape, "input width does not match the network");
  return forward_logits(spec, layout(spec), params, inputs.transpose()).transpose();
}

Eigen::VectorXi predict(const MlpSpec& spec, const ParamVector& params, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd out = forward(spec, params, inputs);
  Eigen::VectorXi labels(out.rows());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    if (spec.output_dim == 1) {
      labels[i] = out(i, 0) > 0.0 ? 1 : 0;
    } else {
      Eigen::Index best = 0;
      out.row(i).maxCoeff(&best);
      labels[i] = static_cast<int>(best);
    }
  }
  return labels;
}

double classification_error(const MlpSpec& spec, const ParamVector& params, const Dataset& data) {
  if (data.task != Task::classification) throw Error(ErrorKind::InvalidInput, "error rate needs a classification task");
  if (data.size() == 0) return 0.0;
  const Eigen::VectorXi pred = predict(spec, params, data.inputs);
  return static_cast<double>((pred.array() != data.labels.array()).count()) / static_cast<double>(data.size());
}

LossValue loss(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay) {
  check_params(spec, params);
  data.validate(spec);
  const Eigen::MatrixXd logits = forward_logits(spec, layout(spec), params, data.inputs.transpose());
  LossValue out;
  out.data = head_loss(head_for(spec, data), logits, data, nullptr, nullptr);
  out.penalty = 0.5 * weight_decay * params.squaredNorm();
  return out;
}

struct CurvatureContext::State {
  MlpSpec spec;
  ParamVector params;
  std::vector<Layer> layers;
  Head head = Head::squared;
  double weight_decay = 0.0;

  // a[0] is the transposed input, a[l] the activation after layer l; the
  // last entry holds the logits.
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::MatrixXd> d1, d2;   // activation derivatives, index l for hidden layer l (1-based)
  std::vector<Eigen::MatrixXd> delta;    // dL/dz_l, index l (1-based)
  std::vector<Eigen::MatrixXd> back;     // W_{l+1}^T delta_{l+1}, index l for hidden layers
  Eigen::MatrixXd head_cache;

  LossValue loss;
  ParamVector gradient;
};

CurvatureContext::CurvatureContext(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                   double weight_decay)
    : state_(std::make_unique<State>()) {
  check_params(spec, params);
  data.validate(spec);
  State& s = *state_;
  s.spec = spec;
  s.params = params;
  s.layers = layout(spec);
  s.head = head_for(spec, data);
  s.weight_decay = weight_decay;

  const int L = spec.num_layers();
  s.a.resize(static_cast<std::size_t>(L) + 1);
  s.d1.resize(static_cast<std::size_t>(L));
  s.d2.resize(static_cast<std::size_t>(L));
  s.delta.resize(static_cast<std::size_t>(L) + 1);
  s.back.resize(static_cast<std::size_t>(L));

  s.a[0] = data.inputs.transpose();
  for (int l = 1; l <= L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    Eigen::MatrixXd z = affine(params, s.layers[ul - 1], s.a[ul - 1]);
    if (l < L) activate(spec.activation, z, &s.d1[ul], &s.d2[ul]);
    s.a[ul] = std::move(z);
  }

  s.loss.data = head_loss(s.head, s.a[static_cast<std::size_t>(L)], data, &s.delta[static_cast<std::size_t>(L)],
                          &s.head_cache);
  s.loss.penalty = 0.5 * weight_decay * params.squaredNorm();

  s.gradient = weight_decay * params;
  for (int l = L; l >= 1; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const Layer& layer = s.layers[ul - 1];
    MutWeights gw(s.gradient.data() + layer.weight_offset, layer.out, layer.in);
    gw.noalias() += s.delta[ul] * s.a[ul - 1].transpose();
    if (layer.has_bias) s.gradient.segment(layer.bias_offset, layer.out) += s.delta[ul].rowwise().sum();
    if (l > 1) {
      s.back[ul - 1] = weights(params, layer).transpose() * s.delta[ul];
      s.delta[ul - 1] = s.d1[ul - 1].cwiseProduct(s.back[ul - 1]);
    }
  }
}

CurvatureContext::~CurvatureContext() = default;
CurvatureContext::CurvatureContext(CurvatureContext&&) noexcept = default;
CurvatureContext& CurvatureContext::operator=(CurvatureContext&&) noexcept = default;

Eigen::Index CurvatureContext::dim() const { return state_->params.size(); }
const LossValue& CurvatureContext::loss() const { return state_->loss; }
const ParamVector& CurvatureContext::gradient() const { return state_->gradient; }

ParamVector CurvatureContext::apply(const ParamVector& v) const {
  const State& s = *state_;
  if (v.size() != s.params.size()) throw Error(ErrorKind::Shape, "direction has the wrong length");
  const int L = s.spec.num_layers();

  std::vector<Eigen::MatrixXd> rz(static_cast<std::size_t>(L) + 1);
  std::vector<Eigen::MatrixXd> ra(static_cast<std::size_t>(L) + 1);

  // R-forward.
  for (int l = 1; l <= L; ++l) {
    const auto ul = static_cast<std::size_t>(l);
    const Layer& layer = s.layers[ul - 1];
    Eigen::MatrixXd z = weights(v, layer) * s.a[ul - 1];
    if (l > 1) z.noalias() += weights(s.params, layer) * ra[ul - 1];
    if (layer.has_bias) z.colwise() += bias(v, layer);
    if (l < L) ra[ul] = s.d1[ul].cwiseProduct(z);
    rz[ul] = std::move(z);
  }

  // R-backward.
  ParamVector out = s.weight_decay * v;
  Eigen::MatrixXd r_delta = head_r_delta(s.head, rz[static_cast<std::size_t>(L)], s.head_cache);
  for (int l = L; l >= 1; --l) {
    const auto ul = static_cast<std::size_t>(l);
    const Layer& layer = s.layers[ul - 1];
    MutWeights gw(out.data() + layer.weight_offset, layer.out, layer.in);
    gw.noalias() += r_delta * s.a[ul - 1].transpose();
    if (l > 1) gw.noalias() += s.delta[ul] * ra[ul - 1].transpose();
    if (layer.has_bias) out.segment(layer.bias_offset, layer.out) += r_delta.rowwise().sum();
    if (l > 1) {
      Eigen::MatrixXd inner = weights(v, layer).transpose() * s.delta[ul];
      inner.noalias() += weights(s.params, layer).transpose() * r_delta;
      Eigen::MatrixXd next = s.d1[ul - 1].cwiseProduct(inner);
      next += s.d2[ul - 1].cwiseProduct(rz[ul - 1]).cwiseProduct(s.back[ul - 1]);
      r_delta = std::move(next);
    }
  }
  return out;
}

LossAndGradient loss_and_gradient(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                  double weight_decay) {
  CurvatureContext ctx(spec, params, data, weight_decay);
  return {ctx.loss(), ctx.gradient()};
}

ParamVector gradient(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay) {
  return loss_and_gradient(spec, params, data, weight_decay).gradient;
}

ParamVector hvp(const MlpSpec& spec, const ParamVector& params, const Dataset& data, double weight_decay,
                const ParamVector& v) {
  return CurvatureContext(spec, params, data, weight_decay).apply(v);
}

MatrixFreeOperator hessian_operator(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                    double weight_decay) {
  auto ctx = std::make_shared<const CurvatureContext>(spec, params, data, weight_decay);
  MatrixFreeOperator op;
  op.dim = ctx->dim();
  op.apply = [ctx](const Eigen::VectorXd& v) { return ctx->apply(v); };
  return op;
}

HessianMatrix full_hessian(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                           double weight_decay) {
  const Eigen::Index p = spec.parameter_count();
  if (p > kFullHessianGuard)
    throw Error(ErrorKind::Size, "full Hessian limited to " + std::to_string(kFullHessianGuard) +
                                     " parameters, spec has " + std::to_string(p));
  const CurvatureContext ctx(spec, params, data, weight_decay);
  HessianMatrix out;
  out.matrix.resize(p, p);
  ParamVector e = ParamVector::Zero(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    e[j] = 1.0;
    out.matrix.col(j) = ctx.apply(e);
    e[j] = 0.0;
  }
  const double scale = out.matrix.cwiseAbs().maxCoeff();
  const double asym = (out.matrix - out.matrix.transpose()).cwiseAbs().maxCoeff();
  out.max_asymmetry = scale > 0.0 ? asym / scale : 0.0;
  out.matrix = 0.5 * (out.matrix + out.matrix.transpose()).eval();
  return out;
}

MatrixFreeOperator laplace_precision(const MlpSpec& spec, const ParamVector& params, const Dataset& data,
                                     double prior_variance, double noise_variance) {
  if (!(prior_variance > 0.0)) throw Error(ErrorKind::InvalidInput, "prior variance must be positive");
  if (!(noise_variance > 0.0)) throw Error(ErrorKind::InvalidInput, "noise variance must be positive");
  auto ctx = std::make_shared<const CurvatureContext>(spec, params, data, 0.0);
  const double scale =
      static_cast<double>(data.size()) / (data.task == Task::regression ? noise_variance : 1.0);
  const double prior_precision = 1.0 / prior_variance;
  MatrixFreeOperator op;
  op.dim = ctx->dim();
  op.apply = [ctx, scale, prior_precision](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return scale * ctx->apply(v) + prior_precision * v;
  };
  return op;
}

}  // namespace effdim
