#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "effdim/bayes_linear.hpp"
#include "effdim/error.hpp"
#include "effdim/experiments.hpp"
#include "effdim/measures.hpp"
#include "effdim/mlp.hpp"
#include "effdim/spectral.hpp"
#include "effdim/train.hpp"

namespace py = pybind11;
using namespace effdim;

namespace {

py::dict spectrum_dict(const SymmetricSpectrum& s) {
  py::dict d;
  d["eigenvalues"] = s.eigenvalues;
  d["eigenvectors"] = s.eigenvectors ? py::cast(*s.eigenvectors) : py::none();
  d["truncated"] = s.truncated;
  return d;
}

Dataset classification(Eigen::MatrixXd inputs, Eigen::VectorXi labels) {
  Dataset d;
  d.task = Task::classification;
  d.inputs = std::move(inputs);
  d.labels = std::move(labels);
  return d;
}

Dataset regression(Eigen::MatrixXd inputs, Eigen::MatrixXd targets) {
  Dataset d;
  d.task = Task::regression;
  d.inputs = std::move(inputs);
  d.targets = std::move(targets);
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Effective dimensionality of linear models and small neural networks";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  // spectra
  m.def("effective_dimensionality",
        py::overload_cast<const Eigen::VectorXd&, double, bool>(&effective_dimensionality), py::arg("eigenvalues"),
        py::arg("z"), py::arg("clamp_negative") = true);
  m.def(
      "eigh", [](const Eigen::MatrixXd& a) { return spectrum_dict(dense_eigh(a)); }, py::arg("matrix"),
      "Eigenvalues (descending) and eigenvectors of a symmetric matrix.");
  m.def(
      "pseudo_inverse_eigenvalues",
      [](const Eigen::VectorXd& ev) {
        SymmetricSpectrum s;
        s.eigenvalues = ev;
        s.source_dim = ev.size();
        return pseudo_inverse_spectrum(s).eigenvalues;
      },
      py::arg("eigenvalues"));
  m.def("numerical_rank", &numerical_rank, py::arg("eigenvalues"));
  m.def(
      "lanczos",
      [](const Eigen::MatrixXd& a, int steps, std::uint64_t seed) {
        LanczosConfig cfg;
        cfg.steps = steps;
        cfg.seed = seed;
        return spectrum_dict(lanczos_topk(MatrixFreeOperator::from_dense(a), cfg));
      },
      py::arg("matrix"), py::arg("steps"), py::arg("seed") = 0);

  // Bayesian linear models
  m.def("sinusoidal_features", &sinusoidal_features, py::arg("x"), py::arg("num_features"));
  auto model = [](Eigen::MatrixXd features, double prior_variance, double noise_variance) {
    GaussianLinearModel g;
    g.features = std::move(features);
    g.prior_variance = prior_variance;
    g.noise_variance = noise_variance;
    return g;
  };
  m.def(
      "posterior",
      [model](Eigen::MatrixXd phi, const Eigen::VectorXd& y, double prior_variance, double noise_variance) {
        const PosteriorSummary s = posterior(model(std::move(phi), prior_variance, noise_variance), y);
        return py::make_tuple(s.mean, s.covariance);
      },
      py::arg("features"), py::arg("targets"), py::arg("prior_variance") = 1.0, py::arg("noise_variance") = 1.0,
      "Posterior mean and covariance of the conjugate Gaussian linear model.");
  m.def(
      "posterior_contraction",
      [model](Eigen::MatrixXd phi, double prior_variance, double noise_variance) {
        return posterior_contraction_closed_form(model(std::move(phi), prior_variance, noise_variance));
      },
      py::arg("features"), py::arg("prior_variance") = 1.0, py::arg("noise_variance") = 1.0);
  m.def(
      "function_space_contraction",
      [model](Eigen::MatrixXd phi, double prior_variance, double noise_variance) {
        return function_space_contraction(model(std::move(phi), prior_variance, noise_variance));
      },
      py::arg("features"), py::arg("prior_variance") = 1.0, py::arg("noise_variance") = 1.0);
  m.def(
      "predictive_risk",
      [model](Eigen::MatrixXd phi, double prior_variance, double noise_variance) {
        return predictive_risk(model(std::move(phi), prior_variance, noise_variance));
      },
      py::arg("features"), py::arg("prior_variance") = 1.0, py::arg("noise_variance") = 1.0);
  m.def("expected_rkhs_norm", &expected_rkhs_norm, py::arg("kernel"), py::arg("noise_variance"));

  // networks
  py::enum_<Activation>(m, "Activation")
      .value("elu", Activation::elu)
      .value("tanh", Activation::tanh)
      .value("relu", Activation::relu);
  py::enum_<Task>(m, "Task").value("classification", Task::classification).value("regression", Task::regression);

  py::class_<MlpSpec>(m, "MlpSpec")
      .def(py::init([](int input_dim, int output_dim, std::vector<int> hidden, Activation act, bool bias) {
             MlpSpec s{input_dim, output_dim, std::move(hidden), act, bias};
             s.validate();
             return s;
           }),
           py::arg("input_dim"), py::arg("output_dim"), py::arg("hidden_layers") = std::vector<int>{},
           py::arg("activation") = Activation::elu, py::arg("use_bias") = true)
      .def_readwrite("input_dim", &MlpSpec::input_dim)
      .def_readwrite("output_dim", &MlpSpec::output_dim)
      .def_readwrite("hidden_layers", &MlpSpec::hidden_layers)
      .def_readwrite("activation", &MlpSpec::activation)
      .def_readwrite("use_bias", &MlpSpec::use_bias)
      .def_property_readonly("parameter_count", &MlpSpec::parameter_count);

  py::class_<Dataset>(m, "Dataset")
      .def_static("classification", &classification, py::arg("inputs"), py::arg("labels"))
      .def_static("regression", &regression, py::arg("inputs"), py::arg("targets"))
      .def_readonly("inputs", &Dataset::inputs)
      .def_readonly("labels", &Dataset::labels)
      .def_readonly("targets", &Dataset::targets)
      .def_readonly("task", &Dataset::task)
      .def("__len__", &Dataset::size);

  m.def("init_params", &init_params, py::arg("spec"), py::arg("seed"));
  m.def("forward", &forward, py::arg("spec"), py::arg("params"), py::arg("inputs"));
  m.def(
      "loss", [](const MlpSpec& s, const ParamVector& p, const Dataset& d, double wd) { return loss(s, p, d, wd).data; },
      py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("weight_decay") = 0.0, "Mean data loss.");
  m.def("gradient", &gradient, py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("weight_decay") = 0.0);
  m.def("hvp", &hvp, py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("weight_decay"), py::arg("v"));
  m.def(
      "full_hessian",
      [](const MlpSpec& s, const ParamVector& p, const Dataset& d, double wd) { return full_hessian(s, p, d, wd).matrix; },
      py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("weight_decay") = 0.0);
  m.def(
      "train",
      [](const MlpSpec& s, const ParamVector& p, const Dataset& d, int steps, double lr, double wd, int batch_size,
         std::uint64_t seed) {
        TrainConfig cfg;
        cfg.steps = steps;
        cfg.learning_rate = lr;
        cfg.weight_decay = wd;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        TrainResult r = train(s, p, d, cfg);
        return py::make_tuple(r.params, r.loss_trace);
      },
      py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("steps"), py::arg("learning_rate") = 0.01,
      py::arg("weight_decay") = 0.0, py::arg("batch_size") = 0, py::arg("seed") = 0,
      "Adam training; returns (params, per-step loss).");

  // measures
  m.def(
      "hessian_eff_dim",
      [](const MlpSpec& s, const ParamVector& p, const Dataset& d, double z, int steps, std::uint64_t seed) {
        LanczosConfig cfg;
        cfg.steps = steps;
        cfg.seed = seed;
        cfg.compute_eigenvectors = false;
        return hessian_eff_dim(s, p, d, z, cfg).n_eff;
      },
      py::arg("spec"), py::arg("params"), py::arg("data"), py::arg("z"), py::arg("lanczos_steps") = 100,
      py::arg("seed") = 0);
  m.def("path_norm", &path_norm, py::arg("spec"), py::arg("params"));
  m.def("occam_log_factor",
        py::overload_cast<const Eigen::VectorXd&, const ParamVector&, double, double>(&occam_log_factor),
        py::arg("eigenvalues"), py::arg("theta"), py::arg("prior_variance"), py::arg("z"));
  m.def("pearson", &pearson, py::arg("x"), py::arg("y"));

  // experiments
  m.def("gen_swiss_roll", &gen_swiss_roll, py::arg("n"), py::arg("noise"), py::arg("seed"),
        py::arg("standardize") = true);
  m.def("gen_two_spirals", &gen_two_spirals, py::arg("n"), py::arg("seed"), py::arg("noise") = kTwoSpiralsNoise);
  m.def("gen_bnn_regression", &gen_bnn_regression, py::arg("n"), py::arg("seed"));
  m.def("swiss_roll_spec", &swiss_roll_spec);
  m.def(
      "theorem_check",
      [](Eigen::Index k, Eigen::Index n, double prior_variance, double noise_variance, std::uint64_t seed) {
        const TheoremCheck t = theorem_check(k, n, prior_variance, noise_variance, seed);
        py::dict d;
        d["prior_eigenvalue_count"] = t.prior_eigen_count;
        d["max_rest_deviation"] = t.max_rest_deviation;
        d["nullspace_deviation"] = t.nullspace_deviation;
        d["rowspace_loss_change"] = t.rowspace_loss_change;
        d["pass"] = t.pass;
        return d;
      },
      py::arg("k"), py::arg("n"), py::arg("prior_variance") = 1.0, py::arg("noise_variance") = 1.0, py::arg("seed") = 0);
  m.def(
      "double_descent_linear",
      [](Eigen::Index n, int k_min, int k_max, int k_step, int seeds, std::uint64_t seed) {
        DoubleDescentConfig cfg;
        cfg.n = n;
        cfg.k_min = k_min;
        cfg.k_max = k_max;
        cfg.k_step = k_step;
        cfg.seeds = seeds;
        cfg.seed = seed;
        py::list rows;
        for (const auto& r : double_descent_linear(cfg))
          rows.append(py::make_tuple(r.k, r.seed_index, r.train_loss, r.test_loss, r.n_eff));
        return rows;
      },
      py::arg("n") = 200, py::arg("k_min") = 5, py::arg("k_max") = 400, py::arg("k_step") = 5, py::arg("seeds") = 10,
      py::arg("seed") = 0, "Rows of (k, seed_index, train_loss, test_loss, n_eff).");
}
