#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "vsem/data.hpp"
#include "vsem/engine.hpp"
#include "vsem/error.hpp"
#include "vsem/model.hpp"
#include "vsem/report.hpp"
#include "vsem/resampling.hpp"
#include "vsem/simlab.hpp"
#include "vsem/vuong.hpp"
#include "vsem/wchisq.hpp"

namespace py = pybind11;
using namespace vsem;

namespace {

Dataset make_dataset(const Eigen::MatrixXd& cases, const std::vector<std::string>& names) {
  Dataset d;
  d.names = names;
  d.cases = cases;
  if (static_cast<Eigen::Index>(names.size()) != cases.cols()) {
    throw DataError("number of names does not match the number of columns");
  }
  return d;
}

Criterion parse_criterion(const std::string& c) {
  if (c == "aic") return Criterion::AIC;
  if (c == "bic") return Criterion::BIC;
  throw std::invalid_argument("criterion must be 'aic' or 'bic'");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Vuong-type comparisons of structural equation models";
  m.attr("__version__") = VSEM_VERSION;

  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def_readonly("manifest_names", &ModelSpec::manifest_names)
      .def_readonly("latent_names", &ModelSpec::latent_names)
      .def_readonly("meanstructure", &ModelSpec::meanstructure)
      .def_property_readonly("k", &ModelSpec::k)
      .def_property_readonly("labels",
                             [](const ModelSpec& s) {
                               std::vector<std::string> out;
                               for (const auto& e : s.params) out.push_back(e.label);
                               return out;
                             })
      .def("__str__", [](const ModelSpec& s) { return print_model(s); });

  m.def(
      "parse_model",
      [](const std::string& text, bool meanstructure, std::optional<std::vector<std::string>> known) {
        ParseOptions po;
        po.meanstructure = meanstructure;
        po.known_manifests = std::move(known);
        return parse_model(text, po);
      },
      py::arg("text"), py::arg("meanstructure") = false, py::arg("known_manifests") = py::none());

  py::class_<FittedModel>(m, "FittedModel")
      .def_readonly("spec", &FittedModel::spec)
      .def_readonly("theta_hat", &FittedModel::theta_hat)
      .def_readonly("loglik_casewise", &FittedModel::loglik_casewise)
      .def_readonly("scores", &FittedModel::scores)
      .def_readonly("unit_hessian", &FittedModel::unit_hessian)
      .def_readonly("expected_info", &FittedModel::expected_info)
      .def_readonly("converged", &FittedModel::converged)
      .def_readonly("iterations", &FittedModel::iterations)
      .def_readonly("loglik", &FittedModel::loglik_total)
      .def_readonly("warnings", &FittedModel::warnings)
      .def_property_readonly("sigma", [](const FittedModel& f) { return f.moments.sigma; })
      .def_property_readonly("mu", [](const FittedModel& f) { return f.moments.mu; })
      .def_property_readonly("n", &FittedModel::n)
      .def_property_readonly("k", &FittedModel::k)
      .def_property_readonly("aic", [](const FittedModel& f) { return information_criteria(f).aic; })
      .def_property_readonly("bic", [](const FittedModel& f) { return information_criteria(f).bic; })
      .def("report_json", [](const FittedModel& f) { return fit_report(f).dump(); });

  m.def(
      "fit",
      [](const ModelSpec& spec, const Eigen::MatrixXd& cases, const std::vector<std::string>& names) {
        return fit_ml(spec, make_dataset(cases, names));
      },
      py::arg("spec"), py::arg("cases"), py::arg("names"));

  m.def(
      "implied_moments",
      [](const ModelSpec& spec, const Eigen::VectorXd& theta) {
        auto mom = implied_moments(spec, theta);
        return py::make_tuple(mom.mu, mom.sigma);
      },
      py::arg("spec"), py::arg("theta"));

  m.def(
      "casewise_loglik",
      [](const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const Eigen::MatrixXd& cases) {
        return casewise_loglik(ImpliedMoments{mu, sigma}, cases);
      },
      py::arg("mu"), py::arg("sigma"), py::arg("cases"));

  m.def(
      "simulate",
      [](const ModelSpec& spec, const Eigen::VectorXd& theta, Eigen::Index n, std::uint64_t seed) {
        return simulate_data(SimConfig{spec, theta, n, seed}).cases;
      },
      py::arg("spec"), py::arg("theta"), py::arg("n"), py::arg("seed") = 1);

  m.def(
      "compare_json",
      [](const FittedModel& a, const FittedModel& b, double alpha, double ci_level, const std::string& criterion,
         bool nested, bool one_sided) {
        CompareOptions co;
        co.alpha1 = co.alpha2 = alpha;
        co.ci_alpha = 1.0 - ci_level;
        co.criterion = parse_criterion(criterion);
        co.variant = nested ? Variant::Nested : Variant::NonNested;
        co.one_sided = one_sided;
        return comparison_report(sequential_compare(a, b, co)).dump();
      },
      py::arg("fit_a"), py::arg("fit_b"), py::arg("alpha") = 0.05, py::arg("ci_level") = 0.90,
      py::arg("criterion") = "bic", py::arg("nested") = false, py::arg("one_sided") = false);

  m.def("omega_hat_squared", &omega_hat_squared, py::arg("ll_a"), py::arg("ll_b"), py::arg("unbiased") = false);
  m.def(
      "ic_difference_ci",
      [](double diff, double omega_sq, Eigen::Index n, double alpha) {
        Interval i = ic_difference_ci(diff, omega_sq, n, alpha);
        return py::make_tuple(i.lower, i.upper);
      },
      py::arg("ic_diff"), py::arg("omega_sq"), py::arg("n"), py::arg("alpha"));
  m.def(
      "w_eigenvalues",
      [](const FittedModel& a, const FittedModel& b) { return real_eigenvalues(w_matrix(a, b)).values; },
      py::arg("fit_a"), py::arg("fit_b"));
  m.def("endpoint_sd", &endpoint_sd, py::arg("lowers"), py::arg("uppers"));

  py::class_<WeightedChiSq>(m, "WeightedChiSq")
      .def(py::init<std::vector<double>>(), py::arg("weights"))
      .def_property_readonly("weights", &WeightedChiSq::weights)
      .def("cdf", &WeightedChiSq::cdf, py::arg("x"))
      .def("upper_p", &WeightedChiSq::upper_p, py::arg("x"))
      .def("quantile", &WeightedChiSq::quantile, py::arg("prob"))
      .def("mean", &WeightedChiSq::mean)
      .def("variance", &WeightedChiSq::variance)
      .def("sample", &WeightedChiSq::sample, py::arg("n"), py::arg("seed") = 1);

  m.def(
      "bootstrap_ic_ci",
      [](const ModelSpec& a, const ModelSpec& b, const Eigen::MatrixXd& cases, const std::vector<std::string>& names,
         int reps, double alpha, const std::string& criterion, std::uint64_t seed) {
        BootstrapOptions bo;
        bo.reps = reps;
        bo.alpha = alpha;
        bo.criterion = parse_criterion(criterion);
        bo.seed = seed;
        auto r = bootstrap_ic_ci(a, b, make_dataset(cases, names), bo);
        return py::make_tuple(r.interval.lower, r.interval.upper, r.dropped);
      },
      py::arg("spec_a"), py::arg("spec_b"), py::arg("cases"), py::arg("names"), py::arg("reps") = 1000,
      py::arg("alpha") = 0.10, py::arg("criterion") = "bic", py::arg("seed") = 1);

  m.def(
      "run_simulation_json",
      [](int study, int reps, std::vector<Eigen::Index> n_levels, std::vector<double> d_levels, std::uint64_t seed,
         int boot_reps, int threads) {
        if (study < 1 || study > 3) throw std::invalid_argument("study must be 1, 2 or 3");
        SimOptions o = study == 1 ? sim1_defaults() : study == 2 ? sim2_defaults() : sim3_defaults();
        o.reps = reps;
        if (!n_levels.empty()) o.n_levels = std::move(n_levels);
        if (!d_levels.empty()) o.d_levels = std::move(d_levels);
        o.seed = seed;
        o.boot_reps = boot_reps;
        o.threads = threads;
        std::vector<SimSummary> rows;
        {
          py::gil_scoped_release release;
          rows = study == 1 ? run_sim1(o) : study == 2 ? run_sim2(o) : run_sim3(o);
        }
        nlohmann::ordered_json j = nlohmann::ordered_json::array();
        for (const auto& s : rows) j.push_back(to_json(s));
        return j.dump();
      },
      py::arg("study"), py::arg("reps"), py::arg("n_levels") = std::vector<Eigen::Index>{},
      py::arg("d_levels") = std::vector<double>{}, py::arg("seed") = 1, py::arg("boot_reps") = 0,
      py::arg("threads") = 0);
}
