#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "clmm/fit.hpp"
#include "clmm/inference.hpp"
#include "clmm/prediction.hpp"
#include "clmm/simulate.hpp"

namespace py = pybind11;
using namespace clmm;

namespace {

Dataset dataset_from_arrays(const std::vector<long long>& cluster_ids,
                            const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                            const Eigen::MatrixXd& z) {
  const Eigen::Index n = y.size();
  if (static_cast<Eigen::Index>(cluster_ids.size()) != n || x.rows() != n || z.rows() != n)
    throw DimensionError("cluster_ids, y, X, Z must have matching row counts");
  std::vector<long long> order;
  std::map<long long, std::vector<Eigen::Index>> groups;
  for (Eigen::Index r = 0; r < n; ++r) {
    auto [it, inserted] = groups.try_emplace(cluster_ids[static_cast<size_t>(r)]);
    if (inserted) order.push_back(it->first);
    it->second.push_back(r);
  }
  std::vector<Cluster> clusters;
  for (long long id : order) {
    const std::vector<Eigen::Index>& rows = groups[id];
    Cluster c;
    c.id = id;
    c.y.resize(static_cast<Eigen::Index>(rows.size()));
    c.X.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
    c.Z.resize(static_cast<Eigen::Index>(rows.size()), z.cols());
    for (size_t t = 0; t < rows.size(); ++t) {
      c.y[static_cast<Eigen::Index>(t)] = y[rows[t]];
      c.X.row(static_cast<Eigen::Index>(t)) = x.row(rows[t]);
      c.Z.row(static_cast<Eigen::Index>(t)) = z.row(rows[t]);
    }
    clusters.push_back(std::move(c));
  }
  return Dataset(std::move(clusters));
}

std::string summary_csv(const StudySummary& s) {
  std::ostringstream out;
  write_summary_csv(s, out);
  return out.str();
}

std::string raw_csv(const StudySummary& s) {
  std::ostringstream out;
  write_raw_csv(s, out);
  return out.str();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "clustered linear mixed-effects models: profile-ML fits, "
            "fixed-cluster-count confidence intervals, BLUP prediction, and "
            "seeded simulation studies";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<DegenerateFitError>(m, "DegenerateFitError", PyExc_RuntimeError);
  py::register_exception<StudyError>(m, "StudyError", PyExc_RuntimeError);

  py::class_<Cluster>(m, "Cluster")
      .def_readonly("id", &Cluster::id)
      .def_readonly("y", &Cluster::y)
      .def_readonly("X", &Cluster::X)
      .def_readonly("Z", &Cluster::Z);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init(&dataset_from_arrays), py::arg("cluster_ids"), py::arg("y"),
           py::arg("X"), py::arg("Z"))
      .def_property_readonly("m", &Dataset::m)
      .def_property_readonly("N", &Dataset::total_rows)
      .def_property_readonly("p", &Dataset::p)
      .def_property_readonly("q", &Dataset::q)
      .def("cluster", &Dataset::cluster, py::return_value_policy::reference_internal)
      .def("__len__", &Dataset::m);

  m.def("read_csv", &read_csv_file, py::arg("path"));

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init([](std::vector<int> alpha, std::vector<int> gamma) {
             ModelSpec spec{std::move(alpha), std::move(gamma)};
             spec.check_ordering();
             return spec;
           }),
           py::arg("alpha"), py::arg("gamma"))
      .def_readonly("alpha", &ModelSpec::alpha)
      .def_readonly("gamma", &ModelSpec::gamma);

  py::class_<ValidationReport>(m, "ValidationReport")
      .def_property_readonly("ok", &ValidationReport::ok)
      .def_readonly("x_rank_deficient", &ValidationReport::x_rank_deficient)
      .def_readonly("z_rank_deficient", &ValidationReport::z_rank_deficient)
      .def("__repr__", [](const ValidationReport& r) {
        return "<ValidationReport " + r.summary() + ">";
      });
  m.def("validate", &validate, py::arg("dataset"), py::arg("spec"));

  py::class_<FitOptions>(m, "FitOptions")
      .def(py::init<>())
      .def_readwrite("grad_tol", &FitOptions::grad_tol)
      .def_readwrite("step_tol", &FitOptions::step_tol)
      .def_readwrite("max_iter", &FitOptions::max_iter)
      .def_readwrite("theta_cap", &FitOptions::theta_cap);

  py::class_<MLFit>(m, "MLFit")
      .def_readonly("alpha", &MLFit::alpha)
      .def_readonly("gamma", &MLFit::gamma)
      .def_readonly("theta_hat", &MLFit::theta_hat)
      .def_readonly("v2_hat", &MLFit::v2_hat)
      .def_readonly("sigma2_hat", &MLFit::sigma2_hat)
      .def_readonly("beta_hat", &MLFit::beta_hat)
      .def_readonly("neg2loglik", &MLFit::neg2loglik_min)
      .def_readonly("iterations", &MLFit::iterations)
      .def_readonly("converged", &MLFit::converged)
      .def_readonly("active_set", &MLFit::active_set)
      .def("sigma2", &MLFit::sigma2, py::arg("k"));

  m.def("fit", &fit, py::arg("dataset"), py::arg("spec"),
        py::arg("options") = FitOptions(), py::call_guard<py::gil_scoped_release>());
  m.def("method_of_moments_start", &method_of_moments_start, py::arg("dataset"),
        py::arg("spec"));

  m.def("normal_quantile", &normal_quantile, py::arg("a"));
  m.def("chisq_quantile", &chisq_quantile, py::arg("df"), py::arg("a"));
  m.def("chisq_cdf", &chisq_cdf, py::arg("df"), py::arg("x"));

  py::class_<ConfidenceInterval>(m, "ConfidenceInterval")
      .def_readonly("k", &ConfidenceInterval::k)
      .def_readonly("lower", &ConfidenceInterval::lower)
      .def_readonly("upper", &ConfidenceInterval::upper)
      .def_readonly("level", &ConfidenceInterval::level)
      .def_property_readonly("method",
                             [](const ConfidenceInterval& ci) { return method_name(ci.method); })
      .def("__repr__", [](const ConfidenceInterval& ci) {
        return "<" + method_name(ci.method) + " CI k=" + std::to_string(ci.k) + " (" +
               std::to_string(ci.lower) + ", " + std::to_string(ci.upper) + ")>";
      });

  m.def("classical_interval",
        py::overload_cast<const MLFit&, int, int, double>(&classical_interval),
        py::arg("fit"), py::arg("m"), py::arg("k"), py::arg("level") = 0.95);
  m.def("fixed_m_interval",
        py::overload_cast<const MLFit&, int, int, double>(&fixed_m_interval),
        py::arg("fit"), py::arg("m"), py::arg("k"), py::arg("level") = 0.95);

  py::class_<PredictionResult>(m, "PredictionResult")
      .def_readonly("b_blup", &PredictionResult::b_blup)
      .def_readonly("b_ls", &PredictionResult::b_ls)
      .def_readonly("fitted", &PredictionResult::fitted);
  m.def("blup", &blup, py::arg("dataset"), py::arg("spec"), py::arg("fit"));
  m.def("ls_predict", &ls_predict, py::arg("dataset"), py::arg("spec"));
  m.def("prediction_gap", &prediction_gap, py::arg("dataset"), py::arg("spec"),
        py::arg("b_true"), py::arg("sigma1_sq"), py::arg("v2"));
  m.def("expected_gap", &expected_gap, py::arg("m"), py::arg("v0_sq"), py::arg("sigma1_sq"));

  py::class_<Scenario>(m, "Scenario")
      .def_property_readonly("m", [](const Scenario& s) { return s.m; })
      .def_property_readonly("replications",
                             [](const Scenario& s) { return s.replications; })
      .def_property_readonly("seed", [](const Scenario& s) { return s.seed; })
      .def("cluster_sizes", &Scenario::cluster_sizes);
  m.def("parse_scenario_file", &parse_scenario_file, py::arg("path"));
  m.def("parse_scenario", [](const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in, "<string>");
  });

  m.def(
      "generate",
      [](const Scenario& sc, int replicate) {
        Replicate rep = generate(sc, replicate);
        return py::make_tuple(std::move(rep.data), std::move(rep.b_true));
      },
      py::arg("scenario"), py::arg("replicate"));

  py::class_<StudySummary>(m, "StudySummary")
      .def_readonly("completed", &StudySummary::completed)
      .def_readonly("failed", &StudySummary::failed)
      .def_readonly("estimands", &StudySummary::estimands)
      .def_readonly("mean", &StudySummary::mean)
      .def_readonly("sd", &StudySummary::sd)
      .def_readonly("classical_coverage", &StudySummary::classical_coverage)
      .def_readonly("fixedm_coverage", &StudySummary::fixedm_coverage)
      .def("summary_csv", &summary_csv)
      .def("raw_csv", &raw_csv);
  m.def("run_study", &run_study, py::arg("scenario"), py::arg("threads") = 1,
        py::call_guard<py::gil_scoped_release>());
}
