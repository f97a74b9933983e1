// clmm: fit clustered linear mixed-effects models from CSV, report
// variance-component confidence intervals and random-effect predictions, and
// run seeded simulation studies from scenario files.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "clmm/fit.hpp"
#include "clmm/inference.hpp"
#include "clmm/prediction.hpp"
#include "clmm/simulate.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitFit = 2;

std::string fmt6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

int thread_count_from_env() {
  const char* raw = std::getenv("CLMM_THREADS");
  if (!raw) return 1;
  const int value = std::atoi(raw);
  return value >= 1 ? value : 1;
}

struct ModelArgs {
  std::string data_path;
  std::string fixed, random;

  clmm::Dataset load() const { return clmm::read_csv_file(data_path); }
  clmm::ModelSpec spec() const {
    return {clmm::ModelSpec::parse_indices(fixed), clmm::ModelSpec::parse_indices(random)};
  }
};

void add_model_options(CLI::App* cmd, ModelArgs* args) {
  cmd->add_option("--data", args->data_path, "input CSV (cluster,y,x1..xp,z1..zq)")
      ->required();
  cmd->add_option("--fixed", args->fixed, "1-based X columns, e.g. 1,2,3");
  cmd->add_option("--random", args->random, "1-based Z columns, e.g. 1,2");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw clmm::InputError("cannot write '" + path + "'");
  return out;
}

clmm::MLFit checked_fit(const clmm::Dataset& data, const clmm::ModelSpec& spec) {
  const clmm::ValidationReport report = clmm::validate(data, spec);
  if (!report.ok()) throw clmm::InputError("invalid input: " + report.summary());
  return clmm::fit(data, spec);
}

int cmd_fit(const ModelArgs& args, const std::string& out_path) {
  const clmm::Dataset data = args.load();
  const clmm::ModelSpec spec = args.spec();
  const clmm::MLFit fit = checked_fit(data, spec);

  std::ostringstream body;
  body << "key,value\n";
  body << "m," << data.m() << '\n';
  body << "N," << data.total_rows() << '\n';
  body << "converged," << (fit.converged ? 1 : 0) << '\n';
  body << "iterations," << fit.iterations << '\n';
  body << "neg2loglik," << fmt6(fit.neg2loglik_min) << '\n';
  body << "v2_hat," << fmt6(fit.v2_hat) << '\n';
  for (int s = 0; s < fit.theta_hat.size(); ++s)
    body << "theta_hat[" << spec.gamma[static_cast<size_t>(s)] << "],"
         << fmt6(fit.theta_hat[s]) << '\n';
  for (int s = 0; s < fit.sigma2_hat.size(); ++s)
    body << "sigma2_hat[" << spec.gamma[static_cast<size_t>(s)] << "],"
         << fmt6(fit.sigma2_hat[s]) << '\n';
  for (int s = 0; s < fit.beta_hat.size(); ++s)
    body << "beta_hat[" << spec.alpha[static_cast<size_t>(s)] << "],"
         << fmt6(fit.beta_hat[s]) << '\n';
  for (int k : fit.active_set) body << "active[" << k << "],0\n";
  if (fit.hit_cap) body << "hit_cap,1\n";

  if (out_path.empty())
    std::cout << body.str();
  else
    open_out(out_path) << body.str();
  return fit.converged ? kExitOk : kExitFit;
}

int cmd_ci(const ModelArgs& args, double level, const std::string& method,
           const std::string& out_path) {
  if (method != "classical" && method != "fixedm" && method != "both")
    throw clmm::DomainError("--method must be classical, fixedm, or both");
  const clmm::Dataset data = args.load();
  const clmm::ModelSpec spec = args.spec();
  const clmm::MLFit fit = checked_fit(data, spec);

  std::ostringstream body;
  body << "k,method,lower,upper,level\n";
  for (int k : spec.gamma) {
    if (method != "fixedm") {
      const clmm::ConfidenceInterval ci = clmm::classical_interval(fit, data.m(), k, level);
      body << k << ",classical," << fmt6(ci.lower) << ',' << fmt6(ci.upper) << ','
           << fmt6(level) << '\n';
    }
    if (method != "classical") {
      const clmm::ConfidenceInterval ci = clmm::fixed_m_interval(fit, data.m(), k, level);
      body << k << ",fixedm," << fmt6(ci.lower) << ',' << fmt6(ci.upper) << ','
           << fmt6(level) << '\n';
    }
  }
  if (out_path.empty())
    std::cout << body.str();
  else
    open_out(out_path) << body.str();
  return fit.converged ? kExitOk : kExitFit;
}

int cmd_predict(const ModelArgs& args, const std::string& out_path,
                const std::string& fitted_path) {
  const clmm::Dataset data = args.load();
  const clmm::ModelSpec spec = args.spec();
  const clmm::MLFit fit = checked_fit(data, spec);
  const clmm::PredictionResult pred = clmm::blup(data, spec, fit);

  std::ostringstream body;
  body << "cluster,effect,b_blup,b_ls\n";
  for (int i = 0; i < data.m(); ++i)
    for (int s = 0; s < spec.q_gamma(); ++s)
      body << data.cluster(i).id << ',' << spec.gamma[static_cast<size_t>(s)] << ','
           << fmt6(pred.b_blup[static_cast<size_t>(i)][s]) << ','
           << fmt6(pred.b_ls[static_cast<size_t>(i)][s]) << '\n';
  if (out_path.empty())
    std::cout << body.str();
  else
    open_out(out_path) << body.str();

  if (!fitted_path.empty()) {
    std::ofstream fitted = open_out(fitted_path);
    fitted << "cluster,row,fitted\n";
    for (int i = 0; i < data.m(); ++i)
      for (Eigen::Index r = 0; r < data.cluster(i).rows(); ++r)
        fitted << data.cluster(i).id << ',' << r + 1 << ','
               << fmt6(pred.fitted[static_cast<size_t>(i)][r]) << '\n';
  }
  return fit.converged ? kExitOk : kExitFit;
}

int cmd_simulate(const std::string& scenario_path, const std::string& out_dir, int threads) {
  const clmm::Scenario scenario = clmm::parse_scenario_file(scenario_path);
  const clmm::StudySummary summary = clmm::run_study(scenario, threads);

  namespace fs = std::filesystem;
  const fs::path dir = out_dir.empty() ? fs::path(".") : fs::path(out_dir);
  fs::create_directories(dir);
  std::ofstream summary_out = open_out((dir / "summary.csv").string());
  clmm::write_summary_csv(summary, summary_out);
  std::ofstream raw_out = open_out((dir / "raw.csv").string());
  clmm::write_raw_csv(summary, raw_out);
  std::cout << "completed," << summary.completed << "\nfailed," << summary.failed << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"clustered linear mixed-effects models: ML fits, variance-component "
               "confidence intervals, random-effect prediction, simulation studies"};
  app.require_subcommand(1);

  ModelArgs fit_args;
  std::string fit_out;
  CLI::App* fit_cmd = app.add_subcommand("fit", "maximum-likelihood fit from CSV");
  add_model_options(fit_cmd, &fit_args);
  fit_cmd->add_option("--out", fit_out, "write the report here instead of stdout");

  ModelArgs ci_args;
  std::string ci_out, ci_method = "both";
  double ci_level = 0.95;
  CLI::App* ci_cmd =
      app.add_subcommand("ci", "confidence intervals for random-effect variances");
  add_model_options(ci_cmd, &ci_args);
  ci_cmd->add_option("--level", ci_level, "confidence level in (0,1)");
  ci_cmd->add_option("--method", ci_method, "classical | fixedm | both");
  ci_cmd->add_option("--out", ci_out, "write the table here instead of stdout");

  ModelArgs predict_args;
  std::string predict_out, predict_fitted;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "empirical BLUP and LS random-effect predictions");
  add_model_options(predict_cmd, &predict_args);
  predict_cmd->add_option("--out", predict_out, "write the table here instead of stdout");
  predict_cmd->add_option("--fitted", predict_fitted, "also write fitted Z b values here");

  std::string scenario_path, simulate_out;
  int threads = thread_count_from_env();
  CLI::App* simulate_cmd = app.add_subcommand("simulate", "run a scenario study");
  simulate_cmd->add_option("--scenario", scenario_path, "scenario file")->required();
  simulate_cmd->add_option("--out", simulate_out, "output directory (default .)");
  simulate_cmd->add_option("--threads", threads,
                           "worker threads (default: CLMM_THREADS or 1)");

  try {
    app.parse(argc, argv);
    if (fit_cmd->parsed()) return cmd_fit(fit_args, fit_out);
    if (ci_cmd->parsed()) return cmd_ci(ci_args, ci_level, ci_method, ci_out);
    if (predict_cmd->parsed()) return cmd_predict(predict_args, predict_out, predict_fitted);
    if (simulate_cmd->parsed()) return cmd_simulate(scenario_path, simulate_out, threads);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const clmm::DegenerateFitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFit;
  } catch (const clmm::StudyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFit;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInput;
  }
  return kExitInput;
}
