// mfcontrol: command-line front end.
//
//   mfcontrol run --config FILE
//   mfcontrol increment-check --toy translation|random [--seed S] [--substeps K] [--quadrature Q] [--out FILE]
//   mfcontrol toy [--intervals N] [--iterations K] [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mfcontrol/mfcontrol.hpp"

namespace {

int run(const std::string& config_path) {
  const auto config = mfc::bloch::load_config(config_path);
  const auto result = mfc::bloch::run_experiment(config, &std::cout);
  std::cout << "wrote " << result.trace.entries.size() << " trace rows to " << config.output_dir << '\n';
  if (result.eulerian_clipped > 0)
    std::cout << "warning: " << result.eulerian_clipped << " negative Lax-Friedrichs cells clipped\n";
  return 0;
}

int increment_check(const std::string& toy, std::uint32_t seed, std::size_t substeps, std::size_t quadrature,
                    const std::string& out) {
  mfc::IncrementOptions opt;
  opt.substeps = substeps;
  opt.quadrature_per_interval = quadrature;
  mfc::IncrementReport rep;
  if (toy == "translation") {
    const auto part = mfc::TimePartition::uniform(1.0, 1);
    const auto bounds = mfc::ControlSet<1>::scalar(-2.0, 2.0);
    const auto ref = mfc::ControlSignal<1>::constant(part, mfc::Vec<1>::Zero(), bounds);
    const auto tgt = mfc::ControlSignal<1>::constant(part, mfc::Vec<1>::Ones(), bounds);
    rep = mfc::evaluate_increment(mfc::toys::translation_field(), mfc::targeting_functional<1>(mfc::Vec<1>::Ones()),
                                  mfc::ParticleMeasure<1>::dirac(mfc::Vec<1>::Zero()), ref, tgt, opt);
  } else if (toy == "random") {
    const auto c = mfc::toys::random_increment_case(seed);
    rep = mfc::evaluate_increment(c.field, c.ell, c.initial, c.reference, c.target, opt);
  } else {
    throw mfc::ConfigurationError("unknown toy '" + toy + "' (expected translation or random)");
  }
  mfc::write_increment_csv(out, rep);
  std::cout << std::setprecision(12) << "formula " << rep.formula_value << "\ndirect  " << rep.direct_value
            << "\nrelative gap " << rep.relative_gap << "\nwrote " << out << '\n';
  return 0;
}

int toy(std::size_t intervals, std::size_t iterations, const std::string& out) {
  const auto part = mfc::TimePartition::uniform(1.0, intervals);
  const auto bounds = mfc::ControlSet<1>::scalar(0.0, 2.0).with_uniform_candidates(3);
  mfc::DescentConfig<1> config;
  config.max_iterations = iterations;
  config.substeps = 10;
  config.candidates = bounds.candidates();
  const auto trace = mfc::run_descent(mfc::toys::translation_field(), mfc::targeting_functional<1>(mfc::Vec<1>::Ones()),
                                      mfc::ParticleMeasure<1>::dirac(mfc::Vec<1>::Zero()),
                                      mfc::ControlSignal<1>::constant(part, mfc::Vec<1>::Zero(), bounds), config);
  std::filesystem::create_directories(out);
  mfc::write_trace_csv((std::filesystem::path(out) / "trace.csv").string(), trace);
  for (std::size_t k = 0; k < trace.entries.size(); ++k) {
    mfc::write_control_csv((std::filesystem::path(out) / ("control_" + std::to_string(k) + ".csv")).string(),
                           trace.entries[k].control);
    std::cout << "iteration " << k << ": cost " << trace.entries[k].cost << ", pmp residual "
              << trace.entries[k].pmp_residual << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exact-increment descent for mean-field ensemble control"};
  app.require_subcommand(1);

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "run a Bloch pulse-design experiment from a config file");
  run_cmd->add_option("-c,--config", config_path, "key = value configuration file")->required();

  std::string toy_name = "translation";
  std::uint32_t seed = 1;
  std::size_t substeps = 250, quadrature = 25;
  std::string report = "increment_report.csv";
  auto* inc_cmd = app.add_subcommand("increment-check", "compare the increment formula with direct evaluation");
  inc_cmd->add_option("--toy", toy_name, "translation or random");
  inc_cmd->add_option("--seed", seed, "seed for the random toy");
  inc_cmd->add_option("--substeps", substeps, "RK4 steps per control interval")->check(CLI::PositiveNumber);
  inc_cmd->add_option("--quadrature", quadrature, "trapezoid cells per control interval (0: one per substep)");
  inc_cmd->add_option("--out", report, "report CSV");

  std::size_t intervals = 8, iterations = 5;
  std::string toy_out = "toy_out";
  auto* toy_cmd = app.add_subcommand("toy", "descent on the 1-D translation benchmark");
  toy_cmd->add_option("--intervals", intervals)->check(CLI::PositiveNumber);
  toy_cmd->add_option("--iterations", iterations)->check(CLI::PositiveNumber);
  toy_cmd->add_option("--out", toy_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run_cmd) return run(config_path);
    if (*inc_cmd) return increment_check(toy_name, seed, substeps, quadrature, report);
    if (*toy_cmd) return toy(intervals, iterations, toy_out);
  } catch (const mfc::ConfigurationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const mfc::DivergenceError& e) {
    std::cerr << "divergence at t = " << e.time() << ": " << e.what() << '\n';
    return 3;
  } catch (const mfc::MonotonicityViolation& e) {
    std::cerr << "monotonicity violation: " << e.what() << '\n';
    return 3;
  } catch (const mfc::DomainError& e) {
    std::cerr << "domain error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
