// Descent on the 1-D translation toy: steer a Dirac mass from 0 to 1 in unit time with
// controls in {0, 1, 2} on 8 intervals, then check the increment formula for the result.

#include <iostream>

#include "mfcontrol/mfcontrol.hpp"

int main() {
  using namespace mfc;

  const auto field = toys::translation_field();
  const auto ell = targeting_functional<1>(Vec<1>::Ones());
  const auto dirac = ParticleMeasure<1>::dirac(Vec<1>::Zero());
  const auto bounds = ControlSet<1>::scalar(0.0, 2.0).with_uniform_candidates(3);
  const auto u0 = ControlSignal<1>::constant(TimePartition::uniform(1.0, 8), Vec<1>::Zero(), bounds);

  DescentConfig<1> config;
  config.substeps = 10;
  config.candidates = bounds.candidates();

  const auto trace = run_descent(field, ell, dirac, u0, config);
  write_trace_csv(std::cout, trace);
  std::cout << '\n';
  write_control_csv(std::cout, trace.entries.back().control);

  IncrementOptions opt;
  opt.substeps = 100;
  const auto rep = evaluate_increment(field, ell, dirac, u0, trace.entries.back().control, opt);
  std::cout << "\nincrement: formula " << rep.formula_value << ", direct " << rep.direct_value << '\n';
}
