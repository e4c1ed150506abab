#pragma once

#include <functional>
#include <vector>

namespace ctrecon::detail {

struct NelderMeadOptions {
  int max_evaluations = 4000;
  double initial_step = 0.1;
  double f_tolerance = 1e-10;  // relative spread of simplex values
  double x_tolerance = 1e-8;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

/// Unconstrained derivative-free minimisation (standard reflection /
/// expansion / contraction / shrink coefficients 1, 2, 0.5, 0.5).
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const NelderMeadOptions& options = {});

}  // namespace ctrecon::detail
