#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace illumnet {

struct SvrParams {
  double C = 1.0;
  double epsilon = 0.01;  ///< half-width of the insensitive tube
  double gamma = 0.1;     ///< RBF kernel exp(-gamma ||a - b||^2)
  double tolerance = 1e-3;
  /// 0 selects max(10^7, 100 * samples).
  long max_iterations = 0;
};

/// Kernel expansion f(x) = sum_i coef_i K(sv_i, x) + bias.
struct SvrModel {
  double gamma = 0.0;
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> coefficients;
  double bias = 0.0;

  double predict(std::span<const double> x) const;
  bool operator==(const SvrModel&) const = default;
};

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma);

/// epsilon-SVR fitted by SMO on the dual with second-order working-set
/// selection. Throws UsageError for empty or ragged input and NumericError if
/// the solver does not converge within the iteration budget.
SvrModel fit_svr(std::span<const std::vector<double>> features, std::span<const double> targets,
                 const SvrParams& params);

}  // namespace illumnet
