#include "illumnet/svr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "illumnet/error.hpp"

namespace illumnet {

namespace {

constexpr double kTau = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double rbf_kernel(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

double SvrModel::predict(std::span<const double> x) const {
  double f = bias;
  for (std::size_t i = 0; i < support_vectors.size(); ++i)
    f += coefficients[i] * rbf_kernel(support_vectors[i], x, gamma);
  return f;
}

SvrModel fit_svr(std::span<const std::vector<double>> features, std::span<const double> targets,
                 const SvrParams& params) {
  const std::size_t l = features.size();
  if (l == 0 || targets.size() != l) throw UsageError("fit_svr needs matching non-empty inputs");
  const std::size_t dims = features[0].size();
  for (const auto& f : features)
    if (f.size() != dims) throw UsageError("fit_svr: ragged feature vectors");
  if (!(params.C > 0.0) || !(params.epsilon >= 0.0) || !(params.gamma > 0.0))
    throw UsageError("fit_svr: C and gamma must be positive, epsilon nonnegative");

  std::vector<double> kernel(l * l);
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t j = i; j < l; ++j)
      kernel[i * l + j] = kernel[j * l + i] = rbf_kernel(features[i], features[j], params.gamma);

  // Dual variables: alpha[i] (sign +1) and alpha[i + l] (sign -1) for sample i.
  const std::size_t n = 2 * l;
  const double C = params.C;
  std::vector<double> alpha(n, 0.0), grad(n);
  std::vector<int> sign(n);
  for (std::size_t i = 0; i < l; ++i) {
    sign[i] = 1;
    sign[i + l] = -1;
    grad[i] = params.epsilon - targets[i];
    grad[i + l] = params.epsilon + targets[i];
  }
  auto q = [&](std::size_t i, std::size_t j) {
    return sign[i] * sign[j] * kernel[(i % l) * l + (j % l)];
  };
  auto upper = [&](std::size_t t) { return alpha[t] >= C; };
  auto lower = [&](std::size_t t) { return alpha[t] <= 0.0; };

  const long budget = params.max_iterations > 0
                          ? params.max_iterations
                          : std::max<long>(10'000'000, 100 * static_cast<long>(l));
  long iter = 0;
  for (;; ++iter) {
    if (iter >= budget)
      throw NumericError("SVR solver did not converge in " + std::to_string(budget) + " iterations");

    // Maximal violating pair with second-order selection of the partner.
    double gmax = -kInf, gmax2 = -kInf;
    std::ptrdiff_t wi = -1, wj = -1;
    for (std::size_t t = 0; t < n; ++t) {
      if (sign[t] == 1) {
        if (!upper(t) && -grad[t] >= gmax) {
          gmax = -grad[t];
          wi = static_cast<std::ptrdiff_t>(t);
        }
      } else if (!lower(t) && grad[t] >= gmax) {
        gmax = grad[t];
        wi = static_cast<std::ptrdiff_t>(t);
      }
    }
    double best_obj = kInf;
    for (std::size_t t = 0; t < n && wi >= 0; ++t) {
      const auto i = static_cast<std::size_t>(wi);
      double grad_diff;
      double quad;
      if (sign[t] == 1) {
        if (lower(t)) continue;
        grad_diff = gmax + grad[t];
        gmax2 = std::max(gmax2, grad[t]);
        quad = 1.0 + 1.0 - 2.0 * sign[i] * q(i, t);
      } else {
        if (upper(t)) continue;
        grad_diff = gmax - grad[t];
        gmax2 = std::max(gmax2, -grad[t]);
        quad = 1.0 + 1.0 + 2.0 * sign[i] * q(i, t);
      }
      if (grad_diff > 0.0) {
        const double obj = -(grad_diff * grad_diff) / (quad > 0.0 ? quad : kTau);
        if (obj <= best_obj) {
          best_obj = obj;
          wj = static_cast<std::ptrdiff_t>(t);
        }
      }
    }
    if (gmax + gmax2 < params.tolerance || wj < 0) break;

    const auto i = static_cast<std::size_t>(wi);
    const auto j = static_cast<std::size_t>(wj);
    const double old_i = alpha[i];
    const double old_j = alpha[j];
    const double qii = q(i, i), qjj = q(j, j), qij = q(i, j);
    if (sign[i] != sign[j]) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = C - diff;
        }
      } else if (alpha[j] > C) {
        alpha[j] = C;
        alpha[i] = C + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) {
          alpha[i] = C;
          alpha[j] = sum - C;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > C) {
        if (alpha[j] > C) {
          alpha[j] = C;
          alpha[i] = sum - C;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i;
    const double dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
  }

  // Offset from free variables, or the midpoint of the feasible interval.
  double ub = kInf, lb = -kInf, sum_free = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = sign[t] * grad[t];
    if (upper(t)) {
      if (sign[t] == -1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else if (lower(t)) {
      if (sign[t] == 1)
        ub = std::min(ub, yg);
      else
        lb = std::max(lb, yg);
    } else {
      ++free_count;
      sum_free += yg;
    }
  }
  const double rho = free_count > 0 ? sum_free / static_cast<double>(free_count) : 0.5 * (ub + lb);

  SvrModel model;
  model.gamma = params.gamma;
  model.bias = -rho;
  for (std::size_t i = 0; i < l; ++i) {
    const double coef = alpha[i] - alpha[i + l];
    if (coef == 0.0) continue;
    model.support_vectors.push_back(features[i]);
    model.coefficients.push_back(coef);
  }
  return model;
}

}  // namespace illumnet
