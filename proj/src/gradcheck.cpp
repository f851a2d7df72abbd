#include "rankprompt/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rankprompt/errors.hpp"

namespace rankprompt {

Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& point, double h) {
  if (!(h > 0.0)) throw ShapeError("finite differences: step must be positive");
  Matrix grad(point.rows(), point.cols());
  Matrix probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double original = point.values()[i];
    probe.values()[i] = original + h;
    const double up = f(probe);
    probe.values()[i] = original - h;
    const double down = f(probe);
    probe.values()[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite differences: non-finite value at entry (" +
                         std::to_string(i / std::max<std::size_t>(point.cols(), 1)) + ", " +
                         std::to_string(i % std::max<std::size_t>(point.cols(), 1)) + ")");
    }
    grad.values()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double finite_difference_check(const std::function<double(const Matrix&)>& f, const Matrix& point,
                               const Matrix& analytic, double h) {
  if (analytic.rows() != point.rows() || analytic.cols() != point.cols()) {
    throw ShapeError("finite differences: gradient " + analytic.shape_string() + " for point " +
                     point.shape_string());
  }
  const Matrix numeric = numeric_gradient(f, point, h);
  double worst = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double n = numeric.values()[i];
    worst = std::max(worst, std::abs(analytic.values()[i] - n) / (std::abs(n) + 1e-12));
  }
  return worst;
}

}  // namespace rankprompt
