#pragma once

#include <functional>

#include "rankprompt/matrix.hpp"

namespace rankprompt {

/// Compares an analytic gradient of `f` at `point` against central differences
/// with step `h`. Returns max over entries of
/// |analytic - numeric| / (|numeric| + 1e-12).
///
/// Throws NumericError naming the entry if `f` is non-finite at a perturbed point.
double finite_difference_check(const std::function<double(const Matrix&)>& f, const Matrix& point,
                               const Matrix& analytic, double h);

/// Central-difference gradient of `f` at `point`.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& point, double h);

}  // namespace rankprompt
