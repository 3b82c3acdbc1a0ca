#pragma once

#include <functional>
#include <vector>

#include "mhri/tensor.hpp"

namespace mhri {

/**
 * Compares the reverse-mode gradient of a scalar-valued function against
 * central finite differences, componentwise. Relative error uses
 * max(|analytic|, |numeric|, 1e-8) as the denominator; the return value is
 * the maximum over all components of all inputs.
 *
 * The function must return a scalar tensor; anything else raises a
 * ContractError. Inputs are re-used across evaluations, so `f` must not
 * cache state between calls.
 */
double grad_check(const std::function<Tensor(std::vector<Tensor>&)>& f, std::vector<Tensor> inputs,
                  double h = 1e-5);

/// Single-input convenience overload.
double grad_check(const std::function<Tensor(Tensor&)>& f, Tensor x, double h = 1e-5);

/// Per-coordinate relative errors (inputs concatenated in order), same
/// protocol as grad_check. Lets callers combine several step widths: taking
/// the coordinate-wise minimum over steps rejects both round-off (small h)
/// and truncation (large h) artifacts while still catching any genuinely
/// wrong gradient, which fails at every step width.
std::vector<double> grad_check_errors(const std::function<Tensor(std::vector<Tensor>&)>& f,
                                      std::vector<Tensor>& inputs, double h);

}  // namespace mhri
