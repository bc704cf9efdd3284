#pragma once

#include <functional>
#include <span>

namespace moil {

/// Largest per-coordinate relative error between `analytic` and a central
/// finite-difference gradient of `loss` w.r.t. the values in `point`.
/// `point` is perturbed in place and restored. Relative error is
/// |a - n| / max(|a|, |n|, floor).
double grad_check(const std::function<double()>& loss, std::span<double> point,
                  std::span<const double> analytic, double eps = 1e-4, double floor = 1e-6);

}  // namespace moil
