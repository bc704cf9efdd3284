#pragma once

#include <algorithm>
#include <functional>
#include <vector>

#include "moil/grad_check.hpp"
#include "moil/tensor.hpp"
#include "support.hpp"

namespace testing {

inline double dot(const moil::Tensor& a, const moil::Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Worst relative error over the input and every parameter for the scalar
/// loss <forward(x), R> with a fixed random R.
template <class Forward, class Backward>
double layer_grad_error(Forward forward, Backward backward, const std::vector<moil::Param*>& params,
                        moil::Tensor& x, moil::Rng& rng) {
    const moil::Tensor out = forward(x);
    const moil::Tensor weights = random_tensor(out.shape, rng);
    for (auto* p : params) p->zero_grad();
    const moil::Tensor grad_x = backward(weights);
    const auto loss = [&] { return dot(forward(x), weights); };
    double worst = moil::grad_check(loss, x.data, grad_x.data);
    for (auto* p : params) {
        const moil::Tensor analytic = p->grad;
        worst = std::max(worst, moil::grad_check(loss, p->value.data, analytic.data));
    }
    return worst;
}

}  // namespace testing
