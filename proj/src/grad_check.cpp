#include "moil/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "moil/common.hpp"

namespace moil {

double grad_check(const std::function<double()>& loss, std::span<double> point,
                  std::span<const double> analytic, double eps, double floor) {
    if (point.size() != analytic.size()) throw ShapeError("grad_check: gradient size mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double saved = point[i];
        point[i] = saved + eps;
        const double up = loss();
        point[i] = saved - eps;
        const double down = loss();
        point[i] = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

}  // namespace moil
