#include "moil/adam.hpp"

#include <cmath>

namespace moil {

void Adam::step(const std::vector<Param*>& params) {
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    for (Param* p : params) {
        auto& w = p->value.data;
        const auto& g = p->grad.data;
        auto& m = p->adam_m.data;
        auto& v = p->adam_v.data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double grad = g[i] + config_.weight_decay * w[i];
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * grad;
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * grad * grad;
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            w[i] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

void Adam::zero_grad(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

}  // namespace moil
