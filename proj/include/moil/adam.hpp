#pragma once

#include <cstdint>
#include <vector>

#include "moil/tensor.hpp"

namespace moil {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // L2 term added to the gradient
};

/// Adam with bias correction. Moments live in each Param; the step counter
/// lives here.
class Adam {
public:
    Adam() = default;
    explicit Adam(AdamConfig config) : config_(config) {}

    void step(const std::vector<Param*>& params);
    static void zero_grad(const std::vector<Param*>& params);

    std::uint64_t steps() const noexcept { return steps_; }
    void set_steps(std::uint64_t steps) noexcept { steps_ = steps; }
    const AdamConfig& config() const noexcept { return config_; }
    void set_lr(double lr) noexcept { config_.lr = lr; }

private:
    AdamConfig config_;
    std::uint64_t steps_ = 0;
};

}  // namespace moil
