#include "moil/loss.hpp"

#include <algorithm>
#include <cmath>

namespace moil {

LossResult mse_loss(const Tensor& pred, const Tensor& target) {
    if (pred.shape != target.shape) {
        throw ShapeError("mse_loss: prediction " + pred.shape_string() + " vs target " +
                         target.shape_string());
    }
    if (pred.size() == 0) throw ShapeError("mse_loss: empty input");
    const double n = static_cast<double>(pred.size());
    LossResult r{0.0, Tensor(pred.shape)};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - target.data[i];
        r.value += d * d;
        r.grad.data[i] = 2.0 * d / n;
    }
    r.value /= n;
    return r;
}

Tensor softmax(const Tensor& logits) {
    Tensor p(logits.shape);
    const std::size_t C = logits.cols();
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* z = logits.data.data() + r * C;
        double* out = p.data.data() + r * C;
        const double peak = *std::max_element(z, z + C);
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) {
            out[c] = std::exp(z[c] - peak);
            total += out[c];
        }
        for (std::size_t c = 0; c < C; ++c) out[c] /= total;
    }
    return p;
}

LossResult cross_entropy(const Tensor& logits, std::span<const int> labels) {
    if (logits.rank() != 3) throw ShapeError("cross_entropy: expected [B x l x C] logits");
    const std::size_t B = logits.dim(0), l = logits.dim(1), C = logits.dim(2);
    if (labels.size() != B * l) throw ShapeError("cross_entropy: label count does not match logits");
    if (B == 0 || l == 0 || C == 0) throw ShapeError("cross_entropy: empty input");
    LossResult r{0.0, Tensor(logits.shape)};
    const double scale = 1.0 / static_cast<double>(B * l);
    for (std::size_t row = 0; row < B * l; ++row) {
        const int y = labels[row];
        if (y < 0 || static_cast<std::size_t>(y) >= C) {
            throw ValueError("cross_entropy: class id " + std::to_string(y) + " outside [0, " +
                             std::to_string(C) + ")");
        }
        const double* z = logits.data.data() + row * C;
        double* g = r.grad.data.data() + row * C;
        const double peak = *std::max_element(z, z + C);
        double total = 0.0;
        for (std::size_t c = 0; c < C; ++c) total += std::exp(z[c] - peak);
        const double log_total = std::log(total);
        r.value += -(z[y] - peak - log_total);
        for (std::size_t c = 0; c < C; ++c) {
            const double p = std::exp(z[c] - peak - log_total);
            g[c] = (p - (static_cast<int>(c) == y ? 1.0 : 0.0)) * scale;
        }
    }
    r.value *= scale;
    return r;
}

}  // namespace moil
