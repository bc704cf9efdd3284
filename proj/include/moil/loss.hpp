#pragma once

#include <span>
#include <vector>

#include "moil/tensor.hpp"

namespace moil {

struct LossResult {
    double value = 0.0;
    Tensor grad;  // d loss / d prediction, same shape as the prediction
};

/// Mean squared error averaged over channels, time steps and batch.
LossResult mse_loss(const Tensor& pred, const Tensor& target);

/// Softmax cross-entropy over the last dimension of [B x l x C] logits.
/// The per-window sum of -log p(true class) is divided by l and averaged over
/// the batch, so the value is the mean per-time-step negative log-likelihood.
LossResult cross_entropy(const Tensor& logits, std::span<const int> labels);

/// Row-wise softmax over the last dimension, max-subtracted.
Tensor softmax(const Tensor& logits);

}  // namespace moil
