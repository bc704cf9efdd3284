#pragma once

#include <string>
#include <vector>

#include "moil/tensor.hpp"

namespace moil {

// Every layer caches what its backward pass needs during forward(), so a
// backward() call always refers to the most recent forward(). backward()
// accumulates parameter gradients and returns the gradient w.r.t. the input.

/// 1-D convolution over the time axis, stride 1, zero "same" padding.
/// Input and output are [B x L x C].
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng,
           const std::string& name = "conv");

    Tensor forward(const Tensor& x, Mode mode = Mode::train);
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params() { return {&weight, &bias}; }

    std::size_t in_channels() const noexcept { return in_; }
    std::size_t out_channels() const noexcept { return out_; }
    std::size_t kernel() const noexcept { return kernel_; }

    Param weight;  // [kernel * in, out]; row j * in + c is tap j of input channel c
    Param bias;    // [out]

private:
    std::size_t in_ = 0, out_ = 0, kernel_ = 0;
    std::vector<std::size_t> input_shape_;
    Tensor columns_;  // [B * L, kernel * in]
};

/// Batch normalization per channel over (batch x time).
class BatchNorm1d {
public:
    BatchNorm1d() = default;
    explicit BatchNorm1d(std::size_t channels, const std::string& name = "bn",
                         double momentum = 0.1, double eps = 1e-5);

    /// Eval mode requires running statistics from at least one train-mode call.
    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params() { return {&gamma, &beta}; }
    std::vector<StateEntry> buffers();
    bool has_running_stats() const noexcept { return running_count_.data[0] > 0.0; }

    Param gamma;
    Param beta;
    Tensor running_mean;
    Tensor running_var;

private:
    std::string name_;
    std::size_t channels_ = 0;
    double momentum_ = 0.1;
    double eps_ = 1e-5;
    Tensor running_count_{{1}};
    Mode mode_ = Mode::train;
    Tensor normalized_;        // x_hat
    std::vector<double> inv_std_;
};

class Linear {
public:
    Linear() = default;
    Linear(std::size_t in_features, std::size_t out_features, Rng& rng,
           const std::string& name = "linear");

    /// Applies to the last dimension of any tensor.
    Tensor forward(const Tensor& x, Mode mode = Mode::train);
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params() { return {&weight, &bias}; }

    std::size_t in_features() const noexcept { return in_; }
    std::size_t out_features() const noexcept { return out_; }

    Param weight;  // [in, out]
    Param bias;    // [out]

private:
    std::size_t in_ = 0, out_ = 0;
    Tensor input_;
};

enum class ActivationKind { relu, sigmoid };

ActivationKind activation_from_string(const std::string& name);
std::string to_string(ActivationKind kind);

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

class Activation {
public:
    explicit Activation(ActivationKind kind = ActivationKind::relu) : kind_(kind) {}
    Tensor forward(const Tensor& x, Mode mode = Mode::train);
    Tensor backward(const Tensor& grad_out);
    ActivationKind kind() const noexcept { return kind_; }

private:
    ActivationKind kind_;
    Tensor output_;
};

/// One LSTM direction, gate order (input, forget, cell, output).
class LstmDirection {
public:
    LstmDirection() = default;
    LstmDirection(std::size_t in_features, std::size_t hidden, bool reverse, Rng& rng,
                  const std::string& name);

    Tensor forward(const Tensor& x, Mode mode = Mode::train);  // [B x L x H]
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params() { return {&input_weight, &recurrent_weight, &bias}; }

    std::size_t hidden() const noexcept { return hidden_; }

    Param input_weight;      // [in, 4H]
    Param recurrent_weight;  // [H, 4H]
    Param bias;              // [4H]

private:
    std::size_t in_ = 0, hidden_ = 0;
    bool reverse_ = false;
    Tensor input_;
    Tensor gates_;     // post-activation, [B * L x 4H]
    Tensor cells_;     // [B * L x H]
    Tensor cell_tanh_; // [B * L x H]
    Tensor hidden_prev_;  // h_{t-1} in processing order, [B * L x H]
    Tensor cell_prev_;    // c_{t-1}, [B * L x H]
};

/// Forward and reverse LSTMs with outputs concatenated per step: [B x L x 2H].
class BiLstm {
public:
    BiLstm() = default;
    BiLstm(std::size_t in_features, std::size_t hidden, Rng& rng, const std::string& name = "lstm");

    Tensor forward(const Tensor& x, Mode mode = Mode::train);
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params();

    std::size_t hidden() const noexcept { return forward_.hidden(); }
    LstmDirection& forward_direction() { return forward_; }
    LstmDirection& backward_direction() { return backward_; }

private:
    LstmDirection forward_;
    LstmDirection backward_;
};

}  // namespace moil
