#include "moil/layers.hpp"

#include <cmath>

#include "eigen_util.hpp"

namespace moil {

using detail::as_matrix;
using detail::as_matrix2;
using detail::add_column_sums;
using detail::as_vector;

namespace {

void init_uniform(Tensor& t, double bound, Rng& rng) {
    for (double& v : t.data) v = uniform_real(rng, -bound, bound);
}

void require_sequence(const Tensor& x, std::size_t channels, const char* layer) {
    if (x.rank() != 3) {
        throw ShapeError(std::string(layer) + ": expected [B x L x C] input, got " + x.shape_string());
    }
    if (x.dim(2) != channels) {
        throw ShapeError(std::string(layer) + ": expected " + std::to_string(channels) +
                         " input channels, got " + std::to_string(x.dim(2)));
    }
}

}  // namespace

// ---------------------------------------------------------------- Conv1d

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, Rng& rng,
               const std::string& name)
    : weight(name + ".weight", {kernel * in_channels, out_channels}),
      bias(name + ".bias", {out_channels}),
      in_(in_channels),
      out_(out_channels),
      kernel_(kernel) {
    if (in_channels == 0 || out_channels == 0) throw ConfigError("conv1d: channel counts must be positive");
    if (kernel == 0 || kernel % 2 == 0) throw ConfigError("conv1d: kernel size must be odd");
    const double bound = 1.0 / std::sqrt(static_cast<double>(kernel * in_channels));
    init_uniform(weight.value, bound, rng);
    init_uniform(bias.value, bound, rng);
}

Tensor Conv1d::forward(const Tensor& x, Mode) {
    require_sequence(x, in_, "conv1d");
    const std::size_t B = x.dim(0), L = x.dim(1);
    const auto pad = static_cast<std::ptrdiff_t>((kernel_ - 1) / 2);
    input_shape_ = x.shape;
    columns_ = Tensor({B * L, kernel_ * in_});
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < L; ++t) {
            double* row = columns_.data.data() + (b * L + t) * kernel_ * in_;
            for (std::size_t j = 0; j < kernel_; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
                const double* from = x.data.data() + (b * L + static_cast<std::size_t>(src)) * in_;
                std::copy(from, from + in_, row + j * in_);
            }
        }
    }
    Tensor out({B, L, out_});
    auto y = as_matrix(out);
    y.noalias() = as_matrix(columns_) * as_matrix2(weight.value);
    y.rowwise() += as_vector(bias.value);
    return out;
}

Tensor Conv1d::backward(const Tensor& grad_out) {
    if (input_shape_.empty()) throw ShapeError("conv1d: backward before forward");
    const std::size_t B = input_shape_[0], L = input_shape_[1];
    if (grad_out.shape != std::vector<std::size_t>{B, L, out_}) {
        throw ShapeError("conv1d: gradient shape " + grad_out.shape_string() + " does not match output");
    }
    const auto dy = as_matrix(grad_out);
    as_matrix2(weight.grad).noalias() += as_matrix(columns_).transpose() * dy;
    add_column_sums(bias.grad, grad_out);

    Tensor dcols({B * L, kernel_ * in_});
    as_matrix(dcols).noalias() = dy * as_matrix2(weight.value).transpose();

    Tensor dx(input_shape_);
    const auto pad = static_cast<std::ptrdiff_t>((kernel_ - 1) / 2);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t t = 0; t < L; ++t) {
            const double* row = dcols.data.data() + (b * L + t) * kernel_ * in_;
            for (std::size_t j = 0; j < kernel_; ++j) {
                const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t + j) - pad;
                if (src < 0 || src >= static_cast<std::ptrdiff_t>(L)) continue;
                double* to = dx.data.data() + (b * L + static_cast<std::size_t>(src)) * in_;
                for (std::size_t c = 0; c < in_; ++c) to[c] += row[j * in_ + c];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- BatchNorm1d

BatchNorm1d::BatchNorm1d(std::size_t channels, const std::string& name, double momentum, double eps)
    : gamma(name + ".gamma", {channels}),
      beta(name + ".beta", {channels}),
      running_mean({channels}),
      running_var({channels}, 1.0),
      channels_(channels),
      momentum_(momentum),
      eps_(eps) {
    if (channels == 0) throw ConfigError("batchnorm1d: channel count must be positive");
    gamma.value.fill(1.0);
    name_ = name;
}

std::vector<StateEntry> BatchNorm1d::buffers() {
    return {{name_ + ".running_mean", &running_mean},
            {name_ + ".running_var", &running_var},
            {name_ + ".running_count", &running_count_}};
}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode) {
    if (x.cols() != channels_) {
        throw ShapeError("batchnorm1d: expected " + std::to_string(channels_) + " channels, got " +
                         x.shape_string());
    }
    const std::size_t N = x.rows();
    const std::size_t C = channels_;
    if (N == 0) throw ShapeError("batchnorm1d: empty input");
    mode_ = mode;

    std::vector<double> mean(C, 0.0), var(C, 0.0);
    if (mode == Mode::train) {
        for (std::size_t r = 0; r < N; ++r) {
            for (std::size_t c = 0; c < C; ++c) mean[c] += x.data[r * C + c];
        }
        for (double& m : mean) m /= static_cast<double>(N);
        for (std::size_t r = 0; r < N; ++r) {
            for (std::size_t c = 0; c < C; ++c) {
                const double d = x.data[r * C + c] - mean[c];
                var[c] += d * d;
            }
        }
        for (double& v : var) v /= static_cast<double>(N);

        const double unbias = N > 1 ? static_cast<double>(N) / static_cast<double>(N - 1) : 1.0;
        const bool first = !has_running_stats();
        for (std::size_t c = 0; c < C; ++c) {
            if (first) {
                running_mean.data[c] = mean[c];
                running_var.data[c] = var[c] * unbias;
            } else {
                running_mean.data[c] = (1.0 - momentum_) * running_mean.data[c] + momentum_ * mean[c];
                running_var.data[c] = (1.0 - momentum_) * running_var.data[c] + momentum_ * var[c] * unbias;
            }
        }
        running_count_.data[0] += 1.0;
    } else {
        if (!has_running_stats()) {
            throw TrainingError("batchnorm1d: eval mode requested before any training step");
        }
        mean = running_mean.data;
        var = running_var.data;
    }

    inv_std_.assign(C, 0.0);
    for (std::size_t c = 0; c < C; ++c) inv_std_[c] = 1.0 / std::sqrt(var[c] + eps_);

    normalized_ = Tensor(x.shape);
    Tensor out(x.shape);
    for (std::size_t r = 0; r < N; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double xh = (x.data[r * C + c] - mean[c]) * inv_std_[c];
            normalized_.data[r * C + c] = xh;
            out.data[r * C + c] = gamma.value.data[c] * xh + beta.value.data[c];
        }
    }
    return out;
}

Tensor BatchNorm1d::backward(const Tensor& grad_out) {
    if (grad_out.shape != normalized_.shape) throw ShapeError("batchnorm1d: gradient shape mismatch");
    const std::size_t N = grad_out.rows();
    const std::size_t C = channels_;
    std::vector<double> sum_dxhat(C, 0.0), sum_dxhat_xhat(C, 0.0);
    for (std::size_t r = 0; r < N; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double g = grad_out.data[r * C + c];
            const double xh = normalized_.data[r * C + c];
            gamma.grad.data[c] += g * xh;
            beta.grad.data[c] += g;
            const double dxh = g * gamma.value.data[c];
            sum_dxhat[c] += dxh;
            sum_dxhat_xhat[c] += dxh * xh;
        }
    }
    Tensor dx(grad_out.shape);
    const double n = static_cast<double>(N);
    for (std::size_t r = 0; r < N; ++r) {
        for (std::size_t c = 0; c < C; ++c) {
            const double dxh = grad_out.data[r * C + c] * gamma.value.data[c];
            if (mode_ == Mode::train) {
                const double xh = normalized_.data[r * C + c];
                dx.data[r * C + c] = inv_std_[c] / n * (n * dxh - sum_dxhat[c] - xh * sum_dxhat_xhat[c]);
            } else {
                dx.data[r * C + c] = dxh * inv_std_[c];
            }
        }
    }
    return dx;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in_features, std::size_t out_features, Rng& rng, const std::string& name)
    : weight(name + ".weight", {in_features, out_features}),
      bias(name + ".bias", {out_features}),
      in_(in_features),
      out_(out_features) {
    if (in_features == 0 || out_features == 0) throw ConfigError("linear: sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
    init_uniform(weight.value, bound, rng);
    init_uniform(bias.value, bound, rng);
}

Tensor Linear::forward(const Tensor& x, Mode) {
    if (x.cols() != in_) {
        throw ShapeError("linear: expected " + std::to_string(in_) + " input features, got " +
                         x.shape_string());
    }
    input_ = x;
    auto shape = x.shape;
    shape.back() = out_;
    Tensor out(shape);
    auto y = as_matrix(out);
    y.noalias() = as_matrix(x) * as_matrix2(weight.value);
    y.rowwise() += as_vector(bias.value);
    return out;
}

Tensor Linear::backward(const Tensor& grad_out) {
    if (grad_out.cols() != out_ || grad_out.rows() != input_.rows()) {
        throw ShapeError("linear: gradient shape mismatch");
    }
    const auto dy = as_matrix(grad_out);
    as_matrix2(weight.grad).noalias() += as_matrix(input_).transpose() * dy;
    add_column_sums(bias.grad, grad_out);
    Tensor dx(input_.shape);
    as_matrix(dx).noalias() = dy * as_matrix2(weight.value).transpose();
    return dx;
}

// ---------------------------------------------------------------- activations

ActivationKind activation_from_string(const std::string& name) {
    if (name == "relu") return ActivationKind::relu;
    if (name == "sigmoid") return ActivationKind::sigmoid;
    throw ConfigError("unknown activation '" + name + "' (expected relu or sigmoid)");
}

std::string to_string(ActivationKind kind) {
    return kind == ActivationKind::relu ? "relu" : "sigmoid";
}

Tensor relu(const Tensor& x) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = x.data[i] > 0.0 ? x.data[i] : 0.0;
    return out;
}

Tensor sigmoid(const Tensor& x) {
    Tensor out(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out.data[i] = 1.0 / (1.0 + std::exp(-x.data[i]));
    return out;
}

Tensor Activation::forward(const Tensor& x, Mode) {
    output_ = kind_ == ActivationKind::relu ? relu(x) : sigmoid(x);
    return output_;
}

Tensor Activation::backward(const Tensor& grad_out) {
    if (grad_out.shape != output_.shape) throw ShapeError("activation: gradient shape mismatch");
    Tensor dx(grad_out.shape);
    for (std::size_t i = 0; i < dx.size(); ++i) {
        const double y = output_.data[i];
        dx.data[i] = kind_ == ActivationKind::relu ? (y > 0.0 ? grad_out.data[i] : 0.0)
                                                   : grad_out.data[i] * y * (1.0 - y);
    }
    return dx;
}

}  // namespace moil
