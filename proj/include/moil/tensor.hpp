#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "moil/common.hpp"

namespace moil {

/// Dense row-major tensor of doubles. Sequence tensors use [B x L x C].
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }
    /// Last dimension.
    std::size_t cols() const { return shape.empty() ? 0 : shape.back(); }
    /// Product of all but the last dimension.
    std::size_t rows() const { return cols() == 0 ? 0 : data.size() / cols(); }

    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    double& at(std::size_t b, std::size_t t, std::size_t c) {
        return data[(b * shape[1] + t) * shape[2] + c];
    }
    double at(std::size_t b, std::size_t t, std::size_t c) const {
        return data[(b * shape[1] + t) * shape[2] + c];
    }

    bool all_finite() const noexcept;
    void fill(double value);
    std::string shape_string() const;

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::size_t shape_size(const std::vector<std::size_t>& shape);

/// A trainable tensor with its gradient and Adam moments.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;

    Param() = default;
    Param(std::string param_name, std::vector<std::size_t> shape);
    void zero_grad();
};

enum class Mode { train, eval };

/// Named view of every tensor that makes up a module's persistent state.
struct StateEntry {
    std::string name;
    Tensor* tensor;
};

std::uint64_t hash_tensors(const std::vector<const Tensor*>& tensors);

}  // namespace moil
