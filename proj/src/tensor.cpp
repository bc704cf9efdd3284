#include "moil/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

namespace moil {

std::size_t shape_size(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : shape(std::move(dims)), data(shape_size(shape), fill) {}

bool Tensor::all_finite() const noexcept {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void Tensor::fill(double value) { std::fill(data.begin(), data.end(), value); }

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += " x ";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Param::Param(std::string param_name, std::vector<std::size_t> shape)
    : name(std::move(param_name)), value(shape), grad(shape), adam_m(shape), adam_v(shape) {}

void Param::zero_grad() { grad.fill(0.0); }

std::uint64_t hash_tensors(const std::vector<const Tensor*>& tensors) {
    std::uint64_t h = fnv1a(std::string_view{});
    for (const Tensor* t : tensors) {
        h = fnv1a(std::as_bytes(std::span(t->shape)), h);
        h = fnv1a(std::as_bytes(std::span(t->data)), h);
    }
    return h;
}

}  // namespace moil
