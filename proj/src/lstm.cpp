#include <cmath>

#include "eigen_util.hpp"
#include "moil/layers.hpp"

namespace moil {

using detail::as_matrix;
using detail::as_matrix2;
using detail::add_column_sums;
using detail::as_vector;
using detail::ConstStridedMap;
using detail::RowMatrix;

namespace {

inline double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace

LstmDirection::LstmDirection(std::size_t in_features, std::size_t hidden, bool reverse, Rng& rng,
                             const std::string& name)
    : input_weight(name + ".input_weight", {in_features, 4 * hidden}),
      recurrent_weight(name + ".recurrent_weight", {hidden, 4 * hidden}),
      bias(name + ".bias", {4 * hidden}),
      in_(in_features),
      hidden_(hidden),
      reverse_(reverse) {
    if (in_features == 0 || hidden == 0) throw ConfigError("lstm: sizes must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (Tensor* t : {&input_weight.value, &recurrent_weight.value, &bias.value}) {
        for (double& v : t->data) v = uniform_real(rng, -bound, bound);
    }
    for (std::size_t k = hidden; k < 2 * hidden; ++k) bias.value.data[k] = 1.0;
}

Tensor LstmDirection::forward(const Tensor& x, Mode) {
    if (x.rank() != 3 || x.dim(2) != in_) {
        throw ShapeError("lstm: expected [B x L x " + std::to_string(in_) + "] input, got " +
                         x.shape_string());
    }
    const std::size_t B = x.dim(0), L = x.dim(1), H = hidden_, G = 4 * hidden_;
    input_ = x;
    gates_ = Tensor({B * L, G});
    as_matrix(gates_).noalias() = as_matrix(x) * as_matrix2(input_weight.value);
    as_matrix(gates_).rowwise() += as_vector(bias.value);
    cells_ = Tensor({B * L, H});
    cell_tanh_ = Tensor({B * L, H});
    hidden_prev_ = Tensor({B * L, H});
    cell_prev_ = Tensor({B * L, H});
    Tensor out({B, L, H});

    RowMatrix h = RowMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(H));
    RowMatrix c = RowMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(H));
    RowMatrix recurrent(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(G));
    const auto wh = as_matrix2(recurrent_weight.value);

    for (std::size_t s = 0; s < L; ++s) {
        const std::size_t t = reverse_ ? L - 1 - s : s;
        recurrent.noalias() = h * wh;
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t row = b * L + t;
            const auto eb = static_cast<Eigen::Index>(b);
            double* g = gates_.data.data() + row * G;
            double* hp = hidden_prev_.data.data() + row * H;
            double* cp = cell_prev_.data.data() + row * H;
            for (std::size_t k = 0; k < H; ++k) {
                const auto ek = static_cast<Eigen::Index>(k);
                hp[k] = h(eb, ek);
                cp[k] = c(eb, ek);
            }
            for (std::size_t k = 0; k < G; ++k) g[k] += recurrent(eb, static_cast<Eigen::Index>(k));
            for (std::size_t k = 0; k < H; ++k) {
                const double in_gate = logistic(g[k]);
                const double forget_gate = logistic(g[H + k]);
                const double candidate = std::tanh(g[2 * H + k]);
                const double out_gate = logistic(g[3 * H + k]);
                g[k] = in_gate;
                g[H + k] = forget_gate;
                g[2 * H + k] = candidate;
                g[3 * H + k] = out_gate;
                const double cell = forget_gate * cp[k] + in_gate * candidate;
                const double ct = std::tanh(cell);
                const double hv = out_gate * ct;
                cells_.data[row * H + k] = cell;
                cell_tanh_.data[row * H + k] = ct;
                out.data[row * H + k] = hv;
                const auto ek = static_cast<Eigen::Index>(k);
                h(eb, ek) = hv;
                c(eb, ek) = cell;
            }
        }
    }
    return out;
}

Tensor LstmDirection::backward(const Tensor& grad_out) {
    if (input_.rank() != 3) throw ShapeError("lstm: backward before forward");
    const std::size_t B = input_.dim(0), L = input_.dim(1), H = hidden_, G = 4 * hidden_;
    if (grad_out.shape != std::vector<std::size_t>{B, L, H}) {
        throw ShapeError("lstm: gradient shape " + grad_out.shape_string() + " does not match output");
    }
    Tensor dgates({B * L, G});
    RowMatrix dh_next = RowMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(H));
    RowMatrix dc_next = RowMatrix::Zero(static_cast<Eigen::Index>(B), static_cast<Eigen::Index>(H));
    const auto wh = as_matrix2(recurrent_weight.value);

    for (std::size_t s = L; s-- > 0;) {
        const std::size_t t = reverse_ ? L - 1 - s : s;
        for (std::size_t b = 0; b < B; ++b) {
            const std::size_t row = b * L + t;
            const auto eb = static_cast<Eigen::Index>(b);
            const double* g = gates_.data.data() + row * G;
            double* dg = dgates.data.data() + row * G;
            for (std::size_t k = 0; k < H; ++k) {
                const auto ek = static_cast<Eigen::Index>(k);
                const double in_gate = g[k];
                const double forget_gate = g[H + k];
                const double candidate = g[2 * H + k];
                const double out_gate = g[3 * H + k];
                const double ct = cell_tanh_.data[row * H + k];
                const double dh = grad_out.data[row * H + k] + dh_next(eb, ek);
                const double dc = dh * out_gate * (1.0 - ct * ct) + dc_next(eb, ek);
                dg[k] = dc * candidate * in_gate * (1.0 - in_gate);
                dg[H + k] = dc * cell_prev_.data[row * H + k] * forget_gate * (1.0 - forget_gate);
                dg[2 * H + k] = dc * in_gate * (1.0 - candidate * candidate);
                dg[3 * H + k] = dh * ct * out_gate * (1.0 - out_gate);
                dc_next(eb, ek) = dc * forget_gate;
            }
        }
        const ConstStridedMap dg_t(dgates.data.data() + t * G, static_cast<Eigen::Index>(B),
                                   static_cast<Eigen::Index>(G),
                                   Eigen::OuterStride<>(static_cast<Eigen::Index>(L * G)));
        dh_next.noalias() = dg_t * wh.transpose();
    }

    const auto dg = as_matrix(dgates);
    as_matrix2(recurrent_weight.grad).noalias() += as_matrix(hidden_prev_).transpose() * dg;
    as_matrix2(input_weight.grad).noalias() += as_matrix(input_).transpose() * dg;
    add_column_sums(bias.grad, dgates);
    Tensor dx(input_.shape);
    as_matrix(dx).noalias() = dg * as_matrix2(input_weight.value).transpose();
    return dx;
}

BiLstm::BiLstm(std::size_t in_features, std::size_t hidden, Rng& rng, const std::string& name)
    : forward_(in_features, hidden, false, rng, name + ".fwd"),
      backward_(in_features, hidden, true, rng, name + ".bwd") {}

std::vector<Param*> BiLstm::params() {
    auto out = forward_.params();
    for (Param* p : backward_.params()) out.push_back(p);
    return out;
}

Tensor BiLstm::forward(const Tensor& x, Mode mode) {
    const Tensor f = forward_.forward(x, mode);
    const Tensor r = backward_.forward(x, mode);
    const std::size_t rows = f.rows(), H = forward_.hidden();
    Tensor out({x.dim(0), x.dim(1), 2 * H});
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(f.data.data() + i * H, H, out.data.data() + i * 2 * H);
        std::copy_n(r.data.data() + i * H, H, out.data.data() + i * 2 * H + H);
    }
    return out;
}

Tensor BiLstm::backward(const Tensor& grad_out) {
    const std::size_t H = forward_.hidden();
    if (grad_out.rank() != 3 || grad_out.dim(2) != 2 * H) throw ShapeError("bilstm: gradient shape mismatch");
    const std::size_t rows = grad_out.rows();
    Tensor gf({grad_out.dim(0), grad_out.dim(1), H});
    Tensor gr({grad_out.dim(0), grad_out.dim(1), H});
    for (std::size_t i = 0; i < rows; ++i) {
        std::copy_n(grad_out.data.data() + i * 2 * H, H, gf.data.data() + i * H);
        std::copy_n(grad_out.data.data() + i * 2 * H + H, H, gr.data.data() + i * H);
    }
    Tensor dx = forward_.backward(gf);
    const Tensor dr = backward_.backward(gr);
    for (std::size_t i = 0; i < dx.size(); ++i) dx.data[i] += dr.data[i];
    return dx;
}

}  // namespace moil
