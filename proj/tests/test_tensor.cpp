#include <doctest.h>

#include <cmath>
#include <numbers>

#include "grad_support.hpp"
#include "moil/adam.hpp"
#include "moil/checkpoint.hpp"
#include "moil/layers.hpp"
#include "moil/loss.hpp"
#include "moil/moil_net.hpp"

using namespace moil;
using testing::layer_grad_error;
using testing::random_tensor;

namespace {

constexpr double kGradTolerance = 1e-4;

Tensor sequence(std::initializer_list<double> values) {
    Tensor t({1, values.size(), 1});
    std::copy(values.begin(), values.end(), t.data.begin());
    return t;
}

}  // namespace

TEST_SUITE("tensor-autograd") {

TEST_CASE("conv1d identity and all-ones kernels") {
    Rng rng(1);
    Conv1d conv(2, 2, 3, rng);
    conv.weight.value.fill(0.0);
    conv.bias.value.fill(0.0);
    for (std::size_t c = 0; c < 2; ++c) conv.weight.value.data[(1 * 2 + c) * 2 + c] = 1.0;
    const Tensor x = random_tensor({2, 7, 2}, rng);
    CHECK(conv.forward(x) == x);

    Conv1d ones(1, 1, 3, rng);
    ones.weight.value.fill(1.0);
    ones.bias.value.fill(0.0);
    CHECK(ones.forward(sequence({1, 2, 3})).data == std::vector<double>{3, 6, 5});

    CHECK_THROWS_AS(ones.forward(random_tensor({1, 4, 2}, rng)), ShapeError);
    CHECK_THROWS(Conv1d(1, 1, 4, rng));
}

TEST_CASE("batchnorm statistics") {
    Rng rng(2);
    BatchNorm1d bn(3);
    CHECK_THROWS(bn.forward(random_tensor({2, 4, 3}, rng), Mode::eval));

    Tensor x = random_tensor({16, 20, 3}, rng, 5.0);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += static_cast<double>(i % 3) * 7.0;
    const Tensor y = bn.forward(x, Mode::train);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, sq = 0.0;
        const std::size_t rows = y.rows();
        for (std::size_t r = 0; r < rows; ++r) mean += y.data[r * 3 + c];
        mean /= static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r) sq += (y.data[r * 3 + c] - mean) * (y.data[r * 3 + c] - mean);
        CHECK(std::abs(mean) < 1e-6);
        CHECK(std::abs(sq / static_cast<double>(rows) - 1.0) < 1e-3);
    }

    BatchNorm1d scaled(1);
    scaled.gamma.value.fill(2.0);
    scaled.beta.value.fill(3.0);
    const Tensor s = scaled.forward(sequence({-1.5, -0.5, 0.5, 1.5}), Mode::train);
    double mean = 0.0, sq = 0.0;
    for (double v : s.data) mean += v / 4.0;
    for (double v : s.data) sq += (v - mean) * (v - mean) / 4.0;
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(std::sqrt(sq) == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("batchnorm running statistics only move in train mode") {
    Rng rng(3);
    BatchNorm1d bn(2);
    const Tensor x = random_tensor({4, 6, 2}, rng);
    bn.forward(x, Mode::train);
    const Tensor mean = bn.running_mean, var = bn.running_var;
    bn.forward(random_tensor({4, 6, 2}, rng, 3.0), Mode::eval);
    CHECK(bn.running_mean == mean);
    CHECK(bn.running_var == var);
}

TEST_CASE("bilstm zero weights and time reversal") {
    Rng rng(4);
    BiLstm zero(2, 3, rng);
    for (auto* p : zero.params()) p->value.fill(0.0);
    const Tensor out = zero.forward(random_tensor({2, 5, 2}, rng));
    CHECK(out.shape == std::vector<std::size_t>{2, 5, 6});
    for (double v : out.data) CHECK(v == 0.0);

    BiLstm lstm(2, 3, rng);
    auto fwd = lstm.forward_direction().params();
    auto bwd = lstm.backward_direction().params();
    for (std::size_t i = 0; i < fwd.size(); ++i) bwd[i]->value = fwd[i]->value;
    const std::size_t L = 6, H = 3;
    const Tensor x = random_tensor({1, L, 2}, rng);
    Tensor reversed = x;
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t c = 0; c < 2; ++c) reversed.at(0, t, c) = x.at(0, L - 1 - t, c);
    }
    const Tensor a = lstm.forward(x);
    const Tensor b = lstm.forward(reversed);
    for (std::size_t t = 0; t < L; ++t) {
        for (std::size_t h = 0; h < H; ++h) {
            CHECK(b.at(0, t, h) == doctest::Approx(a.at(0, L - 1 - t, H + h)).epsilon(1e-14));
            CHECK(b.at(0, t, H + h) == doctest::Approx(a.at(0, L - 1 - t, h)).epsilon(1e-14));
        }
    }
}

TEST_CASE("activations and linear") {
    CHECK(relu(sequence({-1, 0, 2})).data == std::vector<double>{0, 0, 2});
    CHECK(sigmoid(sequence({0})).data[0] == 0.5);
    Activation act(ActivationKind::relu);
    act.forward(sequence({-1, 0, 2}));
    CHECK(act.backward(sequence({1, 1, 1})).data == std::vector<double>{0, 0, 1});
    CHECK(activation_from_string("sigmoid") == ActivationKind::sigmoid);
    CHECK_THROWS(activation_from_string("tanh"));

    Rng rng(5);
    Linear lin(3, 3, rng);
    lin.weight.value.fill(0.0);
    lin.bias.value.fill(0.0);
    for (std::size_t i = 0; i < 3; ++i) lin.weight.value.data[i * 3 + i] = 1.0;
    const Tensor x = random_tensor({2, 4, 3}, rng);
    CHECK(lin.forward(x) == x);
    CHECK_THROWS_AS(lin.forward(random_tensor({2, 4, 2}, rng)), ShapeError);
}

TEST_CASE("mse examples") {
    Rng rng(6);
    const Tensor p = random_tensor({2, 5, 3}, rng);
    CHECK(mse_loss(p, p).value == 0.0);
    Tensor shifted = p;
    for (auto& v : shifted.data) v += 1.0;
    CHECK(mse_loss(shifted, p).value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK_THROWS_AS(mse_loss(p, random_tensor({2, 5, 2}, rng)), ShapeError);
}

TEST_CASE("cross-entropy examples") {
    const std::vector<int> labels{0, 3};
    CHECK(cross_entropy(Tensor({1, 2, 4}, 0.7), labels).value == doctest::Approx(std::log(4.0)).epsilon(1e-14));
    double previous = INFINITY;
    for (double margin : {0.0, 1.0, 2.0, 5.0, 10.0, 30.0}) {
        Tensor logits({1, 1, 3});
        logits.data[1] = margin;
        const double loss = cross_entropy(logits, std::vector<int>{1}).value;
        CHECK(loss < previous);
        CHECK(loss >= 0.0);
        previous = loss;
    }
    CHECK(previous < 1e-12);
    CHECK_THROWS(cross_entropy(Tensor({1, 2, 3}), std::vector<int>{0, 3}));
    CHECK_THROWS(cross_entropy(Tensor({1, 2, 3}), std::vector<int>{0}));
    const Tensor big = softmax(Tensor({1, 1, 2}, 1000.0));
    CHECK(big.data == std::vector<double>{0.5, 0.5});
}

TEST_CASE("grad_check controls") {
    std::vector<double> x{0.3, -1.2, 2.5};
    const auto identity_sum = [&] { return x[0] + x[1] + x[2]; };
    const std::vector<double> ones{1, 1, 1};
    CHECK(grad_check(identity_sum, x, ones) < 1e-9);
    const std::vector<double> corrupted{1, 1.01, 1};
    CHECK(grad_check(identity_sum, x, corrupted) > 1e-3);
    CHECK(x == std::vector<double>{0.3, -1.2, 2.5});
}

TEST_CASE("gradient checks over five seeds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        CAPTURE(seed);
        Rng rng(100 + seed);

        Conv1d conv(2, 3, 5, rng);
        Tensor x = random_tensor({2, 8, 2}, rng);
        CHECK(layer_grad_error([&](const Tensor& in) { return conv.forward(in); },
                               [&](const Tensor& g) { return conv.backward(g); }, conv.params(), x, rng) <= kGradTolerance);

        BatchNorm1d bn(3);
        bn.gamma.value = random_tensor({3}, rng);
        bn.beta.value = random_tensor({3}, rng);
        Tensor xb = random_tensor({2, 8, 3}, rng);
        CHECK(layer_grad_error([&](const Tensor& in) { return bn.forward(in, Mode::train); },
                               [&](const Tensor& g) { return bn.backward(g); }, bn.params(), xb, rng) <= kGradTolerance);

        BiLstm lstm(2, 3, rng);
        Tensor xl = random_tensor({1, 5, 2}, rng);
        CHECK(layer_grad_error([&](const Tensor& in) { return lstm.forward(in); },
                               [&](const Tensor& g) { return lstm.backward(g); }, lstm.params(), xl, rng) <= kGradTolerance);

        Linear lin(4, 3, rng);
        Tensor xn = random_tensor({2, 3, 4}, rng);
        CHECK(layer_grad_error([&](const Tensor& in) { return lin.forward(in); },
                               [&](const Tensor& g) { return lin.backward(g); }, lin.params(), xn, rng) <= kGradTolerance);

        Activation sig(ActivationKind::sigmoid);
        Tensor xs = random_tensor({1, 4, 3}, rng, 3.0);
        CHECK(layer_grad_error([&](const Tensor& in) { return sig.forward(in); },
                               [&](const Tensor& g) { return sig.backward(g); }, {}, xs, rng) <= kGradTolerance);

        Projector proj(6, 4, 5, 3, 200 + seed);
        Tensor xp = random_tensor({2, 7, 6}, rng);
        CHECK(layer_grad_error([&](const Tensor& in) { return proj.forward(in, Mode::train); },
                               [&](const Tensor& g) { return proj.backward(g); }, proj.params(), xp, rng) <= kGradTolerance);

        Tensor pred = random_tensor({2, 4, 3}, rng);
        const Tensor target = random_tensor({2, 4, 3}, rng);
        const Tensor mse_grad = mse_loss(pred, target).grad;
        CHECK(grad_check([&] { return mse_loss(pred, target).value; }, pred.data, mse_grad.data) <= kGradTolerance);

        Tensor logits = random_tensor({2, 4, 5}, rng, 2.0);
        std::vector<int> labels(8);
        for (auto& c : labels) c = static_cast<int>(uniform_index(rng, 5));
        const Tensor ce_grad = cross_entropy(logits, labels).grad;
        CHECK(grad_check([&] { return cross_entropy(logits, labels).value; }, logits.data, ce_grad.data) <= kGradTolerance);
    }
}

TEST_CASE("adam first step and zero gradient") {
    Param p("w", {3});
    p.value.data = {1.0, -2.0, 0.5};
    p.grad.data = {0.5, -0.25, 3.0};
    Adam adam(AdamConfig{0.01, 0.9, 0.999, 1e-8, 0.0});
    adam.step({&p});
    const std::vector<double> start{1.0, -2.0, 0.5}, g{0.5, -0.25, 3.0};
    for (std::size_t i = 0; i < 3; ++i) {
        const double m_hat = (0.1 * g[i]) / (1 - 0.9);
        const double v_hat = (0.001 * g[i] * g[i]) / (1 - 0.999);
        CHECK(p.value.data[i] == doctest::Approx(start[i] - 0.01 * m_hat / (std::sqrt(v_hat) + 1e-8)).epsilon(1e-12));
        CHECK(p.value.data[i] - start[i] == doctest::Approx(-0.01 * (g[i] > 0 ? 1 : -1)).epsilon(1e-6));
    }

    Param q("q", {2});
    q.value.data = {0.3, 0.7};
    Adam plain(AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.0});
    plain.step({&q});
    CHECK(q.value.data == std::vector<double>{0.3, 0.7});

    Param r("r", {1});
    r.value.data = {2.0};
    Adam decayed(AdamConfig{0.1, 0.9, 0.999, 1e-8, 0.5});
    decayed.step({&r});
    CHECK(r.value.data[0] == doctest::Approx(1.9).epsilon(1e-9));
}

TEST_CASE("adam trajectories are reproducible") {
    auto run = [] {
        Param p("w", {4});
        p.value.data = {0.1, 0.2, 0.3, 0.4};
        Adam adam(AdamConfig{0.05, 0.9, 0.999, 1e-8, 1e-4});
        for (int step = 0; step < 2; ++step) {
            for (std::size_t i = 0; i < 4; ++i) p.grad.data[i] = p.value.data[i] * p.value.data[i] - 0.05;
            adam.step({&p});
        }
        return p.value.data;
    };
    CHECK(run() == run());
}

TEST_CASE("checkpoint round trip is bitwise") {
    testing::TempDir dir("ckpt");
    Rng rng(7);
    Checkpoint cp;
    cp.meta["seed"] = 12;
    cp.put("a", random_tensor({2, 3, 4}, rng));
    cp.put("b", random_tensor({5}, rng));
    save_checkpoint(cp, dir / "c.bin");
    const auto back = load_checkpoint(dir / "c.bin");
    CHECK(back.meta == cp.meta);
    CHECK(back.get("a") == cp.get("a"));
    CHECK(back.get("b") == cp.get("b"));
    CHECK_FALSE(back.has("c"));

    testing::write_text(dir / "junk.bin", "not a checkpoint");
    CHECK_THROWS(load_checkpoint(dir / "junk.bin"));
}

TEST_CASE("full training step is bit reproducible") {
    auto step = [] {
        MoilModel model(EncoderConfig::desk(), 3, 4, 9);
        Rng rng(10);
        const Tensor x = random_tensor({2, 20, 3}, rng);
        const Tensor y = random_tensor({2, 20, 4}, rng);
        Adam adam(AdamConfig{1e-3, 0.9, 0.999, 1e-8, 1e-4});
        for (int i = 0; i < 2; ++i) {
            Adam::zero_grad(model.params());
            model.backward(mse_loss(model.forward(x, Mode::train), y).grad);
            adam.step(model.params());
        }
        return model.encoder.parameter_hash();
    };
    CHECK(step() == step());
}

}  // TEST_SUITE
