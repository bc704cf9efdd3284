#include <doctest.h>

#include "moil/downstream.hpp"
#include "moil/experiment.hpp"
#include "support.hpp"

using namespace moil;
using testing::random_tensor;

namespace {

EncoderConfig tiny_encoder() {
    EncoderConfig c = EncoderConfig::desk();
    c.conv_blocks = 1;
    c.conv_channels = 4;
    c.rnn_blocks = 1;
    c.lstm_units = 4;
    return c;
}

Period labeled_period(const std::string& id, std::size_t length, std::size_t classes, Rng& rng) {
    Period p;
    p.worker_id = "w";
    p.period_id = id;
    p.values = Grid<double>(length, 2);
    std::vector<int> labels(length);
    for (std::size_t t = 0; t < length; ++t) {
        labels[t] = static_cast<int>((t / 10) % classes);
        p.values(t, 0) = labels[t] == 0 ? 0.1 : 0.9;
        p.values(t, 1) = uniform_unit(rng) * 0.2 + 0.4 * static_cast<double>(labels[t]) / static_cast<double>(classes);
    }
    p.labels = labels;
    return p;
}

/// Counting oracle: share of positions where prediction equals truth.
double pooled_accuracy(const std::vector<std::vector<int>>& pred, const std::vector<std::vector<int>>& truth) {
    std::size_t hit = 0, total = 0;
    for (std::size_t p = 0; p < pred.size(); ++p) {
        for (std::size_t t = 0; t < pred[p].size(); ++t) {
            hit += pred[p][t] == truth[p][t] ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

TEST_SUITE("downstream") {

TEST_CASE("classifier logits and parameter count") {
    ClassifierConfig cfg;
    cfg.classes = 10;
    Classifier clf(256, cfg, 1);
    Rng rng(1);
    const Tensor logits = clf.forward(random_tensor({2, 5, 256}, rng), Mode::train);
    CHECK(logits.shape == std::vector<std::size_t>{2, 5, 10});
    const std::size_t expected = (256 * 256 + 256) + 2 * 256 + (256 * 128 + 128) + 2 * 128 + (128 * 10 + 10);
    CHECK(clf.parameter_count() == expected);

    ClassifierConfig small;
    small.hidden = {7};
    small.classes = 3;
    Classifier other(5, small, 2);
    CHECK(other.parameter_count() == (5 * 7 + 7) + 2 * 7 + (7 * 3 + 3));

    ClassifierConfig bad;
    bad.classes = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK_THROWS_AS(clf.forward(random_tensor({1, 5, 64}, rng), Mode::train), ShapeError);
}

TEST_CASE("classifier trains on a frozen encoder") {
    Rng rng(2);
    std::vector<Period> periods{labeled_period("a", 60, 2, rng), labeled_period("b", 60, 2, rng)};
    std::vector<const Period*> pointers{&periods[0], &periods[1]};
    const auto windows = make_labeled_windows(pointers, 60, 60);
    REQUIRE(windows.count() == 2);
    Encoder encoder(tiny_encoder(), 2, 3);
    encoder.calibrate_batchnorm(windows.inputs);

    ClassifierConfig cfg;
    cfg.classes = 2;
    cfg.epochs = 300;
    cfg.lr = 1e-2;
    const auto first = train_classifier(encoder, windows, cfg, 4);
    CHECK(first.encoder_hash_before == first.encoder_hash_after);
    CHECK(first.encoder_hash_before == encoder.parameter_hash());
    CHECK(first.loss_curve.back() < 0.05);

    cfg.epochs = 5;
    auto a = train_classifier(encoder, windows, cfg, 5);
    auto b = train_classifier(encoder, windows, cfg, 5);
    CHECK(a.loss_curve == b.loss_curve);
    const Tensor features = encode_windows(encoder, windows.inputs);
    CHECK(a.classifier.forward(features, Mode::eval) == b.classifier.forward(features, Mode::eval));

    std::size_t hooks = 0;
    train_classifier(encoder, windows, cfg, 5, [&](std::size_t epoch, double, Classifier&) { CHECK(epoch == ++hooks); });
    CHECK(hooks == 5);
}

TEST_CASE("classifier training rejects bad labels") {
    Rng rng(3);
    std::vector<Period> periods{labeled_period("a", 40, 3, rng)};
    std::vector<const Period*> pointers{&periods[0]};
    const auto windows = make_labeled_windows(pointers, 40, 40);
    Encoder encoder(tiny_encoder(), 2, 3);
    encoder.calibrate_batchnorm(windows.inputs);
    ClassifierConfig cfg;
    cfg.classes = 2;
    cfg.epochs = 1;
    CHECK_THROWS_WITH_AS(train_classifier(encoder, windows, cfg, 1), doctest::Contains("class id 2"), ValueError);

    Period unlabeled = periods[0];
    unlabeled.labels.reset();
    std::vector<const Period*> bad{&unlabeled};
    CHECK_THROWS_AS(make_labeled_windows(bad, 40, 40), ValueError);
}

TEST_CASE("argmax with lowest-id tie break") {
    Tensor logits({1, 3, 6});
    logits.at(0, 0, 4) = 2.0;
    logits.at(0, 1, 1) = -1.0;
    logits.at(0, 1, 0) = -2.0;
    for (std::size_t c = 0; c < 6; ++c) logits.at(0, 1, c) -= 5.0;
    logits.at(0, 1, 3) = 0.5;
    logits.at(0, 2, 2) = 3.0;
    logits.at(0, 2, 5) = 3.0;
    CHECK(argmax_labels(logits) == std::vector<int>{4, 3, 2});
}

TEST_CASE("prediction windows") {
    CHECK(prediction_starts(250, 100) == std::vector<std::size_t>{0, 100, 150});
    CHECK(prediction_starts(300, 100) == std::vector<std::size_t>{0, 100, 200});
    CHECK(prediction_starts(60, 100) == std::vector<std::size_t>{0});

    Rng rng(4);
    Period p = labeled_period("p", 250, 3, rng);
    std::vector<const Period*> pointers{&p};
    Encoder encoder(tiny_encoder(), 2, 5);
    const auto windows = make_labeled_windows(pointers, 100, 50);
    encoder.calibrate_batchnorm(windows.inputs);
    ClassifierConfig cfg;
    cfg.classes = 3;
    cfg.epochs = 3;
    auto trained = train_classifier(encoder, windows, cfg, 6);
    const auto labels = predict(encoder, trained.classifier, p, 100);
    REQUIRE(labels.size() == 250);

    for (std::size_t start : {std::size_t{0}, std::size_t{100}, std::size_t{150}}) {
        Tensor x({1, 100, 2});
        std::copy_n(p.values.data().data() + start * 2, 200, x.data.data());
        const auto own = argmax_labels(trained.classifier.forward(encode_windows(encoder, x), Mode::eval));
        const std::size_t from = start == 100 ? 100 : start;
        const std::size_t to = start == 100 ? 150 : start + 100;
        for (std::size_t t = from; t < to; ++t) CHECK(labels[t] == own[t - start]);
    }

    Period shorter = p;
    shorter.values = p.values.slice_rows(0, 30);
    shorter.labels.reset();
    CHECK(predict(encoder, trained.classifier, shorter, 100).size() == 30);
}

TEST_CASE("micro F1 examples") {
    CHECK(micro_f1({{0, 1, 2}}, {{0, 1, 2}}) == 1.0);
    CHECK(micro_f1({{1, 2, 0}}, {{0, 1, 2}}) == 0.0);
    CHECK(micro_f1({{0, 1}, {2, 0}}, {{0, 1}, {2, 2}}) == 0.75);
    CHECK_THROWS_AS(micro_f1({{0, 1}}, {{0}}), ShapeError);
    CHECK_THROWS_AS(micro_f1({{0}}, {{0}, {1}}), ShapeError);

    const auto confusion = confusion_matrix({{0, 1}, {2, 0}}, {{0, 1}, {2, 2}}, 3);
    CHECK(confusion == std::vector<std::vector<std::size_t>>{{1, 0, 0}, {0, 1, 0}, {1, 0, 1}});
}

TEST_CASE("property: micro F1 equals pooled accuracy") {
    Rng rng(5);
    for (int trial = 0; trial < 200; ++trial) {
        const int classes = 2 + static_cast<int>(uniform_index(rng, 6));
        std::vector<std::vector<int>> pred, truth;
        for (std::size_t p = 0, n = 1 + uniform_index(rng, 4); p < n; ++p) {
            const std::size_t T = 1 + uniform_index(rng, 50);
            std::vector<int> a(T), b(T);
            for (std::size_t t = 0; t < T; ++t) {
                a[t] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes)));
                b[t] = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(classes)));
            }
            pred.push_back(a);
            truth.push_back(b);
        }
        CHECK(micro_f1(pred, truth) == doctest::Approx(pooled_accuracy(pred, truth)).epsilon(1e-15));
    }
}

TEST_CASE("classifier checkpoint round trip") {
    testing::TempDir dir("clf");
    Rng rng(6);
    ClassifierConfig cfg;
    cfg.hidden = {8, 4};
    cfg.classes = 3;
    Classifier clf(6, cfg, 7);
    const Tensor x = random_tensor({2, 9, 6}, rng);
    clf.forward(x, Mode::train);
    save_checkpoint(classifier_checkpoint(clf, {{"encoder_hash", "e"}}), dir / "c.ckpt");
    const auto cp = load_checkpoint(dir / "c.ckpt");
    CHECK(cp.meta.at("encoder_hash") == "e");
    Classifier back = classifier_from_checkpoint(cp);
    CHECK(back.forward(x, Mode::eval) == clf.forward(x, Mode::eval));
}

TEST_CASE("split and label prefix arithmetic") {
    std::vector<Period> periods(10);
    std::vector<const Period*> pointers;
    for (std::size_t i = 0; i < periods.size(); ++i) {
        periods[i].worker_id = "w";
        periods[i].period_id = "p" + std::to_string(i);
        pointers.push_back(&periods[i]);
    }
    const auto split = split_worker_periods(pointers, 0.8);
    CHECK(split.train == std::vector<std::string>{"p0", "p1", "p2", "p3", "p4", "p5", "p6", "p7"});
    CHECK(split.test == std::vector<std::string>{"p8", "p9"});
    std::vector<const Period*> one{&periods[0]};
    CHECK_THROWS(split_worker_periods(one, 0.8));

    CHECK(labeled_prefix(16, 0.1) == 2);
    CHECK(labeled_prefix(10, 0.1) == 1);
    CHECK(labeled_prefix(8, 1.0) == 8);
    CHECK(labeled_prefix(8, 0.0) == 1);

    CHECK(population_stddev({1, 2, 3, 4, 5}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
    CHECK(mean_of({1, 2, 3, 4, 5}) == 3.0);
}

}  // TEST_SUITE
