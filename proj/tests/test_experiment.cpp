#include <doctest.h>

#include <set>

#include "moil/config.hpp"
#include "moil/experiment.hpp"
#include "support.hpp"
#include "tiny_config.hpp"

using namespace moil;

namespace {

Dataset tiny_dataset(const RunConfig& config) { return gen_dataset(config.synth).dataset; }

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("worker-dependent protocol") {
    const auto config = testing::tiny_config();
    const auto data = tiny_dataset(config);
    const auto report = run_worker_dependent(data, config.experiment);
    CHECK(report.protocol == "worker-dependent");
    REQUIRE(report.splits.size() == 3);
    for (const auto& split : report.splits) {
        const auto ids = data.periods_of(split.worker_id);
        REQUIRE(ids.size() == 5);
        CHECK(split.train == std::vector<std::string>{data.periods[ids[0]].period_id, data.periods[ids[1]].period_id,
                                                      data.periods[ids[2]].period_id, data.periods[ids[3]].period_id});
        CHECK(split.test == std::vector<std::string>{data.periods[ids[4]].period_id});
        CHECK(split.labeled == std::vector<std::string>{split.train[0]});
    }
    REQUIRE(report.arms.size() == 2);
    CHECK(report.arm("moil").f1.size() == 2);
    CHECK(report.arm("random").f1.size() == 2);
    for (const auto& arm : report.arms) {
        for (double f : arm.f1) CHECK((f >= 0.0 && f <= 1.0));
        CHECK(arm.mean == doctest::Approx(mean_of(arm.f1)).epsilon(1e-15));
        CHECK(arm.stddev == doctest::Approx(population_stddev(arm.f1)).epsilon(1e-15));
        CHECK(arm.confusion.size() == config.experiment.classifier.classes);
    }
    CHECK(report.leakage == 0);
    CHECK(report.frozen());
    CHECK(report.freeze_checks.size() == 2 * 3 * 2);
    CHECK_THROWS(report.arm("other"));

    const auto again = run_worker_dependent(data, config.experiment);
    CHECK(again.to_json().dump() == report.to_json().dump());
}

TEST_CASE("worker-independent protocol") {
    const auto config = testing::tiny_config();
    const auto data = tiny_dataset(config);
    const auto report = run_worker_independent(data, config.experiment);
    CHECK(report.protocol == "worker-independent");
    std::set<std::string> held_out;
    std::size_t moil_folds = 0;
    for (const auto& fold : report.folds) {
        CHECK(fold.epochs == std::vector<std::size_t>{1, 2, 4});
        CHECK(fold.f1.size() == 3);
        CHECK(fold.leakage == 0);
        for (const auto& id : fold.train_periods) CHECK(data.find(id)->worker_id != fold.held_out);
        held_out.insert(fold.held_out);
        moil_folds += fold.arm == "moil" ? 1 : 0;
    }
    CHECK(held_out.size() == 3);
    CHECK(moil_folds == 3 * 2);
    CHECK(report.folds.size() == 2 * 3 * 2);
    CHECK(report.leakage == 0);
    CHECK(report.frozen());

    Dataset single = data.subset(data.periods_of("w0"));
    CHECK_THROWS(run_worker_independent(single, config.experiment));
}

TEST_CASE("default eval epochs") {
    const ExperimentConfig config;
    CHECK(config.eval_epochs == std::vector<std::size_t>{1, 10, 20, 30, 40, 50});
    CHECK(config.seeds.size() == 5);
    CHECK(config.motifs == 13);
    ExperimentConfig bad;
    bad.eval_epochs = {60};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("run configs") {
    const auto desk = RunConfig::from_preset("desk");
    CHECK(desk.experiment.encoder.conv_channels == 16);
    CHECK(desk.experiment.encoder.lstm_units == 32);
    CHECK(desk.experiment.pretrain.window == 300);
    const auto paper = RunConfig::from_preset("paper");
    CHECK(paper.experiment.encoder.conv_channels == 64);
    CHECK(paper.experiment.encoder.lstm_units == 128);
    CHECK(paper.experiment.pretrain.lr == 1e-4);
    CHECK(paper.experiment.pretrain.epochs == 1000);
    CHECK(paper.experiment.pretrain.batch_size == 1000);
    CHECK(paper.experiment.pretrain.window == 900);
    CHECK(paper.experiment.pretrain.step == 450);
    CHECK(paper.experiment.pretrain.weight_decay == 1e-4);
    CHECK(paper.experiment.classifier.hidden == std::vector<std::size_t>{256, 128});
    CHECK(paper.experiment.classifier.lr == 1e-3);
    CHECK(paper.experiment.classifier.epochs == 50);
    CHECK_THROWS_AS(RunConfig::from_preset("huge"), ConfigError);

    CHECK(testing::tiny_config().hash() == testing::tiny_config().hash());
    CHECK(testing::tiny_config().hash() != desk.hash());

    CHECK_THROWS_WITH_AS(make_run_config("desk", {{"experiment", {{"encodr", {}}}}}),
                         doctest::Contains("experiment.encodr"), ConfigError);
    CHECK_THROWS_AS(make_run_config("desk", {{"seed", "zero"}}), ConfigError);
    CHECK_THROWS_AS(make_run_config("desk", {{"experiment", {{"motifs", 2.5}}}}), ConfigError);
    CHECK_THROWS_AS(make_run_config("desk", {{"experiment", {{"motifs", -1}}}}), ConfigError);

    testing::TempDir dir("config");
    testing::write_text(dir / "c.json", R"({"preset": "paper", "seed": 7})");
    const auto loaded = load_run_config(dir / "c.json");
    CHECK(loaded.preset == "paper");
    CHECK(loaded.seed == 7);
    CHECK(load_run_config(dir / "c.json", std::string("desk")).preset == "desk");
    testing::write_text(dir / "bad.json", "{");
    CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
}

}  // TEST_SUITE
