#include <doctest.h>

#include <cstdlib>
#include <sys/wait.h>

#include <json.hpp>

#include "support.hpp"
#include "tiny_config.hpp"

#ifndef MOIL_CLI
#error "MOIL_CLI must name the CLI binary"
#endif

using nlohmann::json;
using testing::read_text;
using testing::TempDir;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

class Cli {
public:
    Cli() : dir_("cli") {
        testing::write_text(dir_ / "config.json", testing::tiny_overlay().dump());
    }

    Outcome run(const std::string& args) const {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string command = std::string("'") + MOIL_CLI + "' " + args + " >'" + out.string() + "' 2>'" +
                                    err.string() + "'";
        const int status = std::system(command.c_str());
        Outcome o;
        o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        o.out = read_text(out);
        o.err = read_text(err);
        return o;
    }

    /// Runs a stage with the tiny config and a given output subdirectory.
    Outcome stage(const std::string& command, const std::string& out, const std::string& rest = "") const {
        return run(command + " --config '" + (dir_ / "config.json").string() + "' --seed 3 --out '" + path(out) + "' " + rest);
    }

    std::string path(const std::string& relative) const { return (dir_ / relative).string(); }
    const TempDir& dir() const { return dir_; }

private:
    TempDir dir_;
};

json error_of(const Outcome& o) { return json::parse(o.err.substr(o.err.find('{'))); }

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("help lists every command") {
    Cli cli;
    const auto o = cli.run("--help");
    CHECK(o.code == 0);
    for (const char* name : {"gen-synth", "prep", "mine-motifs", "build-targets", "pretrain", "train", "evaluate", "experiment"}) {
        CHECK(o.out.find(name) != std::string::npos);
    }
    const auto sub = cli.run("pretrain --help");
    for (const char* flag : {"--seed", "--config", "--out", "--data", "--motifs", "--targets"}) {
        CHECK(sub.out.find(flag) != std::string::npos);
    }
}

TEST_CASE("staged pipeline with manifests and integrity checks") {
    Cli cli;
    REQUIRE(cli.stage("gen-synth", "synth").code == 0);
    const auto data = cli.path("synth/data.csv");
    const auto manifest = json::parse(read_text(cli.path("synth/manifest.json")));
    CHECK(manifest.at("seed") == 3);
    CHECK(manifest.at("command") == "gen-synth");
    CHECK(manifest.at("config_hash").get<std::string>().size() == 16);
    CHECK(manifest.at("outputs").contains("data.csv"));

    REQUIRE(cli.stage("gen-synth", "synth_again").code == 0);
    CHECK(read_text(data) == read_text(cli.path("synth_again/data.csv")));
    CHECK(read_text(cli.path("synth/manifest.json")) == read_text(cli.path("synth_again/manifest.json")));

    REQUIRE(cli.stage("prep", "prep1", "--data '" + data + "'").code == 0);
    REQUIRE(cli.stage("prep", "prep2", "--data '" + cli.path("prep1/normalized.csv") + "'").code == 0);
    CHECK(read_text(cli.path("prep1/symbols.csv")) == read_text(cli.path("prep2/symbols.csv")));
    CHECK(read_text(cli.path("prep1/normalized.csv")) == read_text(cli.path("prep2/normalized.csv")));

    REQUIRE(cli.stage("mine-motifs", "motifs", "--data '" + data + "'").code == 0);
    const auto motifs = cli.path("motifs/motifs.json");
    REQUIRE(cli.stage("build-targets", "targets", "--data '" + data + "' --motifs '" + motifs + "'").code == 0);
    const auto targets = cli.path("targets/targets.csv");
    CHECK(read_text(targets).rfind("period_id,t,s_0,s_1,s_2,s_3\n", 0) == 0);

    const std::string pretrain_args = "--data '" + data + "' --motifs '" + motifs + "' --targets '" + targets + "'";
    REQUIRE(cli.stage("pretrain", "pretrain", pretrain_args).code == 0);
    REQUIRE(cli.stage("pretrain", "pretrain_again", pretrain_args).code == 0);
    for (const char* file : {"encoder.ckpt", "model.ckpt", "loss_curve.csv", "manifest.json"}) {
        CAPTURE(file);
        CHECK(read_text(cli.path(std::string("pretrain/") + file)) == read_text(cli.path(std::string("pretrain_again/") + file)));
    }
    CHECK(read_text(cli.path("pretrain/loss_curve.csv")).rfind("epoch,mean_loss\n", 0) == 0);
    const auto encoder = cli.path("pretrain/encoder.ckpt");

    REQUIRE(cli.stage("train", "train", "--data '" + data + "' --encoder '" + encoder + "' --motifs '" + motifs + "'").code == 0);
    const auto classifier = cli.path("train/classifier.ckpt");
    const auto eval = cli.stage("evaluate", "eval",
                                "--data '" + data + "' --encoder '" + encoder + "' --classifier '" + classifier +
                                    "' --motifs '" + motifs + "'");
    REQUIRE(eval.code == 0);
    CHECK(read_text(cli.path("eval/predictions.csv")).rfind("period_id,t,true,pred\n", 0) == 0);
    const auto report = json::parse(read_text(cli.path("eval/report.json")));
    CHECK(report.at("micro_f1").get<double>() >= 0.0);
    CHECK(report.at("micro_f1").get<double>() <= 1.0);

    // A motif set from another seed must be refused by train.
    REQUIRE(cli.run("mine-motifs --config '" + cli.path("config.json") + "' --seed 4 --out '" + cli.path("motifs4") +
                    "' --data '" + data + "'").code == 0);
    const auto refused = cli.stage("train", "train_bad",
                                   "--data '" + data + "' --encoder '" + encoder + "' --motifs '" + cli.path("motifs4/motifs.json") + "'");
    CHECK(refused.code == 1);
    CHECK(error_of(refused).at("error") == "integrity_error");
    CHECK_FALSE(std::filesystem::exists(cli.path("train_bad/classifier.ckpt")));

    // Targets edited after their manifest was written are refused.
    std::filesystem::create_directories(cli.path("tampered"));
    std::filesystem::copy_file(cli.path("targets/manifest.json"), cli.path("tampered/manifest.json"));
    testing::write_text(cli.path("tampered/targets.csv"), read_text(targets) + "\n");
    const auto tampered = cli.stage("pretrain", "pretrain_bad",
                                    "--data '" + data + "' --motifs '" + motifs + "' --targets '" + cli.path("tampered/targets.csv") + "'");
    CHECK(tampered.code == 1);
    CHECK(error_of(tampered).at("error") == "integrity_error");
}

TEST_CASE("errors are machine readable") {
    Cli cli;
    const auto missing = cli.stage("prep", "x", "--data '" + cli.path("absent.csv") + "'");
    CHECK(missing.code != 0);
    CHECK(error_of(missing).at("error") == "load_error");

    testing::write_text(cli.path("bad.json"), R"({"experiment": {"motif": 3}})");
    const auto bad = cli.run("gen-synth --config '" + cli.path("bad.json") + "' --out '" + cli.path("o") + "'");
    CHECK(bad.code == 1);
    CHECK(error_of(bad).at("error") == "config_error");
    CHECK(error_of(bad).at("message").get<std::string>().find("experiment.motif") != std::string::npos);

    CHECK(cli.run("gen-synth --bogus").code == 2);
    CHECK(cli.run("").code != 0);
}

TEST_CASE("experiment command reports both arms and is reproducible") {
    Cli cli;
    const std::string args = "--protocol worker-dependent --labels 0.25 --seeds 2";
    REQUIRE(cli.stage("experiment", "exp1", args).code == 0);
    REQUIRE(cli.stage("experiment", "exp2", args).code == 0);
    const auto text = read_text(cli.path("exp1/report.json"));
    CHECK(text == read_text(cli.path("exp2/report.json")));
    const auto report = json::parse(text);
    CHECK(report.at("protocol") == "worker-dependent");
    CHECK(report.at("label_fraction") == 0.25);
    CHECK(report.at("seeds") == json::array({3, 4}));
    CHECK(report.at("arms").size() == 2);
    CHECK(report.at("arms")[0].at("f1").size() == 2);
    CHECK(report.at("encoder_frozen") == true);
    CHECK(report.at("leakage") == 0);
    CHECK(report.at("config_hash").get<std::string>().size() == 16);

    REQUIRE(cli.stage("experiment", "exp3", "--protocol worker-independent --seeds 1").code == 0);
    const auto independent = json::parse(read_text(cli.path("exp3/report.json")));
    CHECK(independent.at("folds").size() == 3 * 2);
}

}  // TEST_SUITE
