#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moil/moil_net.hpp"

namespace moil {

struct ClassifierConfig {
    std::vector<std::size_t> hidden{256, 128};
    std::size_t classes = 2;
    double lr = 1e-3;
    std::size_t epochs = 50;
    std::size_t batch_size = 1000;
    double weight_decay = 1e-4;

    void validate() const;
    nlohmann::json to_json() const;
    static ClassifierConfig from_json(const nlohmann::json& j);
};

/// Per-time-step MLP: linear layers with batch norm and ReLU between them.
class Classifier {
public:
    Classifier() = default;
    Classifier(std::size_t in_features, const ClassifierConfig& config, std::uint64_t seed);

    Tensor forward(const Tensor& features, Mode mode);  // [B x l x C] logits
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params();
    std::vector<StateEntry> state();
    std::size_t parameter_count();

    std::size_t in_features() const noexcept { return in_; }
    const ClassifierConfig& config() const noexcept { return config_; }

private:
    ClassifierConfig config_;
    std::size_t in_ = 0;
    std::vector<Linear> linears_;
    std::vector<BatchNorm1d> norms_;
    std::vector<Activation> acts_;
};

/// Labelled sensor windows for downstream training.
struct LabeledWindows {
    Tensor inputs;            // [N x l x A]
    std::vector<int> labels;  // N * l, batch-major
    std::vector<std::pair<std::string, std::size_t>> origin;

    std::size_t count() const noexcept { return origin.size(); }
};

LabeledWindows make_labeled_windows(const std::vector<const Period*>& periods, std::size_t window,
                                    std::size_t step);

/// Eval-mode encoder output for every window, computed in chunks.
Tensor encode_windows(const Encoder& encoder, const Tensor& inputs, std::size_t chunk = 32);

using ClassifierEpochHook = std::function<void(std::size_t epoch, double mean_loss, Classifier&)>;

struct ClassifierTrainResult {
    Classifier classifier;
    std::vector<double> loss_curve;
    std::string encoder_hash_before;
    std::string encoder_hash_after;
};

/// Trains only the classifier on top of the frozen (eval-mode) encoder.
ClassifierTrainResult train_classifier(const Encoder& encoder, const LabeledWindows& windows,
                                       const ClassifierConfig& config, std::uint64_t seed,
                                       const ClassifierEpochHook& hook = {});

/// Per-step argmax with ties resolved to the lowest class id.
std::vector<int> argmax_labels(const Tensor& logits);

/// Non-overlapping windows of length l, plus a right-aligned final window for
/// any remainder; later windows overwrite the overlap. Periods shorter than l
/// are edge-padded to one window (with a warning).
std::vector<int> predict(const Encoder& encoder, Classifier& classifier, const Period& normalized,
                         std::size_t window);

/// Window starts used by predict() for a period of length T.
std::vector<std::size_t> prediction_starts(std::size_t length, std::size_t window);

/// Micro-averaged F1 over all pooled time steps (pooled accuracy for
/// single-label multiclass data).
double micro_f1(const std::vector<std::vector<int>>& predictions,
                const std::vector<std::vector<int>>& truths);

/// counts[true][pred]
std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<std::vector<int>>& predictions,
                                                       const std::vector<std::vector<int>>& truths,
                                                       std::size_t classes);

Checkpoint classifier_checkpoint(Classifier& classifier, const nlohmann::json& extra = {});
Classifier classifier_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace moil
