#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "moil/adam.hpp"
#include "moil/checkpoint.hpp"
#include "moil/data_model.hpp"
#include "moil/layers.hpp"
#include "moil/motif_engine.hpp"

namespace moil {

struct EncoderConfig {
    std::size_t conv_blocks = 4;
    std::size_t conv_channels = 64;
    std::size_t kernel = 5;
    std::size_t stride = 1;
    std::size_t rnn_blocks = 2;
    std::size_t lstm_units = 128;
    ActivationKind activation = ActivationKind::relu;

    /// 4 x conv(64, k=5) + 2 x BiLSTM(128).
    static EncoderConfig paper() { return {}; }
    /// Same topology with 16 conv channels and 32 LSTM units.
    static EncoderConfig desk();

    void validate() const;
    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json& j);
};

/// Conv-BN-activation blocks feeding bidirectional LSTM blocks.
/// [B x l x A] -> [B x l x 2H].
class Encoder {
public:
    Encoder() = default;
    Encoder(const EncoderConfig& config, std::size_t input_axes, std::uint64_t seed);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params();
    /// Parameters, Adam moments and batch-norm running statistics.
    std::vector<StateEntry> state();

    /// Fills batch-norm running statistics from train-mode passes without
    /// touching any weight. Used for encoders that were never trained.
    void calibrate_batchnorm(const Tensor& x, std::size_t chunk = 32);

    /// Hash of weights and running statistics (not optimizer moments).
    std::string parameter_hash() const;

    std::size_t out_dim() const noexcept { return 2 * config_.lstm_units; }
    std::size_t input_axes() const noexcept { return input_axes_; }
    const EncoderConfig& config() const noexcept { return config_; }

private:
    EncoderConfig config_;
    std::size_t input_axes_ = 0;
    std::vector<Conv1d> convs_;
    std::vector<BatchNorm1d> norms_;
    std::vector<Activation> acts_;
    std::vector<BiLstm> rnns_;
};

/// conv (encoder conv settings) -> ReLU -> linear to n -> ReLU.
class Projector {
public:
    Projector() = default;
    Projector(std::size_t encoder_out_dim, std::size_t conv_channels, std::size_t kernel,
              std::size_t n, std::uint64_t seed);

    Tensor forward(const Tensor& x, Mode mode);
    Tensor backward(const Tensor& grad_out);
    std::vector<Param*> params();
    std::vector<StateEntry> state();

    std::size_t outputs() const noexcept { return linear_.out_features(); }
    Linear& linear() noexcept { return linear_; }

private:
    Conv1d conv_;
    Activation conv_act_{ActivationKind::relu};
    Linear linear_;
    Activation out_act_{ActivationKind::relu};
};

/// Encoder plus projector: sensor window -> estimated similarity window.
class MoilModel {
public:
    MoilModel() = default;
    MoilModel(const EncoderConfig& config, std::size_t input_axes, std::size_t n, std::uint64_t seed);

    Tensor forward(const Tensor& x, Mode mode);
    void backward(const Tensor& grad_out);
    std::vector<Param*> params();

    Encoder encoder;
    Projector projector;
};

struct PretrainRun {
    std::uint64_t seed = 0;
    double lr = 1e-4;
    std::size_t epochs = 1000;
    std::size_t batch_size = 1000;
    double weight_decay = 1e-4;
    std::size_t window = 900;
    std::size_t step = 450;

    void validate() const;
    nlohmann::json to_json() const;
    static PretrainRun from_json(const nlohmann::json& j);
};

/// Sensor windows and their aligned similarity windows.
struct SslWindows {
    Tensor inputs;   // [N x l x A]
    Tensor targets;  // [N x l x n]
    std::vector<std::pair<std::string, std::size_t>> origin;  // (period id, start)

    std::size_t count() const noexcept { return origin.size(); }
};

/// Cuts every period and its target with identical (l, step) windows.
SslWindows make_ssl_windows(const std::vector<const Period*>& periods,
                            const std::vector<SimilarityTarget>& targets, std::size_t window,
                            std::size_t step);

/// Rows [first, first + count) of a batch-major tensor, gathered by index.
Tensor gather_rows(const Tensor& batch_major, const std::vector<std::size_t>& indices,
                   std::size_t first, std::size_t count);

struct PretrainResult {
    std::vector<double> loss_curve;  // mean training loss per epoch
    std::size_t best_epoch = 0;      // 1-based
    double best_loss = 0.0;
    Encoder best_encoder;
    std::uint64_t adam_steps = 0;
};

using PretrainProgress = std::function<void(std::size_t epoch, double mean_loss)>;

/// Minimizes the similarity-reconstruction MSE with Adam. The model ends in
/// its last-epoch state; the best-loss encoder is returned alongside.
PretrainResult pretrain(MoilModel& model, const SslWindows& windows, const PretrainRun& run,
                        const PretrainProgress& progress = {});

/// Encoder checkpoint with topology, run metadata and the motif-set hash.
Checkpoint encoder_checkpoint(Encoder& encoder, const nlohmann::json& extra = {});
Encoder encoder_from_checkpoint(const Checkpoint& checkpoint);

/// Whole pretraining model (encoder + projector).
Checkpoint model_checkpoint(MoilModel& model, const nlohmann::json& extra = {});
MoilModel model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace moil
