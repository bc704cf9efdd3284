#include "moil/moil_net.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

#include "moil/loss.hpp"

namespace moil {

using nlohmann::json;

namespace {

constexpr std::uint64_t kProjectorSalt = 0x70726f6a6563746fULL;
constexpr std::uint64_t kShuffleSalt = 0x73687566666c6531ULL;

}  // namespace

// ---------------------------------------------------------------- config

EncoderConfig EncoderConfig::desk() {
    EncoderConfig c;
    c.conv_channels = 16;
    c.lstm_units = 32;
    return c;
}

void EncoderConfig::validate() const {
    if (conv_blocks < 1 || conv_channels < 1 || kernel < 1 || rnn_blocks < 1 || lstm_units < 1) {
        throw ConfigError("encoder: all sizes must be positive");
    }
    if (kernel % 2 == 0) throw ConfigError("encoder: kernel size must be odd for same padding");
    if (stride != 1) throw ConfigError("encoder: only stride 1 keeps the time axis aligned with targets");
}

json EncoderConfig::to_json() const {
    return {{"conv_blocks", conv_blocks}, {"conv_channels", conv_channels}, {"kernel", kernel},
            {"stride", stride},           {"rnn_blocks", rnn_blocks},       {"lstm_units", lstm_units},
            {"activation", moil::to_string(activation)}};
}

EncoderConfig EncoderConfig::from_json(const json& j) {
    EncoderConfig c;
    c.conv_blocks = j.at("conv_blocks").get<std::size_t>();
    c.conv_channels = j.at("conv_channels").get<std::size_t>();
    c.kernel = j.at("kernel").get<std::size_t>();
    c.stride = j.at("stride").get<std::size_t>();
    c.rnn_blocks = j.at("rnn_blocks").get<std::size_t>();
    c.lstm_units = j.at("lstm_units").get<std::size_t>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    return c;
}

void PretrainRun::validate() const {
    if (!(lr > 0.0)) throw ConfigError("pretrain: lr must be positive");
    if (epochs < 1) throw ConfigError("pretrain: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("pretrain: batch_size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("pretrain: weight_decay must be >= 0");
    if (window < 1 || step < 1) throw ConfigError("pretrain: window and step must be >= 1");
}

json PretrainRun::to_json() const {
    return {{"seed", seed},     {"lr", lr},         {"epochs", epochs}, {"batch_size", batch_size},
            {"weight_decay", weight_decay}, {"window", window}, {"step", step}};
}

PretrainRun PretrainRun::from_json(const json& j) {
    PretrainRun r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.lr = j.at("lr").get<double>();
    r.epochs = j.at("epochs").get<std::size_t>();
    r.batch_size = j.at("batch_size").get<std::size_t>();
    r.weight_decay = j.at("weight_decay").get<double>();
    r.window = j.at("window").get<std::size_t>();
    r.step = j.at("step").get<std::size_t>();
    return r;
}

// ---------------------------------------------------------------- encoder

Encoder::Encoder(const EncoderConfig& config, std::size_t input_axes, std::uint64_t seed)
    : config_(config), input_axes_(input_axes) {
    config.validate();
    if (input_axes < 1) throw ConfigError("encoder: input must have at least one axis");
    Rng rng(seed);
    std::size_t channels = input_axes;
    for (std::size_t i = 0; i < config.conv_blocks; ++i) {
        const std::string name = "encoder.block" + std::to_string(i);
        convs_.emplace_back(channels, config.conv_channels, config.kernel, rng, name + ".conv");
        norms_.emplace_back(config.conv_channels, name + ".bn");
        acts_.emplace_back(config.activation);
        channels = config.conv_channels;
    }
    for (std::size_t i = 0; i < config.rnn_blocks; ++i) {
        rnns_.emplace_back(channels, config.lstm_units, rng, "encoder.rnn" + std::to_string(i));
        channels = 2 * config.lstm_units;
    }
}

Tensor Encoder::forward(const Tensor& x, Mode mode) {
    if (x.rank() != 3 || x.dim(2) != input_axes_) {
        throw ShapeError("encoder: expected [B x l x " + std::to_string(input_axes_) + "], got " +
                         x.shape_string());
    }
    Tensor h = x;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        h = convs_[i].forward(h, mode);
        h = norms_[i].forward(h, mode);
        h = acts_[i].forward(h, mode);
    }
    for (auto& rnn : rnns_) h = rnn.forward(h, mode);
    return h;
}

Tensor Encoder::backward(const Tensor& grad_out) {
    Tensor g = grad_out;
    for (std::size_t i = rnns_.size(); i-- > 0;) g = rnns_[i].backward(g);
    for (std::size_t i = convs_.size(); i-- > 0;) {
        g = acts_[i].backward(g);
        g = norms_[i].backward(g);
        g = convs_[i].backward(g);
    }
    return g;
}

std::vector<Param*> Encoder::params() {
    std::vector<Param*> out;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        for (Param* p : convs_[i].params()) out.push_back(p);
        for (Param* p : norms_[i].params()) out.push_back(p);
    }
    for (auto& rnn : rnns_) {
        for (Param* p : rnn.params()) out.push_back(p);
    }
    return out;
}

std::vector<StateEntry> Encoder::state() {
    std::vector<StateEntry> out;
    for (Param* p : params()) append_param_state(out, *p);
    for (auto& bn : norms_) {
        for (const auto& e : bn.buffers()) out.push_back(e);
    }
    return out;
}

void Encoder::calibrate_batchnorm(const Tensor& x, std::size_t chunk) {
    if (x.rank() != 3 || x.dim(0) == 0) throw ShapeError("calibrate_batchnorm: empty input");
    std::vector<std::size_t> order(x.dim(0));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t first = 0; first < order.size(); first += chunk) {
        const std::size_t count = std::min(chunk, order.size() - first);
        forward(gather_rows(x, order, first, count), Mode::train);
    }
}

std::string Encoder::parameter_hash() const {
    std::vector<const Tensor*> tensors;
    auto& self = const_cast<Encoder&>(*this);
    for (Param* p : self.params()) tensors.push_back(&p->value);
    for (const auto& bn : norms_) {
        tensors.push_back(&bn.running_mean);
        tensors.push_back(&bn.running_var);
    }
    return hex64(hash_tensors(tensors));
}

// ---------------------------------------------------------------- projector

Projector::Projector(std::size_t encoder_out_dim, std::size_t conv_channels, std::size_t kernel,
                     std::size_t n, std::uint64_t seed) {
    if (n < 1) throw ConfigError("projector: n must be >= 1");
    Rng rng(seed ^ kProjectorSalt);
    conv_ = Conv1d(encoder_out_dim, conv_channels, kernel, rng, "projector.conv");
    linear_ = Linear(conv_channels, n, rng, "projector.linear");
    linear_.bias.value.fill(0.5);
}

Tensor Projector::forward(const Tensor& x, Mode mode) {
    Tensor h = conv_act_.forward(conv_.forward(x, mode), mode);
    return out_act_.forward(linear_.forward(h, mode), mode);
}

Tensor Projector::backward(const Tensor& grad_out) {
    Tensor g = linear_.backward(out_act_.backward(grad_out));
    return conv_.backward(conv_act_.backward(g));
}

std::vector<Param*> Projector::params() {
    auto out = conv_.params();
    for (Param* p : linear_.params()) out.push_back(p);
    return out;
}

std::vector<StateEntry> Projector::state() {
    std::vector<StateEntry> out;
    for (Param* p : params()) append_param_state(out, *p);
    return out;
}

MoilModel::MoilModel(const EncoderConfig& config, std::size_t input_axes, std::size_t n, std::uint64_t seed)
    : encoder(config, input_axes, seed),
      projector(encoder.out_dim(), config.conv_channels, config.kernel, n, seed) {}

Tensor MoilModel::forward(const Tensor& x, Mode mode) {
    return projector.forward(encoder.forward(x, mode), mode);
}

void MoilModel::backward(const Tensor& grad_out) { encoder.backward(projector.backward(grad_out)); }

std::vector<Param*> MoilModel::params() {
    auto out = encoder.params();
    for (Param* p : projector.params()) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------- windows

SslWindows make_ssl_windows(const std::vector<const Period*>& periods,
                            const std::vector<SimilarityTarget>& targets, std::size_t window,
                            std::size_t step) {
    if (periods.empty()) throw ValueError("make_ssl_windows: no periods");
    std::unordered_map<std::string, const SimilarityTarget*> by_id;
    for (const auto& t : targets) by_id[t.period_id] = &t;

    const std::size_t A = periods.front()->axes();
    std::size_t n = 0;
    std::vector<std::pair<const Period*, const SimilarityTarget*>> pairs;
    std::size_t total = 0;
    for (const Period* p : periods) {
        auto it = by_id.find(p->period_id);
        if (it == by_id.end()) throw ValueError("no similarity target for period '" + p->period_id + "'");
        const auto& target = *it->second;
        if (target.values.rows() != p->length()) {
            throw ShapeError("target for '" + p->period_id + "' has " + std::to_string(target.values.rows()) +
                             " rows, period has " + std::to_string(p->length()));
        }
        if (n == 0) n = target.values.cols();
        if (target.values.cols() != n) throw ShapeError("targets disagree on channel count");
        if (p->axes() != A) throw ShapeError("periods disagree on axis count");
        pairs.emplace_back(p, &target);
        total += window_segments(p->length(), window, step).size();
    }

    SslWindows out;
    out.inputs = Tensor({total, window, A});
    out.targets = Tensor({total, window, n});
    std::size_t k = 0;
    for (const auto& [p, target] : pairs) {
        for (const auto& span : window_segments(p->length(), window, step)) {
            std::copy_n(p->values.data().data() + span.start * A, window * A,
                        out.inputs.data.data() + k * window * A);
            std::copy_n(target->values.data().data() + span.start * n, window * n,
                        out.targets.data.data() + k * window * n);
            out.origin.emplace_back(p->period_id, span.start);
            ++k;
        }
    }
    return out;
}

Tensor gather_rows(const Tensor& batch_major, const std::vector<std::size_t>& indices,
                   std::size_t first, std::size_t count) {
    auto shape = batch_major.shape;
    const std::size_t stride = batch_major.size() / shape[0];
    shape[0] = count;
    Tensor out(shape);
    for (std::size_t i = 0; i < count; ++i) {
        std::copy_n(batch_major.data.data() + indices[first + i] * stride, stride,
                    out.data.data() + i * stride);
    }
    return out;
}

// ---------------------------------------------------------------- pretraining

PretrainResult pretrain(MoilModel& model, const SslWindows& windows, const PretrainRun& run,
                        const PretrainProgress& progress) {
    run.validate();
    const std::size_t N = windows.count();
    if (N == 0) throw ValueError("pretrain: no training windows (periods shorter than the window?)");
    if (windows.inputs.dim(1) != run.window) throw ShapeError("pretrain: windows were cut with another length");
    if (windows.targets.dim(2) != model.projector.outputs()) {
        throw ShapeError("pretrain: target channels differ from projector outputs");
    }
    const std::size_t batch = std::min(run.batch_size, N);

    Adam adam(AdamConfig{run.lr, 0.9, 0.999, 1e-8, run.weight_decay});
    const auto params = model.params();
    Rng rng(run.seed ^ kShuffleSalt);
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;

    PretrainResult result;
    for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
        shuffle(order, rng);
        double total = 0.0;
        for (std::size_t first = 0; first < N; first += batch) {
            const std::size_t count = std::min(batch, N - first);
            const Tensor x = gather_rows(windows.inputs, order, first, count);
            const Tensor y = gather_rows(windows.targets, order, first, count);
            Adam::zero_grad(params);
            const Tensor pred = model.forward(x, Mode::train);
            const LossResult loss = mse_loss(pred, y);
            if (!std::isfinite(loss.value) || !pred.all_finite() || !x.all_finite() || !y.all_finite()) {
                std::ostringstream msg;
                msg << "non-finite SSL loss at epoch " << epoch << ", batch starting at " << first
                    << " (lr " << run.lr << ", batch size " << count
                    << ", input finite: " << (x.all_finite() ? "yes" : "no")
                    << ", target finite: " << (y.all_finite() ? "yes" : "no") << ")";
                throw TrainingError(msg.str());
            }
            model.backward(loss.grad);
            adam.step(params);
            total += loss.value * static_cast<double>(count);
        }
        const double mean = total / static_cast<double>(N);
        result.loss_curve.push_back(mean);
        if (epoch == 1 || mean < result.best_loss) {
            result.best_loss = mean;
            result.best_epoch = epoch;
            result.best_encoder = model.encoder;
        }
        if (progress) progress(epoch, mean);
    }
    result.adam_steps = adam.steps();
    return result;
}

// ---------------------------------------------------------------- checkpoints

Checkpoint encoder_checkpoint(Encoder& encoder, const json& extra) {
    Checkpoint cp;
    cp.meta = extra.is_object() ? extra : json::object();
    cp.meta["kind"] = "encoder";
    cp.meta["encoder"] = encoder.config().to_json();
    cp.meta["input_axes"] = encoder.input_axes();
    cp.meta["parameter_hash"] = encoder.parameter_hash();
    cp.store(encoder.state());
    return cp;
}

Encoder encoder_from_checkpoint(const Checkpoint& checkpoint) {
    try {
        Encoder encoder(EncoderConfig::from_json(checkpoint.meta.at("encoder")),
                        checkpoint.meta.at("input_axes").get<std::size_t>(), 0);
        checkpoint.restore(encoder.state());
        if (checkpoint.meta.contains("parameter_hash") &&
            checkpoint.meta["parameter_hash"].get<std::string>() != encoder.parameter_hash()) {
            throw IntegrityError("encoder checkpoint content does not match its parameter hash");
        }
        return encoder;
    } catch (const json::exception& e) {
        throw LoadError(std::string("encoder checkpoint metadata is incomplete: ") + e.what());
    }
}

Checkpoint model_checkpoint(MoilModel& model, const json& extra) {
    Checkpoint cp = encoder_checkpoint(model.encoder, extra);
    cp.meta["kind"] = "moil_model";
    cp.meta["n"] = model.projector.outputs();
    cp.store(model.projector.state());
    return cp;
}

MoilModel model_from_checkpoint(const Checkpoint& checkpoint) {
    try {
        MoilModel model(EncoderConfig::from_json(checkpoint.meta.at("encoder")),
                        checkpoint.meta.at("input_axes").get<std::size_t>(),
                        checkpoint.meta.at("n").get<std::size_t>(), 0);
        checkpoint.restore(model.encoder.state());
        checkpoint.restore(model.projector.state());
        return model;
    } catch (const json::exception& e) {
        throw LoadError(std::string("model checkpoint metadata is incomplete: ") + e.what());
    }
}

}  // namespace moil
