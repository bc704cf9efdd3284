#include "moil/downstream.hpp"

#include <cmath>
#include <sstream>

#include "moil/loss.hpp"

namespace moil {

using nlohmann::json;

namespace {
constexpr std::uint64_t kClassifierShuffleSalt = 0x636c617373696679ULL;
}

void ClassifierConfig::validate() const {
    if (classes < 2) throw ConfigError("classifier: at least two classes are required");
    for (std::size_t h : hidden) {
        if (h < 1) throw ConfigError("classifier: hidden sizes must be positive");
    }
    if (!(lr > 0.0)) throw ConfigError("classifier: lr must be positive");
    if (epochs < 1 || batch_size < 1) throw ConfigError("classifier: epochs and batch_size must be >= 1");
    if (weight_decay < 0.0) throw ConfigError("classifier: weight_decay must be >= 0");
}

json ClassifierConfig::to_json() const {
    return {{"hidden", hidden}, {"classes", classes},       {"lr", lr},
            {"epochs", epochs}, {"batch_size", batch_size}, {"weight_decay", weight_decay}};
}

ClassifierConfig ClassifierConfig::from_json(const json& j) {
    ClassifierConfig c;
    c.hidden = j.at("hidden").get<std::vector<std::size_t>>();
    c.classes = j.at("classes").get<std::size_t>();
    c.lr = j.at("lr").get<double>();
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.weight_decay = j.at("weight_decay").get<double>();
    return c;
}

Classifier::Classifier(std::size_t in_features, const ClassifierConfig& config, std::uint64_t seed)
    : config_(config), in_(in_features) {
    config.validate();
    if (in_features < 1) throw ConfigError("classifier: input dimension must be positive");
    Rng rng(seed);
    std::size_t width = in_features;
    for (std::size_t i = 0; i < config.hidden.size(); ++i) {
        const std::string name = "classifier.hidden" + std::to_string(i);
        linears_.emplace_back(width, config.hidden[i], rng, name + ".linear");
        norms_.emplace_back(config.hidden[i], name + ".bn");
        acts_.emplace_back(ActivationKind::relu);
        width = config.hidden[i];
    }
    linears_.emplace_back(width, config.classes, rng, "classifier.out");
}

Tensor Classifier::forward(const Tensor& features, Mode mode) {
    if (features.rank() != 3 || features.dim(2) != in_) {
        throw ShapeError("classifier: expected [B x l x " + std::to_string(in_) + "], got " +
                         features.shape_string());
    }
    Tensor h = features;
    for (std::size_t i = 0; i < norms_.size(); ++i) {
        h = linears_[i].forward(h, mode);
        h = norms_[i].forward(h, mode);
        h = acts_[i].forward(h, mode);
    }
    return linears_.back().forward(h, mode);
}

Tensor Classifier::backward(const Tensor& grad_out) {
    Tensor g = linears_.back().backward(grad_out);
    for (std::size_t i = norms_.size(); i-- > 0;) {
        g = acts_[i].backward(g);
        g = norms_[i].backward(g);
        g = linears_[i].backward(g);
    }
    return g;
}

std::vector<Param*> Classifier::params() {
    std::vector<Param*> out;
    for (std::size_t i = 0; i < linears_.size(); ++i) {
        for (Param* p : linears_[i].params()) out.push_back(p);
        if (i < norms_.size()) {
            for (Param* p : norms_[i].params()) out.push_back(p);
        }
    }
    return out;
}

std::vector<StateEntry> Classifier::state() {
    std::vector<StateEntry> out;
    for (Param* p : params()) append_param_state(out, *p);
    for (auto& bn : norms_) {
        for (const auto& e : bn.buffers()) out.push_back(e);
    }
    return out;
}

std::size_t Classifier::parameter_count() {
    std::size_t total = 0;
    for (Param* p : params()) total += p->value.size();
    return total;
}

LabeledWindows make_labeled_windows(const std::vector<const Period*>& periods, std::size_t window,
                                    std::size_t step) {
    if (periods.empty()) throw ValueError("no labelled periods");
    const std::size_t A = periods.front()->axes();
    std::size_t total = 0;
    for (const Period* p : periods) {
        if (!p->labels) throw ValueError("period '" + p->period_id + "' has no labels");
        if (p->axes() != A) throw ShapeError("periods disagree on axis count");
        total += window_segments(p->length(), window, step).size();
    }
    LabeledWindows out;
    out.inputs = Tensor({total, window, A});
    out.labels.reserve(total * window);
    std::size_t k = 0;
    for (const Period* p : periods) {
        for (const auto& span : window_segments(p->length(), window, step)) {
            std::copy_n(p->values.data().data() + span.start * A, window * A,
                        out.inputs.data.data() + k * window * A);
            out.labels.insert(out.labels.end(), p->labels->begin() + static_cast<std::ptrdiff_t>(span.start),
                              p->labels->begin() + static_cast<std::ptrdiff_t>(span.start + window));
            out.origin.emplace_back(p->period_id, span.start);
            ++k;
        }
    }
    return out;
}

Tensor encode_windows(const Encoder& encoder, const Tensor& inputs, std::size_t chunk) {
    Encoder scratch = encoder;
    const std::size_t N = inputs.dim(0), l = inputs.dim(1);
    Tensor out({N, l, encoder.out_dim()});
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    const std::size_t stride = l * encoder.out_dim();
    for (std::size_t first = 0; first < N; first += chunk) {
        const std::size_t count = std::min(chunk, N - first);
        const Tensor features = scratch.forward(gather_rows(inputs, order, first, count), Mode::eval);
        std::copy_n(features.data.data(), count * stride, out.data.data() + first * stride);
    }
    return out;
}

ClassifierTrainResult train_classifier(const Encoder& encoder, const LabeledWindows& windows,
                                       const ClassifierConfig& config, std::uint64_t seed,
                                       const ClassifierEpochHook& hook) {
    config.validate();
    const std::size_t N = windows.count();
    if (N == 0) throw ValueError("train_classifier: no labelled windows");
    const std::size_t l = windows.inputs.dim(1);
    if (windows.labels.size() != N * l) throw ValueError("train_classifier: labels missing for some steps");
    for (int c : windows.labels) {
        if (c < 0 || static_cast<std::size_t>(c) >= config.classes) {
            throw ValueError("train_classifier: class id " + std::to_string(c) + " is not below C=" +
                             std::to_string(config.classes));
        }
    }

    ClassifierTrainResult result;
    result.encoder_hash_before = encoder.parameter_hash();
    const Tensor features = encode_windows(encoder, windows.inputs);

    result.classifier = Classifier(encoder.out_dim(), config, seed);
    Classifier& clf = result.classifier;
    const auto params = clf.params();
    Adam adam(AdamConfig{config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
    Rng rng(seed ^ kClassifierShuffleSalt);
    std::vector<std::size_t> order(N);
    for (std::size_t i = 0; i < N; ++i) order[i] = i;
    const std::size_t batch = std::min(config.batch_size, N);

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle(order, rng);
        double total = 0.0;
        for (std::size_t first = 0; first < N; first += batch) {
            const std::size_t count = std::min(batch, N - first);
            const Tensor x = gather_rows(features, order, first, count);
            std::vector<int> y;
            y.reserve(count * l);
            for (std::size_t i = 0; i < count; ++i) {
                const auto begin = windows.labels.begin() + static_cast<std::ptrdiff_t>(order[first + i] * l);
                y.insert(y.end(), begin, begin + static_cast<std::ptrdiff_t>(l));
            }
            Adam::zero_grad(params);
            const Tensor logits = clf.forward(x, Mode::train);
            const LossResult loss = cross_entropy(logits, y);
            if (!std::isfinite(loss.value) || !x.all_finite()) {
                std::ostringstream msg;
                msg << "non-finite classifier loss at epoch " << epoch << " (lr " << config.lr << ")";
                throw TrainingError(msg.str());
            }
            clf.backward(loss.grad);
            adam.step(params);
            total += loss.value * static_cast<double>(count);
        }
        const double mean = total / static_cast<double>(N);
        result.loss_curve.push_back(mean);
        if (hook) hook(epoch, mean, clf);
    }
    result.encoder_hash_after = encoder.parameter_hash();
    return result;
}

std::vector<int> argmax_labels(const Tensor& logits) {
    const std::size_t C = logits.cols();
    std::vector<int> out(logits.rows());
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const double* z = logits.data.data() + r * C;
        std::size_t best = 0;
        for (std::size_t c = 1; c < C; ++c) {
            if (z[c] > z[best]) best = c;
        }
        out[r] = static_cast<int>(best);
    }
    return out;
}

std::vector<std::size_t> prediction_starts(std::size_t length, std::size_t window) {
    if (window < 1) throw ValueError("prediction window must be >= 1");
    if (length <= window) return {0};
    std::vector<std::size_t> starts;
    std::size_t start = 0;
    for (; start + window <= length; start += window) starts.push_back(start);
    if (starts.back() + window < length) starts.push_back(length - window);
    return starts;
}

std::vector<int> predict(const Encoder& encoder, Classifier& classifier, const Period& normalized,
                         std::size_t window) {
    const std::size_t T = normalized.length();
    const std::size_t A = normalized.axes();
    if (T == 0) throw ValueError("predict: empty period");
    Period source = normalized;
    if (T < window) {
        log_warning("period '" + normalized.period_id + "' is shorter than the window; edge-padding");
        Grid<double> padded(window, A);
        for (std::size_t t = 0; t < window; ++t) {
            const std::size_t src = std::min(t, T - 1);
            for (std::size_t a = 0; a < A; ++a) padded(t, a) = normalized.values(src, a);
        }
        source.values = std::move(padded);
    }
    const auto starts = prediction_starts(source.length(), window);
    Tensor inputs({starts.size(), window, A});
    for (std::size_t k = 0; k < starts.size(); ++k) {
        std::copy_n(source.values.data().data() + starts[k] * A, window * A,
                    inputs.data.data() + k * window * A);
    }
    const Tensor features = encode_windows(encoder, inputs);
    const auto labels = argmax_labels(classifier.forward(features, Mode::eval));

    std::vector<int> out(source.length(), 0);
    for (std::size_t k = 0; k < starts.size(); ++k) {
        for (std::size_t i = 0; i < window; ++i) out[starts[k] + i] = labels[k * window + i];
    }
    out.resize(T);
    return out;
}

double micro_f1(const std::vector<std::vector<int>>& predictions,
                const std::vector<std::vector<int>>& truths) {
    if (predictions.size() != truths.size()) throw ShapeError("micro_f1: period count mismatch");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t p = 0; p < predictions.size(); ++p) {
        if (predictions[p].size() != truths[p].size()) {
            throw ShapeError("micro_f1: length mismatch in period " + std::to_string(p));
        }
        for (std::size_t t = 0; t < truths[p].size(); ++t) {
            if (predictions[p][t] == truths[p][t]) {
                ++tp;
            } else {
                // Single-label: a miss is a false positive for the predicted
                // class and a false negative for the true one.
                ++fp;
                ++fn;
            }
        }
    }
    const std::size_t denom = 2 * tp + fp + fn;
    if (denom == 0) throw ValueError("micro_f1: no time steps");
    return static_cast<double>(2 * tp) / static_cast<double>(denom);
}

std::vector<std::vector<std::size_t>> confusion_matrix(const std::vector<std::vector<int>>& predictions,
                                                       const std::vector<std::vector<int>>& truths,
                                                       std::size_t classes) {
    std::vector<std::vector<std::size_t>> counts(classes, std::vector<std::size_t>(classes, 0));
    for (std::size_t p = 0; p < predictions.size() && p < truths.size(); ++p) {
        for (std::size_t t = 0; t < truths[p].size() && t < predictions[p].size(); ++t) {
            const auto y = static_cast<std::size_t>(truths[p][t]);
            const auto yhat = static_cast<std::size_t>(predictions[p][t]);
            if (y < classes && yhat < classes) ++counts[y][yhat];
        }
    }
    return counts;
}

Checkpoint classifier_checkpoint(Classifier& classifier, const json& extra) {
    Checkpoint cp;
    cp.meta = extra.is_object() ? extra : json::object();
    cp.meta["kind"] = "classifier";
    cp.meta["classifier"] = classifier.config().to_json();
    cp.meta["in_features"] = classifier.in_features();
    cp.store(classifier.state());
    return cp;
}

Classifier classifier_from_checkpoint(const Checkpoint& checkpoint) {
    try {
        Classifier clf(checkpoint.meta.at("in_features").get<std::size_t>(),
                       ClassifierConfig::from_json(checkpoint.meta.at("classifier")), 0);
        checkpoint.restore(clf.state());
        return clf;
    } catch (const json::exception& e) {
        throw LoadError(std::string("classifier checkpoint metadata is incomplete: ") + e.what());
    }
}

}  // namespace moil
