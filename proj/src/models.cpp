#include "har/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "har/errors.hpp"

namespace har::models {

using nn::LayerSpec;

ModelSpec build_lstm(std::size_t input_len) {
    ModelSpec spec;
    spec.name = "LSTM";
    spec.input_shape = {input_len, 1};
    spec.max_epochs = 226;
    spec.layers = {
        LayerSpec::lstm(128),
        LayerSpec::dropout(0.3),
        LayerSpec::dense(64), LayerSpec::relu(),
        LayerSpec::dropout(0.2),
        LayerSpec::dense(64), LayerSpec::relu(),
        LayerSpec::dense(32), LayerSpec::relu(),
        LayerSpec::dense(kNumClasses), LayerSpec::softmax(),
    };
    return spec;
}

ModelSpec build_bilstm(std::size_t input_len) {
    ModelSpec spec = build_lstm(input_len);
    spec.name = "BiLSTM";
    spec.layers[0] = LayerSpec::bilstm(128);  // 128 per direction, concat 256
    return spec;
}

ModelSpec build_convlstm(std::size_t input_len) {
    ModelSpec spec;
    spec.name = "ConvLSTM";
    spec.input_shape = {input_len, 1};
    spec.max_epochs = 95;
    spec.layers = {
        LayerSpec::conv1d(128, 4), LayerSpec::relu(),
        LayerSpec::dropout(0.4),
        LayerSpec::lstm(128),
        LayerSpec::dense(100), LayerSpec::relu(),
        LayerSpec::dense(64), LayerSpec::relu(),
        LayerSpec::dropout(0.2),
        LayerSpec::dense(32), LayerSpec::relu(),
        LayerSpec::dense(kNumClasses), LayerSpec::softmax(),
    };
    return spec;
}

ModelSpec build_cnn(std::size_t input_len) {
    ModelSpec spec;
    spec.name = "CNN";
    spec.input_shape = {input_len, 1};
    spec.max_epochs = 148;
    spec.layers = {
        LayerSpec::conv1d(128, 10), LayerSpec::relu(),
        LayerSpec::dropout(0.4),
        LayerSpec::conv1d(128, 10), LayerSpec::relu(),
        LayerSpec::dropout(0.2),
        LayerSpec::maxpool1d(2),
        LayerSpec::flatten(),
        LayerSpec::dense(64), LayerSpec::relu(),
        LayerSpec::dense(kNumClasses), LayerSpec::softmax(),
    };
    return spec;
}

ModelSpec build_classifier(const std::string& arch, std::size_t input_len) {
    std::string a = arch;
    std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
    if (a == "lstm") return build_lstm(input_len);
    if (a == "bilstm") return build_bilstm(input_len);
    if (a == "convlstm") return build_convlstm(input_len);
    if (a == "cnn") return build_cnn(input_len);
    throw ConfigError("unknown architecture '" + arch + "' (expected lstm|bilstm|convlstm|cnn)");
}

ModelSpec build_gru_forecaster(std::size_t context_len) {
    ModelSpec spec;
    spec.name = "GRU-Forecaster";
    spec.input_shape = {context_len, 3};
    spec.max_epochs = 10;
    spec.layers = {
        LayerSpec::gru(64),
        LayerSpec::dense(3),  // linear triax output
    };
    return spec;
}

nn::Shape validate_spec(const ModelSpec& spec) {
    nn::Shape shape = spec.input_shape;
    shape.insert(shape.begin(), 1);  // nominal batch
    for (const auto& ls : spec.layers) {
        nn::Shape no_batch(shape.begin() + 1, shape.end());
        const auto layer = nn::make_layer(ls, no_batch);
        shape = layer->output_shape(shape);
    }
    return shape;
}

nn::Network instantiate(const ModelSpec& spec, std::uint64_t seed) {
    nn::Network net;
    nn::Shape shape = spec.input_shape;
    shape.insert(shape.begin(), 1);
    Rng rng(seed);
    for (const auto& ls : spec.layers) {
        nn::Shape no_batch(shape.begin() + 1, shape.end());
        auto layer = nn::make_layer(ls, no_batch);
        shape = layer->output_shape(shape);
        layer->init_params(rng);
        net.add(std::move(layer));
    }
    return net;
}

// ---------------------------------------------------------------------------
// Training helpers
// ---------------------------------------------------------------------------

namespace {

nn::Tensor rows_to_tensor(const std::vector<std::vector<double>>& rows,
                          const std::vector<std::size_t>& idx, const nn::Shape& input_shape) {
    const std::size_t per_row = nn::shape_size(input_shape);
    nn::Shape shape = input_shape;
    shape.insert(shape.begin(), idx.size());
    nn::Tensor out(shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto& row = rows[idx[i]];
        if (row.size() != per_row)
            throw ShapeMismatch("feature row width " + std::to_string(row.size()) +
                                " does not match model input " + nn::shape_str(input_shape));
        std::copy(row.begin(), row.end(), out.data() + i * per_row);
    }
    return out;
}

nn::Tensor one_hot(const std::vector<std::size_t>& labels, const std::vector<std::size_t>& idx,
                   std::size_t classes) {
    nn::Tensor t({idx.size(), classes});
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (labels[idx[i]] >= classes) throw UnknownLabel("label index out of range");
        t.at2(i, labels[idx[i]]) = 1.0;
    }
    return t;
}

std::vector<std::size_t> iota_vec(std::size_t n) {
    std::vector<std::size_t> v(n);
    std::iota(v.begin(), v.end(), 0);
    return v;
}

// Average loss and accuracy in inference mode, batched.
std::pair<double, double> evaluate_split(nn::Network& net, const ModelSpec& spec,
                                         const std::vector<std::vector<double>>& rows,
                                         const std::vector<std::size_t>& labels,
                                         std::size_t batch_size) {
    if (rows.empty()) return {0.0, 0.0};
    double loss_sum = 0.0;
    std::size_t correct = 0;
    const auto all = iota_vec(rows.size());
    for (std::size_t start = 0; start < rows.size(); start += batch_size) {
        const std::size_t end = std::min(rows.size(), start + batch_size);
        const std::vector<std::size_t> batch(all.begin() + start, all.begin() + end);
        const auto x = rows_to_tensor(rows, batch, spec.input_shape);
        const auto t = one_hot(labels, batch, kNumClasses);
        const auto probs = net.forward(x, nn::Mode::Infer, nullptr);
        loss_sum += nn::categorical_cross_entropy(probs, t).loss * static_cast<double>(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < kNumClasses; ++c)
                if (probs.at2(i, c) > probs.at2(i, best)) best = c;
            if (best == labels[batch[i]]) ++correct;
        }
    }
    return {loss_sum / static_cast<double>(rows.size()),
            static_cast<double>(correct) / static_cast<double>(rows.size())};
}

} // namespace

TrainHistory train_classifier(nn::Network& net, const ModelSpec& spec,
                              const std::vector<std::vector<double>>& train_rows,
                              const std::vector<std::size_t>& train_labels,
                              const std::vector<std::vector<double>>& val_rows,
                              const std::vector<std::size_t>& val_labels, std::uint64_t seed,
                              const TrainOptions& opts) {
    if (train_rows.size() != train_labels.size() || val_rows.size() != val_labels.size())
        throw LengthMismatch("rows/labels size mismatch");
    if (train_rows.empty()) throw InsufficientData("empty training split");

    const std::size_t max_epochs = opts.max_epochs ? opts.max_epochs : spec.max_epochs;
    nn::Adam adam(opts.adam);
    Rng shuffle_rng(derive_seed(seed, "shuffle"));
    Rng dropout_rng(derive_seed(seed, "dropout"));

    TrainHistory history;
    auto order = iota_vec(train_rows.size());
    for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        // The recorded training loss is the average over the epoch's
        // mini-batches with dropout active. It sits above the validation
        // loss while the model still improves and meets it at the plateau,
        // which is what the convergence rule watches for.
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t start = 0; start < order.size(); start += spec.batch_size) {
            const std::size_t end = std::min(order.size(), start + spec.batch_size);
            const std::vector<std::size_t> batch(order.begin() + start, order.begin() + end);
            const auto x = rows_to_tensor(train_rows, batch, spec.input_shape);
            const auto t = one_hot(train_labels, batch, kNumClasses);

            const auto probs = net.forward(x, nn::Mode::Train, &dropout_rng);
            const auto ce = nn::categorical_cross_entropy(probs, t);
            if (!std::isfinite(ce.loss))
                throw NonFiniteLoss("training loss diverged at epoch " + std::to_string(epoch));
            loss_sum += ce.loss * static_cast<double>(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) {
                std::size_t best = 0;
                for (std::size_t c = 1; c < kNumClasses; ++c)
                    if (probs.at2(i, c) > probs.at2(i, best)) best = c;
                if (best == train_labels[batch[i]]) ++correct;
            }

            net.zero_grads();
            net.backward_from(ce.grad_logits, net.layers().size() - 1);  // softmax fused
            adam.step(net.params());
        }

        EpochStats stats;
        stats.train_loss = loss_sum / static_cast<double>(train_rows.size());
        stats.train_acc = static_cast<double>(correct) / static_cast<double>(train_rows.size());
        std::tie(stats.val_loss, stats.val_acc) =
            evaluate_split(net, spec, val_rows, val_labels, spec.batch_size);
        history.epochs.push_back(stats);
        history.stop_epoch = epoch;

        if (!std::isfinite(stats.val_loss))
            throw NonFiniteLoss("validation loss diverged at epoch " + std::to_string(epoch));
        if (epoch > opts.stop_warmup &&
            std::abs(stats.train_loss - stats.val_loss) < opts.stop_tolerance) {
            history.stop_reason = StopReason::ConvergedRule;
            return history;
        }
    }
    history.stop_reason = StopReason::MaxEpochs;
    return history;
}

std::vector<std::vector<double>> predict_proba(nn::Network& net, const ModelSpec& spec,
                                               const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    const auto all = iota_vec(rows.size());
    for (std::size_t start = 0; start < rows.size(); start += spec.batch_size) {
        const std::size_t end = std::min(rows.size(), start + spec.batch_size);
        const std::vector<std::size_t> batch(all.begin() + start, all.begin() + end);
        const auto x = rows_to_tensor(rows, batch, spec.input_shape);
        const auto probs = net.forward(x, nn::Mode::Infer, nullptr);
        const std::size_t classes = probs.dim(1);
        for (std::size_t i = 0; i < batch.size(); ++i)
            out.emplace_back(probs.data() + i * classes, probs.data() + (i + 1) * classes);
    }
    return out;
}

std::vector<std::size_t> classify(nn::Network& net, const ModelSpec& spec,
                                  const std::vector<std::vector<double>>& rows) {
    const auto probs = predict_proba(net, spec, rows);
    std::vector<std::size_t> out;
    out.reserve(probs.size());
    for (const auto& p : probs) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.size(); ++c)
            if (p[c] > p[best]) best = c;  // ties keep the lowest index
        out.push_back(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {

nlohmann::json layer_to_json(const nn::LayerSpec& ls) {
    return {{"kind", nn::layer_kind_name(ls.kind)}, {"units", ls.units},
            {"filters", ls.filters},               {"kernel_size", ls.kernel_size},
            {"pool_size", ls.pool_size},           {"rate", ls.rate},
            {"return_sequences", ls.return_sequences}};
}

nn::LayerSpec layer_from_json(const nlohmann::json& j) {
    nn::LayerSpec ls;
    ls.kind = nn::parse_layer_kind(j.at("kind").get<std::string>());
    ls.units = j.at("units").get<std::size_t>();
    ls.filters = j.at("filters").get<std::size_t>();
    ls.kernel_size = j.at("kernel_size").get<std::size_t>();
    ls.pool_size = j.at("pool_size").get<std::size_t>();
    ls.rate = j.at("rate").get<double>();
    ls.return_sequences = j.at("return_sequences").get<bool>();
    return ls;
}

} // namespace

void save_checkpoint(const std::filesystem::path& base, const TrainedModel& model,
                     const TrainHistory& history) {
    nlohmann::json manifest;
    manifest["format"] = "harforge-checkpoint-v1";
    manifest["name"] = model.spec.name;
    manifest["input_shape"] = model.spec.input_shape;
    manifest["max_epochs"] = model.spec.max_epochs;
    manifest["batch_size"] = model.spec.batch_size;
    manifest["layers"] = nlohmann::json::array();
    for (const auto& ls : model.spec.layers) manifest["layers"].push_back(layer_to_json(ls));
    manifest["class_set"] = model.class_set;
    manifest["feature_names"] = model.feature_names;
    manifest["init_seed"] = model.init_seed;
    manifest["split_seed"] = model.split_seed;
    manifest["split_ratios"] = model.split_ratios;
    manifest["epochs_trained"] = model.epochs_trained;
    manifest["scaler"] = {{"min", model.scaler.mins()},
                          {"max", model.scaler.maxs()},
                          {"rows", model.scaler.fitted_rows()}};

    nlohmann::json hist;
    hist["stop_epoch"] = history.stop_epoch;
    hist["stop_reason"] =
        history.stop_reason == StopReason::ConvergedRule ? "converged_rule" : "max_epochs";
    hist["epochs"] = nlohmann::json::array();
    for (const auto& e : history.epochs)
        hist["epochs"].push_back({{"train_loss", e.train_loss},
                                  {"val_loss", e.val_loss},
                                  {"train_acc", e.train_acc},
                                  {"val_acc", e.val_acc}});
    manifest["history"] = hist;

    // Parameter manifest entries in network order; the blob is raw
    // little-endian float64 in the same order.
    auto& net = const_cast<nn::Network&>(model.net);
    auto params = net.params();
    manifest["params"] = nlohmann::json::array();
    std::size_t total = 0;
    for (const auto& p : params) {
        manifest["params"].push_back({{"name", p.name}, {"shape", p.value->shape()}});
        total += p.value->size();
    }
    manifest["param_count"] = total;

    std::ofstream mf(base.string() + ".json");
    if (!mf) throw IoError("cannot write " + base.string() + ".json");
    mf << manifest.dump(2) << "\n";

    std::ofstream bf(base.string() + ".bin", std::ios::binary);
    if (!bf) throw IoError("cannot write " + base.string() + ".bin");
    for (const auto& p : params)
        bf.write(reinterpret_cast<const char*>(p.value->data()),
                 static_cast<std::streamsize>(p.value->size() * sizeof(double)));
    if (!bf) throw IoError("failed writing parameter blob");
}

Checkpoint load_checkpoint(const std::filesystem::path& base) {
    std::ifstream mf(base.string() + ".json");
    if (!mf) throw IoError("cannot open " + base.string() + ".json");
    nlohmann::json manifest = nlohmann::json::parse(mf);

    Checkpoint ck;
    ck.model.spec.name = manifest.at("name").get<std::string>();
    ck.model.spec.input_shape = manifest.at("input_shape").get<nn::Shape>();
    ck.model.spec.max_epochs = manifest.at("max_epochs").get<std::size_t>();
    ck.model.spec.batch_size = manifest.at("batch_size").get<std::size_t>();
    for (const auto& jl : manifest.at("layers")) ck.model.spec.layers.push_back(layer_from_json(jl));
    ck.model.class_set = manifest.at("class_set").get<std::vector<std::string>>();
    ck.model.feature_names = manifest.at("feature_names").get<std::vector<std::string>>();
    ck.model.init_seed = manifest.at("init_seed").get<std::uint64_t>();
    ck.model.split_seed = manifest.at("split_seed").get<std::uint64_t>();
    ck.model.split_ratios = manifest.at("split_ratios").get<std::array<double, 3>>();
    ck.model.epochs_trained = manifest.at("epochs_trained").get<std::size_t>();
    ck.model.scaler.restore(manifest.at("scaler").at("min").get<std::vector<double>>(),
                            manifest.at("scaler").at("max").get<std::vector<double>>(),
                            manifest.at("scaler").at("rows").get<std::size_t>());

    const auto& hist = manifest.at("history");
    ck.history.stop_epoch = hist.at("stop_epoch").get<std::size_t>();
    ck.history.stop_reason = hist.at("stop_reason").get<std::string>() == "converged_rule"
                                 ? StopReason::ConvergedRule
                                 : StopReason::MaxEpochs;
    for (const auto& je : hist.at("epochs")) {
        EpochStats e;
        e.train_loss = je.at("train_loss").get<double>();
        e.val_loss = je.at("val_loss").get<double>();
        e.train_acc = je.at("train_acc").get<double>();
        e.val_acc = je.at("val_acc").get<double>();
        ck.history.epochs.push_back(e);
    }

    ck.model.net = instantiate(ck.model.spec, ck.model.init_seed);

    std::ifstream bf(base.string() + ".bin", std::ios::binary);
    if (!bf) throw IoError("cannot open " + base.string() + ".bin");
    for (auto& p : ck.model.net.params()) {
        bf.read(reinterpret_cast<char*>(p.value->data()),
                static_cast<std::streamsize>(p.value->size() * sizeof(double)));
        if (!bf) throw IoError("parameter blob truncated at " + p.name);
    }
    char extra;
    if (bf.read(&extra, 1)) throw IoError("parameter blob longer than manifest");
    return ck;
}

// ---------------------------------------------------------------------------
// Forecaster
// ---------------------------------------------------------------------------

namespace {

struct AxisScaler {
    std::array<double, 3> mean{}, stddev{};

    void fit(const std::vector<std::array<double, 3>>& s, std::size_t n) {
        for (std::size_t a = 0; a < 3; ++a) mean[a] = stddev[a] = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < 3; ++a) mean[a] += s[i][a];
        for (std::size_t a = 0; a < 3; ++a) mean[a] /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t a = 0; a < 3; ++a) {
                const double d = s[i][a] - mean[a];
                stddev[a] += d * d;
            }
        for (std::size_t a = 0; a < 3; ++a) {
            stddev[a] = std::sqrt(stddev[a] / static_cast<double>(n));
            if (stddev[a] == 0.0) stddev[a] = 1.0;
        }
    }

    std::array<double, 3> scale(const std::array<double, 3>& v) const {
        return {(v[0] - mean[0]) / stddev[0], (v[1] - mean[1]) / stddev[1],
                (v[2] - mean[2]) / stddev[2]};
    }

    std::array<double, 3> unscale(const std::array<double, 3>& v) const {
        return {v[0] * stddev[0] + mean[0], v[1] * stddev[1] + mean[1],
                v[2] * stddev[2] + mean[2]};
    }
};

ForecastOutput run_forecast(const std::vector<std::array<double, 3>>& stream,
                            const ForecastOptions& opts, bool train) {
    if (opts.context_len < 1) throw ConfigError("forecast context must be >= 1");
    if (stream.size() < opts.train_len + opts.horizon)
        throw InsufficientData("forecast stream needs >= " +
                               std::to_string(opts.train_len + opts.horizon) + " samples, got " +
                               std::to_string(stream.size()));

    const ModelSpec spec = build_gru_forecaster(opts.context_len);
    nn::Network net = instantiate(spec, derive_seed(opts.seed, "forecaster-init"));

    AxisScaler scaler;
    scaler.fit(stream, opts.train_len);
    std::vector<std::array<double, 3>> scaled(stream.size());
    for (std::size_t i = 0; i < stream.size(); ++i) scaled[i] = scaler.scale(stream[i]);

    ForecastOutput out;

    if (train) {
        // Teacher-forcing pairs over the context region.
        std::vector<std::size_t> starts;
        for (std::size_t i = opts.context_len; i < opts.train_len; i += opts.train_stride)
            starts.push_back(i - opts.context_len);
        Rng shuffle_rng(derive_seed(opts.seed, "forecaster-shuffle"));
        nn::Adam adam(opts.adam);
        for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
            shuffle_rng.shuffle(starts);
            double loss_sum = 0.0;
            std::size_t batches = 0;
            for (std::size_t b = 0; b < starts.size(); b += opts.batch_size) {
                const std::size_t end = std::min(starts.size(), b + opts.batch_size);
                const std::size_t n = end - b;
                nn::Tensor x({n, opts.context_len, 3});
                nn::Tensor t({n, 3});
                for (std::size_t i = 0; i < n; ++i) {
                    const std::size_t s = starts[b + i];
                    for (std::size_t j = 0; j < opts.context_len; ++j)
                        for (std::size_t a = 0; a < 3; ++a) x.at3(i, j, a) = scaled[s + j][a];
                    for (std::size_t a = 0; a < 3; ++a) t.at2(i, a) = scaled[s + opts.context_len][a];
                }
                const auto pred = net.forward(x, nn::Mode::Train, nullptr);
                const auto mse = nn::mean_squared_error(pred, t);
                if (!std::isfinite(mse.loss)) throw NonFiniteLoss("forecaster loss diverged");
                loss_sum += mse.loss;
                ++batches;
                net.zero_grads();
                net.backward(mse.grad);
                adam.step(net.params());
            }
            out.train_loss_per_epoch.push_back(loss_sum / static_cast<double>(batches));
        }
    }

    // Free-running rollout from the end of the training region.
    std::vector<std::array<double, 3>> window(scaled.begin() + static_cast<std::ptrdiff_t>(opts.train_len - opts.context_len),
                                              scaled.begin() + static_cast<std::ptrdiff_t>(opts.train_len));
    out.predicted.reserve(opts.horizon);
    out.actual.reserve(opts.horizon);
    nn::Tensor x({1, opts.context_len, 3});
    for (std::size_t step = 0; step < opts.horizon; ++step) {
        for (std::size_t j = 0; j < opts.context_len; ++j)
            for (std::size_t a = 0; a < 3; ++a) x.at3(0, j, a) = window[j][a];
        const auto pred = net.forward(x, nn::Mode::Infer, nullptr);
        const std::array<double, 3> next{pred.at2(0, 0), pred.at2(0, 1), pred.at2(0, 2)};
        window.erase(window.begin());
        window.push_back(next);
        out.predicted.push_back(scaler.unscale(next));
        out.actual.push_back(stream[opts.train_len + step]);
    }
    return out;
}

} // namespace

ForecastOutput forecast_stream(const std::vector<std::array<double, 3>>& stream,
                               const ForecastOptions& opts) {
    return run_forecast(stream, opts, true);
}

ForecastOutput forecast_untrained(const std::vector<std::array<double, 3>>& stream,
                                  const ForecastOptions& opts) {
    return run_forecast(stream, opts, false);
}

} // namespace har::models
