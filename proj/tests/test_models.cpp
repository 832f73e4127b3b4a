#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numbers>

#include "har/models.hpp"
#include "har/rng.hpp"

using namespace har;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("models");

namespace {

// Closed-form parameter counts per layer family.
std::size_t dense_params(std::size_t in, std::size_t out) { return in * out + out; }
std::size_t lstm_params(std::size_t in, std::size_t h) { return 4 * (in + h + 1) * h; }
std::size_t gru_params(std::size_t in, std::size_t h) { return 3 * (in + h + 1) * h; }
std::size_t conv_params(std::size_t cin, std::size_t f, std::size_t k) { return f * k * cin + f; }

} // namespace

TEST_CASE("parameter counts match hand-derived formulas") {
    SUBCASE("lstm stack") {
        auto net = models::instantiate(models::build_lstm(), 1);
        const std::size_t want = lstm_params(1, 128) + dense_params(128, 64) +
                                 dense_params(64, 64) + dense_params(64, 32) +
                                 dense_params(32, 15);
        CHECK(lstm_params(1, 128) == 4 * (1 + 128 + 1) * 128);  // 66560
        CHECK(net.param_count() == want);
    }
    SUBCASE("bilstm stack doubles the recurrent kernel") {
        auto net = models::instantiate(models::build_bilstm(), 1);
        const std::size_t want = 2 * lstm_params(1, 128) + dense_params(256, 64) +
                                 dense_params(64, 64) + dense_params(64, 32) +
                                 dense_params(32, 15);
        CHECK(net.param_count() == want);
    }
    SUBCASE("convlstm stack") {
        auto net = models::instantiate(models::build_convlstm(), 1);
        const std::size_t want = conv_params(1, 128, 4) + lstm_params(128, 128) +
                                 dense_params(128, 100) + dense_params(100, 64) +
                                 dense_params(64, 32) + dense_params(32, 15);
        CHECK(net.param_count() == want);
    }
    SUBCASE("cnn stack") {
        auto net = models::instantiate(models::build_cnn(), 1);
        const std::size_t want = conv_params(1, 128, 10) + conv_params(128, 128, 10) +
                                 dense_params(13 * 128, 64) + dense_params(64, 15);
        CHECK(net.param_count() == want);
    }
    SUBCASE("gru forecaster") {
        auto net = models::instantiate(models::build_gru_forecaster(), 1);
        CHECK(net.param_count() == gru_params(3, 64) + dense_params(64, 3));
    }
}

TEST_CASE("spec shape chains validate end to end") {
    CHECK(models::validate_spec(models::build_lstm()) == nn::Shape{1, 15});
    CHECK(models::validate_spec(models::build_bilstm()) == nn::Shape{1, 15});
    CHECK(models::validate_spec(models::build_convlstm()) == nn::Shape{1, 15});
    CHECK(models::validate_spec(models::build_cnn()) == nn::Shape{1, 15});
    CHECK(models::validate_spec(models::build_gru_forecaster()) == nn::Shape{1, 3});

    // CNN intermediate chain 45 -> 36 -> 27 -> 13 -> 1664.
    const auto cnn = models::build_cnn();
    auto net = models::instantiate(cnn, 3);
    nn::Shape shape{1, 45, 1};
    std::vector<nn::Shape> seen{shape};
    for (const auto& layer : net.layers()) {
        shape = layer->output_shape(shape);
        seen.push_back(shape);
    }
    CHECK(seen[1] == nn::Shape{1, 36, 128});   // conv k=10
    CHECK(seen[4] == nn::Shape{1, 27, 128});   // conv k=10 again
    CHECK(seen[7] == nn::Shape{1, 13, 128});   // pool 2 drops the odd step
    CHECK(seen[8] == nn::Shape{1, 13 * 128});  // flatten
    CHECK(seen.back() == nn::Shape{1, 15});

    // Epoch budgets as published.
    CHECK(models::build_lstm().max_epochs == 226);
    CHECK(models::build_bilstm().max_epochs == 226);
    CHECK(models::build_convlstm().max_epochs == 95);
    CHECK(models::build_cnn().max_epochs == 148);
    for (const auto& arch : {"lstm", "bilstm", "convlstm", "cnn"})
        CHECK(models::build_classifier(arch).batch_size == 32);
    CHECK_THROWS_AS(models::build_classifier("mlp"), ConfigError);
}

TEST_CASE("untrained forward yields a valid distribution") {
    for (const auto& arch : {"lstm", "bilstm", "convlstm", "cnn"}) {
        const auto spec = models::build_classifier(arch);
        auto net = models::instantiate(spec, 99);
        Rng rng(1);
        std::vector<std::vector<double>> rows(3, std::vector<double>(45));
        for (auto& row : rows)
            for (auto& v : row) v = rng.uniform();
        const auto probs = models::predict_proba(net, spec, rows);
        REQUIRE(probs.size() == 3);
        for (const auto& p : probs) {
            REQUIRE(p.size() == 15);
            double sum = 0.0;
            for (double v : p) {
                CHECK(v >= 0.0);
                sum += v;
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
}

namespace {

// Two linearly separable blobs mapped into class indices 0 and 1.
void separable_toy(std::size_t n, std::vector<std::vector<double>>& rows,
                   std::vector<std::size_t>& labels, std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const bool hi = i % 2 == 0;
        rows.push_back({rng.normal(hi ? 2.0 : -2.0, 0.4), rng.normal(hi ? -1.0 : 1.0, 0.4)});
        labels.push_back(hi ? 0 : 1);
    }
}

models::ModelSpec toy_spec() {
    models::ModelSpec spec;
    spec.name = "Toy";
    spec.input_shape = {2};
    spec.max_epochs = 50;
    spec.batch_size = 8;
    spec.layers = {nn::LayerSpec::dense(16), nn::LayerSpec::relu(),
                   nn::LayerSpec::dense(15), nn::LayerSpec::softmax()};
    return spec;
}

} // namespace

TEST_CASE("a separable toy problem trains to perfect accuracy") {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    separable_toy(80, rows, labels, 5);
    std::vector<std::vector<double>> val_rows;
    std::vector<std::size_t> val_labels;
    separable_toy(24, val_rows, val_labels, 6);

    const auto spec = toy_spec();
    auto net = models::instantiate(spec, 11);
    const auto hist = models::train_classifier(net, spec, rows, labels, val_rows, val_labels, 21);
    CHECK(hist.epochs.back().train_acc == 1.0);
    CHECK(hist.epochs.back().val_acc == 1.0);
    CHECK(hist.stop_epoch <= 50);

    // Training loss decreases over the first epochs (averaged check).
    REQUIRE(hist.epochs.size() >= 5);
    CHECK(hist.epochs[4].train_loss < hist.epochs[0].train_loss);

    const auto preds = models::classify(net, spec, rows);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) correct += preds[i] == labels[i];
    CHECK(correct == preds.size());
}

TEST_CASE("training history is deterministic in the seed") {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    separable_toy(60, rows, labels, 5);

    const auto run = [&](std::uint64_t seed) {
        const auto spec = toy_spec();
        auto net = models::instantiate(spec, 11);
        models::TrainOptions opts;
        opts.max_epochs = 12;
        return models::train_classifier(net, spec, rows, labels, rows, labels, seed, opts);
    };
    const auto a = run(33), b = run(33), c = run(34);
    REQUIRE(a.epochs.size() == b.epochs.size());
    for (std::size_t e = 0; e < a.epochs.size(); ++e) {
        CHECK(a.epochs[e].train_loss == b.epochs[e].train_loss);  // bitwise
        CHECK(a.epochs[e].val_loss == b.epochs[e].val_loss);
        CHECK(a.epochs[e].train_acc == b.epochs[e].train_acc);
    }
    bool differs = c.epochs.size() != a.epochs.size();
    for (std::size_t e = 0; !differs && e < a.epochs.size(); ++e)
        differs = c.epochs[e].train_loss != a.epochs[e].train_loss;
    CHECK(differs);
}

TEST_CASE("validating on the training set stops almost immediately") {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    separable_toy(64, rows, labels, 9);
    const auto spec = toy_spec();  // no dropout, so train and val losses align
    auto net = models::instantiate(spec, 4);
    models::TrainOptions opts;
    opts.adam.lr = 0.01;  // converges within a few epochs on the blobs
    const auto hist = models::train_classifier(net, spec, rows, labels, rows, labels, 8, opts);
    CHECK(hist.stop_reason == models::StopReason::ConvergedRule);
    CHECK(hist.stop_epoch <= 10);  // first epochs past the 5-epoch warmup
    CHECK(std::abs(hist.epochs.back().train_loss - hist.epochs.back().val_loss) < 0.01);
}

TEST_CASE("non-finite loss raises NonFiniteLoss") {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    separable_toy(32, rows, labels, 5);
    const auto spec = toy_spec();
    auto net = models::instantiate(spec, 11);
    models::TrainOptions opts;
    opts.max_epochs = 5;
    opts.adam.lr = 1e240;  // guaranteed blow-up
    CHECK_THROWS_AS(
        models::train_classifier(net, spec, rows, labels, rows, labels, 3, opts),
        NonFiniteLoss);
}

TEST_CASE("batch and single-row prediction agree bitwise") {
    const auto spec = models::build_cnn();
    auto net = models::instantiate(spec, 17);
    Rng rng(2);
    std::vector<std::vector<double>> rows(7, std::vector<double>(45));
    for (auto& row : rows)
        for (auto& v : row) v = rng.uniform();
    const auto batch = models::predict_proba(net, spec, rows);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto single = models::predict_proba(net, spec, {rows[i]});
        CHECK(single[0] == batch[i]);
    }
}

TEST_CASE("argmax is invariant under positive rescaling of the logits") {
    const auto spec = toy_spec();
    auto net = models::instantiate(spec, 23);
    Rng rng(3);
    std::vector<std::vector<double>> rows(20, std::vector<double>(2));
    for (auto& row : rows)
        for (auto& v : row) v = rng.normal();
    const auto before = models::classify(net, spec, rows);

    // Scale the last dense layer (pre-softmax logits) by a positive factor.
    auto params = net.params();
    for (auto& p : params)
        if (p.name.find("layer2.") == 0)
            for (auto& v : p.value->vec()) v *= 3.7;
    const auto after = models::classify(net, spec, rows);
    CHECK(before == after);
}

TEST_CASE("checkpoint round trip preserves predictions bitwise") {
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> labels;
    separable_toy(60, rows, labels, 5);

    models::TrainedModel model;
    model.spec = toy_spec();
    model.net = models::instantiate(model.spec, 31);
    model.class_set = dataset::class_names();
    model.feature_names = {"f0", "f1"};
    model.init_seed = 31;
    model.split_seed = 77;
    model.scaler.fit(rows);
    models::TrainOptions opts;
    opts.max_epochs = 8;
    const auto scaled = model.scaler.apply_all(rows);
    const auto hist =
        models::train_classifier(model.net, model.spec, scaled, labels, scaled, labels, 3, opts);
    model.epochs_trained = hist.stop_epoch;

    const auto before = models::predict_proba(model.net, model.spec, scaled);

    const fs::path dir = fs::temp_directory_path() / "har_test_ckpt";
    fs::create_directories(dir);
    models::save_checkpoint(dir / "toy", model, hist);
    auto loaded = models::load_checkpoint(dir / "toy");

    CHECK(loaded.model.spec.name == "Toy");
    CHECK(loaded.model.class_set == model.class_set);
    CHECK(loaded.model.split_seed == 77);
    CHECK(loaded.history.epochs.size() == hist.epochs.size());
    CHECK(loaded.history.epochs.back().val_loss == hist.epochs.back().val_loss);
    CHECK(loaded.model.scaler.mins() == model.scaler.mins());

    const auto after = models::predict_proba(loaded.model.net, loaded.model.spec, scaled);
    REQUIRE(after.size() == before.size());
    for (std::size_t i = 0; i < before.size(); ++i) CHECK(after[i] == before[i]);  // bitwise
    fs::remove_all(dir);
}

namespace {

std::vector<std::array<double, 3>> sinusoid_stream(std::size_t n, double freq_hz,
                                                   double amplitude, double noise,
                                                   std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::array<double, 3>> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / 20.0;
        const double w = 2.0 * std::numbers::pi * freq_hz * t;
        out.push_back({amplitude * std::sin(w) + noise * rng.normal(),
                       amplitude * std::sin(w + 2.0) + noise * rng.normal(),
                       amplitude * std::cos(w) + noise * rng.normal()});
    }
    return out;
}

} // namespace

TEST_CASE("forecaster rollout length and zero-weight behavior") {
    const auto stream = sinusoid_stream(4800, 1.0, 1.0, 0.0, 1);
    models::ForecastOptions opts;
    opts.epochs = 0;  // untrained path exercises rollout mechanics only
    const auto out = models::forecast_untrained(stream, opts);
    CHECK(out.predicted.size() == 600);  // 30 s at 20 Hz
    CHECK(out.actual.size() == 600);
    for (std::size_t i = 0; i < 600; ++i)
        CHECK(out.actual[i] == stream[4200 + i]);

    // Zero weights force a constant-zero prediction in scaled space.
    const auto spec = models::build_gru_forecaster();
    auto net = models::instantiate(spec, 2);
    for (auto& p : net.params()) p.value->fill(0.0);
    nn::Tensor x({1, models::kForecastContext, 3});
    Rng rng(3);
    for (auto& v : x.vec()) v = rng.normal();
    const auto y = net.forward(x, nn::Mode::Infer);
    for (double v : y.vec()) CHECK(v == 0.0);

    CHECK_THROWS_AS(models::forecast_stream(sinusoid_stream(100, 1, 1, 0, 1), opts),
                    InsufficientData);
}

TEST_CASE("trained forecaster beats the untrained one on a clean sinusoid") {
    const auto stream = sinusoid_stream(4800, 1.0, 1.0, 0.0, 4);
    models::ForecastOptions opts;
    opts.epochs = 12;
    opts.train_stride = 2;
    opts.seed = 5;

    const auto trained = models::forecast_stream(stream, opts);
    const auto untrained = models::forecast_untrained(stream, opts);

    const auto rmse = [](const models::ForecastOutput& o) {
        double se = 0.0;
        for (std::size_t i = 0; i < o.predicted.size(); ++i)
            for (std::size_t a = 0; a < 3; ++a) {
                const double d = o.predicted[i][a] - o.actual[i][a];
                se += d * d;
            }
        return std::sqrt(se / static_cast<double>(o.predicted.size() * 3));
    };
    const double trained_rmse = rmse(trained);
    const double untrained_rmse = rmse(untrained);
    CHECK(trained_rmse < untrained_rmse);
    CHECK(trained_rmse <= 0.15);  // signal amplitude is 1.0
    REQUIRE(!trained.train_loss_per_epoch.empty());
    CHECK(trained.train_loss_per_epoch.back() < trained.train_loss_per_epoch.front());
}

TEST_SUITE_END();
