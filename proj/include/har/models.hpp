#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "har/features.hpp"
#include "har/layers.hpp"
#include "har/nn.hpp"

namespace har::models {

constexpr std::size_t kNumClasses = 15;
constexpr std::size_t kForecastContext = 40;   // 2 s of samples fed to the GRU
constexpr std::size_t kForecastHorizon = 600;  // 30 s rolled out
constexpr std::size_t kForecastTrainSamples = 4200;  // 210 s of context data

struct ModelSpec {
    std::string name;  // LSTM | BiLSTM | ConvLSTM | CNN | GRU-Forecaster
    std::vector<nn::LayerSpec> layers;
    nn::Shape input_shape;  // excluding batch, e.g. {45, 1}
    std::size_t max_epochs = 0;
    std::size_t batch_size = 32;
};

// The four classifier stacks. input_len is the feature count presented as a
// (input_len x 1) sequence; 45 by default, 90 for the accel+gyro source.
ModelSpec build_lstm(std::size_t input_len = features::kNumFeatures);
ModelSpec build_bilstm(std::size_t input_len = features::kNumFeatures);
ModelSpec build_convlstm(std::size_t input_len = features::kNumFeatures);
ModelSpec build_cnn(std::size_t input_len = features::kNumFeatures);
// arch: lstm | bilstm | convlstm | cnn (case-insensitive)
ModelSpec build_classifier(const std::string& arch, std::size_t input_len = features::kNumFeatures);

ModelSpec build_gru_forecaster(std::size_t context_len = kForecastContext);

// Walks the layer chain with a batch of 1 and returns the final shape;
// throws ShapeMismatch on an inconsistent stack.
nn::Shape validate_spec(const ModelSpec& spec);

// Builds and Glorot-initializes the network (deterministic in seed).
nn::Network instantiate(const ModelSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct EpochStats {
    double train_loss = 0.0;
    double val_loss = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
};

enum class StopReason { ConvergedRule, MaxEpochs };

struct TrainHistory {
    std::vector<EpochStats> epochs;
    std::size_t stop_epoch = 0;  // 1-based
    StopReason stop_reason = StopReason::MaxEpochs;
};

struct TrainOptions {
    std::size_t max_epochs = 0;     // 0 = spec.max_epochs
    double stop_tolerance = 0.01;   // |train_loss - val_loss| convergence rule
    std::size_t stop_warmup = 5;    // rule armed strictly after this many epochs
    nn::AdamConfig adam{};
};

struct TrainedModel {
    ModelSpec spec;
    nn::Network net;
    features::MinMaxScaler scaler;
    std::vector<std::string> class_set;
    std::vector<std::string> feature_names;
    std::uint64_t init_seed = 0;
    std::uint64_t split_seed = 0;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
    std::size_t epochs_trained = 0;
};

// Mini-batch Adam training of a classifier on scaled feature rows. Labels
// are indices into the class set. Stops at the first epoch past the warmup
// where |train_loss - val_loss| < stop_tolerance, else at max_epochs.
// Throws NonFiniteLoss on divergence.
TrainHistory train_classifier(nn::Network& net, const ModelSpec& spec,
                              const std::vector<std::vector<double>>& train_rows,
                              const std::vector<std::size_t>& train_labels,
                              const std::vector<std::vector<double>>& val_rows,
                              const std::vector<std::size_t>& val_labels,
                              std::uint64_t seed, const TrainOptions& opts = {});

// Softmax class probabilities for a batch of scaled rows.
std::vector<std::vector<double>> predict_proba(nn::Network& net, const ModelSpec& spec,
                                               const std::vector<std::vector<double>>& rows);

// Argmax with ties broken toward the lowest class index.
std::vector<std::size_t> classify(nn::Network& net, const ModelSpec& spec,
                                  const std::vector<std::vector<double>>& rows);

// ---------------------------------------------------------------------------
// Checkpoints: JSON manifest + little-endian float64 parameter blob.
// ---------------------------------------------------------------------------

void save_checkpoint(const std::filesystem::path& base, const TrainedModel& model,
                     const TrainHistory& history);

struct Checkpoint {
    TrainedModel model;
    TrainHistory history;
};

Checkpoint load_checkpoint(const std::filesystem::path& base);

// ---------------------------------------------------------------------------
// GRU forecaster
// ---------------------------------------------------------------------------

struct ForecastOptions {
    std::size_t context_len = kForecastContext;
    std::size_t horizon = kForecastHorizon;
    std::size_t train_len = kForecastTrainSamples;
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    std::size_t train_stride = 1;  // subsample teacher-forcing pairs
    std::uint64_t seed = 7;
    nn::AdamConfig adam{};
};

struct ForecastOutput {
    std::vector<std::array<double, 3>> predicted;  // horizon samples
    std::vector<std::array<double, 3>> actual;
    std::vector<double> train_loss_per_epoch;
};

// Trains on (sliding context -> next sample) pairs from the first train_len
// samples, then free-runs horizon steps feeding predictions back. The
// stream must hold at least train_len + horizon samples.
ForecastOutput forecast_stream(const std::vector<std::array<double, 3>>& stream,
                               const ForecastOptions& opts);

// Rollout with an untrained (freshly initialized) model; baseline for tests.
ForecastOutput forecast_untrained(const std::vector<std::array<double, 3>>& stream,
                                  const ForecastOptions& opts);

} // namespace har::models
