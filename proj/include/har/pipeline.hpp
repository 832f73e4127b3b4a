#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "har/dataset.hpp"
#include "har/eval.hpp"
#include "har/models.hpp"
#include "har/stats.hpp"

namespace har::pipeline {

struct RunConfig {
    std::filesystem::path work_dir = "harforge_work";
    std::filesystem::path raw_dir;  // WISDM tree; unused in synthetic mode
    bool synthetic = true;
    std::uint64_t seed = 7;

    dataset::Device device = dataset::Device::Watch;
    dataset::Sensor sensor = dataset::Sensor::Accelerometer;
    std::string drop_feature;
    std::array<double, 3> ratios{0.8, 0.1, 0.1};

    std::vector<std::string> archs{"cnn", "bilstm", "convlstm", "lstm"};
    std::vector<std::string> sources{"accel", "gyro", "both"};
    std::size_t epochs = 0;  // 0 = each architecture's paper budget

    // Synthetic-data shape.
    std::size_t windows_per_class = 18;

    bool run_mancova = true;
    bool run_forecast = true;
    std::vector<char> forecast_activities{'H', 'I', 'J', 'K', 'L'};
    std::size_t forecast_epochs = 6;
    std::size_t forecast_train_stride = 2;
};

// Reduced-budget synthetic run: all four architectures, small epochs.
RunConfig demo_config(std::uint64_t seed = 7);

// Tracks stage fingerprints in <work_dir>/run_manifest.json so unchanged
// stages are skipped and artifacts can be compared across runs.
class StageLedger {
public:
    explicit StageLedger(std::filesystem::path work_dir);

    bool up_to_date(const std::string& stage, std::uint64_t key,
                    const std::vector<std::filesystem::path>& outputs) const;
    void record(const std::string& stage, std::uint64_t key,
                const std::vector<std::filesystem::path>& outputs);
    void save() const;

    // stage -> output file -> content hash, for determinism checks.
    std::vector<std::pair<std::string, std::uint64_t>> artifact_hashes() const;

private:
    std::filesystem::path work_dir_;
    std::filesystem::path manifest_path_;
    // stage -> (key, outputs with hashes); stored relative to work_dir.
    std::map<std::string, std::pair<std::uint64_t, std::map<std::string, std::uint64_t>>> stages_;
};

std::uint64_t hash_file(const std::filesystem::path& path);

struct TrainArtifacts {
    models::TrainedModel model;
    models::TrainHistory history;
};

// Split + scale + train + test-split evaluation for one architecture over a
// feature dataset. epochs_override = 0 uses the spec budget.
TrainArtifacts train_on_features(const dataset::LabeledDataset& ds, const std::string& arch,
                                 std::uint64_t seed, std::size_t epochs_override,
                                 const std::array<double, 3>& ratios);

// Classification report for one split of the dataset the model was trained
// on (the split is re-derived from the seeds stored in the checkpoint).
eval::ClassificationReport evaluate_checkpoint(models::TrainedModel& model,
                                               const dataset::LabeledDataset& ds,
                                               const std::string& split);

// Executes every configured stage; returns 0 on success. Throws the module
// errors, which the CLI maps to exit codes.
int run_pipeline(const RunConfig& cfg);

// Rebuilds the report tables from whatever train/eval/forecast artifacts
// already sit in work_dir.
int run_report_only(const std::filesystem::path& work_dir);

} // namespace har::pipeline
