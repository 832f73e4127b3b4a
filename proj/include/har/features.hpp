#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "har/dataset.hpp"
#include "har/errors.hpp"

namespace har::features {

constexpr std::size_t kNumFeatures = 45;

// Canonical column names, in vector order:
// X0..X9, Y0..Y9, Z0..Z9, XAVG..ZAVG, XSTD..ZSTD, XVAR..ZVAR, XAAD..ZAAD,
// XPEAK..ZPEAK.
const std::vector<std::string>& feature_names();

// Index of a canonical name; throws UnknownLabel for anything else.
std::size_t feature_index(const std::string& name);

// Histogram over 10 equal-width bins spanning [min, max] of the values,
// normalized to fractions. A constant input puts all mass in bin 0.
std::array<double, 10> binned_distribution(std::span<const double> values);

struct AxisStats {
    double average = 0.0;
    double stddev = 0.0;     // population
    double variance = 0.0;   // population
    double avg_abs_diff = 0.0;
};

AxisStats axis_stats(std::span<const double> values);

// Mean gap in seconds between consecutive prominent local maxima
// (height above min + 0.5 * range; strict rise on the left, non-strict on
// the right). Fewer than two peaks yields the window length, 10 s.
double time_between_peaks(std::span<const double> values, double rate_hz = dataset::kSampleRateHz);

std::array<double, kNumFeatures> extract_features(const dataset::Window& window);

// Builds a labeled feature dataset from windows (labels are merged class
// names). drop_feature, when non-empty, removes that one canonical column.
dataset::LabeledDataset featurize_windows(const std::vector<dataset::Window>& windows,
                                          const std::string& drop_feature = "",
                                          dataset::Provenance provenance = dataset::Provenance::Synthetic);

// Joins two feature datasets over timestamp-aligned windows, prefixing
// column names with "A_" / "G_"; used for the accel+gyro "both" source.
dataset::LabeledDataset concat_aligned(const std::vector<dataset::Window>& accel_windows,
                                       const std::vector<dataset::Window>& gyro_windows,
                                       const std::string& drop_feature = "");

// Min-max scaler to [0,1], fitted on the training split only. Features that
// are constant in training map to 0; application clamps to [0,1].
class MinMaxScaler {
public:
    void fit(const std::vector<std::vector<double>>& rows);
    std::vector<double> apply(const std::vector<double>& row) const;
    std::vector<std::vector<double>> apply_all(const std::vector<std::vector<double>>& rows) const;

    bool fitted() const { return fitted_; }
    std::size_t fitted_rows() const { return fitted_rows_; }
    const std::vector<double>& mins() const { return min_; }
    const std::vector<double>& maxs() const { return max_; }
    void restore(std::vector<double> mins, std::vector<double> maxs, std::size_t rows);

private:
    std::vector<double> min_, max_;
    std::size_t fitted_rows_ = 0;
    bool fitted_ = false;
};

// Feature matrix CSV: the canonical names plus a final `class` column.
void write_features_csv(const std::string& path, const dataset::LabeledDataset& ds);
dataset::LabeledDataset read_features_csv(const std::string& path);

} // namespace har::features
