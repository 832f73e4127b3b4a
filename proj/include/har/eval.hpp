#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har::eval {

struct ClassMetrics {
    std::string label;
    std::size_t tp = 0, fp = 0, fn = 0;
    double precision = 0.0, recall = 0.0, f1 = 0.0;
};

struct ClassificationReport {
    std::vector<std::string> class_set;
    std::vector<std::vector<std::size_t>> confusion;  // [true][predicted]
    std::vector<ClassMetrics> per_class;
    double macro_f1 = 0.0;
    double micro_accuracy = 0.0;
    std::size_t total = 0;
    // Classes never true and never predicted; their zero metrics are a
    // convention, not an observation.
    std::vector<std::string> degenerate_classes;
};

// Per-class precision/recall/F1 with zero denominators mapping to 0, plus
// unweighted Macro-F1. Throws LengthMismatch / UnknownLabel.
ClassificationReport classification_report(const std::vector<std::string>& truths,
                                           const std::vector<std::string>& predictions,
                                           const std::vector<std::string>& class_set);

struct ForecastMetrics {
    double rmse = 0.0;
    double mse = 0.0;
    double mape = 0.0;   // percent; 0 with mape_defined=false when all actuals ~0
    double smape = 0.0;  // percent
    std::size_t mape_excluded = 0;  // pairs with |actual| <= 1e-8 skipped by MAPE
    bool mape_defined = true;
};

// Metrics over all 3n scalar pairs of two n x 3 series.
ForecastMetrics forecast_metrics(const std::vector<std::array<double, 3>>& actual,
                                 const std::vector<std::array<double, 3>>& predicted);

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

struct ForecastRow {
    char activity_code = 'H';
    std::string label;  // e.g. "H (eating soup)"
    ForecastMetrics metrics;
};

// Everything the report stage needs, keyed by model and source names.
struct EvalArtifacts {
    std::vector<std::string> models;                                 // row order
    std::vector<std::string> sources;                                // column order
    std::map<std::string, std::map<std::string, double>> macro_f1;   // model -> source -> value
    std::map<std::string, std::map<std::string, double>> precision;  // model -> class -> value
    std::vector<ForecastRow> forecasts;
};

// Writes tables/{macro_f1,precision_nonhand,precision_hand,forecast}.csv and
// a combined report.md under out_dir. Precision tables carry a Mean column
// (across models) and a Mean row (across activities); the forecast table has
// a Mean row.
void emit_report_tables(const EvalArtifacts& artifacts, const std::filesystem::path& out_dir);

} // namespace har::eval
