#include "har/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "har/dataset.hpp"

namespace har::eval {

ClassificationReport classification_report(const std::vector<std::string>& truths,
                                           const std::vector<std::string>& predictions,
                                           const std::vector<std::string>& class_set) {
    if (truths.size() != predictions.size())
        throw LengthMismatch("truth/prediction lengths differ: " + std::to_string(truths.size()) +
                             " vs " + std::to_string(predictions.size()));
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < class_set.size(); ++i) index[class_set[i]] = i;

    ClassificationReport rep;
    rep.class_set = class_set;
    rep.total = truths.size();
    rep.confusion.assign(class_set.size(), std::vector<std::size_t>(class_set.size(), 0));
    for (std::size_t i = 0; i < truths.size(); ++i) {
        const auto t = index.find(truths[i]);
        if (t == index.end()) throw UnknownLabel("unknown true label '" + truths[i] + "'");
        const auto p = index.find(predictions[i]);
        if (p == index.end()) throw UnknownLabel("unknown predicted label '" + predictions[i] + "'");
        ++rep.confusion[t->second][p->second];
    }

    double f1_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t c = 0; c < class_set.size(); ++c) {
        ClassMetrics m;
        m.label = class_set[c];
        m.tp = rep.confusion[c][c];
        for (std::size_t o = 0; o < class_set.size(); ++o) {
            if (o == c) continue;
            m.fn += rep.confusion[c][o];
            m.fp += rep.confusion[o][c];
        }
        correct += m.tp;
        m.precision = (m.tp + m.fp) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
        m.recall = (m.tp + m.fn) ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
        m.f1 = (m.precision + m.recall) > 0.0
                   ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                   : 0.0;
        if (m.tp + m.fp + m.fn == 0) rep.degenerate_classes.push_back(m.label);
        f1_sum += m.f1;
        rep.per_class.push_back(std::move(m));
    }
    rep.macro_f1 = class_set.empty() ? 0.0 : f1_sum / static_cast<double>(class_set.size());
    rep.micro_accuracy =
        rep.total ? static_cast<double>(correct) / static_cast<double>(rep.total) : 0.0;
    return rep;
}

ForecastMetrics forecast_metrics(const std::vector<std::array<double, 3>>& actual,
                                 const std::vector<std::array<double, 3>>& predicted) {
    if (actual.size() != predicted.size())
        throw ShapeMismatch("actual/predicted lengths differ");
    if (actual.empty()) throw ShapeMismatch("forecast metrics need at least one sample");

    ForecastMetrics m;
    double se = 0.0, ape = 0.0, sape = 0.0;
    std::size_t mape_n = 0;
    const std::size_t total = actual.size() * 3;
    for (std::size_t i = 0; i < actual.size(); ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
            const double av = actual[i][a], fv = predicted[i][a];
            const double err = av - fv;
            se += err * err;
            if (std::abs(av) > 1e-8) {
                ape += std::abs(err) / std::abs(av);
                ++mape_n;
            } else {
                ++m.mape_excluded;
            }
            const double denom = (std::abs(av) + std::abs(fv)) / 2.0;
            sape += denom == 0.0 ? 0.0 : std::abs(err) / denom;
        }
    }
    m.mse = se / static_cast<double>(total);
    m.rmse = std::sqrt(m.mse);
    m.smape = 100.0 * sape / static_cast<double>(total);
    if (mape_n == 0) {
        m.mape_defined = false;
        m.mape = 0.0;
    } else {
        m.mape = 100.0 * ape / static_cast<double>(mape_n);
    }
    return m;
}

// ---------------------------------------------------------------------------
// Tables
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void write_precision_table(std::ofstream& csv, std::ofstream& md, const std::string& title,
                           const std::vector<std::string>& activities,
                           const std::vector<std::string>& models,
                           const std::map<std::string, std::map<std::string, double>>& precision) {
    csv << "Activities";
    md << "\n### " << title << "\n\n|Activities|";
    for (const auto& m : models) {
        csv << ',' << m;
        md << m << '|';
    }
    csv << ",Mean\n";
    md << "Mean|\n|";
    for (std::size_t i = 0; i < models.size() + 2; ++i) md << "---|";
    md << "\n";

    std::map<std::string, double> col_sums;
    for (const auto& act : activities) {
        csv << act;
        md << '|' << act << '|';
        double row_sum = 0.0;
        for (const auto& m : models) {
            const double v = precision.at(m).at(act);
            csv << ',' << fmt(v);
            md << fmt(v) << '|';
            row_sum += v;
            col_sums[m] += v;
        }
        const double mean = models.empty() ? 0.0 : row_sum / static_cast<double>(models.size());
        csv << ',' << fmt(mean) << "\n";
        md << fmt(mean) << "|\n";
    }
    csv << "Mean";
    md << "|Mean|";
    double grand = 0.0;
    for (const auto& m : models) {
        const double mean =
            activities.empty() ? 0.0 : col_sums[m] / static_cast<double>(activities.size());
        csv << ',' << fmt(mean);
        md << fmt(mean) << '|';
        grand += mean;
    }
    const double grand_mean = models.empty() ? 0.0 : grand / static_cast<double>(models.size());
    csv << ',' << fmt(grand_mean) << "\n";
    md << fmt(grand_mean) << "|\n";
}

} // namespace

void emit_report_tables(const EvalArtifacts& artifacts, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    const fs::path tables = out_dir / "tables";
    fs::create_directories(tables);

    std::ofstream md(out_dir / "report.md");
    if (!md) throw IoError("cannot write " + (out_dir / "report.md").string());
    md << "# Evaluation report\n";

    // Macro-F1 per model and sensor source.
    {
        std::ofstream csv(tables / "macro_f1.csv");
        if (!csv) throw IoError("cannot write macro_f1.csv");
        csv << "Models";
        md << "\n### Macro-F1 by sensor source\n\n|Models|";
        for (const auto& s : artifacts.sources) {
            csv << ',' << s;
            md << s << '|';
        }
        csv << "\n";
        md << "\n|---|";
        for (std::size_t i = 0; i < artifacts.sources.size(); ++i) md << "---|";
        md << "\n";
        for (const auto& model : artifacts.models) {
            csv << model;
            md << '|' << model << '|';
            for (const auto& s : artifacts.sources) {
                const auto mit = artifacts.macro_f1.find(model);
                const bool have = mit != artifacts.macro_f1.end() && mit->second.count(s);
                if (have) {
                    csv << ',' << fmt(mit->second.at(s));
                    md << fmt(mit->second.at(s)) << '|';
                } else {
                    csv << ',';
                    md << " |";
                }
            }
            csv << "\n";
            md << "\n";
        }
    }

    // Per-activity precision, split by hand orientation, when present.
    if (!artifacts.precision.empty()) {
        std::vector<std::string> models;
        for (const auto& m : artifacts.models)
            if (artifacts.precision.count(m)) models.push_back(m);
        {
            std::ofstream csv(tables / "precision_nonhand.csv");
            if (!csv) throw IoError("cannot write precision_nonhand.csv");
            write_precision_table(csv, md, "Precision (non-hand-oriented activities)",
                                  dataset::non_hand_classes(), models, artifacts.precision);
        }
        {
            std::ofstream csv(tables / "precision_hand.csv");
            if (!csv) throw IoError("cannot write precision_hand.csv");
            write_precision_table(csv, md, "Precision (hand-oriented activities)",
                                  dataset::hand_classes(), models, artifacts.precision);
        }
    } else {
        std::ofstream(tables / "precision_nonhand.csv") << "Activities,Mean\n";
        std::ofstream(tables / "precision_hand.csv") << "Activities,Mean\n";
    }

    // Forecasting metrics per eating activity.
    {
        std::ofstream csv(tables / "forecast.csv");
        if (!csv) throw IoError("cannot write forecast.csv");
        csv << "Activities,RMSE,MSE,MAPE,sMAPE,MAPE_excluded\n";
        md << "\n### Forecasting metrics\n\n|Activities|RMSE|MSE|MAPE|sMAPE|\n|---|---|---|---|---|\n";
        double s_rmse = 0, s_mse = 0, s_mape = 0, s_smape = 0;
        for (const auto& row : artifacts.forecasts) {
            char buf[220];
            std::snprintf(buf, sizeof(buf), "%s,%.4f,%.6f,%.3f,%.3f,%zu\n", row.label.c_str(),
                          row.metrics.rmse, row.metrics.mse, row.metrics.mape, row.metrics.smape,
                          row.metrics.mape_excluded);
            csv << buf;
            md << '|' << row.label << '|' << fmt(row.metrics.rmse) << '|' << fmt(row.metrics.mse)
               << '|' << fmt(row.metrics.mape) << '|' << fmt(row.metrics.smape) << "|\n";
            s_rmse += row.metrics.rmse;
            s_mse += row.metrics.mse;
            s_mape += row.metrics.mape;
            s_smape += row.metrics.smape;
        }
        if (!artifacts.forecasts.empty()) {
            const double n = static_cast<double>(artifacts.forecasts.size());
            char buf[220];
            std::snprintf(buf, sizeof(buf), "Mean,%.4f,%.6f,%.3f,%.3f,\n", s_rmse / n, s_mse / n,
                          s_mape / n, s_smape / n);
            csv << buf;
            md << "|Mean|" << fmt(s_rmse / n) << '|' << fmt(s_mse / n) << '|' << fmt(s_mape / n)
               << '|' << fmt(s_smape / n) << "|\n";
        }
    }
}

} // namespace har::eval
