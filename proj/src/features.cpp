#include "har/features.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

namespace har::features {

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        const char axes[] = {'X', 'Y', 'Z'};
        for (char a : axes)
            for (int b = 0; b < 10; ++b) v.push_back(std::string(1, a) + std::to_string(b));
        for (const char* stat : {"AVG", "STD", "VAR", "AAD", "PEAK"})
            for (char a : axes) v.push_back(std::string(1, a) + stat);
        return v;
    }();
    return names;
}

std::size_t feature_index(const std::string& name) {
    const auto& names = feature_names();
    const auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw UnknownLabel("unknown feature name '" + name + "'");
    return static_cast<std::size_t>(it - names.begin());
}

std::array<double, 10> binned_distribution(std::span<const double> values) {
    std::array<double, 10> bins{};
    if (values.empty()) return bins;
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double mn = *mn_it, mx = *mx_it;
    const double range = mx - mn;
    if (range == 0.0) {
        bins[0] = 1.0;
        return bins;
    }
    for (double v : values) {
        auto idx = static_cast<long>(std::floor(10.0 * (v - mn) / range));
        idx = std::clamp(idx, 0L, 9L);
        bins[static_cast<std::size_t>(idx)] += 1.0;
    }
    const double n = static_cast<double>(values.size());
    for (double& b : bins) b /= n;
    return bins;
}

AxisStats axis_stats(std::span<const double> values) {
    AxisStats s;
    const double n = static_cast<double>(values.size());
    for (double v : values) s.average += v;
    s.average /= n;
    for (double v : values) {
        const double d = v - s.average;
        s.variance += d * d;
        s.avg_abs_diff += std::abs(d);
    }
    s.variance /= n;
    s.avg_abs_diff /= n;
    s.stddev = std::sqrt(s.variance);
    return s;
}

double time_between_peaks(std::span<const double> values, double rate_hz) {
    const double window_seconds = static_cast<double>(values.size()) / rate_hz;
    if (values.size() < 3) return window_seconds;
    const auto [mn_it, mx_it] = std::minmax_element(values.begin(), values.end());
    const double threshold = *mn_it + 0.5 * (*mx_it - *mn_it);

    std::vector<std::size_t> peaks;
    for (std::size_t i = 1; i + 1 < values.size(); ++i) {
        if (values[i] > values[i - 1] && values[i] >= values[i + 1] && values[i] > threshold)
            peaks.push_back(i);
    }
    if (peaks.size() < 2) return window_seconds;
    double gap_sum = 0.0;
    for (std::size_t i = 1; i < peaks.size(); ++i)
        gap_sum += static_cast<double>(peaks[i] - peaks[i - 1]);
    return gap_sum / static_cast<double>(peaks.size() - 1) / rate_hz;
}

std::array<double, kNumFeatures> extract_features(const dataset::Window& window) {
    std::array<double, kNumFeatures> out{};
    std::array<AxisStats, 3> stats;
    std::array<double, 3> peak_time{};
    for (std::size_t a = 0; a < 3; ++a) {
        const auto axis = window.axis(a);
        const auto bins = binned_distribution(axis);
        std::copy(bins.begin(), bins.end(), out.begin() + 10 * a);
        stats[a] = axis_stats(axis);
        peak_time[a] = time_between_peaks(axis);
    }
    for (std::size_t a = 0; a < 3; ++a) {
        out[30 + a] = stats[a].average;
        out[33 + a] = stats[a].stddev;
        out[36 + a] = stats[a].variance;
        out[39 + a] = stats[a].avg_abs_diff;
        out[42 + a] = peak_time[a];
    }
    return out;
}

namespace {

std::vector<std::string> names_without(const std::string& drop) {
    auto names = feature_names();
    if (!drop.empty()) {
        const std::size_t idx = feature_index(drop);  // validates the name
        names.erase(names.begin() + static_cast<std::ptrdiff_t>(idx));
    }
    return names;
}

std::vector<double> row_without(const std::array<double, kNumFeatures>& full,
                                const std::string& drop) {
    std::vector<double> row(full.begin(), full.end());
    if (!drop.empty()) {
        const std::size_t idx = feature_index(drop);
        row.erase(row.begin() + static_cast<std::ptrdiff_t>(idx));
    }
    return row;
}

} // namespace

dataset::LabeledDataset featurize_windows(const std::vector<dataset::Window>& windows,
                                          const std::string& drop_feature,
                                          dataset::Provenance provenance) {
    dataset::LabeledDataset ds;
    ds.feature_names = names_without(drop_feature);
    ds.class_set = dataset::class_names();
    ds.provenance = provenance;
    if (!windows.empty()) ds.device_sensor = windows.front().device_sensor;
    ds.rows.reserve(windows.size());
    ds.labels.reserve(windows.size());
    for (const auto& w : windows) {
        ds.rows.push_back(row_without(extract_features(w), drop_feature));
        ds.labels.push_back(dataset::merge_eating_label(w.activity));
    }
    return ds;
}

dataset::LabeledDataset concat_aligned(const std::vector<dataset::Window>& accel_windows,
                                       const std::vector<dataset::Window>& gyro_windows,
                                       const std::string& drop_feature) {
    using Key = std::tuple<int, char, std::int64_t>;
    std::map<Key, const dataset::Window*> gyro_by_key;
    for (const auto& w : gyro_windows)
        gyro_by_key[{w.subject_id, w.activity, w.start_timestamp}] = &w;

    dataset::LabeledDataset ds;
    const auto base = names_without(drop_feature);
    for (const auto& n : base) ds.feature_names.push_back("A_" + n);
    for (const auto& n : base) ds.feature_names.push_back("G_" + n);
    ds.class_set = dataset::class_names();
    if (!accel_windows.empty()) ds.device_sensor = accel_windows.front().device_sensor;

    for (const auto& aw : accel_windows) {
        const auto it = gyro_by_key.find({aw.subject_id, aw.activity, aw.start_timestamp});
        if (it == gyro_by_key.end()) continue;  // unmatched windows are dropped
        auto row = row_without(extract_features(aw), drop_feature);
        const auto grow = row_without(extract_features(*it->second), drop_feature);
        row.insert(row.end(), grow.begin(), grow.end());
        ds.rows.push_back(std::move(row));
        ds.labels.push_back(dataset::merge_eating_label(aw.activity));
    }
    if (ds.rows.empty())
        throw DataError("no timestamp-aligned accel/gyro window pairs found");
    return ds;
}

// ---------------------------------------------------------------------------
// Scaler
// ---------------------------------------------------------------------------

void MinMaxScaler::fit(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw DataError("cannot fit scaler on an empty training split");
    const std::size_t width = rows.front().size();
    min_.assign(width, std::numeric_limits<double>::infinity());
    max_.assign(width, -std::numeric_limits<double>::infinity());
    for (const auto& row : rows) {
        if (row.size() != width) throw ShapeMismatch("ragged feature rows in scaler fit");
        for (std::size_t i = 0; i < width; ++i) {
            min_[i] = std::min(min_[i], row[i]);
            max_[i] = std::max(max_[i], row[i]);
        }
    }
    fitted_rows_ = rows.size();
    fitted_ = true;
}

std::vector<double> MinMaxScaler::apply(const std::vector<double>& row) const {
    if (!fitted_) throw NotFitted("scaler used before fit");
    if (row.size() != min_.size())
        throw ShapeMismatch("row width " + std::to_string(row.size()) + " != fitted width " +
                            std::to_string(min_.size()));
    std::vector<double> out(row.size());
    for (std::size_t i = 0; i < row.size(); ++i) {
        const double range = max_[i] - min_[i];
        out[i] = range == 0.0 ? 0.0 : std::clamp((row[i] - min_[i]) / range, 0.0, 1.0);
    }
    return out;
}

std::vector<std::vector<double>> MinMaxScaler::apply_all(
    const std::vector<std::vector<double>>& rows) const {
    std::vector<std::vector<double>> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(apply(r));
    return out;
}

void MinMaxScaler::restore(std::vector<double> mins, std::vector<double> maxs, std::size_t rows) {
    if (mins.size() != maxs.size()) throw ShapeMismatch("scaler min/max width mismatch");
    min_ = std::move(mins);
    max_ = std::move(maxs);
    fitted_rows_ = rows;
    fitted_ = true;
}

// ---------------------------------------------------------------------------
// Feature CSV
// ---------------------------------------------------------------------------

void write_features_csv(const std::string& path, const dataset::LabeledDataset& ds) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (const auto& n : ds.feature_names) out << n << ',';
    out << "class\n";
    char buf[64];
    for (std::size_t r = 0; r < ds.rows.size(); ++r) {
        for (double v : ds.rows[r]) {
            std::snprintf(buf, sizeof(buf), "%.17g,", v);
            out << buf;
        }
        out << ds.labels[r] << "\n";
    }
    if (!out) throw IoError("failed writing " + path);
}

dataset::LabeledDataset read_features_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty feature file " + path);

    dataset::LabeledDataset ds;
    {
        std::istringstream hs(line);
        std::string col;
        while (std::getline(hs, col, ',')) ds.feature_names.push_back(col);
        if (ds.feature_names.empty() || ds.feature_names.back() != "class")
            throw DataError("feature csv must end with a class column: " + path);
        ds.feature_names.pop_back();
    }
    ds.class_set = dataset::class_names();

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<double> row;
        row.reserve(ds.feature_names.size());
        std::string_view s = line;
        for (std::size_t i = 0; i < ds.feature_names.size(); ++i) {
            const auto comma = s.find(',');
            if (comma == std::string_view::npos)
                throw MalformedRecord("short feature row", line_no);
            double v = 0.0;
            const auto f = s.substr(0, comma);
            const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size())
                throw MalformedRecord("unparsable feature value", line_no);
            row.push_back(v);
            s.remove_prefix(comma + 1);
        }
        if (s.find(',') != std::string_view::npos)
            throw MalformedRecord("extra columns in feature row", line_no);
        ds.rows.push_back(std::move(row));
        ds.labels.emplace_back(s);
    }
    return ds;
}

} // namespace har::features
