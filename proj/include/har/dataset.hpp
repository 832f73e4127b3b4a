#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "har/errors.hpp"

namespace har::dataset {

// ---------------------------------------------------------------------------
// Activity codes
// ---------------------------------------------------------------------------

// The 18 raw activity codes are the letters A..S with N unused.
bool is_valid_activity(char code);

// Human description of a raw code, e.g. 'H' -> "eating soup".
std::string activity_description(char code);

// Raw code -> one of the 15 class names; the four eating variants
// (H, I, J, L) collapse into "eating". Throws UnknownActivity.
const std::string& merge_eating_label(char code);

// Same mapping, but also accepts an already-merged class name (identity),
// which makes the merge idempotent on its output space.
const std::string& merge_eating_label(const std::string& code_or_name);

// Canonical ordered 15-class list: the six non-hand-oriented activities
// followed by the nine hand-oriented ones.
const std::vector<std::string>& class_names();
const std::vector<std::string>& non_hand_classes();
const std::vector<std::string>& hand_classes();

// ---------------------------------------------------------------------------
// Core types
// ---------------------------------------------------------------------------

enum class Device { Phone, Watch };
enum class Sensor { Accelerometer, Gyroscope };

struct DeviceSensor {
    Device device = Device::Watch;
    Sensor sensor = Sensor::Accelerometer;

    bool operator==(const DeviceSensor&) const = default;
    std::string str() const;  // e.g. "watch_accel"
};

Device parse_device(const std::string& s);        // "phone" | "watch"
Sensor parse_sensor(const std::string& s);        // "accel" | "gyro"
std::string device_name(Device d);
std::string sensor_name(Sensor s);

struct SensorReading {
    int subject_id = 0;
    char activity = 'A';
    std::int64_t timestamp = 0;  // nanoseconds, opaque origin
    double x = 0.0, y = 0.0, z = 0.0;

    bool operator==(const SensorReading&) const = default;
};

constexpr std::size_t kWindowLen = 200;  // 10 s at 20 Hz
constexpr double kSampleRateHz = 20.0;

struct Window {
    int subject_id = 0;
    char activity = 'A';
    DeviceSensor device_sensor;
    std::int64_t start_timestamp = 0;
    // samples[i] = {x, y, z}
    std::vector<std::array<double, 3>> samples;

    std::vector<double> axis(std::size_t a) const;  // a: 0=x, 1=y, 2=z
};

// ---------------------------------------------------------------------------
// Parsing and loading
// ---------------------------------------------------------------------------

// Parses one raw WISDM line: "subject,activity,timestamp,x,y,z;".
// Leading/trailing whitespace and the trailing semicolon are tolerated.
SensorReading parse_raw_line(const std::string& line, std::size_t line_no = 0);

// Inverse of parse_raw_line; round-trips exactly for finite values.
std::string serialize_reading(const SensorReading& r);

enum class SkipPolicy { Skip, Abort };

struct LoadResult {
    std::vector<SensorReading> readings;
    std::size_t skipped = 0;  // malformed lines dropped under SkipPolicy::Skip
};

LoadResult load_stream(const std::filesystem::path& path,
                       SkipPolicy policy = SkipPolicy::Skip);

// Parses in-memory text (same format as load_stream).
LoadResult parse_stream(const std::string& text, SkipPolicy policy = SkipPolicy::Skip);

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

// Partitions each (subject, activity) run into consecutive non-overlapping
// windows of exactly window_len samples; trailing remainders are discarded.
// Readings must be in stream order (file order) within each run.
std::vector<Window> segment_windows(const std::vector<SensorReading>& readings,
                                    DeviceSensor ds,
                                    std::size_t window_len = kWindowLen);

// Largest inter-sample timestamp delta per stream; used for the non-fatal
// gap audit logged by ingest.
struct GapAudit {
    std::int64_t max_gap_ns = 0;
    int subject_id = 0;
    char activity = 'A';
};
std::optional<GapAudit> audit_gaps(const std::vector<SensorReading>& readings);

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

// Per-class signal signature; the full table is printed by
// describe_synthetic_signatures() and reproduced in the README.
struct ClassSignature {
    std::string class_name;
    double base_freq_hz;   // sinusoid frequency
    double amplitude;      // x-axis amplitude
    double phase_y, phase_z;
    double offset_y, offset_z;
    double noise_sigma;
};

struct SynthesisOptions {
    std::size_t n_per_class = 1;        // streams (subjects) per class
    std::uint64_t seed = 7;
    std::size_t samples_per_stream = 3600;  // 180 s at 20 Hz
    DeviceSensor device_sensor{};
    // When non-empty, emit one stream per raw activity code instead of one
    // per merged class; eating variants get small frequency offsets so the
    // codes stay distinguishable.
    std::vector<char> activity_codes;
};

// The 15 class signatures as adjusted for a device/sensor pair.
std::vector<ClassSignature> synthetic_signatures(DeviceSensor ds);
std::string describe_synthetic_signatures(DeviceSensor ds);

// Deterministic 20 Hz triax streams; one stream per (subject, class).
// Subjects are numbered 1..n_per_class and each performs one 15-activity
// session, mirroring the collection protocol shape of the real dataset.
std::vector<SensorReading> synthesize_dataset(const SynthesisOptions& opts);

// Representative raw code for a class name (e.g. "eating" -> 'H').
char class_representative_code(const std::string& class_name);

// ---------------------------------------------------------------------------
// Labeled feature datasets and splits
// ---------------------------------------------------------------------------

enum class Provenance { Real, Synthetic };

struct LabeledDataset {
    std::vector<std::vector<double>> rows;  // feature vectors
    std::vector<std::string> labels;        // class name per row
    std::vector<std::string> feature_names;
    std::vector<std::string> class_set;     // ordered, 15 after merge
    Provenance provenance = Provenance::Synthetic;
    DeviceSensor device_sensor{};

    std::size_t size() const { return rows.size(); }
};

struct SplitIndices {
    std::vector<std::size_t> train, val, test;
};

// Stratified shuffled split. Global val/test sizes are floor(total * ratio)
// with all remainders going to train; within that budget classes are
// allocated by largest fractional remainder so per-class proportions stay
// within one row of the requested ratio. Throws EmptyClass when a class has
// fewer than 3 rows.
SplitIndices split_dataset(const std::vector<std::string>& labels,
                           const std::array<double, 3>& ratios,
                           std::uint64_t seed);

LabeledDataset take_rows(const LabeledDataset& ds, const std::vector<std::size_t>& idx);

// ---------------------------------------------------------------------------
// Window CSV + manifest
// ---------------------------------------------------------------------------

void write_windows_csv(const std::filesystem::path& path, const std::vector<Window>& windows);
std::vector<Window> read_windows_csv(const std::filesystem::path& path);

// JSON manifest with per-class / device / sensor counts.
void write_windows_manifest(const std::filesystem::path& path,
                            const std::vector<Window>& windows,
                            std::size_t skipped_lines);

} // namespace har::dataset
