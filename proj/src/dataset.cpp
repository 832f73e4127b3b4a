#include "har/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include <nlohmann/json.hpp>

#include "har/rng.hpp"

namespace har::dataset {

namespace {

struct ActivityInfo {
    char code;
    const char* description;
    const char* class_name;
};

// WISDM activity key. N is not assigned; H, I, J, L fold into "eating".
constexpr ActivityInfo kActivities[] = {
    {'A', "walking", "walking"},
    {'B', "jogging", "jogging"},
    {'C', "stairs", "stairs"},
    {'D', "sitting", "sitting"},
    {'E', "standing", "standing"},
    {'F', "typing", "typing"},
    {'G', "brushing teeth", "brushing"},
    {'H', "eating soup", "eating"},
    {'I', "eating chips", "eating"},
    {'J', "eating pasta", "eating"},
    {'K', "drinking from cup", "drinking"},
    {'L', "eating sandwich", "eating"},
    {'M', "kicking soccer ball", "kicking"},
    {'O', "playing catch", "catch"},
    {'P', "dribbling basketball", "dribbling"},
    {'Q', "writing", "writing"},
    {'R', "clapping", "clapping"},
    {'S', "folding clothes", "folding"},
};

const ActivityInfo* find_activity(char code) {
    for (const auto& a : kActivities)
        if (a.code == code) return &a;
    return nullptr;
}

} // namespace

bool is_valid_activity(char code) { return find_activity(code) != nullptr; }

std::string activity_description(char code) {
    const auto* a = find_activity(code);
    if (!a) throw UnknownActivity(std::string("unknown activity code '") + code + "'");
    return a->description;
}

const std::string& merge_eating_label(char code) {
    const auto* a = find_activity(code);
    if (!a) throw UnknownActivity(std::string("unknown activity code '") + code + "'");
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto& act : kActivities) v.emplace_back(act.class_name);
        return v;
    }();
    return names[static_cast<std::size_t>(a - kActivities)];
}

const std::string& merge_eating_label(const std::string& code_or_name) {
    if (code_or_name.size() == 1) return merge_eating_label(code_or_name[0]);
    const auto& classes = class_names();
    auto it = std::find(classes.begin(), classes.end(), code_or_name);
    if (it == classes.end()) throw UnknownActivity("unknown activity '" + code_or_name + "'");
    return *it;
}

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> v = [] {
        std::vector<std::string> out = non_hand_classes();
        const auto& hand = hand_classes();
        out.insert(out.end(), hand.begin(), hand.end());
        return out;
    }();
    return v;
}

const std::vector<std::string>& non_hand_classes() {
    static const std::vector<std::string> v = {"walking", "jogging",  "stairs",
                                               "sitting", "standing", "kicking"};
    return v;
}

const std::vector<std::string>& hand_classes() {
    static const std::vector<std::string> v = {"typing",  "brushing",  "drinking",
                                               "eating",  "catch",     "dribbling",
                                               "writing", "clapping",  "folding"};
    return v;
}

// ---------------------------------------------------------------------------

std::string DeviceSensor::str() const {
    return device_name(device) + "_" + sensor_name(sensor);
}

Device parse_device(const std::string& s) {
    if (s == "phone") return Device::Phone;
    if (s == "watch") return Device::Watch;
    throw ConfigError("unknown device '" + s + "' (expected phone|watch)");
}

Sensor parse_sensor(const std::string& s) {
    if (s == "accel") return Sensor::Accelerometer;
    if (s == "gyro") return Sensor::Gyroscope;
    throw ConfigError("unknown sensor '" + s + "' (expected accel|gyro)");
}

std::string device_name(Device d) { return d == Device::Phone ? "phone" : "watch"; }

std::string sensor_name(Sensor s) { return s == Sensor::Accelerometer ? "accel" : "gyro"; }

std::vector<double> Window::axis(std::size_t a) const {
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = samples[i][a];
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

double parse_double_field(std::string_view f, const char* what, std::size_t line_no) {
    f = trim(f);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size())
        throw MalformedRecord(std::string("unparsable ") + what + " '" + std::string(f) + "'", line_no);
    if (!std::isfinite(v))
        throw MalformedRecord(std::string(what) + " is not finite", line_no);
    return v;
}

std::int64_t parse_int_field(std::string_view f, const char* what, std::size_t line_no) {
    f = trim(f);
    std::int64_t v = 0;
    const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (ec != std::errc() || ptr != f.data() + f.size())
        throw MalformedRecord(std::string("unparsable ") + what + " '" + std::string(f) + "'", line_no);
    return v;
}

} // namespace

SensorReading parse_raw_line(const std::string& line, std::size_t line_no) {
    std::string_view s = trim(line);
    if (s.empty()) throw MalformedRecord("empty line", line_no);
    if (s.back() == ';') s.remove_suffix(1);

    std::array<std::string_view, 6> fields;
    std::size_t n = 0;
    while (true) {
        const auto comma = s.find(',');
        if (n == 6) throw MalformedRecord("too many fields", line_no);
        fields[n++] = comma == std::string_view::npos ? s : s.substr(0, comma);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    if (n != 6) throw MalformedRecord("expected 6 fields, got " + std::to_string(n), line_no);

    SensorReading r;
    r.subject_id = static_cast<int>(parse_int_field(fields[0], "subject id", line_no));
    const auto act = trim(fields[1]);
    if (act.size() != 1 || !is_valid_activity(act[0]))
        throw MalformedRecord("unknown activity code '" + std::string(act) + "'", line_no);
    r.activity = act[0];
    r.timestamp = parse_int_field(fields[2], "timestamp", line_no);
    r.x = parse_double_field(fields[3], "x", line_no);
    r.y = parse_double_field(fields[4], "y", line_no);
    r.z = parse_double_field(fields[5], "z", line_no);
    return r;
}

std::string serialize_reading(const SensorReading& r) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%d,%c,%lld,%.17g,%.17g,%.17g;", r.subject_id, r.activity,
                  static_cast<long long>(r.timestamp), r.x, r.y, r.z);
    return buf;
}

LoadResult parse_stream(const std::string& text, SkipPolicy policy) {
    LoadResult out;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            out.readings.push_back(parse_raw_line(line, line_no));
        } catch (const MalformedRecord&) {
            if (policy == SkipPolicy::Abort) throw;
            ++out.skipped;
        }
    }
    return out;
}

LoadResult load_stream(const std::filesystem::path& path, SkipPolicy policy) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_stream(ss.str(), policy);
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

std::vector<Window> segment_windows(const std::vector<SensorReading>& readings,
                                    DeviceSensor ds, std::size_t window_len) {
    std::vector<Window> out;
    std::size_t i = 0;
    while (i < readings.size()) {
        // One (subject, activity) run.
        std::size_t j = i;
        while (j < readings.size() && readings[j].subject_id == readings[i].subject_id &&
               readings[j].activity == readings[i].activity)
            ++j;
        for (std::size_t start = i; start + window_len <= j; start += window_len) {
            Window w;
            w.subject_id = readings[start].subject_id;
            w.activity = readings[start].activity;
            w.device_sensor = ds;
            w.start_timestamp = readings[start].timestamp;
            w.samples.reserve(window_len);
            for (std::size_t k = start; k < start + window_len; ++k)
                w.samples.push_back({readings[k].x, readings[k].y, readings[k].z});
            out.push_back(std::move(w));
        }
        i = j;
    }
    return out;
}

std::optional<GapAudit> audit_gaps(const std::vector<SensorReading>& readings) {
    std::optional<GapAudit> worst;
    for (std::size_t i = 1; i < readings.size(); ++i) {
        const auto& a = readings[i - 1];
        const auto& b = readings[i];
        if (a.subject_id != b.subject_id || a.activity != b.activity) continue;
        const std::int64_t gap = b.timestamp - a.timestamp;
        if (!worst || gap > worst->max_gap_ns)
            worst = GapAudit{gap, b.subject_id, b.activity};
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

std::vector<ClassSignature> synthetic_signatures(DeviceSensor ds) {
    const auto& classes = class_names();
    std::vector<ClassSignature> out;
    out.reserve(classes.size());
    // Device/sensor modifiers: the phone sits lower and damped in a pocket
    // (smaller swing, constant bias); gyro readings live on a rad/s scale.
    const double dev_amp = ds.device == Device::Phone ? 0.6 : 1.0;
    const double dev_off = ds.device == Device::Phone ? 0.8 : 0.0;
    const double sen_amp = ds.sensor == Sensor::Gyroscope ? 0.4 : 1.0;
    const double sen_freq = ds.sensor == Sensor::Gyroscope ? 1.1 : 1.0;
    for (std::size_t k = 0; k < classes.size(); ++k) {
        ClassSignature sig;
        sig.class_name = classes[k];
        sig.base_freq_hz = (0.4 + 0.25 * static_cast<double>(k)) * sen_freq;
        sig.amplitude = (0.7 + 0.40 * static_cast<double>(k)) * dev_amp * sen_amp;
        sig.phase_y = 1.0 + 0.10 * static_cast<double>(k);
        sig.phase_z = 2.0 + 0.15 * static_cast<double>(k);
        sig.offset_y = 0.35 * static_cast<double>(k) * dev_amp * sen_amp + dev_off;
        sig.offset_z = -0.20 * static_cast<double>(k) * dev_amp * sen_amp + dev_off;
        sig.noise_sigma = 0.015 * sig.amplitude + 0.008;
        out.push_back(std::move(sig));
    }
    return out;
}

std::string describe_synthetic_signatures(DeviceSensor ds) {
    std::ostringstream os;
    os << "class,freq_hz,amplitude,phase_y,phase_z,offset_y,offset_z,noise_sigma\n";
    for (const auto& s : synthetic_signatures(ds)) {
        char buf[200];
        std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f,%.4f\n",
                      s.class_name.c_str(), s.base_freq_hz, s.amplitude, s.phase_y, s.phase_z,
                      s.offset_y, s.offset_z, s.noise_sigma);
        os << buf;
    }
    return os.str();
}

char class_representative_code(const std::string& class_name) {
    for (const auto& a : kActivities)
        if (class_name == a.class_name) return a.code;
    throw UnknownActivity("unknown class '" + class_name + "'");
}

namespace {

// Position of a code among the codes mapping to the same class (H=0, I=1,
// J=2, L=3 inside "eating"; 0 for single-code classes).
std::size_t code_variant_index(char code) {
    const auto* target = find_activity(code);
    std::size_t idx = 0;
    for (const auto& a : kActivities) {
        if (a.code == code) return idx;
        if (std::string_view(a.class_name) == target->class_name) ++idx;
    }
    return 0;
}

void emit_stream(std::vector<SensorReading>& out, const ClassSignature& sig, char code,
                 std::size_t subj, std::size_t stream_ordinal, const SynthesisOptions& opts) {
    const double dt = 1.0 / kSampleRateHz;
    const std::int64_t step_ns = 50'000'000;  // 50 ms
    Rng rng(derive_seed(opts.seed, "synth/" + opts.device_sensor.str() + "/" + std::string(1, code) +
                                       "/" + std::to_string(subj)));
    // Small per-subject variation keeps streams distinct without blurring
    // the class signature; eating variants shift frequency slightly.
    const std::size_t variant = code_variant_index(code);
    const double freq = sig.base_freq_hz * (1.0 + 0.07 * static_cast<double>(variant));
    const double amp =
        sig.amplitude * (1.0 + 0.05 * static_cast<double>(variant)) * (1.0 + 0.02 * rng.normal());
    const double phase0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const std::int64_t t0 = static_cast<std::int64_t>(subj) * 1'000'000'000'000 +
                            static_cast<std::int64_t>(stream_ordinal) * 1'000'000'000;
    for (std::size_t i = 0; i < opts.samples_per_stream; ++i) {
        const double t = static_cast<double>(i) * dt;
        const double w = 2.0 * std::numbers::pi * freq * t;
        SensorReading r;
        r.subject_id = static_cast<int>(subj);
        r.activity = code;
        r.timestamp = t0 + static_cast<std::int64_t>(i) * step_ns;
        r.x = amp * std::sin(w + phase0) + sig.noise_sigma * rng.normal();
        r.y = 0.75 * amp * std::sin(w + phase0 + sig.phase_y) + sig.offset_y +
              sig.noise_sigma * rng.normal();
        r.z = 1.25 * amp * std::sin(w + phase0 + sig.phase_z) + sig.offset_z +
              sig.noise_sigma * rng.normal();
        out.push_back(r);
    }
}

} // namespace

std::vector<SensorReading> synthesize_dataset(const SynthesisOptions& opts) {
    if (opts.n_per_class < 1) throw ConfigError("n_per_class must be >= 1");
    const auto sigs = synthetic_signatures(opts.device_sensor);
    const auto& classes = class_names();
    const auto signature_of = [&](const std::string& cls) -> const ClassSignature& {
        for (const auto& s : sigs)
            if (s.class_name == cls) return s;
        throw UnknownActivity("no signature for class '" + cls + "'");
    };

    std::vector<SensorReading> out;
    for (std::size_t subj = 1; subj <= opts.n_per_class; ++subj) {
        if (!opts.activity_codes.empty()) {
            for (std::size_t k = 0; k < opts.activity_codes.size(); ++k) {
                const char code = opts.activity_codes[k];
                if (!is_valid_activity(code))
                    throw UnknownActivity(std::string("unknown activity code '") + code + "'");
                emit_stream(out, signature_of(merge_eating_label(code)), code, subj, k, opts);
            }
        } else {
            for (std::size_t k = 0; k < classes.size(); ++k)
                emit_stream(out, signature_of(classes[k]), class_representative_code(classes[k]),
                            subj, k, opts);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------

SplitIndices split_dataset(const std::vector<std::string>& labels,
                           const std::array<double, 3>& ratios, std::uint64_t seed) {
    const double sum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split ratios must sum to 1, got " + std::to_string(sum));
    const std::size_t total = labels.size();

    // Group row indices per class, deterministically ordered by class name.
    std::map<std::string, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (const auto& [name, rows] : by_class)
        if (rows.size() < 3)
            throw EmptyClass("class '" + name + "' has only " + std::to_string(rows.size()) +
                             " rows; need at least 3");

    Rng rng(seed);
    for (auto& [name, rows] : by_class) rng.shuffle(rows);

    // Global budgets are floor-based; remainders stay in train.
    const std::size_t want_val = static_cast<std::size_t>(std::floor(static_cast<double>(total) * ratios[1]));
    const std::size_t want_test = static_cast<std::size_t>(std::floor(static_cast<double>(total) * ratios[2]));

    // Per-class allocation for one holdout: floor everywhere, then hand the
    // remaining budget to the classes with the largest fractional parts.
    const auto allocate = [&](double ratio, std::size_t budget,
                              const std::map<std::string, std::size_t>& already) {
        std::map<std::string, std::size_t> alloc;
        std::vector<std::pair<double, std::string>> frac;
        std::size_t used = 0;
        for (const auto& [name, rows] : by_class) {
            const double exact = static_cast<double>(rows.size()) * ratio;
            auto base = static_cast<std::size_t>(std::floor(exact));
            const std::size_t avail = rows.size() - already.at(name);
            base = std::min(base, avail);
            alloc[name] = base;
            used += base;
            frac.emplace_back(exact - std::floor(exact), name);
        }
        std::sort(frac.begin(), frac.end(), [](const auto& a, const auto& b) {
            return a.first != b.first ? a.first > b.first : a.second < b.second;
        });
        for (const auto& [f, name] : frac) {
            if (used >= budget) break;
            if (alloc[name] < by_class[name].size() - already.at(name)) {
                ++alloc[name];
                ++used;
            }
        }
        return alloc;
    };

    std::map<std::string, std::size_t> none;
    for (const auto& [name, rows] : by_class) none[name] = 0;
    const auto test_alloc = allocate(ratios[2], want_test, none);
    std::map<std::string, std::size_t> taken = test_alloc;
    const auto val_alloc = allocate(ratios[1], want_val, taken);

    SplitIndices out;
    for (const auto& [name, rows] : by_class) {
        const std::size_t n_test = test_alloc.at(name);
        const std::size_t n_val = val_alloc.at(name);
        for (std::size_t i = 0; i < rows.size(); ++i) {
            if (i < n_test)
                out.test.push_back(rows[i]);
            else if (i < n_test + n_val)
                out.val.push_back(rows[i]);
            else
                out.train.push_back(rows[i]);
        }
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.val.begin(), out.val.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

LabeledDataset take_rows(const LabeledDataset& ds, const std::vector<std::size_t>& idx) {
    LabeledDataset out;
    out.feature_names = ds.feature_names;
    out.class_set = ds.class_set;
    out.provenance = ds.provenance;
    out.device_sensor = ds.device_sensor;
    out.rows.reserve(idx.size());
    out.labels.reserve(idx.size());
    for (auto i : idx) {
        out.rows.push_back(ds.rows.at(i));
        out.labels.push_back(ds.labels.at(i));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Window CSV + manifest
// ---------------------------------------------------------------------------

void write_windows_csv(const std::filesystem::path& path, const std::vector<Window>& windows) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << "subject,activity,device,sensor,start_timestamp";
    const std::size_t len = windows.empty() ? kWindowLen : windows.front().samples.size();
    for (std::size_t i = 0; i < len; ++i)
        out << ",x" << i << ",y" << i << ",z" << i;
    out << "\n";
    char buf[64];
    for (const auto& w : windows) {
        out << w.subject_id << ',' << w.activity << ',' << device_name(w.device_sensor.device)
            << ',' << sensor_name(w.device_sensor.sensor) << ',' << w.start_timestamp;
        for (const auto& s : w.samples) {
            for (double v : s) {
                std::snprintf(buf, sizeof(buf), ",%.17g", v);
                out << buf;
            }
        }
        out << "\n";
    }
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<Window> read_windows_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty windows file " + path.string());

    std::vector<Window> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::vector<std::string_view> fields;
        std::string_view s = line;
        while (true) {
            const auto comma = s.find(',');
            fields.push_back(comma == std::string_view::npos ? s : s.substr(0, comma));
            if (comma == std::string_view::npos) break;
            s.remove_prefix(comma + 1);
        }
        if (fields.size() < 5 || (fields.size() - 5) % 3 != 0)
            throw MalformedRecord("bad windows row width " + std::to_string(fields.size()), line_no);
        Window w;
        w.subject_id = static_cast<int>(parse_int_field(fields[0], "subject", line_no));
        const auto act = trim(fields[1]);
        if (act.size() != 1 || !is_valid_activity(act[0]))
            throw MalformedRecord("unknown activity code", line_no);
        w.activity = act[0];
        w.device_sensor.device = parse_device(std::string(trim(fields[2])));
        w.device_sensor.sensor = parse_sensor(std::string(trim(fields[3])));
        w.start_timestamp = parse_int_field(fields[4], "start_timestamp", line_no);
        const std::size_t n = (fields.size() - 5) / 3;
        w.samples.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::array<double, 3> tri{};
            for (std::size_t a = 0; a < 3; ++a)
                tri[a] = parse_double_field(fields[5 + 3 * i + a], "sample", line_no);
            w.samples.push_back(tri);
        }
        out.push_back(std::move(w));
    }
    return out;
}

void write_windows_manifest(const std::filesystem::path& path,
                            const std::vector<Window>& windows, std::size_t skipped_lines) {
    nlohmann::json counts_by_class = nlohmann::json::object();
    nlohmann::json counts_by_stream = nlohmann::json::object();
    for (const auto& w : windows) {
        const std::string cls = merge_eating_label(w.activity);
        counts_by_class[cls] = counts_by_class.value(cls, 0) + 1;
        const std::string key = w.device_sensor.str();
        counts_by_stream[key] = counts_by_stream.value(key, 0) + 1;
    }
    nlohmann::json j{{"windows", windows.size()},
                     {"skipped_lines", skipped_lines},
                     {"counts_by_class", counts_by_class},
                     {"counts_by_device_sensor", counts_by_stream}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

} // namespace har::dataset
