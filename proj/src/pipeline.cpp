#include "har/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "har/features.hpp"
#include "har/rng.hpp"

namespace har::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

RunConfig demo_config(std::uint64_t seed) {
    RunConfig cfg;
    cfg.synthetic = true;
    cfg.seed = seed;
    cfg.epochs = 8;
    cfg.windows_per_class = 18;
    cfg.forecast_epochs = 6;
    cfg.forecast_train_stride = 2;
    return cfg;
}

std::uint64_t hash_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash missing file " + path.string());
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(in.gcount()), h);
    return h;
}

// ---------------------------------------------------------------------------
// StageLedger
// ---------------------------------------------------------------------------

StageLedger::StageLedger(fs::path work_dir)
    : work_dir_(std::move(work_dir)), manifest_path_(work_dir_ / "run_manifest.json") {
    if (!fs::exists(manifest_path_)) return;
    std::ifstream in(manifest_path_);
    if (!in) return;
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception&) {
        return;  // stale/corrupt manifest just disables skipping
    }
    const json stages = j.value("stages", json::object());
    for (const auto& [stage, entry] : stages.items()) {
        auto& slot = stages_[stage];
        slot.first = entry.value("key", std::uint64_t{0});
        const json outputs = entry.value("outputs", json::object());
        for (const auto& [file, hash] : outputs.items())
            slot.second[file] = hash.get<std::uint64_t>();
    }
}

bool StageLedger::up_to_date(const std::string& stage, std::uint64_t key,
                             const std::vector<fs::path>& outputs) const {
    const auto it = stages_.find(stage);
    if (it == stages_.end() || it->second.first != key) return false;
    for (const auto& out : outputs) {
        const std::string rel = fs::relative(out, work_dir_).generic_string();
        const auto oit = it->second.second.find(rel);
        if (oit == it->second.second.end()) return false;
        if (!fs::exists(out) || hash_file(out) != oit->second) return false;
    }
    return true;
}

void StageLedger::record(const std::string& stage, std::uint64_t key,
                         const std::vector<fs::path>& outputs) {
    auto& slot = stages_[stage];
    slot.first = key;
    slot.second.clear();
    for (const auto& out : outputs)
        slot.second[fs::relative(out, work_dir_).generic_string()] = hash_file(out);
}

void StageLedger::save() const {
    json j;
    j["format"] = "harforge-run-manifest-v1";
    json stages = json::object();
    for (const auto& [stage, entry] : stages_) {
        json outputs = json::object();
        for (const auto& [file, hash] : entry.second) outputs[file] = hash;
        stages[stage] = {{"key", entry.first}, {"outputs", outputs}};
    }
    j["stages"] = stages;
    std::ofstream out(manifest_path_);
    if (!out) throw IoError("cannot write " + manifest_path_.string());
    out << j.dump(2) << "\n";
}

std::vector<std::pair<std::string, std::uint64_t>> StageLedger::artifact_hashes() const {
    std::vector<std::pair<std::string, std::uint64_t>> out;
    for (const auto& [stage, entry] : stages_)
        for (const auto& [file, hash] : entry.second) out.emplace_back(file, hash);
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------------------------------------------------------------------
// Train / evaluate helpers
// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> labels_to_indices(const dataset::LabeledDataset& ds) {
    std::map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < ds.class_set.size(); ++i) index[ds.class_set[i]] = i;
    std::vector<std::size_t> out;
    out.reserve(ds.labels.size());
    for (const auto& l : ds.labels) {
        const auto it = index.find(l);
        if (it == index.end()) throw UnknownLabel("label '" + l + "' not in class set");
        out.push_back(it->second);
    }
    return out;
}

std::vector<std::vector<double>> gather(const std::vector<std::vector<double>>& rows,
                                        const std::vector<std::size_t>& idx) {
    std::vector<std::vector<double>> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(rows[i]);
    return out;
}

template <typename T>
std::vector<T> gather_v(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(v[i]);
    return out;
}

} // namespace

TrainArtifacts train_on_features(const dataset::LabeledDataset& ds, const std::string& arch,
                                 std::uint64_t seed, std::size_t epochs_override,
                                 const std::array<double, 3>& ratios) {
    const std::uint64_t split_seed = derive_seed(seed, "split");
    const auto split = dataset::split_dataset(ds.labels, ratios, split_seed);
    const auto label_idx = labels_to_indices(ds);

    TrainArtifacts art;
    art.model.spec = models::build_classifier(arch, ds.feature_names.size());
    models::validate_spec(art.model.spec);
    art.model.class_set = ds.class_set;
    art.model.feature_names = ds.feature_names;
    art.model.init_seed = derive_seed(seed, "init/" + art.model.spec.name);
    art.model.split_seed = split_seed;
    art.model.split_ratios = ratios;

    art.model.scaler.fit(gather(ds.rows, split.train));
    const auto train_rows = art.model.scaler.apply_all(gather(ds.rows, split.train));
    const auto val_rows = art.model.scaler.apply_all(gather(ds.rows, split.val));

    art.model.net = models::instantiate(art.model.spec, art.model.init_seed);
    models::TrainOptions opts;
    opts.max_epochs = epochs_override;
    art.history = models::train_classifier(
        art.model.net, art.model.spec, train_rows, gather_v(label_idx, split.train), val_rows,
        gather_v(label_idx, split.val), derive_seed(seed, "train/" + art.model.spec.name), opts);
    art.model.epochs_trained = art.history.stop_epoch;
    return art;
}

eval::ClassificationReport evaluate_checkpoint(models::TrainedModel& model,
                                               const dataset::LabeledDataset& ds,
                                               const std::string& split) {
    if (ds.feature_names != model.feature_names)
        throw DataError("feature columns do not match the checkpoint");
    std::vector<std::size_t> idx;
    if (split == "all") {
        idx.resize(ds.size());
        std::iota(idx.begin(), idx.end(), 0);
    } else {
        const auto parts = dataset::split_dataset(ds.labels, model.split_ratios, model.split_seed);
        if (split == "train")
            idx = parts.train;
        else if (split == "val")
            idx = parts.val;
        else if (split == "test")
            idx = parts.test;
        else
            throw ConfigError("unknown split '" + split + "' (expected train|val|test|all)");
    }

    const auto rows = model.scaler.apply_all(gather(ds.rows, idx));
    const auto pred_idx = models::classify(model.net, model.spec, rows);
    std::vector<std::string> preds;
    preds.reserve(pred_idx.size());
    for (auto p : pred_idx) preds.push_back(model.class_set.at(p));
    return eval::classification_report(gather_v(ds.labels, idx), preds, model.class_set);
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

namespace {

struct PipelineState {
    RunConfig cfg;
    StageLedger ledger;
    std::map<std::string, fs::path> raw_files;      // device_sensor -> path
    std::map<std::string, fs::path> window_files;   // device_sensor -> path
    std::map<std::string, fs::path> feature_files;  // source -> path
};

std::string config_fingerprint(const RunConfig& cfg) {
    std::ostringstream os;
    os << cfg.seed << '|' << cfg.synthetic << '|' << dataset::device_name(cfg.device) << '|'
       << dataset::sensor_name(cfg.sensor) << '|' << cfg.drop_feature << '|' << cfg.ratios[0]
       << ',' << cfg.ratios[1] << ',' << cfg.ratios[2] << '|' << cfg.epochs << '|'
       << cfg.windows_per_class << '|' << cfg.forecast_epochs << '|' << cfg.forecast_train_stride;
    return os.str();
}

void write_raw_file(const fs::path& path, const std::vector<dataset::SensorReading>& readings) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& r : readings) out << dataset::serialize_reading(r) << "\n";
    if (!out) throw IoError("failed writing " + path.string());
}

// Locates the directory of raw .txt streams for a device/sensor inside a
// WISDM-style tree (raw/<device>/<sensor>/), falling back to a flat dir.
fs::path locate_raw_dir(const fs::path& root, dataset::DeviceSensor ds) {
    const std::string dev = dataset::device_name(ds.device);
    const std::string sen = dataset::sensor_name(ds.sensor);
    const fs::path candidates[] = {root / "raw" / dev / sen, root / dev / sen,
                                   root / (dev + "_" + sen), root};
    for (const auto& candidate : candidates)
        if (fs::is_directory(candidate)) return candidate;
    throw DataError("no raw data directory for " + dev + "/" + sen + " under " + root.string());
}

std::vector<dataset::SensorReading> load_raw_dir(const fs::path& dir,
                                                 std::size_t* skipped_out) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DataError("no .txt raw files in " + dir.string());
    std::vector<dataset::SensorReading> all;
    std::size_t skipped = 0;
    for (const auto& f : files) {
        auto res = dataset::load_stream(f, dataset::SkipPolicy::Skip);
        skipped += res.skipped;
        all.insert(all.end(), res.readings.begin(), res.readings.end());
    }
    if (skipped_out) *skipped_out = skipped;
    return all;
}

// Synthesize (or ingest) + window one device/sensor stream set.
void stage_ingest(PipelineState& st, dataset::DeviceSensor ds) {
    const std::string tag = ds.str();
    if (st.window_files.count(tag)) return;
    const RunConfig& cfg = st.cfg;

    const fs::path raw_path = cfg.work_dir / ("raw_" + tag + ".txt");
    const fs::path windows_path = cfg.work_dir / ("windows_" + tag + ".csv");
    const fs::path manifest_path = cfg.work_dir / ("windows_" + tag + ".manifest.json");

    const std::size_t n_per_class =
        (cfg.windows_per_class * dataset::kWindowLen + 3599) / 3600;  // 18 windows per stream

    std::uint64_t key = fnv1a("ingest/" + tag + "/" + config_fingerprint(cfg));
    if (!cfg.synthetic) {
        const fs::path src = locate_raw_dir(cfg.raw_dir, ds);
        key = fnv1a(src.string(), key);
        for (const auto& entry : fs::directory_iterator(src))
            if (entry.is_regular_file()) key = fnv1a(entry.path().filename().string(), key);
    }

    const std::vector<fs::path> outputs = cfg.synthetic
                                              ? std::vector<fs::path>{raw_path, windows_path, manifest_path}
                                              : std::vector<fs::path>{windows_path, manifest_path};
    if (st.ledger.up_to_date("ingest/" + tag, key, outputs)) {
        std::cerr << "[skip] ingest " << tag << "\n";
    } else {
        std::vector<dataset::SensorReading> readings;
        std::size_t skipped = 0;
        if (cfg.synthetic) {
            dataset::SynthesisOptions opts;
            opts.n_per_class = n_per_class;
            opts.seed = cfg.seed;
            opts.device_sensor = ds;
            readings = dataset::synthesize_dataset(opts);
            write_raw_file(raw_path, readings);
        } else {
            readings = load_raw_dir(locate_raw_dir(cfg.raw_dir, ds), &skipped);
        }
        const auto windows = dataset::segment_windows(readings, ds);
        if (const auto audit = dataset::audit_gaps(readings); audit && audit->max_gap_ns > 100'000'000)
            std::cerr << "[warn] max inter-sample gap " << audit->max_gap_ns << " ns (subject "
                      << audit->subject_id << ", activity " << audit->activity << ")\n";
        dataset::write_windows_csv(windows_path, windows);
        dataset::write_windows_manifest(manifest_path, windows, skipped);
        st.ledger.record("ingest/" + tag, key, outputs);
        std::cerr << "[done] ingest " << tag << ": " << windows.size() << " windows\n";
    }
    if (cfg.synthetic) st.raw_files[tag] = raw_path;
    st.window_files[tag] = windows_path;
}

void stage_featurize(PipelineState& st, const std::string& source) {
    if (st.feature_files.count(source)) return;
    const RunConfig& cfg = st.cfg;
    const fs::path out_path = cfg.work_dir / ("features_" + source + ".csv");

    const dataset::DeviceSensor accel{cfg.device, dataset::Sensor::Accelerometer};
    const dataset::DeviceSensor gyro{cfg.device, dataset::Sensor::Gyroscope};

    std::vector<fs::path> inputs;
    if (source == "accel") {
        stage_ingest(st, accel);
        inputs = {st.window_files.at(accel.str())};
    } else if (source == "gyro") {
        stage_ingest(st, gyro);
        inputs = {st.window_files.at(gyro.str())};
    } else if (source == "both") {
        stage_ingest(st, accel);
        stage_ingest(st, gyro);
        inputs = {st.window_files.at(accel.str()), st.window_files.at(gyro.str())};
    } else {
        throw ConfigError("unknown source '" + source + "' (expected accel|gyro|both)");
    }

    std::uint64_t key = fnv1a("featurize/" + source + "/" + cfg.drop_feature);
    for (const auto& in : inputs) key = fnv1a(std::to_string(hash_file(in)), key);

    if (st.ledger.up_to_date("featurize/" + source, key, {out_path})) {
        std::cerr << "[skip] featurize " << source << "\n";
    } else {
        const auto provenance =
            cfg.synthetic ? dataset::Provenance::Synthetic : dataset::Provenance::Real;
        dataset::LabeledDataset ds;
        if (source == "both") {
            ds = features::concat_aligned(dataset::read_windows_csv(inputs[0]),
                                          dataset::read_windows_csv(inputs[1]), cfg.drop_feature);
            ds.provenance = provenance;
        } else {
            ds = features::featurize_windows(dataset::read_windows_csv(inputs[0]),
                                             cfg.drop_feature, provenance);
        }
        features::write_features_csv(out_path.string(), ds);
        st.ledger.record("featurize/" + source, key, {out_path});
        std::cerr << "[done] featurize " << source << ": " << ds.size() << " rows x "
                  << ds.feature_names.size() << " features\n";
    }
    st.feature_files[source] = out_path;
}

void stage_mancova(PipelineState& st) {
    const RunConfig& cfg = st.cfg;
    const dataset::DeviceSensor phone{dataset::Device::Phone, cfg.sensor};
    const dataset::DeviceSensor watch{dataset::Device::Watch, cfg.sensor};
    stage_ingest(st, phone);
    stage_ingest(st, watch);

    const fs::path out_path =
        cfg.work_dir / ("mancova_" + dataset::sensor_name(cfg.sensor) + ".json");
    std::uint64_t key = fnv1a("mancova/" + dataset::sensor_name(cfg.sensor));
    key = fnv1a(std::to_string(hash_file(st.window_files.at(phone.str()))), key);
    key = fnv1a(std::to_string(hash_file(st.window_files.at(watch.str()))), key);

    if (st.ledger.up_to_date("mancova", key, {out_path})) {
        std::cerr << "[skip] mancova\n";
        return;
    }

    const auto to_rows = [&](dataset::DeviceSensor d) {
        const auto readings = cfg.synthetic
                                  ? dataset::load_stream(st.raw_files.at(d.str()),
                                                         dataset::SkipPolicy::Skip)
                                        .readings
                                  : load_raw_dir(locate_raw_dir(cfg.raw_dir, d), nullptr);
        std::vector<std::vector<double>> rows;
        rows.reserve(readings.size());
        for (const auto& r : readings) rows.push_back({r.x, r.y, r.z});
        return rows;
    };
    const auto rep = stats::device_difference_report(to_rows(phone), to_rows(watch),
                                                     dataset::sensor_name(cfg.sensor));
    json j{{"sensor", dataset::sensor_name(cfg.sensor)},
           {"lambda", rep.wilks.lambda},
           {"f_stat", rep.wilks.f_stat},
           {"df1", rep.wilks.df1},
           {"df2", rep.wilks.df2},
           {"p_value", rep.wilks.p_value},
           {"alpha", rep.alpha},
           {"reject_null", rep.reject_null},
           {"summary", rep.summary}};
    std::ofstream out(out_path);
    if (!out) throw IoError("cannot write " + out_path.string());
    out << j.dump(2) << "\n";
    out.close();
    st.ledger.record("mancova", key, {out_path});
    std::cerr << "[done] mancova: " << rep.summary << "\n";
}

json report_to_json(const eval::ClassificationReport& rep) {
    json per_class = json::object();
    for (const auto& m : rep.per_class)
        per_class[m.label] = {{"precision", m.precision},
                              {"recall", m.recall},
                              {"f1", m.f1},
                              {"tp", m.tp},
                              {"fp", m.fp},
                              {"fn", m.fn}};
    return {{"macro_f1", rep.macro_f1},
            {"micro_accuracy", rep.micro_accuracy},
            {"total", rep.total},
            {"per_class", per_class},
            {"confusion", rep.confusion},
            {"degenerate_classes", rep.degenerate_classes}};
}

void stage_train_eval(PipelineState& st, const std::string& arch, const std::string& source) {
    const RunConfig& cfg = st.cfg;
    stage_featurize(st, source);
    const fs::path features_path = st.feature_files.at(source);
    const std::string tag = arch + "_" + source;

    fs::create_directories(cfg.work_dir / "models");
    fs::create_directories(cfg.work_dir / "eval");
    const fs::path ckpt_base = cfg.work_dir / "models" / tag;
    const fs::path ckpt_json = ckpt_base.string() + ".json";
    const fs::path ckpt_bin = ckpt_base.string() + ".bin";
    const fs::path eval_path = cfg.work_dir / "eval" / (tag + ".json");

    std::uint64_t key = fnv1a("train/" + tag + "/" + std::to_string(cfg.epochs) + "/" +
                              std::to_string(cfg.seed));
    key = fnv1a(std::to_string(hash_file(features_path)), key);

    if (st.ledger.up_to_date("train/" + tag, key, {ckpt_json, ckpt_bin, eval_path})) {
        std::cerr << "[skip] train " << tag << "\n";
        return;
    }

    const auto ds = features::read_features_csv(features_path.string());
    auto art = train_on_features(ds, arch, derive_seed(cfg.seed, "source/" + source), cfg.epochs,
                                 cfg.ratios);
    models::save_checkpoint(ckpt_base, art.model, art.history);

    const auto rep = evaluate_checkpoint(art.model, ds, "test");
    json j{{"arch", art.model.spec.name},
           {"source", source},
           {"epochs_trained", art.model.epochs_trained},
           {"stop_reason", art.history.stop_reason == models::StopReason::ConvergedRule
                               ? "converged_rule"
                               : "max_epochs"},
           {"report", report_to_json(rep)}};
    std::ofstream out(eval_path);
    if (!out) throw IoError("cannot write " + eval_path.string());
    out << j.dump(2) << "\n";
    out.close();

    st.ledger.record("train/" + tag, key, {ckpt_json, ckpt_bin, eval_path});
    std::cerr << "[done] train " << tag << ": " << art.model.epochs_trained
              << " epochs, test Macro-F1 " << rep.macro_f1 << "\n";
}

void stage_forecast(PipelineState& st, char code) {
    const RunConfig& cfg = st.cfg;
    const dataset::DeviceSensor ds{cfg.device, cfg.sensor};
    fs::create_directories(cfg.work_dir / "forecast");
    const fs::path csv_path = cfg.work_dir / "forecast" / (std::string(1, code) + ".csv");
    const fs::path json_path = cfg.work_dir / "forecast" / (std::string(1, code) + ".json");

    models::ForecastOptions opts;
    opts.epochs = cfg.forecast_epochs;
    opts.train_stride = cfg.forecast_train_stride;
    opts.seed = derive_seed(cfg.seed, "forecast/" + std::string(1, code));

    std::uint64_t key = fnv1a("forecast/" + std::string(1, code) + "/" +
                              std::to_string(opts.epochs) + "/" + std::to_string(opts.seed) + "/" +
                              std::to_string(opts.train_stride) + "/" + ds.str());
    std::vector<dataset::SensorReading> readings;
    if (cfg.synthetic) {
        dataset::SynthesisOptions sopts;
        sopts.n_per_class = 1;
        sopts.seed = derive_seed(cfg.seed, "forecast-data");
        sopts.samples_per_stream = opts.train_len + opts.horizon;
        sopts.device_sensor = ds;
        sopts.activity_codes = {code};
        readings = dataset::synthesize_dataset(sopts);
        key = fnv1a(std::to_string(sopts.seed), key);
    } else {
        readings = load_raw_dir(locate_raw_dir(cfg.raw_dir, ds), nullptr);
        key = fnv1a(cfg.raw_dir.string(), key);
    }

    if (st.ledger.up_to_date("forecast/" + std::string(1, code), key, {csv_path, json_path})) {
        std::cerr << "[skip] forecast " << code << "\n";
        return;
    }

    // First stream of this activity long enough for context + horizon.
    std::vector<std::array<double, 3>> stream;
    {
        std::size_t i = 0;
        while (i < readings.size()) {
            std::size_t j = i;
            while (j < readings.size() && readings[j].subject_id == readings[i].subject_id &&
                   readings[j].activity == readings[i].activity)
                ++j;
            if (readings[i].activity == code && j - i >= opts.train_len + opts.horizon) {
                for (std::size_t k = i; k < j; ++k)
                    stream.push_back({readings[k].x, readings[k].y, readings[k].z});
                break;
            }
            i = j;
        }
    }
    if (stream.empty())
        throw DataError(std::string("no stream of activity ") + code + " with at least " +
                        std::to_string(opts.train_len + opts.horizon) + " samples");

    const auto result = models::forecast_stream(stream, opts);
    const auto metrics = eval::forecast_metrics(result.actual, result.predicted);

    std::ofstream csv(csv_path);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    csv << "step,actual_x,actual_y,actual_z,pred_x,pred_y,pred_z\n";
    char buf[256];
    for (std::size_t i = 0; i < result.predicted.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", i,
                      result.actual[i][0], result.actual[i][1], result.actual[i][2],
                      result.predicted[i][0], result.predicted[i][1], result.predicted[i][2]);
        csv << buf;
    }
    csv.close();

    const std::string label =
        std::string(1, code) + " (" + dataset::activity_description(code) + ")";
    json j{{"activity", std::string(1, code)},
           {"label", label},
           {"device", dataset::device_name(cfg.device)},
           {"sensor", dataset::sensor_name(cfg.sensor)},
           {"rmse", metrics.rmse},
           {"mse", metrics.mse},
           {"mape", metrics.mape},
           {"smape", metrics.smape},
           {"mape_excluded", metrics.mape_excluded},
           {"mape_defined", metrics.mape_defined}};
    std::ofstream jf(json_path);
    if (!jf) throw IoError("cannot write " + json_path.string());
    jf << j.dump(2) << "\n";
    jf.close();

    st.ledger.record("forecast/" + std::string(1, code), key, {csv_path, json_path});
    std::cerr << "[done] forecast " << code << ": RMSE " << metrics.rmse << "\n";
}

void stage_report(PipelineState& st) {
    const RunConfig& cfg = st.cfg;
    eval::EvalArtifacts art;

    // Paper ordering: convolutional-input models first.
    const std::vector<std::string> canonical{"CNN", "BiLSTM", "ConvLSTM", "LSTM"};
    std::map<std::string, std::string> arch_display;
    for (const auto& a : cfg.archs) arch_display[a] = models::build_classifier(a, 45).name;
    for (const auto& name : canonical)
        for (const auto& [a, disp] : arch_display)
            if (disp == name) art.models.push_back(name);

    const std::map<std::string, std::string> source_display{
        {"accel", "Accelerometer"}, {"gyro", "Gyroscope"}, {"both", "Both"}};
    for (const auto& s : {"accel", "gyro", "both"})
        if (std::find(cfg.sources.begin(), cfg.sources.end(), s) != cfg.sources.end())
            art.sources.push_back(source_display.at(s));

    std::vector<fs::path> inputs;
    for (const auto& arch : cfg.archs) {
        const std::string display = arch_display.at(arch);
        for (const auto& source : cfg.sources) {
            const fs::path eval_path = cfg.work_dir / "eval" / (arch + "_" + source + ".json");
            if (!fs::exists(eval_path)) continue;
            inputs.push_back(eval_path);
            std::ifstream in(eval_path);
            const json j = json::parse(in);
            art.macro_f1[display][source_display.at(source)] =
                j.at("report").at("macro_f1").get<double>();
            if (source == "accel") {
                for (const auto& [cls, m] : j.at("report").at("per_class").items())
                    art.precision[display][cls] = m.at("precision").get<double>();
            }
        }
    }
    if (cfg.run_forecast) {
        for (char code : cfg.forecast_activities) {
            const fs::path p = cfg.work_dir / "forecast" / (std::string(1, code) + ".json");
            if (!fs::exists(p)) continue;
            inputs.push_back(p);
            std::ifstream in(p);
            const json j = json::parse(in);
            eval::ForecastRow row;
            row.activity_code = code;
            row.label = j.at("label").get<std::string>();
            row.metrics.rmse = j.at("rmse").get<double>();
            row.metrics.mse = j.at("mse").get<double>();
            row.metrics.mape = j.at("mape").get<double>();
            row.metrics.smape = j.at("smape").get<double>();
            row.metrics.mape_excluded = j.at("mape_excluded").get<std::size_t>();
            art.forecasts.push_back(std::move(row));
        }
    }

    std::uint64_t key = fnv1a("report");
    for (const auto& in : inputs) key = fnv1a(std::to_string(hash_file(in)), key);
    const std::vector<fs::path> outputs{
        cfg.work_dir / "tables" / "macro_f1.csv", cfg.work_dir / "tables" / "precision_nonhand.csv",
        cfg.work_dir / "tables" / "precision_hand.csv", cfg.work_dir / "tables" / "forecast.csv",
        cfg.work_dir / "report.md"};
    if (st.ledger.up_to_date("report", key, outputs)) {
        std::cerr << "[skip] report\n";
        return;
    }
    eval::emit_report_tables(art, cfg.work_dir);
    st.ledger.record("report", key, outputs);
    std::cerr << "[done] report: " << (cfg.work_dir / "report.md").string() << "\n";
}

} // namespace

int run_report_only(const fs::path& work_dir) {
    RunConfig cfg;
    cfg.work_dir = work_dir;
    cfg.archs.clear();
    cfg.sources.clear();
    cfg.forecast_activities.clear();

    const fs::path eval_dir = work_dir / "eval";
    if (fs::is_directory(eval_dir)) {
        for (const auto& entry : fs::directory_iterator(eval_dir)) {
            if (entry.path().extension() != ".json") continue;
            const std::string stem = entry.path().stem().string();
            const auto us = stem.find('_');
            if (us == std::string::npos) continue;
            const std::string arch = stem.substr(0, us);
            const std::string source = stem.substr(us + 1);
            if (std::find(cfg.archs.begin(), cfg.archs.end(), arch) == cfg.archs.end())
                cfg.archs.push_back(arch);
            if (std::find(cfg.sources.begin(), cfg.sources.end(), source) == cfg.sources.end())
                cfg.sources.push_back(source);
        }
    }
    const fs::path fc_dir = work_dir / "forecast";
    if (fs::is_directory(fc_dir)) {
        for (const auto& entry : fs::directory_iterator(fc_dir)) {
            const std::string stem = entry.path().stem().string();
            if (entry.path().extension() == ".json" && stem.size() == 1)
                cfg.forecast_activities.push_back(stem[0]);
        }
        std::sort(cfg.forecast_activities.begin(), cfg.forecast_activities.end());
    }
    if (cfg.archs.empty() && cfg.forecast_activities.empty())
        throw DataError("no evaluation artifacts under " + work_dir.string());

    PipelineState st{cfg, StageLedger(cfg.work_dir), {}, {}, {}};
    stage_report(st);
    st.ledger.save();
    return 0;
}

int run_pipeline(const RunConfig& cfg) {
    if (!cfg.synthetic && (cfg.raw_dir.empty() || !fs::exists(cfg.raw_dir)))
        throw DataError("raw data directory missing; pass --synthetic or point --raw at the dataset");
    const double ratio_sum = cfg.ratios[0] + cfg.ratios[1] + cfg.ratios[2];
    if (std::abs(ratio_sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    fs::create_directories(cfg.work_dir);
    PipelineState st{cfg, StageLedger(cfg.work_dir), {}, {}, {}};

    for (const auto& source : cfg.sources) stage_featurize(st, source);
    if (cfg.run_mancova) stage_mancova(st);
    for (const auto& arch : cfg.archs)
        for (const auto& source : cfg.sources) stage_train_eval(st, arch, source);
    if (cfg.run_forecast)
        for (char code : cfg.forecast_activities) stage_forecast(st, code);
    stage_report(st);
    st.ledger.save();
    return 0;
}

} // namespace har::pipeline
