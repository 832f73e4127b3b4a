// har-forge: activity-recognition pipeline toolkit.
//
// Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 training diverged, 5 I/O error.

#include <array>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "har/dataset.hpp"
#include "har/eval.hpp"
#include "har/features.hpp"
#include "har/models.hpp"
#include "har/pipeline.hpp"
#include "har/stats.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string device = "watch";
    std::string sensor = "accel";
    std::uint64_t seed = 7;
};

har::dataset::DeviceSensor to_ds(const CommonArgs& a) {
    return {har::dataset::parse_device(a.device), har::dataset::parse_sensor(a.sensor)};
}

int cmd_ingest(const std::string& in_dir, const std::string& out_file, const CommonArgs& common,
               bool abort_on_malformed) {
    const auto ds = to_ds(common);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(in_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".txt")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw har::DataError("no .txt files in " + in_dir);

    std::vector<har::dataset::SensorReading> readings;
    std::size_t skipped = 0;
    const auto policy =
        abort_on_malformed ? har::dataset::SkipPolicy::Abort : har::dataset::SkipPolicy::Skip;
    for (const auto& f : files) {
        auto res = har::dataset::load_stream(f, policy);
        if (res.skipped)
            std::cerr << "[warn] " << f.filename().string() << ": skipped " << res.skipped
                      << " malformed lines\n";
        skipped += res.skipped;
        readings.insert(readings.end(), res.readings.begin(), res.readings.end());
    }
    const auto windows = har::dataset::segment_windows(readings, ds);
    if (const auto audit = har::dataset::audit_gaps(readings))
        std::cerr << "[info] max inter-sample gap " << audit->max_gap_ns << " ns (subject "
                  << audit->subject_id << ", activity " << audit->activity << ")\n";
    har::dataset::write_windows_csv(out_file, windows);
    har::dataset::write_windows_manifest(out_file + ".manifest.json", windows, skipped);
    std::cout << windows.size() << " windows -> " << out_file << "\n";
    return 0;
}

int cmd_featurize(const std::string& in_file, const std::string& join_file,
                  const std::string& out_file, const std::string& drop) {
    har::dataset::LabeledDataset ds;
    if (join_file.empty()) {
        ds = har::features::featurize_windows(har::dataset::read_windows_csv(in_file), drop);
    } else {
        ds = har::features::concat_aligned(har::dataset::read_windows_csv(in_file),
                                           har::dataset::read_windows_csv(join_file), drop);
    }
    har::features::write_features_csv(out_file, ds);
    std::cout << ds.size() << " rows x " << ds.feature_names.size() << " features -> " << out_file
              << "\n";
    return 0;
}

int cmd_mancova(const std::string& phone_file, const std::string& watch_file,
                const std::string& sensor, const std::string& out_file) {
    const auto to_rows = [](const std::string& p) {
        const auto res = har::dataset::load_stream(p, har::dataset::SkipPolicy::Skip);
        std::vector<std::vector<double>> rows;
        rows.reserve(res.readings.size());
        for (const auto& r : res.readings) rows.push_back({r.x, r.y, r.z});
        return rows;
    };
    const auto rep =
        har::stats::device_difference_report(to_rows(phone_file), to_rows(watch_file), sensor);
    json j{{"sensor", sensor},
           {"lambda", rep.wilks.lambda},
           {"f_stat", rep.wilks.f_stat},
           {"df1", rep.wilks.df1},
           {"df2", rep.wilks.df2},
           {"p_value", rep.wilks.p_value},
           {"alpha", rep.alpha},
           {"reject_null", rep.reject_null},
           {"summary", rep.summary}};
    if (!out_file.empty()) {
        std::ofstream out(out_file);
        if (!out) throw har::IoError("cannot write " + out_file);
        out << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n" << rep.summary << "\n";
    return 0;
}

int cmd_train(const std::string& arch, const std::string& data_file, const std::string& out_base,
              const CommonArgs& common, std::size_t epochs, const std::string& drop,
              const std::array<double, 3>& ratios) {
    auto ds = har::features::read_features_csv(data_file);
    if (!drop.empty()) {
        const auto it =
            std::find(ds.feature_names.begin(), ds.feature_names.end(), drop);
        if (it == ds.feature_names.end())
            throw har::ConfigError("feature '" + drop + "' not present in " + data_file);
        const auto col = static_cast<std::size_t>(it - ds.feature_names.begin());
        ds.feature_names.erase(it);
        for (auto& row : ds.rows) row.erase(row.begin() + static_cast<std::ptrdiff_t>(col));
    }
    ds.device_sensor = to_ds(common);
    auto art = har::pipeline::train_on_features(ds, arch, common.seed, epochs, ratios);
    har::models::save_checkpoint(out_base, art.model, art.history);
    const auto rep = har::pipeline::evaluate_checkpoint(art.model, ds, "test");
    std::cout << art.model.spec.name << ": " << art.model.epochs_trained
              << " epochs, test Macro-F1 " << rep.macro_f1 << "\n"
              << "checkpoint -> " << out_base << ".json/.bin\n";
    return 0;
}

int cmd_evaluate(const std::string& ckpt_base, const std::string& data_file,
                 const std::string& split, const std::string& out_file) {
    auto ck = har::models::load_checkpoint(ckpt_base);
    const auto ds = har::features::read_features_csv(data_file);
    const auto rep = har::pipeline::evaluate_checkpoint(ck.model, ds, split);
    json per_class = json::object();
    for (const auto& m : rep.per_class)
        per_class[m.label] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}};
    json j{{"arch", ck.model.spec.name},
           {"split", split},
           {"rows", rep.total},
           {"macro_f1", rep.macro_f1},
           {"micro_accuracy", rep.micro_accuracy},
           {"per_class", per_class},
           {"confusion", rep.confusion}};
    if (!out_file.empty()) {
        std::ofstream out(out_file);
        if (!out) throw har::IoError("cannot write " + out_file);
        out << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_forecast(const std::string& data_file, char activity, const std::string& out_csv,
                 const std::string& metrics_file, const CommonArgs& common, std::size_t epochs,
                 std::size_t stride) {
    const auto res = har::dataset::load_stream(data_file, har::dataset::SkipPolicy::Skip);
    har::models::ForecastOptions opts;
    opts.epochs = epochs;
    opts.train_stride = stride;
    opts.seed = har::derive_seed(common.seed, "forecast/" + std::string(1, activity));

    std::vector<std::array<double, 3>> stream;
    std::size_t i = 0;
    const auto& readings = res.readings;
    while (i < readings.size()) {
        std::size_t j = i;
        while (j < readings.size() && readings[j].subject_id == readings[i].subject_id &&
               readings[j].activity == readings[i].activity)
            ++j;
        if (readings[i].activity == activity && j - i >= opts.train_len + opts.horizon) {
            for (std::size_t k = i; k < j; ++k)
                stream.push_back({readings[k].x, readings[k].y, readings[k].z});
            break;
        }
        i = j;
    }
    if (stream.empty())
        throw har::DataError(std::string("no stream of activity ") + activity +
                             " long enough for 210 s context + 30 s horizon");

    const auto out = har::models::forecast_stream(stream, opts);
    const auto metrics = har::eval::forecast_metrics(out.actual, out.predicted);

    std::ofstream csv(out_csv);
    if (!csv) throw har::IoError("cannot write " + out_csv);
    csv << "step,actual_x,actual_y,actual_z,pred_x,pred_y,pred_z\n";
    char buf[256];
    for (std::size_t k = 0; k < out.predicted.size(); ++k) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", k,
                      out.actual[k][0], out.actual[k][1], out.actual[k][2], out.predicted[k][0],
                      out.predicted[k][1], out.predicted[k][2]);
        csv << buf;
    }

    json j{{"activity", std::string(1, activity)},
           {"label", std::string(1, activity) + " (" + har::dataset::activity_description(activity) + ")"},
           {"rmse", metrics.rmse},
           {"mse", metrics.mse},
           {"mape", metrics.mape},
           {"smape", metrics.smape},
           {"mape_excluded", metrics.mape_excluded}};
    if (!metrics_file.empty()) {
        std::ofstream mout(metrics_file);
        if (!mout) throw har::IoError("cannot write " + metrics_file);
        mout << j.dump(2) << "\n";
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"har-forge: sensor-stream activity recognition pipeline"};
    app.set_config("--config", "", "Read options from a key=value config file");
    app.require_subcommand(1);

    CommonArgs common;

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Parse raw sensor files into windows CSV");
    std::string in_dir, out_file;
    bool abort_on_malformed = false;
    ingest->add_option("--device", common.device, "phone|watch")->capture_default_str();
    ingest->add_option("--sensor", common.sensor, "accel|gyro")->capture_default_str();
    ingest->add_option("--in", in_dir, "Directory of raw .txt files")->required();
    ingest->add_option("--out", out_file, "Output windows CSV")->required();
    ingest->add_flag("--abort-on-malformed", abort_on_malformed,
                     "Abort on the first malformed line instead of skipping");

    // featurize
    auto* featurize = app.add_subcommand("featurize", "Extract the 45-feature vectors");
    std::string fz_in, fz_join, fz_out, fz_drop;
    featurize->add_option("--in", fz_in, "Windows CSV")->required();
    featurize->add_option("--join", fz_join,
                          "Second windows CSV (gyro) for timestamp-aligned concatenation");
    featurize->add_option("--out", fz_out, "Output feature CSV")->required();
    featurize->add_option("--drop-feature", fz_drop, "Canonical feature name to drop");

    // mancova
    auto* mancova = app.add_subcommand("mancova", "Phone-vs-watch Wilks' Lambda test");
    std::string mc_phone, mc_watch, mc_sensor = "accel", mc_out;
    mancova->add_option("--phone", mc_phone, "Raw phone stream file")->required();
    mancova->add_option("--watch", mc_watch, "Raw watch stream file")->required();
    mancova->add_option("--sensor", mc_sensor, "accel|gyro")->capture_default_str();
    mancova->add_option("--out", mc_out, "Write the JSON result here");

    // train
    auto* train = app.add_subcommand("train", "Train one classifier on a feature CSV");
    std::string tr_arch, tr_data, tr_out, tr_drop;
    std::size_t tr_epochs = 0;
    std::array<double, 3> tr_ratios{0.8, 0.1, 0.1};
    train->add_option("--arch", tr_arch, "lstm|bilstm|convlstm|cnn")->required();
    train->add_option("--device", common.device, "phone|watch")->capture_default_str();
    train->add_option("--sensor", common.sensor, "accel|gyro")->capture_default_str();
    train->add_option("--data", tr_data, "Feature CSV")->required();
    train->add_option("--seed", common.seed, "Root seed")->capture_default_str();
    train->add_option("--out", tr_out, "Checkpoint base path (writes .json and .bin)")->required();
    train->add_option("--epochs", tr_epochs, "Override the architecture's epoch budget (0 = paper)");
    train->add_option("--drop-feature", tr_drop, "Canonical feature name to drop");
    train->add_option("--ratios", tr_ratios, "train/val/test ratios")->expected(3);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on a feature CSV");
    std::string ev_ckpt, ev_data, ev_split = "test", ev_out;
    evaluate->add_option("--ckpt", ev_ckpt, "Checkpoint base path")->required();
    evaluate->add_option("--data", ev_data, "Feature CSV")->required();
    evaluate->add_option("--split", ev_split, "train|val|test|all")->capture_default_str();
    evaluate->add_option("--out", ev_out, "Write the JSON report here");

    // forecast
    auto* forecast = app.add_subcommand("forecast", "GRU forecast of the last 30 s of a stream");
    std::string fc_data, fc_out, fc_metrics;
    std::string fc_activity = "H";
    std::size_t fc_epochs = 10, fc_stride = 1;
    forecast->add_option("--activity", fc_activity, "H|I|J|K|L (any raw code accepted)")
        ->capture_default_str();
    forecast->add_option("--data", fc_data, "Raw stream file")->required();
    forecast->add_option("--device", common.device, "phone|watch")->capture_default_str();
    forecast->add_option("--sensor", common.sensor, "accel|gyro")->capture_default_str();
    forecast->add_option("--out", fc_out, "Output CSV of actual vs predicted")->required();
    forecast->add_option("--metrics-out", fc_metrics, "Write metrics JSON here");
    forecast->add_option("--seed", common.seed, "Root seed")->capture_default_str();
    forecast->add_option("--epochs", fc_epochs, "Training epochs")->capture_default_str();
    forecast->add_option("--stride", fc_stride, "Teacher-forcing pair stride")->capture_default_str();

    // report
    auto* report = app.add_subcommand("report", "Collect evaluation artifacts into tables");
    std::string rp_work = "harforge_work";
    report->add_option("--work", rp_work, "Pipeline work directory")->capture_default_str();

    // demo
    auto* demo = app.add_subcommand("demo", "Synthetic end-to-end run of every stage");
    har::pipeline::RunConfig demo_cfg = har::pipeline::demo_config();
    std::string demo_work = "harforge_work";
    std::vector<std::string> demo_sources = demo_cfg.sources;
    demo->add_option("--seed", demo_cfg.seed, "Root seed")->capture_default_str();
    demo->add_option("--work", demo_work, "Work directory")->capture_default_str();
    demo->add_option("--epochs", demo_cfg.epochs, "Epochs per classifier")->capture_default_str();
    demo->add_option("--windows-per-class", demo_cfg.windows_per_class, "Synthetic windows per class")
        ->capture_default_str();
    demo->add_option("--sources", demo_sources, "Any of accel gyro both")->capture_default_str();
    demo->add_option("--forecast-epochs", demo_cfg.forecast_epochs, "Forecaster epochs")
        ->capture_default_str();
    demo->add_option("--drop-feature", demo_cfg.drop_feature, "Canonical feature name to drop");

    // full pipeline over real data
    auto* run = app.add_subcommand("run", "Full pipeline over a WISDM-style raw tree");
    har::pipeline::RunConfig run_cfg;
    std::string run_work = "harforge_work", run_raw, run_device = "watch", run_sensor = "accel";
    std::vector<std::string> run_sources{"accel"};
    bool run_synthetic = false;
    run->add_option("--raw", run_raw, "Dataset root (expects raw/<device>/<sensor>/*.txt)");
    run->add_flag("--synthetic", run_synthetic, "Use the synthetic generator instead of raw data");
    run->add_option("--work", run_work, "Work directory")->capture_default_str();
    run->add_option("--seed", run_cfg.seed, "Root seed")->capture_default_str();
    run->add_option("--device", run_device, "phone|watch")->capture_default_str();
    run->add_option("--sensor", run_sensor, "accel|gyro")->capture_default_str();
    run->add_option("--sources", run_sources, "Any of accel gyro both")->capture_default_str();
    run->add_option("--epochs", run_cfg.epochs, "Epoch override (0 = paper budgets)")
        ->capture_default_str();
    run->add_option("--drop-feature", run_cfg.drop_feature, "Canonical feature name to drop");

    try {
        app.parse(argc, argv);

        if (*ingest) return cmd_ingest(in_dir, out_file, common, abort_on_malformed);
        if (*featurize) return cmd_featurize(fz_in, fz_join, fz_out, fz_drop);
        if (*mancova) return cmd_mancova(mc_phone, mc_watch, mc_sensor, mc_out);
        if (*train) return cmd_train(tr_arch, tr_data, tr_out, common, tr_epochs, tr_drop, tr_ratios);
        if (*evaluate) return cmd_evaluate(ev_ckpt, ev_data, ev_split, ev_out);
        if (*forecast) {
            if (fc_activity.size() != 1)
                throw har::ConfigError("--activity expects a single code letter");
            return cmd_forecast(fc_data, fc_activity[0], fc_out, fc_metrics, common, fc_epochs,
                                fc_stride);
        }
        if (*report) return har::pipeline::run_report_only(rp_work);
        if (*demo) {
            demo_cfg.work_dir = demo_work;
            demo_cfg.sources = demo_sources;
            return har::pipeline::run_pipeline(demo_cfg);
        }
        if (*run) {
            run_cfg.work_dir = run_work;
            run_cfg.raw_dir = run_raw;
            run_cfg.synthetic = run_synthetic;
            run_cfg.device = har::dataset::parse_device(run_device);
            run_cfg.sensor = har::dataset::parse_sensor(run_sensor);
            run_cfg.sources = run_sources;
            return har::pipeline::run_pipeline(run_cfg);
        }
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const har::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const har::NonFiniteLoss& e) {
        std::cerr << "training diverged: " << e.what() << "\n";
        return 4;
    } catch (const har::IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 5;
    } catch (const har::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
