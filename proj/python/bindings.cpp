#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "har/dataset.hpp"
#include "har/eval.hpp"
#include "har/features.hpp"
#include "har/models.hpp"
#include "har/nn.hpp"
#include "har/pipeline.hpp"
#include "har/stats.hpp"

namespace py = pybind11;
using namespace har;

namespace {

// One self-contained handle for the python side: build + train + predict.
struct PyClassifier {
    models::TrainedModel model;
    models::TrainHistory history;

    std::vector<std::string> predict(const std::vector<std::vector<double>>& raw_rows) {
        const auto scaled = model.scaler.apply_all(raw_rows);
        const auto idx = models::classify(model.net, model.spec, scaled);
        std::vector<std::string> out;
        out.reserve(idx.size());
        for (auto i : idx) out.push_back(model.class_set.at(i));
        return out;
    }
};

} // namespace

PYBIND11_MODULE(harforge, m) {
    m.doc() = "Sensor-stream activity recognition toolkit (C++ core)";

    py::register_exception<Error>(m, "HarError");

    // -- dataset ------------------------------------------------------------
    py::class_<dataset::SensorReading>(m, "SensorReading")
        .def(py::init<>())
        .def_readwrite("subject_id", &dataset::SensorReading::subject_id)
        .def_readwrite("activity", &dataset::SensorReading::activity)
        .def_readwrite("timestamp", &dataset::SensorReading::timestamp)
        .def_readwrite("x", &dataset::SensorReading::x)
        .def_readwrite("y", &dataset::SensorReading::y)
        .def_readwrite("z", &dataset::SensorReading::z)
        .def("__repr__", [](const dataset::SensorReading& r) {
            return "<SensorReading " + dataset::serialize_reading(r) + ">";
        });

    m.def("parse_raw_line", &dataset::parse_raw_line, py::arg("line"), py::arg("line_no") = 0);
    m.def("serialize_reading", &dataset::serialize_reading);
    m.def("merge_eating_label",
          py::overload_cast<const std::string&>(&dataset::merge_eating_label),
          "Raw activity code or class name -> merged class name");
    m.def("class_names", &dataset::class_names);
    m.def("non_hand_classes", &dataset::non_hand_classes);
    m.def("hand_classes", &dataset::hand_classes);
    m.def("activity_description", &dataset::activity_description);

    m.def(
        "synthesize",
        [](std::size_t n_per_class, std::uint64_t seed, std::size_t samples_per_stream,
           const std::string& device, const std::string& sensor) {
            dataset::SynthesisOptions opts;
            opts.n_per_class = n_per_class;
            opts.seed = seed;
            opts.samples_per_stream = samples_per_stream;
            opts.device_sensor = {dataset::parse_device(device), dataset::parse_sensor(sensor)};
            return dataset::synthesize_dataset(opts);
        },
        py::arg("n_per_class") = 1, py::arg("seed") = 7, py::arg("samples_per_stream") = 3600,
        py::arg("device") = "watch", py::arg("sensor") = "accel",
        "Deterministic synthetic 20 Hz streams, one per (subject, class)");

    m.def(
        "segment_windows",
        [](const std::vector<dataset::SensorReading>& readings, const std::string& device,
           const std::string& sensor, std::size_t window_len) {
            return dataset::segment_windows(
                readings, {dataset::parse_device(device), dataset::parse_sensor(sensor)},
                window_len);
        },
        py::arg("readings"), py::arg("device") = "watch", py::arg("sensor") = "accel",
        py::arg("window_len") = dataset::kWindowLen);

    py::class_<dataset::Window>(m, "Window")
        .def_readonly("subject_id", &dataset::Window::subject_id)
        .def_readonly("activity", &dataset::Window::activity)
        .def_readonly("start_timestamp", &dataset::Window::start_timestamp)
        .def_readonly("samples", &dataset::Window::samples)
        .def("axis", &dataset::Window::axis, py::arg("axis"));

    m.def(
        "split_dataset",
        [](const std::vector<std::string>& labels, double train, double val, double test,
           std::uint64_t seed) {
            const auto s = dataset::split_dataset(labels, {train, val, test}, seed);
            return py::make_tuple(s.train, s.val, s.test);
        },
        py::arg("labels"), py::arg("train") = 0.8, py::arg("val") = 0.1, py::arg("test") = 0.1,
        py::arg("seed") = 7, "Stratified split; returns (train, val, test) row indices");

    // -- features -----------------------------------------------------------
    m.def("feature_names", &features::feature_names);
    m.def(
        "binned_distribution",
        [](const std::vector<double>& values) {
            const auto b = features::binned_distribution(values);
            return std::vector<double>(b.begin(), b.end());
        },
        py::arg("values"));
    m.def(
        "axis_stats",
        [](const std::vector<double>& values) {
            const auto s = features::axis_stats(values);
            return py::make_tuple(s.average, s.stddev, s.variance, s.avg_abs_diff);
        },
        py::arg("values"), "Returns (average, stddev, variance, avg_abs_diff)");
    m.def(
        "time_between_peaks",
        [](const std::vector<double>& values, double rate_hz) {
            return features::time_between_peaks(values, rate_hz);
        },
        py::arg("values"), py::arg("rate_hz") = dataset::kSampleRateHz);
    m.def(
        "extract_features",
        [](const dataset::Window& w) {
            const auto f = features::extract_features(w);
            return std::vector<double>(f.begin(), f.end());
        },
        py::arg("window"));

    // -- stats --------------------------------------------------------------
    py::class_<stats::WilksResult>(m, "WilksResult")
        .def_readonly("lambda_", &stats::WilksResult::lambda)
        .def_readonly("f_stat", &stats::WilksResult::f_stat)
        .def_readonly("df1", &stats::WilksResult::df1)
        .def_readonly("df2", &stats::WilksResult::df2)
        .def_readonly("p_value", &stats::WilksResult::p_value)
        .def("__repr__", [](const stats::WilksResult& r) {
            return "<WilksResult lambda=" + std::to_string(r.lambda) +
                   " F=" + std::to_string(r.f_stat) + " p=" + std::to_string(r.p_value) + ">";
        });

    m.def(
        "wilks_manova",
        [](const std::vector<std::vector<double>>& observations, const std::vector<int>& group,
           const std::vector<std::vector<double>>& covariates) {
            stats::MancovaInput in{observations, group, covariates};
            return stats::wilks_manova(in);
        },
        py::arg("observations"), py::arg("group"),
        py::arg("covariates") = std::vector<std::vector<double>>{});

    m.def(
        "device_difference",
        [](const std::vector<std::vector<double>>& phone_rows,
           const std::vector<std::vector<double>>& watch_rows, const std::string& sensor,
           double alpha) {
            const auto rep = stats::device_difference_report(phone_rows, watch_rows, sensor, alpha);
            return py::make_tuple(rep.wilks, rep.reject_null, rep.summary);
        },
        py::arg("phone_rows"), py::arg("watch_rows"), py::arg("sensor") = "accel",
        py::arg("alpha") = 0.05, "Returns (WilksResult, reject_null, summary)");

    // -- eval ---------------------------------------------------------------
    m.def(
        "classification_report",
        [](const std::vector<std::string>& truths, const std::vector<std::string>& preds,
           const std::vector<std::string>& class_set) {
            const auto rep = eval::classification_report(truths, preds, class_set);
            py::dict per_class;
            for (const auto& c : rep.per_class)
                per_class[py::str(c.label)] =
                    py::dict(py::arg("precision") = c.precision, py::arg("recall") = c.recall,
                             py::arg("f1") = c.f1);
            return py::dict(py::arg("macro_f1") = rep.macro_f1,
                            py::arg("micro_accuracy") = rep.micro_accuracy,
                            py::arg("per_class") = per_class, py::arg("confusion") = rep.confusion);
        },
        py::arg("truths"), py::arg("predictions"), py::arg("class_set"));

    m.def(
        "forecast_metrics",
        [](const std::vector<std::array<double, 3>>& actual,
           const std::vector<std::array<double, 3>>& predicted) {
            const auto metrics = eval::forecast_metrics(actual, predicted);
            return py::dict(py::arg("rmse") = metrics.rmse, py::arg("mse") = metrics.mse,
                            py::arg("mape") = metrics.mape, py::arg("smape") = metrics.smape,
                            py::arg("mape_excluded") = metrics.mape_excluded,
                            py::arg("mape_defined") = metrics.mape_defined);
        },
        py::arg("actual"), py::arg("predicted"));

    // -- models -------------------------------------------------------------
    py::class_<PyClassifier>(m, "Classifier")
        .def_property_readonly("name", [](const PyClassifier& c) { return c.model.spec.name; })
        .def_property_readonly("class_set",
                               [](const PyClassifier& c) { return c.model.class_set; })
        .def_property_readonly("epochs_trained",
                               [](const PyClassifier& c) { return c.model.epochs_trained; })
        .def_property_readonly("history",
                               [](const PyClassifier& c) {
                                   py::list out;
                                   for (const auto& e : c.history.epochs)
                                       out.append(py::dict(py::arg("train_loss") = e.train_loss,
                                                           py::arg("val_loss") = e.val_loss,
                                                           py::arg("train_acc") = e.train_acc,
                                                           py::arg("val_acc") = e.val_acc));
                                   return out;
                               })
        .def("predict", &PyClassifier::predict, py::arg("rows"),
             "Class names for raw (unscaled) feature rows")
        .def("save", [](const PyClassifier& c, const std::filesystem::path& base) {
            models::save_checkpoint(base, c.model, c.history);
        });

    m.def(
        "train_classifier",
        [](const std::string& arch, const std::vector<std::vector<double>>& rows,
           const std::vector<std::string>& labels, std::uint64_t seed, std::size_t epochs) {
            dataset::LabeledDataset ds;
            ds.rows = rows;
            ds.labels = labels;
            ds.feature_names = features::feature_names();
            if (!rows.empty() && rows.front().size() != ds.feature_names.size()) {
                ds.feature_names.clear();
                for (std::size_t i = 0; i < rows.front().size(); ++i)
                    ds.feature_names.push_back("f" + std::to_string(i));
            }
            ds.class_set = dataset::class_names();
            auto art = pipeline::train_on_features(ds, arch, seed, epochs, {0.8, 0.1, 0.1});
            auto holder = std::make_unique<PyClassifier>();
            holder->model = std::move(art.model);
            holder->history = std::move(art.history);
            return holder;
        },
        py::arg("arch"), py::arg("rows"), py::arg("labels"), py::arg("seed") = 7,
        py::arg("epochs") = 8,
        "Split/scale/train one architecture (lstm|bilstm|convlstm|cnn) on raw feature rows");

    m.def(
        "load_classifier",
        [](const std::filesystem::path& base) {
            auto ck = models::load_checkpoint(base);
            auto holder = std::make_unique<PyClassifier>();
            holder->model = std::move(ck.model);
            holder->history = std::move(ck.history);
            return holder;
        },
        py::arg("base"));

    m.def(
        "forecast",
        [](const std::vector<std::array<double, 3>>& stream, std::size_t epochs,
           std::uint64_t seed, std::size_t train_stride) {
            models::ForecastOptions opts;
            opts.epochs = epochs;
            opts.seed = seed;
            opts.train_stride = train_stride;
            const auto out = models::forecast_stream(stream, opts);
            const auto metrics = eval::forecast_metrics(out.actual, out.predicted);
            return py::dict(py::arg("predicted") = out.predicted, py::arg("actual") = out.actual,
                            py::arg("rmse") = metrics.rmse, py::arg("mse") = metrics.mse,
                            py::arg("mape") = metrics.mape, py::arg("smape") = metrics.smape);
        },
        py::arg("stream"), py::arg("epochs") = 10, py::arg("seed") = 7,
        py::arg("train_stride") = 1,
        "Train the GRU forecaster on the first 210 s and roll out the last 30 s");

    // -- pipeline -----------------------------------------------------------
    m.def(
        "run_demo",
        [](const std::filesystem::path& work_dir, std::uint64_t seed, std::size_t epochs,
           std::size_t windows_per_class, const std::vector<std::string>& sources) {
            pipeline::RunConfig cfg = pipeline::demo_config(seed);
            cfg.work_dir = work_dir;
            cfg.epochs = epochs;
            cfg.windows_per_class = windows_per_class;
            cfg.sources = sources;
            return pipeline::run_pipeline(cfg);
        },
        py::arg("work_dir"), py::arg("seed") = 7, py::arg("epochs") = 8,
        py::arg("windows_per_class") = 18,
        py::arg("sources") = std::vector<std::string>{"accel"},
        "Synthetic end-to-end pipeline run; writes artifacts under work_dir");

    m.attr("__version__") = "0.1.0";
}
