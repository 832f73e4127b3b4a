#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "har/dataset.hpp"
#include "har/rng.hpp"

using namespace har;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("dataset");

TEST_CASE("parse_raw_line handles valid records") {
    const auto r = dataset::parse_raw_line("1,A,1000,0.0,0.0,0.0;");
    CHECK(r.subject_id == 1);
    CHECK(r.activity == 'A');
    CHECK(r.timestamp == 1000);
    CHECK(r.x == 0.0);
    CHECK(r.y == 0.0);
    CHECK(r.z == 0.0);

    const auto r2 = dataset::parse_raw_line("3,H,2000,1.5,-2.25,9.81;");
    CHECK(r2.subject_id == 3);
    CHECK(r2.activity == 'H');
    CHECK(r2.timestamp == 2000);
    CHECK(r2.x == doctest::Approx(1.5));
    CHECK(r2.y == doctest::Approx(-2.25));
    CHECK(r2.z == doctest::Approx(9.81));

    // Whitespace and missing trailing semicolon are tolerated.
    const auto r3 = dataset::parse_raw_line("  7,B,5,1,2,3  ");
    CHECK(r3.subject_id == 7);
    CHECK(r3.activity == 'B');
}

TEST_CASE("parse_raw_line rejects malformed records") {
    CHECK_THROWS_AS(dataset::parse_raw_line("3,Z,2000,1,2,3;"), MalformedRecord);   // unknown code
    CHECK_THROWS_AS(dataset::parse_raw_line("3,N,2000,1,2,3;"), MalformedRecord);   // N unassigned
    CHECK_THROWS_AS(dataset::parse_raw_line("3,A,2000,1,2;"), MalformedRecord);     // field count
    CHECK_THROWS_AS(dataset::parse_raw_line("3,A,2000,1,2,3,4;"), MalformedRecord);
    CHECK_THROWS_AS(dataset::parse_raw_line("x,A,2000,1,2,3;"), MalformedRecord);   // bad number
    CHECK_THROWS_AS(dataset::parse_raw_line("3,A,2000,nope,2,3;"), MalformedRecord);
    CHECK_THROWS_AS(dataset::parse_raw_line("   "), MalformedRecord);
    try {
        dataset::parse_raw_line("3,A,2000,1,2", 42);
        FAIL("expected throw");
    } catch (const MalformedRecord& e) {
        CHECK(e.line_number == 42);
    }
}

TEST_CASE("parse-serialize round trip is exact") {
    Rng rng(99);
    for (int i = 0; i < 200; ++i) {
        dataset::SensorReading r;
        r.subject_id = static_cast<int>(rng.below(2000));
        const auto& classes = dataset::class_names();
        r.activity = dataset::class_representative_code(classes[rng.below(classes.size())]);
        r.timestamp = static_cast<std::int64_t>(rng.next_u64() >> 20);
        r.x = rng.normal(0.0, 1e3);
        r.y = rng.normal() * std::pow(10.0, rng.uniform(-12, 12));
        r.z = -rng.uniform();
        const auto back = dataset::parse_raw_line(dataset::serialize_reading(r));
        CHECK(back == r);
    }
}

TEST_CASE("parse_stream counts and skips malformed lines") {
    CHECK(dataset::parse_stream("").readings.empty());
    CHECK(dataset::parse_stream("").skipped == 0);

    const std::string good = "1,A,1,0,0,0;\n1,A,2,0,0,1;\n1,A,3,0,1,0;\n";
    const auto res = dataset::parse_stream(good);
    REQUIRE(res.readings.size() == 3);
    CHECK(res.skipped == 0);
    CHECK(res.readings[0].timestamp == 1);
    CHECK(res.readings[2].timestamp == 3);

    const std::string mixed = "1,A,1,0,0,0;\nbogus line\n1,A,3,0,1,0;\n";
    const auto skipped = dataset::parse_stream(mixed, dataset::SkipPolicy::Skip);
    CHECK(skipped.readings.size() == 2);
    CHECK(skipped.skipped == 1);
    CHECK_THROWS_AS(dataset::parse_stream(mixed, dataset::SkipPolicy::Abort), MalformedRecord);
}

TEST_CASE("load_stream reads files and reports missing ones") {
    const fs::path dir = fs::temp_directory_path() / "har_test_dataset";
    fs::create_directories(dir);
    const fs::path p = dir / "stream.txt";
    {
        std::ofstream out(p);
        out << "5,G,100,1,2,3;\n5,G,150,4,5,6;\n";
    }
    const auto res = dataset::load_stream(p);
    CHECK(res.readings.size() == 2);
    CHECK(res.readings[1].x == doctest::Approx(4.0));
    CHECK_THROWS_AS(dataset::load_stream(dir / "missing.txt"), IoError);
    fs::remove_all(dir);
}

namespace {

std::vector<dataset::SensorReading> constant_run(int subject, char activity, std::size_t n,
                                                 std::int64_t t0 = 0) {
    std::vector<dataset::SensorReading> out;
    for (std::size_t i = 0; i < n; ++i) {
        dataset::SensorReading r;
        r.subject_id = subject;
        r.activity = activity;
        r.timestamp = t0 + static_cast<std::int64_t>(i) * 50'000'000;
        r.x = static_cast<double>(i);
        out.push_back(r);
    }
    return out;
}

} // namespace

TEST_CASE("segment_windows partitions streams into 200-sample windows") {
    const dataset::DeviceSensor ds{dataset::Device::Watch, dataset::Sensor::Accelerometer};

    CHECK(dataset::segment_windows({}, ds).empty());

    const auto w18 = dataset::segment_windows(constant_run(1, 'A', 3600), ds);
    CHECK(w18.size() == 18);  // 180 s of clean data -> 18 windows

    const auto w1 = dataset::segment_windows(constant_run(1, 'A', 250), ds);
    REQUIRE(w1.size() == 1);
    CHECK(w1[0].samples.size() == 200);
    CHECK(w1[0].samples[199][0] == doctest::Approx(199.0));  // remainder discarded

    CHECK(dataset::segment_windows(constant_run(1, 'A', 199), ds).empty());
}

TEST_CASE("segment_windows separates subjects and activities") {
    auto readings = constant_run(1, 'A', 450);
    const auto more = constant_run(2, 'B', 400, 999);
    readings.insert(readings.end(), more.begin(), more.end());
    const dataset::DeviceSensor ds{dataset::Device::Phone, dataset::Sensor::Gyroscope};
    const auto windows = dataset::segment_windows(readings, ds);
    REQUIRE(windows.size() == 4);  // floor(450/200) + floor(400/200)
    CHECK(windows[0].subject_id == 1);
    CHECK(windows[1].subject_id == 1);
    CHECK(windows[2].subject_id == 2);
    CHECK(windows[2].activity == 'B');
    CHECK(windows[2].start_timestamp == 999);
    for (const auto& w : windows) {
        CHECK(w.samples.size() == 200);
        CHECK(w.device_sensor == ds);
    }
}

TEST_CASE("windows count equals sum of floor(len/200) on synthetic streams") {
    dataset::SynthesisOptions opts;
    opts.n_per_class = 2;
    opts.seed = 3;
    opts.samples_per_stream = 523;
    const auto readings = dataset::synthesize_dataset(opts);
    const auto windows = dataset::segment_windows(readings, opts.device_sensor);
    CHECK(windows.size() == 2 * 15 * (523 / 200));
    for (const auto& w : windows) CHECK(w.samples.size() == 200);
}

TEST_CASE("merge_eating_label folds eating codes and keeps the rest") {
    CHECK(dataset::merge_eating_label('H') == "eating");
    CHECK(dataset::merge_eating_label('I') == "eating");
    CHECK(dataset::merge_eating_label('J') == "eating");
    CHECK(dataset::merge_eating_label('L') == "eating");
    CHECK(dataset::merge_eating_label('K') == "drinking");  // kept separate
    CHECK(dataset::merge_eating_label('A') == "walking");
    CHECK(dataset::merge_eating_label('S') == "folding");
    CHECK_THROWS_AS(dataset::merge_eating_label('N'), UnknownActivity);
    CHECK_THROWS_AS(dataset::merge_eating_label('z'), UnknownActivity);
}

TEST_CASE("merge_eating_label is idempotent on its output space") {
    const char codes[] = {'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I',
                          'J', 'K', 'L', 'M', 'O', 'P', 'Q', 'R', 'S'};
    std::set<std::string> classes;
    for (char c : codes) {
        const auto& name = dataset::merge_eating_label(c);
        classes.insert(name);
        CHECK(dataset::merge_eating_label(name) == name);
    }
    CHECK(classes.size() == 15);
    CHECK(dataset::class_names().size() == 15);
    CHECK(dataset::non_hand_classes().size() == 6);
    CHECK(dataset::hand_classes().size() == 9);
}

TEST_CASE("synthesize_dataset is deterministic and counts streams") {
    dataset::SynthesisOptions opts;
    opts.n_per_class = 1;
    opts.seed = 7;
    opts.samples_per_stream = 400;
    const auto a = dataset::synthesize_dataset(opts);
    const auto b = dataset::synthesize_dataset(opts);
    CHECK(a == b);  // bitwise identical

    opts.n_per_class = 2;
    const auto c = dataset::synthesize_dataset(opts);
    std::set<std::pair<int, char>> streams;
    for (const auto& r : c) streams.insert({r.subject_id, r.activity});
    CHECK(streams.size() == 30);  // 15 classes x 2 subjects
    CHECK(c.size() == 30 * 400);

    opts.seed = 8;
    CHECK(dataset::synthesize_dataset(opts) != c);
}

// Zero-crossing oracle: a sinusoid of frequency f crosses zero about 2*f
// times per second, so a 10 s window sees ~20*f sign changes. The per-class
// frequencies must show through the x axis, in increasing class order.
TEST_CASE("synthetic class frequencies verified by zero-crossing counts") {
    dataset::SynthesisOptions opts;
    opts.n_per_class = 2;
    opts.seed = 7;
    const auto readings = dataset::synthesize_dataset(opts);
    const auto windows = dataset::segment_windows(readings, opts.device_sensor);
    const auto sigs = dataset::synthetic_signatures(opts.device_sensor);

    std::map<std::string, std::pair<double, std::size_t>> crossings;  // class -> (sum, windows)
    for (const auto& w : windows) {
        const auto x = w.axis(0);
        std::size_t count = 0;
        for (std::size_t i = 1; i < x.size(); ++i)
            if ((x[i - 1] < 0.0) != (x[i] < 0.0)) ++count;
        auto& slot = crossings[dataset::merge_eating_label(w.activity)];
        slot.first += static_cast<double>(count);
        ++slot.second;
    }

    double previous = 0.0;
    for (const auto& sig : sigs) {  // signature order == increasing frequency
        const auto& slot = crossings.at(sig.class_name);
        const double mean_crossings = slot.first / static_cast<double>(slot.second);
        const double expected = 2.0 * sig.base_freq_hz * 10.0;
        CHECK(mean_crossings == doctest::Approx(expected).epsilon(0.20));
        CHECK(mean_crossings > previous);
        previous = mean_crossings;
    }
}

TEST_CASE("split_dataset floors and stratifies") {
    SUBCASE("single class of 10 rows") {
        const std::vector<std::string> labels(10, "walking");
        const auto s = dataset::split_dataset(labels, {0.8, 0.1, 0.1}, 5);
        CHECK(s.train.size() == 8);
        CHECK(s.val.size() == 1);
        CHECK(s.test.size() == 1);
    }
    SUBCASE("18310 rows reproduce the paper-scale sizes") {
        // Unequal class sizes that sum to 18310.
        const auto& classes = dataset::class_names();
        std::vector<std::string> labels;
        std::size_t remaining = 18310;
        for (std::size_t c = 0; c + 1 < classes.size(); ++c) {
            const std::size_t n = 900 + 61 * c;  // 900, 961, ... irregular
            for (std::size_t i = 0; i < n; ++i) labels.push_back(classes[c]);
            remaining -= n;
        }
        for (std::size_t i = 0; i < remaining; ++i) labels.push_back(classes.back());
        REQUIRE(labels.size() == 18310);

        const auto s = dataset::split_dataset(labels, {0.8, 0.1, 0.1}, 7);
        CHECK(s.train.size() == 14648);
        CHECK(s.val.size() == 1831);
        CHECK(s.test.size() == 1831);
    }
    SUBCASE("determinism and disjoint union") {
        std::vector<std::string> labels;
        for (int i = 0; i < 120; ++i)
            labels.push_back(dataset::class_names()[i % 5]);
        const auto a = dataset::split_dataset(labels, {0.8, 0.1, 0.1}, 11);
        const auto b = dataset::split_dataset(labels, {0.8, 0.1, 0.1}, 11);
        CHECK(a.train == b.train);
        CHECK(a.val == b.val);
        CHECK(a.test == b.test);

        std::set<std::size_t> all;
        all.insert(a.train.begin(), a.train.end());
        all.insert(a.val.begin(), a.val.end());
        all.insert(a.test.begin(), a.test.end());
        CHECK(all.size() == labels.size());
        CHECK(*all.rbegin() == labels.size() - 1);

        const auto c = dataset::split_dataset(labels, {0.8, 0.1, 0.1}, 12);
        CHECK(c.train != a.train);
    }
    SUBCASE("per-class proportions stay within one row") {
        Rng rng(21);
        std::vector<std::string> labels;
        std::map<std::string, std::size_t> per_class;
        for (int i = 0; i < 903; ++i) {
            const auto& cls = dataset::class_names()[rng.below(15)];
            labels.push_back(cls);
            ++per_class[cls];
        }
        const auto s = dataset::split_dataset(labels, {0.8, 0.1, 0.1}, 3);
        std::map<std::string, std::size_t> test_counts;
        for (auto i : s.test) ++test_counts[labels[i]];
        for (const auto& [cls, n] : per_class) {
            const double expected = 0.1 * static_cast<double>(n);
            CHECK(std::abs(static_cast<double>(test_counts[cls]) - expected) <= 1.0);
        }
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(
            dataset::split_dataset({"walking", "walking"}, {0.8, 0.1, 0.1}, 1), EmptyClass);
        const std::vector<std::string> ok(10, "walking");
        CHECK_THROWS_AS(dataset::split_dataset(ok, {0.8, 0.3, 0.1}, 1), ConfigError);
    }
}

TEST_CASE("windows csv round trip") {
    dataset::SynthesisOptions opts;
    opts.n_per_class = 1;
    opts.samples_per_stream = 200;
    opts.seed = 13;
    const auto readings = dataset::synthesize_dataset(opts);
    const auto windows = dataset::segment_windows(readings, opts.device_sensor);
    REQUIRE(windows.size() == 15);

    const fs::path dir = fs::temp_directory_path() / "har_test_windows";
    fs::create_directories(dir);
    const fs::path p = dir / "w.csv";
    dataset::write_windows_csv(p, windows);
    const auto back = dataset::read_windows_csv(p);
    REQUIRE(back.size() == windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        CHECK(back[i].subject_id == windows[i].subject_id);
        CHECK(back[i].activity == windows[i].activity);
        CHECK(back[i].start_timestamp == windows[i].start_timestamp);
        CHECK(back[i].samples == windows[i].samples);
    }

    dataset::write_windows_manifest(dir / "w.manifest.json", windows, 2);
    std::ifstream in(dir / "w.manifest.json");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(text.find("\"windows\": 15") != std::string::npos);
    CHECK(text.find("\"skipped_lines\": 2") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("gap audit reports the largest inter-sample delta") {
    auto readings = constant_run(1, 'A', 10);
    CHECK(dataset::audit_gaps({}) == std::nullopt);
    readings[5].timestamp += 400'000'000;  // one late sample
    const auto audit = dataset::audit_gaps(readings);
    REQUIRE(audit.has_value());
    CHECK(audit->max_gap_ns == 450'000'000);
    CHECK(audit->subject_id == 1);
}

TEST_SUITE_END();
