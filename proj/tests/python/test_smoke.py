"""Smoke tests for the harforge extension module."""

import math

import pytest

import harforge as hf


def test_parse_and_serialize_round_trip():
    r = hf.parse_raw_line("3,H,2000,1.5,-2.25,9.81;")
    assert r.subject_id == 3
    assert r.activity == "H"
    assert r.timestamp == 2000
    assert r.x == pytest.approx(1.5)
    back = hf.parse_raw_line(hf.serialize_reading(r))
    assert (back.x, back.y, back.z) == (r.x, r.y, r.z)

    with pytest.raises(hf.HarError):
        hf.parse_raw_line("3,Z,2000,1,2,3;")


def test_label_merge_and_class_sets():
    assert hf.merge_eating_label("H") == "eating"
    assert hf.merge_eating_label("K") == "drinking"
    assert hf.merge_eating_label("walking") == "walking"
    assert len(hf.class_names()) == 15
    assert len(hf.non_hand_classes()) == 6
    assert len(hf.hand_classes()) == 9
    assert hf.activity_description("H") == "eating soup"


def test_synthesize_window_featurize():
    readings = hf.synthesize(n_per_class=1, seed=7, samples_per_stream=400)
    assert len(readings) == 15 * 400
    windows = hf.segment_windows(readings)
    assert len(windows) == 15 * 2
    feats = hf.extract_features(windows[0])
    assert len(feats) == 45
    names = hf.feature_names()
    assert names[0] == "X0" and names[-1] == "ZPEAK"
    # Per-axis bin fractions sum to one.
    for axis in range(3):
        assert sum(feats[10 * axis : 10 * axis + 10]) == pytest.approx(1.0)


def test_feature_primitives():
    bins = hf.binned_distribution([float(d) for d in range(10)] * 20)
    assert bins == pytest.approx([0.1] * 10)
    avg, std, var, aad = hf.axis_stats([1.0, 2.0, 3.0, 4.0])
    assert avg == pytest.approx(2.5)
    assert var == pytest.approx(1.25)
    assert std == pytest.approx(math.sqrt(1.25))
    assert aad == pytest.approx(1.0)
    assert hf.time_between_peaks([1.0] * 200) == 10.0


def test_split_is_stratified_and_deterministic():
    labels = ["walking"] * 40 + ["jogging"] * 40 + ["eating"] * 40
    a = hf.split_dataset(labels, seed=7)
    b = hf.split_dataset(labels, seed=7)
    assert a == b
    train, val, test = a
    assert len(train) == 96 and len(val) == 12 and len(test) == 12
    assert not (set(train) & set(val)) and not (set(train) & set(test))


def test_wilks_manova_hand_fixture():
    r = hf.wilks_manova([[0.0], [1.0], [2.0], [3.0]], [0, 0, 1, 1])
    assert r.lambda_ == pytest.approx(0.2, abs=1e-9)
    assert r.f_stat == pytest.approx(8.0, abs=1e-9)
    assert (r.df1, r.df2) == (1.0, 2.0)

    wilks, reject, summary = hf.device_difference(
        [[0.0], [0.1], [0.2], [0.3]], [[5.0], [5.1], [5.2], [5.3]], "accel"
    )
    assert reject and "reject" in summary


def test_classification_and_forecast_metrics():
    rep = hf.classification_report(["a", "a", "b", "b"], ["a", "a", "a", "b"], ["a", "b"])
    assert rep["macro_f1"] == pytest.approx(11.0 / 15.0)
    assert rep["per_class"]["a"]["f1"] == pytest.approx(0.8)

    m = hf.forecast_metrics([[100.0, 100.0, 100.0]], [[50.0, 50.0, 50.0]])
    assert m["rmse"] == pytest.approx(50.0)
    assert m["mape"] == pytest.approx(50.0)
    assert m["smape"] == pytest.approx(200.0 / 3.0)


def test_train_classify_and_save(tmp_path):
    readings = hf.synthesize(n_per_class=2, seed=7)
    windows = hf.segment_windows(readings)
    rows = [hf.extract_features(w) for w in windows]
    labels = [hf.merge_eating_label(w.activity) for w in windows]

    clf = hf.train_classifier("cnn", rows, labels, seed=7, epochs=3)
    assert clf.name == "CNN"
    assert 1 <= clf.epochs_trained <= 3
    assert len(clf.history) == clf.epochs_trained

    preds = clf.predict(rows[:30])
    assert len(preds) == 30
    assert set(preds) <= set(hf.class_names())

    base = tmp_path / "ckpt"
    clf.save(base)
    loaded = hf.load_classifier(base)
    assert loaded.predict(rows[:5]) == preds[:5]


def test_forecast_rollout():
    stream = []
    for i in range(4800):
        t = i / 20.0
        w = 2.0 * math.pi * t  # 1 Hz
        stream.append([math.sin(w), math.sin(w + 2.0), math.cos(w)])
    out = hf.forecast(stream, epochs=2, seed=7, train_stride=8)
    assert len(out["predicted"]) == 600
    assert len(out["actual"]) == 600
    assert out["rmse"] >= 0.0
