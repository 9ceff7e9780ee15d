import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganprint.attribution import (PUBLISHED_4CLASS, PUBLISHED_6CLASS, AttributionClassifier, ClassifierFormatError,
                                  ClassifierParams, ConfusionMatrix, check_published_tables, evaluate,
                                  family_dataset, features_of, high_band_energy, load_classifier, predict,
                                  precision_row, save_classifier, spectrum_figure_data, stratified_split,
                                  train_classifier)
from ganprint.imaging import Dataset, make_rng


def clusters(seed=0, n=50):
    rng = make_rng(seed)
    x = np.concatenate([rng.normal(5, 0.1, (n, 2)), rng.normal(-5, 0.1, (n, 2))])
    return x, ["a"] * n + ["b"] * n


def test_published_precision_examples():
    t2 = ConfusionMatrix(PUBLISHED_4CLASS["counts"], PUBLISHED_4CLASS["classes"])
    prec, empty = precision_row(t2)
    assert round(prec[2], 4) == 0.9708 and round(prec[0], 4) == 0.8970
    assert not empty.any()
    t3 = ConfusionMatrix(PUBLISHED_6CLASS["counts"], PUBLISHED_6CLASS["classes"])
    assert round(precision_row(t3)[0][5], 4) == 0.9487
    assert all(ok for *_, ok in check_published_tables())


def test_confusion_conservation_and_empty_column():
    m = ConfusionMatrix([[3, 0], [2, 0]], ("x", "y"))
    prec, empty = precision_row(m)
    assert prec[0] == pytest.approx(0.6) and np.isnan(prec[1]) and empty.tolist() == [False, True]
    assert m.total == 5 and m.counts.sum(axis=1).tolist() == [3, 2]
    with pytest.raises(ValueError):
        ConfusionMatrix([[1, -1], [0, 0]], ("x", "y"))


def test_confusion_csv_layout():
    m = ConfusionMatrix([[2, 1], [0, 3]], ("x", "y"))
    lines = m.to_csv().splitlines()
    assert lines[0] == "true\\pred,x,y"
    assert lines[1] == "x,2,1"
    assert lines[-1] == "precision,1.0000,0.7500"


def test_zero_epochs_uniform_and_tiebreak():
    x, y = clusters()
    p = train_classifier(x, y, epochs=0)
    labels, probs = predict(p, x[:3])
    assert labels == ["a"] * 3
    assert np.allclose(probs, 0.5)


def test_separable_clusters():
    x, y = clusters()
    p = train_classifier(x, y, epochs=100)
    assert evaluate(p, x, y).accuracy == 1.0
    tx, ty = clusters(seed=1, n=10)
    assert predict(p, tx)[0] == ty


def test_training_deterministic_and_monotone():
    x, y = clusters()
    h1, h2 = [], []
    p1 = train_classifier(x, y, epochs=50, seed=1, history=h1)
    p2 = train_classifier(x, y, epochs=50, seed=1, history=h2)
    assert np.array_equal(p1.weights, p2.weights) and h1 == h2
    assert all(b <= a + 1e-12 for a, b in zip(h1, h1[1:]))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32), st.floats(-100, 100))
def test_probabilities_and_shift_invariance(seed, shift):
    rng = make_rng(seed)
    k, d = 4, 5
    p = ClassifierParams(rng.standard_normal((k, d)), rng.standard_normal(k), tuple("abcd"),
                         np.zeros(d), np.ones(d))
    q = ClassifierParams(p.weights, p.bias + shift, p.class_names, p.mean, p.scale)
    f = rng.standard_normal((7, d))
    la, pa = predict(p, f)
    lb, pb = predict(q, f)
    assert np.all(pa >= 0) and np.allclose(pa.sum(axis=1), 1, atol=1e-9)
    assert la == lb and np.allclose(pa, pb, atol=1e-9)


def test_training_errors():
    x, y = clusters()
    with pytest.raises(ValueError):
        train_classifier(x, ["a"] * len(x))
    with pytest.raises(ValueError):
        train_classifier(x[:, :1].ravel(), y)
    p = train_classifier(x, y, epochs=5)
    with pytest.raises(ValueError):
        predict(p, np.zeros((1, 3)))
    with pytest.raises(ValueError):
        evaluate(p, x[:2], ["a", "zzz"])


def test_constant_predictor_precision():
    x, y = clusters()
    p = train_classifier(x, y, epochs=0)
    m = evaluate(p, x, y)
    assert m.counts[:, 1].sum() == 0
    assert precision_row(m)[0][0] == pytest.approx(0.5)


def test_classifier_file_roundtrip(tmp_path):
    x, y = clusters()
    p = train_classifier(x, y, epochs=30)
    path = tmp_path / "c.gpcl"
    save_classifier(p, path)
    q = load_classifier(path)
    assert q.class_names == p.class_names
    assert np.array_equal(predict(q, x)[1], predict(p, x)[1])
    raw = path.read_bytes()
    for bad in (b"NOPE" + raw[4:], raw[:-1], raw + b"x", raw[:4] + b"\x09\x00" + raw[6:]):
        path.write_bytes(bad)
        with pytest.raises(ClassifierFormatError):
            load_classifier(path)


def test_estimator_wrapper():
    x, y = clusters()
    est = AttributionClassifier(epochs=50).fit(x, y)
    assert est.score(x, y) == 1.0
    assert est.predict_proba(x).shape == (100, 2)
    assert est.get_params()["epochs"] == 50


def test_family_dataset_and_split():
    d = family_dataset(10, 32, 3)
    assert sorted(set(d.labels)) == ["Real", "bilinear", "checkerboard_tconv", "nearest"]
    tr, te = stratified_split(d, 0.8, make_rng(0))
    for name in set(d.labels):
        assert tr.labels.count(name) == 8 and te.labels.count(name) == 2
    assert np.array_equal(family_dataset(10, 32, 3).images, d.images)


def test_spectrum_figure_data():
    d = family_dataset(6, 32, 1)
    fig = spectrum_figure_data(d)
    assert set(fig) == set(d.labels) and fig["Real"].shape == (32, 32)
    assert high_band_energy(fig["checkerboard_tconv"]) > high_band_energy(fig["bilinear"])
    one = d.subset([0])
    from ganprint.spectral import log_spectrum
    assert np.allclose(spectrum_figure_data(one)[d.labels[0]], log_spectrum(d.images[0], flatten=False))
    dup = Dataset(np.concatenate([one.images, one.images]), one.labels * 2, ("p", "q"))
    assert np.allclose(spectrum_figure_data(dup)[d.labels[0]], spectrum_figure_data(one)[d.labels[0]])
    with pytest.raises(ValueError):
        spectrum_figure_data(d.subset([]))


def test_family_dataset_survives_disk_roundtrip(tmp_path):
    from ganprint.imaging import load_dataset, save_dataset
    d = family_dataset(2, 16, 3)
    back = load_dataset(save_dataset(d, tmp_path / "fam"))
    assert np.array_equal(back.images, d.images) and back.labels == d.labels
