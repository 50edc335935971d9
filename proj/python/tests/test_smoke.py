import math

import numpy as np
import pytest

import gridcaps


@pytest.fixture(scope="module")
def ieee14():
    return gridcaps.load_grid_case("ieee14")


@pytest.fixture(scope="module")
def samples(ieee14):
    return gridcaps.generate(ieee14, 30, seed=4)


def test_cases(ieee14):
    assert set(gridcaps.supported_cases()) >= {"ieee14", "ieee39", "ieee57"}
    assert ieee14.n_gen == 5
    assert ieee14.n_load == len(ieee14.load_buses)
    assert all(e.real < 0 for e in ieee14.attack_free_eigenvalues())
    with pytest.raises(gridcaps.ConfigError):
        gridcaps.load_grid_case("ieee118")


def test_generated_windows(samples):
    w = samples.windows()
    assert w.shape == (30, 5, 100, 2)
    assert w.dtype == np.float32
    assert np.all(np.abs(w[..., 0] - 50.0) < 5.0)
    labels = samples.labels()
    assert labels.shape == (30,)
    assert labels.min() >= 0 and labels.max() < len(samples.class_map)
    assert [samples.class_map[i] for i in labels] == samples.label_buses()


def test_round_trip(samples, tmp_path):
    path = tmp_path / "s.gcap"
    samples.save(path)
    back = gridcaps.load_dataset(path)
    assert back.sha256() == samples.sha256()
    np.testing.assert_array_equal(back.windows(), samples.windows())
    path.write_bytes(b"junk")
    with pytest.raises(gridcaps.FormatError):
        gridcaps.load_dataset(path)


def test_degrade(samples, ieee14):
    noisy = gridcaps.degrade(samples, snr_db=20.0, seed=1)
    assert noisy.sha256() != samples.sha256()
    assert noisy.sha256() == gridcaps.degrade(samples, snr_db=20.0, seed=1).sha256()
    with pytest.raises(gridcaps.ConfigError):
        gridcaps.degrade(samples, delay_s=0.3)
    delayed = gridcaps.degrade(samples, delay_s=0.3, grid=ieee14)
    assert delayed.windows().shape == samples.windows().shape


def test_model_scores(samples):
    model = gridcaps.untrained_model("capsnet", "ieee14", 5, 9, seed=2)
    assert model.kind == "capsnet"
    s = model.scores(samples.windows())
    assert s.shape == (30, 9)
    assert np.all((s >= 0) & (s < 1))
    pred = model.predict(samples.windows())
    np.testing.assert_array_equal(pred, np.argmax(s, axis=1))
    mlp = gridcaps.untrained_model("mlp", "ieee14", 5, 9)
    np.testing.assert_allclose(mlp.scores(samples.windows()).sum(axis=1), 1.0, rtol=1e-5)
    with pytest.raises(gridcaps.StructuralError):
        model.scores(np.zeros((2, 5, 100, 3), dtype=np.float32))


def test_capsule_math():
    assert gridcaps.squash([0.0, 0.0]) == [0.0, 0.0]
    v = gridcaps.squash([0.6, 0.8])
    assert math.hypot(*v) == pytest.approx(0.5)
    assert gridcaps.margin_loss([0.0, 0.0], 0) == pytest.approx(0.81)
    assert gridcaps.margin_loss([0.9, 0.1], 0) == 0.0
    assert gridcaps.episode_accuracy([1] * 10, [1] * 10, 2) == 1.0
    r = gridcaps.check_routing_invariants(20, 1)
    assert r.passed, r.detail
