import numpy as np
import pytest

from modrec.expertfeat import (FEATURE_NAMES, N_FEATURES, Standardizer, extract_features,
                               featurize_dataset, lag_product, moment_stats, principal_angle,
                               read_csv, write_csv)
from modrec.modem import generate_signal


def idx(lag, transform, power, moment):
    return FEATURE_NAMES.index(f"lag{lag}_{transform}_p{power}_m{moment}")


def test_feature_layout():
    assert N_FEATURES == 32 == len(FEATURE_NAMES) == len(set(FEATURE_NAMES))
    assert FEATURE_NAMES[0] == "lag0_complex_p1_m1"
    assert FEATURE_NAMES[-1] == "lag8_absphase_p2_m2"


@pytest.mark.parametrize("lag", [1, 8, 50])
def test_lag_product_constant(lag):
    c = 0.6 - 0.8j
    np.testing.assert_allclose(lag_product(np.full(128, c), lag), abs(c) ** 2)


def test_lag_product_tone():
    w = 0.3
    x = np.exp(1j * w * np.arange(128))
    np.testing.assert_allclose(lag_product(x, 8), np.exp(-1j * 8 * w))


def test_lag_zero_identity_and_range(rs):
    x = rs.standard_normal(16) + 0j
    np.testing.assert_array_equal(lag_product(x, 0), x)
    with pytest.raises(ValueError):
        lag_product(x, 16)


def test_principal_angle_branch():
    a = principal_angle(np.array([-1 + 0j, -1 - 0j, 0j, 1j]))
    assert a[0] == pytest.approx(np.pi) and a[1] == pytest.approx(np.pi)
    assert a[2] == 0 and a[3] == pytest.approx(np.pi / 2)


def test_moment_stats_constant_one():
    y = np.ones(50, dtype=complex)
    for p in (1, 2):
        np.testing.assert_allclose(moment_stats(y, p, 1), [1, 1, 0, 0])
        np.testing.assert_allclose(moment_stats(y, p, 2), [0, 0, 0, 0])


def test_squaring_collapses_bpsk_phase():
    y = np.array([1.0 + 0j, -1.0 + 0j])
    assert moment_stats(y, 2, 1)[0] == pytest.approx(1.0)
    assert moment_stats(y, 2, 2)[0] == pytest.approx(0.0)
    assert moment_stats(y, 1, 1)[0] == pytest.approx(0.0)


def test_gaussian_mean_vanishes(rs):
    y = (rs.standard_normal(10**4) + 1j * rs.standard_normal(10**4)) / np.sqrt(2)
    assert moment_stats(y, 1, 1)[0] < 0.05


def test_moment_validation():
    with pytest.raises(ValueError):
        moment_stats(np.ones(4), 1, 3)
    with pytest.raises(ValueError):
        moment_stats(np.ones(0), 1, 1)


def test_constant_frame_vector():
    f = extract_features(np.ones(128, dtype=complex))
    expect = np.zeros(32)
    for lag in (0, 8):
        for t in ("complex", "amplitude"):
            for p in (1, 2):
                expect[idx(lag, t, p, 1)] = 1.0
    np.testing.assert_allclose(f, expect, atol=1e-15)


def test_bpsk_square_mean_dominates():
    f = extract_features(np.stack([generate_signal("BPSK", 128, seed=s) for s in range(20)]))
    squared, plain = f[:, idx(0, "complex", 2, 1)], f[:, idx(0, "complex", 1, 1)]
    np.testing.assert_allclose(squared, 1.0)   # real signal: mean of x^2 is its power
    assert squared.mean() > 5 * plain.mean()


def test_phase_rotation_invariance():
    x = generate_signal("QAM16", 128, seed=2)
    a, b = extract_features(x), extract_features(x * np.exp(1j * 1.1))
    # amplitude and |complex| statistics ignore a global phase, and lag
    # products cancel it entirely
    keep = [i for i, n in enumerate(FEATURE_NAMES)
            if "amplitude" in n or "complex" in n or n.startswith("lag8")]
    np.testing.assert_allclose(a[keep], b[keep], rtol=1e-9, atol=1e-12)


def test_batch_matches_single(rs):
    frames = rs.standard_normal((5, 128)) + 1j * rs.standard_normal((5, 128))
    batch = extract_features(frames)
    assert batch.shape == (5, 32)
    for i in range(5):
        np.testing.assert_allclose(batch[i], extract_features(frames[i]))


def test_standardizer_contract(rs):
    Xtr = rs.normal(3, 5, (200, 32))
    Xte = rs.normal(3, 5, (50, 32))
    s = Standardizer()
    Z = s.fit_transform(Xtr)
    assert np.max(np.abs(Z.mean(axis=0))) < 1e-9
    assert np.max(np.abs(Z.std(axis=0) - 1)) < 1e-9
    # test data uses the training statistics, not its own
    np.testing.assert_allclose(s.transform(Xte), (Xte - Xtr.mean(0)) / Xtr.std(0))


def test_standardizer_constant_column_and_unfit():
    X = np.ones((10, 3))
    assert np.all(Standardizer().fit_transform(X) == 0)
    with pytest.raises(RuntimeError):
        Standardizer().transform(X)


def test_featurize_dataset_shape(tiny_dataset):
    X, y = featurize_dataset(tiny_dataset)
    assert X.shape == (len(tiny_dataset), 32)
    np.testing.assert_array_equal(y, tiny_dataset.labels)


def test_csv_round_trip_and_stable_header(tmp_path, rs):
    X = rs.standard_normal((4, 32))
    p = tmp_path / "f.csv"
    write_csv(p, X, labels=[1, 2, 3, 4], snrs=[0, 0, 2, 2])
    first = p.read_bytes()
    header, arr = read_csv(p)
    assert header[:32] == FEATURE_NAMES and header[32:] == ["label", "snr"]
    np.testing.assert_allclose(arr[:, :32], X, rtol=1e-9)
    write_csv(p, X, labels=[1, 2, 3, 4], snrs=[0, 0, 2, 2])
    assert p.read_bytes() == first
