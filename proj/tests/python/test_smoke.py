import math

import numpy as np
import pytest

import teffpose as tp


@pytest.fixture(scope="module")
def field():
    return tp.make_template(seed=1, dims=24)


@pytest.fixture(scope="module")
def bank(field):
    return tp.build_bank(field, n_theta=12, n_phi=1, size=40)


def test_render_shapes(field):
    out = tp.render(field, theta=0.5, phi=math.pi / 2, size=32)
    assert out["feature"].shape == (32, 32, 3)
    assert out["depth"].shape == (32, 32, 1)
    assert 0.0 <= out["alpha"].min() and out["alpha"].max() <= 1.0


def test_bank_recovers_its_own_views(bank):
    assert len(bank) == 12
    for k in (0, 4, 9):
        est = bank.estimate(bank.template(k), tau=100.0)
        assert est["index"] == k
        assert est["probs"].shape == (12,)
        assert est["probs"].sum() == pytest.approx(1.0)
        assert est["theta"] == pytest.approx(bank.poses[k]["theta"])


def test_bank_round_trip(bank, tmp_path):
    path = tmp_path / "bank.tpb"
    bank.save(path)
    back = tp.PoseBank.load(path)
    assert np.array_equal(back.template(3), bank.template(3))


def test_softmax_and_kl():
    p = tp.pose_pdf([0.0, 1.0, 2.0], 1.0)
    np.testing.assert_allclose(p, [0.66524, 0.24473, 0.09003], atol=1e-5)
    assert tp.kl_divergence([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.1438, abs=1e-4)
    draws = tp.sample_indices(p, 20000, seed=3)
    assert np.bincount(draws, minlength=3)[0] / 20000 == pytest.approx(p[0], abs=0.02)


def test_registration(field):
    img = tp.render(field, theta=1.0, phi=1.5)["feature"]
    target = tp.warp(img, 1.15, math.radians(20))
    scale, rot = tp.estimate_scale_rotation(img, target)
    assert scale == pytest.approx(1.15, abs=0.02)
    assert math.degrees(rot) == pytest.approx(20, abs=1.5)
    gray = img[..., 0]
    shifted = np.roll(gray, (3, -2), axis=(0, 1))
    dx, dy, _ = tp.phase_correlate(gray, shifted)
    assert (round(dx), round(dy)) == (-2, 3)


def test_errors(bank, tmp_path):
    with pytest.raises(tp.DimensionError):
        bank.estimate(np.zeros((8, 8, 3), np.float32))
    with pytest.raises(ValueError):
        tp.make_template(feature_mode="rgb")
    bad = tmp_path / "bad.tfm"
    bad.write_bytes(b"TFM1\x01")
    with pytest.raises(tp.FormatError):
        tp.read_feature_map(bad)
