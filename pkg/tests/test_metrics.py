import numpy as np
import pytest

from cgtex.errors import ContractError, ShapeError
from cgtex.metrics import MsSsimConfig, ms_ssim, ms_ssim_frames, score, to_luma
from cgtex.synthetic import periodic_image
from oracles import ms_ssim_reference


def test_self_similarity_is_one():
    x = np.random.default_rng(0).random((64, 64, 3))
    assert ms_ssim(x, x) == 1.0


def test_symmetry():
    rng = np.random.default_rng(1)
    a, b = rng.random((64, 64, 3)), rng.random((64, 64, 3))
    assert abs(ms_ssim(a, b) - ms_ssim(b, a)) < 1e-6


def test_matches_reference_at_full_scale():
    rng = np.random.default_rng(2)
    base = rng.random((256, 256))
    a = base
    b = np.clip(base + 0.2 * rng.standard_normal(base.shape), 0, 1)
    assert abs(ms_ssim(a, b) - ms_ssim_reference(a, b)) < 1e-4


def test_matches_reference_on_random_instances():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a = rng.random((48, 48, 3))
        b = np.clip(a + rng.uniform(0.05, 0.5) * rng.standard_normal(a.shape), 0, 1)
        assert abs(ms_ssim(a, b) - ms_ssim_reference(a, b)) < 1e-4


def test_range_and_monotone_degradation():
    img = periodic_image(128, contrast=0.12)
    rng = np.random.default_rng(4)
    noise = rng.standard_normal(img.shape)
    scores = [ms_ssim(img, np.clip(img + s * noise, 0, 1)) for s in (0.02, 0.08, 0.3)]
    assert all(0 <= s <= 1 for s in scores)
    assert scores[0] > scores[1] > scores[2]


def test_luma_weights():
    x = np.zeros((1, 1, 3))
    x[..., 1] = 1
    assert to_luma(x)[0, 0] == pytest.approx(0.587)


def test_errors():
    with pytest.raises(ShapeError):
        ms_ssim(np.zeros((32, 32)), np.zeros((32, 33)))
    with pytest.raises(ShapeError, match="minimum"):
        ms_ssim(np.zeros((8, 8)), np.zeros((8, 8)))
    with pytest.raises(ShapeError, match="minimum"):
        ms_ssim(np.zeros((64, 64)), np.zeros((64, 64)), MsSsimConfig())


def test_standard_config():
    cfg = MsSsimConfig()
    assert cfg.weights == pytest.approx((0.0448, 0.2856, 0.3001, 0.2363, 0.1333), abs=1e-3)
    assert cfg.min_extent == 176
    assert MsSsimConfig().fitted((64, 64)).scales == 3


def test_waveform():
    t = np.linspace(0, 40, 4000)
    a = np.sin(t)
    assert ms_ssim(a, a) == 1.0
    assert ms_ssim(a, a + 0.3 * np.random.default_rng(0).standard_normal(a.shape)) < 0.9


def test_frames():
    rng = np.random.default_rng(5)
    a = rng.random((48, 48, 12, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert ms_ssim_frames(a, a) == 1.0
    loop = np.mean([ms_ssim_reference(a[:, :, t], b[:, :, t]) for t in range(12)])
    assert abs(ms_ssim_frames(a, b) - loop) < 1e-4
    s1, s2 = ms_ssim(a[:, :, 0], b[:, :, 0]), ms_ssim(a[:, :, 1], b[:, :, 1])
    assert ms_ssim_frames(a[:, :, :2], b[:, :, :2]) == pytest.approx((s1 + s2) / 2)
    assert score(a, b) == ms_ssim_frames(a, b)
    with pytest.raises(ContractError):
        ms_ssim_frames(a, b[:, :, :5])
