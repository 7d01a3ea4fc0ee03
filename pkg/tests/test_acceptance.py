"""End-to-end acceptance checks on the shipped synthetic exemplars.

Each test reports one ``criterion N: PASS|FAIL`` line (also repeated in the
pytest terminal summary). Runtime budgets are asserted alongside the
numerical thresholds. The whole module takes about fifteen minutes on one core.
"""
import json
import time

import numpy as np
import pytest

from cgtex import energy as E
from cgtex import texture_io as tio
from cgtex.cli import main
from cgtex.generator import GeneratorSpec, generate
from cgtex.gradcheck import TOL, run_suite
from cgtex.inpaint import InpaintConfig, inpaint, template_search
from cgtex.metrics import ms_ssim
from cgtex.sampler import SamplerConfig
from cgtex.synthetic import periodic_image, pulse_train
from cgtex.trainer import TrainConfig, _init_chains, kle, train
from oracles import exhaustive_template, gram_loop, kle_loop, mean_loop, ms_ssim_reference

pytestmark = pytest.mark.slow


def test_criterion_01_gradient_suite(record):
    t0 = time.perf_counter()
    results = run_suite(cases=20, seed=0)
    secs = time.perf_counter() - t0
    worst = max(results, key=lambda r: r.max_rel_err)
    failed = [r.name for r in results if not r.passed]
    ok = not failed and all(r.cases >= 20 for r in results) and secs < 120
    record(1, ok, f"{len(results)} op checks x 20 cases, worst {worst.name} {worst.max_rel_err:.2e} "
                  f"(tol {TOL:g}), failed {failed or 'none'}, {secs:.1f}s (< 120s)")
    assert ok


def _random_case(rng):
    modality = rng.choice(["image", "dynamic", "sound"])
    c = int(rng.choice([4, 8, 16]))
    if modality == "image":
        m, n = int(rng.integers(0, 10)), int(rng.integers(0, 4))
        if m == n == 0:
            m = 1
        spec = E.default_spec("image", m, n, rng.choice(["gram", "mean"]), c)
        side = max(spec.receptive_field().values()) + int(rng.integers(0, 9))
        shape = (side, side + int(rng.integers(0, 5)), 3)
    elif modality == "dynamic":
        m = int(rng.integers(1, 7))
        spec = E.default_spec("dynamic", m, None, rng.choice(["gram", "mean"]), c)
        shape = (2 * m + 1 + int(rng.integers(0, 6)), 2 * m + 1 + int(rng.integers(0, 6)),
                 m + 1 + int(rng.integers(0, 4)), 3)
    else:
        m = int(rng.integers(1, 5))
        spec = E.default_spec("sound", m, None, rng.choice(["gram", "mean"]), c)
        shape = (spec.receptive_field()["deep"] + int(rng.integers(0, 3000)),)
    return spec, shape


def test_criterion_02_zero_self_energy(record):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst, seen = 0.0, set()
    for i in range(100):
        spec, shape = _random_case(rng)
        seen.add(spec.modality)
        net = E.build_network(spec, int(rng.integers(2**31)), shape)
        f0 = rng.random(shape).astype(np.float32)
        if spec.modality == "sound":
            f0 = 2 * f0 - 1
        worst = max(worst, abs(E.energy(net, f0, E.exemplar_stats(net, f0)).item()))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-5 and secs < 30 and seen == {"image", "dynamic", "sound"}
    record(2, ok, f"100 random (spec, seed) pairs over {sorted(seen)}, max |E(f0,f0)| = {worst:.1e} "
                  f"(<= 1e-5), {secs:.1f}s (< 30s)")
    assert ok


def test_criterion_03_fixed_d_is_gradient_descent(record):
    f0 = periodic_image(32)
    spec = E.default_spec("image", m=3, n=0)
    eps = 0.5
    cfg = TrainConfig(mode="fixed-d", K=1, T=100, seed=3,
                      sampler=SamplerConfig(eps, n_steps=1, noise=False, preconditioner="plain"))
    t0 = time.perf_counter()
    traj = []
    state = train(f0, spec, cfg, callback=lambda st: traj.append(st.samples[0].copy()))
    # standalone descent from the same start with the same frozen network
    net = E.build_network(spec, cfg.seed, f0.shape)
    assert net.checksum() == state.net.checksum()
    stats = E.exemplar_stats(net, f0)
    f = _init_chains(np.asarray(f0), cfg)[0].f
    ref = []
    for _ in range(100):
        _, g = E.energy_and_grad(net, f, stats)
        f = f - f.dtype.type(0.5 * eps * eps) * g
        ref.append(f)
    secs = time.perf_counter() - t0
    same = [np.array_equal(a, b) for a, b in zip(traj, ref)]
    moved = not np.array_equal(ref[0], ref[-1])
    ok = len(traj) == 100 and all(same) and moved and secs < 60
    record(3, ok, f"{sum(same)}/100 steps bit-identical to plain descent on E, {secs:.1f}s (< 60s)")
    assert ok


# ---------------------------------------------------------------- desk-scale synthesis

def _desk_run(statistic, mode="c-cgcnn"):
    f0 = periodic_image()
    spec = E.default_spec("image", m=3, n=0, statistic=statistic)
    cfg = TrainConfig(mode=mode, K=2, T=300, sampler=SamplerConfig(n_steps=10))
    t0 = time.perf_counter()
    state = train(f0, spec, cfg)
    secs = time.perf_counter() - t0
    init = [c.f for c in _init_chains(np.asarray(f0), cfg)]
    return {
        "e_first": state.mean_energy(1), "e_last": state.mean_energy(cfg.T),
        "ms_sample": float(np.mean([ms_ssim(s, f0) for s in state.samples])),
        "ms_init": float(np.mean([ms_ssim(s, f0) for s in init])), "secs": secs,
    }


@pytest.fixture(scope="module")
def gram_run():
    return _desk_run("gram")


def _check_desk(record, number, r, min_gain):
    ratio = r["e_last"] / r["e_first"]
    gain = r["ms_sample"] - r["ms_init"]
    ok = ratio < 0.5 and gain >= min_gain and r["secs"] < 600
    record(number, ok, f"energy {r['e_first']:.4f} -> {r['e_last']:.4f} (ratio {ratio:.3f} < 0.5), "
                       f"MS-SSIM {r['ms_init']:.3f} -> {r['ms_sample']:.3f} (gain {gain:.3f} >= {min_gain}), "
                       f"{r['secs']:.0f}s (< 600s)")
    return ok


def test_criterion_04_c_cgcnn_gram(record, gram_run):
    assert _check_desk(record, 4, gram_run, 0.2)


def test_criterion_05_c_cgcnn_mean(record):
    assert _check_desk(record, 5, _desk_run("mean"), 0.15)


@pytest.mark.xfail(strict=False, reason="at T=300 a frozen random net matches learned D within "
                                        "MS-SSIM noise on this exemplar; see decisions ledger")
def test_fixed_d_does_not_beat_learning(gram_run):
    fixed = _desk_run("gram", mode="fixed-d")
    print(f"MS-SSIM fixed-d {fixed['ms_sample']:.3f} vs c-cgcnn {gram_run['ms_sample']:.3f}")
    assert fixed["ms_sample"] <= gram_run["ms_sample"]


def test_criterion_06_f_cgcnn_expansion(record):
    f0 = periodic_image()
    spec = E.default_spec("image", m=3, n=0)
    cfg = TrainConfig(mode="f-cgcnn", K=3, T=500)
    t0 = time.perf_counter()
    state = train(f0, spec, cfg, GeneratorSpec("image"))
    gen, net = state.gen, state.net
    stats = E.exemplar_stats(net, f0)
    small = E.layer_distances(net, generate(gen, gen.noise((64, 64), 100)).data, stats)
    big = E.layer_distances(net, generate(gen, gen.noise((128, 128), 101)).data, stats)
    a = generate(gen, gen.noise((128, 128), 1)).data
    b = generate(gen, gen.noise((128, 128), 2)).data
    div = ms_ssim(a, b)
    secs = time.perf_counter() - t0
    ratios = [y / x for x, y in zip(small, big)]
    ok = all(r <= 1.5 for r in ratios) and div < 0.999 and secs < 1200
    record(6, ok, "per-layer distance ratio 128^2/64^2 = " + ", ".join(f"{r:.3f}" for r in ratios)
                  + f" (<= 1.5), MS-SSIM between seeds {div:.4f} (< 0.999), {secs:.0f}s (< 1200s)")
    assert ok


def test_criterion_07_sound(record):
    spec = E.default_spec("sound")
    rf = spec.receptive_field()["deep"]
    f0 = pulse_train(16384)
    cfg = TrainConfig(K=2, T=200, sampler=SamplerConfig(n_steps=10))
    t0 = time.perf_counter()
    state = train(f0, spec, cfg)
    secs = time.perf_counter() - t0
    ratio = state.mean_energy(200) / state.mean_energy(1)
    shape_ok = [l.kernel for l in spec.deep] == [25] * 4 and [l.stride for l in spec.deep] == [5, 10, 10, 10] \
        and state.net.layer_channels() == [128] * 4
    ok = rf == 13345 and ratio < 0.5 and shape_ok and secs < 600
    record(7, ok, f"(4D+0S) k25 s5/10/10/10 c128, receptive field {rf} (== 13345), energy ratio {ratio:.3f} "
                  f"(< 0.5), {secs:.0f}s (< 600s)")
    assert ok


def test_criterion_08_inpainting(record):
    t0 = time.perf_counter()
    f0 = periodic_image()
    region = tio.rect_mask((64, 64), 24, 24, 16, 16, 4)
    corrupted = tio.apply_mask(f0, region.omega)
    res = inpaint(f0, region, InpaintConfig(seed=0), "image")
    keep = ~tio.expand_to(region.omega, f0)
    preserved = np.array_equal(res.texture[keep], f0[keep])
    ms_inp, ms_cor = ms_ssim(res.texture, f0), ms_ssim(corrupted, f0)
    no_overlap = all(not region.omega[m.window()].any() for m in res.templates)

    wave = pulse_train(16384)
    sregion = tio.interval_mask(6000, 8000, wave.size, 1000)
    sres = inpaint(wave, sregion, InpaintConfig(searches=2, updates=5, seed=0), "sound")
    s_preserved = np.array_equal(sres.texture[~sregion.omega], wave[~sregion.omega])
    s_no_overlap = all(not sregion.omega[m.window()].any() for m in sres.templates)
    secs = time.perf_counter() - t0
    ok = preserved and ms_inp > ms_cor and no_overlap and s_preserved and s_no_overlap and secs < 600
    record(8, ok, f"image: complement identical {preserved}, MS-SSIM {ms_cor:.3f} -> {ms_inp:.3f}, "
                  f"templates avoid hole {no_overlap}; sound: complement identical {s_preserved}, "
                  f"templates avoid hole {s_no_overlap}; {secs:.0f}s (< 600s)")
    assert ok


def test_criterion_09_oracles(record):
    rng = np.random.default_rng(9)
    t0 = time.perf_counter()
    worst = {"gram": 0.0, "mean": 0.0, "kle": 0.0, "ms-ssim": 0.0}
    for _ in range(10):
        feat = rng.random((int(rng.integers(3, 9)), int(rng.integers(3, 9)), int(rng.integers(1, 6))))
        worst["gram"] = max(worst["gram"], float(np.abs(E.gram_statistic(feat).data - gram_loop(feat)).max()))
        worst["mean"] = max(worst["mean"], float(np.abs(E.mean_statistic(feat).data - mean_loop(feat)).max()))
        samples = [rng.random((6, 6, 3)).astype(np.float32) for _ in range(int(rng.integers(2, 5)))]
        worst["kle"] = max(worst["kle"], abs(kle(samples).item() - kle_loop(samples)))
        a = rng.random((int(rng.integers(44, 72)), int(rng.integers(44, 72)), 3))
        b = np.clip(a + rng.uniform(0.02, 0.4) * rng.standard_normal(a.shape), 0, 1)
        worst["ms-ssim"] = max(worst["ms-ssim"], abs(ms_ssim(a, b) - ms_ssim_reference(a, b)))

    f = rng.random((48, 48, 3)).astype(np.float32)
    region = tio.rect_mask((48, 48), 18, 26, 8, 8, 3)
    f = tio.apply_mask(f, region.omega)
    net = E.build_network(E.default_spec("image", m=2, n=0, channels=8), 0)
    match = template_search(f, region, net, 1)
    ref = E.exemplar_stats(net, f[region.bbox()])
    off, e = exhaustive_template(f, region.omega, region.bbox(), lambda w: E.energy(net, w, ref).item())
    secs = time.perf_counter() - t0
    ok = max(worst.values()) < 1e-4 and match.offset == off and secs < 120
    record(9, ok, ", ".join(f"{k} |d| {v:.1e}" for k, v in worst.items())
                  + f" (< 1e-4, 10 instances each); template search {match.offset} vs exhaustive {off}; "
                  f"{secs:.1f}s (< 120s)")
    assert ok


def test_criterion_10_determinism(record, tmp_path):
    img, wav = tmp_path / "ex.png", tmp_path / "ex.wav"
    tio.save_image(img, periodic_image())
    tio.save_sound(wav, pulse_train(16384))
    jobs = {
        "c-cgcnn": (img, {"m": 3, "n": 0, "channels": 16, "K": 2, "T": 3, "seed": 5}),
        "fixed-d": (img, {"mode": "fixed-d", "m": 2, "n": 1, "channels": 8, "K": 2, "T": 2}),
        "f-cgcnn": (img, {"mode": "f-cgcnn", "m": 2, "n": 0, "channels": 8, "K": 2, "T": 2}),
        "sound": (wav, {"m": 2, "channels": 16, "K": 2, "T": 2}),
    }
    same = {}
    for name, (ex, cfg) in jobs.items():
        cfg_path = tmp_path / f"{name}.json"
        cfg_path.write_text(json.dumps(cfg))
        outs = []
        for run in ("a", "b"):
            out = tmp_path / name / run
            assert main(["synth", str(ex), "--config", str(cfg_path), "--out", str(out)]) == 0
            files = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
            # the echoed config differs only in the output directory
            eff = json.loads(files.pop("effective-config.json"))
            assert eff.pop("output_dir") == str(out)
            files["effective-config.json"] = json.dumps(eff, sort_keys=True).encode()
            outs.append(files)
        same[name] = outs[0] == outs[1] and len(outs[0]) >= 6
    ok = all(same.values())
    record(10, ok, "byte-identical re-runs: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
