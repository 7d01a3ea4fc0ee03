import numpy as np
import pytest

from cgtex import energy as E
from cgtex import tensor as T
from cgtex import trainer as tr
from cgtex.errors import ContractError
from cgtex.generator import GeneratorSpec, build_generator, generate
from cgtex.gradcheck import rel_error
from cgtex.optim import OptimizerState
from cgtex.sampler import SamplerConfig
from oracles import kle_loop


def tiny_spec(statistic="gram"):
    return E.default_spec("image", m=2, n=1, statistic=statistic, channels=4)


@pytest.fixture
def f0():
    return np.random.default_rng(0).random((16, 16, 3)).astype(np.float32)


def test_d_step_at_exemplar_leaves_weights(f0):
    net = E.build_network(tiny_spec(), 0, f0.shape)
    before = [p.copy() for p in net.params]
    energies = tr.d_learning_step(net, [f0.copy(), f0.copy()], f0, OptimizerState("adam", 0.001))
    assert energies == [0.0, 0.0]
    assert all(np.array_equal(a, b) for a, b in zip(before, net.params))


def test_d_step_ascends_mean_energy(f0):
    rng = np.random.default_rng(1)
    with T.precision(np.float64):
        x0 = f0.astype(np.float64)
        net = E.build_network(tiny_spec(), 2, f0.shape)
        samples = [rng.random(f0.shape) for _ in range(3)]
        old = [p.copy() for p in net.params]
        tr.d_learning_step(net, samples, x0, OptimizerState("plain", 1e-3))
        d = [n - o for n, o in zip(net.params, old)]

        def mean_energy(params):
            net.params = params
            stats = E.exemplar_stats(net, x0)
            return np.mean([E.energy(net, s, stats).item() for s in samples])

        h = 1e-2
        up = mean_energy([o + h * di for o, di in zip(old, d)])
        down = mean_energy([o - h * di for o, di in zip(old, d)])
    assert (up - down) / (2 * h) >= 0


def test_kle_values():
    a = np.zeros((3, 3))
    assert tr.kle([a, a]).item() == 0.0
    b = a.copy()
    b[1, 2] = 3
    assert tr.kle([a, b]).item() == 3.0
    rng = np.random.default_rng(2)
    for _ in range(10):
        s = [rng.random((5, 5, 3)) for _ in range(4)]
        with T.precision(np.float64):
            assert abs(tr.kle(s).item() - kle_loop(s)) < 1e-4
    with pytest.raises(ContractError):
        tr.kle([a])


def _g_setup(seed=0):
    with T.precision(np.float64):
        rng = np.random.default_rng(seed)
        f0 = rng.random((8, 8, 3))
        net = E.build_network(E.default_spec("image", m=2, n=0, channels=3), seed, f0.shape)
        gen = build_generator(GeneratorSpec("image", octaves=2, width=2), seed)
        zs = [gen.noise((8, 8), rng) for _ in range(2)]
        return f0, net, gen, zs, E.exemplar_stats(net, f0)


def test_g_loss_gradient_matches_finite_differences():
    f0, net, gen, zs, stats = _g_setup()
    with T.precision(np.float64):
        def loss(theta):
            outs = [generate(gen, z, theta) for z in zs]
            mean = T.scale(T.add_scalars([E.energy(net, o, stats) for o in outs]), 0.5)
            return T.sub(mean, tr.kle(outs))

        err = rel_error(loss, gen.params, h=1e-4, max_coords=4, rng=np.random.default_rng(0))
    assert err < 1e-2


def test_g_step_without_entropy_allows_single_input():
    f0, net, gen, zs, stats = _g_setup()
    with T.precision(np.float64):
        mean_e, k = tr.g_learning_step(gen, net, stats, zs[:1], OptimizerState("adam"), kle_weight=0)
    assert k == 0.0 and mean_e > 0
    with pytest.raises(ContractError):
        tr.g_learning_step(gen, net, stats, zs[:1], OptimizerState("adam"), kle_weight=1)


def test_identical_noise_kle_has_no_gradient():
    f0, net, gen, zs, stats = _g_setup()
    with T.precision(np.float64):
        other = build_generator(gen.spec, 0)
        other.load_state_dict(gen.state_dict())
        tr.g_learning_step(gen, net, stats, [zs[0], zs[0]], OptimizerState("adam"), kle_weight=1)
        tr.g_learning_step(other, net, stats, [zs[0], zs[0]], OptimizerState("adam"), kle_weight=0)
    assert all(np.array_equal(a, b) for a, b in zip(gen.params, other.params))


def test_config_defaults_and_validation():
    cfg = tr.TrainConfig()
    assert (cfg.K, cfg.T, cfg.init_std) == (3, 5000, 0.1)
    assert tr._lr_d(cfg, E.default_spec("image")) == 0.001
    assert tr._lr_d(cfg, E.default_spec("sound")) == 0.0001
    assert tr._lr_d(tr.TrainConfig(lr_d=0.01), E.default_spec("sound")) == 0.01
    with pytest.raises(ContractError):
        tr.TrainConfig(T=0)
    with pytest.raises(ContractError):
        tr.TrainConfig(mode="gan")


def test_single_iteration_contract(f0):
    cfg = tr.TrainConfig(K=2, T=1, sampler=SamplerConfig(n_steps=2))
    st = tr.train_c_cgcnn(f0, tiny_spec(), cfg)
    assert st.iteration == 1 and st.d_updates == 1
    assert [(t, k) for t, k, _ in st.trace] == [(1, 0), (1, 1)]


def test_fixed_d_keeps_weights_and_matches_descent(f0):
    spec = tiny_spec()
    net = E.build_network(spec, 0, f0.shape)
    before = net.checksum()
    eps = 0.3
    cfg = tr.TrainConfig(mode="fixed-d", K=1, T=5, init_std=0.1,
                         sampler=SamplerConfig(eps, n_steps=4, noise=False, preconditioner="plain"))
    st = tr.train_fixed_d(f0, spec, cfg, net=net)
    assert net.checksum() == before
    f = T.gaussian_noise(f0.shape, 0.1, np.random.default_rng([0, 1, 0]))
    stats = E.exemplar_stats(net, f0)
    for _ in range(20):
        _, g = E.energy_and_grad(net, f, stats)
        f = f - f.dtype.type(0.5 * eps * eps) * g
    assert np.array_equal(f, st.samples[0])


def test_f_cgcnn_update_order(f0, monkeypatch):
    calls = []
    d_step, g_step = tr.d_learning_step, tr.g_learning_step
    monkeypatch.setattr(tr, "d_learning_step", lambda *a, **k: calls.append("D") or d_step(*a, **k))
    monkeypatch.setattr(tr, "g_learning_step", lambda *a, **k: calls.append("G") or g_step(*a, **k))
    cfg = tr.TrainConfig(mode="f-cgcnn", K=2, T=3)
    st = tr.train_f_cgcnn(f0, tiny_spec(), GeneratorSpec("image", octaves=2, width=2), cfg)
    assert calls == ["D", "G"] * 3
    assert st.d_updates == st.g_updates == 3 and len(st.kle_trace) == 3


def test_train_dispatch_is_deterministic(f0):
    cfg = tr.TrainConfig(K=2, T=2, sampler=SamplerConfig(n_steps=2))
    a = tr.train(f0, tiny_spec(), cfg)
    b = tr.train(f0, tiny_spec(), cfg)
    assert a.trace == b.trace
    assert all(np.array_equal(x, y) for x, y in zip(a.samples, b.samples))
