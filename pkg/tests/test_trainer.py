import numpy as np
import pytest

from guidance_lab.denoiser import NULL
from guidance_lab.errors import CheckpointError, ConfigError, DomainError, TrainingError
from guidance_lab.nn import Adam, DenoiserNet
from guidance_lab.schedule import Schedule
from guidance_lab.trainer import (
    CorruptedBatch,
    TrainConfig,
    batch_loss,
    corrupt_batch,
    drop_conditioning,
    learning_rate,
    load_checkpoint,
    loss_and_grad,
    save_checkpoint,
    train,
)
from guidance_lab.world import GmmWorld


def tiny_batch(seed=0):
    rng = np.random.default_rng(seed)
    return CorruptedBatch(
        z=rng.standard_normal((3, 2)),
        lam=rng.uniform(-10, 10, 3),
        eps=rng.standard_normal((3, 2)),
        c=np.array([0, NULL, 2]),
    )


class TestNet:
    def test_shapes_and_null_row(self):
        net = DenoiserNet(2, 3)
        assert net.params["class_embedding"].shape == (4, net.class_dim)
        out = net(np.zeros((5, 2)), 0.0, np.array([0, 1, 2, NULL, 0]))
        assert out.shape == (5, 2) and np.all(np.isfinite(out))

    def test_deterministic(self, rng):
        net = DenoiserNet(2, 3, seed=4)
        z = rng.standard_normal((7, 2))
        lam = rng.uniform(-20, 20, 7)
        c = rng.integers(0, 3, 7)
        assert np.array_equal(net(z, lam, c), net(z, lam, c))
        assert np.array_equal(DenoiserNet(2, 3, seed=4).flat(), net.flat())

    def test_zero_weights_give_zero(self):
        net = DenoiserNet(2, 3)
        for v in net.params.values():
            v[...] = 0.0
        assert np.array_equal(net(np.ones((4, 2)), 3.0, np.array([0, 1, 2, NULL])), np.zeros((4, 2)))

    def test_finite_at_extremes(self):
        net = DenoiserNet(2, 3)
        out = net(50 * np.ones((2, 2)), np.array([-20.0, 20.0]), np.array([0, NULL]))
        assert np.all(np.isfinite(out))

    @pytest.mark.parametrize("bad", [3, -2, 7])
    def test_invalid_class(self, bad):
        with pytest.raises(DomainError):
            DenoiserNet(2, 3)(np.zeros((1, 2)), 0.0, np.array([bad]))

    def test_flat_round_trip(self):
        net = DenoiserNet(2, 3, seed=1)
        again = DenoiserNet.from_flat(net.architecture(), net.flat())
        assert np.array_equal(again.flat(), net.flat())
        with pytest.raises(ConfigError):
            DenoiserNet.from_flat(net.architecture(), net.flat()[:-1])


def test_gradient_matches_finite_differences():
    net = DenoiserNet(2, 3, hidden=(8,), num_freqs=3, class_dim=4, seed=11)
    batch = tiny_batch()
    _, grads = batch_loss(net, batch)
    h = 1e-6
    for name, p in net.params.items():
        fd = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up, _ = batch_loss(net, batch)
            p[idx] = old - h
            down, _ = batch_loss(net, batch)
            p[idx] = old
            fd[idx] = (up - down) / (2 * h)
        g = grads[name]
        scale = np.maximum(np.abs(fd), 1e-6)
        assert np.max(np.abs(g - fd) / scale) <= 1e-4, name


def test_gradient_check_default_architecture_sampled():
    net = DenoiserNet(2, 3, seed=2)
    batch = tiny_batch(1)
    _, grads = batch_loss(net, batch)
    rng = np.random.default_rng(0)
    h = 1e-6
    for name, p in net.params.items():
        for _ in range(5):
            idx = tuple(rng.integers(0, s) for s in p.shape)
            old = p[idx]
            p[idx] = old + h
            up, _ = batch_loss(net, batch)
            p[idx] = old - h
            down, _ = batch_loss(net, batch)
            p[idx] = old
            fd = (up - down) / (2 * h)
            assert abs(grads[name][idx] - fd) <= 1e-4 * max(abs(fd), 1e-6), name


class TestConditioningDropout:
    def test_never_drops_at_zero(self, world, rng, schedule):
        x, c = world.sample_data(rng, 1000)
        *_, batch = loss_and_grad(DenoiserNet(2, 3), x, c, rng, schedule, 0.0)
        assert np.array_equal(batch.c, c)

    def test_always_drops_at_one(self, world, rng, schedule):
        x, c = world.sample_data(rng, 1000)
        *_, batch = loss_and_grad(DenoiserNet(2, 3), x, c, rng, schedule, 1.0)
        assert np.all(batch.c == NULL)

    def test_drop_fraction(self, rng):
        n = 100_000
        c = drop_conditioning(np.zeros(n, int), 0.1, rng)
        frac = np.mean(c == NULL)
        assert abs(frac - 0.1) < 3 * np.sqrt(0.1 * 0.9 / n)

    def test_corruption_moments(self, rng, schedule):
        x = np.ones((50_000, 2))
        batch = corrupt_batch(x, np.zeros(50_000, int), rng, schedule, 0.0)
        a = np.sqrt(1 / (1 + np.exp(-batch.lam)))
        s = np.sqrt(1 / (1 + np.exp(batch.lam)))
        assert np.allclose(batch.z, a[:, None] * x + s[:, None] * batch.eps)
        assert batch.lam.min() >= -20 and batch.lam.max() <= 20

    def test_empty_batch_rejected(self, rng, schedule):
        with pytest.raises(ConfigError):
            loss_and_grad(DenoiserNet(2, 3), np.zeros((0, 2)), np.zeros(0, int), rng, schedule, 0.1)


class TestTrain:
    def test_zero_steps_returns_initial(self, world, schedule):
        net = DenoiserNet(2, 3, seed=3)
        out = train(net, world, TrainConfig(steps=0), schedule)
        assert np.array_equal(out.flat(), net.flat())

    def test_deterministic(self, world, schedule):
        cfg = TrainConfig(steps=30, batch=32, seed=9)
        a = train(DenoiserNet(2, 3), world, cfg, schedule)
        b = train(DenoiserNet(2, 3), world, cfg, schedule)
        assert np.array_equal(a.flat(), b.flat())

    def test_input_net_not_mutated(self, world, schedule):
        net = DenoiserNet(2, 3)
        before = net.flat()
        train(net, world, TrainConfig(steps=5, batch=8), schedule)
        assert np.array_equal(net.flat(), before)

    def test_divergence_raises(self, world, schedule, monkeypatch):
        monkeypatch.setattr("guidance_lab.trainer.batch_loss", lambda net, b: (float("nan"), {}))
        with pytest.raises(TrainingError, match="step 1"):
            train(DenoiserNet(2, 3), world, TrainConfig(steps=3, batch=4), schedule)

    def test_learning_rate_schedules(self):
        cfg = TrainConfig(steps=100, lr=1e-3)
        assert learning_rate(cfg, 1) == 1e-3
        assert learning_rate(cfg, 51) == pytest.approx(5e-4)
        assert 0 < learning_rate(cfg, 100) < 1e-6
        const = TrainConfig(steps=100, lr=1e-3, lr_schedule="constant")
        assert learning_rate(const, 100) == 1e-3

    @pytest.mark.parametrize("kw", [{"p_uncond": 1.5}, {"steps": -1}, {"batch": 0}, {"lr": 0.0},
                                    {"lr_schedule": "linear"}])
    def test_config_validation(self, kw):
        with pytest.raises(ConfigError):
            TrainConfig(**kw)

    def test_windowed_loss_non_increasing(self, world, schedule):
        # slow-learning fixture: descent per 500-step window stays above minibatch noise
        cfg = TrainConfig(steps=5000, batch=1024, lr=1e-5, lr_schedule="constant", seed=0)
        losses = []
        train(DenoiserNet(2, 3, seed=0), world, cfg, schedule, losses)
        windows = np.array(losses).reshape(10, 500).mean(axis=1)
        assert np.all(np.diff(windows) <= 0), windows


def test_adam_first_step_moves_by_lr():
    params = {"w": np.array([1.0, -1.0])}
    Adam(0.1).step(params, {"w": np.array([3.0, -0.5])})
    assert np.allclose(params["w"], [0.9, -0.9])


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        net = DenoiserNet(2, 3, seed=5)
        sched = Schedule(-10.0, 12.0)
        save_checkpoint(tmp_path / "c.bin", net, sched, {"seed": 5})
        loaded, s, header = load_checkpoint(tmp_path / "c.bin")
        assert np.array_equal(loaded.flat(), net.flat()) and s == sched and header["seed"] == 5

    def test_payload_is_little_endian_f64(self, tmp_path):
        net = DenoiserNet(1, 1, hidden=(2,), num_freqs=1, class_dim=1)
        save_checkpoint(tmp_path / "c.bin", net, Schedule())
        data = (tmp_path / "c.bin").read_bytes()
        assert data[:8] == b"GLABCKPT"
        assert np.array_equal(np.frombuffer(data[-8 * net.num_params():], "<f8"), net.flat())

    def test_size_mismatch_rejected(self, tmp_path):
        save_checkpoint(tmp_path / "c.bin", DenoiserNet(2, 3), Schedule())
        data = (tmp_path / "c.bin").read_bytes()
        (tmp_path / "short.bin").write_bytes(data[:-8])
        with pytest.raises(CheckpointError, match="payload"):
            load_checkpoint(tmp_path / "short.bin")
        (tmp_path / "long.bin").write_bytes(data + b"\0" * 8)
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "long.bin")

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"NOTACKPT" + b"\0" * 32)
        with pytest.raises(CheckpointError, match="magic"):
            load_checkpoint(tmp_path / "x.bin")


def test_null_token_changes_output_after_training(schedule):
    world = GmmWorld.triangle(radius=2.0, std=0.3)
    net = train(DenoiserNet(2, 3), world, TrainConfig(steps=2000, batch=256), schedule)
    z = np.repeat(world.means[:1] * 0.5, 4, axis=0)
    lam = np.array([-2.0, 0.0, 2.0, 4.0])
    cond = net(z, lam, np.zeros(4, int))
    uncond = net(z, lam, np.full(4, NULL))
    assert np.max(np.abs(cond - uncond)) > 0.1
    # and both pathways track their exact targets
    assert np.max(np.abs(cond - world.exact_cond_eps(z, lam, np.zeros(4, int)))) < 0.1
