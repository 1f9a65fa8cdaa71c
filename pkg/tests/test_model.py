import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forgan.data import (AffineScaler, MackeyGlassParams, WindowedDataset, integrate_mackey_glass,
                         window_series)
from forgan.exceptions import (ConfigError, DataError, ModelFormatError, ShapeError,
                               TrainingDivergedError)
from forgan.model import (PRESETS, ForGanModel, HyperParams, TrainConfig, discriminator_score,
                          generate, load_model, sample_forecasts, save_model, train_forgan,
                          train_gregression)
from forgan.rng import substream

SMALL = HyperParams("GRU", 4, 6, 2, 5, 2)


def small_dataset(n=300, seed=0, C=5) -> WindowedDataset:
    rng = np.random.default_rng(seed)
    series = np.sin(np.arange(n + C) * 0.3) + 0.1 * rng.normal(size=n + C)
    return window_series(series, C)


def zero_all(module):
    for _, p in module.named_parameters():
        p.data[...] = 0.0


class TestHyperParams:
    def test_presets(self):
        assert PRESETS["lorenz"].as_tuple() == ("GRU", 8, 64, 32, 24, 2)
        assert PRESETS["mackey-glass"].as_tuple() == ("LSTM", 64, 256, 4, 32, 6)
        assert PRESETS["traffic"].as_tuple() == ("GRU", 8, 128, 16, 32, 3)
        assert not PRESETS["lorenz"].in_search_space()
        assert PRESETS["mackey-glass"].in_search_space()

    @pytest.mark.parametrize("kwargs", [dict(cell_type="RNN"), dict(gen_hidden=0),
                                        dict(noise_dim=64), dict(d_iters=8),
                                        dict(condition_len=1.5)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            HyperParams(**kwargs)

    def test_round_trip(self):
        h = HyperParams("LSTM", 2, 4, 8, 16, 3)
        assert HyperParams.from_dict(h.to_dict()) == h
        with pytest.raises(ConfigError):
            HyperParams.from_dict({**h.to_dict(), "depth": 2})


class TestArchitecture:
    def test_layer_shapes(self):
        h = PRESETS["lorenz"]
        m = ForGanModel(h, rng=np.random.default_rng(0))
        g, d = m.generator, m.discriminator
        assert g.condition_rnn.hidden_width == 8 and g.condition_rnn.input_width == 1
        assert g.hidden.weight.shape == (8 + 32, 8 + 32)
        assert g.out.weight.shape == (1, 8 + 32)
        assert d.sequence_rnn.hidden_width == 64 and d.out.weight.shape == (1, 64)
        assert d.out.activation == "sigmoid"
        assert len(g.condition_rnn.gates) == 3
        lstm = ForGanModel(PRESETS["mackey-glass"], rng=np.random.default_rng(0))
        assert len(lstm.generator.condition_rnn.gates) == 4

    def test_lorenz_shape_check(self):
        m = ForGanModel(PRESETS["lorenz"], rng=np.random.default_rng(0))
        out = generate(m, np.zeros(24), np.zeros(32))
        assert isinstance(out, float)

    def test_gregression_has_no_discriminator(self):
        m = ForGanModel(SMALL, kind="g-regression", rng=np.random.default_rng(0))
        assert m.discriminator is None and m.deterministic
        with pytest.raises(ConfigError):
            m.discriminator_score(np.zeros(5), 0.0)


class TestGenerate:
    def setup_method(self):
        self.m = ForGanModel(SMALL, rng=np.random.default_rng(1))
        self.c = np.linspace(-1, 1, 5)

    def test_deterministic(self):
        z = np.array([0.3, -1.2])
        assert self.m.generate(self.c, z) == self.m.generate(self.c, z)

    def test_zero_parameters(self):
        zero_all(self.m.generator)
        assert self.m.generate(self.c, [2.0, -3.0]) == 0.0

    def test_length_checks(self):
        with pytest.raises(ShapeError):
            self.m.generate(np.zeros(4), [0, 0])
        with pytest.raises(ShapeError):
            self.m.generate(self.c, [0, 0, 0])
        with pytest.raises(ShapeError):
            self.m.sample_forecasts(np.zeros((2, 3)), 4, np.random.default_rng(0))

    def test_k1_equals_generate(self):
        rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
        s = sample_forecasts(self.m, self.c, 1, rng_a)
        z = rng_b.standard_normal((1, 2))
        assert s[0] == pytest.approx(self.m.generate(self.c, z[0]), abs=1e-15)

    def test_row_major_noise(self):
        C = np.stack([self.c, -self.c])
        s = self.m.sample_forecasts(C, 3, np.random.default_rng(8))
        z = np.random.default_rng(8).standard_normal((6, 2))
        for i in range(2):
            for j in range(3):
                assert s[i, j] == pytest.approx(self.m.generate(C[i], z[i * 3 + j]), abs=1e-14)

    def test_untrained_variance(self):
        s = sample_forecasts(self.m, self.c, 1000, np.random.default_rng(0))
        assert s.shape == (1000,) and s.var() > 0

    def test_longer_windows_use_last_steps(self):
        rng = np.random.default_rng(3)
        wide = np.concatenate([[9.0, 9.0], self.c])
        a = self.m.sample_forecasts(wide[None], 4, np.random.default_rng(3))
        b = self.m.sample_forecasts(self.c[None], 4, rng)
        np.testing.assert_array_equal(a, b)

    def test_scaler_applied(self):
        m = ForGanModel(SMALL, AffineScaler(10.0, 2.0), rng=np.random.default_rng(1))
        base = ForGanModel(SMALL, rng=np.random.default_rng(1))
        z = [0.1, 0.2]
        raw = base.generate((self.c - 10.0) / 2.0, z)
        assert m.generate(self.c, z) == pytest.approx(raw * 2.0 + 10.0, abs=1e-12)


class TestDiscriminator:
    def setup_method(self):
        self.m = ForGanModel(SMALL, rng=np.random.default_rng(2))
        self.c = np.linspace(0, 1, 5)

    def test_zero_parameters(self):
        zero_all(self.m.discriminator)
        for cand in (-5.0, 0.0, 7.0):
            assert discriminator_score(self.m, self.c, cand) == 0.5

    def test_candidate_wiring(self):
        scores = [self.m.discriminator_score(self.c, v) for v in (-2.0, 0.0, 3.0)]
        assert len(set(scores)) == 3
        rnn = self.m.discriminator.sequence_rnn
        for gate in rnn.gates.values():
            gate.W.data[...] = 0.0  # inputs no longer reach the state
        scores = [self.m.discriminator_score(self.c, v) for v in (-2.0, 0.0, 3.0)]
        assert len(set(scores)) == 1

    @settings(deadline=None, max_examples=25)
    @given(st.lists(st.floats(-50, 50), min_size=5, max_size=5), st.floats(-100, 100))
    def test_probability_range(self, cond, cand):
        s = self.m.discriminator_score(np.array(cond), cand)
        assert 0.0 < s < 1.0

    def test_length_check(self):
        with pytest.raises(ShapeError):
            self.m.discriminator_score(np.zeros(4), 0.0)


class TestTraining:
    def test_update_ratio(self):
        ds = small_dataset()
        for d_iters in (1, 2, 5):
            h = HyperParams("GRU", 4, 6, 2, 5, d_iters)
            _, log = train_forgan(ds, h, TrainConfig(total_generator_steps=7, batch_size=8,
                                                     validation_every=0))
            assert log.g_updates == 7 and log.d_updates == 7 * d_iters
            assert len(log.d_losses) == 7 * d_iters and len(log.g_losses) == 7

    def test_zero_steps_returns_initial(self):
        ds = small_dataset()
        m, log = train_forgan(ds, SMALL, TrainConfig(total_generator_steps=0, seed=4))
        ref = ForGanModel(SMALL, ds.scaler, rng=substream(4, "init"))
        for k, v in ref.state_dict().items():
            np.testing.assert_array_equal(m.state_dict()[k], v)
        assert log.g_updates == 0

    def test_seeded_reproducibility(self):
        ds = small_dataset()
        cfg = TrainConfig(total_generator_steps=15, batch_size=16, seed=3, validation_every=5)
        a, la = train_forgan(ds, SMALL, cfg)
        b, lb = train_forgan(ds, SMALL, cfg)
        for k, v in a.state_dict().items():
            np.testing.assert_array_equal(b.state_dict()[k], v)
        assert la.g_losses == lb.g_losses and la.validation == lb.validation

    def test_instance_noise_decay_changes_training(self):
        ds = small_dataset()
        base = dict(total_generator_steps=5, batch_size=8, validation_every=0,
                    instance_noise=0.5)
        a, _ = train_forgan(ds, SMALL, TrainConfig(**base))
        b, _ = train_forgan(ds, SMALL, TrainConfig(**base, instance_noise_decay=True))
        key = "generator.out.weight"
        assert not np.array_equal(a.state_dict()[key], b.state_dict()[key])

    def test_instance_noise_changes_training_only_when_enabled(self):
        ds = small_dataset()
        base = dict(total_generator_steps=5, batch_size=8, validation_every=0)
        a, _ = train_forgan(ds, SMALL, TrainConfig(**base))
        b, _ = train_forgan(ds, SMALL, TrainConfig(**base, instance_noise=0.0))
        c, _ = train_forgan(ds, SMALL, TrainConfig(**base, instance_noise=0.5))
        key = "generator.out.weight"
        np.testing.assert_array_equal(a.state_dict()[key], b.state_dict()[key])
        assert not np.array_equal(a.state_dict()[key], c.state_dict()[key])

    def test_losses_finite_and_checkpoint(self, tmp_path):
        ds = small_dataset()
        cfg = TrainConfig(total_generator_steps=20, batch_size=16, validation_every=5,
                          checkpoint_every=10, checkpoint_dir=str(tmp_path))
        m, log = train_forgan(ds, SMALL, cfg)
        assert np.all(np.isfinite(log.g_losses)) and np.all(np.isfinite(log.d_losses))
        assert [s for s, _ in log.validation] == [5, 10, 15, 20]
        assert sorted(p.name for p in tmp_path.iterdir()) == [
            "checkpoint_0000010.forgan", "checkpoint_0000020.forgan"]
        assert log.to_csv().splitlines()[0] == "step,g_loss,d_loss"
        assert len(log.to_csv().splitlines()) == 21

    def test_divergence_aborts(self, monkeypatch):
        import forgan.model as model_mod

        real_log = model_mod.T.log

        def bad_log(x, eps=0.0):
            out = real_log(x, eps)
            out.data[...] = np.nan
            return out

        monkeypatch.setattr(model_mod.T, "log", bad_log)
        with pytest.raises(TrainingDivergedError, match="step 1"):
            train_forgan(small_dataset(), SMALL, TrainConfig(total_generator_steps=3,
                                                             batch_size=4))

    def test_empty_and_short(self):
        ds = small_dataset()
        empty = WindowedDataset(ds.conditions[:0], ds.targets[:0], 0, 0, AffineScaler())
        with pytest.raises(DataError):
            train_forgan(empty, SMALL, TrainConfig(total_generator_steps=1))
        with pytest.raises(DataError):
            train_gregression(ds, HyperParams("GRU", 2, 2, 1, 8, 1),
                              TrainConfig(total_generator_steps=1))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            TrainConfig(batch_size=0)
        with pytest.raises(ConfigError):
            TrainConfig(beta1=1.0)
        with pytest.raises(ConfigError):
            TrainConfig(instance_noise=-1.0)
        with pytest.raises(ConfigError):
            TrainConfig(discriminator_learning_rate=0.0)

    def test_discriminator_rate_defaults_to_shared(self):
        ds = small_dataset()
        base = dict(total_generator_steps=4, batch_size=8, validation_every=0)
        a, _ = train_forgan(ds, SMALL, TrainConfig(**base))
        b, _ = train_forgan(ds, SMALL, TrainConfig(**base, discriminator_learning_rate=1e-3))
        c, _ = train_forgan(ds, SMALL, TrainConfig(**base, discriminator_learning_rate=1e-2))
        key = "discriminator.out.weight"
        np.testing.assert_array_equal(a.state_dict()[key], b.state_dict()[key])
        assert not np.array_equal(a.state_dict()[key], c.state_dict()[key])


class TestGRegression:
    def test_constant_series(self):
        ds = window_series(np.full(400, 5.0), 4)
        h = HyperParams("GRU", 4, 1, 2, 4, 1)
        m, log = train_gregression(ds, h, TrainConfig(total_generator_steps=400, batch_size=32,
                                                      learning_rate=1e-2, validation_every=50))
        pred = m.predict(ds.split("test")[0])
        assert np.all(np.abs(pred - 5.0) <= 0.01)

    def test_deterministic_predictions(self):
        ds = small_dataset()
        m, _ = train_gregression(ds, SMALL, TrainConfig(total_generator_steps=20, batch_size=16))
        c = ds.split("test")[0]
        np.testing.assert_array_equal(m.predict(c), m.predict(c))
        np.testing.assert_array_equal(m.sample_forecasts(c, 3, np.random.default_rng(0)),
                                      np.repeat(m.predict(c)[:, None], 3, axis=1))

    def test_checkpoint_by_validation_rmse(self):
        ds = small_dataset()
        m, log = train_gregression(ds, SMALL, TrainConfig(total_generator_steps=40, batch_size=16,
                                                          validation_every=10))
        scores = dict(log.validation)
        assert log.best_step == min(scores, key=scores.get)


class TestMackeyGlassDiscrimination:
    def test_real_pairs_outscore_noise(self):
        series = integrate_mackey_glass(MackeyGlassParams(), 3000)
        ds = window_series(series, 8)
        h = HyperParams("GRU", 8, 16, 4, 8, 2)
        m, _ = train_forgan(ds, h, TrainConfig(total_generator_steps=300, batch_size=64,
                                               validation_every=0))
        c, y, _ = ds.split("test")
        rng = np.random.default_rng(0)
        fake = rng.uniform(y.min(), y.max(), len(y))
        assert m.discriminator_score(c, y).mean() > m.discriminator_score(c, fake).mean()


class TestPersistence:
    def test_round_trip(self, tmp_path):
        m = ForGanModel(PRESETS["mackey-glass"], AffineScaler(0.3, 1.7),
                        rng=np.random.default_rng(0))
        path = save_model(m, tmp_path / "m.forgan")
        back = load_model(path)
        assert back.hyper == m.hyper and back.kind == m.kind
        assert back.scaler.to_dict() == m.scaler.to_dict()
        for k, v in m.state_dict().items():
            np.testing.assert_array_equal(back.state_dict()[k], v)
        c, z = np.linspace(0, 1, 32), np.ones(4)
        assert back.generate(c, z) == m.generate(c, z)

    def test_byte_identical(self, tmp_path):
        m = ForGanModel(SMALL, kind="g-regression", rng=np.random.default_rng(0))
        a = save_model(m, tmp_path / "a.forgan").read_bytes()
        b = save_model(load_model(tmp_path / "a.forgan"), tmp_path / "b.forgan").read_bytes()
        assert a == b

    def test_truncated_and_corrupt(self, tmp_path):
        path = save_model(ForGanModel(SMALL, rng=np.random.default_rng(0)), tmp_path / "m.forgan")
        blob = path.read_bytes()
        (tmp_path / "t.forgan").write_bytes(blob[:len(blob) // 2])
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "t.forgan")
        flipped = bytearray(blob)
        flipped[len(blob) // 2] ^= 0xFF
        (tmp_path / "c.forgan").write_bytes(bytes(flipped))
        with pytest.raises(ModelFormatError, match="checksum"):
            load_model(tmp_path / "c.forgan")
        (tmp_path / "x.forgan").write_bytes(b"hello world, not a model at all" * 3)
        with pytest.raises(ModelFormatError, match="magic"):
            load_model(tmp_path / "x.forgan")
        with pytest.raises(ModelFormatError):
            load_model(tmp_path / "missing.forgan")

    def test_version_mismatch(self, tmp_path, monkeypatch):
        import forgan.model as model_mod

        monkeypatch.setattr(model_mod, "MODEL_FORMAT_VERSION", 99)
        path = save_model(ForGanModel(SMALL, rng=np.random.default_rng(0)), tmp_path / "m")
        monkeypatch.setattr(model_mod, "MODEL_FORMAT_VERSION", 1)
        with pytest.raises(ModelFormatError, match="version 99"):
            load_model(path)
