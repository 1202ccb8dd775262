"""Forward-pass oracle checks, softmax machinery, gradient correctness against
finite differences, and checkpoint round trips."""

import json

import numpy as np
import pytest

from rtune.forecaster import (Forecaster, grad_total, init_forecaster,
                              load_checkpoint, save_checkpoint, soften,
                              soften_jacobian, theta_size)
from rtune.tuner import batch_objective


def unpack_reference(model):
    """Straight-line re-evaluation of the parameter layout, independent of the
    model's own helpers."""
    w, h, hid = model.input_width, model.horizon, model.hidden_width
    t = model.theta
    w1 = t[:hid * w].reshape(hid, w)
    b1 = t[hid * w:hid * w + hid]
    w2 = t[hid * w + hid:hid * w + hid + h * hid].reshape(h, hid)
    b2 = t[hid * w + hid + h * hid:]
    return w1, b1, w2, b2


def finite_difference_grad(fn, theta, step=1e-5):
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        up = theta.copy(); up[i] += step
        dn = theta.copy(); dn[i] -= step
        grad[i] = (fn(up) - fn(dn)) / (2 * step)
    return grad


class TestForward:
    def test_theta_length_invariant(self):
        assert theta_size(6, 4, 3) == 6 * 4 + 4 + 4 * 3 + 3
        with pytest.raises(ValueError, match="shape"):
            Forecaster(6, 3, 4, np.zeros(10))
        with pytest.raises(ValueError, match="non-finite"):
            Forecaster(2, 1, 2, np.full(theta_size(2, 2, 1), np.inf))

    def test_zero_parameters(self):
        m = Forecaster(5, 3, 4, np.zeros(theta_size(5, 4, 3)))
        assert np.all(m.forward(np.arange(5.0)) == 0.0)

    def test_bias_only(self):
        m = Forecaster(4, 2, 3, np.zeros(theta_size(4, 3, 2)))
        m.theta[-2:] = [1.5, -0.5]
        for x in (np.zeros(4), np.ones(4), np.random.default_rng(0).normal(size=4)):
            assert np.allclose(m.forward(x), [1.5, -0.5])

    def test_matches_straightline_oracle(self):
        m = init_forecaster(7, 4, hidden_width=5, seed=42)
        x = np.random.default_rng(1).normal(size=7)
        w1, b1, w2, b2 = unpack_reference(m)
        expected = w2 @ np.tanh(w1 @ x + b1) + b2
        assert np.allclose(m.forward(x), expected, atol=1e-14)

    def test_batch_matches_single(self):
        m = init_forecaster(6, 3, hidden_width=4, seed=3)
        xs = np.random.default_rng(2).normal(size=(5, 6))
        batch = m.forward_batch(xs)
        for i, x in enumerate(xs):
            assert np.allclose(batch[i], m.forward(x), atol=1e-14)

    def test_length_mismatch(self):
        m = init_forecaster(6, 3, seed=0)
        with pytest.raises(ValueError, match="length 6"):
            m.forward(np.zeros(5))
        with pytest.raises(ValueError, match="shape"):
            m.forward_batch(np.zeros((2, 5)))

    def test_init_seeded_and_bounded(self):
        a = init_forecaster(8, 2, 4, seed=9)
        b = init_forecaster(8, 2, 4, seed=9)
        assert np.array_equal(a.theta, b.theta)
        w1, b1, w2, b2 = unpack_reference(a)
        assert np.max(np.abs(np.concatenate([w1.ravel(), b1]))) <= 1 / np.sqrt(8)
        assert np.max(np.abs(np.concatenate([w2.ravel(), b2]))) <= 1 / np.sqrt(4)


class TestSoften:
    def test_equal_logits_uniform(self):
        for tau in (0.5, 1.0, 3.0):
            p = soften(np.zeros(4) + 2.0, tau).probs
            assert np.allclose(p, 0.25, atol=1e-15)

    def test_two_class_example(self):
        p = soften([0.0, np.log(3.0)], 1.0).probs
        assert np.allclose(p, [0.25, 0.75], atol=1e-12)

    def test_extreme_logits_no_overflow(self):
        p = soften([0.0, 1000.0], 1.0).probs
        assert np.all(np.isfinite(p))
        assert p[1] == pytest.approx(1.0, abs=1e-12)
        assert p[0] == pytest.approx(0.0, abs=1e-12)

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(scale=5.0, size=rng.integers(2, 10))
            tau = float(rng.uniform(0.1, 10.0))
            p = soften(logits, tau).probs
            assert abs(p.sum() - 1.0) < 1e-12
            shifted = soften(logits + 123.456, tau).probs
            assert np.allclose(p, shifted, atol=1e-12)

    def test_large_tau_flattens(self):
        logits = np.array([3.0, -2.0, 0.5, 1.0])
        p = soften(logits, 1e6).probs
        assert np.max(np.abs(p - 0.25)) <= 1e-5

    def test_errors(self):
        with pytest.raises(ValueError, match="positive"):
            soften([0.0, 1.0], 0.0)
        with pytest.raises(ValueError, match="positive"):
            soften([0.0, 1.0], -3.0)
        with pytest.raises(ValueError, match="non-finite"):
            soften([0.0, np.nan], 1.0)


class TestSoftenJacobian:
    def test_uniform_two_class(self):
        j = soften_jacobian([5.0, 5.0], 1.0)
        assert np.allclose(j, [[0.25, -0.25], [-0.25, 0.25]], atol=1e-14)

    def test_rows_sum_to_zero(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            j = soften_jacobian(rng.normal(size=6), float(rng.uniform(0.2, 5)))
            assert np.max(np.abs(j.sum(axis=1))) < 1e-15

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        step = 1e-5
        for _ in range(25):
            c = int(rng.integers(2, 8))
            logits = rng.normal(scale=2.0, size=c)
            tau = float(rng.uniform(0.5, 6.0))
            j = soften_jacobian(logits, tau)
            fd = np.zeros((c, c))
            for m in range(c):
                up = logits.copy(); up[m] += step
                dn = logits.copy(); dn[m] -= step
                fd[:, m] = (soften(up, tau).probs - soften(dn, tau).probs) / (2 * step)
            err = np.abs(j - fd) / np.maximum(np.abs(fd), 1e-4)
            assert np.max(err) < 1e-6

    def test_temperature_scaling_identity(self):
        # softmax(tau*z / tau) == softmax(z), so J(tau*z, tau) = J(z, 1)/tau
        rng = np.random.default_rng(12)
        for tau in (2.0, 3.0, 6.0):
            z = rng.normal(size=5)
            assert np.allclose(soften_jacobian(tau * z, tau),
                               soften_jacobian(z, 1.0) / tau, atol=1e-12)

    def test_gradient_magnitude_halves(self):
        z = np.random.default_rng(1).normal(size=5)
        j6 = soften_jacobian(6.0 * z, 6.0)
        j3 = soften_jacobian(3.0 * z, 3.0)
        assert np.allclose(j6, 0.5 * j3, atol=1e-12)


class TestGradTotal:
    def _random_instance(self, seed, n=6, w=6, h=3, hidden=4):
        rng = np.random.default_rng(seed)
        m_new = init_forecaster(w, h, hidden, seed=seed)
        m_new.theta += 0.1 * rng.normal(size=m_new.theta.size)
        m_old = init_forecaster(w, h, hidden, seed=seed + 1000)
        x = rng.normal(size=(n, w))
        y = rng.normal(size=(n, h))
        return m_new, m_old, x, y

    def test_zero_at_perfect_fit_without_extras(self):
        m = init_forecaster(5, 2, 3, seed=0)
        x = np.random.default_rng(0).normal(size=(4, 5))
        y = m.forward_batch(x)
        g = grad_total(m, m.clone(), x, y, tau=3.0, distill_weight=0.0,
                       reg_weight=0.0)
        assert np.max(np.abs(g)) < 1e-14

    def test_pure_regularizer(self):
        # one-sample zero-residual batch isolates the 2*beta*theta term
        m = init_forecaster(5, 2, 3, seed=1)
        x = np.random.default_rng(1).normal(size=(1, 5))
        y = m.forward_batch(x)
        beta = 1e-4
        g = grad_total(m, m.clone(), x, y, tau=3.0, distill_weight=0.0,
                       reg_weight=beta)
        assert np.allclose(g, 2.0 * beta * m.theta, atol=1e-15)

    @pytest.mark.parametrize("settings", [
        (3.0, 0.2, 1e-4),
        (3.0, 0.0, 1e-4),
        (3.0, 0.2, 0.0),
        (1.0, 1.0, 1e-2),
    ])
    def test_matches_finite_differences(self, settings):
        tau, lam, beta = settings
        for seed in range(10):
            m_new, m_old, x, y = self._random_instance(seed)
            analytic = grad_total(m_new, m_old, x, y, tau, lam, beta)

            def objective(theta, m_new=m_new, m_old=m_old, x=x, y=y):
                probe = Forecaster(m_new.input_width, m_new.horizon,
                                   m_new.hidden_width, theta)
                return batch_objective(probe, m_old, x, y, tau, lam, beta)

            fd = finite_difference_grad(objective, m_new.theta)
            gap = np.abs(analytic - fd)
            tol = np.maximum(1e-4 * np.maximum(np.abs(analytic), np.abs(fd)), 1e-8)
            assert np.all(gap <= tol), f"seed {seed}: max gap {gap.max():.2e}"

    def test_errors(self):
        m = init_forecaster(4, 2, 3, seed=0)
        with pytest.raises(ValueError, match="empty"):
            grad_total(m, m.clone(), np.zeros((0, 4)), np.zeros((0, 2)),
                       3.0, 0.2, 1e-4)
        with pytest.raises(ValueError, match="horizon"):
            grad_total(m, m.clone(), np.zeros((2, 4)), np.zeros((2, 3)),
                       3.0, 0.2, 1e-4)
        with pytest.raises(ValueError, match="positive"):
            grad_total(m, m.clone(), np.zeros((2, 4)), np.zeros((2, 2)),
                       0.0, 0.2, 1e-4)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        m = init_forecaster(6, 3, 5, seed=77)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        loaded = load_checkpoint(path)
        assert np.array_equal(loaded.theta, m.theta)
        assert (loaded.input_width, loaded.horizon, loaded.hidden_width) == (6, 3, 5)

    def test_save_is_byte_deterministic(self, tmp_path):
        m = init_forecaster(4, 2, 3, seed=5)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(m, p1)
        save_checkpoint(m, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_rejects_foreign_files(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text(json.dumps({"format": "other"}))
        with pytest.raises(ValueError, match="not a"):
            load_checkpoint(path)
