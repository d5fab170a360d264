import numpy as np
import numpy.testing as npt
import pytest

from hntf.factorize import (
    FitOptions,
    joint_objective,
    ncpd,
    nmf,
    supervised_nmf_step,
)
from hntf.tensor import DenseTensor, FactorSet, cp_reconstruct, relative_loss

FAST = FitOptions(max_iters=300, tol=1e-9, seed=0)


def _monotone(history, slack=1e-10):
    return all(b <= a + slack for a, b in zip(history, history[1:]))


class TestFitOptions:
    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            FitOptions(max_iters=0)
        with pytest.raises(ValueError):
            FitOptions(epsilon=0.0)
        with pytest.raises(ValueError):
            FitOptions(tol=-1.0)


class TestNmf:
    def test_exact_rank_one(self):
        u = np.array([1.0, 2.0, 0.5, 3.0])
        v = np.array([0.2, 1.5, 2.0])
        x = np.outer(u, v)
        res = nmf(x, 1, FitOptions(max_iters=500, tol=1e-12, seed=0))
        assert res.loss_history[-1] < 1e-4

    def test_identity_rank_two(self):
        res = nmf(np.eye(2) + 0.0, 2, FitOptions(max_iters=2000, tol=1e-14, seed=3))
        assert res.loss_history[-1] < 1e-3

    def test_loss_history_non_increasing_against_reevaluation(self):
        rng = np.random.default_rng(7)
        x = rng.random((20, 15))
        res = nmf(x, 5, FAST)
        assert _monotone(res.loss_history)
        # oracle: final entry equals an independent re-evaluation
        npt.assert_allclose(
            res.loss_history[-1], relative_loss(x, res.a @ res.s), atol=1e-12
        )

    def test_rank_too_large(self):
        with pytest.raises(ValueError, match="rank"):
            nmf(np.ones((4, 5)), 5, FAST)

    def test_negative_input(self):
        with pytest.raises(ValueError, match="nonnegative"):
            nmf(-np.ones((4, 5)), 2, FAST)

    def test_nonnegativity_and_determinism(self):
        x = np.random.default_rng(8).random((10, 8))
        r1 = nmf(x, 3, FAST)
        r2 = nmf(x, 3, FAST)
        assert r1.a.min() >= 0 and r1.s.min() >= 0
        npt.assert_array_equal(r1.a, r2.a)
        npt.assert_array_equal(r1.s, r2.s)
        assert r1.loss_history == r2.loss_history

    def test_zero_row_stays_finite(self):
        x = np.random.default_rng(9).random((8, 6))
        x[3, :] = 0.0
        res = nmf(x, 2, FAST)
        assert np.all(np.isfinite(res.a)) and np.all(np.isfinite(res.s))


class TestNcpd:
    def test_exact_rank_one_tensor(self):
        rng = np.random.default_rng(10)
        truth = FactorSet([rng.random((n, 1)) + 0.1 for n in (2, 3, 4)])
        t = cp_reconstruct(truth)
        res = ncpd(t, 1, FitOptions(max_iters=500, tol=1e-12, seed=0))
        assert res.loss_history[-1] < 1e-3

    def test_order2_matches_nmf_exactly(self):
        x = np.random.default_rng(11).random((9, 7))
        opts = FitOptions(max_iters=120, tol=1e-9, seed=4)
        a = nmf(x, 3, opts)
        b = ncpd(DenseTensor(x), 3, opts)
        assert len(a.loss_history) == len(b.loss_history)
        npt.assert_allclose(a.loss_history, b.loss_history, atol=1e-10)

    def test_exact_rank_three_recovery_best_of_five(self):
        rng = np.random.default_rng(12)
        truth = FactorSet([rng.random((5, 3)) + 0.1 for _ in range(3)])
        t = cp_reconstruct(truth)
        best = min(
            ncpd(t, 3, FitOptions(max_iters=2000, tol=1e-10, seed=s)).loss_history[-1]
            for s in range(5)
        )
        assert best < 1e-2

    def test_monotone_and_nonnegative(self):
        t = DenseTensor(np.random.default_rng(13).random((6, 5, 4)))
        res = ncpd(t, 3, FAST)
        assert _monotone(res.loss_history)
        assert all(f.min() >= 0 for f in res.factors.factors)


class TestSupervisedStep:
    @staticmethod
    def _problem(seed=14, m=10, n=8, c=3, r=4):
        rng = np.random.default_rng(seed)
        x = rng.random((m, n))
        y = np.zeros((c, n))
        y[rng.integers(0, c, n), np.arange(n)] = 1.0
        a, b, s = rng.random((m, r)), rng.random((c, r)), rng.random((r, n))
        return x, y, a, b, s

    def test_lambda_zero_decouples(self):
        x, y, a, b, s = self._problem()
        a2, b2, s2 = supervised_nmf_step(x, y, a, b, s, lam=0.0)
        # (A, S) side equals one unsupervised step
        eps = 1e-12
        a_ref = a * (x @ s.T) / (a @ (s @ s.T) + eps)
        s_ref = s * (a_ref.T @ x) / ((a_ref.T @ a_ref) @ s + eps)
        npt.assert_allclose(a2, a_ref, atol=1e-12)
        npt.assert_allclose(s2, s_ref, atol=1e-12)
        # B updated only against its own residual
        b_ref = b * (y @ s.T) / (b @ (s @ s.T) + eps)
        npt.assert_allclose(b2, b_ref, atol=1e-12)

    def test_exact_factorization_is_fixed_point(self):
        rng = np.random.default_rng(15)
        a = rng.random((6, 3)) + 0.5
        b = rng.random((2, 3)) + 0.5
        s = rng.random((3, 7)) + 0.5
        x, y = a @ s, b @ s
        a2, b2, s2 = supervised_nmf_step(x, y, a, b, s, lam=1.0)
        for new, old in ((a2, a), (b2, b), (s2, s)):
            assert np.linalg.norm(new - old) / np.linalg.norm(old) < 1e-8

    def test_joint_objective_non_increasing_over_50_steps(self):
        x, y, a, b, s = self._problem(seed=16)
        prev = joint_objective(x, y, a, b, s, 1.0)
        for _ in range(50):
            a, b, s = supervised_nmf_step(x, y, a, b, s, lam=1.0)
            cur = joint_objective(x, y, a, b, s, 1.0)
            assert cur <= prev + 1e-10
            assert min(a.min(), b.min(), s.min()) >= 0.0
            prev = cur

    def test_shape_mismatch(self):
        x, y, a, b, s = self._problem()
        with pytest.raises(ValueError, match="shape"):
            supervised_nmf_step(x, y[:, :-1], a, b, s, lam=1.0)
