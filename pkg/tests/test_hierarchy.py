import numpy as np
import numpy.testing as npt
import pytest

from hntf.evaluate import accuracy, classify
from hntf.factorize import FitOptions, ncpd
from hntf.hierarchy import (
    HierarchySpec,
    LabelMatrix,
    MixingMatrix,
    fit_w,
    hnmf,
    hntf_i,
    multi_hntf,
    multi_hntf_matrix,
    multi_hntf_supervised,
    standard_hncpd,
)
from hntf.tensor import DenseTensor, FactorSet, cp_reconstruct, relative_loss

OPTS = FitOptions(max_iters=300, tol=1e-9, seed=0)


def _monotone(history, slack=1e-10):
    return all(b <= a + slack for a, b in zip(history, history[1:]))


class TestTypes:
    def test_mixing_matrix_must_reduce_rank(self):
        with pytest.raises(ValueError, match="reduce"):
            MixingMatrix(np.ones((2, 2)))
        with pytest.raises(ValueError, match="nonnegative"):
            MixingMatrix(-np.ones((3, 2)))

    def test_ranks_strictly_decreasing(self):
        with pytest.raises(ValueError, match="decreasing"):
            HierarchySpec((4, 4, 2))
        with pytest.raises(ValueError, match="non-empty"):
            HierarchySpec(())

    def test_per_layer_options_length(self):
        with pytest.raises(ValueError, match="option"):
            HierarchySpec((4, 2), (OPTS,))

    def test_label_matrix_validation(self):
        with pytest.raises(ValueError, match="nonnegative"):
            LabelMatrix(y=-np.ones((2, 3)))
        lm = LabelMatrix(y=np.eye(3), classes=("a", "b", "c"))
        assert lm.n_classes == 3 and lm.n_samples == 3


class TestFitW:
    def test_rank_not_reduced_is_an_error(self):
        t = DenseTensor(np.random.default_rng(0).random((4, 4, 4)))
        f = ncpd(t, 3, OPTS).factors
        with pytest.raises(ValueError, match="next rank"):
            fit_w(t, f, 3, OPTS)

    def test_matrix_case_propagation_identity(self):
        # k=2: chain layers satisfy A1 = A0 W and S1^T = S0^T W exactly
        x = np.random.default_rng(1).random((12, 10))
        chain = multi_hntf(DenseTensor(x), HierarchySpec((4, 2), OPTS))
        a0, s0t = chain.layers[0].factors.factors
        a1, s1t = chain.layers[1].factors.factors
        w = chain.layers[0].mixing.w
        npt.assert_array_equal(a1, a0 @ w)
        npt.assert_array_equal(s1t, s0t @ w)

    def test_grid_search_oracle_on_2_to_1_mixing(self):
        rng = np.random.default_rng(7)
        u, v, z = (np.abs(rng.normal(1, 0.3, 5)) + 0.2 for _ in range(3))
        factors = [np.column_stack([c, c]) for c in (u, v, z)]
        f = FactorSet(factors)
        t = cp_reconstruct(f)

        def objective(w):
            return relative_loss(
                t, cp_reconstruct(FactorSet([m @ w for m in factors]))
            )

        grid = np.arange(0.0, 2.0001, 0.05)
        grid_best = min(
            objective(np.array([[a], [b]])) for a in grid for b in grid
        )
        for seed in range(10):
            res = fit_w(t, f, 1, FitOptions(max_iters=500, tol=1e-12, seed=seed))
            assert res.loss_history[-1] <= grid_best + 1e-6

    def test_redundant_column_pair_gets_merged(self):
        rng = np.random.default_rng(3)
        factors = []
        for _ in range(3):
            dup = rng.random(6) + 0.1
            factors.append(np.column_stack([dup, dup, rng.random(6) + 0.1]))
        f = FactorSet(factors)
        t = cp_reconstruct(f)  # layer-l loss is exactly 0 by construction
        res = fit_w(t, f, 2, FitOptions(max_iters=2000, tol=1e-9, seed=1))
        merged = relative_loss(
            t, cp_reconstruct(FactorSet([m @ res.w for m in factors]))
        )
        assert merged < 1e-4

    def test_objective_history_non_increasing(self):
        t = DenseTensor(np.random.default_rng(4).random((6, 5, 4)))
        f = ncpd(t, 4, OPTS).factors
        res = fit_w(t, f, 2, FitOptions(max_iters=400, tol=0.0, seed=2))
        assert _monotone(res.loss_history)


class TestMultiHntf:
    def test_single_rank_equals_plain_ncpd(self):
        t = DenseTensor(np.random.default_rng(5).random((5, 6, 4)))
        chain = multi_hntf(t, HierarchySpec((3,), OPTS))
        res = ncpd(t, 3, OPTS)
        assert len(chain.layers) == 1
        for a, b in zip(chain.layers[0].factors.factors, res.factors.factors):
            npt.assert_array_equal(a, b)
        assert chain.rel_losses[0] == pytest.approx(res.loss_history[-1], abs=1e-12)

    def test_shared_w_identity_bitwise(self):
        t = DenseTensor(np.random.default_rng(6).random((6, 6, 6)))
        chain = multi_hntf(t, HierarchySpec((4, 3, 2), OPTS))
        for ell in range(len(chain.layers) - 1):
            w = chain.layers[ell].mixing.w
            for i in range(3):
                npt.assert_array_equal(
                    chain.layers[ell + 1].factors[i],
                    chain.layers[ell].factors[i] @ w,
                )

    def test_matrix_case_equivalence(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            x = rng.random((rng.integers(8, 16), rng.integers(8, 16)))
            opts = FitOptions(max_iters=150, tol=1e-8, seed=trial)
            spec = HierarchySpec((4, 2), opts)
            tensor_chain = multi_hntf(DenseTensor(x), spec)
            matrix_chain = multi_hntf_matrix(x, spec)
            for a, b in zip(tensor_chain.rel_losses, matrix_chain.rel_losses):
                assert abs(a - b) <= 1e-10

    def test_rank_one_bottom_layer_loss_ordering(self):
        t = DenseTensor(np.random.default_rng(8).random((6, 5, 4)))
        chain = multi_hntf(t, HierarchySpec((4, 2, 1), OPTS))
        losses = chain.rel_losses
        assert losses[2] >= losses[1] - 1e-8
        assert losses[1] >= losses[0] - 1e-8

    def test_nonnegativity_every_layer(self):
        t = DenseTensor(np.random.default_rng(9).random((6, 6, 6)))
        chain = multi_hntf(t, HierarchySpec((4, 2), OPTS))
        for layer in chain.layers:
            assert all(f.min() >= 0.0 for f in layer.factors.factors)

    def test_warns_when_rank_exceeds_dimensions(self):
        t = DenseTensor(np.random.default_rng(10).random((3, 8, 8)))
        with pytest.warns(UserWarning, match="rank"):
            multi_hntf(t, HierarchySpec((4, 2), OPTS))


class TestSupervised:
    @staticmethod
    def _separable_toy():
        rng = np.random.default_rng(0)
        x = np.zeros((30, 60))
        for block in range(6):
            x[5 * block : 5 * (block + 1), 10 * block : 10 * (block + 1)] = (
                rng.random((5, 10)) + 0.5
            )
        y = np.zeros((3, 60))
        for c in range(3):
            y[c, 20 * c : 20 * (c + 1)] = 1.0
        return x, LabelMatrix(y=y, classes=("a", "b", "c"))

    def test_lambda_zero_reduces_to_unsupervised(self):
        x, labels = self._separable_toy()
        spec = HierarchySpec((6, 3), FitOptions(max_iters=400, tol=1e-8, seed=1))
        sup = multi_hntf_supervised(x, labels, spec, coupling=0.0)
        unsup = multi_hntf(DenseTensor(x), spec)
        for a, b in zip(sup.chain.rel_losses, unsup.rel_losses):
            assert abs(a - b) <= 1e-10

    def test_separable_toy_reaches_perfect_accuracy(self):
        x, labels = self._separable_toy()
        truth = np.argmax(labels.y, axis=0)
        spec = HierarchySpec((6, 3), FitOptions(max_iters=800, tol=1e-8, seed=1))
        res = multi_hntf_supervised(x, labels, spec, coupling=1.0)
        s_final = res.chain.layers[-1].factors[1].T
        assert accuracy(classify(res.dictionaries[-1], s_final), truth) == 1.0

    def test_rejects_higher_order_input(self):
        _, labels = self._separable_toy()
        t = np.random.default_rng(2).random((4, 4, 4))
        with pytest.raises(NotImplementedError, match="order-2"):
            multi_hntf_supervised(t, labels, HierarchySpec((3, 2), OPTS))

    def test_label_column_mismatch(self):
        x, labels = self._separable_toy()
        with pytest.raises(ValueError, match="columns"):
            multi_hntf_supervised(x[:, :-1], labels, HierarchySpec((6, 3), OPTS))


class TestHnmf:
    def test_single_rank_is_plain_nmf(self):
        from hntf.factorize import nmf

        x = np.random.default_rng(11).random((10, 8))
        chain = hnmf(x, HierarchySpec((3,), OPTS))
        res = nmf(x, 3, OPTS)
        npt.assert_array_equal(chain.layers[0].factors[0], res.a)
        npt.assert_array_equal(chain.layers[0].factors[1], res.s.T)

    def test_nested_block_ground_truth(self):
        # 3 rank-1 coarse diagonal blocks, each split into 2 fine row groups
        # sharing the coarse column profile: exact at rank 6 and rank 3
        rng = np.random.default_rng(12)
        x = np.zeros((18, 24))
        for c in range(3):
            v = rng.random(8) + 0.5
            for half in range(2):
                u = rng.random(3) + 0.5
                rows = slice(6 * c + 3 * half, 6 * c + 3 * half + 3)
                x[rows, 8 * c : 8 * (c + 1)] = np.outer(u, v)
        chain = hnmf(x, HierarchySpec((6, 3), FitOptions(max_iters=2000, tol=1e-10, seed=0)))
        assert chain.rel_losses[1] < 0.05

    def test_rejects_tensor_input(self):
        with pytest.raises(ValueError, match="matrix"):
            hnmf(np.ones((3, 3, 3)), HierarchySpec((2,), OPTS))


class TestHntfI:
    def test_order2_matches_hnmf(self):
        x = np.random.default_rng(13).random((12, 10))
        spec = HierarchySpec((5, 3), FitOptions(max_iters=200, tol=1e-9, seed=3))
        a = hnmf(x, spec)
        b = hntf_i(DenseTensor(x), spec, 1)
        for la, lb in zip(a.rel_losses, b.rel_losses):
            assert abs(la - lb) <= 1e-8

    def test_lead_mode_out_of_range(self):
        t = DenseTensor(np.ones((3, 3, 3)))
        with pytest.raises(ValueError, match="lead_mode"):
            hntf_i(t, HierarchySpec((2,), OPTS), 4)

    def test_permutation_sanity(self):
        arr = np.random.default_rng(14).random((4, 5, 6))
        spec = HierarchySpec((3, 2), FitOptions(max_iters=100, tol=1e-9, seed=5))
        direct = hntf_i(DenseTensor(arr), spec, 2)
        pre_permuted = hntf_i(
            DenseTensor(np.ascontiguousarray(np.transpose(arr, (1, 0, 2)))), spec, 1
        )
        npt.assert_array_equal(direct.rel_losses, pre_permuted.rel_losses)
        # factors come back in the original mode order
        npt.assert_array_equal(
            direct.layers[-1].factors[0], pre_permuted.layers[-1].factors[1]
        )
        npt.assert_array_equal(
            direct.layers[-1].factors[1], pre_permuted.layers[-1].factors[0]
        )


class TestStandardHncpd:
    def test_single_rank_is_plain_ncpd(self):
        t = DenseTensor(np.random.default_rng(15).random((5, 6, 4)))
        res = standard_hncpd(t, HierarchySpec((3,), OPTS))
        ref = ncpd(t, 3, OPTS)
        for a, b in zip(res.base.factors, ref.factors.factors):
            npt.assert_array_equal(a, b)
        assert res.mode_chains == []

    def test_mode_chains_are_independent(self):
        t = DenseTensor(np.random.default_rng(16).random((6, 6, 6)))
        spec = HierarchySpec((4, 2), OPTS)
        res1 = standard_hncpd(t, spec)
        # same options: every mode chain is reproduced bit for bit
        res2 = standard_hncpd(t, spec)
        for c1, c2 in zip(res1.mode_chains, res2.mode_chains):
            for l1, l2 in zip(c1.layers, c2.layers):
                for f1, f2 in zip(l1.factors.factors, l2.factors.factors):
                    npt.assert_array_equal(f1, f2)
        # mode chains use distinct derived seeds, so they differ between modes
        assert not np.array_equal(
            res1.mode_chains[0].layers[0].factors[0],
            res1.mode_chains[1].layers[0].factors[0],
        )

    def test_layers_preserve_nonnegativity(self):
        t = DenseTensor(np.random.default_rng(17).random((6, 5, 4)))
        res = standard_hncpd(t, HierarchySpec((4, 2), OPTS))
        for chain in res.mode_chains:
            for layer in chain.layers:
                assert all(f.min() >= 0.0 for f in layer.factors.factors)
        assert all(v >= 0.0 for v in res.rel_losses)
