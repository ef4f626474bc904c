import numpy as np
import pytest

from liftkit.errors import NoSolutionError
from liftkit.lowrank import FactoredTensor, HermitianFactored, svd_to_evd
from liftkit.metric import EuclideanMetric

from helpers import (
    dense_weighted_evd,
    dense_weighted_svd,
    random_complex,
    random_factored,
    random_hermitian_factored,
    random_spd_metric,
    tensor_inner,
)


def basis_vec(n, i):
    e = np.zeros(n, dtype=complex)
    e[i] = 1.0
    return e


class TestRightAction:
    def test_empty_gives_zero(self):
        w = FactoredTensor.empty(3, 4)
        out = w.right_action(EuclideanMetric(3), random_complex(np.random.default_rng(0), 3))
        assert out.shape == (4,)
        assert np.allclose(out, 0.0)

    def test_rank_one_euclidean(self):
        w = FactoredTensor(
            right=basis_vec(2, 0)[:, None], left=basis_vec(2, 1)[:, None], values=np.array([2.0])
        )
        out = w.right_action(EuclideanMetric(2), basis_vec(2, 0))
        assert np.allclose(out, 2.0 * basis_vec(2, 1))

    def test_matches_dense_action(self):
        rng = np.random.default_rng(1)
        m1 = random_spd_metric(rng, 5)
        m2 = random_spd_metric(rng, 7)
        w = random_factored(rng, 5, 7, 3, m1, m2)
        dense = w.to_dense()
        for _ in range(10):
            e = random_complex(rng, 5)
            expected = dense @ m1.apply(e)
            assert np.linalg.norm(w.right_action(m1, e) - expected) <= 1e-12 * np.linalg.norm(
                expected
            )


class TestLeftAction:
    def test_empty_gives_zero(self):
        w = FactoredTensor.empty(3, 4)
        assert np.allclose(w.left_action(EuclideanMetric(4), basis_vec(4, 0)), 0.0)

    def test_rank_one_euclidean(self):
        w = FactoredTensor(
            right=basis_vec(2, 0)[:, None], left=basis_vec(2, 1)[:, None], values=np.array([2.0])
        )
        out = w.left_action(EuclideanMetric(2), basis_vec(2, 1))
        assert np.allclose(out, 2.0 * basis_vec(2, 0))

    def test_matches_dense_action(self):
        rng = np.random.default_rng(2)
        m1 = random_spd_metric(rng, 6)
        m2 = random_spd_metric(rng, 4)
        w = random_factored(rng, 6, 4, 3, m1, m2)
        dense = w.to_dense()
        for _ in range(10):
            f = random_complex(rng, 4)
            expected = dense.conj().T @ m2.apply(f)
            assert np.linalg.norm(w.left_action(m2, f) - expected) <= 1e-12 * np.linalg.norm(
                expected
            )


class TestHermitianAction:
    def test_empty(self):
        w = HermitianFactored.empty(5)
        assert np.allclose(w.action(EuclideanMetric(5), basis_vec(5, 2)), 0.0)

    def test_single_negative_pair(self):
        w = HermitianFactored(factors=basis_vec(3, 0)[:, None], values=np.array([-1.0]))
        out = w.action(EuclideanMetric(3), basis_vec(3, 0))
        assert np.allclose(out, -basis_vec(3, 0))

    def test_matches_dense_action(self):
        rng = np.random.default_rng(3)
        m = random_spd_metric(rng, 6)
        w = random_hermitian_factored(rng, 6, 3, m, signed=True)
        dense = w.to_dense()
        for _ in range(10):
            e = random_complex(rng, 6)
            expected = dense @ m.apply(e)
            assert np.linalg.norm(w.action(m, e) - expected) <= 1e-12 * np.linalg.norm(expected)


class TestSvdToEvd:
    def test_aligned_pair(self):
        rng = np.random.default_rng(4)
        m = EuclideanMetric(4)
        u = random_complex(rng, 4)
        u /= m.norm(u)
        assert svd_to_evd(3.0, u, u, m) == pytest.approx(3.0, abs=1e-12)

    def test_antialigned_pair(self):
        rng = np.random.default_rng(5)
        m = EuclideanMetric(4)
        u = random_complex(rng, 4)
        u /= m.norm(u)
        assert svd_to_evd(3.0, u, -u, m) == pytest.approx(-3.0, abs=1e-12)

    def test_two_by_two_indefinite(self):
        w = np.diag([2.0, -3.0]).astype(complex)
        m = EuclideanMetric(2)
        y, sig, zh = np.linalg.svd(w)
        lams = sorted(
            svd_to_evd(sig[i], zh.conj().T[:, i], y[:, i], m) for i in range(2)
        )
        assert lams[0] == pytest.approx(-3.0, abs=1e-12)
        assert lams[1] == pytest.approx(2.0, abs=1e-12)


class TestProjectiveNorm:
    def test_empty_is_zero(self):
        assert FactoredTensor.empty(2, 2).projective_norm() == 0.0

    def test_sum_of_values(self):
        w = FactoredTensor(
            right=np.eye(2, dtype=complex),
            left=np.eye(2, dtype=complex),
            values=np.array([3.0, 1.0]),
        )
        assert w.projective_norm() == pytest.approx(4.0)

    def test_matches_dense_svd_in_weighted_metric(self):
        rng = np.random.default_rng(6)
        m1 = random_spd_metric(rng, 4)
        m2 = random_spd_metric(rng, 5)
        w = random_factored(rng, 4, 5, 4, m1, m2)
        sig, _, _ = dense_weighted_svd(w.to_dense(), m1.to_dense(), m2.to_dense())
        assert w.projective_norm() == pytest.approx(np.sum(sig), abs=1e-10)


class TestLeadingRankOne:
    def test_recovers_rank_one_vector(self):
        rng = np.random.default_rng(7)
        u = random_complex(rng, 6)
        m = EuclideanMetric(6)
        unit = u / m.norm(u)
        w = HermitianFactored(factors=unit[:, None], values=np.array([m.norm(u) ** 2]))
        rec = w.leading_rank_one()
        assert np.linalg.norm(np.outer(rec, rec.conj()) - w.to_dense()) <= 1e-10

    def test_rank_two_takes_leading(self):
        w = HermitianFactored(
            factors=np.eye(3, dtype=complex)[:, :2], values=np.array([4.0, 1.0])
        )
        assert np.allclose(w.leading_rank_one(), 2.0 * basis_vec(3, 0))

    def test_near_rank_one_matches_dense_eig(self):
        rng = np.random.default_rng(8)
        u = random_complex(rng, 5)
        u /= np.linalg.norm(u)
        dense = np.outer(u, u.conj()) + 1e-8 * np.eye(5)
        lam, vecs = dense_weighted_evd(dense, np.eye(5, dtype=complex))
        w = HermitianFactored(factors=vecs[:, :1], values=lam[:1])
        rec = w.leading_rank_one()
        ref = np.sqrt(lam[0]) * vecs[:, 0]
        corr = abs(np.vdot(ref, rec))
        err = np.sqrt(max(np.linalg.norm(rec) ** 2 + np.linalg.norm(ref) ** 2 - 2 * corr, 0))
        assert err <= 1e-3

    def test_empty_raises(self):
        with pytest.raises(NoSolutionError):
            HermitianFactored.empty(3).leading_rank_one()

    def test_nonpositive_leading_raises(self):
        w = HermitianFactored(factors=basis_vec(2, 0)[:, None], values=np.array([-1.0]))
        with pytest.raises(NoSolutionError):
            w.leading_rank_one()

    def test_global_phase_invariance(self):
        rng = np.random.default_rng(9)
        m = EuclideanMetric(5)
        w = random_hermitian_factored(rng, 5, 2, m)
        rotated = HermitianFactored(
            factors=np.exp(1j * 0.77) * w.factors, values=w.values
        )
        assert np.allclose(w.leading_rank_one(), rotated.leading_rank_one(), atol=1e-12)


class TestInvariants:
    def test_dense_equivalence_sweep(self):
        rng = np.random.default_rng(10)
        for _ in range(5):
            n1 = rng.integers(2, 12)
            n2 = rng.integers(2, 12)
            r = int(min(5, n1, n2))
            m1 = random_spd_metric(rng, n1)
            m2 = random_spd_metric(rng, n2)
            w = random_factored(rng, int(n1), int(n2), r, m1, m2)
            dense = w.to_dense()
            e = random_complex(rng, int(n1))
            f = random_complex(rng, int(n2))
            assert np.allclose(w.right_action(m1, e), dense @ m1.apply(e), atol=1e-12)
            assert np.allclose(w.left_action(m2, f), dense.conj().T @ m2.apply(f), atol=1e-12)

    def test_representation_inner_product(self):
        rng = np.random.default_rng(11)
        m1 = random_spd_metric(rng, 5)
        m2 = random_spd_metric(rng, 6)
        w = random_factored(rng, 5, 6, 3, m1, m2)
        tensor_sq = tensor_inner(w.to_dense(), w.to_dense(), m1.to_dense(), m2.to_dense())
        assert tensor_sq == pytest.approx(float(np.sum(w.values**2)), abs=1e-10)

    def test_pruning_drops_tiny_values(self):
        w = FactoredTensor(
            right=np.eye(3, dtype=complex),
            left=np.eye(3, dtype=complex),
            values=np.array([1.0, 1e-10, 1e-16]),
        )
        assert w.pruned().rank == 2
