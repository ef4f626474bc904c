import numpy as np
import pytest

from liftkit.errors import MetricSolveError
from liftkit.metric import (
    EuclideanMetric,
    ReweightedMetric,
    SobolevMetric,
    SobolevStencil,
    orthonormalize,
)

from helpers import random_complex


def dense_stencil_matrix(shape, op, in_shape):
    """Brute-force dense assembly of a stencil action."""
    n = in_shape[0] * in_shape[1]
    cols = []
    for j in range(n):
        e = np.zeros(n, dtype=complex)
        e[j] = 1.0
        cols.append(op(e.reshape(in_shape)).ravel())
    return np.stack(cols, axis=1)


def make_reweighted(base, rng, count, weights=None):
    dirs = orthonormalize([random_complex(rng, base.dim) for _ in range(count)], base)
    if weights is None:
        weights = rng.uniform(0.1, 0.9, size=len(dirs))
    return ReweightedMetric(base, np.stack(dirs, axis=0), weights)


class TestInner:
    def test_euclidean_basis(self):
        m = EuclideanMetric(4)
        e0 = np.zeros(4, dtype=complex)
        e0[0] = 1.0
        assert m.inner(e0, e0) == pytest.approx(1.0)

    def test_imaginary_pair_is_orthogonal(self):
        m = EuclideanMetric(3)
        e0 = np.zeros(3, dtype=complex)
        e0[0] = 1.0
        assert m.inner(1j * e0, e0) == pytest.approx(0.0)

    def test_identity_weight_sobolev_matches_euclidean(self):
        rng = np.random.default_rng(0)
        sob = SobolevMetric((3, 4), (1.0, 0.0, 0.0))
        eu = EuclideanMetric(12)
        x = random_complex(rng, 12)
        y = random_complex(rng, 12)
        assert sob.inner(x, y) == pytest.approx(eu.inner(x, y), abs=1e-12)

    def test_symmetry_and_positivity(self):
        rng = np.random.default_rng(1)
        sob = SobolevMetric((4, 5), (0.25, 1.0, 1.0))
        rew = make_reweighted(EuclideanMetric(20), rng, 3)
        for m in (EuclideanMetric(20), sob, rew):
            x = random_complex(rng, 20)
            y = random_complex(rng, 20)
            assert m.inner(x, y) == pytest.approx(m.inner(y, x), rel=1e-12)
            assert m.inner(x, x) > 0
            assert m.inner(np.zeros(20, dtype=complex), np.zeros(20, dtype=complex)) == 0.0

    def test_dimension_mismatch(self):
        m = EuclideanMetric(4)
        with pytest.raises(ValueError):
            m.inner(np.zeros(3, dtype=complex), np.zeros(4, dtype=complex))


class TestSobolevStencil:
    def test_d1_of_constant_is_zero(self):
        st = SobolevStencil((3, 5))
        img = np.ones((3, 5), dtype=complex)
        assert np.allclose(st.d1(img), 0.0)
        assert np.allclose(st.d2(img), 0.0)

    @pytest.mark.parametrize("which", ["d1", "d2"])
    def test_adjoint_identity(self, which):
        rng = np.random.default_rng(7)
        st = SobolevStencil((4, 6))
        fwd = getattr(st, which)
        adj = getattr(st, which + "_adjoint")
        for _ in range(20):
            u = random_complex(rng, 24).reshape(4, 6)
            v_shape = fwd(u).shape
            v = random_complex(rng, v_shape[0] * v_shape[1]).reshape(v_shape)
            lhs = np.real(np.vdot(v, fwd(u)))
            rhs = np.real(np.vdot(adj(v), u))
            assert lhs == pytest.approx(rhs, abs=1e-12)


class TestSobolevApply:
    def test_identity_weights(self):
        rng = np.random.default_rng(2)
        m = SobolevMetric((3, 3), (1.0, 0.0, 0.0))
        u = random_complex(rng, 9)
        assert np.allclose(m.apply(u), u)

    def test_matches_dense_assembly_on_2x2(self):
        m = SobolevMetric((2, 2), (0.0 + 1e-12, 1.0, 0.0))
        st = SobolevStencil((2, 2))
        dense = dense_stencil_matrix((2, 2), lambda img: st.d1_adjoint(st.d1(img)), (2, 2))
        u = np.zeros(4, dtype=complex)
        u[0] = 1.0
        expected = dense @ u
        got = m.apply(u) - 1e-12 * u
        assert np.allclose(got, expected, atol=1e-12)

    def test_constant_image_sees_only_mass_term(self):
        m = SobolevMetric((4, 4), (0.7, 2.0, 3.0))
        u = np.full(16, 1.5 + 0.5j)
        assert np.allclose(m.apply(u), 0.7 * u)

    def test_matches_dense_assembly_random(self):
        rng = np.random.default_rng(3)
        mu = (0.25, 1.0, 1.0)
        m = SobolevMetric((3, 4), mu)
        st = SobolevStencil((3, 4))

        def full(img_vec):
            img = img_vec.reshape(3, 4)
            out = mu[0] * img + mu[1] * st.d1_adjoint(st.d1(img)) + mu[2] * st.d2_adjoint(
                st.d2(img)
            )
            return out.ravel()

        dense = dense_stencil_matrix((3, 4), lambda img: full(img.ravel()).reshape(3, 4), (3, 4))
        u = random_complex(rng, 12)
        assert np.allclose(m.apply(u), dense @ u, atol=1e-12)


class TestApplyInv:
    def test_euclidean_is_identity(self):
        rng = np.random.default_rng(4)
        m = EuclideanMetric(6)
        b = random_complex(rng, 6)
        assert np.allclose(m.apply_inv(b), b)

    def test_reweighted_closed_form_on_promoted_direction(self):
        rng = np.random.default_rng(5)
        base = EuclideanMetric(8)
        dirs = orthonormalize([random_complex(rng, 8)], base)
        lam = 0.6
        m = ReweightedMetric(base, np.stack(dirs, axis=0), [lam])
        phi = dirs[0]
        b = m.base.apply(phi)  # transformed direction
        assert np.allclose(m.apply_inv(b), phi / (1.0 - lam), atol=1e-12)

    def test_sobolev_inverse_roundtrip(self):
        rng = np.random.default_rng(6)
        m = SobolevMetric((5, 7), (0.25, 1.0, 1.0))
        u = random_complex(rng, 35)
        x = m.apply_inv(m.apply(u))
        assert np.linalg.norm(x - u) <= 1e-9 * np.linalg.norm(u)

    def test_roundtrip_all_kinds(self):
        rng = np.random.default_rng(7)
        sob = SobolevMetric((4, 4), (0.5, 1.0, 2.0))
        rew = make_reweighted(sob, rng, 2)
        for m in (EuclideanMetric(16), sob, rew):
            x = random_complex(rng, 16)
            b = m.apply(x)
            assert np.linalg.norm(m.apply(m.apply_inv(b)) - b) <= 1e-10 * np.linalg.norm(b)

    @pytest.mark.parametrize("count", [0, 1, 3])
    def test_reweighted_roundtrip_by_promotion_count(self, count):
        rng = np.random.default_rng(20 + count)
        base = EuclideanMetric(10)
        m = make_reweighted(base, rng, count) if count else ReweightedMetric(
            base, np.zeros((0, 10)), np.zeros(0)
        )
        for _ in range(10):
            x = random_complex(rng, 10)
            out = m.apply_inv(m.apply(x))
            assert np.linalg.norm(out - x) <= 1e-10 * np.linalg.norm(x)


class TestReweightedApply:
    def test_no_promotions_is_base(self):
        rng = np.random.default_rng(8)
        base = EuclideanMetric(5)
        m = ReweightedMetric(base, np.zeros((0, 5)), np.zeros(0))
        u = random_complex(rng, 5)
        assert np.allclose(m.apply(u), u)

    def test_promoted_direction_is_scaled(self):
        rng = np.random.default_rng(9)
        base = EuclideanMetric(6)
        dirs = orthonormalize([random_complex(rng, 6)], base)
        m = ReweightedMetric(base, np.stack(dirs, axis=0), [0.3])
        phi = dirs[0]
        expected = (1.0 - 0.3) * base.apply(phi)
        assert np.allclose(m.apply(phi), expected, atol=1e-12)

    def test_orthogonal_vector_unchanged(self):
        rng = np.random.default_rng(10)
        base = EuclideanMetric(6)
        vecs = orthonormalize([random_complex(rng, 6) for _ in range(3)], base)
        m = ReweightedMetric(base, np.stack(vecs[:2], axis=0), [0.4, 0.2])
        u = vecs[2]
        assert np.allclose(m.apply(u), base.apply(u), atol=1e-12)

    def test_promoted_norm_identity(self):
        rng = np.random.default_rng(11)
        base = SobolevMetric((3, 4), (0.25, 1.0, 1.0))
        weights = [0.7, 0.25, 0.0 + 0.1]
        m = make_reweighted(base, rng, 3, weights=np.asarray(weights))
        for k in range(3):
            phi = m.directions[k]
            assert m.inner(phi, phi) == pytest.approx(1.0 - m.weights[k], abs=1e-10)

    def test_positive_definite_for_admissible_weights(self):
        rng = np.random.default_rng(12)
        base = EuclideanMetric(10)
        m = make_reweighted(base, rng, 4, weights=np.array([0.99, 0.9, 0.5, 0.0]))
        for _ in range(20):
            x = random_complex(rng, 10)
            assert m.inner(x, x) > 0


class TestTransform:
    def test_zero_weights_identity(self):
        rng = np.random.default_rng(13)
        base = EuclideanMetric(7)
        m = make_reweighted(base, rng, 2, weights=np.zeros(2))
        u = random_complex(rng, 7)
        assert np.allclose(m.transform(u), u)
        assert np.allclose(m.transform(u, adjoint=True), u)

    @pytest.mark.parametrize("base_kind", ["euclidean", "sobolev"])
    def test_composition_identity(self, base_kind):
        rng = np.random.default_rng(14)
        if base_kind == "euclidean":
            base = EuclideanMetric(12)
        else:
            base = SobolevMetric((3, 4), (0.25, 1.0, 1.0))
        m = make_reweighted(base, rng, 3)
        for _ in range(10):
            u = random_complex(rng, 12)
            composed = base.apply(m.apply_inv(u))
            assert np.linalg.norm(m.transform(u) - composed) <= 1e-10 * np.linalg.norm(u)

    def test_orthogonal_vector_fixed(self):
        rng = np.random.default_rng(15)
        base = EuclideanMetric(6)
        vecs = orthonormalize([random_complex(rng, 6) for _ in range(3)], base)
        m = ReweightedMetric(base, np.stack(vecs[:2], axis=0), [0.5, 0.25])
        assert np.allclose(m.transform(vecs[2]), vecs[2], atol=1e-12)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(16)
        base = SobolevMetric((4, 3), (0.5, 1.0, 0.5))
        m = make_reweighted(base, rng, 2)
        for _ in range(10):
            u = random_complex(rng, 12)
            v = random_complex(rng, 12)
            lhs = np.vdot(v, m.transform(u))
            rhs = np.vdot(m.transform(v, adjoint=True), u)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


class TestOrthonormalize:
    def test_orthonormal_set_is_fixed_up_to_phase(self):
        m = EuclideanMetric(3)
        basis = [np.array([1.0, 0, 0], dtype=complex), np.array([0, 1.0, 0], dtype=complex)]
        out = orthonormalize(basis, m)
        assert len(out) == 2
        for a, b in zip(out, basis):
            assert np.allclose(a, b)

    def test_hand_gram_schmidt(self):
        m = EuclideanMetric(2)
        out = orthonormalize(
            [np.array([1.0, 0.0], dtype=complex), np.array([1.0, 1.0], dtype=complex)], m
        )
        assert np.allclose(out[0], [1.0, 0.0])
        assert np.allclose(out[1], [0.0, 1.0])

    def test_duplicate_dropped(self):
        rng = np.random.default_rng(17)
        m = EuclideanMetric(5)
        v = random_complex(rng, 5)
        out = orthonormalize([v, v], m)
        assert len(out) == 1
        assert m.norm(out[0]) == pytest.approx(1.0)

    def test_empty_input(self):
        assert orthonormalize([], EuclideanMetric(4)) == []

    def test_pairwise_orthonormal_in_weighted_metric(self):
        rng = np.random.default_rng(18)
        m = SobolevMetric((4, 4), (0.25, 1.0, 1.0))
        out = orthonormalize([random_complex(rng, 16) for _ in range(6)], m)
        assert len(out) == 6
        for i, a in enumerate(out):
            for j, b in enumerate(out):
                expected = 1.0 if i == j else 0.0
                assert abs(m.pairing(a, b) - expected) <= 1e-10

    def test_span_preserved(self):
        rng = np.random.default_rng(19)
        m = EuclideanMetric(6)
        vecs = [random_complex(rng, 6) for _ in range(3)]
        out = orthonormalize(vecs, m)
        # each input lies in the span of the outputs produced so far
        for i in range(1, 4):
            basis = np.stack(out[:i], axis=1)
            coeff, *_ = np.linalg.lstsq(basis, vecs[i - 1], rcond=None)
            assert np.linalg.norm(basis @ coeff - vecs[i - 1]) <= 1e-8

    def test_phase_convention(self):
        m = EuclideanMetric(3)
        v = np.array([0.0, -2.0j, 0.5], dtype=complex)
        out = orthonormalize([v], m)
        idx = int(np.argmax(np.abs(out[0])))
        pivot = out[0][idx]
        assert pivot.imag == pytest.approx(0.0, abs=1e-14)
        assert pivot.real > 0


class TestSolverFailure:
    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_cap_exhaustion_raises(self):
        # an indefinite "metric" makes CG fail; exercised through a stub
        m = SobolevMetric((2, 2), (1.0, 0.0, 0.0))
        bad = np.array([np.nan] * 4, dtype=complex)
        with pytest.raises((MetricSolveError, ValueError)):
            m.apply_inv(bad)
