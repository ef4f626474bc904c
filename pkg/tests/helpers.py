"""Dense reference computations used as independent oracles in tests."""

import numpy as np

from liftkit.metric import Metric, orthonormalize
from liftkit.lowrank import FactoredTensor, HermitianFactored
from liftkit.operators import BilinearMap, QuadraticMap


class DenseMetric(Metric):
    """Metric backed by an explicit SPD matrix; test instances only."""

    kind = "dense"

    def __init__(self, matrix):
        self.matrix = np.asarray(matrix, dtype=complex)
        super().__init__(self.matrix.shape[0])

    def apply(self, x):
        self._check(x)
        return self.matrix @ x

    def apply_inv(self, b):
        self._check(b)
        return np.linalg.solve(self.matrix, b)

    def to_dense(self):
        return self.matrix.copy()


def random_spd_metric(rng, n, spread=(0.5, 2.0)):
    """Well-conditioned random real symmetric positive definite metric."""
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = rng.uniform(*spread, size=n)
    return DenseMetric((q * d) @ q.T)


def random_complex(rng, n):
    return rng.standard_normal(n) + 1j * rng.standard_normal(n)


def metric_sqrt(h):
    """Hermitian square root and its inverse from an eigendecomposition."""
    vals, vecs = np.linalg.eigh(h)
    root = (vecs * np.sqrt(vals)) @ vecs.conj().T
    inv_root = (vecs / np.sqrt(vals)) @ vecs.conj().T
    return root, inv_root


def dense_weighted_svd(w, h1, h2):
    """Singular triples of w with respect to dense metrics h1 (right), h2 (left)."""
    r1, ri1 = metric_sqrt(h1)
    r2, ri2 = metric_sqrt(h2)
    y, sig, zh = np.linalg.svd(r2 @ w @ r1.conj().T)
    return sig, ri1 @ zh.conj().T, ri2 @ y


def dense_weighted_evd(w, h):
    """Signed eigenpairs of a Hermitian w with respect to a dense metric h."""
    r, ri = metric_sqrt(h)
    a = r @ w @ r.conj().T
    a = 0.5 * (a + a.conj().T)
    lam, vecs = np.linalg.eigh(a)
    order = np.argsort(-lam)
    return lam[order], ri @ vecs[:, order]


def dense_svt(w, h1, h2, tau):
    """Transform, soft-threshold the singular values, transform back."""
    sig, right, left = dense_weighted_svd(w, h1, h2)
    r = sig.shape[0]
    thresholded = np.maximum(sig - tau, 0.0)
    return (left[:, :r] * thresholded) @ right[:, :r].conj().T


def dense_evt(w, h, tau):
    """Transform, keep positive eigenvalues above tau, transform back."""
    lam, vecs = dense_weighted_evd(w, h)
    thresholded = np.where(lam > tau, lam - tau, 0.0)
    return (vecs * thresholded) @ vecs.conj().T


def tensor_inner(w1, w2, h1, h2):
    """Real tensor-product inner product via the trace formula."""
    return float(np.real(np.trace(w2.conj().T @ h2 @ w1 @ h1)))


def tensor_norm(w, h1, h2):
    return np.sqrt(max(tensor_inner(w, w, h1, h2), 0.0))


def random_factored(rng, n1, n2, rank, m1, m2, scale=1.0):
    """Factored tensor with metric-orthonormal factors and descending values."""
    right = orthonormalize([random_complex(rng, n1) for _ in range(rank)], m1)
    left = orthonormalize([random_complex(rng, n2) for _ in range(rank)], m2)
    values = np.sort(rng.uniform(0.2, 1.0, size=rank))[::-1] * scale
    return FactoredTensor(
        right=np.stack(right, axis=1), left=np.stack(left, axis=1), values=values
    )


def random_hermitian_factored(rng, n, rank, metric, scale=1.0, signed=False):
    vecs = orthonormalize([random_complex(rng, n) for _ in range(rank)], metric)
    values = np.sort(rng.uniform(0.2, 1.0, size=rank))[::-1] * scale
    if signed:
        signs = rng.choice([-1.0, 1.0], size=rank)
        values = np.sort(values * signs)[::-1]
    return HermitianFactored(factors=np.stack(vecs, axis=1), values=values)


class DenseBilinear(BilinearMap):
    """Toy bilinear map from an explicit (m, n2, n1) coefficient tensor.

    B(u, v)[m] = sum_{i,j} T[m, i, j] v[i] conj(u[j]); the lifted operator is
    the linear map w -> sum_{i,j} T[m, i, j] w[i, j] on n2 x n1 matrices.
    """

    def __init__(self, tensor, h1, h2):
        self.tensor = np.asarray(tensor, dtype=complex)
        self.h1 = h1
        self.h2 = h2
        self.data_dim = self.tensor.shape[0]

    def apply(self, u, v):
        return np.einsum("mij,i,j->m", self.tensor, v, np.conj(u))

    def lift_apply(self, w):
        return np.einsum("mij,ij->m", self.tensor, w)

    def lift_matrix(self):
        m = self.tensor.shape[0]
        return self.tensor.reshape(m, -1)

    def hs_adjoint_left(self, z, e):
        """Euclidean partial adjoint in the linear slot."""
        mat = np.einsum("mij,j->mi", self.tensor, np.conj(e))
        return mat.conj().T @ z

    def hs_adjoint_right(self, z, f):
        """Euclidean partial adjoint in the antilinear slot."""
        mat = np.einsum("mij,i->mj", self.tensor, f)
        return mat.T @ np.conj(z)

    def partial_adjoint_left(self, y, e):
        return self.h2.apply_inv(self.hs_adjoint_left(np.asarray(y, dtype=complex), e))

    def partial_adjoint_right(self, y, f):
        return self.h1.apply_inv(self.hs_adjoint_right(np.asarray(y, dtype=complex), f))


class DenseQuadratic(QuadraticMap):
    """Toy quadratic map built on a DenseBilinear with shared metric."""

    def __init__(self, tensor, h):
        self._bilinear = DenseBilinear(tensor, h, h)
        self.h = h
        self.data_dim = self._bilinear.data_dim

    def apply(self, u):
        return self._bilinear.apply(u, u)

    def sym_adjoint_action(self, y, e):
        return 0.5 * (
            self._bilinear.partial_adjoint_left(y, e)
            + self._bilinear.partial_adjoint_right(y, e)
        )

    def bilinear(self):
        return self._bilinear


def random_hermitian_tensor_stack(rng, m, n):
    """Coefficient stack whose lifted operator maps Hermitian w to real data."""
    stack = np.empty((m, n, n), dtype=complex)
    for i in range(m):
        a = random_complex(rng, n * n).reshape(n, n)
        stack[i] = 0.5 * (a + a.conj().T)
    return stack


def oracle_from_dense(w, m1, m2, norm_estimate=None):
    """ActionOracle over an explicit matrix (n2 x n1) with given metrics."""
    from liftkit.partial_svd import ActionOracle

    w = np.asarray(w, dtype=complex)
    n2, n1 = w.shape
    return ActionOracle(
        right=lambda e: w @ m1.apply(e),
        left=lambda f: w.conj().T @ m2.apply(f),
        dims=(n1, n2),
        metrics=(m1, m2),
        norm_estimate=norm_estimate,
    )
