"""Partial singular value decompositions of implicitly given tensors.

Two engines work purely through left/right operator actions in arbitrary
metrics: subspace iteration with Ritz acceleration, and Golub-Kahan
bidiagonalization with augmented restarts.  Both return leading singular
triples together with per-triple residual estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import orthonormalize

BREAKDOWN_REL = 1e-13


class ActionOracle:
    """Matrix-free access to a tensor w through its metric actions.

    ``right(e)`` evaluates w H1 e (into the left space), ``left(f)``
    evaluates w^* H2 f (into the right space).  Calls are counted so engine
    cost can be benchmarked.
    """

    def __init__(self, right, left, dims, metrics, norm_estimate=None):
        self._right = right
        self._left = left
        self.dims = (int(dims[0]), int(dims[1]))  # (n1, n2)
        self.metrics = metrics  # (metric on H1, metric on H2)
        self.norm_estimate = norm_estimate
        self.right_calls = 0
        self.left_calls = 0

    def right(self, e):
        self.right_calls += 1
        return self._right(e)

    def left(self, f):
        self.left_calls += 1
        return self._left(f)

    @property
    def calls(self):
        return self.right_calls + self.left_calls

    @classmethod
    def hermitian(cls, action, dim, metric, norm_estimate=None):
        """Oracle for a symmetric tensor: left and right actions coincide."""
        return cls(action, action, (dim, dim), (metric, metric), norm_estimate)

    @classmethod
    def from_tensor(cls, w, metrics):
        """Oracle backed by an existing factored tensor."""
        m1, m2 = metrics
        sigma0 = float(w.values[0]) if w.rank else 0.0
        return cls(
            lambda e: w.right_action(m1, e),
            lambda f: w.left_action(m2, f),
            (w.right.shape[0], w.left.shape[0]),
            metrics,
            norm_estimate=sigma0,
        )

    @classmethod
    def from_hermitian(cls, w, metric):
        lam0 = float(np.max(np.abs(w.values))) if w.rank else 0.0
        return cls.hermitian(
            lambda e: w.action(metric, e), w.dim, metric, norm_estimate=lam0
        )

    def check_adjoint(self, rng, probes=10):
        """Max deviation of the adjoint identity on random probes (test aid)."""
        m1, m2 = self.metrics
        n1, n2 = self.dims
        worst = 0.0
        for _ in range(probes):
            e = rng.standard_normal(n1) + 1j * rng.standard_normal(n1)
            f = rng.standard_normal(n2) + 1j * rng.standard_normal(n2)
            lhs = m2.inner(self.right(e), f)
            rhs = m1.inner(e, self.left(f))
            scale = max(abs(lhs), abs(rhs), 1.0)
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst


@dataclass(eq=False)
class BidiagonalSystem:
    """Projected small system: an upper bidiagonal block, optionally preceded
    by retained values with a coupling column (arrow shape after a restart)."""

    diag: np.ndarray
    superdiag: np.ndarray
    aug_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    aug_coupling: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=complex))

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=float)
        self.superdiag = np.asarray(self.superdiag, dtype=float)
        self.aug_values = np.asarray(self.aug_values, dtype=float)
        self.aug_coupling = np.asarray(self.aug_coupling, dtype=complex)
        for arr in (self.diag, self.superdiag, self.aug_values):
            if arr.size and (not np.all(np.isfinite(arr)) or np.any(arr < 0)):
                raise ValueError("bidiagonal entries must be finite and nonnegative")
        if self.aug_coupling.size and not np.all(np.isfinite(self.aug_coupling)):
            raise ValueError("coupling entries must be finite")
        if self.aug_values.shape != self.aug_coupling.shape:
            raise ValueError("coupling row must match retained values")

    @property
    def size(self):
        return self.aug_values.size + self.diag.size

    def to_dense(self):
        kk = self.size
        mat = np.zeros((kk, kk), dtype=complex)
        la = self.aug_values.size
        if la:
            mat[:la, :la] = np.diag(self.aug_values)
            if self.diag.size:
                mat[:la, la] = self.aug_coupling
        for i, b in enumerate(self.diag):
            mat[la + i, la + i] = b
        for i, g in enumerate(self.superdiag):
            mat[la + i, la + i + 1] = g
        return mat


@dataclass(eq=False)
class PartialSVD:
    """Leading singular triples with residual estimates and engine stats."""

    right_vectors: np.ndarray  # (n1, r)
    left_vectors: np.ndarray   # (n2, r)
    values: np.ndarray         # (r,)
    residuals: np.ndarray      # (r,)
    converged: bool
    exact: bool = False
    sweeps: int = 0
    restarts: int = 0
    norm_estimate: float = 0.0
    sweep_history: list | None = None

    @property
    def count(self):
        return self.values.shape[0]


def _project_out(vec, basis, applied, collect=None):
    """Two MGS passes of vec against a metric-orthonormal cached basis."""
    for _ in range(2):
        for i, (u, hu) in enumerate(zip(basis, applied)):
            c = np.vdot(hu, vec)
            vec = vec - c * u
            if collect is not None:
                collect[i] += c
    return vec


def _random_unit(rng, n, metric):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / metric.norm(v)


def _empty_psvd(n1, n2, values=None, converged=True, exact=True):
    r = 0 if values is None else len(values)
    return PartialSVD(
        right_vectors=np.zeros((n1, r), dtype=complex),
        left_vectors=np.zeros((n2, r), dtype=complex),
        values=np.zeros(r) if values is None else np.asarray(values, dtype=float),
        residuals=np.zeros(r),
        converged=converged,
        exact=exact,
    )


def _threshold_prefix_done(values, converged_mask, stop_below, tol):
    """True when a converged leading prefix ends in a value decisively below
    the requested level, so no further triples can matter."""
    if stop_below is None:
        return False
    for j in range(values.shape[0]):
        if not converged_mask[j]:
            return False
        if values[j] < stop_below - tol:
            return True
    return False


def subspace_iterate(oracle, ell, delta, max_sweeps=300, rng=None, start=None, stop_below=None):
    """Orthogonal iteration with Ritz acceleration for the leading triples.

    Alternates left and right operator actions over an ell-dimensional
    subspace pair, reorthonormalizing in the respective metrics, and rotates
    by the SVD of the small cross matrix.  Converged means the residual
    ``|w^* H2 v_m - sigma_m u_m|_{H1}`` is below delta times the running
    norm estimate for every requested triple; with ``stop_below`` set, a
    converged prefix reaching below that level also stops the iteration.
    """
    if ell < 1 or delta <= 0:
        raise ValueError("need ell >= 1 and delta > 0")
    n1, n2 = oracle.dims
    m1, m2 = oracle.metrics
    ell = min(ell, n1, n2)
    rng = rng if rng is not None else np.random.default_rng(0)

    cols = [np.asarray(c, dtype=complex) for c in (start or [])][:ell]
    while len(cols) < ell:
        cols.append(rng.standard_normal(n2) + 1j * rng.standard_normal(n2))
    v_cols = orthonormalize(cols, m2)
    while len(v_cols) < ell:
        v_cols = orthonormalize(
            v_cols + [rng.standard_normal(n2) + 1j * rng.standard_normal(n2)], m2
        )

    norm_est = float(oracle.norm_estimate or 0.0)
    history = []
    u_mat = None
    v_mat = None
    values = None

    for sweep in range(1, max_sweeps + 1):
        images = [oracle.left(v) for v in v_cols]

        if values is not None:
            residuals = np.array(
                [m1.norm(images[m] - values[m] * u_mat[:, m]) for m in range(len(values))]
            )
            tol = delta * max(norm_est, 1e-300)
            done = np.all(residuals <= tol) or _threshold_prefix_done(
                values, residuals <= tol, stop_below, tol
            )
            if done:
                return PartialSVD(
                    right_vectors=u_mat,
                    left_vectors=v_mat,
                    values=values,
                    residuals=residuals,
                    converged=True,
                    sweeps=sweep - 1,
                    norm_estimate=norm_est,
                    sweep_history=history,
                )

        e_cols = orthonormalize(images, m1)
        if not e_cols:
            # zero operator on the probed subspace
            out = _empty_psvd(n1, n2, values=np.zeros(ell))
            out.right_vectors = np.stack(
                orthonormalize(
                    [rng.standard_normal(n1) + 1j * rng.standard_normal(n1) for _ in range(ell)],
                    m1,
                ),
                axis=1,
            )
            out.left_vectors = np.stack(v_cols, axis=1)
            out.sweeps = sweep
            out.sweep_history = history
            return out

        raw = [oracle.right(e) for e in e_cols]
        f_cols = orthonormalize(raw, m2)
        if not f_cols:
            out = _empty_psvd(n1, n2, values=np.zeros(len(e_cols)))
            out.right_vectors = np.stack(e_cols, axis=1)
            out.left_vectors = np.stack(v_cols[: len(e_cols)], axis=1)
            out.sweeps = sweep
            out.sweep_history = history
            return out

        hf = [m2.apply(f) for f in f_cols]
        cross = np.array([[np.vdot(hfi, g) for g in raw] for hfi in hf])
        y_small, sig, zh_small = np.linalg.svd(cross)
        r = sig.shape[0]
        e_mat = np.stack(e_cols, axis=1)
        f_mat = np.stack(f_cols, axis=1)
        u_mat = e_mat @ zh_small.conj().T[:, :r]
        v_mat = f_mat @ y_small[:, :r]
        values = sig
        v_cols = [v_mat[:, j] for j in range(r)]
        norm_est = max(norm_est, float(sig[0]) if r else 0.0)
        history.append(sig.copy())

    if values is not None:
        # per-triple residuals so callers can still use the converged prefix
        residuals = np.array(
            [m1.norm(oracle.left(v_mat[:, m]) - values[m] * u_mat[:, m]) for m in range(len(values))]
        )
    else:
        residuals = np.zeros(0)
    return PartialSVD(
        right_vectors=u_mat if u_mat is not None else np.zeros((n1, 0), dtype=complex),
        left_vectors=v_mat if v_mat is not None else np.zeros((n2, 0), dtype=complex),
        values=values if values is not None else np.zeros(0),
        residuals=residuals,
        converged=False,
        sweeps=max_sweeps,
        norm_estimate=norm_est,
        sweep_history=history,
    )


@dataclass(eq=False)
class LanczosFactorization:
    """Result of a bidiagonalization run: bases, projected system, and the
    retained continuation vector for augmented restarts."""

    system: BidiagonalSystem
    right_basis: np.ndarray  # (n1, c)
    left_basis: np.ndarray   # (n2, c)
    p_last: np.ndarray
    gamma_last: float
    exact: bool


class _GrowingFactorization:
    """Mutable Golub-Kahan state with full reorthogonalization."""

    def __init__(self, oracle, rng):
        self.oracle = oracle
        self.m1, self.m2 = oracle.metrics
        self.rng = rng
        self.E, self.HE, self.F, self.HF = [], [], [], []
        self.betas, self.gammas = [], []
        self.aug_values = np.zeros(0)
        self.aug_coupling = np.zeros(0, dtype=complex)
        self.exact = False
        self.scale = float(oracle.norm_estimate or 0.0)

    def tol(self):
        return BREAKDOWN_REL * max(self.scale, 1e-300)

    def seed(self, u_mat, v_mat, values):
        self.E = [u_mat[:, j].copy() for j in range(u_mat.shape[1])]
        self.HE = [self.m1.apply(e) for e in self.E]
        self.F = [v_mat[:, j].copy() for j in range(v_mat.shape[1])]
        self.HF = [self.m2.apply(f) for f in self.F]
        self.aug_values = np.asarray(values, dtype=float).copy()
        self.scale = max(self.scale, float(values[0]) if len(values) else 0.0)

    def add_e(self, vec):
        vec = _project_out(vec.astype(complex), self.E, self.HE)
        nrm = self.m1.norm(vec)
        if nrm <= self.tol():
            return False
        vec = vec / nrm
        self.E.append(vec)
        self.HE.append(self.m1.apply(vec))
        return True

    def add_f_from_image(self, q, collect=None):
        q = _project_out(q.astype(complex), self.F, self.HF, collect)
        beta = self.m2.norm(q)
        if beta <= self.tol():
            # stalled left direction: continue in a fresh random direction
            f = _project_out(_random_unit(self.rng, q.shape[0], self.m2), self.F, self.HF)
            nrm = self.m2.norm(f)
            if nrm == 0.0:
                return 0.0, None
            f = f / nrm
            beta = 0.0
        else:
            f = q / beta
        self.F.append(f)
        self.HF.append(self.m2.apply(f))
        return beta, f

    def advance(self, p, gamma, k, link):
        """Append plain recursion columns until k columns exist or the Krylov
        space is exhausted.  Returns the next continuation pair (p, gamma)."""
        n1 = self.oracle.dims[0]
        while len(self.E) < k:
            if gamma <= self.tol():
                self.exact = True
                return np.zeros(n1, dtype=complex), 0.0
            if not self.add_e(p / gamma):
                self.exact = True
                return np.zeros(n1, dtype=complex), 0.0
            if link:
                self.gammas.append(gamma)
            e = self.E[-1]
            q = self.oracle.right(e)
            if link and len(self.F):
                q = q - gamma * self.F[-1]
            beta, f = self.add_f_from_image(q)
            if f is None:
                self.E.pop()
                self.HE.pop()
                if link:
                    self.gammas.pop()
                self.exact = True
                return np.zeros(n1, dtype=complex), 0.0
            self.betas.append(beta)
            self.scale = max(self.scale, beta)
            p = self.oracle.left(f) - beta * e
            gamma = self.m1.norm(p)
            self.scale = max(self.scale, gamma)
            link = True
        return p, gamma

    def factorization(self, p, gamma):
        sys = BidiagonalSystem(
            diag=np.asarray(self.betas, dtype=float),
            superdiag=np.asarray(self.gammas, dtype=float),
            aug_values=self.aug_values,
            aug_coupling=self.aug_coupling,
        )
        e_mat = (
            np.stack(self.E, axis=1)
            if self.E
            else np.zeros((self.oracle.dims[0], 0), dtype=complex)
        )
        f_mat = (
            np.stack(self.F, axis=1)
            if self.F
            else np.zeros((self.oracle.dims[1], 0), dtype=complex)
        )
        return LanczosFactorization(
            system=sys,
            right_basis=e_mat,
            left_basis=f_mat,
            p_last=p,
            gamma_last=0.0 if self.exact else float(gamma),
            exact=self.exact,
        )


def lanczos_bidiagonalize(oracle, start_direction, k):
    """Golub-Kahan bidiagonalization in the oracle's metrics.

    Runs k recursion steps with full reorthogonalization, terminating early
    when the Krylov subspace becomes invariant (the singular values are then
    exact).  The continuation vector and its norm are returned for restarts.
    """
    if k < 1:
        raise ValueError("k must be positive")
    m1 = oracle.metrics[0]
    start = np.asarray(start_direction, dtype=complex)
    nrm = m1.norm(start)
    if nrm == 0.0:
        raise ValueError("start direction must be nonzero")
    state = _GrowingFactorization(oracle, np.random.default_rng(0))
    k = min(k, oracle.dims[0], oracle.dims[1])
    p, gamma = state.advance(start / nrm, 1.0, k, link=False)
    return state.factorization(p, gamma)


def ritz_factorize(system, right_basis, left_basis, gamma_last=0.0):
    """Dense SVD of the projected system with basis rotation.

    Residual estimates are the classical last-row couplings scaled by the
    continuation norm; they are exact for the returned triples.
    """
    kk = system.size
    n1 = right_basis.shape[0]
    n2 = left_basis.shape[0]
    if kk == 0:
        return _empty_psvd(n1, n2)
    y_small, sig, zh_small = np.linalg.svd(system.to_dense())
    u_mat = right_basis @ zh_small.conj().T
    v_mat = left_basis @ y_small
    residuals = float(gamma_last) * np.abs(y_small[-1, :])
    return PartialSVD(
        right_vectors=u_mat,
        left_vectors=v_mat,
        values=sig,
        residuals=residuals,
        converged=False,
        norm_estimate=float(sig[0]) if sig.size else 0.0,
    )


def augmented_restart(
    oracle, ell, k, delta, max_restarts=200, rng=None, start=None, stop_below=None
):
    """Restarted bidiagonalization seeded with the leading Ritz vectors.

    Each cycle keeps the ell leading triples plus the retained continuation
    vector, records the coupling row to the seeded left basis, extends to k
    columns by the plain recursion, and refactorizes.  Convergence is judged
    by the last-row residual estimate relative to the running norm estimate;
    with ``stop_below`` set, a converged prefix reaching below that level
    ends the restarts early.  All k Ritz triples of the final cycle are
    returned (callers needing only converged triples should consult
    ``residuals``).
    """
    if ell < 1 or delta <= 0:
        raise ValueError("need ell >= 1 and delta > 0")
    n1, n2 = oracle.dims
    m1 = oracle.metrics[0]
    rng = rng if rng is not None else np.random.default_rng(0)
    ell = min(ell, n1, n2)
    k = min(max(k, ell + 1), n1, n2)
    if k <= ell:
        k = ell  # tiny spaces: a single full pass is the whole decomposition

    if start is None:
        start = _random_unit(rng, n1, m1)
    fac = lanczos_bidiagonalize(oracle, start, k)
    psvd = ritz_factorize(fac.system, fac.right_basis, fac.left_basis, fac.gamma_last)
    norm_est = max(float(oracle.norm_estimate or 0.0), psvd.norm_estimate)

    restarts = 0
    while True:
        want = min(ell, psvd.count)
        tol = delta * max(norm_est, 1e-300)
        ok = fac.exact or (want > 0 and np.all(psvd.residuals[:want] <= tol))
        if not ok:
            ok = _threshold_prefix_done(psvd.values, psvd.residuals <= tol, stop_below, tol)
        if ok or psvd.count == 0:
            psvd.converged = True
            psvd.exact = fac.exact
            psvd.restarts = restarts
            psvd.norm_estimate = norm_est
            return psvd
        if restarts >= max_restarts:
            psvd.converged = False
            psvd.restarts = restarts
            psvd.norm_estimate = norm_est
            return psvd

        restarts += 1
        state = _GrowingFactorization(oracle, rng)
        state.scale = norm_est
        state.seed(
            psvd.right_vectors[:, :want], psvd.left_vectors[:, :want], psvd.values[:want]
        )
        p = fac.p_last
        gamma = m1.norm(p)
        if gamma <= state.tol() or not state.add_e(p / gamma):
            psvd.converged = True
            psvd.exact = True
            psvd.restarts = restarts
            psvd.norm_estimate = norm_est
            return psvd
        e_new = state.E[-1]
        q = oracle.right(e_new)
        rho = [0.0 + 0.0j] * want
        q = _project_out(q, state.F, state.HF, collect=rho)
        state.aug_coupling = np.asarray(rho, dtype=complex)
        beta = state.m2.norm(q)
        if beta <= state.tol():
            f_new = _project_out(_random_unit(rng, n2, state.m2), state.F, state.HF)
            nf = state.m2.norm(f_new)
            if nf == 0.0:
                psvd.converged = True
                psvd.exact = True
                psvd.restarts = restarts
                return psvd
            f_new = f_new / nf
            beta = 0.0
        else:
            f_new = q / beta
        state.F.append(f_new)
        state.HF.append(state.m2.apply(f_new))
        state.betas.append(beta)
        state.scale = max(state.scale, beta)
        p = oracle.left(f_new) - beta * e_new
        gamma = m1.norm(p)
        p, gamma = state.advance(p, gamma, k, link=True)
        fac = state.factorization(p, gamma)
        psvd = ritz_factorize(fac.system, fac.right_basis, fac.left_basis, fac.gamma_last)
        psvd.restarts = restarts
        norm_est = max(norm_est, psvd.norm_estimate)


def estimate_operator_norm(oracle, iters, rng=None, start=None):
    """Power-iteration estimate of the leading singular value.

    The returned value is a Rayleigh-quotient bound and never exceeds the
    true norm (up to rounding); it grows monotonically with the iterate.
    """
    if iters < 1:
        raise ValueError("iters must be positive")
    n1 = oracle.dims[0]
    m1, m2 = oracle.metrics
    rng = rng if rng is not None else np.random.default_rng(0)
    e = np.asarray(start, dtype=complex) if start is not None else _random_unit(rng, n1, m1)
    best = 0.0
    for _ in range(iters):
        nrm = m1.norm(e)
        if nrm == 0.0:
            break
        e = e / nrm
        image = oracle.right(e)
        est = m2.norm(image)
        best = max(best, est)
        if est == 0.0:
            break
        e = oracle.left(image)
    return best
