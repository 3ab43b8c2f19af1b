"""Matrix-free symmetric operators and the iterative kernels built on them.

Everything downstream (secular models, subproblem solvers, the nonconvex
outer loop) talks to a matrix only through :class:`SymmetricOperator`, which
wraps a matvec closure and counts applications.  The matvec count is the cost
currency used by every benchmark, so all kernels here route each product
through :meth:`SymmetricOperator.matvec` exactly once per mathematical
application.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal


class OperatorError(ValueError):
    """Usage error on an operator (dimension mismatch, bad arguments)."""


class IndefiniteSystemError(RuntimeError):
    """CG met nonpositive curvature: the shifted system is not positive definite.

    Carries the shift, the iteration index and the best iterate so far so the
    caller can recover.
    """

    def __init__(self, sigma, iteration, x_best):
        super().__init__(
            "conjugate gradient detected nonpositive curvature at iteration "
            f"{iteration}: shift sigma={sigma!r} does not exceed -lambda_1"
        )
        self.sigma = sigma
        self.iteration = iteration
        self.x_best = x_best


class SymmetricOperator:
    """A symmetric linear map given by its matvec.

    Parameters
    ----------
    dim : int
        Ambient dimension n.
    apply_fn : callable
        Maps an n-vector to an n-vector; must implement a symmetric matrix.
    trace_hint : float, optional
        Exact trace when the caller knows it (diagonal/dense operators,
        analytic Hessians).  None means unknown.

    Notes
    -----
    ``matvec_count`` is a plain int guarded by the GIL; callers running
    operators from several threads must synchronize externally.
    """

    def __init__(self, dim, apply_fn, trace_hint=None):
        if int(dim) <= 0:
            raise OperatorError(f"operator dimension must be positive, got {dim}")
        self.dim = int(dim)
        self._apply = apply_fn
        self.trace_hint = trace_hint
        self.matvec_count = 0

    def matvec(self, v):
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dim,):
            raise OperatorError(
                f"matvec expects shape ({self.dim},), got {v.shape}"
            )
        self.matvec_count += 1
        out = np.asarray(self._apply(v), dtype=float)
        if out.shape != (self.dim,):
            raise OperatorError(
                f"apply_fn returned shape {out.shape}, expected ({self.dim},)"
            )
        return out

    def reset_count(self):
        self.matvec_count = 0


class DiagonalOperator(SymmetricOperator):
    """Operator for diag(d); keeps the diagonal visible for oracles."""

    def __init__(self, diagonal):
        d = np.asarray(diagonal, dtype=float)
        if d.ndim != 1 or d.size == 0:
            raise OperatorError("diagonal must be a nonempty 1-d array")
        self.diagonal = d
        super().__init__(d.size, lambda v: d * v, trace_hint=float(d.sum()))


class DenseOperator(SymmetricOperator):
    """Operator for an explicit symmetric matrix; keeps it visible for oracles."""

    def __init__(self, matrix):
        M = np.asarray(matrix, dtype=float)
        _check_symmetric(M)
        self.matrix = M
        super().__init__(M.shape[0], lambda v: M @ v, trace_hint=float(np.trace(M)))


def _check_symmetric(M, tol=1e-10):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise OperatorError(f"matrix must be square, got shape {M.shape}")
    scale = max(1.0, float(np.abs(M).max()) if M.size else 1.0)
    asym = float(np.abs(M - M.T).max())
    if asym > tol * scale:
        raise OperatorError(
            f"matrix is not symmetric: max |M - M^T| = {asym:g} exceeds {tol:g}*scale"
        )


def spectral_upper_bound(op, iters=20, seed=0):
    """Upper bound beta >= ||A||_2 from power iteration.

    Runs ``iters`` power steps from a seeded random unit vector and returns
    1.1 times the best norm quotient ||A q|| / ||q|| seen, plus a small
    absolute floor so the zero operator still gets beta > 0.  The norm
    quotient (rather than q^T A q) is used so spectra with +/-lambda_max
    symmetry cannot stall the estimate near zero.
    """
    if iters < 1:
        raise OperatorError("iters must be >= 1")
    rng = np.random.default_rng(seed)
    q = rng.standard_normal(op.dim)
    q /= np.linalg.norm(q)
    best = 0.0
    for _ in range(iters):
        w = op.matvec(q)
        nrm = float(np.linalg.norm(w))
        best = max(best, nrm)
        if nrm == 0.0:
            break  # annihilated: either zero operator or unlucky vector
        q = w / nrm
    return 1.1 * best + 1e-12


def hutchinson_trace(op, probes=30, seed=0):
    """Hutchinson trace estimate with Rademacher probes (one matvec each)."""
    if probes < 1:
        raise OperatorError("probes must be >= 1")
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(probes):
        z = rng.integers(0, 2, size=op.dim) * 2.0 - 1.0
        total += float(z @ op.matvec(z))
    return total / probes


@dataclass
class TridiagonalFactor:
    """Lanczos factorization B U_k = U_k T_k + beta_k u_{k+1} e_k^T.

    ``alpha`` holds the k diagonal entries of T_k, ``beta`` the k-1
    off-diagonal entries, ``basis`` the orthonormal U_k (n-by-k, Fortran
    order), ``coupling`` the trailing beta_k (0.0 after a lucky breakdown)
    and ``next_vector`` the unit vector u_{k+1} (None after breakdown).
    """

    alpha: np.ndarray
    beta: np.ndarray
    basis: np.ndarray
    coupling: float
    next_vector: np.ndarray | None
    breakdown: bool

    @property
    def k(self):
        return self.alpha.size


def lanczos_tridiagonalize(op, u1, k, breakdown_tol=1e-12):
    """Lanczos with full reorthogonalization.

    Parameters
    ----------
    op : SymmetricOperator
        The map B whose tridiagonal restriction is built.
    u1 : array
        Start vector; normalized internally, must be nonzero.
    k : int
        Requested number of steps, 1 <= k <= n.  Fewer columns come back on
        a lucky breakdown (residual norm <= breakdown_tol * running ||B||
        estimate), in which case the achieved basis spans an invariant
        subspace and the factorization is exact.

    Returns
    -------
    TridiagonalFactor
    """
    n = op.dim
    if not 1 <= k <= n:
        raise OperatorError(f"k must satisfy 1 <= k <= n, got k={k}, n={n}")
    u = np.asarray(u1, dtype=float)
    nrm = np.linalg.norm(u)
    if nrm == 0.0 or not np.isfinite(nrm):
        raise OperatorError("start vector must be nonzero and finite")

    U = np.zeros((n, k), order="F")
    U[:, 0] = u / nrm
    alpha = np.zeros(k)
    beta = np.zeros(max(k - 1, 0))
    scale = 0.0
    coupling = 0.0
    next_vec = None
    breakdown = False
    k_done = 0

    for j in range(k):
        w = op.matvec(U[:, j])
        a = float(U[:, j] @ w)
        alpha[j] = a
        w -= a * U[:, j]
        if j > 0:
            w -= beta[j - 1] * U[:, j - 1]
        # Full reorthogonalization: one pass, second pass only if the first
        # one removed most of the vector (classic twice-is-enough test).
        Uj = U[:, : j + 1]
        pre = float(np.linalg.norm(w))
        w -= Uj @ (Uj.T @ w)
        post = float(np.linalg.norm(w))
        if post < 0.5 * pre:
            w -= Uj @ (Uj.T @ w)
            post = float(np.linalg.norm(w))
        scale = max(scale, abs(a), post)
        k_done = j + 1
        if post <= breakdown_tol * max(scale, 1e-300):
            breakdown = True
            break
        if j + 1 < k:
            beta[j] = post
            U[:, j + 1] = w / post
        else:
            coupling = post
            next_vec = w / post

    return TridiagonalFactor(
        alpha=alpha[:k_done],
        beta=beta[: max(k_done - 1, 0)],
        basis=U[:, :k_done],
        coupling=coupling,
        next_vector=next_vec,
        breakdown=breakdown,
    )


@dataclass
class PartialSpectrum:
    """The m smallest eigenpairs of A, plus bookkeeping from the solver.

    ``eigenvalues`` ascending, ``eigenvectors`` column-matched and
    orthonormal, ``residuals`` = ||A v_i - lambda_i v_i||, ``beta_shift``
    the spectral bound used for the shift B = beta I - A, ``converged``
    true when every residual passed the tolerance check.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    beta_shift: float
    converged: bool
    matvecs: int = 0

    @property
    def m(self):
        return self.eigenvalues.size


def _ritz_smallest(op_a, beta_shift, alpha, off, basis, m):
    """Ritz pairs of A from a factorization of B = beta I - A; smallest m of A."""
    if alpha.size == 1:
        theta = alpha.copy()
        W = np.ones((1, 1))
    else:
        theta, W = eigh_tridiagonal(alpha, off)
    # largest theta of B correspond to smallest eigenvalues of A
    take = min(m, theta.size)
    idx = np.argsort(theta)[::-1][:take]
    lam = beta_shift - theta[idx]
    order = np.argsort(lam)
    lam = lam[order]
    V = basis @ W[:, idx[order]]
    # normalize defensively; columns of W are orthonormal already
    V /= np.linalg.norm(V, axis=0, keepdims=True)
    res = np.empty(take)
    for i in range(take):
        res[i] = np.linalg.norm(op_a.matvec(V[:, i]) - lam[i] * V[:, i])
    return lam, V, res


def smallest_eigenpairs(op, m, k=None, restarts=0, seed=0, eig_tol=1e-8,
                        beta=None, power_iters=20):
    """Approximate the m smallest eigenpairs of A by shifted Lanczos.

    Runs Lanczos on B = beta I - A with beta >= ||A|| from
    :func:`spectral_upper_bound` (or a caller-supplied ``beta``), so the
    smallest eigenvalues of A become the dominant ones of B.  Uses a seeded
    random start vector, k = max(2m, 20) steps by default, full
    reorthogonalization, and optional thick restarts.

    Returns
    -------
    PartialSpectrum
        May carry fewer than m pairs after a lucky breakdown: the Krylov
        space is then invariant, the returned pairs are exact, and no
        further pairs are reachable from this start vector.
    """
    n = op.dim
    if not 1 <= m < n:
        raise OperatorError(f"m must satisfy 1 <= m < n, got m={m}, n={n}")
    if k is None:
        k = max(2 * m, 20)
    k = int(min(k, n))
    if k < m:
        raise OperatorError(f"k={k} cannot be smaller than m={m}")

    count0 = op.matvec_count
    if beta is None:
        beta = spectral_upper_bound(op, iters=power_iters, seed=seed)
    bop = SymmetricOperator(n, lambda v: beta * v - op.matvec(v))

    rng = np.random.default_rng(seed)
    u1 = rng.standard_normal(n)

    factor = lanczos_tridiagonalize(bop, u1, k)
    lam, V, res = _ritz_smallest(op, beta, factor.alpha, factor.beta,
                                 factor.basis, m)
    tol_eff = eig_tol * max(1.0, beta)
    converged = bool(np.all(res <= tol_eff))

    if factor.alpha.size == 1:
        t_proj = factor.alpha.reshape(1, 1).copy()
    else:
        t_proj = np.diag(factor.alpha) \
            + np.diag(factor.beta, 1) + np.diag(factor.beta, -1)
    state = (factor.basis, t_proj, factor.coupling, factor.next_vector,
             factor.breakdown)

    for _ in range(restarts):
        if converged or state[4] or state[3] is None:
            break
        lam, V, res, state = _thick_restart(op, bop, beta, state, m, k)
        converged = bool(np.all(res <= tol_eff))

    return PartialSpectrum(
        eigenvalues=lam,
        eigenvectors=V,
        residuals=res,
        beta_shift=beta,
        converged=converged,
        matvecs=op.matvec_count - count0,
    )


def _thick_restart(op_a, bop, beta_shift, state, m, k):
    """One thick restart: keep the m best Ritz vectors of B plus the residual
    direction, then extend back to dimension k with Lanczos steps against a
    dense projected matrix (arrowhead head + tridiagonal tail).

    ``state`` is (basis, projected matrix, coupling, next unit vector,
    breakdown); the projected matrix is dense because after the first
    restart it is an arrowhead, not tridiagonal."""
    basis0, t0, coupling0, next_vec0, _ = state
    theta, W = np.linalg.eigh(t0)
    keep = min(m, theta.size)
    idx = np.argsort(theta)[::-1][:keep]
    Y = np.asfortranarray(basis0 @ W[:, idx])
    s = coupling0 * W[-1, idx]

    n = op_a.dim
    U = np.zeros((n, k), order="F")
    U[:, :keep] = Y
    U[:, keep] = next_vec0
    T = np.zeros((k, k))
    T[:keep, :keep] = np.diag(theta[idx])
    T[:keep, keep] = s
    T[keep, :keep] = s

    j = keep
    k_done = keep + 1
    breakdown = False
    coupling = 0.0
    next_vec = None
    while True:
        w = bop.matvec(U[:, j])
        a = float(U[:, j] @ w)
        T[j, j] = a
        Uj = U[:, : j + 1]
        w -= Uj @ (Uj.T @ w)
        w -= Uj @ (Uj.T @ w)
        nrm = float(np.linalg.norm(w))
        if nrm <= 1e-12 * max(1.0, abs(beta_shift)):
            breakdown = True
            break
        if j + 1 >= k:
            coupling = nrm
            next_vec = w / nrm
            break
        T[j, j + 1] = nrm
        T[j + 1, j] = nrm
        U[:, j + 1] = w / nrm
        j += 1
        k_done = j + 1

    Uk = U[:, :k_done]
    Tk = T[:k_done, :k_done]
    theta2, W2 = np.linalg.eigh(Tk)
    take = min(m, theta2.size)
    idx2 = np.argsort(theta2)[::-1][:take]
    lam = beta_shift - theta2[idx2]
    order = np.argsort(lam)
    lam = lam[order]
    V = Uk @ W2[:, idx2[order]]
    V /= np.linalg.norm(V, axis=0, keepdims=True)
    res = np.empty(take)
    for i in range(take):
        res[i] = np.linalg.norm(op_a.matvec(V[:, i]) - lam[i] * V[:, i])

    new_state = (Uk, Tk, coupling, next_vec, breakdown)
    return lam, V, res, new_state


def dense_eigendecomposition(M, cap=2000):
    """Full eigendecomposition oracle for small dense symmetric matrices.

    Refuses matrices above ``cap`` so nobody silently turns the oracle into
    the method.  Returns eigenvalues ascending with matched eigenvector
    columns.
    """
    M = np.asarray(M, dtype=float)
    _check_symmetric(M)
    if M.shape[0] > cap:
        raise OperatorError(
            f"dense oracle capped at n={cap}, got n={M.shape[0]}"
        )
    vals, vecs = np.linalg.eigh(M)
    return vals, vecs


@dataclass
class CgResult:
    """Outcome of a shifted CG solve."""

    x: np.ndarray
    iterations: int
    residual_norm: float
    converged: bool


def solve_shifted_system(op, sigma, b, tol=1e-10, max_iter=None, callback=None):
    """Solve (A + sigma I) x = -b by conjugate gradients.

    Starts from x = 0 and stops when ||r|| <= tol * ||b||.  Raises
    :class:`IndefiniteSystemError` on nonpositive curvature (sigma does not
    exceed -lambda_1).  When ``max_iter`` runs out the best iterate comes
    back flagged ``converged=False``.

    ``callback(iteration, x, r)`` is invoked after every update with the
    current iterate and residual r = -b - (A + sigma I) x; it exists so
    callers can sample trajectories without extra matvecs.
    """
    b = np.asarray(b, dtype=float)
    if b.shape != (op.dim,):
        raise OperatorError(f"b must have shape ({op.dim},), got {b.shape}")
    n = op.dim
    if max_iter is None:
        max_iter = 10 * n

    x = np.zeros(n)
    r = -b
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return CgResult(x=x, iterations=0, residual_norm=0.0, converged=True)
    target = tol * bnorm

    rs = float(r @ r)
    if np.sqrt(rs) <= target:
        return CgResult(x=x, iterations=0, residual_norm=float(np.sqrt(rs)),
                        converged=True)
    p = r.copy()
    for it in range(1, max_iter + 1):
        q = op.matvec(p) + sigma * p
        curv = float(p @ q)
        if curv <= 0.0:
            raise IndefiniteSystemError(sigma, it, x)
        step = rs / curv
        x += step * p
        r -= step * q
        rs_new = float(r @ r)
        if callback is not None:
            callback(it, x, r)
        if np.sqrt(rs_new) <= target:
            return CgResult(x=x, iterations=it,
                            residual_norm=float(np.sqrt(rs_new)), converged=True)
        p = r + (rs_new / rs) * p
        rs = rs_new
    return CgResult(x=x, iterations=max_iter,
                    residual_norm=float(np.sqrt(rs)), converged=False)
