"""Principal Dirichlet eigenpair of ``-d^2/dx^2 - q(x)`` on the truncated trait grid.

The discrete operator acts on interior nodes with the standard three-point
second difference; boundary nodes are held at zero.  ``principal_shift``
returns the shift ``s`` that makes the smallest eigenvalue of
``-D2 - diag(q) + s I`` vanish, together with the positive eigenfunction.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import get_lapack_funcs

from .model import ResourceFunction, TraitGrid, ValidationError, quadrature

_gttrf, _gttrs = get_lapack_funcs(("gttrf", "gttrs"), dtype=np.float64)


class BracketError(RuntimeError):
    pass


class Tridiagonal:
    """LU-factored tridiagonal matrix (LAPACK gttrf/gttrs) for repeated solves."""

    def __init__(self, lower, diag, upper):
        dl, d, du, du2, ipiv, info = _gttrf(
            np.array(lower, dtype=float), np.array(diag, dtype=float), np.array(upper, dtype=float)
        )
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal factorization failed (info={info})")
        self._lu = (dl, d, du, du2, ipiv)

    def solve(self, rhs):
        x, info = _gttrs(*self._lu, np.asarray(rhs, dtype=float))
        if info != 0:
            raise np.linalg.LinAlgError(f"tridiagonal solve failed (info={info})")
        return x


def schrodinger_operator(q_values, grid: TraitGrid) -> tuple[np.ndarray, float]:
    """Diagonal and (constant) off-diagonal of ``-D2 - diag(q)`` on interior nodes."""
    h2 = grid.spacing ** 2
    q_int = np.asarray(q_values, dtype=float)[1:-1]
    return 2.0 / h2 - q_int, -1.0 / h2


def count_below(diag, off: float, sigma: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal matrix below ``sigma``.

    Sylvester inertia via the pivots of the LDL^T factorization of ``T - sigma I``.
    """
    off2 = off * off
    guard = np.finfo(float).eps * max(abs(off), 1.0)
    count = 0
    piv = 1.0
    for i, a in enumerate(diag):
        piv = (a - sigma) - (off2 / piv if i else 0.0)
        if abs(piv) < guard:
            piv = -guard
        if piv < 0:
            count += 1
    return count


def _repair_tails(phi, diag, off, mu, floor=1e-6):
    """Recompute the eigenvector where it is below ``floor * max`` by shooting inward.

    Far from the well the entries sink to the rounding level of the solves.
    The three-term recurrence run from a zero boundary value towards the
    well follows the growing solution and is stable there.
    """
    m = phi.size
    small = phi < floor
    if not small.any():
        return phi
    core = np.flatnonzero(~small)
    out = phi.copy()
    for start, stop, step_ in ((0, core[0], 1), (m - 1, core[-1], -1)):
        if start == stop:
            continue
        idx = np.arange(start, stop + step_, step_)
        psi = np.empty(idx.size)
        psi[0] = 1.0
        prev = 0.0
        for j in range(1, idx.size):
            nxt = ((diag[idx[j - 1]] - mu) * psi[j - 1] + off * prev) / (-off)
            prev = psi[j - 1]
            psi[j] = nxt
        out[idx[:-1]] = psi[:-1] * (phi[stop] / psi[-1])
    return out


def principal_shift(
    q,
    grid: TraitGrid,
    tol: float = 1e-10,
    residual_tol: float = 1e-12,
    max_inverse_iter: int = 50,
) -> tuple[float, np.ndarray]:
    """Shift ``s`` with zero principal eigenvalue of ``-D2 - diag(q) + s I`` and its eigenfunction.

    ``s`` is bracketed by bisection (a Sturm count decides whether the shifted
    operator is positive definite), the eigenfunction comes from inverse
    power iteration with tridiagonal solves, and ``s`` is finally polished by
    the Rayleigh quotient.  The returned eigenfunction is positive, zero on
    the boundary nodes, and normalized to unit integral.
    """
    q_values = q.sample(grid) if isinstance(q, ResourceFunction) else np.asarray(q, dtype=float)
    if q_values.shape != (grid.n,):
        raise ValidationError("q must be sampled on the grid")
    if not np.all(np.isfinite(q_values)):
        raise ValidationError("q must be finite on the grid")
    diag, off = schrodinger_operator(q_values, grid)
    m = diag.size

    # Gershgorin: all eigenvalues of T lie in [min(diag) - 2|off|, max(diag) + 2|off|]
    # so s* = -lambda_min(T) is bracketed by their negatives
    s_lo = -(diag.max() + 2 * abs(off))
    s_hi = -(diag.min() - 2 * abs(off))

    def indefinite(s):
        # smallest eigenvalue of T + sI is negative
        return count_below(diag + s, off, 0.0) > 0

    if not indefinite(s_lo) or indefinite(s_hi):
        raise BracketError("could not bracket the principal shift")
    for _ in range(200):
        if s_hi - s_lo <= tol * max(1.0, abs(s_lo)):
            break
        mid = 0.5 * (s_lo + s_hi)
        if indefinite(mid):
            s_lo = mid
        else:
            s_hi = mid
    else:
        raise BracketError("bisection did not converge")

    # inverse iteration on T + s I, shifted just below the eigenvalue
    s = s_lo
    lower = np.full(m - 1, off)
    solver = Tridiagonal(lower, diag + s, lower)
    phi = np.ones(m)
    scale = max(1.0, float(np.abs(diag).max()) + 2 * abs(off))
    for _ in range(max_inverse_iter):
        y = solver.solve(phi)
        y /= np.abs(y).max()
        if y.sum() < 0:
            y = -y
        Ty = diag * y
        Ty[1:] += off * y[:-1]
        Ty[:-1] += off * y[1:]
        mu = float(y @ Ty / (y @ y))
        res = np.abs(Ty - mu * y).max()
        phi = y
        if res <= residual_tol * scale:
            break
    s_star = -mu
    phi = _repair_tails(phi, diag, off, mu)

    if np.any(phi <= 0):
        raise BracketError("principal eigenvector is not positive; refine the grid")
    full = np.zeros(grid.n)
    full[1:-1] = phi
    full /= quadrature(grid, full)
    return s_star, full


def dense_principal_shift(q, grid: TraitGrid) -> float:
    """Brute-force oracle: full dense eigendecomposition of the same operator."""
    q_values = q.sample(grid) if isinstance(q, ResourceFunction) else np.asarray(q, dtype=float)
    diag, off = schrodinger_operator(q_values, grid)
    T = np.diag(diag) + off * (np.eye(diag.size, k=1) + np.eye(diag.size, k=-1))
    return -float(np.linalg.eigvalsh(T)[0])


def operator_residual(q_values, grid: TraitGrid, s: float, phi) -> float:
    """``max |-D2 phi - (q - s) phi|`` over interior nodes."""
    phi = np.asarray(phi, dtype=float)
    q_values = np.asarray(q_values, dtype=float)
    lap = (phi[2:] - 2 * phi[1:-1] + phi[:-2]) / grid.spacing ** 2
    return float(np.abs(-lap - (q_values[1:-1] - s) * phi[1:-1]).max())
