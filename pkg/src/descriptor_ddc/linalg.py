"""Dense linear-algebra kernels used throughout the package.

Everything here is a pure function of real ``numpy`` arrays. Rank decisions
always go through :func:`rank_with_tolerance`, so every verdict downstream
can report the full singular spectrum and the threshold that produced it.

Tolerance convention
--------------------
``AUTO`` tolerances follow the usual numerical-rank rule, scaled up so that
round-off from data matrices built with a few solves (``M @ inv(N)``) stays
below the threshold::

    tol = max(rows, cols) * sigma_1 * RANK_EPS

with ``RANK_EPS = 1e4 * machine_epsilon`` (about ``2.2e-12``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla

from .errors import DecompositionFailure, EigenFailure, InvalidMatrix

AUTO = "auto"
RANK_EPS = 1e4 * np.finfo(float).eps
DECOMPOSITION_TOL = 1e-8


@dataclass(frozen=True)
class RankDecision:
    """Numerical rank together with the evidence used to decide it."""

    rank: int
    singular_values: np.ndarray
    tolerance_used: float

    @property
    def gap_ratio(self) -> float:
        """``sigma_r / sigma_{r+1}``; ``inf`` when nothing was truncated."""
        s = self.singular_values
        if self.rank == 0 or self.rank >= len(s) or s[self.rank] == 0:
            return float("inf")
        return float(s[self.rank - 1] / s[self.rank])

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "singular_values": [float(v) for v in self.singular_values],
            "tolerance_used": float(self.tolerance_used),
        }


@dataclass(frozen=True)
class CoreNilpotentDecomp:
    """Similarity split ``T^-1 D T = diag(E1, E2)``, E1 invertible, E2 nilpotent."""

    T_hat: np.ndarray
    E1_hat: np.ndarray
    E2_hat: np.ndarray
    n1: int
    n2: int
    index_h: int
    residual: float
    cond_E1: float

    @property
    def n(self) -> int:
        return self.n1 + self.n2


class FiniteSpectrum(NamedTuple):
    values: np.ndarray
    n_infinite: int


def as_matrix(a, name="matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float array or raise :class:`InvalidMatrix`."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InvalidMatrix(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    return arr


def _check_finite(a, name="matrix"):
    arr = np.asarray(a)
    if arr.ndim != 2:
        raise InvalidMatrix(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMatrix(f"{name} has non-finite entries")
    return arr


def auto_tolerance(shape, sigma_max) -> float:
    return max(shape) * float(sigma_max) * RANK_EPS


def rank_with_tolerance(matrix, abs_tol=AUTO) -> RankDecision:
    """Numerical rank by SVD.

    Parameters
    ----------
    matrix : (p, q) array_like
        Real or complex matrix with finite entries.
    abs_tol : float or ``AUTO``
        Singular values strictly above this count toward the rank.

    Returns
    -------
    RankDecision
    """
    a = _check_finite(matrix)
    if a.size == 0:
        return RankDecision(0, np.zeros(0), 0.0)
    s = sla.svdvals(a)
    tol = auto_tolerance(a.shape, s[0]) if abs_tol is AUTO or abs_tol == AUTO else float(abs_tol)
    return RankDecision(int(np.sum(s > tol)), s, tol)


def _fix_signs(basis):
    # deterministic orientation: largest-magnitude entry of each column positive
    if basis.shape[1] == 0:
        return basis
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def nullspace_basis(matrix, tol=AUTO) -> np.ndarray:
    """Orthonormal basis of the right nullspace (``q x k``, possibly ``k = 0``)."""
    a = _check_finite(matrix)
    q = a.shape[1]
    if a.shape[0] == 0:
        return np.eye(q)
    _, s, vh = sla.svd(a)
    tol = auto_tolerance(a.shape, s[0] if s.size else 0.0) if tol is AUTO or tol == AUTO else tol
    r = int(np.sum(s > tol))
    return _fix_signs(vh[r:].conj().T)


def range_basis(matrix, tol=AUTO) -> np.ndarray:
    """Orthonormal basis of the column space (``p x r``)."""
    a = _check_finite(matrix)
    if a.shape[1] == 0:
        return np.zeros((a.shape[0], 0))
    u, s, _ = sla.svd(a)
    tol = auto_tolerance(a.shape, s[0] if s.size else 0.0) if tol is AUTO or tol == AUTO else tol
    r = int(np.sum(s > tol))
    return _fix_signs(u[:, :r])


def eigenvalues(matrix) -> np.ndarray:
    """All eigenvalues of a real square matrix, with multiplicity.

    LAPACK ``geev`` (Hessenberg reduction followed by shifted QR). Complex
    conjugate pairs come out adjacent.
    """
    a = _check_finite(matrix)
    if a.shape[0] != a.shape[1]:
        raise InvalidMatrix(f"eigenvalues need a square matrix, got {a.shape}")
    if a.shape[0] == 0:
        return np.zeros(0, dtype=complex)
    try:
        return sla.eigvals(a, check_finite=False).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(str(exc)) from exc


def _nested_kernel(D, tol):
    """Chain ``null(D) ⊂ null(D^2) ⊂ ...`` until it stops growing.

    Each step solves ``(I - P_k) D x = 0`` with ``P_k`` the projector onto the
    current kernel, so powers of ``D`` are never formed.
    """
    n = D.shape[0]
    basis = np.zeros((n, 0))
    h = 0
    while basis.shape[1] < n:
        proj = basis @ basis.T
        step = D - proj @ D
        nxt = nullspace_basis(step, tol)
        if nxt.shape[1] == basis.shape[1]:
            break
        basis = nxt
        h += 1
    return basis, h


def core_nilpotent(D, tol=AUTO, decomposition_tol=DECOMPOSITION_TOL) -> CoreNilpotentDecomp:
    """Core-nilpotent decomposition of a square matrix.

    Finds the index ``h`` (smallest ``k`` with ``rank(D^k) == rank(D^(k+1))``)
    and ``T = [range(D^h) | null(D^h)]`` with orthonormal blocks, so that
    ``inv(T) @ D @ T = diag(E1, E2)`` with ``E1`` invertible and ``E2``
    nilpotent of index ``h``.

    Parameters
    ----------
    D : (n, n) array_like
    tol : float or ``AUTO``
        Rank threshold for the kernel chain. ``AUTO`` uses
        ``n * ||D||_2 * RANK_EPS``.
    decomposition_tol : float
        Bound on the off-diagonal residual, relative to ``max(1, ||D||_2)``.

    Raises
    ------
    DecompositionFailure
        If the two invariant subspaces do not split ``D`` cleanly.
    """
    D = _check_finite(D, "D")
    n = D.shape[0]
    if D.shape != (n, n):
        raise InvalidMatrix(f"core_nilpotent needs a square matrix, got {D.shape}")
    norm = float(sla.norm(D, 2)) if n else 0.0
    if tol is AUTO or tol == AUTO:
        tol = auto_tolerance(D.shape, norm) if norm > 0 else 0.0
    kernel, h = _nested_kernel(D, tol)
    n2 = kernel.shape[1]
    n1 = n - n2
    if n2 == 0:
        T = np.eye(n)
    else:
        # range(D^h) is the orthogonal complement of null((D^T)^h)
        left_kernel, h_left = _nested_kernel(D.T, tol)
        if left_kernel.shape[1] != n2 or h_left != h:
            raise DecompositionFailure(
                f"kernel chains of D and D^T disagree: dims {n2} vs {left_kernel.shape[1]}, "
                f"index {h} vs {h_left}"
            )
        core = nullspace_basis(left_kernel.T, 0.5) if n1 else np.zeros((n, 0))
        T = np.hstack([core, kernel])
    try:
        J = sla.solve(T, D @ T)
    except (np.linalg.LinAlgError, sla.LinAlgWarning) as exc:
        raise DecompositionFailure(f"singular transformation: {exc}") from exc
    E1 = J[:n1, :n1]
    E2 = J[n1:, n1:]
    off = np.concatenate([J[:n1, n1:].ravel(), J[n1:, :n1].ravel()])
    residual = float(np.linalg.norm(off)) if off.size else 0.0
    scale = max(1.0, norm)
    if residual > decomposition_tol * scale * max(1.0, np.linalg.cond(T)):
        raise DecompositionFailure(
            f"off-diagonal residual {residual:.3e} exceeds tolerance"
        )
    if n2:
        power = np.linalg.matrix_power(E2, h)
        if np.linalg.norm(power, 2) > decomposition_tol * scale**h * max(1.0, np.linalg.cond(T)):
            raise DecompositionFailure("nilpotent block does not vanish at its index")
    if n1:
        s = sla.svdvals(E1)
        if s[-1] <= tol:
            raise DecompositionFailure("core block is numerically singular")
        cond_E1 = float(s[0] / s[-1])
    else:
        cond_E1 = 1.0
    return CoreNilpotentDecomp(T, E1, E2, n1, n2, h, residual, cond_E1)


def finite_generalized_eigenvalues(D, s0, tol=AUTO) -> FiniteSpectrum:
    """Finite generalized eigenvalues of ``(E, A)`` from ``D = inv(s0*E - A) @ E``.

    Every nonzero eigenvalue ``mu`` of ``D`` maps to ``s = s0 - 1/mu``. Zero
    eigenvalues stand for infinite eigenvalues and are only counted. Which
    eigenvalues are zero is decided by the rank chain of
    :func:`core_nilpotent` (the algebraic multiplicity of zero is
    ``n - rank(D^h)``), not by thresholding ``|mu|``; a defective zero
    eigenvalue of multiplicity ``k`` is smeared by round-off to size
    ``eps^(1/k)``, which no fixed threshold separates reliably.
    """
    decomp = core_nilpotent(D, tol)
    mu = eigenvalues(decomp.E1_hat)
    return FiniteSpectrum(s0 - 1.0 / mu, decomp.n2)
