"""System-type and controllability verdicts, from data and from the model.

Data-based tests only use ``M`` and the data matrices ``D_E, D_A, D_B``.
Each one is a rank test on a matrix that equals an invertible multiple of
the corresponding model matrix, so the model versions in
:func:`oracle_report` must agree with them; the test-suite checks exactly
that on random systems.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import AmbiguousSpectrum, NotRegular
from .experiments import DataMatrices
from .linalg import AUTO, RankDecision, auto_tolerance, core_nilpotent, rank_with_tolerance
from .model import DescriptorSystem, is_regular

NORMAL = "normal"
DESCRIPTOR = "descriptor"
EXACT_RANK = "exact_rank"
SVD_THRESHOLD = "svd_threshold"
MIN_GAP_RATIO = 10.0


@dataclass(frozen=True)
class TypeVerdict:
    kind: str
    rank_E_estimate: int
    singular_values: np.ndarray
    delta_used: float
    method: str

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rank_E_estimate": self.rank_E_estimate,
            "singular_values": [float(v) for v in self.singular_values],
            "delta_used": float(self.delta_used),
            "method": self.method,
        }


@dataclass(frozen=True)
class RankTest:
    """Outcome of one rank condition: ``passed == (rank == expected)``."""

    passed: bool
    expected: int
    decision: RankDecision

    @property
    def rank(self) -> int:
        return self.decision.rank

    def to_dict(self) -> dict:
        return {"passed": self.passed, "rank": self.rank, "expected": self.expected,
                "singular_values": [float(v) for v in self.decision.singular_values],
                "tolerance": float(self.decision.tolerance_used)}


def _rank_test(matrix, expected, tol=AUTO) -> RankTest:
    dec = rank_with_tolerance(matrix, tol)
    return RankTest(dec.rank == expected, int(expected), dec)


def select_threshold(singular_values, min_ratio=MIN_GAP_RATIO):
    """Pick ``delta`` at the largest relative gap of a singular spectrum.

    Values at or below the machine rank tolerance are treated as exact zeros
    and left out of the gap search. Among the remaining values the largest
    ratio ``s[i] / s[i+1]`` wins if it is at least ``min_ratio``; ``delta``
    is then the geometric mean of the two. With no such gap, exact zeros (if
    any) still separate cleanly and ``delta`` is the machine tolerance.

    Raises
    ------
    AmbiguousSpectrum
        When neither rule applies.
    """
    s = np.sort(np.asarray(singular_values, dtype=float))[::-1]
    if s.size == 0 or s[0] == 0:
        return 0.0
    machine = auto_tolerance((s.size, s.size), s[0])
    live = s[s > machine]
    if live.size >= 2:
        ratios = live[:-1] / live[1:]
        i = int(np.argmax(ratios))
        if ratios[i] >= min_ratio:
            return float(np.sqrt(live[i] * live[i + 1]))
    if live.size < s.size:
        return float(machine)
    raise AmbiguousSpectrum(
        f"no consecutive singular-value ratio reaches {min_ratio:g}", s
    )


def identify_type(M, noise_mode: str = "off", delta=AUTO, scale: Optional[float] = None) -> TypeVerdict:
    """Normal or descriptor, from the Experiment-1 matrix ``M``.

    ``rank(E) == rank(M)``, so the system is normal iff ``M`` has full rank.

    Parameters
    ----------
    M : (n, n) array_like
    noise_mode : {"off", "threshold"}
        ``"off"`` uses the plain numerical rank. ``"threshold"`` counts the
        singular values at or below ``delta`` as noise.
    delta : float or ``AUTO``
        Noise level for ``"threshold"``; ``AUTO`` uses
        :func:`select_threshold`.
    scale : float, optional
        Reference magnitude for the ``"off"`` tolerance, normally
        ``Experiment1Data.scale``. Defaults to the largest singular value
        of ``M``, which misreads an ``M`` that is entirely round-off.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if noise_mode == "off":
        tol = AUTO if scale is None else auto_tolerance(M.shape, scale)
        dec = rank_with_tolerance(M, tol)
        rank, s, used, method = dec.rank, dec.singular_values, dec.tolerance_used, EXACT_RANK
    elif noise_mode == "threshold":
        s = sla.svdvals(M)
        used = select_threshold(s) if delta is AUTO or delta == AUTO else float(delta)
        rank = n - int(np.sum(s <= used))
        method = SVD_THRESHOLD
    else:
        raise ValueError(f"unknown noise_mode {noise_mode!r}")
    return TypeVerdict(NORMAL if rank == n else DESCRIPTOR, rank, s, float(used), method)


def krylov_matrix(D_E, D_B) -> np.ndarray:
    n = D_E.shape[0]
    blocks, cur = [], D_B
    for _ in range(n):
        blocks.append(cur)
        cur = D_E @ cur
    return np.hstack(blocks)


def krylov_rank(D_E, D_B, tol=AUTO) -> RankDecision:
    """Rank of :func:`krylov_matrix` by an orthogonal staircase.

    Powers of ``D_E`` can spread the Krylov columns over more decades than a
    single SVD threshold resolves, so ``D_E`` is instead reduced by
    orthogonal similarity. Each step keeps the singular directions of the
    coupling block above the tolerance, which is relative to ``||D_B||`` for
    the first block and to ``||D_E||`` after that. The singular values of
    every step are returned in order.
    """
    A = np.array(D_E, dtype=float)
    blk = np.array(D_B, dtype=float)
    n = A.shape[0]
    auto = tol is AUTO or tol == AUTO
    ref, normA = np.linalg.norm(blk, 2), np.linalg.norm(A, 2)
    done, svals, used = 0, [], 0.0
    while done < n and blk.size:
        U, s, _ = np.linalg.svd(blk)
        t = auto_tolerance((n, n), ref) if auto else float(tol)
        used = max(used, t)
        svals.extend(s.tolist())
        r = int(np.sum(s > t))
        if r == 0:
            break
        Q = np.eye(n)
        Q[done:, done:] = U
        A = Q.T @ A @ Q
        done += r
        blk = A[done:, done - r:done]
        ref = normA
    return RankDecision(done, np.asarray(svals), used)


def data_spectrum(D_E, tol=AUTO) -> np.ndarray:
    """Distinct eigenvalue representatives of ``D_E`` for the Hautus test.

    The ``n1`` largest-modulus eigenvalues (``n1`` from the core-nilpotent
    split) plus ``0`` when a nilpotent part exists; the computed eigenvalues
    of a nilpotent block scatter around zero and are not used.
    """
    D_E = np.asarray(D_E, dtype=float)
    n1 = core_nilpotent(D_E, tol).n1
    mu = np.linalg.eigvals(D_E) if n1 else np.zeros(0, complex)
    mu = mu[np.argsort(-np.abs(mu), kind="stable")][:n1]
    if n1 < D_E.shape[0]:
        mu = np.append(mu, 0.0)
    return mu


def test_c_controllability(d: DataMatrices, tol=AUTO) -> RankTest:
    """C-controllability: ``rank [D_B, D_E D_B, ..., D_E^(n-1) D_B] == n``.

    Decided in the equivalent Hautus form, ``rank [mu I - D_E, D_B] == n``
    at every eigenvalue ``mu`` of ``D_E``, which keeps round-off and
    genuinely small singular values far apart. The reported decision is the
    one with the lowest rank; :func:`krylov_rank` gives the dimension of the
    reachable subspace itself.
    """
    n = d.n
    I = np.eye(n)
    worst = None
    for mu in data_spectrum(d.D_E, tol):
        M = np.hstack([mu * I - d.D_E, d.D_B.astype(complex if np.iscomplexobj(mu) else float)])
        dec = rank_with_tolerance(M, tol)
        if worst is None or dec.rank < worst.rank:
            worst = dec
    return RankTest(worst.rank == n, n, worst)


def causality_matrix(E, A) -> np.ndarray:
    Z = np.zeros_like(E)
    return np.block([[E, Z], [A, E]])


def y_matrix(E, A, B) -> np.ndarray:
    return np.block([[E, np.zeros_like(E), np.zeros_like(B)], [A, E, B]])


def test_causality(d: DataMatrices, rank_M: int, tol=AUTO) -> RankTest:
    """``rank [[D_E, 0], [D_A, D_E]] == n + rank(M)``."""
    return _rank_test(causality_matrix(d.D_E, d.D_A), d.n + rank_M, tol)


def test_y_controllability(d: DataMatrices, rank_M: int, tol=AUTO) -> RankTest:
    """``rank [[D_E, 0, 0], [D_A, D_E, D_B]] == n + rank(M)``."""
    return _rank_test(y_matrix(d.D_E, d.D_A, d.D_B), d.n + rank_M, tol)


def block_bidiagonal(E, A, B) -> np.ndarray:
    """``n^2 x (n + m) n`` matrix with ``-A`` on the block diagonal, ``E``
    below it, and ``B`` on the block diagonal of the right half."""
    n, m = B.shape
    W = np.zeros((n * n, (n + m) * n))
    for i in range(n):
        r = slice(i * n, (i + 1) * n)
        W[r, i * n:(i + 1) * n] = -A
        if i:
            W[r, (i - 1) * n:i * n] = E
        W[r, n * n + i * m:n * n + (i + 1) * m] = B
    return W


def assemble_WD(d: DataMatrices) -> np.ndarray:
    return block_bidiagonal(d.D_E, d.D_A, d.D_B)


def test_r_controllability(d: DataMatrices, tol=AUTO) -> RankTest:
    """``rank W_D == n^2``."""
    return _rank_test(assemble_WD(d), d.n * d.n, tol)


@dataclass(frozen=True)
class ControllabilityReport:
    c_controllable: RankTest
    causal: RankTest
    y_controllable: RankTest
    r_controllable: RankTest
    rank_E: int
    source: str = "data"
    krylov_rank: Optional[int] = None

    def verdicts(self) -> dict:
        return {
            "c_controllable": self.c_controllable.passed,
            "causal": self.causal.passed,
            "y_controllable": self.y_controllable.passed,
            "r_controllable": self.r_controllable.passed,
        }

    def ranks(self) -> dict:
        return {
            "c_controllable": self.c_controllable.rank,
            "causal": self.causal.rank,
            "y_controllable": self.y_controllable.rank,
            "r_controllable": self.r_controllable.rank,
        }

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "rank_E": self.rank_E,
            "krylov_rank": self.krylov_rank,
            "verdicts": self.verdicts(),
            "tests": {
                "c_controllable": self.c_controllable.to_dict(),
                "causal": self.causal.to_dict(),
                "y_controllable": self.y_controllable.to_dict(),
                "r_controllable": self.r_controllable.to_dict(),
            },
        }


def data_report(d: DataMatrices, rank_M: int, tol=AUTO) -> ControllabilityReport:
    """All four data-based controllability tests."""
    return ControllabilityReport(
        test_c_controllability(d, tol),
        test_causality(d, rank_M, tol),
        test_y_controllability(d, rank_M, tol),
        test_r_controllability(d, tol),
        rank_M,
        krylov_rank=krylov_rank(d.D_E, d.D_B, tol).rank,
    )


def model_finite_eigenvalues(sys: DescriptorSystem, s0: Optional[float] = None) -> np.ndarray:
    """Finite generalized eigenvalues of ``(E, A)`` through QZ.

    Their number is ``rank(D^h)`` with ``D = inv(s0 E - A) E`` built from the
    true matrices; the QZ pairs with the largest ``|beta| / |alpha|`` are the
    finite ones. Defective infinite eigenvalues come out of QZ with
    ``|beta/alpha|`` of order ``eps^(1/h)``, so counting first and then
    picking is safer than thresholding ``beta``.
    """
    if s0 is None or np.linalg.cond(sys.pencil(s0)) > 1e10:
        reg = is_regular(sys)
        if not reg.regular:
            raise NotRegular("pencil is singular at every sampled shift")
        s0 = reg.shift
    D = np.linalg.solve(sys.pencil(s0), sys.E)
    n1 = core_nilpotent(D).n1
    (alpha, beta) = sla.eig(sys.A, sys.E, right=False, homogeneous_eigvals=True)
    weight = np.abs(beta) / np.hypot(np.abs(alpha), np.abs(beta))
    order = np.argsort(-weight)[:n1]
    return alpha[order] / beta[order]


def oracle_report(sys: DescriptorSystem, s0: Optional[float] = None, tol=AUTO) -> ControllabilityReport:
    """Model-based verdicts evaluated with the true ``(E, A, B)``.

    C-controllability: ``rank [E, B] == n`` and ``rank [sE - A, B] == n`` at
    every finite generalized eigenvalue (rank can only drop there).
    Causality / Y-controllability: ``rank [[E,0],[A,E]]`` and
    ``rank [[E,0,0],[A,E,B]]`` against ``n + rank(E)``.
    R-controllability: ``rank W_M == n^2``.
    """
    reg = is_regular(sys)
    if not reg.regular:
        raise NotRegular("pencil is singular at every sampled shift")
    E, A, B = sys.E, sys.A, sys.B
    n = sys.n
    rank_E = rank_with_tolerance(E, tol).rank
    c_tests = [_rank_test(np.hstack([E, B]), n, tol)]
    for s in model_finite_eigenvalues(sys, s0):
        c_tests.append(_rank_test(np.hstack([s * E - A, B.astype(complex)]), n, tol))
    c = min(c_tests, key=lambda t: (t.passed, t.rank))
    return ControllabilityReport(
        c,
        _rank_test(causality_matrix(E, A), n + rank_E, tol),
        _rank_test(y_matrix(E, A, B), n + rank_E, tol),
        _rank_test(block_bidiagonal(E, A, B), n * n, tol),
        rank_E,
        source="model",
    )


def oracle_type(sys: DescriptorSystem, tol=AUTO) -> str:
    return NORMAL if rank_with_tolerance(sys.E, tol).rank == sys.n else DESCRIPTOR


# keep pytest from collecting these when imported into test modules
for _f in (test_c_controllability, test_causality, test_y_controllability, test_r_controllability):
    _f.__test__ = False
del _f
