"""Known descriptor systems: regularity, slow-fast form and simulation.

This is the ground-truth side of the package. The data-driven pipeline in
:mod:`descriptor_ddc.experiments` only ever sees trajectories produced here
(or recorded from a real plant); tests use the matrices as an oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg as sla

from .errors import BadShift, DecompositionFailure, InsufficientHorizon, InvalidMatrix, NotRegular
from .linalg import as_matrix, core_nilpotent

SHIFT_COND_CAP = 1e10
FORM_TOL = 1e-8


@dataclass(frozen=True)
class DescriptorSystem:
    """``E x[k+1] = A x[k] + B u[k]``."""

    E: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        E = as_matrix(self.E, "E")
        A = as_matrix(self.A, "A")
        B = as_matrix(self.B, "B")
        n = E.shape[0]
        if E.shape != (n, n) or A.shape != (n, n) or B.shape[0] != n:
            raise InvalidMatrix(
                f"inconsistent shapes E{E.shape} A{A.shape} B{B.shape}"
            )
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.E.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    def pencil(self, s) -> np.ndarray:
        return s * self.E - self.A

    def with_feedback(self, K) -> "DescriptorSystem":
        """Closed loop under ``u = K x``: ``(E, A + B K, B)``."""
        K = as_matrix(K, "K").reshape(self.m, self.n)
        return DescriptorSystem(self.E, self.A + self.B @ K, self.B)


@dataclass(frozen=True)
class SlowFastForm:
    """Weierstrass-type split ``QEP = diag(I, N_f)``, ``QAP = diag(A_s, I)``."""

    Q: np.ndarray
    P: np.ndarray
    A_s: np.ndarray
    B_s: np.ndarray
    N_f: np.ndarray
    B_f: np.ndarray
    n1: int
    n2: int
    index_h: int
    s0: float

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    def reassemble(self) -> DescriptorSystem:
        """Undo the transformation; reproduces the original ``(E, A, B)``."""
        Qi = np.linalg.inv(self.Q)
        Pi = np.linalg.inv(self.P)
        Es = sla.block_diag(np.eye(self.n1), self.N_f)
        As = sla.block_diag(self.A_s, np.eye(self.n2))
        return DescriptorSystem(Qi @ Es @ Pi, Qi @ As @ Pi, Qi @ np.vstack([self.B_s, self.B_f]))


@dataclass
class Trajectory:
    """Inputs ``u[0..L-1]`` (rows) and states ``x[0..L]`` (rows)."""

    inputs: np.ndarray
    states: np.ndarray
    noise_seed: Optional[int] = None
    noise_scale: float = 0.0
    noise: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        u = np.asarray(self.inputs, dtype=float)
        self.inputs = u.reshape(-1, 1) if u.ndim == 1 else u
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise InvalidMatrix(
                f"need len(states) == len(inputs) + 1, got {self.states.shape[0]} "
                f"and {self.inputs.shape[0]}"
            )

    @property
    def length(self) -> int:
        return self.inputs.shape[0]

    def residuals(self, sys: DescriptorSystem) -> np.ndarray:
        """Per-step ``E x[k+1] - A x[k] - B u[k]`` as an ``(L, n)`` array."""
        x = self.states
        return x[1:] @ sys.E.T - x[:-1] @ sys.A.T - self.inputs @ sys.B.T


class Regularity(NamedTuple):
    regular: bool
    shift: Optional[float]
    condition: float


def is_regular(sys: DescriptorSystem, trials: int = 16, seed: int = 0,
               cond_cap: float = SHIFT_COND_CAP) -> Regularity:
    """Probabilistic regularity check.

    ``det(sE - A)`` is a polynomial in ``s``; if it is not identically zero it
    vanishes at finitely many points, so random real shifts almost surely
    land off them. The best-conditioned of ``trials`` shifts is returned as
    a witness when its condition number is below ``cond_cap``.
    """
    rng = np.random.default_rng(seed)
    scale = 1.0 + np.linalg.norm(sys.A, 2) / max(np.linalg.norm(sys.E, 2), 1e-300)
    scale = min(scale, 1e6)
    best_s, best_c = None, np.inf
    for s in rng.uniform(-scale, scale, trials):
        c = np.linalg.cond(sys.pencil(s))
        if c < best_c:
            best_s, best_c = float(s), float(c)
    if best_c < cond_cap:
        return Regularity(True, best_s, best_c)
    return Regularity(False, None, best_c)


def slow_fast_decompose(sys: DescriptorSystem, s0: float, tol: float = FORM_TOL) -> SlowFastForm:
    """Slow-fast form built from the core-nilpotent split of ``inv(s0 E - A) E``.

    With ``inv(T) D T = diag(E1, E2)``::

        Q = diag(inv(E1), inv(s0 E2 - I)) inv(T) inv(s0 E - A),   P = T

    which gives ``A_s = s0 I - inv(E1)`` and ``N_f = inv(s0 E2 - I) E2``.
    """
    pencil = sys.pencil(s0)
    if not np.isfinite(np.linalg.cond(pencil)) or np.linalg.cond(pencil) > SHIFT_COND_CAP:
        raise BadShift(f"s0 = {s0} makes s0*E - A singular")
    D = np.linalg.solve(pencil, sys.E)
    cn = core_nilpotent(D)
    n1, n2 = cn.n1, cn.n2
    T = cn.T_hat
    left = sla.block_diag(
        np.linalg.inv(cn.E1_hat) if n1 else np.zeros((0, 0)),
        np.linalg.inv(s0 * cn.E2_hat - np.eye(n2)) if n2 else np.zeros((0, 0)),
    )
    Q = left @ np.linalg.solve(T, np.linalg.inv(pencil))
    P = T
    QEP = Q @ sys.E @ P
    QAP = Q @ sys.A @ P
    QB = Q @ sys.B
    A_s = QAP[:n1, :n1]
    N_f = QEP[n1:, n1:]
    scale = max(1.0, np.linalg.norm(Q, 2) * np.linalg.norm(P, 2)
                * max(np.linalg.norm(sys.E, 2), np.linalg.norm(sys.A, 2)))
    err_E = np.linalg.norm(QEP - sla.block_diag(np.eye(n1), N_f), 2)
    err_A = np.linalg.norm(QAP - sla.block_diag(A_s, np.eye(n2)), 2)
    if max(err_E, err_A) > tol * scale:
        raise DecompositionFailure(
            f"slow-fast residuals {err_E:.2e}/{err_A:.2e} above tolerance"
        )
    return SlowFastForm(Q, P, A_s, QB[:n1], N_f, QB[n1:], n1, n2, cn.index_h, float(s0))


def _fast_states(sf: SlowFastForm, drive: np.ndarray, count: int) -> np.ndarray:
    """``x_f[k] = -sum_{i<h} N_f^i drive[k+i]`` for ``k < count``."""
    xf = np.zeros((count, sf.n2))
    Ni = np.eye(sf.n2)
    for i in range(sf.index_h):
        xf -= drive[i:i + count] @ Ni.T
        Ni = Ni @ sf.N_f
    return xf


def consistent_initial_state(sf: SlowFastForm, inputs, x0_slow) -> np.ndarray:
    """Initial state compatible with the algebraic constraints.

    The slow coordinates are free; the fast ones are pinned by the first
    ``h`` inputs: ``x_f[0] = -sum_{i<h} N_f^i B_f u[i]``.
    """
    u = np.asarray(inputs, dtype=float).reshape(-1, sf.B_s.shape[1])
    if u.shape[0] < sf.index_h:
        raise InsufficientHorizon(f"need at least {sf.index_h} inputs, got {u.shape[0]}")
    xs0 = np.asarray(x0_slow, dtype=float).reshape(sf.n1)
    xf0 = _fast_states(sf, u @ sf.B_f.T, 1)[0] if sf.n2 else np.zeros(0)
    return sf.P @ np.concatenate([xs0, xf0])


def simulate(sys: DescriptorSystem, sf: SlowFastForm, x0_slow, inputs,
             noise_scale: float = 0.0, seed=None, terminal_fast=None) -> Trajectory:
    """Simulate ``E x[k+1] = A x[k] + B u[k] + d[k]`` on a finite window.

    ``inputs`` must hold ``L + h`` rows: the fast states are anticausal, so
    ``x[L]`` depends on ``u[L..L+h-1]``. The returned trajectory keeps
    ``u[0..L-1]`` and ``x[0..L]``.

    System noise ``d[k]`` is i.i.d. uniform on ``[-noise_scale, noise_scale]^n``
    and enters the slow and fast channels as ``Q d[k]``. The realized
    ``d[0..L-1]`` is stored on the trajectory.

    ``terminal_fast`` (an ``n2``-vector ``z``) adds the homogeneous fast
    solution ``N_f^(L-k) z``. The window equations ``k < L`` do not pin the
    fast state at the end of the window, so this keeps every recorded step
    exact while letting ``x[L]`` leave the subspace reachable through
    ``B_f``. For ``L >= h`` the initial state is untouched.
    """
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, sys.m)
    h = sf.index_h
    L = u.shape[0] - h
    if L < 0:
        raise InsufficientHorizon(f"need at least {h} inputs, got {u.shape[0]}")
    total = u.shape[0]
    if noise_scale > 0:
        rng = np.random.default_rng(seed)
        d = rng.uniform(-noise_scale, noise_scale, size=(total, sys.n))
    else:
        d = np.zeros((total, sys.n))
    w = d @ sf.Q.T
    drive_s = u @ sf.B_s.T + w[:, :sf.n1]
    xs = np.zeros((L + 1, sf.n1))
    xs[0] = np.asarray(x0_slow, dtype=float).reshape(sf.n1)
    for k in range(L):
        xs[k + 1] = sf.A_s @ xs[k] + drive_s[k]
    xf = _fast_states(sf, u @ sf.B_f.T + w[:, sf.n1:], L + 1)
    if terminal_fast is not None and sf.n2:
        y = np.asarray(terminal_fast, dtype=float).reshape(sf.n2)
        for k in range(L, max(L - sf.index_h, -1), -1):
            xf[k] += y
            y = sf.N_f @ y
    x = np.hstack([xs, xf]) @ sf.P.T
    return Trajectory(u[:L], x, seed, float(noise_scale), d[:L])


def circuit_system(R: float = 1.0, L: float = 1.0, C: float = 1.0) -> DescriptorSystem:
    """Single-loop RLC circuit with state ``(I, V_L, V_C, V_R)`` and input ``V_S``."""
    E = np.array([[L, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 0], [0, 0, 0, 0]], dtype=float)
    A = np.array([[0, 1, 0, 0], [1 / C, 0, 0, 0], [-R, 0, 0, 1], [0, 1, 1, 1]], dtype=float)
    B = np.array([[0.0], [0.0], [0.0], [-1.0]])
    return DescriptorSystem(E, A, B)


@dataclass(frozen=True)
class ConstructedSystem:
    """A system assembled from a known slow-fast form, with its ingredients."""

    system: DescriptorSystem
    Q0: np.ndarray
    P0: np.ndarray
    A_s: np.ndarray
    B_s: np.ndarray
    N_f: np.ndarray
    B_f: np.ndarray

    @property
    def n1(self) -> int:
        return self.A_s.shape[0]

    @property
    def index_h(self) -> int:
        n2 = self.N_f.shape[0]
        if n2 == 0:
            return 0
        k, Nk = 1, self.N_f.copy()
        while np.linalg.norm(Nk) > 1e-12:
            Nk = Nk @ self.N_f
            k += 1
        return k


def _well_conditioned(rng, n, spread=2.0):
    U = sla.qr(rng.standard_normal((n, n)))[0]
    V = sla.qr(rng.standard_normal((n, n)))[0]
    return U @ np.diag(rng.uniform(1.0, spread, n)) @ V


def nilpotent_matrix(block_sizes) -> np.ndarray:
    """Block-diagonal shift matrix; index equals the largest block size."""
    blocks = [np.eye(b, k=1) for b in block_sizes]
    return sla.block_diag(*blocks) if blocks else np.zeros((0, 0))


def construct_system(A_s, B_s, N_f, B_f, Q0, P0) -> ConstructedSystem:
    """``E = inv(Q0) diag(I, N_f) inv(P0)`` and so on."""
    A_s, B_s = np.atleast_2d(A_s), np.atleast_2d(B_s)
    n1 = A_s.shape[0] if A_s.size else 0
    n2 = np.asarray(N_f).shape[0]
    N_f = np.asarray(N_f, dtype=float).reshape(n2, n2)
    m = B_s.shape[1] if n1 else np.asarray(B_f).reshape(n2, -1).shape[1]
    A_s = A_s.reshape(n1, n1)
    B_s = B_s.reshape(n1, m)
    B_f = np.asarray(B_f, dtype=float).reshape(n2, m)
    Qi = np.linalg.inv(Q0)
    Pi = np.linalg.inv(P0)
    E = Qi @ sla.block_diag(np.eye(n1), N_f) @ Pi
    A = Qi @ sla.block_diag(A_s, np.eye(n2)) @ Pi
    B = Qi @ np.vstack([B_s, B_f])
    return ConstructedSystem(DescriptorSystem(E, A, B), Q0, P0, A_s, B_s, N_f, B_f)


def random_descriptor_system(rng, n: int, m: int, n1: Optional[int] = None,
                             nilpotent_blocks=None, slow_radius: float = 1.3,
                             uncontrollable_slow: bool = False,
                             fast_input: str = "random") -> ConstructedSystem:
    """Random regular descriptor system with prescribed structure.

    Parameters
    ----------
    rng : numpy Generator
    n, m : int
        State and input dimensions.
    n1 : int, optional
        Slow dimension; drawn uniformly from ``0..n`` when omitted.
    nilpotent_blocks : sequence of int, optional
        Jordan block sizes of ``N_f`` (must sum to ``n - n1``). Drawn at random
        when omitted, so indices are mixed.
    slow_radius : float
        Spectral radius of ``A_s``.
    uncontrollable_slow : bool
        Make one slow mode unreachable from the input.
    fast_input : {"random", "zero", "partial"}
        ``"zero"`` zeroes ``B_f``; ``"partial"`` zeroes its first row only.
    """
    if n1 is None:
        n1 = int(rng.integers(0, n + 1))
    n2 = n - n1
    if nilpotent_blocks is None:
        nilpotent_blocks = []
        left = n2
        while left:
            b = int(rng.integers(1, left + 1))
            nilpotent_blocks.append(b)
            left -= b
    if sum(nilpotent_blocks) != n2:
        raise ValueError("nilpotent block sizes must sum to n - n1")
    A_s = rng.standard_normal((n1, n1))
    B_s = rng.standard_normal((n1, m))
    if n1:
        if uncontrollable_slow:
            if n1 == 1:
                A_s = np.array([[rng.uniform(-1, 1)]])
                B_s = np.zeros((1, m))
            else:
                A_s[-1, :-1] = 0.0
                B_s[-1] = 0.0
        rho = max(abs(np.linalg.eigvals(A_s)))
        if rho > 0:
            A_s = A_s * (slow_radius * rng.uniform(0.6, 1.0) / rho)
        else:
            A_s = np.zeros((n1, n1))
    N_f = nilpotent_matrix(nilpotent_blocks)
    B_f = rng.standard_normal((n2, m))
    if fast_input == "zero":
        B_f[:] = 0.0
    elif fast_input == "partial" and n2:
        B_f[0] = 0.0
    Q0 = _well_conditioned(rng, n)
    P0 = _well_conditioned(rng, n)
    return construct_system(A_s, B_s, N_f, B_f, Q0, P0)
