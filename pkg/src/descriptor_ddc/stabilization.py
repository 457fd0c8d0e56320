"""Data-driven stabilizing state feedback.

Pipeline:

1. core-nilpotent split of ``D_E`` gives ``P`` and ``(n1, n2)``;
2. ``inv(P) X_minus`` / ``inv(P) X_plus`` split into slow and fast rows;
3. ``[U_minus; Xs_minus]`` must have full row rank;
4. find ``Phi_s`` with ``Xs_minus Phi_s`` symmetric and
   ``[[Xs_minus Phi_s, Xs_plus Phi_s], [(Xs_plus Phi_s)^T, Xs_minus Phi_s]] > 0``;
5. ``K_s = U_minus Phi_s inv(Xs_minus Phi_s)`` and ``K = [K_s, 0] inv(P)``.

Step 4 is a small semidefinite program handed to ``cvxpy``. What the rest of
the package relies on is the certificate re-checked here in numpy, not the
solver's own status.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .analysis import RankTest, _rank_test
from .errors import DegenerateCertificate, LmiInfeasible, NothingToStabilize, NotRegular
from .experiments import DataMatrices, Experiment3Data
from .linalg import AUTO, core_nilpotent, eigenvalues, finite_generalized_eigenvalues
from .model import DescriptorSystem, Trajectory, is_regular, simulate, slow_fast_decompose

EPS_PD = 1e-6
SYM_TOL = 1e-9


@dataclass
class SlowDataset:
    U_minus: np.ndarray
    Xs_minus: np.ndarray
    Xs_plus: np.ndarray
    Xf_minus: np.ndarray
    Xf_plus: np.ndarray
    P: np.ndarray
    n1: int
    n2: int

    @property
    def T(self) -> int:
        return self.U_minus.shape[1]

    @property
    def m(self) -> int:
        return self.U_minus.shape[0]


@dataclass
class LmiCertificate:
    Phi_s: np.ndarray
    lmi_min_eig: float
    sym_residual: float
    solver: str = ""


@dataclass
class StabilizationResult:
    Phi_s: np.ndarray
    K_s: np.ndarray
    K: np.ndarray
    P: np.ndarray
    n1: int
    n2: int
    lmi_min_eig: float
    sym_residual: float
    closed_loop_eigs: np.ndarray
    spectral_radius: float

    def to_dict(self) -> dict:
        return {
            "K_s": self.K_s.tolist(),
            "K": self.K.tolist(),
            "P": self.P.tolist(),
            "n1": self.n1,
            "n2": self.n2,
            "lmi_min_eig": float(self.lmi_min_eig),
            "sym_residual": float(self.sym_residual),
            "spectral_radius": float(self.spectral_radius),
            "closed_loop_eigs": [[float(z.real), float(z.imag)] for z in self.closed_loop_eigs],
        }


def split_with(P, n1, e3: Experiment3Data) -> SlowDataset:
    Xm = np.linalg.solve(P, e3.X_minus)
    Xp = np.linalg.solve(P, e3.X_plus)
    return SlowDataset(e3.U_minus, Xm[:n1], Xp[:n1], Xm[n1:], Xp[n1:], P, n1, P.shape[0] - n1)


def data_decompose(d: DataMatrices, e3: Experiment3Data, tol=AUTO) -> SlowDataset:
    """Slow/fast data from ``P = T_hat`` of the core-nilpotent split of ``D_E``.

    Raises
    ------
    NothingToStabilize
        If ``D_E`` is nilpotent (no slow subsystem).
    """
    cn = core_nilpotent(d.D_E, tol)
    if cn.n1 == 0:
        raise NothingToStabilize("D_E is nilpotent; the system has no slow part")
    return split_with(cn.T_hat, cn.n1, e3)


def check_persistency(sd: SlowDataset, tol=AUTO) -> RankTest:
    """``rank [U_minus; Xs_minus] == n1 + m``."""
    return _rank_test(np.vstack([sd.U_minus, sd.Xs_minus]), sd.n1 + sd.m, tol)


def lmi_block(Xs_minus, Xs_plus, Phi) -> np.ndarray:
    Y = Xs_minus @ Phi
    Y = 0.5 * (Y + Y.T)
    Z = Xs_plus @ Phi
    return np.block([[Y, Z], [Z.T, Y]])


def certify_lmi(sd: SlowDataset, Phi) -> LmiCertificate:
    """Re-check a candidate ``Phi_s`` in plain numpy."""
    Y = sd.Xs_minus @ Phi
    sym = float(np.linalg.norm(Y - Y.T, 2))
    lam = float(np.linalg.eigvalsh(lmi_block(sd.Xs_minus, sd.Xs_plus, Phi)).min())
    return LmiCertificate(Phi, lam, sym)


def _solve_cvxpy(sd: SlowDataset, solver):
    import cvxpy as cp

    n1, T = sd.n1, sd.T
    Phi = cp.Variable((T, n1))
    t = cp.Variable()
    Y = sd.Xs_minus @ Phi
    Z = sd.Xs_plus @ Phi
    Ys = 0.5 * (Y + Y.T)
    block = cp.bmat([[Ys, Z], [Z.T, Ys]])
    cons = [
        0.5 * (block + block.T) >> t * np.eye(2 * n1),
        Ys << np.eye(n1),
    ]
    # symmetry as n1(n1-1)/2 linear equalities
    iu = np.triu_indices(n1, 1)
    for i, j in zip(*iu):
        cons.append(Y[i, j] == Y[j, i])
    prob = cp.Problem(cp.Maximize(t), cons)
    prob.solve(solver=solver)
    return prob, Phi.value


def solve_stabilizing_lmi(sd: SlowDataset, eps_pd: float = EPS_PD, sym_tol: float = SYM_TOL,
                          solver: Optional[str] = None) -> LmiCertificate:
    """Find ``Phi_s`` satisfying the stabilizing LMI with margin ``eps_pd``.

    Solved as ``max t`` subject to ``block >= t I`` and ``Xs_minus Phi_s <= I``.
    The upper bound only fixes the scale (the LMI is homogeneous in
    ``Phi_s``), so ``eps_pd`` is measured against unit-sized ``Xs_minus Phi_s``.
    The solver's ``Phi_s`` is then projected so that ``Xs_minus Phi_s`` is
    symmetric to round-off, and the certificate recomputed.

    Raises
    ------
    LmiInfeasible
        If no point with minimum eigenvalue ``>= eps_pd`` was found. This
        reports a failure to find a certificate, not a proof of
        infeasibility.
    """
    solvers = [solver] if solver else ["CLARABEL", "SCS"]
    best = None
    for name in solvers:
        try:
            prob, Phi = _solve_cvxpy(sd, name)
        except Exception:  # solver missing or crashed; try the next one
            continue
        if Phi is None:
            continue
        Y = sd.Xs_minus @ Phi
        Phi = Phi + np.linalg.pinv(sd.Xs_minus) @ (0.5 * (Y.T - Y))
        cert = certify_lmi(sd, Phi)
        cert.solver = name
        if best is None or cert.lmi_min_eig > best.lmi_min_eig:
            best = cert
        if cert.lmi_min_eig >= eps_pd and cert.sym_residual <= sym_tol:
            return cert
    found = None if best is None else best.lmi_min_eig
    raise LmiInfeasible(
        "no stabilizing certificate found "
        f"(best minimum eigenvalue {found!r}, required {eps_pd:g}); "
        "this is a failure to find one, not a proof that none exists",
        best_min_eig=found,
    )


def assemble_gain(sd: SlowDataset, Phi, cert: Optional[LmiCertificate] = None) -> StabilizationResult:
    """Gains and the data-based closed-loop matrix from a certified ``Phi_s``."""
    cert = cert if cert is not None else certify_lmi(sd, Phi)
    Y = sd.Xs_minus @ Phi
    Y = 0.5 * (Y + Y.T)
    if np.linalg.cond(Y) > 1e12:
        raise DegenerateCertificate("Xs_minus Phi_s is numerically singular")
    K_s = np.linalg.solve(Y.T, (sd.U_minus @ Phi).T).T
    A_cl = np.linalg.solve(Y.T, (sd.Xs_plus @ Phi).T).T
    K = np.hstack([K_s, np.zeros((sd.m, sd.n2))]) @ np.linalg.inv(sd.P)
    eigs = eigenvalues(A_cl)
    return StabilizationResult(Phi, K_s, K, sd.P, sd.n1, sd.n2, cert.lmi_min_eig, cert.sym_residual,
                               eigs, float(np.max(np.abs(eigs))) if eigs.size else 0.0)


def stabilize(d: DataMatrices, e3: Experiment3Data, eps_pd: float = EPS_PD,
              solver: Optional[str] = None) -> StabilizationResult:
    """Full pipeline: split, persistency check, LMI, gain."""
    sd = data_decompose(d, e3)
    pe = check_persistency(sd)
    if not pe.passed:
        raise LmiInfeasible(
            f"slow data not persistently exciting: rank {pe.rank} < {pe.expected}"
        )
    cert = solve_stabilizing_lmi(sd, eps_pd=eps_pd, solver=solver)
    return assemble_gain(sd, cert.Phi_s, cert)


@dataclass
class ClosedLoopReport:
    finite_eigs: np.ndarray
    n_infinite: int
    max_modulus: float
    stable: bool
    shift: float
    trajectory: Optional[Trajectory] = field(default=None, repr=False)
    decay_ratio: float = np.nan

    def to_dict(self) -> dict:
        return {
            "finite_eigs": [[float(z.real), float(z.imag)] for z in self.finite_eigs],
            "n_infinite": self.n_infinite,
            "max_modulus": float(self.max_modulus),
            "stable": bool(self.stable),
            "shift": float(self.shift),
            "decay_ratio": float(self.decay_ratio),
        }


def certify_closed_loop(sys: DescriptorSystem, K, steps: int = 200, seed: int = 0) -> ClosedLoopReport:
    """Check ``(E, A + B K)`` against the true model and simulate it.

    Finite eigenvalues come from ``inv(s E - A - B K) E`` at a freshly
    certified shift ``s``. The simulation starts from a random consistent
    state with no external input and reports ``||x[steps]|| / ||x[0]||``.
    """
    cl = sys.with_feedback(K)
    reg = is_regular(cl, seed=seed)
    if not reg.regular:
        raise NotRegular("closed-loop pencil is singular at every sampled shift")
    s = reg.shift
    spectrum = finite_generalized_eigenvalues(np.linalg.solve(cl.pencil(s), cl.E), s)
    mod = float(np.max(np.abs(spectrum.values))) if spectrum.values.size else 0.0
    sf = slow_fast_decompose(cl, s)
    rng = np.random.default_rng(seed)
    x0_slow = rng.uniform(-1.0, 1.0, sf.n1)
    traj = simulate(cl, sf, x0_slow, np.zeros((steps + sf.index_h, sys.m)))
    x0 = np.linalg.norm(traj.states[0])
    decay = float(np.linalg.norm(traj.states[-1]) / x0) if x0 > 0 else 0.0
    return ClosedLoopReport(spectrum.values, spectrum.n_infinite, mod, mod < 1.0, s, traj, decay)
