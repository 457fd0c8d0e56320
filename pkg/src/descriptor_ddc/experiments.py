"""The three data experiments and the data matrices they produce.

Nothing in this module touches ``E``, ``A`` or ``B``. Experiments talk to a
*plant adapter*: any object with ``n``, ``m``, ``lookahead`` and
``run(inputs, seed) -> Trajectory``. :class:`SimulatedPlant` is the adapter
backed by a known :class:`~descriptor_ddc.model.DescriptorSystem`; recorded
trajectories from a real plant go straight into the ``*_from_trajectories``
assemblers instead.

Experiment 1 (``n`` runs, ``l`` steps, inputs summing to zero) gives::

    m_i = sum_{k<l} x_k                 n_i = (s0-1) m_i + x_0 - x_l
    v_i = sum_{1<=k<=l} x_k             w_i = (s0-1) v_i + s0 (x_0 - x_l)

with ``E N = (s0 E - A) M`` and ``(s0 E - A) V = A W``. Experiment 2 (``m``
runs under constant unit inputs) gives ``E R1 = A R0 + B``. Together::

    D_E = M inv(N) = inv(s0 E - A) E
    D_A = V inv(W) = inv(s0 E - A) A
    D_B = D_E R1 - D_A R0 = inv(s0 E - A) B
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Sequence

import numpy as np

from .errors import DegenerateData, NotRegular
from .linalg import auto_tolerance, rank_with_tolerance
from .model import DescriptorSystem, SlowFastForm, Trajectory, is_regular, simulate, slow_fast_decompose

COND_CAP = 1e8


class PlantAdapter(Protocol):
    n: int
    m: int
    lookahead: int

    def run(self, inputs: np.ndarray, seed) -> Trajectory:
        """Apply ``inputs`` from a fresh consistent state.

        ``inputs`` has ``L + lookahead`` rows; the trajectory covers ``L``.
        """


class SimulatedPlant:
    """Plant adapter that simulates a known descriptor system.

    Each ``run`` starts from a fresh consistent initial state whose slow
    coordinates are uniform in ``[-x0_scale, x0_scale]``.

    ``terminal_excitation`` is the amplitude of a random end-of-window fast
    component (see :func:`~descriptor_ddc.model.simulate`). Without it every
    recorded state lies in ``range(P_s) + span{N_f^i B_f}``; when the fast
    subsystem is not reachable from the input (``rank [E, B] < n``, the RLC
    circuit for one) ``N`` and ``W`` are then singular for every input
    design and Experiment 1 cannot identify ``D_E``.
    """

    def __init__(self, system: DescriptorSystem, noise_scale: float = 0.0,
                 x0_scale: float = 1.0, terminal_excitation: float = 1.0,
                 regularity_seed: int = 0):
        self.system = system
        self.noise_scale = float(noise_scale)
        self.x0_scale = float(x0_scale)
        self.terminal_excitation = float(terminal_excitation)
        reg = is_regular(system, seed=regularity_seed)
        if not reg.regular:
            raise NotRegular("plant pencil is singular at every sampled shift")
        self.form: SlowFastForm = slow_fast_decompose(system, reg.shift)

    @property
    def n(self) -> int:
        return self.system.n

    @property
    def m(self) -> int:
        return self.system.m

    @property
    def lookahead(self) -> int:
        return self.form.index_h

    def run(self, inputs, seed) -> Trajectory:
        rng = np.random.default_rng(seed)
        x0_slow = rng.uniform(-self.x0_scale, self.x0_scale, self.form.n1)
        noise_seed = int(rng.integers(2**63 - 1))
        a = self.terminal_excitation
        z = rng.uniform(-a, a, self.form.n2) if a > 0 else None
        return simulate(self.system, self.form, x0_slow, inputs,
                        noise_scale=self.noise_scale, seed=noise_seed, terminal_fast=z)


@dataclass
class ExperimentConfig:
    """Knobs shared by the three experiments.

    ``T`` defaults to ``(m + 1) n + m``, which covers the persistency bound
    for any slow dimension ``n1 <= n``.
    """

    s0: float = 0.5
    l: int = 4
    T: Optional[int] = None
    seed: int = 0
    resample_cap: int = 8
    cond_cap: float = COND_CAP
    input_amplitude: float = 1.0

    def __post_init__(self):
        if self.l < 1:
            raise ValueError("l must be >= 1")
        if self.T is not None and self.T < 1:
            raise ValueError("T must be >= 1")

    def horizon(self, n: int, m: int) -> int:
        return self.T if self.T is not None else minimal_horizon(n, m)

    def to_dict(self) -> dict:
        return {
            "s0": self.s0, "l": self.l, "T": self.T, "seed": self.seed,
            "resample_cap": self.resample_cap, "cond_cap": self.cond_cap,
            "input_amplitude": self.input_amplitude,
        }


def minimal_horizon(n: int, m: int) -> int:
    return (m + 1) * n + m


@dataclass
class Experiment1Data:
    M: np.ndarray
    N: np.ndarray
    V: np.ndarray
    W: np.ndarray
    s0: float
    l: int
    trajectories: List[Trajectory] = field(default_factory=list, repr=False)
    cond_N: float = np.nan
    cond_W: float = np.nan
    attempts: int = 1

    @property
    def scale(self) -> float:
        """Largest singular value of ``[M, N]``.

        Reference magnitude for deciding ``rank(M)``: when ``E = 0`` the
        matrix ``M`` is pure round-off and its own norm says nothing.
        """
        return float(np.linalg.norm(np.hstack([self.M, self.N]), 2))


@dataclass
class Experiment2Data:
    R0: np.ndarray
    R1: np.ndarray
    l: int
    unit_inputs: List[int] = field(default_factory=list)
    trajectories: List[Trajectory] = field(default_factory=list, repr=False)


@dataclass
class DataMatrices:
    D_E: np.ndarray
    D_A: np.ndarray
    D_B: np.ndarray
    s0: float
    cond_N: float = np.nan
    cond_W: float = np.nan
    rank_truncation: Optional[int] = None

    @property
    def n(self) -> int:
        return self.D_E.shape[0]

    @property
    def m(self) -> int:
        return self.D_B.shape[1]


@dataclass
class Experiment3Data:
    U_minus: np.ndarray
    X_minus: np.ndarray
    X_plus: np.ndarray
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def T(self) -> int:
        return self.U_minus.shape[1]


def _children(seed, tag, count):
    return np.random.SeedSequence([int(seed), tag]).spawn(count)


def design_exp1_inputs(config: ExperimentConfig, n: int, m: int, attempt: int = 0) -> List[np.ndarray]:
    """``n`` input sequences of length ``l`` whose sum over time is exactly zero.

    The first ``l - 1`` samples are uniform; the last one cancels their sum.
    With ``l == 1`` this forces a single zero input.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 1, attempt]))
    groups = []
    a = config.input_amplitude
    for _ in range(n):
        u = np.zeros((config.l, m))
        if config.l > 1:
            u[:-1] = rng.uniform(-a, a, size=(config.l - 1, m))
            u[-1] = -u[:-1].sum(axis=0)
        groups.append(u)
    return groups


def experiment1_from_trajectories(trajectories: Sequence[Trajectory], s0: float) -> Experiment1Data:
    """Build ``M, N, V, W`` from ``n`` recorded sub-experiments."""
    cols = {"m": [], "n": [], "v": [], "w": []}
    lengths = {t.length for t in trajectories}
    if len(lengths) != 1:
        raise DegenerateData(f"sub-experiments have different lengths {sorted(lengths)}")
    for t in trajectories:
        x = t.states
        x0, xl = x[0], x[-1]
        m_i = x[:-1].sum(axis=0)
        v_i = x[1:].sum(axis=0)
        cols["m"].append(m_i)
        cols["n"].append((s0 - 1.0) * m_i + x0 - xl)
        cols["v"].append(v_i)
        cols["w"].append((s0 - 1.0) * v_i + s0 * (x0 - xl))
    M, N, V, W = (np.column_stack(cols[k]) for k in ("m", "n", "v", "w"))
    return Experiment1Data(M, N, V, W, float(s0), lengths.pop(), list(trajectories),
                           float(np.linalg.cond(N)), float(np.linalg.cond(W)))


def run_experiment1(plant: PlantAdapter, config: ExperimentConfig) -> Experiment1Data:
    """Run Experiment 1, resampling while ``N`` or ``W`` is ill-conditioned.

    Raises
    ------
    DegenerateData
        After ``config.resample_cap`` attempts without ``cond(N)`` and
        ``cond(W)`` both below ``config.cond_cap``.
    """
    n, m, h = plant.n, plant.m, plant.lookahead
    worst = np.inf
    for attempt in range(max(1, config.resample_cap)):
        groups = design_exp1_inputs(config, n, m, attempt)
        seeds = _children(config.seed, 100 + attempt, n)
        pad_rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 2, attempt]))
        trajs = []
        for u, s in zip(groups, seeds):
            pad = pad_rng.uniform(-config.input_amplitude, config.input_amplitude, size=(h, m))
            trajs.append(plant.run(np.vstack([u, pad]), s))
        data = experiment1_from_trajectories(trajs, config.s0)
        data.attempts = attempt + 1
        worst = max(data.cond_N, data.cond_W)
        if worst <= config.cond_cap:
            return data
    raise DegenerateData(
        f"cond(N), cond(W) stayed above {config.cond_cap:.0e} after "
        f"{config.resample_cap} attempts (last {worst:.2e})"
    )


def experiment2_from_trajectories(trajectories: Sequence[Trajectory], l: int) -> Experiment2Data:
    """``R0``/``R1`` columns are the states at steps ``l`` and ``l + 1``."""
    R0 = np.column_stack([t.states[l] for t in trajectories])
    R1 = np.column_stack([t.states[l + 1] for t in trajectories])
    return Experiment2Data(R0, R1, l, list(range(len(trajectories))), list(trajectories))


def run_experiment2(plant: PlantAdapter, config: ExperimentConfig) -> Experiment2Data:
    """``m`` runs under the constant inputs ``e_1, ..., e_m``."""
    n, m, h = plant.n, plant.m, plant.lookahead
    seeds = _children(config.seed, 200, m)
    trajs = []
    for i, s in enumerate(seeds):
        u = np.zeros((config.l + 1 + h, m))
        u[:, i] = 1.0
        trajs.append(plant.run(u, s))
    return experiment2_from_trajectories(trajs, config.l)


def _truncate(M, rank):
    U, s, Vt = np.linalg.svd(M)
    s[rank:] = 0.0
    return (U * s) @ Vt


def assemble_data_matrices(e1: Experiment1Data, e2: Experiment2Data, rank_M: Optional[int] = None,
                           cond_cap: float = COND_CAP) -> DataMatrices:
    """``D_E = M inv(N)``, ``D_A = V inv(W)``, ``D_B = D_E R1 - D_A R0``.

    ``rank_M`` truncates ``M`` to that rank before forming ``D_E``; this is
    how a noisy ``M`` is cleaned once its rank has been decided from the
    singular-value gap.
    """
    cond_N = float(np.linalg.cond(e1.N))
    cond_W = float(np.linalg.cond(e1.W))
    if not (cond_N <= cond_cap and cond_W <= cond_cap):
        raise DegenerateData(f"cond(N) = {cond_N:.2e}, cond(W) = {cond_W:.2e} exceed {cond_cap:.0e}")
    M = e1.M if rank_M is None else _truncate(e1.M, rank_M)
    D_E = np.linalg.solve(e1.N.T, M.T).T
    D_A = np.linalg.solve(e1.W.T, e1.V.T).T
    D_B = D_E @ e2.R1 - D_A @ e2.R0
    return DataMatrices(D_E, D_A, D_B, e1.s0, cond_N, cond_W, rank_M)


def experiment3_from_trajectory(traj: Trajectory) -> Experiment3Data:
    x = traj.states
    return Experiment3Data(traj.inputs.T.copy(), x[:-1].T.copy(), x[1:].T.copy(), traj)


def run_experiment3(plant: PlantAdapter, config: ExperimentConfig,
                    inputs: Optional[np.ndarray] = None) -> Experiment3Data:
    """One long run under random (persistently exciting) inputs.

    ``inputs`` overrides the random design; it must already include the
    plant's lookahead rows.
    """
    n, m, h = plant.n, plant.m, plant.lookahead
    T = config.horizon(n, m)
    if inputs is None:
        rng = np.random.default_rng(np.random.SeedSequence([int(config.seed), 3]))
        a = config.input_amplitude
        inputs = rng.uniform(-a, a, size=(T + h, m))
    seed = _children(config.seed, 300, 1)[0]
    return experiment3_from_trajectory(plant.run(inputs, seed))


def collect_data_matrices(plant: PlantAdapter, config: ExperimentConfig):
    """Experiments 1 and 2 followed by :func:`assemble_data_matrices`.

    ``M`` is truncated to its numerical rank, measured against the size of
    the Experiment-1 data, so ``rank(D_E) == rank(M)`` holds exactly.
    """
    e1 = run_experiment1(plant, config)
    e2 = run_experiment2(plant, config)
    rank_M = rank_with_tolerance(e1.M, auto_tolerance(e1.M.shape, e1.scale)).rank
    return e1, e2, assemble_data_matrices(e1, e2, rank_M=rank_M, cond_cap=config.cond_cap)
