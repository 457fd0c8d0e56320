"""Randomized agreement checks between data-based and model-based verdicts."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import DESCRIPTOR, data_report, identify_type, oracle_report, oracle_type
from .experiments import ExperimentConfig, SimulatedPlant, collect_data_matrices
from .model import ConstructedSystem, random_descriptor_system


def campaign_system(seed: int, max_n: int = 6, max_m: int = 3) -> ConstructedSystem:
    """Random regular system with structure mixed so every verdict varies.

    Roughly a third of the draws get an unreachable slow mode, and the fast
    input matrix is full, zero or partially zero.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 7]))
    n = int(rng.integers(2, max_n + 1))
    m = int(rng.integers(1, max_m + 1))
    n1 = int(rng.integers(0, n + 1))
    uncontrollable = bool(rng.random() < 0.3)
    fast_input = str(rng.choice(["random", "zero", "partial"]))
    cs = random_descriptor_system(rng, n, m, n1=n1, uncontrollable_slow=uncontrollable,
                                  fast_input=fast_input)
    if not np.any(cs.system.B):
        cs = random_descriptor_system(rng, n, m, n1=n1, uncontrollable_slow=uncontrollable,
                                      fast_input="random")
    return cs


@dataclass
class CaseResult:
    seed: int
    n: int
    m: int
    n1: int
    index_h: int
    data: dict
    oracle: dict
    error: Optional[str] = None

    @property
    def agree(self) -> bool:
        return self.error is None and self.data == self.oracle

    def to_dict(self) -> dict:
        return {"seed": self.seed, "n": self.n, "m": self.m, "n1": self.n1,
                "index_h": self.index_h, "data": self.data, "oracle": self.oracle,
                "agree": self.agree, "error": self.error}


def run_case(seed: int, s0: float = 0.5, l: int = 4) -> CaseResult:
    cs = campaign_system(seed)
    sys = cs.system
    oracle = {"type": oracle_type(sys), **oracle_report(sys, s0).verdicts()}
    try:
        plant = SimulatedPlant(sys)
        e1, _, d = collect_data_matrices(plant, ExperimentConfig(s0=s0, l=l, seed=seed))
        tv = identify_type(e1.M, scale=e1.scale)
        data = {"type": tv.kind, **data_report(d, tv.rank_E_estimate).verdicts()}
        err = None
    except Exception as exc:  # recorded per case, the campaign keeps going
        data, err = {}, f"{type(exc).__name__}: {exc}"
    return CaseResult(seed, sys.n, sys.m, cs.n1, cs.index_h, data, oracle, err)


@dataclass
class CampaignSummary:
    cases: list = field(default_factory=list)

    @property
    def agreement(self) -> float:
        return sum(c.agree for c in self.cases) / max(1, len(self.cases))

    def verdict_counts(self) -> dict:
        """How often each oracle verdict was true; shows the campaign is mixed."""
        keys = ["c_controllable", "causal", "y_controllable", "r_controllable"]
        out = {k: sum(bool(c.oracle[k]) for c in self.cases) for k in keys}
        out["descriptor"] = sum(c.oracle["type"] == DESCRIPTOR for c in self.cases)
        return out

    def to_dict(self) -> dict:
        return {"agreement": self.agreement, "count": len(self.cases),
                "verdict_counts": self.verdict_counts(),
                "cases": [c.to_dict() for c in self.cases]}


def run_campaign(count: int = 100, start: int = 0, s0: float = 0.5, l: int = 4,
                 workers: int = 1) -> CampaignSummary:
    seeds = list(range(start, start + count))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            cases = list(pool.map(run_case, seeds, [s0] * count, [l] * count))
    else:
        cases = [run_case(s, s0, l) for s in seeds]
    return CampaignSummary(cases)
