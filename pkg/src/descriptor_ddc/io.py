"""Files: systems (JSON), trajectories (CSV), experiment bundles, reports.

Floats are written with ``repr`` so that every value survives a round trip
bit for bit, and JSON keys keep a fixed order so identical runs give
identical bytes.
"""
from __future__ import annotations

import csv
import json
import os
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .errors import InvalidMatrix
from .experiments import (
    ExperimentConfig,
    Experiment1Data,
    Experiment2Data,
    Experiment3Data,
    DataMatrices,
    experiment1_from_trajectories,
    experiment2_from_trajectories,
    experiment3_from_trajectory,
)
from .model import DescriptorSystem, Trajectory

EXP1_PATTERN = "exp1_run{:02d}.csv"
EXP2_PATTERN = "exp2_run{:02d}.csv"
EXP3_NAME = "exp3.csv"


def to_jsonable(obj):
    """Nested lists of plain floats; complex numbers become ``[re, im]``."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return to_jsonable(np.stack([obj.real, obj.imag], axis=-1).tolist())
        return obj.tolist()
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dumps(obj) -> str:
    # allow_nan keeps inf / nan visible instead of failing the whole report
    return json.dumps(to_jsonable(obj), indent=2) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


# --- systems -----------------------------------------------------------------

def system_to_dict(sys: DescriptorSystem) -> dict:
    return {"E": sys.E.tolist(), "A": sys.A.tolist(), "B": sys.B.tolist()}


def system_from_dict(data: dict) -> DescriptorSystem:
    try:
        return DescriptorSystem(data["E"], data["A"], data["B"])
    except KeyError as exc:
        raise InvalidMatrix(f"system file lacks {exc.args[0]!r}") from None


def save_system(sys: DescriptorSystem, path) -> Path:
    return write_json(path, system_to_dict(sys))


def load_system(path) -> DescriptorSystem:
    return system_from_dict(read_json(path))


# --- trajectories --------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory(traj: Trajectory, path) -> Path:
    """CSV with header ``k,u_1..u_m,x_1..x_n``.

    Row ``k`` holds ``u[k]`` and ``x[k]``; the final state has no input, so
    the last row leaves the ``u`` cells empty.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = traj.inputs.shape[1]
    n = traj.states.shape[1]
    header = ["k"] + [f"u_{i + 1}" for i in range(m)] + [f"x_{i + 1}" for i in range(n)]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for k, x in enumerate(traj.states):
            u = [_fmt(v) for v in traj.inputs[k]] if k < traj.length else [""] * m
            w.writerow([k] + u + [_fmt(v) for v in x])
    return path


def read_trajectory(path) -> Trajectory:
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidMatrix(f"{path}: empty trajectory file")
    header = rows[0]
    ucols = [i for i, h in enumerate(header) if h.startswith("u_")]
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    body = rows[1:]
    states = np.array([[float(r[i]) for i in xcols] for r in body], dtype=float)
    inputs = np.array([[float(r[i]) for i in ucols] for r in body[:-1]], dtype=float)
    return Trajectory(inputs.reshape(len(body) - 1, len(ucols)), states.reshape(len(body), len(xcols)))


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    """Plain numeric CSV, e.g. singular values against ``l``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


# --- experiment bundles ---------------------------------------------------------

def matrices_dict(e1: Optional[Experiment1Data] = None, e2: Optional[Experiment2Data] = None,
                  d: Optional[DataMatrices] = None) -> dict:
    out = {}
    if e1 is not None:
        out.update(M=e1.M, N=e1.N, V=e1.V, W=e1.W, cond_N=e1.cond_N, cond_W=e1.cond_W)
    if e2 is not None:
        out.update(R0=e2.R0, R1=e2.R1)
    if d is not None:
        out.update(D_E=d.D_E, D_A=d.D_A, D_B=d.D_B, rank_truncation=d.rank_truncation)
    return to_jsonable(out)


def save_bundle(directory, config: ExperimentConfig, e1: Optional[Experiment1Data] = None,
                e2: Optional[Experiment2Data] = None, e3: Optional[Experiment3Data] = None,
                d: Optional[DataMatrices] = None) -> Path:
    """Write whichever experiments are given into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_json(directory / "config.json", config.to_dict())
    if e1 is not None:
        for i, t in enumerate(e1.trajectories):
            write_trajectory(t, directory / EXP1_PATTERN.format(i))
    if e2 is not None:
        for i, t in enumerate(e2.trajectories):
            write_trajectory(t, directory / EXP2_PATTERN.format(i))
    if e3 is not None:
        write_trajectory(e3.trajectory, directory / EXP3_NAME)
    if e1 is not None or e2 is not None or d is not None:
        write_json(directory / "matrices.json", matrices_dict(e1, e2, d))
    return directory


def _runs(directory: Path, pattern: str) -> List[Trajectory]:
    out = []
    i = 0
    while (directory / pattern.format(i)).exists():
        out.append(read_trajectory(directory / pattern.format(i)))
        i += 1
    return out


def load_config(path) -> ExperimentConfig:
    data = read_json(path)
    fields = ExperimentConfig.__dataclass_fields__
    return ExperimentConfig(**{k: v for k, v in data.items() if k in fields})


def load_bundle(directory):
    """Rebuild ``(config, e1, e2, e3)`` from recorded trajectories.

    Missing experiments come back as ``None``. The matrices are recomputed
    from the CSV files; ``matrices.json`` is informational.
    """
    directory = Path(directory)
    if not (directory / "config.json").exists():
        raise FileNotFoundError(f"{directory}: no config.json, not an experiment bundle")
    config = load_config(directory / "config.json")
    r1 = _runs(directory, EXP1_PATTERN)
    r2 = _runs(directory, EXP2_PATTERN)
    e1 = experiment1_from_trajectories(r1, config.s0) if r1 else None
    e2 = experiment2_from_trajectories(r2, config.l) if r2 else None
    e3 = experiment3_from_trajectory(read_trajectory(directory / EXP3_NAME)) \
        if (directory / EXP3_NAME).exists() else None
    return config, e1, e2, e3


def default_output_dir(env_var: str = "DDC_OUTPUT_DIR") -> Path:
    return Path(os.environ.get(env_var, "ddc_out"))
