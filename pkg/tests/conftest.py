import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from descriptor_ddc.experiments import ExperimentConfig, SimulatedPlant, collect_data_matrices, run_experiment3
from descriptor_ddc.model import circuit_system, random_descriptor_system

settings.register_profile(
    "default", max_examples=40, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def circuit():
    return circuit_system()


@pytest.fixture(scope="session")
def circuit_data(circuit):
    """Noise-free Experiments 1-3 on the circuit, s0 = 0.5, l = 4, T = 80."""
    cfg = ExperimentConfig(s0=0.5, l=4, T=80, seed=0)
    plant = SimulatedPlant(circuit)
    e1, e2, d = collect_data_matrices(plant, cfg)
    e3 = run_experiment3(plant, cfg)
    return {"config": cfg, "plant": plant, "e1": e1, "e2": e2, "d": d, "e3": e3}


def model_D(sys, s0):
    """``inv(s0 E - A)`` applied to ``E``, ``A`` and ``B``."""
    pencil = sys.pencil(s0)
    return (np.linalg.solve(pencil, sys.E), np.linalg.solve(pencil, sys.A), np.linalg.solve(pencil, sys.B))


def random_system(seed, n=None, m=None, **kw):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 7)) if n is None else n
    m = int(rng.integers(1, 4)) if m is None else m
    return random_descriptor_system(rng, n, m, **kw)
