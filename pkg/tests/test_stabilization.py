import numpy as np
import pytest
import scipy.linalg as sla

from conftest import random_system
from descriptor_ddc.errors import DegenerateCertificate, LmiInfeasible, NothingToStabilize
from descriptor_ddc.experiments import (
    ExperimentConfig,
    SimulatedPlant,
    collect_data_matrices,
    run_experiment3,
)
from descriptor_ddc.linalg import eigenvalues
from descriptor_ddc.model import DescriptorSystem, construct_system, is_regular, slow_fast_decompose
from descriptor_ddc.stabilization import (
    SlowDataset,
    assemble_gain,
    certify_closed_loop,
    certify_lmi,
    check_persistency,
    data_decompose,
    lmi_block,
    solve_stabilizing_lmi,
    split_with,
    stabilize,
)


def _pipeline_data(sys, T=None, seed=0, s0=0.5):
    cfg = ExperimentConfig(s0=s0, T=T, seed=seed)
    plant = SimulatedPlant(sys)
    _, _, d = collect_data_matrices(plant, cfg)
    return d, run_experiment3(plant, cfg)


@pytest.fixture(scope="module")
def circuit_result(circuit_data):
    return stabilize(circuit_data["d"], circuit_data["e3"])


# --- splitting and persistency ----------------------------------------------------------------

def test_circuit_split_and_persistency(circuit_data):
    sd = data_decompose(circuit_data["d"], circuit_data["e3"])
    assert (sd.n1, sd.n2, sd.T) == (2, 2, 80)
    stacked = np.vstack([sd.Xs_minus, sd.Xf_minus])
    np.testing.assert_allclose(stacked, np.linalg.solve(sd.P, circuit_data["e3"].X_minus), atol=1e-12)
    pe = check_persistency(sd)
    assert pe.passed and pe.rank == 3 and pe.expected == 3


def test_zero_inputs_not_persistent(circuit, circuit_data):
    plant = SimulatedPlant(circuit)
    e3 = run_experiment3(plant, ExperimentConfig(T=80), inputs=np.zeros((81, 1)))
    sd = data_decompose(circuit_data["d"], e3)
    assert not np.any(sd.U_minus)
    assert not check_persistency(sd).passed


def test_short_window_not_persistent(circuit, circuit_data):
    e3 = run_experiment3(SimulatedPlant(circuit), ExperimentConfig(T=2))
    sd = data_decompose(circuit_data["d"], e3)
    assert sd.T < sd.n1 + sd.m
    assert not check_persistency(sd).passed


def test_normal_plant_has_no_fast_rows():
    rng = np.random.default_rng(2)
    sys = DescriptorSystem(np.eye(3), rng.standard_normal((3, 3)), rng.standard_normal((3, 1)))
    d, e3 = _pipeline_data(sys, s0=5.0)
    sd = data_decompose(d, e3)
    assert sd.n2 == 0 and sd.Xf_minus.shape == (0, e3.T)
    np.testing.assert_allclose(sd.P @ sd.Xs_minus, e3.X_minus, atol=1e-10)


def test_pure_fast_plant_refused():
    cs = random_system(1, n=3, m=1, n1=0, nilpotent_blocks=[2, 1])
    d, e3 = _pipeline_data(cs.system)
    with pytest.raises(NothingToStabilize):
        data_decompose(d, e3)


def test_slow_rows_span_true_slow_states():
    cs = random_system(9, n=5, m=2, n1=3, nilpotent_blocks=[2])
    d, e3 = _pipeline_data(cs.system, seed=9)
    sd = data_decompose(d, e3)
    true_slow = np.linalg.solve(cs.P0, e3.X_minus)[:cs.n1]
    angles = sla.subspace_angles(sd.Xs_minus.T, true_slow.T)
    assert np.max(angles) < 1e-8


def test_slow_data_obey_slow_recursion(circuit_data):
    sd = data_decompose(circuit_data["d"], circuit_data["e3"])
    Z = np.vstack([sd.U_minus, sd.Xs_minus])
    BA = sd.Xs_plus @ np.linalg.pinv(Z)
    B_s, A_s = BA[:, :sd.m], BA[:, sd.m:]
    resid = sd.Xs_plus - A_s @ sd.Xs_minus - B_s @ sd.U_minus
    assert np.abs(resid).max() <= 1e-8 * max(1.0, np.abs(sd.Xs_plus).max())
    # recovered A_s has the circuit's slow eigenvalues
    np.testing.assert_allclose(np.sort_complex(eigenvalues(A_s)),
                               np.sort_complex([-0.5 - 0.8660254037844386j, -0.5 + 0.8660254037844386j]),
                               atol=1e-8)


# --- LMI ---------------------------------------------------------------------------------

def _scalar_grid_feasible(sd, grid):
    """Brute force over K_s: a gain is certifiable iff |x+/x-| < 1 along it."""
    Z = np.vstack([sd.Xs_minus, sd.U_minus])
    ok = []
    for k in grid:
        phi = np.linalg.lstsq(Z, np.array([1.0, k]), rcond=None)[0]
        y, z = (sd.Xs_minus @ phi)[0], (sd.Xs_plus @ phi)[0]
        lam = np.linalg.eigvalsh(np.array([[y, z], [z, y]])).min()
        ok.append(lam > 0)
    return np.array(ok)


def test_scalar_lmi_against_grid():
    sys = DescriptorSystem([[1.0]], [[0.5]], [[1.0]])
    d, e3 = _pipeline_data(sys, T=20, s0=3.0)
    sd = data_decompose(d, e3)
    grid = np.linspace(-2.5, 1.5, 4001)
    ok = _scalar_grid_feasible(sd, grid)
    lo, hi = grid[ok].min(), grid[ok].max()
    assert lo == pytest.approx(-1.5, abs=2e-3) and hi == pytest.approx(0.5, abs=2e-3)
    res = assemble_gain(sd, solve_stabilizing_lmi(sd).Phi_s)
    assert lo < res.K_s[0, 0] < hi
    assert abs(0.5 + res.K[0, 0]) < 1
    np.testing.assert_allclose(res.K, res.K_s / sd.P[0, 0])


def test_unstabilizable_fixture():
    # slow mode 2 with no input path, plus an index-one fast part
    cs = construct_system([[2.0]], [[0.0]], np.zeros((1, 1)), [[1.0]], np.eye(2), np.array([[1.0, 0.3], [0.0, 1.0]]))
    d, e3 = _pipeline_data(cs.system, T=6, s0=0.5)
    sd = data_decompose(d, e3)
    assert sd.n1 == 1
    with pytest.raises(LmiInfeasible) as info:
        solve_stabilizing_lmi(sd)
    assert "not a proof" in str(info.value)
    assert info.value.best_min_eig is None or info.value.best_min_eig < 1e-6


def test_persistency_failure_is_reported_as_infeasible(circuit, circuit_data):
    e3 = run_experiment3(SimulatedPlant(circuit), ExperimentConfig(T=80), inputs=np.zeros((81, 1)))
    with pytest.raises(LmiInfeasible):
        stabilize(circuit_data["d"], e3)


def test_certificate_recheck(circuit_data, circuit_result):
    sd = data_decompose(circuit_data["d"], circuit_data["e3"])
    cert = certify_lmi(sd, circuit_result.Phi_s)
    assert cert.lmi_min_eig == pytest.approx(circuit_result.lmi_min_eig)
    assert cert.sym_residual <= 1e-9
    block = lmi_block(sd.Xs_minus, sd.Xs_plus, circuit_result.Phi_s)
    assert block.shape == (4, 4) and np.linalg.eigvalsh(block).min() > 0
    bad = certify_lmi(sd, -circuit_result.Phi_s)
    assert bad.lmi_min_eig < 0


def test_degenerate_certificate(circuit_data):
    sd = data_decompose(circuit_data["d"], circuit_data["e3"])
    with pytest.raises(DegenerateCertificate):
        assemble_gain(sd, np.zeros((sd.T, sd.n1)))


# --- gains and closed loop -----------------------------------------------------------------------

def test_circuit_gain(circuit, circuit_data, circuit_result):
    res = circuit_result
    assert res.lmi_min_eig > 0 and res.spectral_radius < 1 - 1e-6
    pad = np.hstack([res.K_s, np.zeros((1, res.n2))])
    np.testing.assert_array_equal(res.K, pad @ np.linalg.inv(res.P))
    cl = certify_closed_loop(circuit, res.K)
    assert cl.stable and cl.max_modulus < 1 and cl.n_infinite == 2
    # data-based A_cl and the true closed-loop pencil share their finite spectrum
    np.testing.assert_allclose(np.sort_complex(res.closed_loop_eigs), np.sort_complex(cl.finite_eigs), atol=1e-6)
    assert cl.decay_ratio < 1e-3


def test_gain_json_fields(circuit_result):
    out = circuit_result.to_dict()
    for key in ("K_s", "K", "P", "n1", "n2", "lmi_min_eig", "spectral_radius", "closed_loop_eigs"):
        assert key in out


def test_open_loop_stable_plant():
    cs = random_system(4, n=4, m=1, n1=2, nilpotent_blocks=[2], slow_radius=0.5)
    sys = cs.system
    zero = certify_closed_loop(sys, np.zeros((1, 4)))
    assert zero.stable
    d, e3 = _pipeline_data(sys, seed=4)
    res = stabilize(d, e3)
    assert res.spectral_radius < 1 and certify_closed_loop(sys, res.K).stable


def test_two_decompositions_both_stabilize():
    cs = random_system(12, n=4, m=2, n1=3, nilpotent_blocks=[1])
    sys = cs.system
    gains = []
    for s0 in (0.5, -1.3):
        d, e3 = _pipeline_data(sys, seed=12, s0=s0)
        gains.append(stabilize(d, e3).K)
    for K in gains:
        assert certify_closed_loop(sys, K).stable


def test_random_r_controllable_plants_certified():
    failures = []
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 3))
        cs = random_system(seed, n=n, m=m, n1=int(rng.integers(1, n + 1)))
        sys = cs.system
        s0 = is_regular(sys).shift if np.linalg.cond(sys.pencil(0.5)) > 1e8 else 0.5
        d, e3 = _pipeline_data(sys, seed=seed, s0=s0)
        res = stabilize(d, e3)
        cl = certify_closed_loop(sys, res.K)
        if not (cl.stable and res.spectral_radius < 1):
            failures.append(seed)
    assert failures == []


def test_closed_loop_trajectory_is_consistent(circuit, circuit_result):
    cl = certify_closed_loop(circuit, circuit_result.K, steps=50)
    sys = circuit.with_feedback(circuit_result.K)
    assert np.abs(cl.trajectory.residuals(sys)).max() <= 1e-10
    assert cl.trajectory.length == 50


def test_split_with_given_P(circuit, circuit_data):
    sf = slow_fast_decompose(circuit, 0.5)
    sd = split_with(sf.P, sf.n1, circuit_data["e3"])
    assert isinstance(sd, SlowDataset) and check_persistency(sd).passed
