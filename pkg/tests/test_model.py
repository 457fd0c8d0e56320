import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from conftest import model_D, random_system
from descriptor_ddc.errors import BadShift, InsufficientHorizon, InvalidMatrix
from descriptor_ddc.linalg import eigenvalues, finite_generalized_eigenvalues
from descriptor_ddc.model import (
    DescriptorSystem,
    circuit_system,
    consistent_initial_state,
    is_regular,
    simulate,
    slow_fast_decompose,
)


def _rel_residual(traj, sys):
    r = traj.residuals(sys)
    scale = max(1.0, np.abs(traj.states).max()) * max(np.linalg.norm(sys.E, 2), np.linalg.norm(sys.A, 2), 1.0)
    return np.abs(r).max() / scale if r.size else 0.0


def test_system_shape_validation():
    with pytest.raises(InvalidMatrix):
        DescriptorSystem(np.eye(2), np.eye(3), np.ones((2, 1)))
    with pytest.raises(InvalidMatrix):
        DescriptorSystem(np.eye(2), np.eye(2), np.ones((3, 1)))
    with pytest.raises(InvalidMatrix):
        DescriptorSystem(np.eye(2), np.array([[np.nan, 0], [0, 1]]), np.ones((2, 1)))


def test_regular_identity_zero():
    reg = is_regular(DescriptorSystem(np.eye(2), np.zeros((2, 2)), np.zeros((2, 1))))
    assert reg.regular and reg.shift != 0


def test_irregular_zero_pencil():
    reg = is_regular(DescriptorSystem([[0.0]], [[0.0]], [[1.0]]))
    assert not reg.regular and reg.shift is None


def test_irregular_common_kernel():
    # (E, A) share a kernel vector, so det(sE - A) == 0 for every s
    E = np.array([[1.0, 0], [0, 0]])
    A = np.array([[2.0, 0], [3.0, 0]])
    assert not is_regular(DescriptorSystem(E, A, np.ones((2, 1)))).regular


def test_regularity_deterministic(circuit):
    assert is_regular(circuit, seed=4) == is_regular(circuit, seed=4)
    assert is_regular(circuit).regular


def test_bad_shift():
    sys = DescriptorSystem(np.eye(2), 0.5 * np.eye(2), np.ones((2, 1)))
    with pytest.raises(BadShift):
        slow_fast_decompose(sys, 0.5)


def test_normal_system_has_no_fast_part():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((3, 3))
    sf = slow_fast_decompose(DescriptorSystem(np.eye(3), A, np.ones((3, 1))), 10.0)
    assert (sf.n1, sf.n2, sf.index_h) == (3, 0, 0)
    np.testing.assert_allclose(np.sort_complex(eigenvalues(sf.A_s)), np.sort_complex(eigenvalues(A)), atol=1e-10)


def test_circuit_split(circuit):
    sf = slow_fast_decompose(circuit, 0.5)
    assert (sf.n1, sf.n2, sf.index_h) == (2, 2, 1)
    np.testing.assert_allclose(np.sort_complex(eigenvalues(sf.A_s)),
                               np.sort_complex([-0.5 - 0.8660254037844386j, -0.5 + 0.8660254037844386j]),
                               atol=1e-12)


def _check_form(sys, sf, tol=1e-8):
    QEP = sf.Q @ sys.E @ sf.P
    QAP = sf.Q @ sys.A @ sf.P
    assert np.linalg.norm(QEP - sla.block_diag(np.eye(sf.n1), sf.N_f), 2) <= tol
    assert np.linalg.norm(QAP - sla.block_diag(sf.A_s, np.eye(sf.n2)), 2) <= tol
    np.testing.assert_allclose(sf.Q @ sys.B, np.vstack([sf.B_s, sf.B_f]), atol=tol)
    back = sf.reassemble()
    for X, Y in ((back.E, sys.E), (back.A, sys.A), (back.B, sys.B)):
        assert np.linalg.norm(X - Y, 2) <= tol * max(1, np.linalg.norm(Y, 2))


@given(st.integers(0, 10_000))
def test_construct_then_recover(seed):
    cs = random_system(seed)
    sys = cs.system
    sf = slow_fast_decompose(sys, is_regular(sys).shift)
    assert sf.n1 == cs.n1 and sf.n2 == sys.n - cs.n1
    assert sf.index_h == cs.index_h
    _check_form(sys, sf, 1e-7)
    np.testing.assert_allclose(np.sort_complex(eigenvalues(sf.A_s)), np.sort_complex(eigenvalues(cs.A_s)),
                               atol=1e-6)


@given(st.integers(0, 10_000))
def test_two_shifts_give_similar_forms(seed):
    sys = random_system(seed).system
    shifts = [s for s in (0.5, -1.1, 1.7) if np.linalg.cond(sys.pencil(s)) < 1e8][:2]
    if len(shifts) < 2:
        return
    a, b = (slow_fast_decompose(sys, s) for s in shifts)
    assert (a.n1, a.n2, a.index_h) == (b.n1, b.n2, b.index_h)
    np.testing.assert_allclose(np.sort_complex(eigenvalues(a.A_s)), np.sort_complex(eigenvalues(b.A_s)),
                               atol=1e-6)
    spectrum = finite_generalized_eigenvalues(model_D(sys, shifts[0])[0], shifts[0]).values
    np.testing.assert_allclose(np.sort_complex(spectrum), np.sort_complex(eigenvalues(a.A_s)), atol=1e-6)


def test_consistent_state_index_one():
    cs = random_system(2, n=4, m=2, n1=2, nilpotent_blocks=[1, 1])
    sf = slow_fast_decompose(cs.system, 0.5)
    u = np.array([[1.0, -2.0], [0.5, 0.5]])
    x0 = consistent_initial_state(sf, u, [0.3, -0.1])
    z = np.linalg.solve(sf.P, x0)
    np.testing.assert_allclose(z[:2], [0.3, -0.1], atol=1e-12)
    np.testing.assert_allclose(z[2:], -sf.B_f @ u[0], atol=1e-12)


def test_consistent_state_zero_inputs(circuit):
    sf = slow_fast_decompose(circuit, 0.5)
    x0 = consistent_initial_state(sf, np.zeros((3, 1)), [1.0, 2.0])
    np.testing.assert_allclose(x0, sf.P @ np.array([1.0, 2.0, 0, 0]), atol=1e-14)


def test_consistent_state_needs_horizon():
    cs = random_system(3, n=3, m=1, n1=0, nilpotent_blocks=[3])
    sf = slow_fast_decompose(cs.system, 0.5)
    with pytest.raises(InsufficientHorizon):
        consistent_initial_state(sf, np.zeros((2, 1)), [])


def test_simulate_scalar_decay():
    sys = DescriptorSystem([[1.0]], [[0.5]], [[0.0]])
    sf = slow_fast_decompose(sys, 2.0)
    traj = simulate(sys, sf, np.linalg.solve(sf.P, [1.0]), np.zeros((4, 1)))
    np.testing.assert_allclose(traj.states[:, 0], [1, 0.5, 0.25, 0.125, 0.0625])


def test_simulate_zero_everything(circuit):
    sf = slow_fast_decompose(circuit, 0.5)
    traj = simulate(circuit, sf, np.zeros(2), np.zeros((6, 1)))
    assert traj.length == 5 and not np.any(traj.states)


def test_simulate_insufficient_horizon():
    cs = random_system(3, n=3, m=1, n1=0, nilpotent_blocks=[3])
    sf = slow_fast_decompose(cs.system, 0.5)
    with pytest.raises(InsufficientHorizon):
        simulate(cs.system, sf, [], np.zeros((2, 1)))


def test_simulate_circuit_residual(circuit):
    sf = slow_fast_decompose(circuit, 0.5)
    rng = np.random.default_rng(0)
    traj = simulate(circuit, sf, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, (51, 1)))
    assert np.abs(traj.residuals(circuit)).max() <= 1e-10
    # x0 is the consistent state for these inputs
    np.testing.assert_allclose(traj.states[0], consistent_initial_state(sf, traj.inputs, np.linalg.solve(sf.P, traj.states[0])[:2]),
                               atol=1e-12)


@given(st.integers(0, 10_000), st.booleans())
def test_simulate_residual_random(seed, terminal):
    cs = random_system(seed)
    sys = cs.system
    sf = slow_fast_decompose(sys, is_regular(sys).shift)
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1, 1, (20 + sf.index_h, sys.m))
    z = rng.uniform(-1, 1, sf.n2) if terminal else None
    traj = simulate(sys, sf, rng.uniform(-1, 1, sf.n1), u, terminal_fast=z)
    assert traj.length == 20
    assert _rel_residual(traj, sys) <= 1e-10
    if terminal and sf.index_h <= 20:
        # the terminal term leaves x0 alone
        plain = simulate(sys, sf, np.linalg.solve(sf.P, traj.states[0])[:sf.n1], u)
        np.testing.assert_allclose(plain.states[0], traj.states[0], atol=1e-12)


def test_simulate_noise_enters_as_system_noise(circuit):
    sf = slow_fast_decompose(circuit, 0.5)
    rng = np.random.default_rng(1)
    traj = simulate(circuit, sf, rng.uniform(-1, 1, 2), rng.uniform(-1, 1, (31, 1)), noise_scale=0.01, seed=7)
    r = traj.residuals(circuit)
    np.testing.assert_allclose(r, traj.noise, atol=1e-12)
    assert np.abs(r).max() <= 0.01
    assert np.abs(r).max() > 0.001
    again = simulate(circuit, sf, np.linalg.solve(sf.P, traj.states[0])[:2], np.vstack([traj.inputs, [[0.0]]]),
                     noise_scale=0.01, seed=7)
    np.testing.assert_array_equal(again.noise, traj.noise)


def test_with_feedback():
    sys = circuit_system()
    K = np.array([[1.0, 2.0, 3.0, 4.0]])
    cl = sys.with_feedback(K)
    np.testing.assert_array_equal(cl.A, sys.A + sys.B @ K)
    np.testing.assert_array_equal(cl.E, sys.E)
