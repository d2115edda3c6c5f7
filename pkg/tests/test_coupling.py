import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cdweak.coupling import (
    CouplingSetup,
    GridPointer,
    QubitPointer,
    conditional_average,
    gaussian_wavefunction,
    joint_expectation,
    joint_state,
    pointer_moments,
    pointer_states,
    postselection_probability,
    qubit_projector_setup,
    weak_limit_estimate,
    weak_value,
    weak_value_numerator,
)
from cdweak.errors import (
    DegeneratePointer,
    DimensionMismatch,
    GridOverflow,
    OrthogonalPostselection,
)
from cdweak.qcore import KET0, KET1, KET_MINUS, KET_PLUS, SX, SY, SZ, projector
import oracles

seeds = st.integers(0, 2**32 - 1)
P0 = np.diag([1.0, 0.0]).astype(complex)


def small_grid(delta=1.0):
    # smallest grid the validation accepts: L = 10 delta, dq = delta * 20 / 256
    return GridPointer(delta, 256, extent=10 * delta)


# -- pointer states ---------------------------------------------------------


def test_qubit_family_matches_rotation():
    g = 0.83
    fam = pointer_states(qubit_projector_setup(g))
    assert np.allclose(fam[0], KET0)
    assert np.allclose(fam[1], np.cos(g) * KET0 - 1j * np.sin(g) * KET1, atol=1e-15)


def test_zero_strength_family_is_constant():
    A = oracles.random_spectrum_observable(3, np.random.default_rng(2))
    setup = CouplingSetup(0.0, A, small_grid(), np.eye(3) / 3, np.ones(3) / np.sqrt(3))
    fam = pointer_states(setup)
    assert np.max(np.abs(fam.states - fam.states[:, :1])) < 1e-15


def test_gaussian_overlap():
    g, delta = 0.5, 1.0
    setup = qubit_projector_setup(g, pointer=GridPointer(delta))
    fam = pointer_states(setup)
    assert np.vdot(fam[0], fam[1]) == pytest.approx(np.exp(-g**2 / (8 * delta**2)), abs=1e-12)


@given(st.floats(-1, 1), st.floats(0.5, 2.0))
def test_grid_translation_is_unitary_and_exact(shift, delta):
    ptr = GridPointer(delta)
    moved = ptr.translate(ptr.phi0, shift * delta)
    assert np.linalg.norm(moved) == pytest.approx(1, abs=1e-10)
    assert np.max(np.abs(ptr.translate(moved, -shift * delta) - ptr.phi0)) < 1e-13
    # against the analytic packet; the periodic image of the tail (~e^{-81/4}) is the only difference
    expected = gaussian_wavefunction(ptr.q, delta, center=shift * delta)
    expected /= np.linalg.norm(expected)
    assert np.max(np.abs(moved - expected)) < 1e-8


def test_grid_translation_matches_dense_exponential():
    ptr = small_grid()
    u = oracles.expm_taylor(ptr.momentum.matrix, 0.7)
    assert np.max(np.abs(u @ ptr.phi0 - ptr.translate(ptr.phi0, 0.7))) < 1e-10


def test_grid_overflow():
    ptr = GridPointer(1.0)  # half-width 10
    setup = CouplingSetup(4.5, P0, ptr, np.eye(2) / 2, KET_PLUS)
    with pytest.raises(GridOverflow):
        pointer_states(setup)


@pytest.mark.parametrize("kwargs", [
    dict(delta=1.0, points=1000),
    dict(delta=1.0, points=1024, extent=5.0),
    dict(delta=1.0, points=64),
    dict(delta=0.0),
])
def test_grid_validation(kwargs):
    with pytest.raises(ValueError):
        GridPointer(**kwargs)


def test_for_strength_widens_grid():
    ptr = GridPointer.for_strength(1.0, g=9.0, max_abs_a=1.0, points=2048)
    assert ptr.extent == pytest.approx(15.0)


# -- joint state and expectations ---------------------------------------------


def test_joint_state_at_zero_strength():
    rho = oracles.random_state(2, np.random.default_rng(4))
    setup = qubit_projector_setup(0.0, rho_in=rho)
    assert np.allclose(joint_state(setup), np.kron(rho, projector(KET0)), atol=1e-15)


def test_joint_state_matches_product_space_exponential():
    setup = qubit_projector_setup(1.1)
    expected = oracles.joint_state(P0, SX, setup.rho_in, KET0, 1.1)
    assert np.max(np.abs(joint_state(setup) - expected)) < 1e-12


def test_maximally_mixed_reduced_pointer():
    rng = np.random.default_rng(8)
    A = oracles.random_spectrum_observable(3, rng)
    ptr = small_grid()
    setup = CouplingSetup(0.6, A, ptr, np.eye(3) / 3, oracles.random_ket(3, rng))
    joint = joint_state(setup).reshape(3, ptr.dim, 3, ptr.dim)
    reduced = np.einsum("iaib->ab", joint)
    fam = pointer_states(setup)
    expected = sum(np.outer(fam[m], fam[m].conj()) for m in range(1, 4)) / 3
    assert np.max(np.abs(reduced - expected)) < 1e-12


def test_identity_observable_gives_postselection_probability():
    setup = qubit_projector_setup(0.9)
    assert joint_expectation(setup, np.eye(2)) == pytest.approx(postselection_probability(setup))


def test_postselection_probability_at_zero_strength():
    setup = qubit_projector_setup(0.0)
    assert postselection_probability(setup) == pytest.approx(
        np.real(KET_PLUS @ setup.rho_in @ KET_PLUS), abs=1e-14)


def test_full_postselection_is_certain():
    setup = CouplingSetup(0.8, np.zeros((1, 1)), QubitPointer(), [[1.0]], [1.0])
    assert postselection_probability(setup) == pytest.approx(1)


def test_orthogonal_postselection_becomes_possible():
    setup = qubit_projector_setup(0.7, rho_in=projector(KET_PLUS), psi_f=KET_MINUS)
    assert postselection_probability(setup) > 1e-3


def test_projector_fixture_sigma_y_against_oracle():
    g = np.pi / 2
    setup = qubit_projector_setup(g)
    expected = oracles.joint_expectation(P0, SX, setup.rho_in, KET0, KET_PLUS, SY, g)
    assert joint_expectation(setup, SY) == pytest.approx(expected.real, abs=1e-12)
    # rearranged closed form: <Pi_f (x) sigma_y> = -2 sin g Re T + tan(g/2) <Pi_f (x) (I - sigma_z)>
    t = weak_value_numerator(P0, setup.rho_in, KET_PLUS)
    corr = joint_expectation(setup, np.eye(2) - SZ)
    assert joint_expectation(setup, SY) == pytest.approx(-2 * np.sin(g) * t.real + np.tan(g / 2) * corr,
                                                         abs=1e-12)


def test_small_strength_matches_first_order():
    g = 1e-8
    setup = qubit_projector_setup(g)
    t = weak_value_numerator(P0, setup.rho_in, KET_PLUS)
    assert joint_expectation(setup, SY) == pytest.approx(-2 * g * t.real, rel=1e-6)
    assert joint_expectation(setup, SX) == pytest.approx(2 * g * t.imag, rel=1e-6)


def test_observable_dimension_checked():
    with pytest.raises(DimensionMismatch):
        joint_expectation(qubit_projector_setup(0.3), np.eye(3))


def _random_setup(rng, d, pointer, g):
    A = oracles.random_spectrum_observable(d, rng)
    if rng.random() < 0.5:  # give A a kernel half of the time
        w, v = np.linalg.eigh(A)
        w[rng.integers(d)] = 0.0
        A = (v * w) @ v.conj().T
    return CouplingSetup(g, A, pointer, oracles.random_state(d, rng), oracles.random_ket(d, rng))


@given(seeds, st.integers(1, 4), st.sampled_from(["qubit", "grid"]), st.floats(0.05, 1.6))
def test_qsum_agrees_with_direct_trace(seed, d, kind, g):
    rng = np.random.default_rng(seed)
    ptr = QubitPointer(oracles.random_ket(2, rng)) if kind == "qubit" else small_grid()
    setup = _random_setup(rng, d, ptr, g)
    s = oracles.random_hermitian(ptr.dim, rng)
    direct = joint_expectation(setup, s)
    assert joint_expectation(setup, s, method="qsum") == pytest.approx(direct, abs=1e-9)


@given(seeds, st.integers(1, 3), st.floats(0.05, 1.6))
def test_direct_trace_matches_product_space_oracle(seed, d, g):
    rng = np.random.default_rng(seed)
    setup = _random_setup(rng, d, QubitPointer(), g)
    s = oracles.random_hermitian(2, rng)
    expected = oracles.joint_expectation(setup.A.matrix, SX, setup.rho_in, KET0, setup.psi_f, s, g)
    assert joint_expectation(setup, s) == pytest.approx(expected.real, abs=1e-10)


@given(seeds, st.integers(2, 4), st.floats(0.05, 1.6))
def test_null_branch_reference_is_irrelevant(seed, d, g):
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.5, 2, size=d)
    w[0] = 0.0
    q, _ = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    A = (q * w) @ q.conj().T
    psi_in = oracles.random_ket(d, rng)
    setup = CouplingSetup(g, A, QubitPointer(), projector(psi_in), oracles.random_ket(d, rng))
    s = oracles.random_hermitian(2, rng)
    a = joint_expectation(setup, s, method="qsum", null_reference="input")
    b = joint_expectation(setup, s, method="qsum", null_reference="postselection")
    assert a == pytest.approx(b, abs=1e-10)


@given(seeds, st.floats(0.05, 1.6))
def test_conditional_average_identity(seed, g):
    rng = np.random.default_rng(seed)
    setup = _random_setup(rng, 3, QubitPointer(), g)
    s = oracles.random_hermitian(2, rng)
    p = postselection_probability(setup)
    assert conditional_average(setup, s) * p == pytest.approx(joint_expectation(setup, s), abs=1e-10)


def test_grid_family_states_are_normalized():
    rng = np.random.default_rng(0)
    setup = _random_setup(rng, 4, GridPointer(1.0), 1.0)
    norms = np.linalg.norm(pointer_states(setup).states, axis=0)
    assert np.max(np.abs(norms - 1)) < 1e-10


# -- weak values ----------------------------------------------------------------


def test_eigenstate_weak_value():
    A = np.diag([2.5, -1.0])
    assert weak_value(A, projector(KET0), KET0) == pytest.approx(2.5)


@given(st.floats(-1.5, 1.5).filter(lambda t: abs(np.cos(t) + np.sin(t)) > 0.1))
def test_sigma_z_weak_value(theta):
    psi_f = np.array([np.cos(theta), np.sin(theta)])
    expected = (np.cos(theta) - np.sin(theta)) / (np.cos(theta) + np.sin(theta))
    assert weak_value(SZ, projector(KET_PLUS), psi_f) == pytest.approx(expected, abs=1e-10)


def test_orthogonal_postselection_raises():
    with pytest.raises(OrthogonalPostselection):
        weak_value(SZ, projector(KET_PLUS), KET_MINUS)


# -- weak-limit estimator ---------------------------------------------------------


def test_qubit_estimator_reduces_to_pauli_formula():
    setup = qubit_projector_setup(0.3)
    ey, ex = 0.123, -0.045
    est = weak_limit_estimate(setup, ey, ex)
    assert est == pytest.approx(complex(-ey / (2 * 0.3), ex / (2 * 0.3)), abs=1e-15)
    assert weak_limit_estimate(setup, 0.0, 0.0) == 0


def test_degenerate_pointer():
    # sigma_z pointer state |+>: <[sigma_y, sigma_x]> = -2i <sigma_z> = 0
    setup = qubit_projector_setup(0.3, pointer=QubitPointer(KET_PLUS))
    with pytest.raises(DegeneratePointer):
        weak_limit_estimate(setup, 0.1, 0.1)


def _estimator_error(setup):
    ptr = setup.pointer
    est = weak_limit_estimate(setup, joint_expectation(setup, ptr.position),
                              joint_expectation(setup, ptr.momentum))
    return abs(est - weak_value_numerator(setup.A, setup.rho_in, setup.psi_f))


def test_symmetric_pointer_bias_is_second_order():
    # with the |0> qubit pointer the first-order bias cancels: halving g quarters the error
    e1 = _estimator_error(qubit_projector_setup(0.02))
    e2 = _estimator_error(qubit_projector_setup(0.04))
    assert e1 / e2 == pytest.approx(0.25, abs=0.01)


def test_moments_of_gaussian_pointer():
    mom = pointer_moments(GridPointer(0.5))
    assert mom["qp_commutator"] == pytest.approx(1j, abs=1e-10)
    assert mom["pp_anticommutator"] == pytest.approx(2 / (4 * 0.25), abs=1e-10)
    assert abs(mom["q"]) < 1e-12 and abs(mom["p"]) < 1e-12
