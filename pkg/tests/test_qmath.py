import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import assert_within_sigmas, binomial_sigma
from subspace_qkd.qmath import (
    X0,
    X1,
    Z0,
    Z1,
    BellDistribution,
    LocalBasis,
    TwoQubitState,
    Unitary2,
    bell_decompose,
    collective_apply,
    measure_pair,
    measure_pairs_batch,
    outcome_probabilities_batch,
    prepare_code,
    single_qubit_unitary,
)

angles = st.floats(-10.0, 10.0, allow_nan=False)
R = 1 / math.sqrt(2)
PSI_PLUS = TwoQubitState([0, R, R, 0])
PSI_MINUS = TwoQubitState([0, R, -R, 0])


def random_state(rng):
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    return TwoQubitState(v / np.linalg.norm(v))


# -- single_qubit_unitary ----------------------------------------------------

def test_zero_theta_is_identity():
    np.testing.assert_array_equal(single_qubit_unitary(0, 1.7, 0).m, np.eye(2))


def test_quarter_turn_maps_basis():
    m = single_qubit_unitary(math.pi / 2, 0, 0).m
    np.testing.assert_allclose(m @ [1, 0], [0, 1], atol=1e-15)
    np.testing.assert_allclose(m @ [0, 1], [-1, 0], atol=1e-15)


def test_columns_match_definition():
    theta, phi, delta = 0.4, 1.1, -0.3
    m = single_qubit_unitary(theta, phi, delta).m
    u0 = [math.cos(theta), np.exp(1j * phi) * math.sin(theta)]
    u1 = np.exp(1j * delta) * np.array([-np.exp(-1j * phi) * math.sin(theta), math.cos(theta)])
    np.testing.assert_allclose(m[:, 0], u0, atol=1e-15)
    np.testing.assert_allclose(m[:, 1], u1, atol=1e-15)


def test_unitarity_example():
    m = single_qubit_unitary(math.pi / 6, 1.2, 0.7).m
    assert np.max(np.abs(m.conj().T @ m - np.eye(2))) < 1e-12


def test_unitarity_many_random(rng):
    params = rng.uniform(-2 * math.pi, 2 * math.pi, size=(10_000, 3))
    for theta, phi, delta in params:
        m = single_qubit_unitary(theta, phi, delta).m
        assert np.max(np.abs(m.conj().T @ m - np.eye(2))) < 1e-12


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        single_qubit_unitary(bad, 0, 0)
    with pytest.raises(ValueError):
        single_qubit_unitary(0, 0, bad)


def test_unitary2_validates():
    with pytest.raises(ValueError):
        Unitary2([[1, 1], [0, 1]])


# -- collective_apply --------------------------------------------------------

def test_identity_leaves_state_unchanged(rng):
    s = random_state(rng)
    assert collective_apply(single_qubit_unitary(0, 0, 0), s) == s


def test_rotated_01_amplitudes():
    # Hand expansion of U|0> (x) U|1> at theta = pi/6, phi = delta = 0:
    # U|0> = (c, s), U|1> = (-s, c)  ->  (-cs, c^2, -s^2, sc).
    out = collective_apply(single_qubit_unitary(math.pi / 6, 0, 0), prepare_code(Z0))
    q = math.sqrt(3) / 4
    np.testing.assert_allclose(out.amp, [-q, 0.75, -0.25, q], atol=1e-12)
    # Magnitudes as printed in the two-qubit expansion of the rotated |01>.
    np.testing.assert_allclose(np.abs(out.amp), [q, 0.75, 0.25, q], atol=1e-12)


def test_collective_apply_matches_kron(rng):
    for _ in range(50):
        theta, phi, delta = rng.uniform(-4, 4, 3)
        u = single_qubit_unitary(theta, phi, delta)
        s = random_state(rng)
        np.testing.assert_allclose(collective_apply(u, s).amp, np.kron(u.m, u.m) @ s.amp, atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(angles, angles, angles)
def test_singlet_picks_up_determinant(theta, phi, delta):
    u = single_qubit_unitary(theta, phi, delta)
    out = collective_apply(u, PSI_MINUS)
    np.testing.assert_allclose(out.amp, u.det * PSI_MINUS.amp, atol=1e-9)
    assert abs(u.det - np.exp(1j * delta)) < 1e-12
    assert abs(out.fidelity(PSI_MINUS) - 1) < 1e-12


@settings(max_examples=200, deadline=None)
@given(angles, angles, angles, st.integers(0, 2**32 - 1))
def test_norm_preserved(theta, phi, delta, seed):
    s = random_state(np.random.default_rng(seed))
    out = collective_apply(single_qubit_unitary(theta, phi, delta), s)
    assert abs(np.sum(np.abs(out.amp) ** 2) - 1) < 1e-9


@settings(max_examples=200, deadline=None)
@given(angles, angles, angles)
def test_no_psi_plus_to_psi_minus_leakage(theta, phi, delta):
    out = collective_apply(single_qubit_unitary(theta, phi, delta), PSI_PLUS)
    assert abs(np.vdot(PSI_MINUS.amp, out.amp)) < 1e-9


# -- bell_decompose ----------------------------------------------------------

def test_bell_of_psi_plus():
    assert bell_decompose(PSI_PLUS).as_tuple() == pytest.approx((1, 0, 0, 0), abs=1e-15)


def test_bell_of_01():
    assert bell_decompose(prepare_code(Z0)).as_tuple() == pytest.approx((0.5, 0.5, 0, 0), abs=1e-15)


def test_rotated_psi_plus_has_no_singlet_weight():
    out = collective_apply(single_qubit_unitary(math.pi / 6, 0.9, 0.4), PSI_PLUS)
    assert bell_decompose(out).p_psi_minus < 1e-12


def test_bell_sums_to_one(rng):
    for _ in range(100):
        assert sum(bell_decompose(random_state(rng)).as_tuple()) == pytest.approx(1, abs=1e-9)


@pytest.mark.parametrize("label, expected", [
    (Z0, (0.5, 0.5, 0, 0)), (Z1, (0.5, 0.5, 0, 0)), (X0, (1, 0, 0, 0)), (X1, (0, 1, 0, 0)),
])
def test_prepare_then_decompose(label, expected):
    assert bell_decompose(prepare_code(label)).as_tuple() == pytest.approx(expected, abs=1e-15)


# -- prepare_code ------------------------------------------------------------

def test_prepare_code_amplitudes():
    np.testing.assert_array_equal(prepare_code(Z0).amp, [0, 1, 0, 0])
    np.testing.assert_array_equal(prepare_code(Z1).amp, [0, 0, 1, 0])
    np.testing.assert_allclose(prepare_code(X1).amp, [0, R, -R, 0], atol=1e-16)


def test_state_validation():
    with pytest.raises(ValueError):
        TwoQubitState([1, 1, 0, 0])
    with pytest.raises(ValueError):
        TwoQubitState([1, 0, 0])


def test_state_is_immutable():
    s = prepare_code(Z0)
    with pytest.raises(ValueError):
        s.amp[0] = 1


# -- measure_pair ------------------------------------------------------------

def test_01_in_z_is_deterministic(rng):
    for u in rng.random(200):
        m = measure_pair(prepare_code(Z0), LocalBasis.Z, u)
        assert (m.bit1, m.bit2) == (0, 1)


def test_psi_plus_in_x_is_correlated(rng):
    outs = {(m.bit1, m.bit2) for m in (measure_pair(PSI_PLUS, LocalBasis.X, u) for u in rng.random(500))}
    assert outs == {(0, 0), (1, 1)}


def test_psi_minus_in_y_is_anticorrelated(rng):
    for u in rng.random(500):
        assert not measure_pair(PSI_MINUS, LocalBasis.Y, u).equal


def test_y_eigenvectors():
    # |y+ y+> = (|0> + i|1>)^{(x)2} / 2 must read (0, 0) with certainty.
    yp = np.array([1, 1j]) / math.sqrt(2)
    s = TwoQubitState(np.kron(yp, yp))
    np.testing.assert_allclose(outcome_probabilities_batch(s.amp[None], LocalBasis.Y)[0], [1, 0, 0, 0], atol=1e-15)


def test_fixed_outcome_order():
    # Uniform superposition of |00>..|11>: quartiles map to outcomes in order.
    s = TwoQubitState([0.5, 0.5, 0.5, 0.5])
    got = [(m.bit1, m.bit2) for m in (measure_pair(s, LocalBasis.Z, u) for u in (0.1, 0.3, 0.6, 0.9))]
    assert got == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_randomness_range():
    with pytest.raises(ValueError):
        measure_pair(PSI_PLUS, LocalBasis.Z, 1.0)


@pytest.mark.parametrize("basis", list(LocalBasis))
def test_born_frequencies(basis):
    rng = np.random.default_rng(int(basis) + 99)
    s = random_state(rng)
    n = 100_000
    b1, b2 = measure_pairs_batch(np.repeat(s.amp[None], n, axis=0), basis, rng.random(n))
    freq = np.bincount(2 * b1 + b2, minlength=4) / n
    # Independent oracle: project onto explicit product eigenvectors.
    vecs = {
        LocalBasis.Z: [np.array([1, 0]), np.array([0, 1])],
        LocalBasis.X: [np.array([1, 1]) / math.sqrt(2), np.array([1, -1]) / math.sqrt(2)],
        LocalBasis.Y: [np.array([1, 1j]) / math.sqrt(2), np.array([1, -1j]) / math.sqrt(2)],
    }[basis]
    expected = [abs(np.vdot(np.kron(vecs[i], vecs[j]), s.amp)) ** 2 for i in (0, 1) for j in (0, 1)]
    for f, p in zip(freq, expected):
        assert_within_sigmas(f, p, binomial_sigma(p, n))


def test_batch_matches_scalar(rng):
    states = np.array([random_state(rng).amp for _ in range(300)])
    bases = rng.integers(0, 3, 300)
    u = rng.random(300)
    b1, b2 = measure_pairs_batch(states, bases, u)
    for k in range(300):
        m = measure_pair(TwoQubitState(states[k]), LocalBasis(int(bases[k])), float(u[k]))
        assert (m.bit1, m.bit2) == (b1[k], b2[k])


def test_bell_distribution_type():
    d = BellDistribution(0.1, 0.2, 0.3, 0.4)
    assert d.as_tuple() == (0.1, 0.2, 0.3, 0.4)
