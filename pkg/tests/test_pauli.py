import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import dense_letters, dense_ring_hamiltonian, dense_sum, random_state
from fvdsim.errors import DimensionError, DomainError, OrderCapError
from fvdsim.model import HamiltonianSpec, build_hamiltonian, neel_bits
from fvdsim.pauli import (
    OperatorSum,
    PauliString,
    commutator,
    expectation,
    multiply,
    nested_commutator,
    nested_commutator_reports,
    neel_reference,
    staggered_magnetization,
    tfim_c2_ratio_integral,
    total_sigma_x,
)
from fvdsim.state import StateVector

words = st.integers(min_value=1, max_value=4).flatmap(
    lambda n: st.tuples(st.text("IXYZ", min_size=n, max_size=n), st.text("IXYZ", min_size=n, max_size=n))
)


def random_sum(n, rng, terms=6):
    letters = ["".join(rng.choice(list("IXYZ"), size=n)) for _ in range(terms)]
    coeffs = rng.normal(size=terms) + 1j * rng.normal(size=terms)
    return OperatorSum.from_terms(n, [PauliString.from_letters(w, c) for w, c in zip(letters, coeffs)])


@settings(max_examples=200, deadline=None)
@given(words)
def test_multiply_matches_dense_product(pair):
    a, b = pair
    prod = multiply(PauliString.from_letters(a), PauliString.from_letters(b))
    expected = dense_letters(a) @ dense_letters(b)
    assert np.allclose(prod.coefficient * dense_letters(prod.letters), expected, atol=1e-14)


def test_single_site_products():
    x = PauliString.from_letters("X")
    y = PauliString.from_letters("Y")
    p = multiply(x, y)
    assert p.letters == "Z" and p.coefficient == 1j
    p = multiply(y, x)
    assert p.letters == "Z" and p.coefficient == -1j


def test_multiply_size_mismatch():
    with pytest.raises(DimensionError):
        multiply(PauliString.from_letters("XX"), PauliString.from_letters("XXX"))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_commutator_matches_dense(n, rng):
    for _ in range(5):
        a, b = random_sum(n, rng), random_sum(n, rng)
        da, db = dense_sum(a), dense_sum(b)
        assert np.allclose(dense_sum(commutator(a, b)), da @ db - db @ da, atol=1e-12)
        assert np.allclose(dense_sum(a @ b), da @ db, atol=1e-12)


def test_merging_cancels_terms():
    a = OperatorSum.single(3, 1, "X", 2.0)
    assert (a - a).is_zero()
    assert len(a + a) == 1 and (a + a).coefficient("IXI") == 4.0


def test_number_operator_is_projector():
    n = OperatorSum.number(2, 0)
    d = dense_sum(n)
    assert np.allclose(d @ d, d)
    assert np.allclose(np.diag(d).real, [0, 1, 0, 1])


def test_staggered_magnetization_commutes_with_diagonal_terms():
    spec = HamiltonianSpec(6, 0.0, 4.0, 0.5, 6.0)
    h = build_hamiltonian(spec)
    assert commutator(h, staggered_magnetization(6)).is_zero()
    total_number = sum((OperatorSum.number(6, s) for s in range(6)), OperatorSum.zero(6))
    assert commutator(total_number, staggered_magnetization(6)).is_zero()


@pytest.mark.parametrize("interaction", ["nearest_neighbor", "power_law6"])
def test_first_commutator_matches_dense(interaction):
    spec = HamiltonianSpec(4, 1.3, 2.0, 0.7, 5.0, interaction)
    h = build_hamiltonian(spec, angular=False)
    m = staggered_magnetization(4)
    dh, dm = dense_ring_hamiltonian(spec, angular=False), dense_sum(m)
    assert np.allclose(dense_sum(h), dh, atol=1e-12)
    c1 = nested_commutator(h, m, 1)
    assert np.allclose(dense_sum(c1), dh @ dm - dm @ dh, atol=1e-12)
    # only the drive fails to commute with M: [sum Omega/2 X, M] = -i Omega/N sum eps Y
    expected = OperatorSum(4, [1 << s for s in range(4)], [1 << s for s in range(4)],
                           [-1j * spec.omega / 4 * (1 if s % 2 else -1) for s in range(4)])
    assert c1.allclose(expected)


def test_expectation_matches_dense(rng):
    for n in (2, 3, 5):
        op = random_sum(n, rng, terms=20)
        psi = random_state(n, seed=n)
        v = psi.amplitudes
        assert expectation(op, psi) == pytest.approx(np.vdot(v, dense_sum(op) @ v), abs=1e-12)


@pytest.mark.parametrize("interaction", ["nearest_neighbor", "power_law6"])
def test_second_order_on_neel_is_omega_squared(interaction):
    spec = HamiltonianSpec(8, 1.7, 3.1, 0.4, 6.0, interaction)
    h = build_hamiltonian(spec, angular=False)
    neel = StateVector.basis(8, neel_bits(8))
    c2 = nested_commutator(h, staggered_magnetization(8), 2)
    assert expectation(c2, neel).real == pytest.approx(spec.omega**2, abs=1e-12)


def test_odd_orders_vanish_on_real_states():
    spec = HamiltonianSpec(6, 1.7, 3.1, 0.4, 6.0)
    h = build_hamiltonian(spec, angular=False)
    rng = np.random.default_rng(3)
    real = StateVector(6, rng.normal(size=64) / 8).normalized()
    reports = nested_commutator_reports(h, staggered_magnetization(6), 3, real)
    assert abs(reports[1].expectation_neel) < 1e-12
    assert abs(reports[3].expectation_neel) < 1e-9


def test_fourth_order_closed_form_nearest_neighbor():
    omega, dg, v = 1.3, 2.2, 5.0
    spec = HamiltonianSpec(8, omega, dg, 0.0, v, "nearest_neighbor")
    h = build_hamiltonian(spec, angular=False)
    c4 = nested_commutator(h, staggered_magnetization(8), 4)
    value = expectation(c4, StateVector.basis(8, neel_bits(8))).real
    ref = neel_reference(4, omega, dg, v, 0.0, True)
    assert ref == pytest.approx(omega**2 * (2 * v**2 - 2 * dg * v + omega**2 + dg**2))
    assert value == pytest.approx(ref, abs=1e-8)


def test_reference_unknown_cases_return_none():
    assert neel_reference(4, 1.0, 1.0, 1.0, 0.1, True) is None
    assert neel_reference(4, 1.0, 1.0, 1.0, 0.0, False) is None
    assert neel_reference(6, 1.0, 1.0, 1.0, 0.0, True) is None


def test_order_cap():
    m = staggered_magnetization(4)
    with pytest.raises(OrderCapError):
        nested_commutator(total_sigma_x(4), m, 7)
    with pytest.raises(OrderCapError):
        nested_commutator(total_sigma_x(4), m, 3, max_order=2)


@pytest.mark.parametrize("w", [0.02, 0.1, 0.25, 0.4])
def test_ratio_integral_matches_trapezoid(w):
    k = np.linspace(0.0, np.pi, 1_000_001)
    f = (2 * w - np.cos(k)) / np.sqrt(4 * w * w + 1 - 4 * w * np.cos(k))
    assert tfim_c2_ratio_integral(w) == pytest.approx(np.trapezoid(f, k) / np.pi, abs=1e-10)


def test_ratio_integral_small_field_limit():
    # the second-order terms are odd in cos k and integrate to zero, so I(w) = w + O(w^3)
    for w in (1e-3, 1e-2):
        assert abs(tfim_c2_ratio_integral(w) - w) < 5 * w**3


@pytest.mark.parametrize("w", [0.0, -0.1, 0.5, 0.7])
def test_ratio_integral_domain(w):
    with pytest.raises(DomainError):
        tfim_c2_ratio_integral(w)
