import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.linalg import expm

from conftest import dense_ring_hamiltonian, dense_sum, random_state
from fvdsim.engine import (
    NoiseModel,
    PqgMethod,
    RingHamiltonian,
    Stepper,
    compile_operator,
    evolve,
    exact_pqg,
    expm_multiply,
    ground_state,
    lanczos_lowest,
    lindblad_evolve,
    liouvillian_reference,
    lowest_states,
    prepare_pqg,
    staggered_diagonal,
)
from fvdsim.errors import ArgumentError, EnumerationCapError, FvdError
from fvdsim.model import BitConfig, HamiltonianSpec, build_hamiltonian, neel_bits, neel_prime_bits
from fvdsim.observables import m_afm, sx_total
from fvdsim.schedule import Constant, LinearRamp, Schedule, Segment, SqrtRamp
from fvdsim.state import StateVector, load_states, save_states

specs = st.builds(
    HamiltonianSpec,
    n_sites=st.sampled_from([4, 6]),
    omega=st.floats(0.1, 3.0),
    delta_g=st.floats(-5.0, 8.0),
    delta_l=st.floats(-2.0, 2.0),
    v_nn=st.floats(1.0, 12.0),
    interaction=st.sampled_from(["nearest_neighbor", "power_law6"]),
)


def neel_state(n):
    return StateVector.basis(n, neel_bits(n))


def test_compiled_and_ring_operators_agree():
    spec = HamiltonianSpec(6, 1.3, 2.0, 0.4, 5.0)
    dense = dense_ring_hamiltonian(spec)
    ring = RingHamiltonian(spec).operator(spec.omega, spec.delta_g, spec.delta_l)
    compiled = compile_operator(build_hamiltonian(spec))
    assert np.allclose(ring.to_dense(), dense, atol=1e-11)
    psi = random_state(6).amplitudes
    assert np.allclose(compiled.apply(psi), dense @ psi, atol=1e-11)
    assert np.allclose(ring.apply(psi), dense @ psi, atol=1e-11)


@settings(max_examples=25, deadline=None)
@given(specs, st.floats(0.01, 1.5))
def test_krylov_matches_dense_exponential(spec, tau):
    dense = dense_ring_hamiltonian(spec)
    op = RingHamiltonian(spec).operator(spec.omega, spec.delta_g, spec.delta_l)
    v = random_state(spec.n_sites, seed=7).amplitudes
    out, _ = expm_multiply(op.apply, v, tau)
    exact = expm(-1j * tau * dense) @ v
    assert abs(np.vdot(exact, out)) ** 2 > 1 - 1e-9
    assert np.linalg.norm(out - exact) < 1e-7


@settings(max_examples=15, deadline=None)
@given(specs, st.floats(0.05, 1.0))
def test_constant_evolution_matches_dense(spec, t):
    psi0 = neel_state(spec.n_sites)
    times = np.linspace(0.0, t, 5)
    res = evolve(psi0, Schedule.constant(spec, t), times)
    dense = dense_ring_hamiltonian(spec)
    for ti, state in zip(times, res.states):
        exact = expm(-1j * ti * dense) @ psi0.amplitudes
        assert state.fidelity(StateVector(spec.n_sites, exact)) > 1 - 1e-9


def test_krylov_path_used_above_dense_cutoff():
    # dim 256 > 64 switches to Arnoldi propagation
    spec = HamiltonianSpec(8, 1.8, 4.8, 0.48, 6.0)
    dense = dense_ring_hamiltonian(spec)
    psi0 = neel_state(8)
    res = evolve(psi0, Schedule.constant(spec, 0.7), [0.7])
    exact = expm(-0.7j * dense) @ psi0.amplitudes
    assert res.final_state().fidelity(StateVector(8, exact)) > 1 - 1e-9


def test_norm_and_energy_conservation():
    spec = HamiltonianSpec(10, 1.8, 4.8, 0.48, 6.0)
    psi0 = neel_state(10)
    op = RingHamiltonian(spec).operator(spec.omega, spec.delta_g, spec.delta_l)
    e0 = np.vdot(psi0.amplitudes, op.apply(psi0.amplitudes)).real
    res = evolve(psi0, Schedule.constant(spec, 2.0), np.linspace(0, 2.0, 11))
    for s in res.states:
        assert abs(s.norm() - 1) < 1e-8
        e = np.vdot(s.amplitudes, op.apply(s.amplitudes)).real
        assert abs(e - e0) < 1e-8 * abs(e0)


def test_time_reversal_returns_initial_state():
    spec = HamiltonianSpec(8, 1.5, 3.0, 0.5, 6.0)
    psi0 = random_state(8, seed=2)
    sched = Schedule.constant(spec, 0.8)
    fwd = evolve(psi0, sched, [0.8]).final_state()
    back = evolve(fwd, sched, [0.8], backward=True).final_state()
    assert back.fidelity(psi0) > 1 - 1e-9


def ramp_reference(spec, schedule, psi0, t_end):
    """Dense ODE solution of i d/dt psi = H(t) psi."""
    ham = RingHamiltonian(spec)

    def rhs(t, y):
        omega, dg, dl = schedule.controls(t)
        return -1j * ham.operator(omega, dg, dl).apply(y)

    sol = solve_ivp(rhs, (0, t_end), psi0.amplitudes, method="DOP853", rtol=1e-12, atol=1e-12)
    return StateVector(spec.n_sites, sol.y[:, -1])


@pytest.mark.parametrize("stepper,tol", [(Stepper.MAGNUS4, 1e-8), (Stepper.MIDPOINT, 1e-6)])
def test_ramp_matches_ode_reference(stepper, tol):
    spec = HamiltonianSpec(6, 2.0, 5.0, 1.0, 8.0)
    schedule = Schedule(spec, (Segment(0.6, SqrtRamp(0.0, 2.0), LinearRamp(2.0, 5.0), Constant(1.0)),))
    psi0 = neel_state(6)
    ours = evolve(psi0, schedule, [0.6], stepper=stepper).final_state()
    assert 1 - ours.fidelity(ramp_reference(spec, schedule, psi0, 0.6)) < tol


def test_multi_segment_schedule_is_continuous():
    spec = HamiltonianSpec(6, 1.0, 3.0, 0.5, 6.0)
    a = Schedule.constant(spec, 0.3)
    b = Schedule(spec, (Segment(0.3, LinearRamp(1.0, 2.0), 3.0, 0.5),))
    both = a.then(b)
    psi0 = neel_state(6)
    mid = evolve(psi0, a, [0.3]).final_state()
    two_step = evolve(mid, b, [0.3]).final_state()
    one_go = evolve(psi0, both, [0.0, 0.3, 0.6])
    assert one_go.final_state().fidelity(two_step) > 1 - 1e-10


def test_sample_time_validation():
    spec = HamiltonianSpec(4, 1.0, 1.0, 0.1, 2.0)
    with pytest.raises(ArgumentError):
        evolve(neel_state(4), Schedule.constant(spec, 1.0), [0.5, 0.2])
    with pytest.raises(ArgumentError):
        evolve(neel_state(4), Schedule.constant(spec, 1.0), [1.5])
    with pytest.raises(ArgumentError):
        evolve(neel_state(4), Schedule.constant(spec, 1.0), [0.5], trajectories=3)


def test_lanczos_matches_dense_eigensolver():
    spec = HamiltonianSpec(8, 2.0, 6.0, 0.3, 6.0)
    dense = dense_ring_hamiltonian(spec)
    op = RingHamiltonian(spec).operator(spec.omega, spec.delta_g, spec.delta_l)
    evals, evecs, residuals = lanczos_lowest(op.apply, np.ones(256, dtype=complex), 3)
    ref = np.linalg.eigvalsh(dense)[:3]
    assert np.allclose(evals, ref, atol=1e-8)
    assert np.all(residuals < 1e-6)
    e, gs = ground_state(compile_operator(build_hamiltonian(spec)))
    assert e == pytest.approx(ref[0], abs=1e-8)
    assert np.linalg.norm(dense @ gs.amplitudes - e * gs.amplitudes) < 1e-7


@pytest.mark.parametrize("dl,expected", [(0.5, "prime"), (-0.5, "neel")])
def test_classical_ground_state_is_true_vacuum(dl, expected):
    spec = HamiltonianSpec(8, 0.0, 6.0, dl, 6.0, "nearest_neighbor")
    _, gs = ground_state(compile_operator(build_hamiltonian(spec)))
    bits = neel_prime_bits(8) if expected == "prime" else neel_bits(8)
    assert gs.fidelity(StateVector.basis(8, bits)) == pytest.approx(1.0)


def test_seed_breaks_classical_degeneracy():
    spec = HamiltonianSpec(8, 0.0, 6.0, 0.0, 6.0, "nearest_neighbor")
    op = compile_operator(build_hamiltonian(spec))
    for bits in (neel_bits(8), neel_prime_bits(8)):
        _, gs = ground_state(op, BitConfig(8, bits))
        assert gs.amplitudes[bits] == 1.0
    evals, states = lowest_states(op, 2, BitConfig(8, neel_bits(8)))
    assert evals[0] == evals[1]


def dense_pqg(spec, epsilon=1e-4):
    """Ordered branch from a dense eigensolver: max-M combination of the two lowest states."""
    h = dense_ring_hamiltonian(spec.with_(delta_l=-epsilon * spec.v_nn))
    _, vecs = np.linalg.eigh(h)
    basis = vecs[:, :2]
    mdiag = staggered_diagonal(spec.n_sites)
    _, c = np.linalg.eigh(basis.conj().T @ (mdiag[:, None] * basis))
    return StateVector(spec.n_sites, basis @ c[:, -1])


def test_pqg_matches_dense_and_has_negative_transverse_field():
    spec = HamiltonianSpec(8, 3.0, 10.0, 1.0, 10.0, "nearest_neighbor")
    pqg = exact_pqg(spec)
    ref = dense_pqg(spec)
    assert pqg.fidelity(ref) > 1 - 1e-9
    assert sx_total(pqg) < 0
    assert sx_total(pqg) == pytest.approx(sx_total(ref), abs=1e-7)
    assert 0.9 < m_afm(pqg) < 1.0
    # Neel seed fixes the branch and the phase
    assert pqg.amplitudes[neel_bits(8)].real > 0 and pqg.is_real()


def test_pqg_ramp_approaches_exact_ground_state():
    spec = HamiltonianSpec(8, 3.0, 10.0, 1.0, 10.0, "nearest_neighbor")
    exact = exact_pqg(spec)
    fast = prepare_pqg(spec, PqgMethod.PROTOCOL_RAMP)
    slow = prepare_pqg(spec, PqgMethod.PROTOCOL_RAMP, ramp_duration=2.0)
    assert fast.fidelity(exact) > 0.98
    assert slow.fidelity(exact) > fast.fidelity(exact)


def single_site_lindblad(gamma1, gamma2, rho0, times):
    return lindblad_evolve([(0.0, times[-1], lambda t: np.zeros((2, 2)))], 1, rho0, times, gamma1, gamma2)


def test_lindblad_amplitude_damping_closed_form():
    g1 = 1 / 28.0
    times = np.linspace(0, 20, 6)
    rhos = single_site_lindblad(g1, 0.0, np.diag([0.0, 1.0]), times)
    assert np.allclose([r[1, 1].real for r in rhos], np.exp(-g1 * times), atol=1e-9)


def test_lindblad_dephasing_closed_form():
    g2 = 1 / (2 * 3.8)
    times = np.linspace(0, 5, 6)
    rho0 = np.full((2, 2), 0.5, dtype=complex)
    rhos = single_site_lindblad(0.0, g2, rho0, times)
    # coherence decays as exp(-2 g2 t) = exp(-t / T2*)
    assert np.allclose([r[0, 1].real for r in rhos], 0.5 * np.exp(-2 * g2 * times), atol=1e-9)
    assert np.allclose([r[1, 1].real for r in rhos], 0.5, atol=1e-12)


def test_noise_free_lindblad_matches_unitary():
    spec = HamiltonianSpec(4, 1.8, 4.8, 0.48, 6.0)
    sched = Schedule.constant(spec, 1.0)
    times = np.linspace(0, 1, 6)
    unitary = evolve(neel_state(4), sched, times)
    dens = liouvillian_reference(neel_state(4), sched, times, None)
    assert np.allclose(unitary.observables["m_afm"], dens.observables["m_afm"], atol=1e-9)


def test_liouvillian_cap():
    spec = HamiltonianSpec(8, 1.0, 1.0, 0.1, 2.0)
    with pytest.raises(EnumerationCapError):
        liouvillian_reference(neel_state(8), Schedule.constant(spec, 1.0), [1.0], NoiseModel())


def test_weak_noise_limit_recovers_unitary():
    spec = HamiltonianSpec(4, 1.8, 4.8, 0.48, 6.0)
    sched = Schedule.constant(spec, 1.0)
    times = np.linspace(0, 1, 6)
    unitary = evolve(neel_state(4), sched, times).observables["m_afm"]
    noisy = evolve(neel_state(4), sched, times, NoiseModel(t1=1e9, t2_star=1e9), trajectories=20)
    assert np.allclose(noisy.observables["m_afm"], unitary, atol=1e-6)
    disabled = evolve(neel_state(4), sched, times, NoiseModel(enabled=False))
    assert np.allclose(disabled.observables["m_afm"], unitary, atol=1e-12)


def test_trajectory_statistics_follow_inverse_sqrt():
    spec = HamiltonianSpec(4, 1.8, 4.8, 0.48, 6.0)
    sched = Schedule.constant(spec, 1.0)
    noise = NoiseModel(t1=2.0, t2_star=1.0)
    small = evolve(neel_state(4), sched, [1.0], noise, trajectories=100, rng_seed=1, keep_states=False)
    large = evolve(neel_state(4), sched, [1.0], noise, trajectories=400, rng_seed=2, keep_states=False)
    ratio = small.stderr["m_afm"][-1] / large.stderr["m_afm"][-1]
    assert 1.6 < ratio < 2.5
    ref = liouvillian_reference(neel_state(4), sched, [1.0], noise).observables["m_afm"][-1]
    assert abs(large.observables["m_afm"][-1] - ref) < 4 * large.stderr["m_afm"][-1]


def test_trajectories_are_deterministic_across_threads():
    spec = HamiltonianSpec(4, 1.8, 4.8, 0.48, 6.0)
    sched = Schedule.constant(spec, 0.5)
    noise = NoiseModel(t1=2.0, t2_star=1.0)
    runs = [evolve(neel_state(4), sched, [0.25, 0.5], noise, trajectories=16, rng_seed=9, threads=t,
                   keep_states=False) for t in (1, 3)]
    assert np.array_equal(runs[0].observables["m_afm"], runs[1].observables["m_afm"])
    assert np.array_equal(runs[0].jump_counts, runs[1].jump_counts)


def test_checkpoint_round_trip(tmp_path):
    states = [random_state(6, seed=s) for s in range(3)]
    path = tmp_path / "ck.bin"
    save_states(path, states)
    loaded = load_states(path)
    assert len(loaded) == 3
    for a, b in zip(states, loaded):
        # amplitudes are stored as little-endian complex64
        assert np.allclose(a.amplitudes, b.amplitudes, atol=1e-7)
    raw = path.read_bytes()
    assert raw[:4] == b"FVDS"
    path.write_bytes(raw[:-8])
    with pytest.raises(FvdError):
        load_states(path)
