"""Fast internal consistency checks behind ``fvdsim selftest`` (a few seconds in total)."""

from __future__ import annotations

import numpy as np

from fvdsim.analysis import FitWindow, fit_decay
from fvdsim.engine import RingHamiltonian, evolve, ground_state
from fvdsim.model import HamiltonianSpec, Interaction, build_hamiltonian, landscape, neel_bits
from fvdsim.pauli import expectation, nested_commutator, staggered_magnetization
from fvdsim.schedule import Schedule
from fvdsim.state import StateVector


def _check_bch():
    spec = HamiltonianSpec(6, 1.3, 4.0, 0.7, 6.0, Interaction.POWER_LAW6)
    neel = StateVector.basis(6, neel_bits(6))
    c2 = expectation(nested_commutator(build_hamiltonian(spec, angular=False), staggered_magnetization(6), 2), neel)
    err = abs(c2 - spec.omega**2)
    return "second-order commutator on Neel equals Omega^2", err < 1e-10, f"|error| = {err:.2e}"


def _check_lanczos():
    spec = HamiltonianSpec(8, 1.8, 4.8, 0.48, 6.0)
    op = RingHamiltonian(spec).operator(1.8, 4.8, 0.48)
    energy, _ = ground_state(op)
    exact = np.linalg.eigvalsh(op.to_dense())[0]
    err = abs(energy - exact) / abs(exact)
    return "Lanczos ground energy matches dense diagonalisation", err < 1e-10, f"relative error = {err:.2e}"


def _check_propagation():
    spec = HamiltonianSpec(8, 1.8, 4.8, 0.48, 6.0)
    op = RingHamiltonian(spec).operator(1.8, 4.8, 0.48)
    evals, evecs = np.linalg.eigh(op.to_dense())
    psi0 = StateVector.basis(8, neel_bits(8))
    exact = evecs @ (np.exp(-1j * evals * 0.5) * (evecs.conj().T @ psi0.amplitudes))
    final = evolve(psi0, Schedule.constant(spec, 0.5), [0.5]).final_state()
    infid = 1.0 - abs(np.vdot(exact, final.amplitudes)) ** 2
    return "Krylov propagation matches the dense exponential", infid < 1e-9, f"infidelity = {infid:.2e}"


def _check_landscape():
    spec = HamiltonianSpec(8, 0.0, 6.0, 3.0, 6.0, Interaction.NEAREST_NEIGHBOR)
    total = sum(m.degeneracy for m in landscape(spec))
    return "landscape partitions every configuration", total == 256, f"{total} of 256 configurations"


def _check_fit():
    t = np.linspace(0, 1, 101)
    fit = fit_decay(t, np.exp(-3.0 * t), FitWindow(0.1, 0.9))
    err = abs(fit.gamma - 3.0)
    return "exponential fit recovers the rate", err < 1e-9, f"|gamma - 3| = {err:.2e}"


CHECKS = (_check_bch, _check_lanczos, _check_propagation, _check_landscape, _check_fit)


def run_selftest() -> list[tuple[str, bool, str]]:
    return [check() for check in CHECKS]
