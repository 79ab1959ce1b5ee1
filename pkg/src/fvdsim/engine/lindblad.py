"""Dense density-matrix integration of the Lindblad equation (reference for small rings).

Generator::

    d rho/dt = -i [H, rho] + g1 sum_j (s-_j rho s+_j - {n_j, rho}/2) + g2 sum_j (Z_j rho Z_j - rho)

The dephasing sum is diagonal in the occupation basis:
``sum_j (Z_j rho Z_j - rho)[b, c] = -2 popcount(b ^ c) rho[b, c]``.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np
from scipy.integrate import solve_ivp

from fvdsim.engine.evolution import EvolutionResult, NoiseModel, check_sample_times
from fvdsim.engine.ground import staggered_diagonal
from fvdsim.engine.operators import RingHamiltonian
from fvdsim.errors import ArgumentError, EnumerationCapError
from fvdsim.schedule import Schedule
from fvdsim.state import StateVector

LINDBLAD_MAX_SITES = 6
RTOL = 1e-10
ATOL = 1e-12

DensityObservable = Callable[[np.ndarray], float]


def lindblad_evolve(pieces, n_sites: int, rho0: np.ndarray, times, gamma1: float, gamma2: float) -> list[np.ndarray]:
    """Integrate from ``t = 0`` and return ``rho`` at each of ``times``.

    ``pieces`` is a list of ``(t_start, t_end, hamiltonian)`` covering
    ``[0, times[-1]]`` contiguously, where ``hamiltonian(t)`` returns the
    dense generator in rad/us.  Integration restarts on every piece so jumps
    in the controls are resolved exactly.  Works for any ``n_sites``
    (including a single site).
    """
    dim = 1 << n_sites
    idx = np.arange(dim)
    count = np.bitwise_count(idx).astype(float)
    anticomm = -0.5 * gamma1 * (count[:, None] + count[None, :])
    dephase = -2.0 * gamma2 * np.bitwise_count(idx[:, None] ^ idx[None, :]).astype(float)
    damping = anticomm + dephase
    lowered = []
    for s in range(n_sites):
        low = idx[(idx >> s) & 1 == 0]
        lowered.append((np.ix_(low, low), np.ix_(low | (1 << s), low | (1 << s))))

    times = np.asarray(times, dtype=float)
    y = np.asarray(rho0, dtype=np.complex128).ravel()
    out = [y.reshape(dim, dim).copy() for _ in times[times <= 0.0]]
    for a, b, hamiltonian in pieces:
        if a >= times[-1]:
            break
        b = min(b, float(times[-1]))

        def rhs(t, yv, hamiltonian=hamiltonian):
            rho = yv.reshape(dim, dim)
            h = hamiltonian(t)
            res = -1j * (h @ rho - rho @ h) + damping * rho
            if gamma1:
                for dst, src in lowered:
                    res[dst] += gamma1 * rho[src]
            return res.ravel()

        inside = times[(times > a) & (times <= b)]
        sol = solve_ivp(rhs, (a, b), y, method="DOP853", t_eval=np.union1d(inside, [b]), rtol=RTOL, atol=ATOL)
        if not sol.success:
            raise ArgumentError(f"density-matrix integration failed: {sol.message}")
        keep = np.isin(sol.t, inside)
        out.extend(sol.y[:, j].reshape(dim, dim).copy() for j in np.flatnonzero(keep))
        y = sol.y[:, -1]
    return out


def liouvillian_reference(state, schedule: Schedule, sample_times, noise: NoiseModel | None,
                          observables: Mapping[str, DensityObservable] | None = None,
                          keep_states: bool = True) -> EvolutionResult:
    """Dense Lindblad evolution of a pure state or density matrix (N <= 6)."""
    n = schedule.base.n_sites
    if n > LINDBLAD_MAX_SITES:
        raise EnumerationCapError(f"dense Lindblad reference is capped at {LINDBLAD_MAX_SITES} sites, got {n}")
    if isinstance(state, StateVector):
        rho0 = np.outer(state.amplitudes, state.amplitudes.conj())
    else:
        rho0 = np.asarray(state, dtype=np.complex128)
    times = check_sample_times(sample_times, schedule.span)
    ham = RingHamiltonian(schedule.base)

    edges = schedule.boundaries
    pieces = []
    for k, seg in enumerate(schedule.segments):
        def h_of_t(t, seg=seg, start=edges[k]):
            return ham.operator(*seg.controls(min(max((t - start) / seg.duration, 0.0), 1.0))).to_dense()

        pieces.append((edges[k], edges[k + 1], h_of_t))

    g1 = noise.gamma1 if noise is not None else 0.0
    g2 = noise.gamma2 if noise is not None else 0.0
    rhos = lindblad_evolve(pieces, n, rho0, times, g1, g2)
    if observables is None:
        mdiag = staggered_diagonal(n)
        observables = {"m_afm": lambda rho: float(np.real(np.diag(rho)) @ mdiag)}
    values = {name: np.array([fn(r) for r in rhos]) for name, fn in observables.items()}
    return EvolutionResult(times, values, {k: np.zeros(times.size) for k in values}, 1,
                           rhos if keep_states else None)
