"""Ground states and the pre-quench (PQG) false vacuum."""

from __future__ import annotations

import enum

import numpy as np

from fvdsim.engine.krylov import lanczos_lowest
from fvdsim.engine.operators import CompiledOperator, RingHamiltonian, RingOperator, compile_operator
from fvdsim.errors import AlgebraError, EnumerationCapError
from fvdsim.model import BitConfig, HamiltonianSpec, neel_bits
from fvdsim.pauli import OperatorSum, site_sign
from fvdsim.schedule import Schedule, Segment, SqrtRamp
from fvdsim.state import StateVector

GROUND_STATE_MAX_SITES = 20
LANCZOS_TOL = 1e-9
PQG_EPSILON = 1e-4


class PqgMethod(str, enum.Enum):
    EXACT_GROUND = "exact_ground"
    PROTOCOL_RAMP = "protocol_ramp"


def _as_operator(h) -> CompiledOperator | RingOperator:
    if isinstance(h, OperatorSum) and not h.hermitian():
        raise AlgebraError("ground_state needs a Hermitian operator")
    op = compile_operator(h)
    if not op.hermitian:
        raise AlgebraError("ground_state needs a Hermitian operator")
    if op.n_sites > GROUND_STATE_MAX_SITES:
        raise EnumerationCapError(f"N={op.n_sites} exceeds the ground-state cap of {GROUND_STATE_MAX_SITES} sites")
    return op


def _is_diagonal(op) -> bool:
    if isinstance(op, RingOperator):
        return op.x_coeff == 0
    return not op.flips


def _start_vector(dim: int, seed_sector: BitConfig | None) -> np.ndarray:
    if seed_sector is not None:
        v = np.zeros(dim, dtype=np.complex128)
        v[seed_sector.bits] = 1.0
        return v
    rng = np.random.default_rng(0)
    return rng.standard_normal(dim) + 0j


def _fix_phase(vec: np.ndarray, anchor: int | None) -> np.ndarray:
    """Rotate the global phase so the anchor amplitude (or the largest one) is real positive."""
    k = int(np.argmax(np.abs(vec))) if anchor is None or abs(vec[anchor]) < 1e-12 else anchor
    vec = vec * (abs(vec[k]) / vec[k])
    return vec / np.linalg.norm(vec)


def lowest_states(h, k: int = 1, seed_sector: BitConfig | None = None, tol: float = LANCZOS_TOL):
    """Lowest ``k`` eigenpairs as ``(energies, [StateVector, ...])``.

    Diagonal operators are solved by sorting the diagonal; a seed basis state
    wins ties so that degenerate classical ground states stay on the seeded
    branch.
    """
    op = _as_operator(h)
    n = op.n_sites
    anchor = None if seed_sector is None else seed_sector.bits
    if _is_diagonal(op):
        diag = np.asarray(op.diag).real
        order = np.lexsort((np.arange(diag.size) != (anchor if anchor is not None else -1), diag))
        picks = order[:k]
        return diag[picks].copy(), [StateVector.basis(n, int(i)) for i in picks]
    evals, evecs, _ = lanczos_lowest(op.apply, _start_vector(op.dim, seed_sector), k, tol=tol)
    states = [StateVector(n, _fix_phase(evecs[:, i], anchor)) for i in range(evecs.shape[1])]
    return evals, states


def ground_state(h, seed_sector: BitConfig | None = None, tol: float = LANCZOS_TOL) -> tuple[float, StateVector]:
    """Lowest eigenpair by restarted Lanczos with full re-orthogonalisation.

    The residual satisfies ``||H psi - E psi|| < tol * ||H||``.  With
    ``seed_sector`` the iteration starts from that basis state, which keeps
    it on one symmetry-broken branch when the spectrum is nearly degenerate.
    """
    evals, states = lowest_states(h, 1, seed_sector, tol)
    return float(evals[0]), states[0]


def staggered_diagonal(n_sites: int) -> np.ndarray:
    """Diagonal of ``M = (1/N) sum_j eps_j Z_j`` in the occupation basis."""
    idx = np.arange(1 << n_sites, dtype=np.int64)
    out = np.zeros(idx.size)
    for s in range(n_sites):
        out += site_sign(s) * (2.0 * ((idx >> s) & 1) - 1.0)
    return out / n_sites


def symmetry_broken_ground_state(h, n_sites: int, seed_sector: BitConfig | None = None) -> StateVector:
    """Ground state projected onto the branch with the largest staggered order.

    On a finite ring the two lowest states at vanishing staggered field are
    symmetric and antisymmetric mixtures of the two ordered branches, split by
    a tunnelling gap that shrinks exponentially with N.  Diagonalising ``M``
    inside their span recovers the ordered branch the limit refers to.
    """
    evals, states = lowest_states(h, 2, seed_sector)
    if len(states) < 2:
        return states[0]
    basis = np.array([s.amplitudes for s in states]).T
    mdiag = staggered_diagonal(n_sites)
    mmat = basis.conj().T @ (mdiag[:, None] * basis)
    mmat = 0.5 * (mmat + mmat.conj().T)
    _, vecs = np.linalg.eigh(mmat)
    anchor = None if seed_sector is None else seed_sector.bits
    return StateVector(n_sites, _fix_phase(basis @ vecs[:, -1], anchor))


def exact_pqg(spec: HamiltonianSpec, epsilon: float = PQG_EPSILON) -> StateVector:
    """PQG as the ordered ground state at ``delta_l = -epsilon * V`` (seeded from Neel)."""
    ham = RingHamiltonian(spec)
    op = ham.operator(spec.omega, spec.delta_g, -epsilon * spec.v_nn)
    seed = BitConfig(spec.n_sites, neel_bits(spec.n_sites))
    return symmetry_broken_ground_state(op, spec.n_sites, seed)


PQG_RAMP_DURATION = 0.3


def pqg_ramp_schedule(spec: HamiltonianSpec, duration: float = PQG_RAMP_DURATION):
    """Omega ramped 0 -> spec.omega with a sqrt(t) shape at zero staggered field."""
    return Schedule(spec, (Segment(duration, SqrtRamp(0.0, spec.omega), spec.delta_g, 0.0),))


def prepare_pqg(spec: HamiltonianSpec, method: PqgMethod = PqgMethod.EXACT_GROUND, *,
                epsilon: float = PQG_EPSILON, ramp_duration: float = PQG_RAMP_DURATION) -> StateVector:
    """Pre-quench false vacuum for the geometry and (omega, delta_g) of ``spec``.

    ``spec.delta_l`` is the post-quench target and is ignored here.
    ``EXACT_GROUND`` returns the ordered ground state at ``delta_l = -epsilon V``;
    ``PROTOCOL_RAMP`` evolves Neel while Omega rises as sqrt(t) at ``delta_l = 0``.
    """
    method = PqgMethod(method)
    if method is PqgMethod.EXACT_GROUND:
        return exact_pqg(spec, epsilon)
    from fvdsim.engine.evolution import evolve

    start = StateVector.basis(spec.n_sites, neel_bits(spec.n_sites))
    if spec.omega == 0:
        return start
    schedule = pqg_ramp_schedule(spec, ramp_duration)
    return evolve(start, schedule, [ramp_duration]).final_state()
