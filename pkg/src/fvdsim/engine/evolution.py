"""Unitary and stochastic (quantum-trajectory) time evolution under a Schedule.

Piecewise-constant segments are propagated exactly by Krylov exponentials
with adaptive sub-steps.  Segments with ramps use a fourth-order
commutator-free Magnus step (two exponentials per step, Gauss-Legendre
nodes) with step-doubling error control; a midpoint rule is available as the
second-order alternative.  Because the ring Hamiltonian is affine in the
controls, each Magnus exponential is itself a ring Hamiltonian with averaged
controls.

Dissipation follows the Monte-Carlo wave-function unravelling of the
Lindblad equation with jump operators ``sqrt(g1) sigma^-_j`` (decay of the
Rydberg state) and ``sqrt(g2) Z_j`` (dephasing).  Jump times are located by
bisection on the squared norm of the no-jump evolution.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from fvdsim.engine.krylov import DEFAULT_KRYLOV_DIM, DEFAULT_STEP_TOL, DensePropagator, KrylovSpace
from fvdsim.engine.operators import RingHamiltonian, RingOperator, occupation_table
from fvdsim.errors import ArgumentError, StepSizeError
from fvdsim.schedule import Schedule
from fvdsim.state import StateVector

DENSE_MAX_DIM = 64
NORM_DRIFT_LIMIT = 1e-6
JUMP_NORM_TOL = 1e-10
MIN_STEP = 1e-13

_SQ3 = np.sqrt(3.0)
_GAUSS = (0.5 - _SQ3 / 6.0, 0.5 + _SQ3 / 6.0)
_A1 = 0.25 - _SQ3 / 6.0
_A2 = 0.25 + _SQ3 / 6.0


class Stepper(str, enum.Enum):
    MAGNUS4 = "magnus4"
    MIDPOINT = "midpoint"


@dataclass(frozen=True)
class NoiseModel:
    """Decay (``t1``) and dephasing (``t2_star``) times in us."""

    t1: float = 28.0
    t2_star: float = 3.8
    enabled: bool = True

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2_star > 0):
            raise ArgumentError(f"t1 and t2_star must be positive, got {self.t1}, {self.t2_star}")

    @property
    def gamma1(self) -> float:
        return 1.0 / self.t1 if self.enabled else 0.0

    @property
    def gamma2(self) -> float:
        return 1.0 / (2.0 * self.t2_star) if self.enabled else 0.0


@dataclass
class EvolutionResult:
    """Samples of an evolution.

    ``observables`` holds one array per name (trajectory means when
    ``trajectory_count > 1``) and ``stderr`` the matching standard errors
    (zero for deterministic runs).  ``states`` holds the sampled states for
    unitary runs when requested (density matrices for the Lindblad
    reference).
    """

    times: np.ndarray
    observables: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray]
    trajectory_count: int = 1
    states: list | None = None
    jump_counts: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def final_state(self):
        if not self.states:
            raise ArgumentError("states were not kept for this run")
        return self.states[-1]


Observable = Callable[[StateVector], float]


def staggered_observable(n_sites: int) -> Observable:
    from fvdsim.engine.ground import staggered_diagonal

    diag = staggered_diagonal(n_sites)

    def m_afm(state: StateVector) -> float:
        return float(diag @ state.probabilities())

    return m_afm


def check_sample_times(sample_times, span: float) -> np.ndarray:
    times = np.asarray(sample_times, dtype=float).ravel()
    if times.size == 0:
        raise ArgumentError("sample_times is empty")
    if np.any(np.diff(times) <= 0):
        raise ArgumentError("sample_times must be strictly increasing")
    if times[0] < 0 or times[-1] > span * (1 + 1e-12) + 1e-15:
        raise ArgumentError(f"sample_times must lie in [0, {span}]")
    return np.minimum(times, span)


class Propagator:
    """Advances amplitudes along a schedule; shared by the unitary and trajectory paths.

    ``extra_diag`` is added to every Hamiltonian (the anti-Hermitian decay
    term for trajectories).  ``sign = -1`` propagates with ``-H``.
    """

    def __init__(self, schedule: Schedule, *, krylov_dim: int = DEFAULT_KRYLOV_DIM, tol: float = DEFAULT_STEP_TOL,
                 stepper: Stepper = Stepper.MAGNUS4, extra_diag: np.ndarray | None = None, sign: float = 1.0,
                 initial_step: float = 1e-3):
        self.schedule = schedule
        self.ham = RingHamiltonian(schedule.base)
        self.m = krylov_dim
        self.tol = tol
        self.stepper = Stepper(stepper)
        self.extra_diag = extra_diag
        self.sign = sign
        self.hermitian = extra_diag is None or not np.any(np.imag(extra_diag))
        self.dense = self.ham.dim <= DENSE_MAX_DIM
        self.initial_step = initial_step
        self._h_guess: dict[int, float] = {}
        self.exp_count = 0

    # -- single exponentials -------------------------------------------------
    def operator(self, omega: float, dg: float, dl: float) -> RingOperator:
        return self.ham.operator(omega, dg, dl, self.extra_diag)

    def space(self, op: RingOperator, psi: np.ndarray):
        """Object exposing vector/norm2/error/max_step for ``exp(-i tau sign H) psi``."""
        if self.sign != 1.0:
            op = RingOperator(op.n_sites, self.sign * op.diag, self.sign * op.x_coeff)
        if self.dense:
            return DensePropagator(op.to_dense(), self.hermitian).space(psi)
        centered, shift = op.centered()
        return _ShiftedSpace(KrylovSpace(centered.apply, psi, self.m, self.hermitian), shift)

    def exp_apply(self, op: RingOperator, psi: np.ndarray, tau: float) -> np.ndarray:
        done = 0.0
        while tau - done > 0.0:
            space = self.space(op, psi)
            step = space.max_step(self.tol, tau - done)
            if step < MIN_STEP and step < tau - done:
                raise StepSizeError(f"Krylov sub-step collapsed to {step:.3e}")
            psi = space.vector(step)
            done = tau if step >= tau - done else done + step
            self.exp_count += 1
        return psi

    # -- time-dependent steps ------------------------------------------------
    def _controls(self, seg, u):
        return seg.controls(min(max(u, 0.0), 1.0))

    def magnus_step(self, seg, psi: np.ndarray, t_local: float, h: float) -> np.ndarray:
        d = seg.duration
        if self.stepper is Stepper.MIDPOINT:
            return self.exp_apply(self.operator(*self._controls(seg, (t_local + 0.5 * h) / d)), psi, h)
        u1 = np.array(self._controls(seg, (t_local + _GAUSS[0] * h) / d))
        u2 = np.array(self._controls(seg, (t_local + _GAUSS[1] * h) / d))
        first = 2.0 * _A2 * u1 + 2.0 * _A1 * u2
        second = 2.0 * _A1 * u1 + 2.0 * _A2 * u2
        psi = self.exp_apply(self.operator(*first), psi, 0.5 * h)
        return self.exp_apply(self.operator(*second), psi, 0.5 * h)

    def _order(self) -> int:
        return 2 if self.stepper is Stepper.MIDPOINT else 4

    def adaptive_step(self, seg_index: int, psi: np.ndarray, t_local: float, h_max: float):
        """One accepted step of the ramped segment; returns (psi, h_taken)."""
        seg = self.schedule.segments[seg_index]
        h = min(self._h_guess.get(seg_index, self.initial_step * seg.duration), h_max)
        p = self._order()
        while True:
            if h < MIN_STEP * max(1.0, seg.duration):
                raise StepSizeError(f"ramp step collapsed to {h:.3e} at local time {t_local:.6g}")
            full = self.magnus_step(seg, psi, t_local, h)
            half = self.magnus_step(seg, psi, t_local, 0.5 * h)
            half = self.magnus_step(seg, half, t_local + 0.5 * h, 0.5 * h)
            scale = max(float(np.linalg.norm(psi)), 1e-300)
            err = float(np.linalg.norm(full - half)) / scale / (2**p - 1)
            factor = 0.9 * (self.tol / err) ** (1.0 / (p + 1)) if err > 0 else 4.0
            if err <= self.tol:
                self._h_guess[seg_index] = h * min(4.0, max(0.3, factor))
                # no Richardson extrapolation: it would break exact unitarity
                return half, h
            h *= min(0.9, max(0.1, factor))

    # -- whole intervals -----------------------------------------------------
    def pieces(self, t0: float, t1: float):
        """Yield (segment index, local start, length) covering ``[t0, t1]``."""
        edges = self.schedule.boundaries
        for k, seg in enumerate(self.schedule.segments):
            lo, hi = max(t0, edges[k]), min(t1, edges[k + 1])
            if hi > lo:
                yield k, lo - edges[k], hi - lo

    def advance(self, psi: np.ndarray, t0: float, t1: float) -> np.ndarray:
        for k, local, length in self.pieces(t0, t1):
            seg = self.schedule.segments[k]
            if seg.is_constant:
                psi = self.exp_apply(self.operator(*seg.controls(0.0)), psi, length)
                continue
            done = 0.0
            while length - done > 1e-15 * seg.duration:
                psi, h = self.adaptive_step(k, psi, local + done, length - done)
                done += h
        return psi


class _ShiftedSpace:
    """KrylovSpace of a diagonally shifted operator with the phase restored."""

    def __init__(self, space: KrylovSpace, shift: float):
        self.inner = space
        self.shift = shift

    def error(self, tau):
        return self.inner.error(tau)

    def max_step(self, tol, tau_max):
        return self.inner.max_step(tol, tau_max)

    def vector(self, tau):
        return np.exp(-1j * tau * self.shift) * self.inner.vector(tau)

    def norm2(self, tau):
        # the shift is real, so it does not change the norm
        return self.inner.norm2(tau)


def _sample(observables: Mapping[str, Observable], psi: np.ndarray, n: int) -> tuple[StateVector, dict]:
    nrm = np.linalg.norm(psi)
    state = StateVector(n, psi / nrm)
    return state, {name: float(fn(state)) for name, fn in observables.items()}


def evolve(state: StateVector, schedule: Schedule, sample_times, noise: NoiseModel | None = None,
           trajectories: int = 1, rng_seed: int = 0, *, observables: Mapping[str, Observable] | None = None,
           keep_states: bool = True, krylov_dim: int = DEFAULT_KRYLOV_DIM, tol: float = DEFAULT_STEP_TOL,
           stepper: Stepper = Stepper.MAGNUS4, backward: bool = False, threads: int = 1) -> EvolutionResult:
    """Evolve ``state`` along ``schedule`` and sample at ``sample_times``.

    Without noise (or with ``noise.enabled`` false) the evolution is unitary
    and ``trajectories`` must be 1.  With noise, ``trajectories`` independent
    quantum trajectories are run; trajectory ``k`` draws from
    ``SeedSequence(rng_seed, spawn_key=(k,))`` so results do not depend on
    scheduling.  ``backward`` propagates with ``-H`` (time reversal).
    """
    n = state.n_sites
    if n != schedule.base.n_sites:
        raise ArgumentError(f"state has {n} sites, schedule has {schedule.base.n_sites}")
    state.require_normalized()
    times = check_sample_times(sample_times, schedule.span)
    if trajectories < 1:
        raise ArgumentError("trajectories must be >= 1")
    noisy = noise is not None and noise.enabled
    if not noisy and trajectories != 1:
        raise ArgumentError("unitary evolution is deterministic; use trajectories=1 without noise")
    observables = dict(observables) if observables is not None else {"m_afm": staggered_observable(n)}
    sign = -1.0 if backward else 1.0
    if not noisy:
        return _evolve_unitary(state, schedule, times, observables, keep_states, krylov_dim, tol, stepper, sign)
    return _evolve_trajectories(state, schedule, times, noise, trajectories, rng_seed, observables,
                                krylov_dim, tol, stepper, sign, threads)


def _evolve_unitary(state, schedule, times, observables, keep_states, krylov_dim, tol, stepper, sign):
    n = state.n_sites
    prop = Propagator(schedule, krylov_dim=krylov_dim, tol=tol, stepper=stepper, sign=sign)
    psi = state.amplitudes.copy()
    t = 0.0
    values = {name: np.empty(times.size) for name in observables}
    kept = []
    for i, ts in enumerate(times):
        psi = prop.advance(psi, t, ts)
        t = ts
        drift = abs(float(np.linalg.norm(psi)) - 1.0)
        if drift > NORM_DRIFT_LIMIT:
            raise StepSizeError(f"norm drifted by {drift:.2e} at t={ts:.6g}")
        snap, obs = _sample(observables, psi, n)
        for name, v in obs.items():
            values[name][i] = v
        if keep_states:
            kept.append(snap)
    return EvolutionResult(times, values, {k: np.zeros(times.size) for k in values}, 1,
                           kept if keep_states else None, info={"exponentials": prop.exp_count})


def _trajectory_rng(rng_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(rng_seed, spawn_key=(index,)))


class _Trajectory:
    """One Monte-Carlo wave-function trajectory."""

    def __init__(self, prop: Propagator, noise: NoiseModel, n_sites: int):
        self.prop = prop
        self.n = n_sites
        self.g1 = noise.gamma1
        self.g2 = noise.gamma2
        self.occ = occupation_table(n_sites)

    def jump(self, psi: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        prob = np.abs(psi) ** 2
        # ||sqrt(g1) sigma^-_j psi||^2 = g1 <n_j>,  ||sqrt(g2) Z_j psi||^2 = g2 ||psi||^2
        weights = np.concatenate([self.g1 * (prob @ self.occ), np.full(self.n, self.g2 * prob.sum())])
        k = int(rng.choice(weights.size, p=weights / weights.sum()))
        if k < self.n:
            bit = 1 << k
            idx = np.arange(psi.size)
            out = np.zeros_like(psi)
            src = idx[(idx & bit) != 0]
            out[src ^ bit] = psi[src]
        else:
            s = k - self.n
            out = psi * (2.0 * self.occ[:, s] - 1.0)
        return out / np.linalg.norm(out)

    def _bisect(self, norm2_at, h: float, target: float) -> float:
        lo, hi = 0.0, h
        while True:
            mid = 0.5 * (lo + hi)
            val = norm2_at(mid)
            if abs(val - target) <= JUMP_NORM_TOL or hi - lo <= 1e-15 * max(h, 1.0):
                return mid
            if val > target:
                lo = mid
            else:
                hi = mid

    def run(self, psi0: np.ndarray, times: np.ndarray, observables, rng: np.random.Generator):
        prop = self.prop
        sched = prop.schedule
        psi = psi0.copy()
        threshold = rng.random()
        t = 0.0
        out = np.empty((times.size, len(observables)))
        jumps = 0
        for i, ts in enumerate(times):
            while ts - t > 0.0:
                k, local = sched.locate(t)
                seg = sched.segments[k]
                seg_end = sched.boundaries[k + 1]
                h_max = min(ts, seg_end) - t
                if h_max <= 1e-15 * max(1.0, seg_end):
                    t = min(ts, seg_end)
                    continue
                if seg.is_constant:
                    space = prop.space(prop.operator(*seg.controls(0.0)), psi)
                    h = space.max_step(prop.tol, h_max)
                    if h < MIN_STEP and h < h_max:
                        raise StepSizeError(f"Krylov sub-step collapsed to {h:.3e}")
                    norm2_at = space.norm2
                    advance = space.vector
                else:
                    psi_new, h = prop.adaptive_step(k, psi, local, h_max)

                    def advance(tau, _psi=psi, _k=k, _local=local):
                        return prop.magnus_step(sched.segments[_k], _psi, _local, tau)

                    def norm2_at(tau):
                        w = advance(tau)
                        return float(np.real(np.vdot(w, w)))

                if norm2_at(h) > threshold:
                    psi = advance(h) if seg.is_constant else psi_new
                    t = t + h if h < h_max else min(ts, seg_end)
                    continue
                tau = self._bisect(norm2_at, h, threshold)
                psi = self.jump(advance(tau), rng)
                jumps += 1
                threshold = rng.random()
                t = t + tau
            _, obs = _sample(observables, psi, self.n)
            out[i] = list(obs.values())
        return out, jumps


def _evolve_trajectories(state, schedule, times, noise, trajectories, rng_seed, observables,
                         krylov_dim, tol, stepper, sign, threads):
    n = state.n_sites
    occ = occupation_table(n)
    decay = -0.5j * (noise.gamma1 * occ.sum(axis=1) + n * noise.gamma2)

    def one(index: int):
        # each trajectory owns its propagator (step-size memory is per trajectory);
        # the propagator multiplies the whole generator by ``sign``, so the decay
        # term is pre-multiplied to stay damping under time reversal
        prop = Propagator(schedule, krylov_dim=krylov_dim, tol=tol, stepper=stepper, extra_diag=sign * decay,
                          sign=sign)
        return _Trajectory(prop, noise, n).run(state.amplitudes, times, observables, _trajectory_rng(rng_seed, index))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(trajectories)))
    else:
        results = [one(k) for k in range(trajectories)]
    data = np.stack([r[0] for r in results])
    jumps = np.array([r[1] for r in results])
    mean = data.mean(axis=0)
    if trajectories > 1:
        err = data.std(axis=0, ddof=1) / np.sqrt(trajectories)
    else:
        err = np.zeros_like(mean)
    names = list(observables)
    return EvolutionResult(
        times,
        {name: mean[:, j] for j, name in enumerate(names)},
        {name: err[:, j] for j, name in enumerate(names)},
        trajectories,
        None,
        jump_counts=jumps,
    )
