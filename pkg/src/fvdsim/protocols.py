"""Experiment sequences: state preparation, quench and ramp protocols.

A run is described by an ``ExperimentConfig``; the functions here prepare
the initial state, evolve it and return a ``TimeSeries`` of the standard
observables.  Everything is deterministic for a fixed ``rng_seed``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from fvdsim.engine import NoiseModel, PqgMethod, evolve, prepare_pqg
from fvdsim.errors import ArgumentError, ConfigError
from fvdsim.model import HamiltonianSpec, landscape, neel_bits, neel_prime_bits
from fvdsim.observables import (
    SpamModel,
    TimeSeries,
    landscape_projection,
    sample_bitstrings,
    sampled_m_afm,
    series_from_result,
    standard_observables,
)
from fvdsim.schedule import Constant, LinearRamp, Schedule, Segment, SqrtRamp
from fvdsim.state import StateVector


class InitialKind(str, enum.Enum):
    NEEL = "neel"
    NEEL_PRIME = "neel_prime"
    PQG = "pqg"
    LANDAU_ZENER = "landau_zener"


@dataclass(frozen=True)
class LandauZenerParams:
    """Linear sweep of the addressed-site detuning at fixed Rabi frequency (MHz, us)."""

    delta_start: float = -20.0
    delta_end: float = 20.0
    omega_lz: float = 2.0
    duration: float = 3.0
    address_shift: float | None = None


@dataclass(frozen=True)
class InitialState:
    kind: InitialKind = InitialKind.NEEL
    pqg_method: PqgMethod = PqgMethod.EXACT_GROUND
    pqg_epsilon: float = 1e-4
    landau_zener: LandauZenerParams = field(default_factory=LandauZenerParams)

    def __post_init__(self):
        object.__setattr__(self, "kind", InitialKind(self.kind))
        object.__setattr__(self, "pqg_method", PqgMethod(self.pqg_method))


@dataclass(frozen=True)
class ExperimentConfig:
    """One run.  ``schedule`` defaults to holding ``spec`` constant for ``duration``."""

    spec: HamiltonianSpec
    initial: InitialState = field(default_factory=InitialState)
    duration: float = 1.0
    sample_times: tuple[float, ...] | None = None
    schedule: Schedule | None = None
    noise: NoiseModel | None = None
    trajectories: int = 1
    spam: SpamModel | None = None
    shots: int | None = None
    rng_seed: int = 0
    krylov_dim: int = 12
    threads: int = 1
    record_sites: bool = False
    bubble_lengths: tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        noisy = self.noise is not None and self.noise.enabled
        if not noisy and self.trajectories != 1:
            raise ConfigError("trajectories must be 1 without noise", "trajectories")
        if self.trajectories < 1:
            raise ConfigError("trajectories must be >= 1", "trajectories")
        if self.shots is not None and self.shots < 1:
            raise ConfigError("shots must be >= 1", "shots")
        if self.shots is not None and noisy:
            raise ConfigError("shot sampling needs pure states; it is not available with noise", "shots")

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    def resolved_schedule(self) -> Schedule:
        return self.schedule if self.schedule is not None else Schedule.constant(self.spec, self.duration)

    def resolved_times(self) -> np.ndarray:
        span = self.resolved_schedule().span
        if self.sample_times is None:
            return np.linspace(0.0, span, 51)
        return np.asarray(self.sample_times, dtype=float)


def landau_zener_schedule(spec: HamiltonianSpec, params: LandauZenerParams) -> Schedule:
    """Sweep acting on the even-label (Neel) sites; odd-label sites are shifted off resonance.

    The addressed sites see an effective detuning ``delta_g - delta_l`` that
    ramps from ``delta_start`` to ``delta_end``; the others sit
    ``address_shift`` lower (default: ``4 * max(|delta|) + 4 V``), which
    maps to ``delta_l = -address_shift / 2``.
    """
    if not params.duration > 0:
        raise ArgumentError("Landau-Zener duration must be positive")
    shift = params.address_shift
    if shift is None:
        shift = 4.0 * max(abs(params.delta_start), abs(params.delta_end)) + 4.0 * spec.v_nn
    dl = -0.5 * shift
    seg = Segment(params.duration, Constant(params.omega_lz),
                  LinearRamp(params.delta_start + dl, params.delta_end + dl), Constant(dl))
    return Schedule(spec, (seg,))


def landau_zener_prepare(spec: HamiltonianSpec, delta_start: float, delta_end: float, omega_lz: float,
                         duration: float, address_shift: float | None = None) -> tuple[StateVector, float]:
    """Prepare Neel from all-down by an addressed detuning sweep; returns the state and its Neel fidelity."""
    params = LandauZenerParams(delta_start, delta_end, omega_lz, duration, address_shift)
    start = StateVector.basis(spec.n_sites, 0)
    result = evolve(start, landau_zener_schedule(spec, params), [duration], observables={})
    state = result.final_state()
    target = StateVector.basis(spec.n_sites, neel_bits(spec.n_sites))
    return state, state.fidelity(target)


def prepare_initial(spec: HamiltonianSpec, initial: InitialState) -> StateVector:
    n = spec.n_sites
    if initial.kind is InitialKind.NEEL:
        return StateVector.basis(n, neel_bits(n))
    if initial.kind is InitialKind.NEEL_PRIME:
        return StateVector.basis(n, neel_prime_bits(n))
    if initial.kind is InitialKind.PQG:
        return prepare_pqg(spec, initial.pqg_method, epsilon=initial.pqg_epsilon)
    lz = initial.landau_zener
    return landau_zener_prepare(spec, lz.delta_start, lz.delta_end, lz.omega_lz, lz.duration, lz.address_shift)[0]


# spawn-key prefix of the shot-sampling streams; trajectory k uses spawn_key (k,)
SHOT_STREAM = 1 << 20


def _run(config: ExperimentConfig, initial: StateVector, schedule: Schedule, times,
         keep_states: bool = False) -> tuple[TimeSeries, object]:
    n = config.spec.n_sites
    obs = standard_observables(n, config.bubble_lengths, include_sites=config.record_sites)
    keep = keep_states or config.shots is not None
    result = evolve(initial, schedule, times, config.noise, config.trajectories, config.rng_seed,
                    observables=obs, keep_states=keep, krylov_dim=config.krylov_dim, threads=config.threads)
    series = series_from_result(result)
    if config.shots is not None:
        spam = config.spam
        measured, errs = [], []
        for i, state in enumerate(result.states):
            seed = int(np.random.SeedSequence(config.rng_seed, spawn_key=(SHOT_STREAM, i)).generate_state(1)[0])
            m, e = sampled_m_afm(sample_bitstrings(state, config.shots, spam, seed), n)
            measured.append(m)
            errs.append(e)
        series.values["m_afm_sampled"] = np.array(measured)
        series.stderr["m_afm_sampled"] = np.array(errs)
    series.metadata.update({"n_sites": n, "trajectories": config.trajectories, "rng_seed": config.rng_seed})
    return series, result


def quench_experiment(config: ExperimentConfig) -> TimeSeries:
    """Prepare the initial state, evolve under the post-quench schedule, sample the observables."""
    initial = prepare_initial(config.spec, config.initial)
    series, _ = _run(config, initial, config.resolved_schedule(), config.resolved_times())
    return series


def resonance_ramp_schedule(spec: HamiltonianSpec, omega_f: float, ramp_duration: float) -> Schedule:
    return Schedule(spec, (Segment(ramp_duration, SqrtRamp(0.0, omega_f), spec.delta_g, spec.delta_l),))


def resonance_ramp_experiment(config: ExperimentConfig, omega_f: float, ramp_duration: float,
                              with_landscape: bool = False) -> TimeSeries:
    """Neel, then Omega ramped 0 -> ``omega_f`` as sqrt(t) over ``ramp_duration``.

    The final-time landscape projection is stored in
    ``metadata["landscape_projection"]`` when requested.
    """
    schedule = resonance_ramp_schedule(config.spec, omega_f, ramp_duration)
    times = config.sample_times
    times = np.linspace(0.0, ramp_duration, 21) if times is None else np.asarray(times, dtype=float)
    initial = prepare_initial(config.spec, config.initial)
    series, result = _run(config, initial, schedule, times, keep_states=with_landscape)
    if with_landscape:
        if result.states is None:
            raise ConfigError("the landscape projection needs the final pure state; disable noise", "noise")
        series.metadata["landscape_projection"] = landscape_projection(result.states[-1], landscape(config.spec))
    return series
