"""Measured quantities: AFM order, bubble densities, filling factor, sampling with SPAM errors.

All diagonal observables are evaluated as ``sum_b p(b) f(b)`` over the
occupation basis with ``f`` tabulated once per ring size.  Functions taking
a state accept a ``StateVector`` or a dense density matrix.

Bubbles are counted relative to the false vacuum |Neel> (odd 0-based sites
up).  A site is *flipped* when it disagrees with Neel; a length-``L`` bubble
is a maximal circular run of exactly ``L`` flipped sites, i.e. a window
``FV-site, L flipped sites, FV-site``.  For ``L = N - 1`` the two boundary
sites coincide.  The fully flipped ring (|Neel'>) contains no bubble.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from fvdsim.engine.ground import staggered_diagonal
from fvdsim.engine.operators import flip_bits, occupation_table
from fvdsim.errors import ArgumentError, DegenerateReferenceError, DimensionError
from fvdsim.model import BitConfig, Manifold, neel_bits
from fvdsim.state import StateVector

DEFAULT_BUBBLE_LENGTHS = (1, 2, 3)


def _probabilities(state) -> tuple[int, np.ndarray]:
    if isinstance(state, StateVector):
        return state.n_sites, state.probabilities()
    rho = np.asarray(state)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise DimensionError("expected a StateVector or a square density matrix")
    n = int(rho.shape[0]).bit_length() - 1
    if 1 << n != rho.shape[0]:
        raise DimensionError(f"density matrix dimension {rho.shape[0]} is not a power of two")
    return n, np.real(np.diag(rho)).copy()


def m_afm(state) -> float:
    """Staggered magnetisation ``(1/N) sum_j eps_j <Z_j>``; +1 on Neel, -1 on Neel'."""
    n, p = _probabilities(state)
    return float(_staggered(n) @ p)


@lru_cache(maxsize=8)
def _staggered(n_sites: int) -> np.ndarray:
    d = staggered_diagonal(n_sites)
    d.setflags(write=False)
    return d


def site_sz(state) -> np.ndarray:
    """``<Z_s>`` for every site (``+1`` means up)."""
    n, p = _probabilities(state)
    return 2.0 * (p @ occupation_table(n)) - p.sum()


def sx_total(state) -> float:
    """``<sum_s X_s>``."""
    if isinstance(state, StateVector):
        psi = state.amplitudes
        return float(sum(np.real(np.vdot(flip_bits(psi, state.n_sites, 1 << s), psi)) for s in range(state.n_sites)))
    rho = np.asarray(state)
    n, _ = _probabilities(rho)
    idx = np.arange(rho.shape[0])
    return float(sum(np.real(rho[idx, idx ^ (1 << s)].sum()) for s in range(n)))


def rescale(values, reference: float | None = None) -> np.ndarray:
    """``(m + m0) / (2 m0)`` with ``m0 = values[0]`` unless given: 1 for FV, 0 for full conversion."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ArgumentError("cannot rescale an empty series")
    m0 = float(values[0]) if reference is None else float(reference)
    if m0 == 0.0:
        raise DegenerateReferenceError("initial order parameter is zero; the rescaled order is undefined")
    return (values + m0) / (2.0 * m0)


def rescale_series(series: Sequence[tuple[float, float]]) -> np.ndarray:
    """Rescale ``[(t, m), ...]``; returns an ``(n, 2)`` array of ``(t, m_res)``."""
    arr = np.asarray(series, dtype=float).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise ArgumentError("cannot rescale an empty series")
    return np.column_stack([arr[:, 0], rescale(arr[:, 1])])


@lru_cache(maxsize=4)
def bubble_counts(n_sites: int) -> np.ndarray:
    """``counts[L - 1, b]``: number of length-``L`` bubbles in basis state ``b``, ``L = 1..N-1``.

    ``A_L`` (circular windows of ``L`` consecutive flipped sites) equals
    ``sum over runs of max(r - L + 1, 0)``, so exact-length runs are the
    second difference ``A_L - 2 A_{L+1} + A_{L+2}``.  The fully flipped word
    has ``A_L = N`` for all ``L`` and hence no bubbles.
    """
    n = n_sites
    mask = (1 << n) - 1
    flipped = np.arange(1 << n, dtype=np.int64) ^ neel_bits(n)
    windows = np.empty((n + 2, flipped.size), dtype=np.int64)
    w = flipped.copy()
    for length in range(1, n + 2):
        if length > 1:
            k = length - 1
            rot = ((flipped >> (k % n)) | (flipped << (n - k % n))) & mask
            w &= rot
        windows[length - 1] = np.bitwise_count(w)
    counts = windows[:-2] - 2 * windows[1:-1] + windows[2:]
    counts = counts[: n - 1].astype(np.float64)
    counts.setflags(write=False)
    return counts


def bubble_density(state, length: int) -> float:
    """``<Sigma_L>``: expected number of length-``L`` bubbles per site."""
    n, p = _probabilities(state)
    if not 1 <= length <= n - 1:
        raise ArgumentError(f"bubble length must be in [1, {n - 1}], got {length}")
    return float(bubble_counts(n)[length - 1] @ p) / n


@lru_cache(maxsize=4)
def _filling_diagonal(n_sites: int) -> np.ndarray:
    weights = np.arange(2, n_sites + 1, dtype=float)
    d = weights @ bubble_counts(n_sites) / n_sites
    d.setflags(write=False)
    return d


def filling_factor(state) -> float:
    """``rho = sum_{L=1}^{N-1} (L + 1) <Sigma_L>``."""
    n, p = _probabilities(state)
    return float(_filling_diagonal(n) @ p)


def filling_factor_by_counting(n_sites: int, bits: int) -> float:
    """``(flipped sites + bubbles) / N`` for a product state, by direct scanning."""
    flips = [((bits >> s) & 1) != ((neel_bits(n_sites) >> s) & 1) for s in range(n_sites)]
    if all(flips):
        return 0.0
    runs = sum(1 for s in range(n_sites) if flips[s] and not flips[s - 1])
    return (sum(flips) + runs) / n_sites


@dataclass(frozen=True)
class SpamModel:
    """Readout errors: ``p1`` reads up as down, ``p2`` reads down as up."""

    p1: float = 0.04
    p2: float = 0.015

    def __post_init__(self):
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0.0 <= v < 0.5:
                raise ArgumentError(f"{name} must be in [0, 0.5), got {v}")

    @property
    def contrast(self) -> float:
        return 1.0 - self.p1 - self.p2

    def m_afm_offset(self, n_sites: int) -> float:
        """Additive bias of the measured staggered order: ``(p2 - p1) * mean(eps)`` (0 for even N)."""
        eps_mean = float(np.mean([1 if s % 2 else -1 for s in range(n_sites)]))
        return (self.p2 - self.p1) * eps_mean

    def expected_m_afm(self, true_value: float, n_sites: int) -> float:
        return self.contrast * true_value + self.m_afm_offset(n_sites)


def sample_bitstrings(state: StateVector, shots: int, spam: SpamModel | None = None, rng_seed: int = 0) -> np.ndarray:
    """Draw ``shots`` basis indices from ``|psi|^2`` and apply independent readout flips.

    Returns an integer array of bit words (bit ``s`` = site ``s`` read as up);
    ``BitConfig(n, int(w))`` converts one entry.
    """
    if shots < 1:
        raise ArgumentError("shots must be >= 1")
    rng = np.random.default_rng(rng_seed)
    p = state.probabilities()
    words = rng.choice(p.size, size=shots, p=p / p.sum()).astype(np.int64)
    if spam is None:
        return words
    n = state.n_sites
    bits = (words[:, None] >> np.arange(n)) & 1
    u = rng.random((shots, n))
    flip = np.where(bits == 1, u < spam.p1, u < spam.p2)
    bits = bits ^ flip
    return (bits << np.arange(n)).sum(axis=1).astype(np.int64)


def as_configs(words, n_sites: int) -> list[BitConfig]:
    return [BitConfig(n_sites, int(w)) for w in words]


def sampled_m_afm(words, n_sites: int) -> tuple[float, float]:
    """Shot average of the staggered order and its standard error."""
    vals = _staggered(n_sites)[np.asarray(words)]
    return float(vals.mean()), float(vals.std(ddof=1) / np.sqrt(vals.size)) if vals.size > 1 else 0.0


def landscape_projection(state, manifolds: Sequence[Manifold]) -> dict[tuple[int, float], float]:
    """Total probability on each (Hamming distance, energy / V) manifold."""
    n, p = _probabilities(state)
    total = sum(m.degeneracy for m in manifolds)
    if total != p.size:
        raise DimensionError(f"landscape covers {total} configurations, state has {p.size}")
    return {(m.hamming_distance, m.energy_over_v): float(p[m.configs].sum()) for m in manifolds}


# ---------------------------------------------------------------------------
# time series


def standard_observables(n_sites: int, bubble_lengths=DEFAULT_BUBBLE_LENGTHS, include_sites: bool = True
                         ) -> dict[str, Callable[[StateVector], float]]:
    """Scalar observables recorded by the protocols, keyed by column name."""
    obs: dict[str, Callable] = {"m_afm": m_afm}
    for length in bubble_lengths:
        obs[f"sigma_{length}"] = lambda s, length=length: bubble_density(s, length)
    obs["rho"] = filling_factor
    obs["sx_total"] = sx_total
    if include_sites:
        for site in range(n_sites):
            obs[f"sz_{site}"] = lambda s, site=site: float(site_sz(s)[site])
    return obs


@dataclass(frozen=True)
class ObservableSample:
    time: float
    m_afm: float
    m_afm_rescaled: float
    sigma_l: dict[int, float]
    rho: float
    sx_total: float
    site_sz: tuple[float, ...] = ()


@dataclass
class TimeSeries:
    """Sampled observables; ``stderr`` is filled for trajectory averages."""

    times: np.ndarray
    values: dict[str, np.ndarray]
    stderr: dict[str, np.ndarray] = field(default_factory=dict)
    trajectories: int = 1
    m_afm_reference: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.m_afm_reference is None and "m_afm" in self.values:
            self.m_afm_reference = float(self.values["m_afm"][0])

    @property
    def m_afm_res(self) -> np.ndarray:
        return rescale(self.values["m_afm"], self.m_afm_reference)

    @property
    def m_afm_res_stderr(self) -> np.ndarray | None:
        err = self.stderr.get("m_afm")
        if err is None:
            return None
        return np.asarray(err) / (2.0 * abs(self.m_afm_reference))

    def column(self, name: str) -> np.ndarray:
        if name == "m_afm_res":
            return self.m_afm_res
        return self.values[name]

    def sample(self, i: int) -> ObservableSample:
        sig = {int(k.split("_")[1]): float(v[i]) for k, v in self.values.items() if k.startswith("sigma_")}
        sites = tuple(float(v[i]) for k, v in sorted(
            ((k, v) for k, v in self.values.items() if k.startswith("sz_")), key=lambda kv: int(kv[0][3:])))
        return ObservableSample(float(self.times[i]), float(self.values["m_afm"][i]), float(self.m_afm_res[i]), sig,
                                float(self.values.get("rho", [np.nan] * (i + 1))[i]),
                                float(self.values.get("sx_total", [np.nan] * (i + 1))[i]), sites)

    def samples(self) -> list[ObservableSample]:
        return [self.sample(i) for i in range(self.times.size)]

    def csv_columns(self) -> list[str]:
        cols = ["m_afm", "m_afm_res"]
        cols += sorted((k for k in self.values if k.startswith("sigma_")), key=lambda k: int(k.split("_")[1]))
        cols += [k for k in ("rho", "sx_total", "m_afm_sampled") if k in self.values]
        return cols

    def write_csv(self, path) -> None:
        """``t_us`` plus observables in 17-significant-digit scientific notation."""
        cols = self.csv_columns()
        with_err = self.trajectories > 1
        header = ["t_us", *cols]
        if with_err:
            header += [f"{c}_stderr" for c in cols]
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for i, t in enumerate(self.times):
                row = [t] + [self.column(c)[i] for c in cols]
                if with_err:
                    row += [self._stderr(c)[i] for c in cols]
                w.writerow([f"{float(x):.16e}" for x in row])

    def _stderr(self, name: str) -> np.ndarray:
        if name == "m_afm_res":
            err = self.m_afm_res_stderr
        else:
            err = self.stderr.get(name)
        return np.zeros(self.times.size) if err is None else np.asarray(err)


def read_csv(path) -> dict[str, np.ndarray]:
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
    return {name: body[:, j] for j, name in enumerate(header)}


def series_from_result(result, m_afm_reference: float | None = None, metadata: Mapping | None = None) -> TimeSeries:
    return TimeSeries(result.times, dict(result.observables), dict(result.stderr), result.trajectory_count,
                      m_afm_reference, dict(metadata or {}))
