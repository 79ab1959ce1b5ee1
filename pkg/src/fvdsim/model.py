"""Rydberg-ring Hamiltonian, its Ising mapping, and classical energetics.

Frequencies are entered as ordinary frequencies in MHz (``Omega/2pi = 1.8``
is written ``omega=1.8``); operators and energies come back in rad/us, so
time is in microseconds throughout.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from fvdsim.errors import DimensionError, EnumerationCapError, SpecError
from fvdsim.pauli import OperatorSum, site_sign

TWO_PI = 2.0 * np.pi
LANDSCAPE_MAX_SITES = 20
ENERGY_DECIMALS = 9


class Interaction(str, enum.Enum):
    NEAREST_NEIGHBOR = "nearest_neighbor"
    POWER_LAW6 = "power_law6"


class DistanceMode(str, enum.Enum):
    RING_SEPARATION = "ring_separation"
    CHORD = "chord"


@dataclass(frozen=True)
class HamiltonianSpec:
    n_sites: int
    omega: float
    delta_g: float
    delta_l: float
    v_nn: float
    interaction: Interaction = Interaction.POWER_LAW6
    distance_mode: DistanceMode = DistanceMode.RING_SEPARATION

    def __post_init__(self):
        object.__setattr__(self, "interaction", Interaction(self.interaction))
        object.__setattr__(self, "distance_mode", DistanceMode(self.distance_mode))
        if int(self.n_sites) != self.n_sites:
            raise SpecError(f"n_sites must be an integer, got {self.n_sites}")
        if self.n_sites < 4 or self.n_sites % 2:
            raise SpecError(f"n_sites must be even and >= 4, got {self.n_sites}")
        if not self.v_nn > 0:
            raise SpecError(f"v_nn must be positive (antiferromagnetic), got {self.v_nn}")

    def with_(self, **changes) -> "HamiltonianSpec":
        return replace(self, **changes)

    @property
    def nearest_neighbor(self) -> bool:
        return self.interaction is Interaction.NEAREST_NEIGHBOR

    @property
    def v_over_dl(self) -> float:
        return self.v_nn / self.delta_l


@dataclass(frozen=True)
class TfimParams:
    """Ferromagnetic Ising fields ``h_x = 2 Omega / V``, ``h_z = 2 Delta_l / V``."""

    h_x: float
    h_z: float

    @classmethod
    def from_spec(cls, spec: HamiltonianSpec) -> "TfimParams":
        if not spec.nearest_neighbor or not np.isclose(spec.delta_g, spec.v_nn, rtol=1e-12, atol=0.0):
            raise SpecError("the Ising mapping needs nearest-neighbour couplings and delta_g == v_nn")
        return cls(2.0 * spec.omega / spec.v_nn, 2.0 * spec.delta_l / spec.v_nn)


@dataclass(frozen=True)
class BitConfig:
    """Product state; bit ``s`` set means site ``s`` is in ``|up>``."""

    n_sites: int
    bits: int

    def __post_init__(self):
        if not 0 <= self.bits < (1 << self.n_sites):
            raise DimensionError(f"bit word {self.bits:#x} does not fit in {self.n_sites} sites")

    @classmethod
    def from_string(cls, s: str) -> "BitConfig":
        """Site 0 first: ``"0101"`` has sites 1 and 3 up."""
        return cls(len(s), sum(1 << i for i, ch in enumerate(s) if ch == "1"))

    def to_string(self) -> str:
        return "".join("1" if (self.bits >> s) & 1 else "0" for s in range(self.n_sites))

    def occupations(self) -> np.ndarray:
        return (self.bits >> np.arange(self.n_sites)) & 1

    def hamming(self, other: "BitConfig") -> int:
        return bin(self.bits ^ other.bits).count("1")


def neel_bits(n_sites: int) -> int:
    """|Neel> = |down up down up ...>: even physical labels (odd 0-based sites) occupied."""
    return sum(1 << s for s in range(1, n_sites, 2))


def neel_prime_bits(n_sites: int) -> int:
    return sum(1 << s for s in range(0, n_sites, 2))


def neel(n_sites: int) -> BitConfig:
    return BitConfig(n_sites, neel_bits(n_sites))


def neel_prime(n_sites: int) -> BitConfig:
    return BitConfig(n_sites, neel_prime_bits(n_sites))


def ring_distance(i: int, j: int, n_sites: int, mode: DistanceMode = DistanceMode.RING_SEPARATION) -> float:
    sep = abs(i - j) % n_sites
    sep = min(sep, n_sites - sep)
    if DistanceMode(mode) is DistanceMode.RING_SEPARATION:
        return float(sep)
    # chord length scaled so adjacent sites sit at distance 1
    return float(np.sin(np.pi * sep / n_sites) / np.sin(np.pi / n_sites))


def coupling_matrix(spec: HamiltonianSpec) -> np.ndarray:
    """Symmetric ``V_ij`` in MHz with zero diagonal."""
    n = spec.n_sites
    v = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if spec.nearest_neighbor:
                sep = min(j - i, n - (j - i))
                vij = spec.v_nn if sep == 1 else 0.0
            else:
                vij = spec.v_nn / ring_distance(i, j, n, spec.distance_mode) ** 6
            v[i, j] = v[j, i] = vij
    return v


def site_detunings(spec: HamiltonianSpec) -> np.ndarray:
    """Coefficient of ``n_s`` in MHz: ``-delta_g + (-1)**j delta_l``."""
    return np.array([-spec.delta_g + site_sign(s) * spec.delta_l for s in range(spec.n_sites)])


def build_hamiltonian(spec: HamiltonianSpec, angular: bool = True) -> OperatorSum:
    """Hamiltonian of the ring as a Pauli sum (rad/us, or MHz with ``angular=False``)."""
    n = spec.n_sites
    scale = TWO_PI if angular else 1.0
    xs, zs, cs = [], [], []

    def add(x, z, c):
        if c != 0.0:
            xs.append(x)
            zs.append(z)
            cs.append(scale * c)

    for s in range(n):
        add(1 << s, 0, spec.omega / 2.0)
    for s, h in enumerate(site_detunings(spec)):
        add(0, 0, h / 2.0)
        add(0, 1 << s, h / 2.0)
    vmat = coupling_matrix(spec)
    for i in range(n):
        for j in range(i + 1, n):
            vij = vmat[i, j] / 4.0
            if vij:
                add(0, 0, vij)
                add(0, 1 << i, vij)
                add(0, 1 << j, vij)
                add(0, (1 << i) | (1 << j), vij)
    return OperatorSum(n, xs, zs, cs)


def build_tfim(n_sites: int, params: TfimParams) -> OperatorSum:
    """Ferromagnetic ring ``-sum [Z_j Z_{j+1} + h_x X_j + h_z Z_j]`` (dimensionless)."""
    xs, zs, cs = [], [], []
    for s in range(n_sites):
        t = (s + 1) % n_sites
        xs += [0, 1 << s, 0]
        zs += [(1 << s) | (1 << t), 0, 1 << s]
        cs += [-1.0, -params.h_x, -params.h_z]
    return OperatorSum(n_sites, xs, zs, cs)


@lru_cache(maxsize=8)
def _occupations(n_sites: int) -> np.ndarray:
    idx = np.arange(1 << n_sites, dtype=np.int64)
    occ = ((idx[:, None] >> np.arange(n_sites)) & 1).astype(np.float64)
    occ.setflags(write=False)
    return occ


def classical_energies(spec: HamiltonianSpec, angular: bool = True) -> np.ndarray:
    """Diagonal of the Omega = 0 Hamiltonian for every basis configuration."""
    occ = _occupations(spec.n_sites)
    vmat = coupling_matrix(spec)
    e = occ @ site_detunings(spec) + 0.5 * np.sum((occ @ vmat) * occ, axis=1)
    return e * (TWO_PI if angular else 1.0)


def classical_energy(spec: HamiltonianSpec, config: BitConfig, angular: bool = True) -> float:
    if config.n_sites != spec.n_sites:
        raise DimensionError(f"config has {config.n_sites} sites, spec has {spec.n_sites}")
    occ = config.occupations().astype(float)
    e = occ @ site_detunings(spec) + 0.5 * occ @ coupling_matrix(spec) @ occ
    return float(e * (TWO_PI if angular else 1.0))


def bubble_resonance_ratio(length: int) -> float:
    """``V / Delta_l`` at which a length-``L`` bubble costs no energy (standard Ising limit)."""
    if length < 1:
        raise ValueError(f"bubble length must be >= 1, got {length}")
    return float(length)


@dataclass(frozen=True)
class Manifold:
    hamming_distance: int
    energy_over_v: float
    configs: np.ndarray

    @property
    def degeneracy(self) -> int:
        return int(self.configs.size)


def landscape(spec: HamiltonianSpec, reference: BitConfig | None = None) -> list[Manifold]:
    """Group all product states by (Hamming distance, static energy / V) relative to ``reference``.

    Manifolds are sorted by distance, then energy.
    """
    n = spec.n_sites
    if n > LANDSCAPE_MAX_SITES:
        raise EnumerationCapError(f"landscape enumerates 2^N states; N={n} exceeds {LANDSCAPE_MAX_SITES}")
    reference = reference or neel(n)
    if reference.n_sites != n:
        raise DimensionError("reference size mismatch")
    energies = classical_energies(spec, angular=False)
    rel = np.round((energies - energies[reference.bits]) / spec.v_nn, ENERGY_DECIMALS) + 0.0
    idx = np.arange(1 << n, dtype=np.int64)
    dist = np.bitwise_count(idx ^ reference.bits).astype(np.int64)
    order = np.lexsort((idx, rel, dist))
    d_sorted, e_sorted = dist[order], rel[order]
    change = np.flatnonzero((np.diff(d_sorted) != 0) | (np.diff(e_sorted) != 0)) + 1
    out = []
    for lo, hi in zip(np.r_[0, change], np.r_[change, order.size]):
        out.append(Manifold(int(d_sorted[lo]), float(e_sorted[lo]), order[lo:hi].copy()))
    return out


def write_landscape_csv(path, manifolds: list[Manifold], n_sites: int) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hamming_distance", "energy_over_v", "degeneracy", "example_bitstring"])
        for m in manifolds:
            example = BitConfig(n_sites, int(m.configs[0])).to_string()
            w.writerow([m.hamming_distance, f"{m.energy_over_v:.17g}", m.degeneracy, example])
