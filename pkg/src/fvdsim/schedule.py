"""Piecewise control schedules for (Omega, Delta_g, Delta_l).

Each segment has its own duration and one control curve per parameter;
curves are continuous inside a segment and may jump at segment boundaries
(quenches).  Curves are evaluated on the fractional position ``u`` in
``[0, 1]`` inside their segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fvdsim.errors import ArgumentError
from fvdsim.model import HamiltonianSpec


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, u: float) -> float:
        return float(self.value)

    @property
    def is_constant(self) -> bool:
        return True


@dataclass(frozen=True)
class LinearRamp:
    start: float
    end: float

    def __call__(self, u: float) -> float:
        return float(self.start + (self.end - self.start) * u)

    @property
    def is_constant(self) -> bool:
        return self.start == self.end


@dataclass(frozen=True)
class SqrtRamp:
    """``start + (end - start) * sqrt(u)``; infinite slope at the segment start."""

    start: float
    end: float

    def __call__(self, u: float) -> float:
        return float(self.start + (self.end - self.start) * np.sqrt(max(u, 0.0)))

    @property
    def is_constant(self) -> bool:
        return self.start == self.end


ControlCurve = Constant | LinearRamp | SqrtRamp


def as_curve(value) -> ControlCurve:
    if isinstance(value, (Constant, LinearRamp, SqrtRamp)):
        return value
    return Constant(float(value))


@dataclass(frozen=True)
class Segment:
    duration: float
    omega: ControlCurve
    delta_g: ControlCurve
    delta_l: ControlCurve

    def __post_init__(self):
        if not self.duration > 0:
            raise ArgumentError(f"segment duration must be positive, got {self.duration}")
        for name in ("omega", "delta_g", "delta_l"):
            object.__setattr__(self, name, as_curve(getattr(self, name)))

    @property
    def is_constant(self) -> bool:
        return self.omega.is_constant and self.delta_g.is_constant and self.delta_l.is_constant

    def controls(self, u: float) -> tuple[float, float, float]:
        return self.omega(u), self.delta_g(u), self.delta_l(u)


@dataclass(frozen=True)
class Schedule:
    """Control sequence on top of the static geometry of ``base``.

    Only ``n_sites``, ``v_nn``, ``interaction`` and ``distance_mode`` of
    ``base`` are used; the frequency fields come from the segments.
    """

    base: HamiltonianSpec
    segments: tuple[Segment, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ArgumentError("a schedule needs at least one segment")

    @classmethod
    def constant(cls, spec: HamiltonianSpec, duration: float) -> "Schedule":
        """Hold the parameters of ``spec`` fixed for ``duration`` us."""
        return cls(spec, (Segment(duration, spec.omega, spec.delta_g, spec.delta_l),))

    @property
    def span(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([s.duration for s in self.segments])])

    def then(self, other: "Schedule") -> "Schedule":
        if other.base.n_sites != self.base.n_sites:
            raise ArgumentError("cannot chain schedules on different ring sizes")
        return Schedule(self.base, self.segments + other.segments)

    def locate(self, t: float) -> tuple[int, float]:
        """Segment index and local offset; boundary times belong to the later segment."""
        edges = self.boundaries
        k = int(np.searchsorted(edges, t, side="right") - 1)
        k = min(max(k, 0), len(self.segments) - 1)
        return k, t - edges[k]

    def controls(self, t: float) -> tuple[float, float, float]:
        k, local = self.locate(t)
        seg = self.segments[k]
        return seg.controls(min(max(local / seg.duration, 0.0), 1.0))
