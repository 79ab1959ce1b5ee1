"""State vectors in the occupation basis and their binary checkpoint format.

Basis convention: bit ``s`` of a basis index is the occupation of site ``s``
(0-based; physical label ``j = s + 1``), with ``1`` meaning the Rydberg state
``|up>``.  Checkpoint layout (all little-endian)::

    offset  size  field
    0       4     magic  b"FVDS"
    4       2     version (uint16, currently 1)
    6       2     n_sites (uint16)
    8       4     count   (uint32, number of stored states)
    12      ...   count * 2**n_sites complex64 values, each as (float32 re, float32 im)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fvdsim.errors import DimensionError, FvdError, NormalizationError

CHECKPOINT_MAGIC = b"FVDS"
CHECKPOINT_VERSION = 1
_HEADER = struct.Struct("<4sHHI")

NORM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class StateVector:
    n_sites: int
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.ndim != 1 or amps.size != 1 << self.n_sites:
            raise DimensionError(
                f"expected {1 << self.n_sites} amplitudes for {self.n_sites} sites, got shape {amps.shape}"
            )
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, n_sites: int, index: int) -> "StateVector":
        amps = np.zeros(1 << n_sites, dtype=np.complex128)
        amps[int(index)] = 1.0
        return cls(n_sites, amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def is_normalized(self, tol: float = NORM_TOL) -> bool:
        return abs(self.norm() - 1.0) <= tol

    def require_normalized(self, tol: float = NORM_TOL) -> None:
        nrm = self.norm()
        if abs(nrm - 1.0) > tol:
            raise NormalizationError(f"state norm {nrm!r} deviates from 1 by more than {tol}")

    def normalized(self) -> "StateVector":
        nrm = self.norm()
        if nrm == 0.0:
            raise NormalizationError("cannot normalize the zero vector")
        return StateVector(self.n_sites, self.amplitudes / nrm)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def overlap(self, other: "StateVector") -> complex:
        if other.n_sites != self.n_sites:
            raise DimensionError("states live on different numbers of sites")
        return complex(np.vdot(self.amplitudes, other.amplitudes))

    def fidelity(self, other: "StateVector") -> float:
        return abs(self.overlap(other)) ** 2

    def is_real(self, tol: float = 1e-12) -> bool:
        """True if the amplitudes are real up to one global phase."""
        amps = self.amplitudes
        k = int(np.argmax(np.abs(amps)))
        if abs(amps[k]) == 0.0:
            return True
        rotated = amps * (abs(amps[k]) / amps[k])
        return float(np.max(np.abs(rotated.imag))) <= tol


def save_states(path, states) -> None:
    """Write one or more states of equal size to a checkpoint file."""
    states = list(states)
    if not states:
        raise FvdError("nothing to save")
    n = states[0].n_sites
    if any(s.n_sites != n for s in states):
        raise DimensionError("all checkpointed states must share n_sites")
    with open(Path(path), "wb") as fh:
        fh.write(_HEADER.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, n, len(states)))
        for s in states:
            fh.write(s.amplitudes.astype("<c8").tobytes())


def load_states(path) -> list[StateVector]:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise FvdError("checkpoint truncated before header end")
    magic, version, n, count = _HEADER.unpack_from(raw, 0)
    if magic != CHECKPOINT_MAGIC:
        raise FvdError(f"bad checkpoint magic {magic!r}")
    if version != CHECKPOINT_VERSION:
        raise FvdError(f"unsupported checkpoint version {version}")
    dim = 1 << n
    body = np.frombuffer(raw, dtype="<c8", offset=_HEADER.size)
    if body.size != dim * count:
        raise FvdError(f"checkpoint body holds {body.size} values, expected {dim * count}")
    body = body.astype(np.complex128).reshape(count, dim)
    return [StateVector(n, row) for row in body]
