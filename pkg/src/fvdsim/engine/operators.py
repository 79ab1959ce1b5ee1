"""Matrix-free application of operators to occupation-basis amplitudes.

Flipping bit ``s`` of every index is a view of the amplitude array reshaped
to ``(-1, 2, 2**s)`` with the middle axis reversed, so spin-flip terms are
applied without index arrays or sparse matrices.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from fvdsim.errors import AlgebraError
from fvdsim.model import TWO_PI, HamiltonianSpec, coupling_matrix
from fvdsim.pauli import OperatorSum, _popcount, site_sign


@lru_cache(maxsize=8)
def occupation_table(n_sites: int) -> np.ndarray:
    """``(2**N, N)`` float array of site occupations."""
    idx = np.arange(1 << n_sites, dtype=np.int64)
    occ = ((idx[:, None] >> np.arange(n_sites)) & 1).astype(np.float64)
    occ.setflags(write=False)
    return occ


def flip_bits(vec: np.ndarray, n_sites: int, mask: int) -> np.ndarray:
    """``out[j] = vec[j ^ mask]``."""
    axes = [n_sites - 1 - s for s in range(n_sites) if (mask >> s) & 1]
    return np.flip(vec.reshape((2,) * n_sites), axis=axes).reshape(-1)


def _add_flip(out: np.ndarray, vec: np.ndarray, site: int, coeff) -> None:
    o = out.reshape(-1, 2, 1 << site)
    v = vec.reshape(-1, 2, 1 << site)
    o[:, 0, :] += coeff * v[:, 1, :]
    o[:, 1, :] += coeff * v[:, 0, :]


class CompiledOperator:
    """An OperatorSum prepared for repeated application to state vectors.

    Terms are grouped by flip mask; each group becomes one weight vector over
    source indices, so ``apply`` costs one multiply and one flip per mask.
    """

    def __init__(self, op: OperatorSum):
        self.n_sites = op.n_sites
        self.hermitian = op.hermitian()
        n = op.n_sites
        idx = np.arange(1 << n, dtype=np.uint64)
        groups: dict[int, np.ndarray] = {}
        phases = np.array([1.0, 1.0j, -1.0, -1.0j])
        for x, z, c in zip(op.x, op.z, op.coeffs):
            sign = 1.0 - 2.0 * (_popcount(z & ~idx) & 1) if z else 1.0
            w = c * phases[int(_popcount(x & z)) % 4] * sign
            key = int(x)
            if key in groups:
                groups[key] = groups[key] + w
            else:
                groups[key] = np.broadcast_to(np.asarray(w, dtype=np.complex128), idx.shape).copy()
        self.diag = groups.pop(0, np.zeros(1 << n, dtype=np.complex128))
        self.flips = sorted(groups.items())

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = self.diag * psi
        for mask, w in self.flips:
            out += flip_bits(w * psi, self.n_sites, mask)
        return out

    __call__ = apply


class RingHamiltonian:
    """Ring Hamiltonian as a function of the three controls.

    ``H(omega, dg, dl) = 2pi [ omega/2 sum X_s - dg sum n_s + dl sum eps_s n_s + sum V_ij n_i n_j ]``
    in rad/us; only the transverse part flips bits.
    """

    def __init__(self, spec: HamiltonianSpec):
        self.spec = spec
        self.n_sites = n = spec.n_sites
        occ = occupation_table(n)
        eps = np.array([site_sign(s) for s in range(n)], dtype=float)
        self.count = occ.sum(axis=1)
        self.diag_g = -TWO_PI * self.count
        self.diag_l = TWO_PI * (occ @ eps)
        vmat = coupling_matrix(spec)
        self.diag_int = TWO_PI * 0.5 * np.sum((occ @ vmat) * occ, axis=1)

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    def diagonal(self, delta_g: float, delta_l: float) -> np.ndarray:
        return self.diag_int + delta_g * self.diag_g + delta_l * self.diag_l

    def operator(self, omega: float, delta_g: float, delta_l: float, extra_diag=None) -> "RingOperator":
        diag = self.diagonal(delta_g, delta_l)
        if extra_diag is not None:
            diag = diag + extra_diag
        return RingOperator(self.n_sites, diag, 0.5 * TWO_PI * omega)


@dataclass
class RingOperator:
    """``diag + x_coeff * sum_s X_s`` applied matrix-free."""

    n_sites: int
    diag: np.ndarray
    x_coeff: float

    @property
    def dim(self) -> int:
        return 1 << self.n_sites

    @property
    def hermitian(self) -> bool:
        return not np.iscomplexobj(self.diag) or not np.any(self.diag.imag)

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = self.diag * psi
        if self.x_coeff:
            for s in range(self.n_sites):
                _add_flip(out, psi, s, self.x_coeff)
        return out

    __call__ = apply

    def centered(self) -> tuple["RingOperator", float]:
        """Copy with the diagonal shifted to a symmetric range, plus the removed shift."""
        real = self.diag.real
        shift = 0.5 * (float(real.max()) + float(real.min()))
        return RingOperator(self.n_sites, self.diag - shift, self.x_coeff), shift

    def norm_bound(self) -> float:
        return float(np.max(np.abs(self.diag))) + abs(self.x_coeff) * self.n_sites

    def to_dense(self) -> np.ndarray:
        dim = self.dim
        mat = np.diag(self.diag.astype(np.complex128))
        if self.x_coeff:
            idx = np.arange(dim)
            for s in range(self.n_sites):
                mat[idx ^ (1 << s), idx] += self.x_coeff
        return mat


def compile_operator(op) -> CompiledOperator | RingOperator:
    if isinstance(op, (CompiledOperator, RingOperator)):
        return op
    if isinstance(op, OperatorSum):
        return CompiledOperator(op)
    raise TypeError(f"cannot compile {type(op).__name__}")


def require_hermitian(op: OperatorSum) -> None:
    if not op.hermitian():
        raise AlgebraError("operator is not Hermitian")
