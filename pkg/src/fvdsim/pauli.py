"""Exact algebra of Pauli strings on a ring of two-level systems.

A Pauli string is stored symplectically as two bit masks ``(x, z)`` over the
sites (two bits per site: I=(0,0), X=(1,0), Z=(0,1), Y=(1,1)) and denotes the
Hermitian operator ``i**popcount(x & z) * X**x Z**z``.  Operator sums keep
their terms as parallel arrays sorted by the packed key ``x << n | z``, so
merging after each commutator level is a single ``np.unique`` pass.

Spin convention: ``Z|up> = +|up>`` and ``n = (1 + Z) / 2`` is the Rydberg
occupation.  In the occupation basis (bit 1 = up) a string acts as::

    P|b> = i**(x.z) * (-1)**popcount(z & ~b) |b ^ x>
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np
from scipy import integrate

from fvdsim.errors import DimensionError, DomainError, OrderCapError
from fvdsim.state import StateVector

MAX_SITES = 31
DEFAULT_MAX_BCH_ORDER = 6

_PHASES = np.array([1.0, 1.0j, -1.0, -1.0j])
_LETTER_BITS = {"I": (0, 0), "X": (1, 0), "Y": (1, 1), "Z": (0, 1)}
_BITS_LETTER = {v: k for k, v in _LETTER_BITS.items()}
# relative magnitude below which merged coefficients count as cancelled
_DROP_RTOL = 1e-14


def _popcount(a):
    return np.bitwise_count(np.asarray(a, dtype=np.uint64)).astype(np.int64)


def _check_sites(n_sites: int) -> int:
    n_sites = int(n_sites)
    if not 1 <= n_sites <= MAX_SITES:
        raise DimensionError(f"n_sites must be in [1, {MAX_SITES}], got {n_sites}")
    return n_sites


def _masks_from_letters(letters) -> tuple[int, int]:
    x = z = 0
    for site, letter in enumerate(letters):
        try:
            xb, zb = _LETTER_BITS[letter.upper()]
        except KeyError:
            raise ValueError(f"unknown Pauli letter {letter!r}") from None
        x |= xb << site
        z |= zb << site
    return x, z


def _letters_from_masks(n_sites: int, x: int, z: int) -> str:
    return "".join(_BITS_LETTER[((x >> s) & 1, (z >> s) & 1)] for s in range(n_sites))


@dataclass(frozen=True)
class PauliString:
    """A single weighted Pauli string; ``letters[s]`` acts on site ``s``."""

    n_sites: int
    x: int
    z: int
    coefficient: complex = 1.0

    @classmethod
    def from_letters(cls, letters, coefficient: complex = 1.0) -> "PauliString":
        letters = "".join(letters)
        x, z = _masks_from_letters(letters)
        return cls(_check_sites(len(letters)), x, z, complex(coefficient))

    @classmethod
    def single(cls, n_sites: int, site: int, letter: str, coefficient: complex = 1.0) -> "PauliString":
        letters = ["I"] * n_sites
        letters[site] = letter
        return cls.from_letters(letters, coefficient)

    @property
    def letters(self) -> str:
        return _letters_from_masks(self.n_sites, self.x, self.z)

    def to_sum(self) -> "OperatorSum":
        return OperatorSum(self.n_sites, [self.x], [self.z], [self.coefficient])


def multiply(a: PauliString, b: PauliString) -> PauliString:
    """Product ``a @ b`` with the {+-1, +-i} phase folded into the coefficient."""
    if a.n_sites != b.n_sites:
        raise DimensionError(f"cannot multiply strings on {a.n_sites} and {b.n_sites} sites")
    x3, z3 = a.x ^ b.x, a.z ^ b.z
    e = (
        bin(a.x & a.z).count("1")
        + bin(b.x & b.z).count("1")
        - bin(x3 & z3).count("1")
        + 2 * bin(a.z & b.x).count("1")
    ) % 4
    return PauliString(a.n_sites, x3, z3, complex(a.coefficient * b.coefficient * _PHASES[e]))


class OperatorSum:
    """Weighted sum of Pauli strings in canonical merged form.

    Instances are immutable; arithmetic returns new objects.
    """

    __slots__ = ("n_sites", "x", "z", "coeffs")

    def __init__(self, n_sites: int, x=(), z=(), coeffs=(), *, _canonical: bool = False):
        n_sites = _check_sites(n_sites)
        x = np.asarray(x, dtype=np.uint64).reshape(-1)
        z = np.asarray(z, dtype=np.uint64).reshape(-1)
        c = np.asarray(coeffs, dtype=np.complex128).reshape(-1)
        if not (x.size == z.size == c.size):
            raise ValueError("x, z and coeffs must have equal length")
        if not _canonical:
            x, z, c = _canonicalize(n_sites, x, z, c)
        for arr in (x, z, c):
            arr.setflags(write=False)
        object.__setattr__(self, "n_sites", n_sites)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "coeffs", c)

    def __setattr__(self, name, value):
        raise AttributeError("OperatorSum is immutable")

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls, n_sites: int) -> "OperatorSum":
        return cls(n_sites)

    @classmethod
    def identity(cls, n_sites: int, coefficient: complex = 1.0) -> "OperatorSum":
        return cls(n_sites, [0], [0], [coefficient])

    @classmethod
    def from_terms(cls, n_sites: int, terms) -> "OperatorSum":
        """Build from ``{letters: coeff}`` or an iterable of PauliStrings / ``(letters, coeff)`` pairs."""
        if isinstance(terms, Mapping):
            terms = terms.items()
        xs, zs, cs = [], [], []
        for term in terms:
            if isinstance(term, PauliString):
                if term.n_sites != n_sites:
                    raise DimensionError("term size mismatch")
                xs.append(term.x)
                zs.append(term.z)
                cs.append(term.coefficient)
                continue
            letters, coeff = term
            if len(letters) != n_sites:
                raise DimensionError(f"pattern {letters!r} does not have {n_sites} letters")
            x, z = _masks_from_letters(letters)
            xs.append(x)
            zs.append(z)
            cs.append(coeff)
        return cls(n_sites, xs, zs, cs)

    @classmethod
    def single(cls, n_sites: int, site: int, letter: str, coefficient: complex = 1.0) -> "OperatorSum":
        return PauliString.single(n_sites, site, letter, coefficient).to_sum()

    @classmethod
    def number(cls, n_sites: int, site: int, coefficient: complex = 1.0) -> "OperatorSum":
        """Rydberg occupation ``n_s = (1 + Z_s) / 2``."""
        bit = 1 << site
        half = 0.5 * coefficient
        return cls(n_sites, [0, 0], [0, bit], [half, half])

    # views ----------------------------------------------------------------
    def __len__(self) -> int:
        return int(self.coeffs.size)

    @property
    def term_count(self) -> int:
        return len(self)

    @property
    def terms(self) -> dict[str, complex]:
        return {
            _letters_from_masks(self.n_sites, int(x), int(z)): complex(c)
            for x, z, c in zip(self.x, self.z, self.coeffs)
        }

    def strings(self) -> list[PauliString]:
        return [PauliString(self.n_sites, int(x), int(z), complex(c)) for x, z, c in zip(self.x, self.z, self.coeffs)]

    def coefficient(self, letters) -> complex:
        x, z = _masks_from_letters(letters)
        hit = np.nonzero((self.x == x) & (self.z == z))[0]
        return complex(self.coeffs[hit[0]]) if hit.size else 0.0j

    def is_zero(self) -> bool:
        return self.coeffs.size == 0

    def is_diagonal(self) -> bool:
        return not np.any(self.x)

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm (sum of |coefficients|)."""
        return float(np.sum(np.abs(self.coeffs)))

    def adjoint(self) -> "OperatorSum":
        return OperatorSum(self.n_sites, self.x, self.z, np.conj(self.coeffs), _canonical=True)

    def hermitian(self, tol: float = 1e-12) -> bool:
        if self.is_zero():
            return True
        return float(np.max(np.abs(self.coeffs.imag))) <= tol

    def __repr__(self) -> str:
        shown = list(self.terms.items())[:6]
        body = " + ".join(f"({c:.6g}){p}" for p, c in shown)
        more = " + ..." if len(self) > 6 else ""
        return f"OperatorSum(n_sites={self.n_sites}, {len(self)} terms: {body}{more})"

    # arithmetic -----------------------------------------------------------
    def _same_size(self, other: "OperatorSum") -> None:
        if not isinstance(other, OperatorSum):
            raise TypeError(f"expected OperatorSum, got {type(other).__name__}")
        if other.n_sites != self.n_sites:
            raise DimensionError(f"operator sizes differ: {self.n_sites} vs {other.n_sites}")

    def __add__(self, other: "OperatorSum") -> "OperatorSum":
        self._same_size(other)
        return OperatorSum(
            self.n_sites,
            np.concatenate([self.x, other.x]),
            np.concatenate([self.z, other.z]),
            np.concatenate([self.coeffs, other.coeffs]),
        )

    def __neg__(self) -> "OperatorSum":
        return OperatorSum(self.n_sites, self.x, self.z, -self.coeffs, _canonical=True)

    def __sub__(self, other: "OperatorSum") -> "OperatorSum":
        return self + (-other)

    def __mul__(self, scalar) -> "OperatorSum":
        if isinstance(scalar, OperatorSum):
            return NotImplemented
        return OperatorSum(self.n_sites, self.x, self.z, self.coeffs * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "OperatorSum":
        return self * (1.0 / scalar)

    def __matmul__(self, other: "OperatorSum") -> "OperatorSum":
        self._same_size(other)
        return _product(self, other, commutator_only=False)

    def allclose(self, other: "OperatorSum", atol: float = 1e-12) -> bool:
        diff = self - other
        return diff.is_zero() or float(np.max(np.abs(diff.coeffs))) <= atol


def _canonicalize(n_sites, x, z, c):
    if c.size == 0:
        return x, z, c
    key = (x << np.uint64(n_sites)) | z
    uniq, inverse = np.unique(key, return_inverse=True)
    merged = np.zeros(uniq.size, dtype=np.complex128)
    np.add.at(merged, inverse, c)
    scale = float(np.max(np.abs(c)))
    keep = np.abs(merged) > _DROP_RTOL * scale
    uniq = uniq[keep]
    mask = np.uint64((1 << n_sites) - 1)
    return (uniq >> np.uint64(n_sites)), (uniq & mask), merged[keep]


_CHUNK = 1 << 21


def _product(a: OperatorSum, b: OperatorSum, commutator_only: bool) -> OperatorSum:
    n = a.n_sites
    if a.is_zero() or b.is_zero():
        return OperatorSum.zero(n)
    xb, zb, cb = b.x, b.z, b.coeffs
    self_b = _popcount(xb & zb)
    self_a = _popcount(a.x & a.z)
    rows = max(1, _CHUNK // len(b))
    xs, zs, cs = [], [], []
    for start in range(0, len(a), rows):
        sl = slice(start, start + rows)
        xa, za, ca, sa = a.x[sl, None], a.z[sl, None], a.coeffs[sl], self_a[sl]
        cross_ab = _popcount(za & xb)
        if commutator_only:
            anti = ((cross_ab + _popcount(xa & zb)) & 1).astype(bool)
            ii, jj = np.nonzero(anti)
            factor = 2.0
            cross = cross_ab[ii, jj]
        else:
            ii, jj = np.divmod(np.arange(xa.shape[0] * len(b)), len(b))
            factor = 1.0
            cross = cross_ab.reshape(-1)
        if ii.size == 0:
            continue
        x3 = xa[ii, 0] ^ xb[jj]
        z3 = za[ii, 0] ^ zb[jj]
        e = (sa[ii] + self_b[jj] - _popcount(x3 & z3) + 2 * cross) % 4
        xs.append(x3)
        zs.append(z3)
        cs.append(factor * ca[ii] * cb[jj] * _PHASES[e])
    if not xs:
        return OperatorSum.zero(n)
    return OperatorSum(n, np.concatenate(xs), np.concatenate(zs), np.concatenate(cs))


def commutator(a: OperatorSum, b: OperatorSum) -> OperatorSum:
    """``[a, b] = ab - ba``; only anticommuting string pairs contribute (as ``2ab``)."""
    a._same_size(b)
    return _product(a, b, commutator_only=True)


def nested_commutators(h: OperatorSum, m: OperatorSum, k: int, max_order: int = DEFAULT_MAX_BCH_ORDER) -> list[OperatorSum]:
    """All of ``ad_h^0(m), ..., ad_h^k(m)``."""
    if k < 0:
        raise OrderCapError(f"order must be non-negative, got {k}")
    if k > max_order:
        raise OrderCapError(f"order {k} exceeds the cap {max_order}; term count grows exponentially")
    h._same_size(m)
    out = [m]
    for _ in range(k):
        out.append(commutator(h, out[-1]))
    return out


def nested_commutator(h: OperatorSum, m: OperatorSum, k: int, max_order: int = DEFAULT_MAX_BCH_ORDER) -> OperatorSum:
    return nested_commutators(h, m, k, max_order)[-1]


def _fwht(f: np.ndarray) -> np.ndarray:
    """Walsh-Hadamard transform: ``out[z] = sum_b f[b] (-1)**popcount(z & b)``."""
    a = np.array(f, dtype=np.complex128)
    size = a.size
    h = 1
    while h < size:
        a = a.reshape(-1, 2, h)
        lo = a[:, 0, :] + a[:, 1, :]
        hi = a[:, 0, :] - a[:, 1, :]
        a = np.stack([lo, hi], axis=1)
        h *= 2
    return a.reshape(size)


def expectation(op: OperatorSum, state: StateVector) -> complex:
    """``<psi|op|psi>`` evaluated string by string on the amplitudes.

    Terms are grouped by their flip mask ``x``; each group needs the overlap
    vector ``conj(psi[b ^ x]) * psi[b]`` once, after which every ``z`` in the
    group is a signed sum (or one Walsh-Hadamard transform for large groups).
    """
    if op.n_sites != state.n_sites:
        raise DimensionError(f"operator on {op.n_sites} sites, state on {state.n_sites}")
    state.require_normalized()
    if op.is_zero():
        return 0.0j
    n = op.n_sites
    psi = state.amplitudes
    idx = np.arange(psi.size, dtype=np.uint64)
    order = np.argsort(op.x, kind="stable")
    xs, zs, cs = op.x[order], op.z[order], op.coeffs[order]
    bounds = np.flatnonzero(np.diff(xs)) + 1
    parts = []
    for lo, hi in zip(np.r_[0, bounds], np.r_[bounds, xs.size]):
        xm = xs[lo]
        f = np.conj(psi[idx ^ xm]) * psi if xm else np.abs(psi) ** 2
        zg, cg = zs[lo:hi], cs[lo:hi]
        if hi - lo > max(2, n // 2):
            w = _fwht(f)[zg.astype(np.int64)]
            vals = w * (1.0 - 2.0 * (_popcount(zg) & 1))
        else:
            vals = np.array(
                [np.sum(f * (1.0 - 2.0 * (_popcount(zv & ~idx) & 1))) for zv in zg],
                dtype=np.complex128,
            )
        parts.append(np.sum(cg * _PHASES[_popcount(xm & zg) % 4] * vals))
    return complex(np.sum(np.array(parts)))


def staggered_magnetization(n_sites: int) -> OperatorSum:
    """``M = (1/N) sum_j eps_j Z_j`` with ``eps_j = (-1)**j`` for physical label ``j = s + 1``."""
    z = [1 << s for s in range(n_sites)]
    eps = [site_sign(s) for s in range(n_sites)]
    return OperatorSum(n_sites, [0] * n_sites, z, np.array(eps, dtype=float) / n_sites)


def site_sign(site: int) -> int:
    """``(-1)**j`` for 0-based site ``s`` (``j = s + 1``): -1 on even ``s``, +1 on odd ``s``."""
    return 1 if site % 2 else -1


def total_sigma_x(n_sites: int) -> OperatorSum:
    return OperatorSum(n_sites, [1 << s for s in range(n_sites)], [0] * n_sites, np.ones(n_sites))


def tfim_c2_ratio_integral(omega_over_v: float) -> float:
    """``(1/pi) * int_0^pi (2w - cos k) / sqrt(4w^2 + 1 - 4w cos k) dk`` with ``w = omega/V``.

    Equals minus the per-site transverse magnetization of the critical-free
    ordered TFIM ground state; defined on ``0 < w < 0.5``.
    """
    w = float(omega_over_v)
    if not 0.0 < w < 0.5:
        raise DomainError(f"omega_over_v must lie in (0, 0.5), got {w}")

    def integrand(k):
        return (2.0 * w - np.cos(k)) / np.sqrt(4.0 * w * w + 1.0 - 4.0 * w * np.cos(k))

    val, err = integrate.quad(integrand, 0.0, np.pi, epsabs=1e-13, epsrel=1e-13, limit=200)
    if err > 1e-10 * np.pi:
        raise DomainError(f"quadrature error estimate {err} above tolerance")
    return val / np.pi


@dataclass(frozen=True)
class NestedCommutatorReport:
    """Expectation values of ``C_k = ad_H^k(M)`` on the two reference states.

    ``C_k`` is Hermitian for even ``k`` and anti-Hermitian for odd ``k``;
    the reported numbers are the real part (even) or imaginary part (odd).
    """

    order: int
    operator: OperatorSum
    expectation_neel: float
    expectation_pqg: float | None
    term_count: int
    analytic_reference: float | None = None

    @property
    def abs_error(self) -> float | None:
        if self.analytic_reference is None:
            return None
        return abs(self.expectation_neel - self.analytic_reference)

    def to_dict(self) -> dict:
        return {
            "order": self.order,
            "term_count": self.term_count,
            "expectation_neel": self.expectation_neel,
            "expectation_pqg": self.expectation_pqg,
            "analytic_reference": self.analytic_reference,
            "abs_error": self.abs_error,
        }


def _real_part(order: int, value: complex) -> float:
    return float(value.real if order % 2 == 0 else value.imag)


def nested_commutator_reports(
    h: OperatorSum,
    m: OperatorSum,
    max_order: int,
    neel: StateVector,
    pqg: StateVector | None = None,
    references: Mapping[int, float] | None = None,
    cap: int = DEFAULT_MAX_BCH_ORDER,
) -> list[NestedCommutatorReport]:
    references = references or {}
    reports = []
    for k, ck in enumerate(nested_commutators(h, m, max_order, cap)):
        en = _real_part(k, expectation(ck, neel))
        ep = None if pqg is None else _real_part(k, expectation(ck, pqg))
        reports.append(NestedCommutatorReport(k, ck, en, ep, len(ck), references.get(k)))
    return reports


def neel_reference(order: int, omega: float, delta_g: float, v_nn: float, delta_l: float, nearest_neighbor: bool) -> float | None:
    """Closed-form ``<C_k>`` on the Neel state where one is known.

    Odd orders vanish for any real state; ``<C_0> = 1`` and ``<C_2> = omega**2``
    hold for any couplings; the fourth order has a closed form only for
    nearest-neighbour couplings at zero staggered field.
    """
    if order % 2 == 1:
        return 0.0
    if order == 0:
        return 1.0
    if order == 2:
        return omega**2
    if order == 4 and nearest_neighbor and delta_l == 0.0:
        return omega**2 * (2 * v_nn**2 - 2 * delta_g * v_nn + omega**2 + delta_g**2)
    return None


def sum_strings(n_sites: int, strings: Iterable[PauliString]) -> OperatorSum:
    return OperatorSum.from_terms(n_sites, list(strings))
