"""Shared dense-matrix oracles.

Every oracle here is built from Kronecker products of 2x2 matrices and
numpy/scipy dense linear algebra, independently of the package's bit-level
kernels.  Site ``s`` is bit ``s`` of a basis index, so the Kronecker order
is ``site N-1 (x) ... (x) site 0``; within a site index 0 is down, 1 is up.
"""

from __future__ import annotations

from functools import reduce

import numpy as np
import pytest

I2 = np.eye(2, dtype=complex)
X2 = np.array([[0, 1], [1, 0]], dtype=complex)
Z2 = np.diag([-1.0, 1.0]).astype(complex)  # Z|up> = +|up>, up is index 1
Y2 = 1j * X2 @ Z2
N2 = np.diag([0.0, 1.0]).astype(complex)
LETTERS = {"I": I2, "X": X2, "Y": Y2, "Z": Z2}


def site_operator(n_sites: int, site: int, mat: np.ndarray) -> np.ndarray:
    mats = [mat if s == site else I2 for s in reversed(range(n_sites))]
    return reduce(np.kron, mats)


def dense_letters(letters: str) -> np.ndarray:
    """Dense matrix of a Pauli word with ``letters[s]`` acting on site ``s``."""
    return reduce(np.kron, [LETTERS[ch] for ch in reversed(letters)])


def dense_sum(op) -> np.ndarray:
    """Dense matrix of an ``OperatorSum`` via its letter representation."""
    dim = 1 << op.n_sites
    out = np.zeros((dim, dim), dtype=complex)
    for word, coeff in op.terms.items():
        out += coeff * dense_letters(word)
    return out


def dense_ring_hamiltonian(spec, angular: bool = True) -> np.ndarray:
    """``sum Omega/2 X_s + sum h_s n_s + sum_{i<j} V_ij n_i n_j`` from occupation matrices."""
    from fvdsim.model import coupling_matrix

    n = spec.n_sites
    dim = 1 << n
    h = np.zeros((dim, dim), dtype=complex)
    nops = [site_operator(n, s, N2) for s in range(n)]
    for s in range(n):
        eps = -1.0 if s % 2 == 0 else 1.0
        h += 0.5 * spec.omega * site_operator(n, s, X2)
        h += (-spec.delta_g + eps * spec.delta_l) * nops[s]
    v = coupling_matrix(spec)
    for i in range(n):
        for j in range(i + 1, n):
            h += v[i, j] * nops[i] @ nops[j]
    return h * (2.0 * np.pi if angular else 1.0)


def random_state(n_sites: int, seed: int = 0):
    from fvdsim.state import StateVector

    rng = np.random.default_rng(seed)
    psi = rng.normal(size=1 << n_sites) + 1j * rng.normal(size=1 << n_sites)
    return StateVector(n_sites, psi / np.linalg.norm(psi))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
