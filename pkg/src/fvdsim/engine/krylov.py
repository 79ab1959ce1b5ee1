"""Krylov-subspace propagators and a restarted Lanczos eigensolver.

``KrylovSpace`` builds an Arnoldi basis (full re-orthogonalisation, so for
Hermitian operators it is Lanczos) and then answers questions about
``exp(-i tau A) v`` for any ``tau`` from the small projected matrix: the
propagated vector, its squared norm, and the a-posteriori error estimate
``beta * h_{m+1,m} * |[exp(-i tau H_m)]_{m,1}|``.
"""

from __future__ import annotations

import numpy as np
from scipy import linalg

from fvdsim.errors import ConvergenceError, StepSizeError

DEFAULT_KRYLOV_DIM = 12
DEFAULT_STEP_TOL = 1e-9
_BREAKDOWN = 1e-13


def _orthogonalize(basis: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Classical Gram-Schmidt applied twice against the rows of ``basis``."""
    h = basis.conj() @ w
    w = w - basis.T @ h
    h2 = basis.conj() @ w
    w = w - basis.T @ h2
    return w, h + h2


class KrylovSpace:
    def __init__(self, apply, v: np.ndarray, m: int = DEFAULT_KRYLOV_DIM, hermitian: bool = True):
        self.beta = float(np.linalg.norm(v))
        self.hermitian = hermitian
        dim = v.size
        m = max(1, min(m, dim))
        basis = np.empty((m, dim), dtype=np.complex128)
        hess = np.zeros((m, m), dtype=np.complex128)
        self.h_next = 0.0
        if self.beta == 0.0:
            self.basis = basis[:1] * 0
            self.hm = hess[:1, :1]
            self._prepare()
            return
        basis[0] = v / self.beta
        size = m
        for j in range(m):
            w = apply(basis[j])
            w, h = _orthogonalize(basis[: j + 1], w)
            hess[: j + 1, j] = h
            nrm = float(np.linalg.norm(w))
            scale = max(float(np.max(np.abs(h))), 1.0)
            if nrm <= _BREAKDOWN * scale:
                # invariant subspace: the projection is exact
                size = j + 1
                self.h_next = 0.0
                break
            if j + 1 < m:
                hess[j + 1, j] = nrm
                basis[j + 1] = w / nrm
            else:
                self.h_next = nrm
        self.basis = basis[:size]
        self.hm = hess[:size, :size]
        self._prepare()

    def _prepare(self):
        if self.hermitian:
            t = 0.5 * (self.hm + self.hm.conj().T)
            self._evals, self._evecs = np.linalg.eigh(t)
            self._e1 = self._evecs[0].conj()

    @property
    def size(self) -> int:
        return self.basis.shape[0]

    def coefficients(self, tau: float) -> np.ndarray:
        """``exp(-i tau H_m) e_1`` in the Krylov basis."""
        if self.hermitian:
            return self._evecs @ (np.exp(-1j * tau * self._evals) * self._e1)
        return linalg.expm(-1j * tau * self.hm)[:, 0]

    def error(self, tau: float) -> float:
        if self.h_next == 0.0:
            return 0.0
        return self.beta * self.h_next * abs(self.coefficients(tau)[-1])

    def vector(self, tau: float) -> np.ndarray:
        return self.beta * (self.basis.T @ self.coefficients(tau))

    def norm2(self, tau: float) -> float:
        c = self.coefficients(tau)
        return self.beta**2 * float(np.real(np.vdot(c, c)))

    def max_step(self, tol: float, tau_max: float) -> float:
        """Largest step in ``(0, tau_max]`` whose error estimate stays below ``tol``."""
        if self.error(tau_max) <= tol:
            return tau_max
        lo, hi = 0.0, tau_max
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if self.error(mid) <= tol:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-3 * hi:
                break
        return lo


class DenseSpace:
    """Exact stand-in for KrylovSpace on small Hilbert spaces."""

    h_next = 0.0

    def __init__(self, propagator: "DensePropagator", v: np.ndarray):
        self.prop = propagator
        self.coeff = propagator.to_eigenbasis(v)

    def error(self, tau: float) -> float:
        return 0.0

    def vector(self, tau: float) -> np.ndarray:
        return self.prop.from_eigenbasis(np.exp(-1j * tau * self.prop.evals) * self.coeff)

    def norm2(self, tau: float) -> float:
        w = self.vector(tau)
        return float(np.real(np.vdot(w, w)))

    def max_step(self, tol: float, tau_max: float) -> float:
        return tau_max


class DensePropagator:
    """Eigendecomposition of a small (possibly non-Hermitian) matrix."""

    def __init__(self, matrix: np.ndarray, hermitian: bool):
        if hermitian:
            self.evals, self.evecs = np.linalg.eigh(matrix)
            self._inv = self.evecs.conj().T
        else:
            self.evals, self.evecs = np.linalg.eig(matrix)
            self._inv = np.linalg.inv(self.evecs)

    def to_eigenbasis(self, v):
        return self._inv @ v

    def from_eigenbasis(self, c):
        return self.evecs @ c

    def space(self, v):
        return DenseSpace(self, v)


def expm_multiply(apply, v: np.ndarray, tau: float, *, m: int = DEFAULT_KRYLOV_DIM, tol: float = DEFAULT_STEP_TOL,
                  hermitian: bool = True, min_step: float = 1e-14) -> tuple[np.ndarray, int]:
    """``exp(-i tau A) v`` with adaptive sub-steps; returns the vector and the step count."""
    done = 0.0
    steps = 0
    w = v
    total = abs(tau)
    sign = 1.0 if tau >= 0 else -1.0
    while total - done > 0.0:
        space = KrylovSpace(apply, w, m, hermitian)
        remaining = total - done
        step = space.max_step(tol, remaining)
        if step < min_step and step < remaining:
            raise StepSizeError(f"Krylov sub-step collapsed to {step:.3e} at tau={done:.6g}")
        w = space.vector(sign * step)
        done = total if step >= remaining else done + step
        steps += 1
    return w, steps


def lanczos_lowest(apply, v0: np.ndarray, k: int = 1, *, tol: float = 1e-9, max_basis: int = 60,
                   max_restarts: int = 200, keep_extra: int = 3):
    """Lowest ``k`` eigenpairs of a Hermitian operator.

    Rayleigh-Ritz on a fully re-orthogonalised Krylov basis with thick
    restarts: after ``max_basis`` vectors the basis is compressed to the
    lowest ``k + keep_extra`` Ritz vectors and expansion continues from the
    leading residual.  Convergence: every wanted residual norm below
    ``tol * ||A||`` where ``||A||`` is the largest |Ritz value| seen.

    Returns ``(evals, evecs, residuals)`` with eigenvectors as columns.  If
    the start vector spans an invariant subspace smaller than ``k``, fewer
    pairs are returned.
    """
    dim = v0.size
    max_basis = max(min(max_basis, dim), min(k + keep_extra + 1, dim))
    basis = [v0 / np.linalg.norm(v0)]
    images = [apply(basis[0])]
    norm_est = 0.0
    residuals = None
    next_vec = images[0]
    for _ in range(max_restarts):
        exhausted = False
        while len(basis) < max_basis:
            w, _ = _orthogonalize(np.array(basis), next_vec)
            nrm = float(np.linalg.norm(w))
            if nrm <= 1e-12 * max(norm_est, 1.0) or len(basis) >= dim:
                exhausted = True
                break
            basis.append(w / nrm)
            images.append(apply(basis[-1]))
            next_vec = images[-1]
        vb = np.array(basis)
        wb = np.array(images)
        t = vb.conj() @ wb.T
        t = 0.5 * (t + t.conj().T)
        theta, y = np.linalg.eigh(t)
        norm_est = max(norm_est, float(np.max(np.abs(theta))))
        want = min(k, theta.size)
        x = y[:, :want].T @ vb
        ax = y[:, :want].T @ wb
        res = ax - theta[:want, None] * x
        residuals = np.linalg.norm(res, axis=1)
        if exhausted or np.all(residuals <= tol * max(norm_est, 1e-300)):
            return theta[:want], x.T, residuals
        keep = min(k + keep_extra, theta.size - 1)
        basis = list(y[:, :keep].T @ vb)
        images = list(y[:, :keep].T @ wb)
        lead = int(np.argmax(residuals))
        next_vec = res[lead]
    raise ConvergenceError(
        f"Lanczos did not converge after {max_restarts} restarts", residual=float(np.max(residuals))
    )
