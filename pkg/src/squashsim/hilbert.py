"""Truncated number-basis operators, moments, and state diagnostics.

All operators are dense complex matrices on the basis |0>, ..., |d-1>.
Products such as a a^dag mean products of the truncated matrices, so the
commutation relation closes only on the leading (d-1) x (d-1) block; the
corner element of [a, a^dag] is 1 - d.  That convention keeps algebraic
identities between assembled generators exact at finite d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidStateError, ParameterError

__all__ = [
    "annihilation",
    "creation",
    "number_op",
    "quadrature",
    "dissipator",
    "Moments",
    "moments",
    "tail_mass",
    "vacuum_state",
    "fock_state",
    "thermal_state",
    "check_density_matrix",
]


def annihilation(d: int) -> np.ndarray:
    """Annihilation operator: a[i, i+1] = sqrt(i+1)."""
    if d < 2:
        raise ParameterError(f"need d >= 2, got {d}")
    return np.diag(np.sqrt(np.arange(1.0, d)), 1).astype(complex)


def creation(d: int) -> np.ndarray:
    return annihilation(d).conj().T


def number_op(d: int) -> np.ndarray:
    return np.diag(np.arange(d, dtype=float)).astype(complex)


def quadrature(d: int, theta: float) -> np.ndarray:
    """X_theta = (a e^{i theta} + a^dag e^{-i theta}) / 2."""
    a = annihilation(d)
    return 0.5 * (np.exp(1j * theta) * a + np.exp(-1j * theta) * a.conj().T)


def dissipator(L: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """D[L] rho = L rho L^dag - (L^dag L rho + rho L^dag L) / 2."""
    if L.shape != rho.shape:
        raise ParameterError(f"shape mismatch: {L.shape} vs {rho.shape}")
    Ld = L.conj().T
    LdL = Ld @ L
    return L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)


@dataclass(frozen=True)
class Moments:
    """First and second moments of a state; var_x gives Var(X_theta)."""

    mean_a: complex
    mean_aa: complex
    mean_n: float

    def var_x(self, theta: float) -> float:
        e1 = np.exp(1j * theta)
        return (
            0.25 * (1.0 + 2.0 * self.mean_n + 2.0 * (self.mean_aa * e1 * e1).real)
            - (self.mean_a * e1).real ** 2
        )


def moments(rho: np.ndarray) -> Moments:
    """<a>, <a^2>, <a^dag a> of a density matrix."""
    d = rho.shape[0]
    a = annihilation(d)
    mean_a = np.einsum("ij,ji->", a, rho)
    mean_aa = np.einsum("ij,ji->", a @ a, rho)
    mean_n = np.einsum("i,ii->", np.arange(d), rho).real
    return Moments(mean_a=complex(mean_a), mean_aa=complex(mean_aa), mean_n=float(mean_n))


def tail_mass(rho: np.ndarray, margin: int) -> float:
    """Total population in the top ``margin`` basis states."""
    if margin >= rho.shape[0]:
        raise ParameterError(f"margin {margin} must be < dim {rho.shape[0]}")
    return float(np.sum(np.diag(rho)[-margin:]).real)


def vacuum_state(d: int) -> np.ndarray:
    return fock_state(d, 0)


def fock_state(d: int, n: int) -> np.ndarray:
    if not 0 <= n < d:
        raise ParameterError(f"level {n} outside 0..{d - 1}")
    rho = np.zeros((d, d), dtype=complex)
    rho[n, n] = 1.0
    return rho


def thermal_state(d: int, nbar: float) -> np.ndarray:
    """Geometric number populations, renormalized on the truncated basis.

    The truncated-normalized form is the exact fixed point of the truncated
    thermal generator (a birth-death chain in the populations).
    """
    if nbar < 0:
        raise ParameterError(f"nbar must be >= 0, got {nbar}")
    if nbar == 0:
        return vacuum_state(d)
    q = nbar / (nbar + 1.0)
    pops = q ** np.arange(d)
    pops /= pops.sum()
    return np.diag(pops).astype(complex)


def check_density_matrix(
    rho: np.ndarray,
    *,
    herm_tol: float = 1e-12,
    trace_tol: float = 1e-10,
    eig_tol: float = -1e-8,
) -> None:
    """Raise InvalidStateError unless rho is Hermitian, unit trace, and positive.

    Tolerances: max elementwise hermiticity deviation, absolute trace
    deviation from 1, and minimum-eigenvalue floor.
    """
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > herm_tol:
        raise InvalidStateError(f"hermiticity deviation {herm:.3e} > {herm_tol:.1e}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        raise InvalidStateError(f"trace deviation {abs(tr - 1.0):.3e} > {trace_tol:.1e}")
    wmin = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T)).min())
    if wmin < eig_tol:
        raise InvalidStateError(f"minimum eigenvalue {wmin:.3e} < {eig_tol:.1e}")


@dataclass(frozen=True)
class OperatorTable:
    """Cached matrices reused by the integrators (treat as read-only)."""

    d: int
    a: np.ndarray
    ad: np.ndarray
    n: np.ndarray        # a^dag a (diagonal)
    aad: np.ndarray      # a a^dag as a truncated product (diagonal, corner 0)
    X: np.ndarray
    A: np.ndarray        # a - a^dag
    aa: np.ndarray
    adad: np.ndarray
    n_diag: np.ndarray   # real diagonals, for cheap scaling
    aad_diag: np.ndarray
    sq: np.ndarray       # sqrt(1..d-1), the superdiagonal of a


@lru_cache(maxsize=32)
def operator_table(d: int) -> OperatorTable:
    a = annihilation(d)
    ad = a.conj().T
    n_diag = np.arange(d, dtype=float)
    aad_diag = np.concatenate([np.arange(1.0, d), [0.0]])
    return OperatorTable(
        d=d,
        a=a,
        ad=ad,
        n=np.diag(n_diag).astype(complex),
        aad=np.diag(aad_diag).astype(complex),
        X=0.5 * (a + ad),
        A=a - ad,
        aa=a @ a,
        adad=ad @ ad,
        n_diag=n_diag,
        aad_diag=aad_diag,
        sq=np.sqrt(np.arange(1.0, d)),
    )
