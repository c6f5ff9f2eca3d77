"""Entropic functionals in bits."""
from __future__ import annotations

from typing import Iterable

import numpy as np

from . import linalg
from .states import DensityState, InvariantError

NEG_EIG_TOL = 1e-10
SUPPORT_TOL = 1e-12


def _spectrum_entropy(w: np.ndarray) -> float:
    if w.size and w[0] < -NEG_EIG_TOL:
        raise InvariantError(f"negative eigenvalue {w[0]!r} in entropy argument")
    w = w[w > 0]
    return float(-np.sum(w * np.log2(w)))


def matrix_entropy(m: np.ndarray) -> float:
    """von Neumann entropy of a density matrix (ascending LAPACK spectrum)."""
    return _spectrum_entropy(linalg.eigvalsh(m))


def shannon(p) -> float:
    p = np.asarray(p, dtype=float).reshape(-1)
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def von_neumann_entropy(rho: DensityState, subsystems: Iterable[str] | None = None) -> float:
    if subsystems is None:
        return matrix_entropy(rho.matrix)
    subsystems = list(subsystems)
    if not subsystems:
        return 0.0
    return matrix_entropy(linalg.partial_trace(rho.matrix, rho.layout, subsystems))


def _disjoint(*groups) -> list[list[str]]:
    groups = [list(g) for g in groups]
    seen = set()
    for g in groups:
        if seen & set(g):
            raise InvariantError(f"label sets overlap: {groups}")
        seen |= set(g)
    return groups


def mutual_information(rho: DensityState, a: Iterable[str], b: Iterable[str]) -> float:
    a, b = _disjoint(a, b)
    S = lambda labs: von_neumann_entropy(rho, labs)
    return S(a) + S(b) - S(a + b)


def conditional_mutual_information(rho: DensityState, a: Iterable[str], b: Iterable[str],
                                   e: Iterable[str]) -> float:
    """``S(AE) + S(BE) - S(ABE) - S(E)``."""
    a, b, e = _disjoint(a, b, e)
    S = lambda labs: von_neumann_entropy(rho, labs)
    return S(a + e) + S(b + e) - S(a + b + e) - S(e)


def cmi_matrix(m: np.ndarray, dims: tuple[int, int, int]) -> float:
    """CMI ``I(A:B|E)`` of a matrix on ``A (x) B (x) E`` with the given dims."""
    da, db, de = dims
    t = m.reshape(da, db, de, da, db, de)
    s_abe = matrix_entropy(m)
    s_ae = matrix_entropy(np.einsum("abecbf->aecf", t).reshape(da * de, da * de))
    s_be = matrix_entropy(np.einsum("abeafg->befg", t).reshape(db * de, db * de))
    s_e = matrix_entropy(np.einsum("abeabf->ef", t))
    return s_ae + s_be - s_abe - s_e


def classical_cmi(p: np.ndarray) -> float:
    """``I(I:J|K)`` of a 3-way probability array."""
    return (shannon(p.sum(axis=1)) + shannon(p.sum(axis=0)) - shannon(p)
            - shannon(p.sum(axis=(0, 1))))


def _xlogx_sum(q: np.ndarray, axes) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(q > 0, q * np.log2(np.where(q > 0, q, 1.0)), 0.0)
    return -t.sum(axis=axes)


def classical_cmi_batch(q: np.ndarray) -> np.ndarray:
    """Vectorised ``I(I:J|K)`` for arrays of shape ``(n, I, J, K)``."""
    h_ijk = _xlogx_sum(q, (1, 2, 3))
    h_ik = _xlogx_sum(q.sum(axis=2), (1, 2))
    h_jk = _xlogx_sum(q.sum(axis=1), (1, 2))
    h_k = _xlogx_sum(q.sum(axis=(1, 2)), 1)
    return h_ik + h_jk - h_ijk - h_k


def relative_entropy(rho: DensityState | np.ndarray, sigma: DensityState | np.ndarray) -> float:
    """``Tr rho (log rho - log sigma)`` in bits; ``inf`` when supp(rho) is not inside supp(sigma)."""
    r = rho.matrix if isinstance(rho, DensityState) else linalg.as_matrix(rho)
    s = sigma.matrix if isinstance(sigma, DensityState) else linalg.as_matrix(sigma)
    if r.shape != s.shape:
        raise InvariantError(f"dimension mismatch {r.shape} vs {s.shape}")
    ws, vs = np.linalg.eigh(0.5 * (s + s.conj().T))
    # weight of rho on each eigenvector of sigma
    weights = np.einsum("xi,xy,yi->i", vs.conj(), r, vs).real
    if np.any((ws < SUPPORT_TOL) & (weights > 1e-9)):
        return float("inf")
    logs = np.where(ws > SUPPORT_TOL, np.log2(np.where(ws > SUPPORT_TOL, ws, 1.0)), 0.0)
    cross = float(np.sum(weights * logs))
    return max(-matrix_entropy(r) - cross, 0.0)


def binary_entropy(eps: float) -> float:
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"binary entropy argument {eps!r} outside [0, 1]")
    return shannon([eps, 1.0 - eps])


def fannes_cmi_bound(eps: float, d_a: int) -> float:
    """Continuity bound ``8 eps log d_A + 4 H(eps)`` for the conditional mutual information."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"eps={eps!r} outside [0, 1]")
    return 8.0 * eps * np.log2(d_a) + 4.0 * binary_entropy(eps)
