"""Dense complex matrix kernel: tensor products, partial traces, spectra.

Matrices are plain ``numpy`` complex arrays. Subsystem bookkeeping is done by
:class:`SubsystemLayout`, whose basis ordering is lexicographic with the first
label most significant (the ``numpy.kron`` convention).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10


class LinalgError(ValueError):
    """Raised on inconsistent shapes, unknown labels or non-Hermitian input."""


@dataclass(frozen=True)
class SubsystemLayout:
    labels: tuple[str, ...]
    dims: tuple[int, ...]

    def __init__(self, labels: Sequence[str], dims: Sequence[int]):
        labels = tuple(labels)
        dims = tuple(int(d) for d in dims)
        if len(labels) != len(dims):
            raise LinalgError("labels and dims differ in length")
        if len(set(labels)) != len(labels):
            raise LinalgError(f"duplicate labels in {labels}")
        if any(d < 1 for d in dims):
            raise LinalgError(f"dimensions must be >= 1, got {dims}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.dims else 1

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise LinalgError(f"unknown subsystem label {label!r}") from None

    def dim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def dims_of(self, labels: Iterable[str]) -> int:
        return int(np.prod([self.dim(lab) for lab in labels], dtype=np.int64))

    def sub(self, keep: Iterable[str]) -> "SubsystemLayout":
        """Layout restricted to ``keep``, in this layout's order."""
        keep = set(keep)
        for lab in keep:
            self.index(lab)
        pairs = [(l, d) for l, d in zip(self.labels, self.dims) if l in keep]
        return SubsystemLayout([p[0] for p in pairs], [p[1] for p in pairs])

    def without(self, drop: Iterable[str]) -> "SubsystemLayout":
        drop = set(drop)
        return self.sub([l for l in self.labels if l not in drop])

    def replace(self, label: str, new_dim: int, new_label: str | None = None) -> "SubsystemLayout":
        i = self.index(label)
        labels = list(self.labels)
        dims = list(self.dims)
        dims[i] = new_dim
        if new_label is not None:
            labels[i] = new_label
        return SubsystemLayout(labels, dims)

    def append(self, label: str, dim: int) -> "SubsystemLayout":
        return SubsystemLayout(self.labels + (label,), self.dims + (dim,))

    def __add__(self, other: "SubsystemLayout") -> "SubsystemLayout":
        return SubsystemLayout(self.labels + other.labels, self.dims + other.dims)


@dataclass(frozen=True)
class HermitianEigenSystem:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ v.conj().T


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2:
        raise LinalgError(f"expected a 2-d matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise LinalgError("matrix has non-finite entries")
    return a


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats: Iterable) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return m.shape[0] == m.shape[1] and float(np.max(np.abs(m - m.conj().T), initial=0.0)) <= tol


def _check_layout(m: np.ndarray, layout: SubsystemLayout) -> None:
    n = layout.total_dim
    if m.shape != (n, n):
        raise LinalgError(f"matrix shape {m.shape} does not match layout dims {layout.dims}")


def partial_trace(m, layout: SubsystemLayout, keep: Iterable[str]) -> np.ndarray:
    """Trace out every subsystem of ``layout`` not listed in ``keep``.

    The kept subsystems stay in layout order. Keeping nothing returns the
    1x1 matrix holding the trace.
    """
    m = np.asarray(m)
    _check_layout(m, layout)
    keep = set(keep)
    for lab in keep:
        layout.index(lab)
    n = len(layout.dims)
    t = m.reshape(layout.dims + layout.dims)
    kept = [i for i, lab in enumerate(layout.labels) if lab in keep]
    traced = [i for i in range(n) if i not in kept]
    # einsum over repeated indices for traced axes
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    row = letters[:n]
    col = letters[n:]
    for i in traced:
        col[i] = row[i]
    out = [row[i] for i in kept] + [col[i] for i in kept]
    res = np.einsum("".join(row + col) + "->" + "".join(out), t)
    d = int(np.prod([layout.dims[i] for i in kept], dtype=np.int64))
    return res.reshape(d, d)


def permute_subsystems(m, layout: SubsystemLayout, order: Sequence[str]) -> np.ndarray:
    """Reorder the tensor factors of ``m`` to ``order`` (a permutation of labels)."""
    m = np.asarray(m)
    _check_layout(m, layout)
    if sorted(order) != sorted(layout.labels):
        raise LinalgError(f"{order} is not a permutation of {layout.labels}")
    n = len(layout.dims)
    perm = [layout.index(lab) for lab in order]
    t = m.reshape(layout.dims + layout.dims).transpose(perm + [p + n for p in perm])
    return t.reshape(m.shape)


def apply_local(m, layout: SubsystemLayout, target: str, op: np.ndarray) -> np.ndarray:
    """Return ``(I x op x I) m (I x op x I)^dagger`` with ``op`` acting on ``target``.

    ``op`` may be rectangular (an isometry into a larger space); the caller is
    responsible for the resulting layout.
    """
    m = np.asarray(m)
    _check_layout(m, layout)
    i = layout.index(target)
    d = layout.dims[i]
    if op.shape[1] != d:
        raise LinalgError(f"operator with {op.shape[1]} columns cannot act on {target} (dim {d})")
    pre = int(np.prod(layout.dims[:i], dtype=np.int64))
    post = int(np.prod(layout.dims[i + 1:], dtype=np.int64))
    t = m.reshape(pre, d, post, pre, d, post)
    t = np.einsum("ox,axbcyd,py->aobcpd", op, t, op.conj(), optimize=True)
    k = op.shape[0]
    return t.reshape(pre * k * post, pre * k * post)


def apply_local_vector(psi, layout: SubsystemLayout, target: str, op: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi)
    i = layout.index(target)
    d = layout.dims[i]
    pre = int(np.prod(layout.dims[:i], dtype=np.int64))
    post = int(np.prod(layout.dims[i + 1:], dtype=np.int64))
    t = psi.reshape(pre, d, post)
    return np.einsum("ox,axb->aob", op, t).reshape(-1)


def jacobi_eigh(m, tol: float = 1e-14, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi diagonalisation of a complex Hermitian matrix.

    Returns unsorted eigenvalues and the unitary whose columns are the
    eigenvectors.
    """
    a = np.array(m, dtype=complex)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    if n < 2:
        return a.diagonal().real.copy(), v
    scale = max(float(np.max(np.abs(a))), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a - np.diag(a.diagonal()))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300 or mag < 1e-18 * scale:
                    continue
                # phase-rotate to a real symmetric 2x2 problem
                phase = apq / mag
                app = a[p, p].real
                aqq = a[q, q].real
                theta = (aqq - app) / (2.0 * mag)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # rotation J acts on columns p, q: J[p,p]=c, J[q,q]=c, J[p,q]=s*phase, J[q,p]=-s*conj(phase)
                colp = a[:, p].copy()
                colq = a[:, q].copy()
                a[:, p] = c * colp - s * np.conj(phase) * colq
                a[:, q] = s * phase * colp + c * colq
                rowp = a[p, :].copy()
                rowq = a[q, :].copy()
                a[p, :] = c * rowp - s * phase * rowq
                a[q, :] = s * np.conj(phase) * rowp + c * rowq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * np.conj(phase) * vq
                v[:, q] = s * phase * vp + c * vq
    return a.diagonal().real.copy(), v


def hermitian_eig(m, tol: float = HERMITIAN_TOL) -> HermitianEigenSystem:
    """Eigen-decomposition of a Hermitian matrix, eigenvalues descending."""
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise LinalgError(f"matrix is not square: {m.shape}")
    if not is_hermitian(m, tol):
        raise LinalgError("matrix is not Hermitian within tolerance")
    m = 0.5 * (m + m.conj().T)
    w, v = jacobi_eigh(m)
    order = np.argsort(-w, kind="stable")
    return HermitianEigenSystem(w[order], v[:, order])


def eigvalsh(m) -> np.ndarray:
    """Fast ascending eigenvalues of a Hermitian matrix (LAPACK), for hot loops."""
    m = np.asarray(m)
    return np.linalg.eigvalsh(0.5 * (m + m.conj().T))


def trace_distance(rho, sigma) -> float:
    """``(1/2) Tr |rho - sigma|``."""
    rho = as_matrix(rho)
    sigma = as_matrix(sigma)
    if rho.shape != sigma.shape:
        raise LinalgError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    diff = rho - sigma
    if not is_hermitian(diff, 1e-9):
        raise LinalgError("trace_distance expects Hermitian arguments")
    return 0.5 * float(np.sum(np.abs(eigvalsh(diff))))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_isometry(d_in: int, d_out: int, rng: np.random.Generator) -> np.ndarray:
    return random_unitary(d_out, rng)[:, :d_in]


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    rank = d if rank is None else rank
    g = rng.standard_normal((d, rank)) + 1j * rng.standard_normal((d, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return 0.5 * (g + g.conj().T)


def ket(index: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=complex)
    v[index] = 1.0
    return v


def proj(v) -> np.ndarray:
    v = np.asarray(v, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())
