"""State carriers, classical-to-quantum embeddings and the named example states.

Party convention: a register belongs to Alice if its label starts with ``A``,
to Bob if it starts with ``B`` and to Eve otherwise. Every function that
needs a party split accepts explicit ``alice``/``bob``/``eve`` label groups
that override the convention.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg
from .linalg import SubsystemLayout

STATE_TOL = 1e-10
POVM_TOL = 1e-9
ZERO_PROB = 1e-15


class InvariantError(ValueError):
    """A state, distribution, POVM or channel fails its defining invariant."""


def party_of(label: str) -> str:
    if label.startswith("A"):
        return "A"
    if label.startswith("B"):
        return "B"
    return "E"


def split_parties(labels: Sequence[str], alice=None, bob=None, eve=None):
    """Resolve ``(alice, bob, eve)`` label tuples, defaulting to :func:`party_of`."""
    alice = tuple(alice) if alice is not None else tuple(l for l in labels if party_of(l) == "A")
    bob = tuple(bob) if bob is not None else tuple(l for l in labels if party_of(l) == "B")
    if eve is None:
        taken = set(alice) | set(bob)
        eve = tuple(l for l in labels if l not in taken)
    else:
        eve = tuple(eve)
    groups = alice + bob + eve
    if len(set(groups)) != len(groups):
        raise InvariantError(f"party groups overlap: {alice} / {bob} / {eve}")
    for lab in groups:
        if lab not in labels:
            raise InvariantError(f"unknown label {lab!r}")
    return alice, bob, eve


@dataclass(frozen=True)
class DensityState:
    layout: SubsystemLayout
    matrix: np.ndarray
    classical_labels: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        object.__setattr__(self, "matrix", linalg.as_matrix(self.matrix))
        object.__setattr__(self, "classical_labels", frozenset(self.classical_labels))
        for lab in self.classical_labels:
            self.layout.index(lab)
        n = self.layout.total_dim
        if self.matrix.shape != (n, n):
            raise InvariantError(f"matrix shape {self.matrix.shape} does not match layout {self.layout.dims}")

    @property
    def labels(self) -> tuple[str, ...]:
        return self.layout.labels

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def validate(self, tol: float = STATE_TOL) -> "DensityState":
        m = self.matrix
        if not linalg.is_hermitian(m, tol):
            raise InvariantError("state is not Hermitian")
        tr = float(np.trace(m).real)
        if abs(tr - 1.0) > tol:
            raise InvariantError(f"trace is {tr!r}, expected 1")
        lo = float(linalg.eigvalsh(m)[0]) if m.size else 0.0
        if lo < -tol:
            raise InvariantError(f"negative eigenvalue {lo!r}")
        for lab in self.classical_labels:
            off = _classical_violation(m, self.layout, lab)
            if off > tol:
                raise InvariantError(f"register {lab!r} flagged classical but has off-diagonal blocks ({off:.3g})")
        return self

    def reduced(self, keep: Iterable[str]) -> "DensityState":
        keep = list(keep)
        lay = self.layout.sub(keep)
        return DensityState(lay, linalg.partial_trace(self.matrix, self.layout, keep),
                            self.classical_labels & set(lay.labels))

    def trace_out(self, drop: Iterable[str]) -> "DensityState":
        drop = set(drop)
        return self.reduced([l for l in self.labels if l not in drop])

    def reorder(self, order: Sequence[str]) -> "DensityState":
        order = list(order)
        return DensityState(SubsystemLayout(order, [self.layout.dim(l) for l in order]),
                            linalg.permute_subsystems(self.matrix, self.layout, order),
                            self.classical_labels)

    def relabel(self, mapping: dict) -> "DensityState":
        labels = [mapping.get(l, l) for l in self.labels]
        return DensityState(SubsystemLayout(labels, self.layout.dims), self.matrix,
                            frozenset(mapping.get(l, l) for l in self.classical_labels))

    def tensor(self, other: "DensityState") -> "DensityState":
        return DensityState(self.layout + other.layout, np.kron(self.matrix, other.matrix),
                            self.classical_labels | other.classical_labels)

    def with_classical(self, labels: Iterable[str]) -> "DensityState":
        return DensityState(self.layout, self.matrix, self.classical_labels | set(labels))


def _classical_violation(m: np.ndarray, layout: SubsystemLayout, label: str) -> float:
    i = layout.index(label)
    d = layout.dims[i]
    pre = int(np.prod(layout.dims[:i], dtype=np.int64))
    post = int(np.prod(layout.dims[i + 1:], dtype=np.int64))
    t = m.reshape(pre, d, post, pre, d, post)
    mask = ~np.eye(d, dtype=bool)
    blocks = np.abs(t).transpose(1, 4, 0, 2, 3, 5)[mask]
    return float(blocks.max(initial=0.0))


def dephase(state: DensityState, labels: Iterable[str]) -> DensityState:
    """Measure ``labels`` in the computational basis, keeping the outcomes."""
    m = state.matrix
    labels = list(labels)
    for lab in labels:
        i = state.layout.index(lab)
        d = state.layout.dims[i]
        pre = int(np.prod(state.layout.dims[:i], dtype=np.int64))
        post = int(np.prod(state.layout.dims[i + 1:], dtype=np.int64))
        t = m.reshape(pre, d, post, pre, d, post).copy()
        mask = ~np.eye(d, dtype=bool)
        t.transpose(1, 4, 0, 2, 3, 5)[mask] = 0.0
        m = t.reshape(m.shape)
    return DensityState(state.layout, m, state.classical_labels | set(labels))


@dataclass(frozen=True)
class ClassicalDistribution:
    labels: tuple[str, ...]
    probs: np.ndarray

    def __init__(self, labels: Sequence[str], probs):
        p = np.asarray(probs, dtype=float)
        labels = tuple(labels)
        if p.ndim != len(labels):
            raise InvariantError(f"{len(labels)} labels for a {p.ndim}-way probability tensor")
        if len(set(labels)) != len(labels):
            raise InvariantError(f"duplicate labels {labels}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", p)

    @property
    def alphabet_sizes(self) -> tuple[int, ...]:
        return self.probs.shape

    @property
    def layout(self) -> SubsystemLayout:
        return SubsystemLayout(self.labels, self.probs.shape)

    def validate(self, tol: float = 1e-12) -> "ClassicalDistribution":
        if not np.all(np.isfinite(self.probs)):
            raise InvariantError("non-finite probability")
        if np.any(self.probs < 0):
            raise InvariantError("negative probability")
        s = float(self.probs.sum())
        if abs(s - 1.0) > tol:
            raise InvariantError(f"probabilities sum to {s!r}, expected 1")
        return self

    def marginal(self, keep: Iterable[str]) -> "ClassicalDistribution":
        keep = set(keep)
        axes = tuple(i for i, l in enumerate(self.labels) if l not in keep)
        return ClassicalDistribution([l for l in self.labels if l in keep], self.probs.sum(axis=axes))

    def grouped(self, alice=None, bob=None, eve=None) -> np.ndarray:
        """Probabilities as a 3-way array ``p[i, j, k]`` over the joint party alphabets."""
        alice, bob, eve = split_parties(self.labels, alice, bob, eve)
        # registers outside every group are marginalised
        src = self.marginal(alice + bob + eve)
        order = [src.labels.index(l) for l in alice + bob + eve]
        p = src.probs.transpose(order)
        shape = [int(np.prod(p.shape[:len(alice)], dtype=np.int64)),
                 int(np.prod(p.shape[len(alice):len(alice) + len(bob)], dtype=np.int64)),
                 int(np.prod(p.shape[len(alice) + len(bob):], dtype=np.int64))]
        return p.reshape(shape)


@dataclass(frozen=True)
class Povm:
    elements: tuple

    def __init__(self, elements):
        object.__setattr__(self, "elements", tuple(linalg.as_matrix(e) for e in elements))

    @property
    def dim(self) -> int:
        return self.elements[0].shape[0]

    def validate(self, tol: float = POVM_TOL) -> "Povm":
        if not self.elements:
            raise InvariantError("empty POVM")
        d = self.dim
        total = np.zeros((d, d), dtype=complex)
        for e in self.elements:
            if e.shape != (d, d):
                raise InvariantError("POVM elements differ in shape")
            if not linalg.is_hermitian(e, tol):
                raise InvariantError("POVM element is not Hermitian")
            if linalg.eigvalsh(e)[0] < -tol:
                raise InvariantError("POVM element is not positive")
            total += e
        if np.max(np.abs(total - np.eye(d))) > tol:
            raise InvariantError("POVM elements do not sum to the identity")
        return self


def computational_povm(d: int) -> Povm:
    return Povm([linalg.proj(linalg.ket(i, d)) for i in range(d)])


def basis_povm(unitary: np.ndarray) -> Povm:
    """Projective measurement onto the columns of ``unitary``."""
    return Povm([linalg.proj(unitary[:, i]) for i in range(unitary.shape[1])])


@dataclass(frozen=True)
class QuantumChannel:
    """CPTP map given by a Stinespring isometry ``V: in -> out (x) env``."""
    in_dim: int
    out_dim: int
    env_dim: int
    isometry: np.ndarray

    def validate(self, tol: float = POVM_TOL) -> "QuantumChannel":
        v = self.isometry
        if v.shape != (self.out_dim * self.env_dim, self.in_dim):
            raise InvariantError(f"isometry shape {v.shape} inconsistent with dims "
                                 f"({self.in_dim} -> {self.out_dim} x {self.env_dim})")
        if np.max(np.abs(v.conj().T @ v - np.eye(self.in_dim))) > tol:
            raise InvariantError("Stinespring operator is not an isometry")
        return self

    def kraus(self) -> list[np.ndarray]:
        v = self.isometry.reshape(self.out_dim, self.env_dim, self.in_dim)
        return [v[:, e, :] for e in range(self.env_dim)]

    def apply_matrix(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.kraus())

    def then(self, other: "QuantumChannel") -> "QuantumChannel":
        """Composition ``other o self`` with environments stacked (other's first)."""
        v1 = self.isometry.reshape(self.out_dim, self.env_dim * self.in_dim)
        v2 = other.isometry  # (out2*env2, out1)
        w = (v2 @ v1).reshape(other.out_dim * other.env_dim * self.env_dim, self.in_dim)
        return QuantumChannel(self.in_dim, other.out_dim, other.env_dim * self.env_dim, w)


def identity_channel(d: int) -> QuantumChannel:
    return QuantumChannel(d, d, 1, np.eye(d, dtype=complex))


def replacement_channel(d_in: int, out_state: np.ndarray) -> QuantumChannel:
    """``rho -> Tr(rho) * out_state``; the Stinespring dilation uses env = out (x) in."""
    w, u = np.linalg.eigh(out_state)
    w = np.clip(w, 0, None)
    d_out = out_state.shape[0]
    root = u * np.sqrt(w)  # columns sqrt(w_a)|u_a>
    # V|x> = sum_a sqrt(w_a)|u_a>_out |a>_env1 |x>_env2
    v = np.einsum("oa,xy->oayx", root, np.eye(d_in)).reshape(d_out * d_out * d_in, d_in)
    return QuantumChannel(d_in, d_out, d_out * d_in, v.astype(complex))


def apply_channel(rho: DensityState, ch: QuantumChannel, target: str, out_label: str | None = None) -> DensityState:
    """Apply ``ch`` to register ``target`` of ``rho``."""
    d = rho.layout.dim(target)
    if ch.in_dim != d:
        raise InvariantError(f"channel input dim {ch.in_dim} != dim of {target!r} ({d})")
    lay_big = rho.layout.replace(target, ch.out_dim * ch.env_dim)
    m = linalg.apply_local(rho.matrix, rho.layout, target, ch.isometry)
    i = rho.layout.index(target)
    split = SubsystemLayout(lay_big.labels[:i] + (target, "__env__") + lay_big.labels[i + 1:],
                            lay_big.dims[:i] + (ch.out_dim, ch.env_dim) + lay_big.dims[i + 1:])
    keep = [l for l in split.labels if l != "__env__"]
    m = linalg.partial_trace(m, split, keep)
    lay = rho.layout.replace(target, ch.out_dim, out_label)
    classical = rho.classical_labels - {target}
    return DensityState(lay, m, classical)


@dataclass(frozen=True)
class MeasurementResult:
    probs: np.ndarray
    post_states: tuple


def measure_povm(rho: DensityState, povm: Povm, target: str, post_states: bool = False) -> MeasurementResult:
    """Outcome probabilities ``Tr[(E_m x I) rho]`` and optional normalised post-measurement
    states of the remaining registers."""
    povm.validate()
    d = rho.layout.dim(target)
    if povm.dim != d:
        raise InvariantError(f"POVM acts on dim {povm.dim}, register {target!r} has dim {d}")
    probs = []
    posts = []
    rest = [l for l in rho.labels if l != target]
    lay = rho.layout
    for e in povm.elements:
        # Tr_target[(E x I) rho]
        i = lay.index(target)
        pre = int(np.prod(lay.dims[:i], dtype=np.int64))
        post = int(np.prod(lay.dims[i + 1:], dtype=np.int64))
        t = rho.matrix.reshape(pre, d, post, pre, d, post)
        r = np.einsum("yx,axbcyd->abcd", e, t).reshape(pre * post, pre * post)
        p = float(np.trace(r).real)
        probs.append(max(p, 0.0))
        if post_states:
            sub = lay.sub(rest)
            posts.append(DensityState(sub, r / p, rho.classical_labels - {target}) if p > ZERO_PROB else None)
    return MeasurementResult(np.array(probs), tuple(posts))


def measure_to_register(rho: DensityState, povm: Povm, target: str, out_label: str | None = None) -> DensityState:
    """Replace ``target`` by a classical register holding the POVM outcome."""
    n = len(povm.elements)
    res = measure_povm(rho, povm, target, post_states=True)
    rest = [l for l in rho.labels if l != target]
    out_label = out_label or target
    lay_rest = rho.layout.sub(rest)
    total = np.zeros((n * lay_rest.total_dim,) * 2, dtype=complex)
    for m, (p, st) in enumerate(zip(res.probs, res.post_states)):
        if st is None:
            continue
        total += p * np.kron(linalg.proj(linalg.ket(m, n)), st.matrix)
    lay = SubsystemLayout((out_label,) + lay_rest.labels, (n,) + lay_rest.dims)
    st = DensityState(lay, total, (rho.classical_labels - {target}) | {out_label})
    i = rho.layout.index(target)
    order = list(rest)
    order.insert(i, out_label)
    return st.reorder(order)


# ---------------------------------------------------------------------------
# builders

def from_distribution(p: ClassicalDistribution) -> DensityState:
    """The fully classical (diagonal) state with entries ``p``."""
    p.validate()
    return DensityState(p.layout, np.diag(p.probs.reshape(-1)).astype(complex), frozenset(p.labels))


def ideal_key_state(ell: int, eve_state: DensityState | None = None,
                    alice: str = "A", bob: str = "B") -> DensityState:
    """``2^-ell sum_i |ii><ii|_AB (x) tau_E``."""
    if ell < 1:
        raise InvariantError("key length must be >= 1")
    d = 2 ** ell
    key = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        key[i * d + i, i * d + i] = 1.0 / d
    st = DensityState(SubsystemLayout([alice, bob], [d, d]), key, {alice, bob})
    if eve_state is not None:
        st = st.tensor(eve_state)
    return st


BELL = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


def bell_states() -> list[np.ndarray]:
    s = 1 / np.sqrt(2)
    return [np.array(v, dtype=complex) * s for v in ([1, 0, 0, 1], [1, 0, 0, -1], [0, 1, 1, 0], [0, 1, -1, 0])]


def twisted_key_state(ell: int, twist_unitaries: Sequence[np.ndarray], shield_state: DensityState) -> DensityState:
    """Private state ``U (|psi><psi|^{(x) ell} (x) rho_{A'B'}) U^dagger`` with
    ``U = sum_i |ii><ii| (x) U_i`` (identity on the ``i != j`` blocks).

    ``shield_state`` must have exactly two registers, Alice's shield first.
    Output layout is ``A, B, <shield labels>``.
    """
    d = 2 ** ell
    if len(twist_unitaries) != d:
        raise InvariantError(f"need {d} twist unitaries, got {len(twist_unitaries)}")
    if len(shield_state.labels) != 2:
        raise InvariantError("shield state must have two registers (A', B')")
    ds = shield_state.dim
    for u in twist_unitaries:
        u = np.asarray(u)
        if u.shape != (ds, ds) or np.max(np.abs(u.conj().T @ u - np.eye(ds))) > 1e-9:
            raise InvariantError("twist must be a unitary on the shield space")
    bell = np.zeros(d * d, dtype=complex)
    for i in range(d):
        bell[i * d + i] = 1 / np.sqrt(d)
    key = linalg.proj(bell)
    u = np.eye(d * d * ds, dtype=complex)
    for i in range(d):
        blk = (i * d + i) * ds
        u[blk:blk + ds, blk:blk + ds] = twist_unitaries[i]
    m = u @ np.kron(key, shield_state.matrix) @ u.conj().T
    lay = SubsystemLayout(["A", "B"], [d, d]) + shield_state.layout
    return DensityState(lay, m)


def _amplitudes(p: ClassicalDistribution) -> np.ndarray:
    return np.sqrt(np.clip(p.probs, 0, None)).reshape(-1).astype(complex)


def qqq_embed(p: ClassicalDistribution) -> DensityState:
    """Pure state ``sum sqrt(p_ijk) |ijk>`` on the distribution's registers."""
    p.validate()
    return DensityState(p.layout, linalg.proj(_amplitudes(p)))


def qqq_vector(p: ClassicalDistribution) -> np.ndarray:
    return _amplitudes(p)


def ccq_embed(p: ClassicalDistribution, alice=None, bob=None, eve=None) -> DensityState:
    """``sum_ij p_ij |ij><ij| (x) |psi^ij><psi^ij|`` with
    ``|psi^ij> = sum_k sqrt(p_ijk / p_ij) |k>`` on Eve's joint registers."""
    p.validate()
    alice, bob, eve = split_parties(p.labels, alice, bob, eve)
    order = list(alice + bob + eve)
    # registers outside every group are marginalised
    p = p.marginal(order)
    q = ClassicalDistribution(order, p.probs.transpose([p.labels.index(l) for l in order]))
    lay = q.layout
    d_ab = lay.dims_of(alice + bob)
    d_e = lay.dims_of(eve)
    amp = np.sqrt(np.clip(q.probs, 0, None)).reshape(d_ab, d_e)
    m = np.zeros((d_ab * d_e, d_ab * d_e), dtype=complex)
    for x in range(d_ab):
        v = amp[x]
        if np.dot(v, v) > 0:
            blk = slice(x * d_e, (x + 1) * d_e)
            m[blk, blk] = np.outer(v, v)
    st = DensityState(lay, m, set(alice + bob))
    return st.reorder(p.labels)


def check_unique_k(p: ClassicalDistribution, alice=None, bob=None, eve=None) -> bool:
    """True iff each Alice/Bob value pair allows at most one Eve value."""
    g = p.grouped(alice, bob, eve)
    return bool(np.all((g > ZERO_PROB).sum(axis=2) <= 1))


def dft(d: int) -> np.ndarray:
    w = np.exp(2j * np.pi / d)
    j, k = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    return w ** (j * k) / np.sqrt(d)


def gap_distribution() -> ClassicalDistribution:
    """Four-valued Alice/Bob table with Eve's ``k`` (parity or low bit) and ``l`` (block)."""
    pij = np.zeros((4, 4))
    pij[:2, :2] = 1 / 8
    pij[2, 2] = 1 / 4
    pij[3, 3] = 1 / 4
    p = np.zeros((4, 4, 2, 2))
    for i, j in itertools.product(range(4), range(4)):
        if pij[i, j] == 0:
            continue
        k = (i + j) % 2 if i < 2 else i % 2
        p[i, j, k, i // 2] = pij[i, j]
    return ClassicalDistribution(["A", "B", "E", "F"], p)


def flower_state(d: int) -> DensityState:
    """``(1/2d) sum_k |00><00| (x) |kk><kk| (x) |k><k| + |11><11| (x) |kk><kk| (x) U|k><k|U^dagger``
    with ``U`` the ``d``-dimensional Fourier transform. Layout ``A, B, A', B', E``."""
    u = dft(d)
    lay = SubsystemLayout(["A", "B", "A'", "B'", "E"], [2, 2, d, d, d])
    m = np.zeros((lay.total_dim,) * 2, dtype=complex)
    for bit in (0, 1):
        for k in range(d):
            e = linalg.ket(k, d) if bit == 0 else u[:, k]
            v = linalg.kron_all([linalg.ket(bit, 2)[:, None], linalg.ket(bit, 2)[:, None],
                                 linalg.ket(k, d)[:, None], linalg.ket(k, d)[:, None], e[:, None]])
            m += np.outer(v, v.conj()) / (2 * d)
    return DensityState(lay, m, {"A", "B", "A'", "B'"})


def flower_eve_ensemble(d: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Eve's conditional states for the ``2d`` values of Alice's ``(bit, k)``."""
    u = dft(d)
    states = [linalg.proj(linalg.ket(k, d)) for k in range(d)] + [linalg.proj(u[:, k]) for k in range(d)]
    return np.full(2 * d, 1 / (2 * d)), states


def bell_lock_state() -> DensityState:
    """``(1/4) sum_i |ii><ii|_AB (x) |psi_i><psi_i|_{EE'}`` over the four Bell states."""
    lay = SubsystemLayout(["A", "B", "E", "E'"], [4, 4, 2, 2])
    m = np.zeros((64, 64), dtype=complex)
    for i, b in enumerate(bell_states()):
        ab = np.zeros((16, 16))
        ab[i * 4 + i, i * 4 + i] = 1
        m += 0.25 * np.kron(ab, linalg.proj(b))
    return DensityState(lay, m, {"A", "B"})


def embed_counterexample_vector() -> np.ndarray:
    """``(|00>_AB|+>_{A'}|+>_E + |11>_AB|phi+>_{A'E}) / sqrt(2)`` in layout ``A, B, A', E``."""
    plus = np.array([1, 1]) / np.sqrt(2)
    k0, k1 = linalg.ket(0, 2), linalg.ket(1, 2)
    phi = (np.kron(k0, k0) + np.kron(k1, k1)) / np.sqrt(2)
    v = np.kron(np.kron(k0, k0), np.kron(plus, plus)) + np.kron(np.kron(k1, k1), phi)
    return v / np.sqrt(2)


def embed_counterexample_distribution() -> ClassicalDistribution:
    v = embed_counterexample_vector()
    return ClassicalDistribution(["A", "B", "A'", "E"], (np.abs(v) ** 2).reshape(2, 2, 2, 2))


def embed_counterexample() -> DensityState:
    v = embed_counterexample_vector()
    return DensityState(SubsystemLayout(["A", "B", "A'", "E"], [2, 2, 2, 2]), linalg.proj(v))


NAMED_EXAMPLES = ("gap", "flower", "bell_lock", "embed_counterexample")


def named_example(name: str, d: int = 2) -> DensityState:
    name = name.replace("-", "_")
    if name == "gap":
        return from_distribution(gap_distribution())
    if name == "flower":
        return flower_state(d)
    if name == "bell_lock":
        return bell_lock_state()
    if name == "embed_counterexample":
        return embed_counterexample()
    raise KeyError(f"unknown example {name!r}; choose from {NAMED_EXAMPLES}")


def purify(state: DensityState, label: str = "R", tol: float = 1e-12) -> tuple[np.ndarray, SubsystemLayout]:
    """Purification ``sum_m sqrt(l_m) |m> |m>_R`` with ``R`` of dimension rank."""
    w, v = np.linalg.eigh(0.5 * (state.matrix + state.matrix.conj().T))
    keep = w > tol
    w, v = w[keep], v[:, keep]
    psi = (v * np.sqrt(w)).reshape(-1)
    return psi, state.layout.append(label, int(keep.sum()))
