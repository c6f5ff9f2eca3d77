"""Classical LOPC protocols, their coherent versions and key-quality checks.

A protocol is a list of steps of four kinds, each owned by Alice or Bob:

``randomize``
    attach a fresh classical register ``<party>_r<n>`` with a given distribution;
``discard``
    forget a register (the coherent version hands it to Eve instead);
``permute``
    permute the computational basis of one or more of the party's registers;
``communicate``
    publish a classical register: identical copies ``<receiver>_c<n>`` and
    ``E_c<n>`` are appended for the other party and for Eve.

``n`` is the step index, so generated labels are unique within a protocol.
Text form, one step per line (``#`` starts a comment)::

    randomize A 0.5,0.5
    permute A 2,0,1,3            # all of Alice's registers jointly
    permute A:A,A_r0 1,0,3,2,...  # explicit registers, first most significant
    communicate A A
    discard B B
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg
from .linalg import SubsystemLayout
from .states import (ClassicalDistribution, DensityState, InvariantError, QuantumChannel, apply_channel,
                     dephase, party_of, qqq_vector, split_parties, STATE_TOL)

KINDS = ("randomize", "discard", "permute", "communicate")
# dense states beyond this size are refused by the protocol machinery
MAX_TOTAL_DIM = 1024


@dataclass(frozen=True)
class ProtocolStep:
    kind: str
    party: str
    labels: tuple[str, ...] | None = None
    permutation: tuple[int, ...] | None = None
    distribution: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvariantError(f"unknown step kind {self.kind!r}")
        if self.party not in ("A", "B"):
            raise InvariantError(f"steps are taken by A or B, not {self.party!r}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        if self.kind in ("discard", "communicate") and (not self.labels or len(self.labels) != 1):
            raise InvariantError(f"{self.kind} needs exactly one register")
        if self.kind == "permute":
            perm = tuple(int(x) for x in (self.permutation or ()))
            if sorted(perm) != list(range(len(perm))) or not perm:
                raise InvariantError(f"{perm} is not a permutation of 0..{len(perm) - 1}")
            object.__setattr__(self, "permutation", perm)
        if self.kind == "randomize":
            dist = tuple(float(x) for x in (self.distribution or ()))
            if not dist or min(dist) < 0 or abs(sum(dist) - 1.0) > 1e-12:
                raise InvariantError(f"randomness distribution {dist} is not a probability vector")
            object.__setattr__(self, "distribution", dist)

    def to_text(self) -> str:
        head = f"{self.kind} {self.party}"
        if self.kind in ("discard", "communicate"):
            return f"{head} {self.labels[0]}"
        if self.kind == "randomize":
            return f"{head} " + ",".join(repr(x) for x in self.distribution)
        target = f"{head}:{','.join(self.labels)}" if self.labels else head
        return f"{target} " + ",".join(str(x) for x in self.permutation)


@dataclass(frozen=True)
class Protocol:
    steps: tuple[ProtocolStep, ...] = ()

    def __init__(self, steps: Sequence[ProtocolStep] = ()):
        object.__setattr__(self, "steps", tuple(steps))

    def to_text(self) -> str:
        return "".join(s.to_text() + "\n" for s in self.steps)

    def dry_run(self, layout: SubsystemLayout) -> SubsystemLayout:
        """Check every step against the evolving layout; return the final layout."""
        for n, step in enumerate(self.steps):
            layout = _next_layout(layout, step, n)
        return layout


def parse_protocol(text: str) -> Protocol:
    steps = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            kind, target = parts[0], parts[1]
            party, _, labs = target.partition(":")
            labels = tuple(l for l in labs.split(",") if l) or None
            arg = parts[2] if len(parts) > 2 else None
            if len(parts) > 3:
                raise IndexError
            if kind in ("discard", "communicate"):
                if labels is None:
                    labels = (arg,) if arg else None
                steps.append(ProtocolStep(kind, party, labels))
            elif kind == "randomize":
                steps.append(ProtocolStep(kind, party, distribution=[float(x) for x in arg.split(",")]))
            elif kind == "permute":
                steps.append(ProtocolStep(kind, party, labels, permutation=[int(x) for x in arg.split(",")]))
            else:
                raise InvariantError(f"unknown step kind {kind!r}")
        except (IndexError, AttributeError, ValueError) as exc:
            if isinstance(exc, InvariantError):
                raise InvariantError(f"line {lineno}: {exc}") from None
            raise ValueError(f"line {lineno}: cannot parse {raw.strip()!r}") from None
    return Protocol(steps)


def _other(party: str) -> str:
    return "B" if party == "A" else "A"


def _step_labels(layout: SubsystemLayout, step: ProtocolStep) -> tuple[str, ...]:
    if step.labels is None:
        labs = tuple(l for l in layout.labels if party_of(l) == step.party)
        if not labs:
            raise InvariantError(f"party {step.party} holds no registers")
        return labs
    for lab in step.labels:
        layout.index(lab)
        if party_of(lab) != step.party:
            raise InvariantError(f"register {lab!r} does not belong to {step.party}")
    return step.labels


def _next_layout(layout: SubsystemLayout, step: ProtocolStep, n: int) -> SubsystemLayout:
    labs = _step_labels(layout, step) if step.kind != "randomize" else ()
    if step.kind == "randomize":
        out = layout.append(f"{step.party}_r{n}", len(step.distribution))
    elif step.kind == "discard":
        out = layout.without(labs)
    elif step.kind == "permute":
        d = layout.dims_of(labs)
        if len(step.permutation) != d:
            raise InvariantError(f"permutation of length {len(step.permutation)} on registers of dim {d}")
        out = layout
    else:
        d = layout.dim(labs[0])
        out = layout.append(f"{_other(step.party)}_c{n}", d).append(f"E_c{n}", d)
    if out.total_dim > MAX_TOTAL_DIM:
        raise InvariantError(f"step {n} grows the state to dimension {out.total_dim} > {MAX_TOTAL_DIM}")
    return out


def permutation_indices(layout: SubsystemLayout, labels: Sequence[str], perm: Sequence[int]) -> np.ndarray:
    """Image of every basis index of ``layout`` under ``perm`` acting on the joint
    index of ``labels`` (first listed label most significant)."""
    idx = np.indices(layout.dims).reshape(len(layout.dims), -1)
    pos = [layout.index(l) for l in labels]
    sub_dims = [layout.dims[p] for p in pos]
    joint = np.ravel_multi_index(tuple(idx[p] for p in pos), sub_dims)
    new = np.unravel_index(np.asarray(perm)[joint], sub_dims)
    idx = idx.copy()
    for p, v in zip(pos, new):
        idx[p] = v
    return np.ravel_multi_index(tuple(idx), layout.dims)


def copy_isometry(d: int) -> np.ndarray:
    """``|x> -> |x>|x>|x>``: a CNOT fan-out onto two fresh ancillas."""
    v = np.zeros((d, d, d, d), dtype=complex)
    for x in range(d):
        v[x, x, x, x] = 1.0
    return v.reshape(d ** 3, d)


def _classical_check(rho: DensityState, label: str) -> None:
    i = rho.layout.index(label)
    d = rho.layout.dims[i]
    pre = int(np.prod(rho.layout.dims[:i], dtype=np.int64))
    post = int(np.prod(rho.layout.dims[i + 1:], dtype=np.int64))
    t = np.abs(rho.matrix.reshape(pre, d, post, pre, d, post))
    off = t.transpose(1, 4, 0, 2, 3, 5)[~np.eye(d, dtype=bool)].max(initial=0.0)
    if off > STATE_TOL:
        raise InvariantError(f"cannot communicate {label!r}: register is not classical ({off:.3g})")


def _append_copies(m: np.ndarray, layout: SubsystemLayout, label: str, names: Sequence[str]):
    """Copy register ``label`` into fresh registers ``names``, appended at the end."""
    d = layout.dim(label)
    big = linalg.apply_local(m, layout, label, copy_isometry(d))
    i = layout.index(label)
    split = SubsystemLayout(layout.labels[:i] + (label,) + tuple(names) + layout.labels[i + 1:],
                            layout.dims[:i] + (d,) * 3 + layout.dims[i + 1:])
    final = layout.labels + tuple(names)
    return linalg.permute_subsystems(big, split, final), SubsystemLayout(final, layout.dims + (d, d))


def apply_step(rho: DensityState, step: ProtocolStep, n: int) -> DensityState:
    _next_layout(rho.layout, step, n)
    if step.kind == "randomize":
        lab = f"{step.party}_r{n}"
        extra = DensityState(SubsystemLayout([lab], [len(step.distribution)]),
                             np.diag(step.distribution).astype(complex), {lab})
        return rho.tensor(extra)
    labs = _step_labels(rho.layout, step)
    if step.kind == "discard":
        return rho.trace_out(labs)
    if step.kind == "permute":
        f = permutation_indices(rho.layout, labs, step.permutation)
        m = np.empty_like(rho.matrix)
        m[np.ix_(f, f)] = rho.matrix
        return DensityState(rho.layout, m, rho.classical_labels)
    _classical_check(rho, labs[0])
    names = (f"{_other(step.party)}_c{n}", f"E_c{n}")
    m, lay = _append_copies(rho.matrix, rho.layout, labs[0], names)
    return DensityState(lay, m, rho.classical_labels | {labs[0], *names})


def apply_classical_protocol(rho: DensityState, proto: Protocol) -> DensityState:
    """Run ``proto`` on ``rho``; Eve receives nothing but the communicated copies."""
    proto.dry_run(rho.layout)
    for n, step in enumerate(proto.steps):
        rho = apply_step(rho, step, n)
    return rho


# ---------------------------------------------------------------------------
# coherent version

@dataclass(frozen=True)
class CoherentStep:
    kind: str  # attach-superposition | transfer-to-eve | permutation-unitary | cnot-fanout
    party: str
    labels: tuple[str, ...] | None = None
    permutation: tuple[int, ...] | None = None
    amplitudes: tuple[float, ...] | None = None
    source: ProtocolStep | None = None


_COHERENT_KIND = {"randomize": "attach-superposition", "discard": "transfer-to-eve",
                  "permute": "permutation-unitary", "communicate": "cnot-fanout"}


@dataclass(frozen=True)
class CoherentProtocol:
    steps: tuple[CoherentStep, ...]


def coherent_version(proto: Protocol) -> CoherentProtocol:
    out = []
    for step in proto.steps:
        amps = tuple(float(np.sqrt(p)) for p in step.distribution) if step.distribution else None
        out.append(CoherentStep(_COHERENT_KIND[step.kind], step.party, step.labels, step.permutation,
                                amps, step))
    return CoherentProtocol(tuple(out))


def eve_name(label: str) -> str:
    """Label a register takes once it has been handed to Eve."""
    return f"E_{label}"


@dataclass
class PureState:
    vector: np.ndarray
    layout: SubsystemLayout
    transferred: list = field(default_factory=list)

    def density(self) -> DensityState:
        return DensityState(self.layout, linalg.proj(self.vector))


def apply_coherent(psi: PureState, cp: CoherentProtocol) -> PureState:
    """Run a coherent protocol on a pure state; every step is an isometry."""
    v, lay, moved = psi.vector, psi.layout, list(psi.transferred)
    Protocol([cs.source for cs in cp.steps]).dry_run(lay.without(moved))
    for n, cs in enumerate(cp.steps):
        if cs.kind == "attach-superposition":
            lab = f"{cs.party}_r{n}"
            v = np.kron(v, np.asarray(cs.amplitudes, dtype=complex))
            lay = lay.append(lab, len(cs.amplitudes))
            continue
        labs = _step_labels(lay, cs.source)
        if cs.kind == "transfer-to-eve":
            new = eve_name(labs[0])
            lay = SubsystemLayout([new if l == labs[0] else l for l in lay.labels], lay.dims)
            moved.append(new)
        elif cs.kind == "permutation-unitary":
            f = permutation_indices(lay, labs, cs.permutation)
            w = np.empty_like(v)
            w[f] = v
            v = w
        else:
            d = lay.dim(labs[0])
            names = (f"{_other(cs.party)}_c{n}", f"E_c{n}")
            w = linalg.apply_local_vector(v, lay, labs[0], copy_isometry(d))
            i = lay.index(labs[0])
            split = SubsystemLayout(lay.labels[:i] + (labs[0],) + names + lay.labels[i + 1:],
                                    lay.dims[:i] + (d,) * 3 + lay.dims[i + 1:])
            final = lay.labels + names
            perm = [split.index(l) for l in final]
            v = w.reshape(split.dims).transpose(perm).reshape(-1)
            lay = SubsystemLayout(final, lay.dims + (d, d))
    return PureState(v, lay, moved)


def commutation_check(p: ClassicalDistribution, proto: Protocol, alice=None, bob=None, eve=None) -> float:
    """Trace distance between the two paths of the measurement/protocol diagram.

    Path (i) measures Alice's and Bob's registers of the qqq embedding and runs
    ``proto``. Path (ii) runs the coherent version on the pure embedding, then
    measures every Alice/Bob register; registers the coherent protocol moved to
    Eve are traced out, matching the classical protocol forgetting them.
    """
    p.validate()
    alice, bob, eve = split_parties(p.labels, alice, bob, eve)
    if any(party_of(l) != "A" for l in alice) or any(party_of(l) != "B" for l in bob):
        raise InvariantError("protocol steps address registers by the A/B/E naming convention")
    vec = qqq_vector(p)
    lay = p.layout
    measured = dephase(DensityState(lay, linalg.proj(vec)), alice + bob)
    left = apply_classical_protocol(measured, proto)

    out = apply_coherent(PureState(vec, lay), coherent_version(proto))
    right = out.density().trace_out(out.transferred)
    right = dephase(right, [l for l in right.labels if party_of(l) in ("A", "B")])
    right = right.reorder(left.labels)
    return linalg.trace_distance(left.matrix, right.matrix)


# ---------------------------------------------------------------------------
# random protocols and LOPC maps

def random_protocol(rng: np.random.Generator, layout: SubsystemLayout, n_steps: int = 3) -> Protocol:
    """Sample a valid protocol; steps that would exceed the size cap are redrawn."""
    steps = []
    lay = layout
    attempts = 0
    while len(steps) < n_steps:
        attempts += 1
        if attempts > 100 * n_steps:
            raise RuntimeError("could not sample a protocol within the size cap")
        party = str(rng.choice(["A", "B"]))
        owned = [l for l in lay.labels if party_of(l) == party]
        kind = str(rng.choice(KINDS))
        if kind != "randomize" and not owned:
            continue
        if kind == "randomize":
            step = ProtocolStep(kind, party, distribution=tuple(rng.dirichlet(np.ones(int(rng.integers(2, 4))))))
        elif kind == "permute":
            k = int(rng.integers(1, len(owned) + 1))
            labs = tuple(str(l) for l in rng.choice(owned, size=k, replace=False))
            step = ProtocolStep(kind, party, labs, permutation=tuple(rng.permutation(lay.dims_of(labs))))
        else:
            step = ProtocolStep(kind, party, (str(rng.choice(owned)),))
        try:
            lay = _next_layout(lay, step, len(steps))
        except InvariantError:
            continue
        steps.append(step)
    return Protocol(steps)


@dataclass(frozen=True)
class LopcOperation:
    """One sampled LOPC map: a local channel on an Alice/Bob register or a public copy."""
    kind: str  # "local" or "copy"
    target: str
    channel: QuantumChannel | None = None


def random_lopc_operation(seed: int, layout: SubsystemLayout, classical: Sequence[str] = ()) -> LopcOperation:
    """Draw a local channel on one of Alice's or Bob's registers, or a public copy of
    one of their classical registers. Eve's registers are never touched."""
    rng = np.random.default_rng(seed)
    ab = [l for l in layout.labels if party_of(l) in ("A", "B")]
    if not ab:
        raise InvariantError("layout has no Alice or Bob registers")
    copyable = [l for l in ab if l in set(classical)]
    if copyable and rng.random() < 1 / 3:
        return LopcOperation("copy", str(rng.choice(copyable)))
    target = str(rng.choice(ab))
    d = layout.dim(target)
    env = int(rng.integers(1, d + 1))
    v = linalg.random_isometry(d, d * env, rng)
    return LopcOperation("local", target, QuantumChannel(d, d, env, v))


def apply_lopc(rho: DensityState, op: LopcOperation, tag: str = "x") -> DensityState:
    """Apply a sampled operation. A copy appends ``<receiver>_<tag>`` and ``E_<tag>``."""
    if op.kind == "local":
        return apply_channel(rho, op.channel, op.target)
    _classical_check(rho, op.target)
    names = (f"{_other(party_of(op.target))}_{tag}", f"E_{tag}")
    m, lay = _append_copies(rho.matrix, rho.layout, op.target, names)
    return DensityState(lay, m, rho.classical_labels | {op.target, *names})


# ---------------------------------------------------------------------------
# key quality

def key_quality(rho: DensityState, ell: int, alice=None, bob=None, eve=None) -> float:
    """Trace distance from ``rho`` to ``tau^ell (x) rho_E``.

    Alice's and Bob's joint registers hold the key values ``0 .. 2^ell - 1``;
    Eve's state is the actual Eve marginal of ``rho``.
    """
    alice, bob, eve = split_parties(rho.labels, alice, bob, eve)
    missing = [l for l in alice + bob if l not in rho.classical_labels]
    if missing:
        raise InvariantError(f"key registers {missing} are not flagged classical")
    st = rho.reorder(alice + bob + eve)
    da, db = st.layout.dims_of(alice), st.layout.dims_of(bob)
    de = st.layout.dims_of(eve) if eve else 1
    n = 2 ** ell
    if da < n or db < n:
        raise InvariantError(f"registers of dims {da}x{db} cannot hold {ell} key bits")
    rho_e = st.matrix.reshape(da * db, de, da * db, de).trace(axis1=0, axis2=2)
    key = np.zeros((da * db, da * db))
    for i in range(n):
        key[i * db + i, i * db + i] = 1.0 / n
    return linalg.trace_distance(st.matrix, np.kron(key, rho_e))
