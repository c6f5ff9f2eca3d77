"""Upper and lower bounds on distillable key.

Every function returns a :class:`BoundEstimate`. Infima are estimated by
:func:`keydistill.optimize.multi_restart_minimize` and therefore reported as
``upper-estimate-of-infimum``: the value is attained by an explicit channel,
extension or separable state, so it is a genuine upper bound on the infimum,
but nothing certifies that the infimum itself has been reached.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import entropy as ent
from . import linalg
from .linalg import SubsystemLayout
from .optimize import (IsometryParam, OptimizationOutcome, OptimizerConfig, decode_isometry,
                       encode_isometry, multi_restart_maximize, multi_restart_minimize,
                       stochastic_from_raw, stochastic_to_raw)
from .states import (ZERO_PROB, ClassicalDistribution, DensityState, InvariantError, QuantumChannel,
                     check_unique_k, split_parties)

EXACT = "exact"
UPPER = "upper-estimate-of-infimum"
LOWER = "lower-bound"

GRID_CAP = 2_000_000
# above this many parameters only the fixed candidate points are evaluated
MAX_SEARCH_PARAMS = 1200
# log-weight of padding terms in separable ensembles
LOG_TINY = -40.0
# rho_ABE within this max-entry distance of rho_AB (x) rho_E counts as a product
PRODUCT_TOL = 1e-13


@dataclass
class BoundEstimate:
    name: str
    value: float
    direction: str
    optimizer: OptimizationOutcome | None = None
    parameters: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {"name": self.name, "value": self.value, "direction": self.direction,
             "parameters": dict(self.parameters)}
        if self.optimizer is not None:
            d["optimizer"] = {"restarts_run": self.optimizer.restarts_run,
                              "converged": self.optimizer.converged}
        if self.details:
            d["details"] = dict(self.details)
        return d


def _tripartite(rho: DensityState, alice=None, bob=None, eve=None):
    alice, bob, eve = split_parties(rho.labels, alice, bob, eve)
    if not alice or not bob:
        raise InvariantError("state needs registers for both Alice and Bob")
    st = rho.reduced(alice + bob + eve).reorder(alice + bob + eve)
    da = st.layout.dims_of(alice)
    db = st.layout.dims_of(bob)
    de = st.layout.dims_of(eve) if eve else 1
    return st.matrix, (da, db, de), (alice, bob, eve)


def _search_cfg(cfg: OptimizerConfig, n_params: int) -> tuple[OptimizerConfig, str]:
    if n_params > MAX_SEARCH_PARAMS:
        return cfg.replace(restarts=0, max_iters=0), "candidates-only"
    return cfg, "simplex" if cfg.max_iters > 0 else "candidates-only"


# ---------------------------------------------------------------------------
# Devetak-Winter

def dw_lower_bound(rho: DensityState, alice=None, bob=None, eve=None) -> BoundEstimate:
    """``I(A:B) - I(A:E)``, an achievable key rate when Alice's registers are classical."""
    alice, bob, eve = split_parties(rho.labels, alice, bob, eve)
    quantum_a = [l for l in alice if l not in rho.classical_labels]
    if quantum_a:
        raise InvariantError(f"Devetak-Winter bound needs classical Alice registers; {quantum_a} are not flagged")
    val = ent.mutual_information(rho, alice, bob)
    if eve:
        val -= ent.mutual_information(rho, alice, eve)
    # the formula is evaluated exactly; as a key rate it is a lower bound
    return BoundEstimate("dw", val, EXACT, details={"role": "lower bound on distillable key"})


# ---------------------------------------------------------------------------
# intrinsic information

def _identity_isometry(d: int, out: int, env: int) -> np.ndarray | None:
    if out < d:
        return None
    v = np.zeros((out, env, d), dtype=complex)
    for x in range(d):
        v[x, 0, x] = 1.0
    return v.reshape(out * env, d)


def _forget_isometry(d: int, out: int, env: int) -> np.ndarray | None:
    if env < d:
        return None
    v = np.zeros((out, env, d), dtype=complex)
    for x in range(d):
        v[0, x, x] = 1.0
    return v.reshape(out * env, d)


def _apply_eve_isometry(m: np.ndarray, dab: int, de: int, v: np.ndarray, out: int, env: int) -> np.ndarray:
    t = m.reshape(dab, de, dab, de)
    t = np.einsum("ox,axby,py->aobp", v, t, v.conj(), optimize=True)
    t = t.reshape(dab, out, env, dab, out, env)
    return np.einsum("aoebpe->aobp", t).reshape(dab * out, dab * out)


def intrinsic_information(rho: DensityState, eprime_dim: int | None = None, cfg: OptimizerConfig | None = None,
                          env_dim: int | None = None, alice=None, bob=None, eve=None,
                          starts: Sequence[np.ndarray] = ()) -> BoundEstimate:
    """Estimate ``inf_Lambda I(A:B|E')`` over channels ``Lambda: E -> E'``.

    Channels are Stinespring isometries ``E -> E' (x) env``; the identity and the
    forgetting channel are always tried first. ``starts`` are extra isometries
    (matrices of shape ``(eprime_dim * env_dim, d_E)``) used as fixed starts.
    """
    cfg = cfg or OptimizerConfig()
    m, (da, db, de), _ = _tripartite(rho, alice, bob, eve)
    dab = da * db
    if de == 1:
        val = ent.cmi_matrix(m, (da, db, 1))
        return BoundEstimate("intrinsic", val, EXACT, parameters={"eprime_dim": 1, "env_dim": 1})
    out = eprime_dim or de
    env = env_dim or de
    t = m.reshape(dab, de, dab, de)
    rho_ab, rho_e = np.einsum("aebe->ab", t), np.einsum("aeaf->ef", t)
    if np.max(np.abs(m - np.kron(rho_ab, rho_e))) < PRODUCT_TOL:
        # Eve is uncorrelated: every channel gives I(A:B|E') = I(A:B)
        val = ent.cmi_matrix(rho_ab, (da, db, 1))
        return BoundEstimate("intrinsic", val, EXACT, parameters={"eprime_dim": out, "env_dim": env},
                             details={"note": "product with Eve"})
    fixed = [v for v in (_identity_isometry(de, out, env), _forget_isometry(de, out, env)) if v is not None]
    fixed += [np.asarray(s, dtype=complex) for s in starts]

    def objective(x):
        v = decode_isometry(x, de, out * env)
        return ent.cmi_matrix(_apply_eve_isometry(m, dab, de, v, out, env), (da, db, out))

    n = IsometryParam.size(de, out * env)
    run_cfg, mode = _search_cfg(cfg, n)
    res = multi_restart_minimize(objective, n, run_cfg, [encode_isometry(v) for v in fixed])
    return BoundEstimate("intrinsic", res.best_value, UPPER, res,
                         {"eprime_dim": out, "env_dim": env, "search": mode})


def best_channel(est: BoundEstimate, d_e: int) -> QuantumChannel:
    """Recover the optimal Eve channel from an :func:`intrinsic_information` estimate."""
    out, env = est.parameters["eprime_dim"], est.parameters["env_dim"]
    return QuantumChannel(d_e, out, env, decode_isometry(est.optimizer.best_params, d_e, out * env))


# ---------------------------------------------------------------------------
# classical intrinsic information

def _compositions(n: int, parts: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``parts`` summing to ``n``."""
    out = []
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + parts - 1 - prev - 1)
        out.append(row)
    return np.array(out, dtype=float)


def _grid_oracle(p3: np.ndarray, eprime: int, step: float, cap: int):
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-12:
        raise ValueError(f"grid step must be 1/n, got {step!r}")
    rows = _compositions(n, eprime) / n
    m = len(rows)
    k = p3.shape[2]
    total = m ** k
    if total > cap:
        raise ValueError(f"grid of {total} channels exceeds the size cap {cap}")
    vals = np.empty(total)
    shape = (m,) * k
    chunk = max(1, 200_000 // max(1, p3.size * eprime // k))
    for s in range(0, total, chunk):
        sel = np.stack(np.unravel_index(np.arange(s, min(s + chunk, total)), shape), axis=1)
        w = rows[sel]  # (c, k, eprime)
        q = np.einsum("ijk,ckl->cijl", p3, w)
        vals[s:s + chunk] = ent.classical_cmi_batch(q)
    grid = vals.reshape((m,) * k)
    # neighbouring channels differ by moving 1/n of mass inside one row
    diff = np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)
    pairs = np.argwhere(np.isclose(diff, 2.0 / n))
    slack = 0.0
    for ax in range(k):
        a = np.take(grid, pairs[:, 0], axis=ax)
        b = np.take(grid, pairs[:, 1], axis=ax)
        slack = max(slack, float(np.max(np.abs(a - b), initial=0.0)))
    best = int(np.argmin(vals))
    return float(vals[best]), rows[list(np.unravel_index(best, shape))], slack, total


def _deterministic_maps(k: int, eprime: int, limit: int = 4096):
    if eprime ** k > limit:
        return None
    maps = np.array(list(itertools.product(range(eprime), repeat=k)))
    w = np.zeros((len(maps), k, eprime))
    w[np.arange(len(maps))[:, None], np.arange(k)[None, :], maps] = 1.0
    return w


def classical_cmi_under(p3: np.ndarray, w: np.ndarray) -> float:
    return ent.classical_cmi(np.einsum("ijk,kl->ijl", p3, w))


def _classical_intrinsic_p3(p3: np.ndarray, eprime: int, cfg: OptimizerConfig,
                            extra_maps: Sequence[np.ndarray] = ()):
    k = p3.shape[2]
    starts = []
    if eprime >= k:
        starts.append(np.eye(k, eprime))
    starts.append(np.tile(np.eye(1, eprime), (k, 1)))
    starts += list(extra_maps)
    det = _deterministic_maps(k, eprime)
    if det is not None:
        q = np.einsum("ijk,ckl->cijl", p3, det)
        vals = ent.classical_cmi_batch(q)
        for c in np.argsort(vals, kind="stable")[:3]:
            starts.append(det[c])

    def objective(x):
        return classical_cmi_under(p3, stochastic_from_raw(x, k, eprime))

    return multi_restart_minimize(objective, k * eprime, cfg, [stochastic_to_raw(w) for w in starts])


def classical_intrinsic(p: ClassicalDistribution, eprime_size: int | None = None, grid_step: float | None = None,
                        cfg: OptimizerConfig | None = None, alice=None, bob=None, eve=None,
                        grid_cap: int = GRID_CAP) -> BoundEstimate:
    """Intrinsic information of a distribution: ``inf_W I(I:J|E')`` over stochastic maps ``W: k -> e'``.

    With ``grid_step`` an exhaustive grid over all stochastic matrices with
    entries in multiples of the step is also evaluated. The bracket reported in
    ``details`` is ``[grid_min - slack, value]`` where ``slack`` is the largest
    change of the objective between neighbouring grid channels.
    """
    cfg = cfg or OptimizerConfig()
    p3 = p.grouped(alice, bob, eve)
    k = p3.shape[2]
    eprime = eprime_size or k
    res = _classical_intrinsic_p3(p3, eprime, cfg)
    value = res.best_value
    params = {"eprime_size": eprime}
    details = {}
    if grid_step is not None:
        gmin, gmap, slack, npts = _grid_oracle(p3, eprime, grid_step, grid_cap)
        value = min(value, gmin)
        params["grid_step"] = grid_step
        details.update(grid_min=gmin, grid_slack=slack, grid_points=npts,
                       bracket=[gmin - slack, value], optimizer_value=res.best_value)
    return BoundEstimate("classical_intrinsic", value, UPPER, res, params, details)


# ---------------------------------------------------------------------------
# reduced intrinsic information

def _set_partitions(n: int, max_blocks: int):
    """Restricted growth strings of length ``n`` with at most ``max_blocks`` blocks."""
    def rec(prefix, used):
        if len(prefix) == n:
            yield tuple(prefix)
            return
        for b in range(min(used + 1, max_blocks)):
            yield from rec(prefix + [b], max(used, b + 1))
    if n == 0:
        yield ()
        return
    yield from rec([0], 1)


def _merge_maps(n: int) -> np.ndarray:
    parts = list(_set_partitions(n, n))
    w = np.zeros((len(parts), n, n))
    for c, part in enumerate(parts):
        w[c, np.arange(n), list(part)] = 1.0
    return w


def _extended_p3(p3: np.ndarray, support: list, labels: Sequence[int], c: int) -> np.ndarray:
    ni, nj, nk = p3.shape
    q = np.zeros((ni, nj, nk * c))
    for (i, j, kk), e in zip(support, labels):
        q[i, j, kk * c + e] += p3[i, j, kk]
    return q


def _squeeze_eve(q: np.ndarray) -> np.ndarray:
    used = q.sum(axis=(0, 1)) > ZERO_PROB
    return q[:, :, used]


def _reduced_classical(p3: np.ndarray, a: int, cap: int, cfg: OptimizerConfig) -> BoundEstimate:
    base = _classical_intrinsic_p3(p3, p3.shape[2], cfg)
    best_val, best_desc = base.best_value, {"extension": "empty"}
    support = [tuple(s) for s in np.argwhere(p3 > ZERO_PROB)]
    probs = np.array([p3[s] for s in support])
    ranked = []
    if len(support) <= 8:
        for part in _set_partitions(len(support), cap):
            c = max(part) + 1
            if c == 1:
                continue
            h = ent.shannon(np.bincount(part, weights=probs, minlength=c))
            if a * h >= best_val:
                continue
            q = _squeeze_eve(_extended_p3(p3, support, part, c))
            merges = _merge_maps(q.shape[2])
            inner = float(ent.classical_cmi_batch(np.einsum("ijk,ckl->cijl", q, merges)).min())
            ranked.append((inner + a * h, part, c))
        ranked.sort(key=lambda r: r[0])
    outcome = base
    for quick, part, c in ranked[:3]:
        q = _squeeze_eve(_extended_p3(p3, support, part, c))
        h = ent.shannon(np.bincount(part, weights=probs, minlength=c))
        merges = _merge_maps(q.shape[2])
        mv = ent.classical_cmi_batch(np.einsum("ijk,ckl->cijl", q, merges))
        res = _classical_intrinsic_p3(q, q.shape[2], cfg, [merges[int(np.argmin(mv))]])
        val = min(res.best_value, float(mv.min())) + a * h
        if val < best_val:
            best_val, outcome = val, res
            best_desc = {"extension": "deterministic", "partition": list(part), "entropy": h}
    if ranked and cfg.max_iters > 0:
        # joint refinement of a stochastic extension and Eve's map, from the best deterministic one
        _, part, c = ranked[0]
        ns, nk = len(support), p3.shape[2]
        ke = nk * c
        ext0 = np.eye(c)[list(part)]
        q0 = _extended_p3(p3, support, part, c)
        merges = _merge_maps(ke) if ke <= 8 else np.eye(ke)[None]
        mv = ent.classical_cmi_batch(np.einsum("ijk,ckl->cijl", q0, merges))
        chan0 = merges[int(np.argmin(mv))]
        sup = np.array(support)

        def objective(x):
            w_ext = stochastic_from_raw(x[:ns * c], ns, c)
            w_eve = stochastic_from_raw(x[ns * c:], ke, ke)
            q = np.zeros((p3.shape[0], p3.shape[1], ke))
            cols = sup[:, 2][:, None] * c + np.arange(c)[None, :]
            np.add.at(q, (sup[:, 0][:, None], sup[:, 1][:, None], cols), probs[:, None] * w_ext)
            h = ent.shannon((probs[:, None] * w_ext).sum(axis=0))
            return ent.classical_cmi(np.einsum("ijk,kl->ijl", q, w_eve)) + a * h

        x0 = np.concatenate([stochastic_to_raw(ext0), stochastic_to_raw(chan0)])
        res = multi_restart_minimize(objective, x0.size, cfg.replace(restarts=0), [x0])
        if res.best_value < best_val:
            best_val, outcome = res.best_value, res
            best_desc = {"extension": "stochastic"}
    return BoundEstimate(f"reduced_intrinsic_a{a}", best_val, UPPER, outcome,
                         {"a": a, "alphabet_cap": cap}, best_desc)


def _is_diagonal_state(rho: DensityState) -> bool:
    m = rho.matrix
    return float(np.max(np.abs(m - np.diag(np.diag(m))), initial=0.0)) < 1e-12


def _state_to_distribution(rho: DensityState) -> ClassicalDistribution:
    return ClassicalDistribution(rho.labels, np.diag(rho.matrix).real.reshape(rho.layout.dims))


def reduced_intrinsic_information(source, a: int = 1, alphabet_cap: int = 4, cfg: OptimizerConfig | None = None,
                                  ext_dim: int = 2, extensions: Sequence[tuple[DensityState, Sequence[str]]] = (),
                                  alice=None, bob=None, eve=None) -> BoundEstimate:
    """Estimate ``inf { I(AB|EE' down) + a S(E') }`` over extensions ``E'``.

    ``a=1`` searches classical extensions: for distributions (or diagonal
    states) all deterministic functions of the support into at most
    ``alphabet_cap`` symbols, then a joint stochastic refinement; for quantum
    states, measurements of a purifying system. ``a=2`` searches channels on a
    purifying system into ``ext_dim`` dimensions. The empty extension is always
    included. ``extensions`` are explicit ``(rho_ABEE', E' labels)`` candidates.
    """
    if a not in (1, 2):
        raise ValueError("a must be 1 or 2")
    cfg = cfg or OptimizerConfig()
    if isinstance(source, ClassicalDistribution) or (a == 1 and not extensions and _is_diagonal_state(source)):
        p = source if isinstance(source, ClassicalDistribution) else _state_to_distribution(source)
        return _reduced_classical(p.grouped(alice, bob, eve), a, alphabet_cap, cfg)
    rho = source
    alice, bob, eve = split_parties(rho.labels, alice, bob, eve)
    base = intrinsic_information(rho, cfg=cfg, alice=alice, bob=bob, eve=eve)
    best = BoundEstimate(f"reduced_intrinsic_a{a}", base.value, UPPER, base.optimizer,
                         {"a": a, "alphabet_cap": alphabet_cap, "ext_dim": ext_dim}, {"extension": "empty"})
    for i, (ext_state, ext_labels) in enumerate(extensions):
        inner = intrinsic_information(ext_state, cfg=cfg, alice=alice, bob=bob, eve=tuple(eve) + tuple(ext_labels))
        val = inner.value + a * ent.von_neumann_entropy(ext_state, ext_labels)
        if val < best.value:
            best.value, best.optimizer = val, inner.optimizer
            best.details = {"extension": f"given[{i}]"}
    found = _reduced_quantum_search(rho, a, alphabet_cap, ext_dim, cfg, alice, bob, eve)
    if found is not None and found[0] < best.value:
        best.value, best.optimizer = found[0], found[1]
        best.details = {"extension": "searched"}
    return best


def _reduced_quantum_search(rho, a, cap, ext_dim, cfg, alice, bob, eve):
    m, (da, db, de), _ = _tripartite(rho, alice, bob, eve)
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = w > 1e-12
    r = int(keep.sum())
    psi = (u[:, keep] * np.sqrt(w[keep])).reshape(da * db, de, r)
    n_ext = cap if a == 1 else ext_dim
    env_r = 1 if a == 1 else r
    if a == 1 and r > n_ext:
        return None
    dee = de * n_ext
    n_ext_params = IsometryParam.size(r, n_ext * env_r)
    n_eve_params = IsometryParam.size(dee, dee * dee)
    total = n_ext_params + n_eve_params
    if total > MAX_SEARCH_PARAMS or da * db * dee * dee > 256:
        return None
    dab = da * db

    def extended(x):
        v = decode_isometry(x[:n_ext_params], r, n_ext * env_r)
        phi = np.einsum("oz,aez->aeo", v, psi).reshape(dab, de, n_ext, env_r)
        if a == 1:
            # measure the extension register: keep only its diagonal
            mat = np.einsum("aexz,bfxz->aexbf", phi, phi.conj())
            full = np.zeros((dab, de, n_ext, dab, de, n_ext), dtype=complex)
            idx = np.arange(n_ext)
            full[:, :, idx, :, :, idx] = mat.transpose(2, 0, 1, 3, 4)
            return full.reshape(dab * dee, dab * dee)
        flat = phi.reshape(dab * dee, env_r)
        return flat @ flat.conj().T

    def objective(x):
        rho_ext = extended(x)
        rt = rho_ext.reshape(dab, dee, dab, dee)
        red = np.einsum("aeaf->ef", rt).reshape(de, n_ext, de, n_ext)
        s_ext = ent.matrix_entropy(np.einsum("xixj->ij", red))
        v = decode_isometry(x[n_ext_params:], dee, dee * dee)
        return ent.cmi_matrix(_apply_eve_isometry(rho_ext, dab, dee, v, dee, dee), (da, db, dee)) + a * s_ext

    starts = []
    rng = np.random.default_rng([cfg.seed, 7919])
    eye_eve = encode_isometry(_identity_isometry(dee, dee, dee))
    for _ in range(max(1, min(cfg.restarts, 2))):
        starts.append(np.concatenate([rng.standard_normal(n_ext_params), eye_eve]))
    res = multi_restart_minimize(objective, total, cfg.replace(restarts=cfg.restarts // 2), starts)
    return res.best_value, res


# ---------------------------------------------------------------------------
# entanglement-based bounds

def _bipartite(rho: DensityState, alice=None, bob=None):
    alice, bob, eve = split_parties(rho.labels, alice, bob)
    if eve:
        raise InvariantError(f"bipartite state expected, registers {eve} belong to neither party")
    if not alice or not bob:
        raise InvariantError("state needs registers for both Alice and Bob")
    st = rho.reorder(alice + bob)
    return st.matrix, (st.layout.dims_of(alice), st.layout.dims_of(bob))


def purification_split(rho: DensityState, alice=None, bob=None, eve=None, label: str = "A_R") -> DensityState:
    """Purify ``rho_ABE`` and hand the whole purifying system to Alice; return
    the Alice|Bob state ``Tr_E |psi><psi|``."""
    m, (da, db, de), (alice, bob, eve) = _tripartite(rho, alice, bob, eve)
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = w > 1e-12
    r = int(keep.sum())
    psi = (u[:, keep] * np.sqrt(w[keep])).reshape(da, db, de, r)
    # |psi> on A B E R -> reorder A R B E, trace E
    t = psi.transpose(0, 3, 1, 2).reshape(da * r * db, de)
    mat = t @ t.conj().T
    lay = SubsystemLayout(["A", label, "B"], [da, r, db])
    return DensityState(lay, mat)


def squashed_entanglement(rho_ab: DensityState, ext_dim: int = 4, cfg: OptimizerConfig | None = None,
                          alice=None, bob=None, env_dim: int | None = None) -> BoundEstimate:
    """Estimate ``(1/2) inf I(A:B|E)`` over extensions obtained by applying a
    channel ``R -> E`` to the purifying system ``R`` of ``rho_AB``."""
    cfg = cfg or OptimizerConfig()
    m, (da, db) = _bipartite(rho_ab, alice, bob)
    w, u = np.linalg.eigh(0.5 * (m + m.conj().T))
    keep = w > 1e-12
    r = int(keep.sum())
    psi = u[:, keep] * np.sqrt(w[keep])  # (dab, r)
    env = env_dim or r
    if r == 1:
        val = 0.5 * ent.cmi_matrix(m, (da, db, 1))
        return BoundEstimate("squashed", val, EXACT, parameters={"ext_dim": ext_dim, "env_dim": 1},
                             details={"note": "pure state: every extension is a product"})

    def objective(x):
        v = decode_isometry(x, r, ext_dim * env)
        phi = (psi @ v.T).reshape(da * db * ext_dim, env)
        return ent.cmi_matrix(phi @ phi.conj().T, (da, db, ext_dim))

    fixed = [v for v in (_identity_isometry(r, ext_dim, env), _forget_isometry(r, ext_dim, env)) if v is not None]
    n = IsometryParam.size(r, ext_dim * env)
    run_cfg, mode = _search_cfg(cfg, n)
    res = multi_restart_minimize(objective, n, run_cfg, [encode_isometry(v) for v in fixed])
    return BoundEstimate("squashed", 0.5 * res.best_value, UPPER, res,
                         {"ext_dim": ext_dim, "env_dim": env, "search": mode})


def _unit_columns(raw: np.ndarray, d: int, t: int) -> np.ndarray:
    z = (raw[:d * t] + 1j * raw[d * t:]).reshape(t, d)
    n = np.linalg.norm(z, axis=1, keepdims=True)
    return z / np.where(n > 1e-300, n, 1.0)


def separable_from_raw(x: np.ndarray, da: int, db: int, t: int) -> np.ndarray:
    """``sum_t q_t |a_t><a_t| (x) |b_t><b_t|`` from softmax weights and raw vectors."""
    q = stochastic_from_raw(x[:t], 1, t)[0]
    a = _unit_columns(x[t:t + 2 * da * t], da, t)
    b = _unit_columns(x[t + 2 * da * t:], db, t)
    prods = np.einsum("ti,tj->tij", a, b).reshape(t, da * db)
    return (prods.T * q) @ prods.conj()


def _separable_raw(weights, avecs, bvecs, t: int) -> np.ndarray | None:
    """Encode a product ensemble (padded with negligible terms) as raw parameters."""
    k = len(weights)
    if k > t:
        return None
    da, db = avecs.shape[1], bvecs.shape[1]
    w = np.full(t, LOG_TINY)
    with np.errstate(divide="ignore"):
        w[:k] = np.maximum(np.log(np.asarray(weights, dtype=float)), LOG_TINY)
    a = np.zeros((t, da), dtype=complex)
    b = np.zeros((t, db), dtype=complex)
    a[:k], b[:k] = avecs, bvecs
    a[k:, 0] = 1.0
    b[k:, 0] = 1.0
    return np.concatenate([w, a.real.ravel(), a.imag.ravel(), b.real.ravel(), b.imag.ravel()])



def _dephasing_candidate(m, ua, ub, t):
    """Dephase ``m`` in the product basis given by the columns of ``ua``, ``ub``."""
    da, db = ua.shape[0], ub.shape[0]
    basis = np.einsum("ix,jy->xyij", ua, ub).reshape(da * db, da * db)
    diag = np.einsum("ki,ij,kj->k", basis.conj(), m, basis).real
    pairs = list(itertools.product(range(da), range(db)))
    return _separable_raw(np.clip(diag, 0, None), np.array([ua[:, x] for x, _ in pairs]),
                          np.array([ub[:, y] for _, y in pairs]), t)


def default_ensemble_size(da: int, db: int) -> int:
    d = da * db
    return d * d if d <= 4 else d


def relative_entropy_of_entanglement(rho_ab: DensityState, ensemble_size: int | None = None,
                                     cfg: OptimizerConfig | None = None, alice=None, bob=None) -> BoundEstimate:
    """Estimate ``inf S(rho || sigma)`` over separable ``sigma`` with at most
    ``ensemble_size`` pure product terms.

    Fixed candidates: the maximally mixed state and the dephasings of ``rho`` in
    the computational product basis, in the local eigenbases and (for pure
    states) in the Schmidt basis.
    """
    cfg = cfg or OptimizerConfig()
    m, (da, db) = _bipartite(rho_ab, alice, bob)
    t = ensemble_size or default_ensemble_size(da, db)
    s_rho = ent.matrix_entropy(m)

    def objective(x):
        sigma = separable_from_raw(x, da, db, t)
        ws, vs = np.linalg.eigh(sigma)
        weights = np.einsum("xi,xy,yi->i", vs.conj(), m, vs).real
        return -s_rho - float(np.sum(weights * np.log2(np.maximum(ws, 1e-100))))

    cands = []
    ia, ib = np.eye(da), np.eye(db)
    cands.append(_dephasing_candidate(np.eye(da * db) / (da * db), ia, ib, t))
    cands.append(_dephasing_candidate(m, ia, ib, t))
    t4 = m.reshape(da, db, da, db)
    _, ua = np.linalg.eigh(np.einsum("ajbj->ab", t4))
    _, ub = np.linalg.eigh(np.einsum("iaib->ab", t4))
    cands.append(_dephasing_candidate(m, ua, ub, t))
    w, v = np.linalg.eigh(m)
    if w[-1] > 1 - 1e-10:
        uu, _, vh = np.linalg.svd(v[:, -1].reshape(da, db))
        sa = np.zeros((da, da), dtype=complex)
        sb = np.zeros((db, db), dtype=complex)
        sa[:, :] = uu
        sb[:, :] = vh.T
        cands.append(_dephasing_candidate(m, sa, sb, t))
    cands = [c for c in cands if c is not None]
    n = t * (1 + 2 * da + 2 * db)
    run_cfg, mode = _search_cfg(cfg, n)
    if not cands and run_cfg.restarts == 0:
        run_cfg = run_cfg.replace(restarts=1)
    res = multi_restart_minimize(objective, n, run_cfg, cands)
    return BoundEstimate("rel_ent", res.best_value, UPPER, res, {"ensemble_size": t, "search": mode})


# ---------------------------------------------------------------------------
# accessible information

def _mi_joint(pj: np.ndarray) -> float:
    return ent.shannon(pj.sum(axis=1)) + ent.shannon(pj.sum(axis=0)) - ent.shannon(pj)


def measurement_information(probs: np.ndarray, states: Sequence[np.ndarray], povm_vectors: np.ndarray) -> float:
    """Mutual information between the ensemble index and rank-one POVM outcomes
    ``|v_m><v_m|`` (rows of ``povm_vectors``)."""
    stack = np.asarray(states)
    cond = np.einsum("mx,ixy,my->im", povm_vectors.conj(), stack, povm_vectors).real
    return _mi_joint(np.clip(cond, 0, None) * np.asarray(probs)[:, None])


def accessible_information(probs, states: Sequence[np.ndarray], n_outcomes: int | None = None,
                           cfg: OptimizerConfig | None = None) -> BoundEstimate:
    """Maximise the index/outcome mutual information over rank-one POVMs with
    ``n_outcomes`` elements, realised as ``E_m = |v_m><v_m|`` with ``v_m`` the
    conjugated rows of an isometry ``C^d -> C^n``."""
    cfg = cfg or OptimizerConfig()
    probs = np.asarray(probs, dtype=float)
    states = [linalg.as_matrix(s) for s in states]
    d = states[0].shape[0]
    n = n_outcomes or d * d
    if n < d:
        raise ValueError(f"need at least {d} outcomes for a rank-one POVM on dimension {d}")

    def value(x):
        v = decode_isometry(x, d, n)
        return measurement_information(probs, states, v.conj())

    # start from the eigenbases of the ensemble members (distinct ones)
    starts, seen = [], []
    for s in states:
        _, u = np.linalg.eigh(s)
        key = np.round(np.abs(u), 8).tobytes()
        if key in seen:
            continue
        seen.append(key)
        # row m of the isometry is conj(u_m), so that E_m = |u_m><u_m|
        v0 = np.zeros((n, d), dtype=complex)
        v0[:d] = u.conj().T
        starts.append(encode_isometry(v0))
        if len(starts) >= 4:
            break
    dim = IsometryParam.size(d, n)
    run_cfg, mode = _search_cfg(cfg, dim)
    res = multi_restart_maximize(value, dim, run_cfg, starts)
    return BoundEstimate("accessible_information", res.best_value, LOWER, res,
                         {"n_outcomes": n, "search": mode})


def cq_ensemble(rho: DensityState, key_labels: Sequence[str], eve_labels: Sequence[str]):
    """Split a state classical on ``key_labels`` into ``(p_x, rho_E^x)``."""
    st = rho.reduced(list(key_labels) + list(eve_labels)).reorder(list(key_labels) + list(eve_labels))
    dk = st.layout.dims_of(key_labels)
    de = st.layout.dims_of(eve_labels) if eve_labels else 1
    t = st.matrix.reshape(dk, de, dk, de)
    probs, states = [], []
    for x in range(dk):
        blk = t[x, :, x, :]
        px = float(np.trace(blk).real)
        if px > ZERO_PROB:
            probs.append(px)
            states.append(blk / px)
    return np.array(probs), states


def separable_upper_bound(probs, a_states: Sequence[np.ndarray], b_states: Sequence[np.ndarray],
                          cfg: OptimizerConfig | None = None, n_outcomes: int | None = None) -> BoundEstimate:
    """Accessible information of ``{p_i, rho_A^i (x) rho_B^i}`` under joint measurements.

    For ``rho_AB (x) rho_E`` with this separable decomposition this quantity
    upper-bounds the key rate; the value here is a measurement that attains it
    approximately, so it is a lower estimate of that upper bound.
    """
    joint = [np.kron(a, b) for a, b in zip(a_states, b_states)]
    if len(joint) == 1:
        return BoundEstimate("separable_upper_bound", 0.0, EXACT, parameters={"members": 1})
    est = accessible_information(probs, joint, n_outcomes, cfg)
    est.name = "separable_upper_bound"
    est.details["note"] = "joint-measurement accessible information; LOPC-restricted version not computed"
    return est


# ---------------------------------------------------------------------------
# entanglement of formation of the qqq embedding

def eof_induced(p: ClassicalDistribution, cfg: OptimizerConfig | None = None, n_outcomes: int | None = None,
                alice=None, bob=None, eve=None) -> BoundEstimate:
    """``min sum_m p_m S(A)_{psi_m}`` over rank-one measurements ``{|k_m>}`` on
    Eve's part of the qqq embedding, with ``|psi_m> ~ <k_m|psi>``."""
    cfg = cfg or OptimizerConfig()
    if not check_unique_k(p, alice, bob, eve):
        raise InvariantError("eof_induced needs a distribution where (i, j) fixes Eve's value")
    p3 = p.grouped(alice, bob, eve)
    amp = np.sqrt(p3)
    k = p3.shape[2]
    n = n_outcomes or max(k * k, 1)

    def value_of(v):
        phi = np.einsum("mk,ijk->mij", v, amp)
        total = 0.0
        for f in phi:
            s = np.linalg.svd(f, compute_uv=False) ** 2
            pm = s.sum()
            if pm > ZERO_PROB:
                total += pm * ent.shannon(s / pm)
        return total

    def objective(x):
        return value_of(decode_isometry(x, k, n))

    comp = np.zeros((n, k), dtype=complex)
    comp[:k] = np.eye(k)
    dim = IsometryParam.size(k, n)
    run_cfg, mode = _search_cfg(cfg, dim)
    res = multi_restart_minimize(objective, dim, run_cfg, [encode_isometry(comp)])
    v = decode_isometry(res.best_params, k, n)
    induced = np.abs(v) ** 2  # q(m|k) = |<k_m|k>|^2
    induced_cmi = classical_cmi_under(p3, induced.T)
    return BoundEstimate("eof", res.best_value, UPPER, res, {"n_outcomes": n, "search": mode},
                         {"induced_classical_cmi": induced_cmi})


# ---------------------------------------------------------------------------
# report

@dataclass
class MonotoneReport:
    estimates: dict
    ordering_ok: bool
    violations: list


def monotone_report(rho: DensityState, cfg: OptimizerConfig | None = None, alice=None, bob=None, eve=None,
                    ext_dim: int = 2) -> MonotoneReport:
    """Evaluate every implemented bound on ``rho`` and check ``dw <= upper bounds``."""
    cfg = cfg or OptimizerConfig()
    alice, bob, eve = split_parties(rho.labels, alice, bob, eve)
    out = {}
    if all(l in rho.classical_labels for l in alice):
        out["dw"] = dw_lower_bound(rho, alice, bob, eve)
    out["intrinsic"] = intrinsic_information(rho, cfg=cfg, alice=alice, bob=bob, eve=eve)
    out["reduced_intrinsic"] = reduced_intrinsic_information(rho, 1, cfg=cfg, alice=alice, bob=bob, eve=eve)
    split = purification_split(rho, alice, bob, eve)
    out["squashed"] = squashed_entanglement(split, ext_dim=ext_dim, cfg=cfg)
    out["rel_ent"] = relative_entropy_of_entanglement(split, cfg=cfg)
    violations = []
    if "dw" in out:
        for name, est in out.items():
            if name != "dw" and out["dw"].value > est.value + 1e-6:
                violations.append(name)
    return MonotoneReport(out, not violations, violations)
