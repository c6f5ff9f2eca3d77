"""Multi-restart derivative-free minimisation over isometries, POVMs and stochastic maps.

Every infimum in :mod:`keydistill.bounds` is estimated here. Parameters are
unconstrained real vectors; the decoders below map them onto the constrained
sets (isometries by QR orthonormalisation, stochastic matrices by a row-wise
softmax). Local search is Nelder-Mead simplex descent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize

from .states import Povm, QuantumChannel

LOGIT_FLOOR = -40.0


class NumericError(RuntimeError):
    """An objective produced a non-finite value or the search could not proceed."""


@dataclass(frozen=True)
class IsometryParam:
    in_dim: int
    out_dim: int
    raw: np.ndarray

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=float).reshape(-1)
        if raw.size != 2 * self.in_dim * self.out_dim:
            raise ValueError(f"expected {2 * self.in_dim * self.out_dim} raw entries, got {raw.size}")
        if self.out_dim < self.in_dim:
            raise ValueError(f"no isometry from dim {self.in_dim} into dim {self.out_dim}")
        object.__setattr__(self, "raw", raw)

    @staticmethod
    def size(in_dim: int, out_dim: int) -> int:
        return 2 * in_dim * out_dim

    def matrix(self) -> np.ndarray:
        return decode_isometry(self.raw, self.in_dim, self.out_dim)


def decode_isometry(raw: np.ndarray, in_dim: int, out_dim: int) -> np.ndarray:
    """Orthonormalise the raw complex columns (Gram-Schmidt via QR, positive diagonal)."""
    n = in_dim * out_dim
    z = (raw[:n] + 1j * raw[n:2 * n]).reshape(out_dim, in_dim)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    mag = np.abs(diag)
    phase = np.where(mag > 1e-300, diag / np.where(mag > 1e-300, mag, 1.0), 1.0)
    return q * phase


def encode_isometry(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real.reshape(-1), v.imag.reshape(-1)])


def channel_from_isometry(p: IsometryParam, out_dim: int, env_dim: int) -> QuantumChannel:
    if p.out_dim != out_dim * env_dim:
        raise ValueError(f"isometry output dim {p.out_dim} != {out_dim} x {env_dim}")
    return QuantumChannel(p.in_dim, out_dim, env_dim, p.matrix())


def povm_elements_from_isometry(v: np.ndarray, n_outcomes: int) -> list[np.ndarray]:
    d_out, d_in = v.shape
    if d_out % n_outcomes:
        raise ValueError(f"isometry output dim {d_out} not divisible by {n_outcomes} outcomes")
    rows = v.reshape(n_outcomes, d_out // n_outcomes, d_in)
    return [r.conj().T @ r for r in rows]


def povm_from_isometry(p: IsometryParam, n_outcomes: int) -> Povm:
    """Naimark realisation ``E_m = V^dagger (|m><m| (x) I_env) V``."""
    return Povm(povm_elements_from_isometry(p.matrix(), n_outcomes))


def stochastic_from_raw(raw, rows: int, cols: int) -> np.ndarray:
    z = np.asarray(raw, dtype=float).reshape(rows, cols)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def stochastic_to_raw(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(np.log(w), LOGIT_FLOOR).reshape(-1)


@dataclass(frozen=True)
class OptimizerConfig:
    restarts: int = 8
    max_iters: int = 2000
    tol: float = 1e-10
    seed: int = 0
    step_init: float = 0.3

    def __post_init__(self):
        if self.restarts < 0:
            raise ValueError("restarts must be >= 0")
        if self.tol <= 0:
            raise ValueError("tol must be positive")

    def replace(self, **kw) -> "OptimizerConfig":
        d = dict(restarts=self.restarts, max_iters=self.max_iters, tol=self.tol,
                 seed=self.seed, step_init=self.step_init)
        d.update(kw)
        return OptimizerConfig(**d)


@dataclass
class OptimizationOutcome:
    best_value: float
    best_params: np.ndarray
    restarts_run: int
    converged: bool
    values: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"best_value": self.best_value, "restarts_run": self.restarts_run,
                "converged": self.converged, "values": list(self.values)}


def restart_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for random restart ``index``; independent of how many others run."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, int(index)])


def _checked(objective: Callable[[np.ndarray], float]) -> Callable[[np.ndarray], float]:
    def f(x):
        v = float(objective(x))
        if not math.isfinite(v):
            raise NumericError(f"objective returned non-finite value {v!r}")
        return v
    return f


def _local_search(f, x0: np.ndarray, cfg: OptimizerConfig) -> tuple[float, np.ndarray, bool]:
    fx0 = f(x0)
    if cfg.max_iters <= 0 or x0.size == 0:
        return fx0, x0, True
    n = x0.size
    simplex = np.vstack([x0, x0 + cfg.step_init * np.eye(n)])
    res = minimize(f, x0, method="Nelder-Mead",
                   options=dict(maxiter=cfg.max_iters, maxfev=4 * cfg.max_iters + n + 1,
                                xatol=cfg.tol, fatol=cfg.tol, initial_simplex=simplex,
                                adaptive=n > 8))
    x, fx = np.asarray(res.x, dtype=float), float(res.fun)
    if fx0 < fx:
        return fx0, x0, bool(res.success)
    return fx, x, bool(res.success)


def multi_restart_minimize(objective: Callable[[np.ndarray], float], dim: int, cfg: OptimizerConfig,
                           starts: Sequence[np.ndarray] = ()) -> OptimizationOutcome:
    """Minimise ``objective`` from each fixed start, then from ``cfg.restarts``
    standard-normal random starts, keeping the best local minimum.
    """
    f = _checked(objective)
    best_val, best_x, values, conv = math.inf, None, [], True
    points = [np.asarray(s, dtype=float).reshape(-1) for s in starts]
    for s in points:
        if s.size != dim:
            raise ValueError(f"start of size {s.size} for a {dim}-parameter problem")
    points += [restart_rng(cfg.seed, r).standard_normal(dim) for r in range(cfg.restarts)]
    if not points:
        raise ValueError("no restarts requested and no fixed starts given")
    for x0 in points:
        val, x, ok = _local_search(f, x0, cfg)
        values.append(val)
        if val < best_val:
            best_val, best_x, conv = val, x, ok
    return OptimizationOutcome(best_val, best_x, len(points), conv, values)


def multi_restart_maximize(objective, dim, cfg, starts=()) -> OptimizationOutcome:
    out = multi_restart_minimize(lambda x: -objective(x), dim, cfg, starts)
    out.best_value = -out.best_value
    out.values = [-v for v in out.values]
    return out
