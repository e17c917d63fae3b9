"""Finite reversible Markov base spaces.

A base space is a finite state set with a strictly positive reference measure
``m``, a rate matrix ``Q`` reversible with respect to ``m`` and an optional
metric ``d``. Everything on configuration space is lifted from here.
"""
from __future__ import annotations

import json
import logging
import math
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
import scipy.linalg
from pydantic import BaseModel, model_validator
from scipy.sparse.csgraph import connected_components

from core.errors import InvalidInputError, ReducibleBaseError
from core.models import BEResult, DefectReport

logger = logging.getLogger(__name__)

BaseFunction = npt.NDArray[np.float64]

ROW_SUM_TOL = 1e-12
NEGATIVE_CLAMP = 1e-14


class FiniteBaseSpace(BaseModel):
    states: List[str]
    m: List[float]
    Q: List[List[float]]
    d: Optional[List[List[float]]] = None

    @model_validator(mode="after")
    def _check_invariants(self) -> "FiniteBaseSpace":
        n = len(self.states)
        if n == 0:
            raise ValueError("a base space needs at least one state")
        if len(set(self.states)) != n:
            raise ValueError("state labels must be distinct")
        m = np.asarray(self.m, dtype=float)
        q = np.asarray(self.Q, dtype=float)
        if m.shape != (n,) or q.shape != (n, n):
            raise ValueError(f"shape mismatch: {n} states, m {m.shape}, Q {q.shape}")
        if not np.all(np.isfinite(m)) or np.any(m <= 0):
            raise ValueError("reference weights must be finite and strictly positive")
        if not np.all(np.isfinite(q)):
            raise ValueError("rate matrix entries must be finite")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be nonnegative")
        if np.max(np.abs(q.sum(axis=1))) > ROW_SUM_TOL * max(1.0, float(np.abs(q).max())):
            raise ValueError("rows of Q must sum to 0")
        flux = m[:, None] * q
        if np.max(np.abs(flux - flux.T)) > 1e-12 * max(1.0, float(np.abs(flux).max())):
            raise ValueError("Q violates detailed balance with respect to m")
        if self.d is not None:
            d = np.asarray(self.d, dtype=float)
            if d.shape != (n, n) or not np.all(np.isfinite(d)):
                raise ValueError("metric must be a finite n x n matrix")
            if np.any(d < 0) or np.any(np.diag(d) != 0) or np.any(d != d.T):
                raise ValueError("metric must be nonnegative, symmetric, zero on the diagonal")
            # d[x,z] <= d[x,y] + d[y,z] for all triples
            if np.any(d[:, None, :] > d[:, :, None] + d[None, :, :] + 1e-12):
                raise ValueError("metric violates the triangle inequality")
        return self

    @property
    def n(self) -> int:
        return len(self.states)

    @cached_property
    def weights(self) -> BaseFunction:
        return np.asarray(self.m, dtype=float)

    @cached_property
    def generator(self) -> npt.NDArray[np.float64]:
        return np.asarray(self.Q, dtype=float)

    @cached_property
    def metric(self) -> Optional[npt.NDArray[np.float64]]:
        if self.d is None:
            return None
        return np.asarray(self.d, dtype=float)

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def is_irreducible(self) -> bool:
        adjacency = (self.generator > 0).astype(int)
        count, _ = connected_components(adjacency, directed=True, connection="strong")
        return count == 1

    def require_irreducible(self) -> None:
        if not self.is_irreducible:
            raise ReducibleBaseError("base generator is reducible; analyse each communicating class separately")

    def require_metric(self) -> npt.NDArray[np.float64]:
        if self.metric is None:
            raise InvalidInputError("this operation needs a base metric d")
        return self.metric

    def index_of(self, label: str) -> int:
        try:
            return self.states.index(label)
        except ValueError:
            raise InvalidInputError(f"unknown state {label!r}") from None

    def to_json(self) -> str:
        return json.dumps(self.model_dump(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FiniteBaseSpace":
        return cls.model_validate_json(text)

    @classmethod
    def load(cls, path: str | Path) -> "FiniteBaseSpace":
        return cls.from_json(Path(path).read_text())


def build_two_state(rate: float) -> FiniteBaseSpace:
    if not rate > 0:
        raise InvalidInputError(f"rate must be positive (got {rate!r})")
    return FiniteBaseSpace(
        states=["a", "b"],
        m=[1.0, 1.0],
        Q=[[-rate, rate], [rate, -rate]],
        d=[[0.0, 1.0], [1.0, 0.0]],
    )


def build_circle(n: int, rate: float = 1.0) -> FiniteBaseSpace:
    """Nearest-neighbour walk on ``n`` equally spaced points of the unit circle."""
    if n < 3:
        raise InvalidInputError(f"circle needs n >= 3 (got {n})")
    if not rate > 0:
        raise InvalidInputError(f"rate must be positive (got {rate!r})")
    h = 2.0 * math.pi / n
    q = np.zeros((n, n))
    for i in range(n):
        q[i, (i + 1) % n] += rate
        q[i, (i - 1) % n] += rate
        q[i, i] = -2.0 * rate
    idx = np.arange(n)
    gap = np.abs(idx[:, None] - idx[None, :])
    d = np.minimum(gap, n - gap) * h
    return FiniteBaseSpace(
        states=[str(i) for i in range(n)],
        m=[h] * n,
        Q=q.tolist(),
        d=d.tolist(),
    )


def continuum_rate(n: int) -> float:
    """Rate that makes the n-point circle walk converge to the circle heat semigroup."""
    return (n / (2.0 * math.pi)) ** 2


def _as_function(space: FiniteBaseSpace, f: Sequence[float] | BaseFunction) -> BaseFunction:
    arr = np.asarray(f, dtype=float)
    if arr.shape != (space.n,):
        raise InvalidInputError(f"base function has shape {arr.shape}, expected ({space.n},)")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("base function entries must be finite")
    return arr


def generator_apply(space: FiniteBaseSpace, f: BaseFunction) -> BaseFunction:
    return space.generator @ _as_function(space, f)


def square_field(space: FiniteBaseSpace, f: BaseFunction, g: BaseFunction) -> BaseFunction:
    """Discrete carre du champ: Gamma(f,g)(x) = 1/2 sum_y Q[x,y] (f(y)-f(x)) (g(y)-g(x))."""
    f = _as_function(space, f)
    g = _as_function(space, g)
    df = f[None, :] - f[:, None]
    dg = g[None, :] - g[:, None]
    return 0.5 * np.sum(space.generator * df * dg, axis=1)


def semigroup_matrix(space: FiniteBaseSpace, t: float) -> npt.NDArray[np.float64]:
    """Heat kernel h_t = exp(tQ) (scaling and squaring with a Pade core)."""
    if t < 0:
        raise InvalidInputError(f"time must be nonnegative (got {t!r})")
    if t == 0:
        return np.eye(space.n)
    h = scipy.linalg.expm(t * space.generator)
    worst = float(h.min())
    if worst < -NEGATIVE_CLAMP:
        raise InvalidInputError(f"matrix exponential produced entry {worst!r}; the rate matrix is broken")
    return np.clip(h, 0.0, None)


def spectral_gap(space: FiniteBaseSpace) -> float:
    root = np.sqrt(space.weights)
    sym = root[:, None] * space.generator / root[None, :]
    sym = 0.5 * (sym + sym.T)
    eig = np.sort(np.linalg.eigvalsh(-sym))
    positive = eig[eig > 1e-10 * max(1.0, float(np.abs(eig).max()))]
    return float(positive[0]) if positive.size else 0.0


def interval_integral(K: float, t: float) -> float:
    """I_K(t) = (e^{Kt} - 1) / K, with the removable singularity I_0(t) = t."""
    if K == 0:
        return float(t)
    return float(math.expm1(K * t) / K)


def default_f_samples(space: FiniteBaseSpace, count: int = 32, seed: int = 7) -> List[BaseFunction]:
    """Coordinate indicators plus ``count`` seeded standard-normal vectors."""
    rng = np.random.Generator(np.random.Philox(seed))
    samples = [row.copy() for row in np.eye(space.n)]
    samples.extend(rng.standard_normal(space.n) for _ in range(count))
    return samples


def _be_terms(space: FiniteBaseSpace, t_grid: Sequence[float], f_samples: Sequence[BaseFunction]):
    lhs, rhs = [], []
    for t in t_grid:
        h = semigroup_matrix(space, t)
        lhs.append([square_field(space, h @ f, h @ f) for f in f_samples])
        rhs.append([h @ square_field(space, f, f) for f in f_samples])
    # shape (times, samples, states)
    return np.asarray(lhs), np.asarray(rhs)


def best_be_constant(
    space: FiniteBaseSpace,
    c: float,
    t_grid: Sequence[float],
    f_samples: Optional[Sequence[BaseFunction]] = None,
    tolerance: float = 1e-6,
    seed: int = 7,
) -> BEResult:
    """Largest K with Gamma(T_t f) <= c e^{-2Kt} T_t Gamma(f) on the sampled f and grid t."""
    if c < 1:
        raise InvalidInputError(f"c must be >= 1 (got {c!r})")
    if not t_grid or any(t <= 0 for t in t_grid):
        raise InvalidInputError("t_grid must be nonempty and positive")
    samples = list(f_samples) if f_samples is not None else default_f_samples(space, seed=seed)
    if not samples:
        raise InvalidInputError("f_samples must be nonempty")
    samples = [_as_function(space, f) for f in samples]
    times = np.asarray(t_grid, dtype=float)
    lhs, rhs = _be_terms(space, times, samples)
    scale = max(1.0, float(np.abs(lhs).max()), float(np.abs(rhs).max()))
    slack = 1e-12 * scale

    def defect(K: float) -> np.ndarray:
        factor = c * np.exp(-2.0 * K * times)[:, None, None]
        return lhs - factor * rhs

    def holds(K: float) -> bool:
        return float(defect(K).max()) <= slack

    bound = 10.0 * float(np.abs(space.generator).max())
    lo, hi = -bound, bound
    if not holds(lo):
        best = lo
    elif holds(hi):
        best = hi
    else:
        while hi - lo > tolerance:
            mid = 0.5 * (lo + hi)
            if holds(mid):
                lo = mid
            else:
                hi = mid
        best = lo
    values = defect(best)
    i_t, i_f, i_x = np.unravel_index(int(np.argmax(values)), values.shape)
    logger.debug("best BE constant c=%s: K=%.8f", c, best)
    return BEResult(
        c=c,
        K_best=float(best),
        t_grid=[float(t) for t in times],
        max_defect=float(values.max()),
        tolerance=tolerance,
        witness={"sample": int(i_f), "t": float(times[i_t]), "state": space.states[i_x]},
    )


def _top_pencil_eigenpair(a: np.ndarray, b: np.ndarray, cutoff: float = 1e-10) -> Tuple[float, np.ndarray]:
    """Top eigenpair of a v = lambda b v on the numerical range of b.

    At short times heat kernel entries underflow and b loses rank; directions
    with b-eigenvalues below ``cutoff`` times the largest are dropped.
    """
    b_values, b_vectors = scipy.linalg.eigh(b)
    keep = b_values > cutoff * b_values.max()
    if not keep.any():
        return 0.0, np.zeros(a.shape[0])
    whiten = b_vectors[:, keep] / np.sqrt(b_values[keep])
    values, vectors = scipy.linalg.eigh(whiten.T @ a @ whiten)
    return float(values[-1]), whiten @ vectors[:, -1]


def exact_be_constant(space: FiniteBaseSpace, c: float, t_grid: Sequence[float]) -> BEResult:
    """Largest K valid for every function on the grid, by generalized eigenvalues.

    For each (t, x) both sides are quadratic forms in f that vanish on constants;
    the worst ratio is the top eigenvalue of the pencil on the complement of
    constants. ``witness['function']`` is the extremal f.
    """
    if c < 1:
        raise InvalidInputError(f"c must be >= 1 (got {c!r})")
    space.require_irreducible()
    q = space.generator
    n = space.n
    complement = scipy.linalg.null_space(np.ones((1, n)))
    if complement.shape[1] == 0:
        return BEResult(c=c, K_best=math.inf, t_grid=list(t_grid), max_defect=0.0, tolerance=0.0)
    # edge forms E_zw = (e_w - e_z)(e_w - e_z)^T restricted to the complement
    diffs = complement[None, :, :] - complement[:, None, :]  # (z, w, r)
    best = math.inf
    witness: dict = {}
    for t in t_grid:
        h = semigroup_matrix(space, t)
        hc = h @ complement
        for x in range(n):
            dh = hc - hc[x]
            a = 0.5 * np.einsum("y,yr,ys->rs", q[x], dh, dh)
            weights = h[x][:, None] * q  # h[x,z] Q[z,w]
            b = 0.5 * np.einsum("zw,zwr,zws->rs", weights, diffs, diffs)
            top, vector = _top_pencil_eigenpair(a, b)
            if top <= 0:
                continue
            bound = -math.log(top / c) / (2.0 * t)
            if bound < best:
                best = bound
                witness = {"t": float(t), "state": space.states[x], "function": (complement @ vector).tolist()}
    return BEResult(c=c, K_best=best, t_grid=[float(t) for t in t_grid], max_defect=0.0, tolerance=0.0, witness=witness)


def be_defect(
    space: FiniteBaseSpace,
    K: float,
    c: float,
    t_grid: Sequence[float],
    f_samples: Sequence[BaseFunction],
) -> float:
    lhs, rhs = _be_terms(space, t_grid, [_as_function(space, f) for f in f_samples])
    factor = c * np.exp(-2.0 * K * np.asarray(t_grid, dtype=float))[:, None, None]
    return float((lhs - factor * rhs).max())


def check_log_harnack_base(
    space: FiniteBaseSpace,
    K: float,
    t_grid: Sequence[float],
    f_samples: Sequence[BaseFunction],
) -> DefectReport:
    """T_t log f (x) <= log T_t f (y) + d(x,y)^2 / (4 I_{2K}(t)), maximized over x, y, t, f."""
    d = space.require_metric()
    if not f_samples:
        raise InvalidInputError("f_samples must be nonempty")
    worst = -math.inf
    witness: dict = {}
    for t in t_grid:
        if t <= 0:
            raise InvalidInputError("t_grid must be positive")
        h = semigroup_matrix(space, t)
        penalty = d**2 / (4.0 * interval_integral(2.0 * K, t))
        for k, f in enumerate(f_samples):
            f = _as_function(space, f)
            if np.any(f <= 0):
                raise InvalidInputError("log-Harnack needs strictly positive functions")
            lhs = h @ np.log(f)
            rhs = np.log(h @ f)
            gap = lhs[:, None] - rhs[None, :] - penalty
            x, y = np.unravel_index(int(np.argmax(gap)), gap.shape)
            if gap[x, y] > worst:
                worst = float(gap[x, y])
                witness = {"sample": k, "t": float(t), "x": space.states[x], "y": space.states[y]}
    return DefectReport(check_id="base.log_harnack", tier="asymptotic", max_defect=worst, witness=witness, details={"K": K})


def check_sub_markov_base(space: FiniteBaseSpace, t_grid: Sequence[float], count: int = 32, seed: int = 7) -> DefectReport:
    """0 <= f <= 1 implies 0 <= T_t f <= 1."""
    rng = np.random.Generator(np.random.Philox(seed))
    worst = 0.0
    for t in t_grid:
        h = semigroup_matrix(space, t)
        for _ in range(count):
            g = h @ rng.uniform(0.0, 1.0, space.n)
            worst = max(worst, float(-g.min()), float(g.max() - 1.0))
    return DefectReport(check_id="base.sub_markov", tier="exact", max_defect=worst, tolerance=1e-12, seed=seed)
