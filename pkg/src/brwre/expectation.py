"""Quenched expectation solver.

Computes m_n(x) = E_w eta_n^start(x), the expected number of particles at x
after n steps given the environment realization, by dynamic programming in
log-space: one particle at `start` at time 0; a particle at site s
contributes mean mass mu_y(s) to s+y one step later.  Values are exact path
sums (up to float rounding), no truncation: the layer-n support lies inside
the l1 ball of radius L0*n around the start.

Two evolution directions exist.  The forward direction (default) fixes the
start and tracks where mass goes; coefficients attach to the source site.
The adjoint direction fixes the *target* z and tracks u_n(x) = expected
count at z for a walk started at x; coefficients attach to x itself:

    u_{n+1}(x) = sum_y mu_y(x) u_n(x+y).

For laws that factorize as mu_y(x) = r(x) p(x, y) the adjoint layers satisfy
the discrete parabolic Anderson identity

    u_{n+1} - u_n = r * Lap_w u_n + (r - 1) u_n,
    (Lap_w f)(x) = sum_y p(x,y) [f(x+y) - f(x)],

which `check_anderson_equation` verifies; forward layers do not satisfy it
for site-dependent environments (they solve the adjoint identity with the
edge roles reversed).

Storage is a dense array over the bounding box for d <= 2 and a hash map
for d = 3.  Gathers accumulate in sorted offset order per destination site,
so results are bitwise independent of the worker count.
"""

from __future__ import annotations

import csv
import math
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product
from typing import Callable, Iterator

import numpy as np
from scipy.special import logsumexp

from .environment import EnvironmentField
from .lattice import Site, sub

NEG_INF = float("-inf")

_BINARY_MAGIC = b"BRWL"
_BINARY_VERSION = 1


class SolverError(ValueError):
    pass


@dataclass(eq=False)
class LogMassField:
    """One DP layer: log of the expected particle count per site.

    Dense layers hold a float array over the inclusive box starting at `lo`;
    sparse layers (d=3) hold a dict keyed by site.  Entries absent from
    either storage are log(0) = -inf.
    """

    n: int
    dimension: int
    lo: Site
    values: np.ndarray | dict[Site, float]

    @property
    def dense(self) -> bool:
        return isinstance(self.values, np.ndarray)

    @property
    def hi(self) -> Site:
        if self.dense:
            return tuple(l + s - 1 for l, s in zip(self.lo, self.values.shape))
        if not self.values:
            return self.lo
        return tuple(
            max(x[i] for x in self.values) for i in range(self.dimension)
        )

    @classmethod
    def delta(cls, start: Site, sparse: bool = False) -> "LogMassField":
        start = tuple(start)
        d = len(start)
        if sparse:
            return cls(0, d, start, {start: 0.0})
        return cls(0, d, start, np.zeros((1,) * d, dtype=np.float64))

    def get(self, x: Site) -> float:
        x = tuple(x)
        if self.dense:
            idx = tuple(c - l for c, l in zip(x, self.lo))
            if any(i < 0 or i >= s for i, s in zip(idx, self.values.shape)):
                return NEG_INF
            return float(self.values[idx])
        return self.values.get(x, NEG_INF)

    def items(self) -> Iterator[tuple[Site, float]]:
        """Finite (site, log-mass) entries in lexicographic site order."""
        if self.dense:
            it = np.ndenumerate(self.values)
            for idx, v in it:
                if v > NEG_INF:
                    yield tuple(c + l for c, l in zip(idx, self.lo)), float(v)
        else:
            for x in sorted(self.values):
                v = self.values[x]
                if v > NEG_INF:
                    yield x, v

    def support_size(self) -> int:
        if self.dense:
            return int(np.isfinite(self.values).sum())
        return sum(1 for _, v in self.values.items() if v > NEG_INF)

    def log_total(self) -> float:
        """log sum_x exp(values): the log expected total population."""
        if self.dense:
            flat = self.values[np.isfinite(self.values)]
            if flat.size == 0:
                return NEG_INF
            return float(logsumexp(flat))
        vals = [v for v in self.values.values() if v > NEG_INF]
        return float(logsumexp(vals)) if vals else NEG_INF


def expected_total(fld: LogMassField) -> float:
    """Log of the expected total population in the layer."""
    return fld.log_total()


class _Tables:
    """Per-law log mean-offspring tables over a fixed box, shared across layers."""

    def __init__(self, env: EnvironmentField, lo: Site, hi: Site):
        self.offsets = env.spec.step_set.sorted_offsets()
        self.lo = lo
        self.hi = hi
        with np.errstate(divide="ignore"):
            self.law_table = np.log(
                np.array(
                    [
                        [law.mean_offspring.get(y, 0.0) for y in self.offsets]
                        for law in env.spec.law_support
                    ],
                    dtype=np.float64,
                )
            )
        self.idx = env.law_index_grid(lo, hi)

    def log_mu(self, j: int, lo: Site, shape: tuple[int, ...]) -> np.ndarray:
        """log mu_{offsets[j]} over the sub-box [lo, lo+shape)."""
        sl = tuple(
            slice(l - tl, l - tl + s) for l, tl, s in zip(lo, self.lo, shape)
        )
        return self.law_table[self.idx[sl], j]


def _step_dense(
    fld: LogMassField,
    tables: _Tables,
    adjoint: bool,
    workers: int,
) -> LogMassField:
    offs = tables.offsets
    old = fld.values
    lo_old = fld.lo
    d = fld.dimension
    if adjoint:
        lo_new = tuple(l - max(y[i] for y in offs) for i, l in enumerate(lo_old))
        hi_new = tuple(
            l + s - 1 - min(y[i] for y in offs)
            for i, (l, s) in enumerate(zip(lo_old, old.shape))
        )
    else:
        lo_new = tuple(l + min(y[i] for y in offs) for i, l in enumerate(lo_old))
        hi_new = tuple(
            l + s - 1 + max(y[i] for y in offs)
            for i, (l, s) in enumerate(zip(lo_old, old.shape))
        )
    shape_new = tuple(h - l + 1 for l, h in zip(lo_new, hi_new))
    new = np.full(shape_new, NEG_INF, dtype=np.float64)

    def fill_rows(r0: int, r1: int) -> None:
        for j, y in enumerate(offs):
            if adjoint:
                # destination x reads from x + y; coefficient mu_y(x)
                base = tuple(lo - y[i] - ln for i, (lo, ln) in enumerate(zip(lo_old, lo_new)))
            else:
                # destination z reads from z - y; coefficient mu_y(z - y)
                base = tuple(lo + y[i] - ln for i, (lo, ln) in enumerate(zip(lo_old, lo_new)))
            a0, a1 = max(base[0], r0), min(base[0] + old.shape[0], r1)
            if a0 >= a1:
                continue
            dst = (slice(a0, a1),) + tuple(
                slice(b, b + s) for b, s in zip(base[1:], old.shape[1:])
            )
            src = (slice(a0 - base[0], a1 - base[0]),) + tuple(
                slice(None) for _ in old.shape[1:]
            )
            if adjoint:
                coef_lo = tuple(l + sl.start for l, sl in zip(lo_new, dst))
                coef = tables.log_mu(j, coef_lo, old[src].shape)
            else:
                coef_lo = tuple(
                    lo_old[i] + (a0 - base[0] if i == 0 else 0) for i in range(d)
                )
                coef = tables.log_mu(j, coef_lo, old[src].shape)
            np.logaddexp(new[dst], old[src] + coef, out=new[dst])

    if workers <= 1 or shape_new[0] < 2 * workers:
        fill_rows(0, shape_new[0])
    else:
        bounds = np.linspace(0, shape_new[0], workers + 1, dtype=int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(
                pool.map(
                    lambda k: fill_rows(int(bounds[k]), int(bounds[k + 1])),
                    range(workers),
                )
            )
    return LogMassField(fld.n + 1, d, lo_new, new)


def _step_sparse(fld: LogMassField, env: EnvironmentField, adjoint: bool) -> LogMassField:
    offs = env.spec.step_set.sorted_offsets()
    log_mu_cache: dict[int, list[float]] = {}

    def log_mu_at(x: Site) -> list[float]:
        i = env.law_index(x)
        if i not in log_mu_cache:
            law = env.spec.law_support[i]
            log_mu_cache[i] = [
                math.log(law.mean_offspring[y]) if law.mean_offspring.get(y, 0.0) > 0 else NEG_INF
                for y in offs
            ]
        return log_mu_cache[i]

    old = fld.values
    dests: set[Site] = set()
    for x in old:
        for y in offs:
            dests.add(sub(x, y) if adjoint else tuple(a + b for a, b in zip(x, y)))
    new: dict[Site, float] = {}
    for z in sorted(dests):
        acc = NEG_INF
        if adjoint:
            coefs = log_mu_at(z)
        for j, y in enumerate(offs):
            if adjoint:
                src = tuple(a + b for a, b in zip(z, y))
                c = coefs[j]
            else:
                src = sub(z, y)
                c = log_mu_at(src)[j]
            v = old.get(src, NEG_INF)
            if v > NEG_INF and c > NEG_INF:
                acc = np.logaddexp(acc, v + c)
        if acc > NEG_INF:
            new[z] = float(acc)
    d = fld.dimension
    lo = tuple(min(x[i] for x in new) for i in range(d)) if new else fld.lo
    return LogMassField(fld.n + 1, d, lo, new)


def forward_layer(
    env: EnvironmentField,
    fld: LogMassField,
    max_radius: int | None = None,
    adjoint: bool = False,
    workers: int = 1,
) -> LogMassField:
    """One DP step.  Raises if the new bounding box would exceed max_radius."""
    l0 = env.spec.step_set.l0_max
    if max_radius is not None:
        reach = max(
            abs(c) for corner in (fld.lo, fld.hi) for c in corner
        ) + l0
        if reach > max_radius:
            raise SolverError(
                f"layer {fld.n + 1} bounding box exceeds radius {max_radius}"
            )
    if fld.dense:
        tables = _Tables(
            env,
            tuple(l - l0 for l in fld.lo),
            tuple(h + l0 for h in fld.hi),
        )
        return _step_dense(fld, tables, adjoint, workers)
    return _step_sparse(fld, env, adjoint)


def iter_layers(
    env: EnvironmentField,
    start: Site,
    n: int,
    adjoint: bool = False,
    max_radius: int | None = None,
    workers: int = 1,
) -> Iterator[LogMassField]:
    """Yield layers 0..n one at a time (constant memory in the horizon)."""
    if n < 0:
        raise SolverError("negative horizon")
    d = env.spec.dimension
    sparse = d == 3
    fld = LogMassField.delta(tuple(start), sparse=sparse)
    yield fld
    if n == 0:
        return
    offs = env.spec.step_set.sorted_offsets()
    tables = None
    if not sparse:
        lo_full = tuple(
            s + n * min(y[i] for y in offs) for i, s in enumerate(start)
        )
        hi_full = tuple(
            s + n * max(y[i] for y in offs) for i, s in enumerate(start)
        )
        if adjoint:
            lo_full, hi_full = (
                tuple(s - n * max(y[i] for y in offs) for i, s in enumerate(start)),
                tuple(s - n * min(y[i] for y in offs) for i, s in enumerate(start)),
            )
        if max_radius is not None:
            reach = max(abs(c) for corner in (lo_full, hi_full) for c in corner)
            if reach > max_radius:
                raise SolverError(
                    f"horizon {n} bounding box exceeds radius {max_radius}"
                )
        tables = _Tables(env, lo_full, hi_full)
    for _ in range(n):
        if sparse:
            fld = _step_sparse(fld, env, adjoint)
        else:
            fld = _step_dense(fld, tables, adjoint, workers)
        yield fld


def solve(
    env: EnvironmentField,
    start: Site,
    n: int,
    adjoint: bool = False,
    max_radius: int | None = None,
    workers: int = 1,
) -> list[LogMassField]:
    """All layers 0..n.

    Forward (default): layer k at site x is log E_w eta_k^start(x).
    Adjoint: layer k at site x is log E_w eta_k^x(start), the fixed-target
    object evolved by the Anderson-equation dynamics.
    """
    return list(iter_layers(env, start, n, adjoint, max_radius, workers))


# --- Anderson-equation check -------------------------------------------------


@dataclass(frozen=True, eq=False)
class FactorizedEnv:
    """Environment whose laws factorize as mu_y(x) = r(x) * p(x, y).

    `r_fn` is the mean total offspring at x, `p_fn` the offspring placement
    distribution.  Every finite-support law factorizes this way with
    r = mean_total and p = mu / r; `from_environment` builds exactly that.
    A hand-built (r, p) pair is validated against the environment's means
    by check_anderson_equation.
    """

    env: EnvironmentField
    r_fn: Callable[[Site], float]
    p_fn: Callable[[Site], dict[Site, float]]

    @classmethod
    def from_environment(cls, env: EnvironmentField) -> "FactorizedEnv":
        def r_fn(x: Site) -> float:
            return env.law_at(x).mean_total

        def p_fn(x: Site) -> dict[Site, float]:
            law = env.law_at(x)
            r = law.mean_total
            return {y: m / r for y, m in law.mean_offspring.items()}

        return cls(env, r_fn, p_fn)


def check_anderson_equation(
    fenv: FactorizedEnv, layers: list[LogMassField], factor_tol: float = 1e-10
) -> float:
    """Max relative residual of the discrete Anderson identity over the layers.

    `layers` must be adjoint layers (see module docstring); the residual at
    (k, x) is |u_{k+1}(x) - u_k(x) - r(x)(Lap u_k)(x) - (r(x)-1)u_k(x)|
    divided by max(1, |u_k(x)|, |u_{k+1}(x)|), the scale of the cancelling
    terms.  Raises SolverError if the (r, p) pair fails to reproduce the
    environment's mean offspring within factor_tol.
    """
    if len(layers) < 2:
        return 0.0
    offsets = fenv.env.spec.step_set.sorted_offsets()
    checked: set[int] = set()
    max_resid = 0.0
    for prev, cur in zip(layers, layers[1:]):
        lo, hi = cur.lo, cur.hi
        d = cur.dimension
        for idx in product(*(range(l, h + 1) for l, h in zip(lo, hi))):
            x = tuple(idx)
            li = fenv.env.law_index(x)
            if li not in checked:
                checked.add(li)
                law = fenv.env.spec.law_support[li]
                r = fenv.r_fn(x)
                p = fenv.p_fn(x)
                for y in offsets:
                    mu = law.mean_offspring.get(y, 0.0)
                    if abs(mu - r * p.get(y, 0.0)) > factor_tol:
                        raise SolverError(
                            f"law at {x} does not factorize: mu_{y}={mu}, "
                            f"r*p={r * p.get(y, 0.0)}"
                        )
            r = fenv.r_fn(x)
            p = fenv.p_fn(x)
            u_x = math.exp(prev.get(x)) if prev.get(x) > NEG_INF else 0.0
            u_next = math.exp(cur.get(x)) if cur.get(x) > NEG_INF else 0.0
            lap = 0.0
            for y in offsets:
                v = prev.get(tuple(a + b for a, b in zip(x, y)))
                u_y = math.exp(v) if v > NEG_INF else 0.0
                lap += p.get(y, 0.0) * (u_y - u_x)
            resid = abs(u_next - u_x - r * lap - (r - 1.0) * u_x)
            scale = max(1.0, abs(u_x), abs(u_next))
            max_resid = max(max_resid, resid / scale)
    return max_resid


# --- Layer dumps --------------------------------------------------------------


def write_layer_csv(fld: LogMassField, path: str) -> None:
    """CSV dump: one row per finite-mass site, coordinates then log mass."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(fld.dimension)] + ["log_mass"])
        for site, v in fld.items():
            w.writerow(list(site) + [repr(v)])


def read_layer_csv(path: str) -> dict[Site, float]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    d = len(head) - 1
    return {
        tuple(int(c) for c in row[:d]): float(row[d]) for row in rows[1:]
    }


def write_layer_binary(fld: LogMassField, path: str) -> None:
    """Compact binary layer dump.

    Header: magic "BRWL", u16 version, u16 dimension, i64 n, d x i64 lower
    box corner, d x u64 box shape; then the layer as little-endian float64
    in row-major order (missing sites hold -inf).
    """
    if fld.dense:
        lo, arr = fld.lo, fld.values
    else:
        lo, hi = fld.lo, fld.hi
        if fld.values:
            lo = tuple(min(x[i] for x in fld.values) for i in range(fld.dimension))
        shape = tuple(h - l + 1 for l, h in zip(lo, hi))
        arr = np.full(shape, NEG_INF, dtype=np.float64)
        for x, v in fld.values.items():
            arr[tuple(c - l for c, l in zip(x, lo))] = v
    with open(path, "wb") as fh:
        fh.write(_BINARY_MAGIC)
        fh.write(struct.pack("<HHq", _BINARY_VERSION, fld.dimension, fld.n))
        fh.write(struct.pack(f"<{fld.dimension}q", *lo))
        fh.write(struct.pack(f"<{fld.dimension}Q", *arr.shape))
        fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_layer_binary(path: str) -> LogMassField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _BINARY_MAGIC:
            raise SolverError(f"not a layer file: bad magic {magic!r}")
        version, d, n = struct.unpack("<HHq", fh.read(12))
        if version != _BINARY_VERSION:
            raise SolverError(f"unsupported layer format version {version}")
        lo = struct.unpack(f"<{d}q", fh.read(8 * d))
        shape = struct.unpack(f"<{d}Q", fh.read(8 * d))
        count = int(np.prod(shape))
        data = np.frombuffer(fh.read(8 * count), dtype="<f8").astype(np.float64)
    return LogMassField(n, d, tuple(lo), data.reshape(shape))
