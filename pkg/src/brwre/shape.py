"""Passage times, reachability sets and limit-shape estimates.

An edge x -> x+y is delta-open when the law at x sends at least one child to
offset y with probability strictly greater than delta.  T(origin, x) is the
minimal number of steps along delta-open edges, computed by BFS truncated to
the l1 ball of a caller-chosen radius; a boundary-contact flag records
whether the frontier touched the truncation shell (so a caller can tell
"genuinely unreachable" from "escaped the box").  W(n) = {x : T <= n} scaled
by 1/n approximates the limit shape; R(n) is the set reached in exactly n
steps (parity matters: without an aperiodic site on the path, R alternates
between the even and odd sublattices).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import numpy as np

from .environment import EnvironmentField
from .lattice import RationalVector, Site, l1_norm

INF = math.inf


class ShapeError(ValueError):
    pass


def _shift(mask: np.ndarray, y: Site) -> np.ndarray:
    """mask translated by +y, zero-filled (out[i+y] = mask[i])."""
    out = np.zeros_like(mask)
    src = []
    dst = []
    for s, yi in zip(mask.shape, y):
        if abs(yi) >= s:
            return out
        if yi >= 0:
            src.append(slice(0, s - yi))
            dst.append(slice(yi, s))
        else:
            src.append(slice(-yi, s))
            dst.append(slice(0, s + yi))
    out[tuple(dst)] = mask[tuple(src)]
    return out


def _ball_mask(shape: tuple[int, ...], center: Sequence[int], radius: int) -> np.ndarray:
    grids = np.meshgrid(
        *[np.abs(np.arange(s) - c) for s, c in zip(shape, center)], indexing="ij"
    )
    return sum(grids) <= radius


def _open_masks(
    env: EnvironmentField, delta: float, lo: Site, hi: Site
) -> tuple[tuple[Site, ...], list[np.ndarray]]:
    """Per-offset boolean grids: True where the edge out of the site is open."""
    offsets = env.spec.step_set.sorted_offsets()
    idx = env.law_index_grid(lo, hi)
    law_open = np.array(
        [
            [law.step_mass(y) > delta for y in offsets]
            for law in env.spec.law_support
        ],
        dtype=bool,
    )
    return offsets, [law_open[idx, j] for j in range(len(offsets))]


@dataclass(frozen=True, eq=False)
class PassageTimeMap:
    delta: float
    origin: Site
    radius: int
    times: dict[Site, int]
    boundary_contact: bool

    def t(self, x: Site) -> float:
        """T(origin, x); infinity when x was not reached inside the ball."""
        x = tuple(x)
        if x == self.origin:
            return 0
        return self.times.get(x, INF)

    def reached(self, n: int) -> list[Site]:
        """W(n): sites with passage time at most n."""
        return [x for x, t in self.times.items() if t <= n]


def passage_times(
    env: EnvironmentField,
    delta: float,
    radius: int,
    origin: Site | None = None,
) -> PassageTimeMap:
    """BFS passage times from `origin` inside the l1 ball of `radius`."""
    if radius <= 0:
        raise ShapeError("radius must be positive")
    d = env.spec.dimension
    origin = tuple(origin) if origin is not None else (0,) * d
    lo = tuple(c - radius for c in origin)
    hi = tuple(c + radius for c in origin)
    offsets, open_m = _open_masks(env, delta, lo, hi)
    center = tuple(radius for _ in range(d))
    ball = _ball_mask(tuple(2 * radius + 1 for _ in range(d)), center, radius)
    l0 = env.spec.step_set.l0_max

    times = np.full(ball.shape, -1, dtype=np.int64)
    frontier = np.zeros(ball.shape, dtype=bool)
    frontier[center] = True
    times[center] = 0
    t = 0
    while frontier.any():
        t += 1
        nxt = np.zeros_like(frontier)
        for j, y in enumerate(offsets):
            nxt |= _shift(frontier & open_m[j], y)
        nxt &= ball & (times < 0)
        times[nxt] = t
        frontier = nxt

    visited = times >= 0
    shell = ~_ball_mask(ball.shape, center, radius - l0) if radius > l0 else ball
    contact = bool((visited & shell).any())
    out: dict[Site, int] = {}
    for idx in zip(*np.nonzero(visited)):
        site = tuple(int(i) + l for i, l in zip(idx, lo))
        out[site] = int(times[idx])
    return PassageTimeMap(delta, origin, radius, out, contact)


def iter_reachable(
    env: EnvironmentField, delta: float, n: int, start: Site
) -> Iterator[set[Site]]:
    """R(0), R(1), ..., R(n): sites reachable in exactly k delta-open steps."""
    if n < 0:
        raise ShapeError("negative step count")
    d = env.spec.dimension
    start = tuple(start)
    l0 = env.spec.step_set.l0_max
    radius = l0 * n
    lo = tuple(c - radius for c in start)
    hi = tuple(c + radius for c in start)
    offsets, open_m = _open_masks(env, delta, lo, hi)
    cur = np.zeros(tuple(2 * radius + 1 for _ in range(d)), dtype=bool)
    center = tuple(radius for _ in range(d))
    cur[center] = True

    def to_sites(mask: np.ndarray) -> set[Site]:
        return {
            tuple(int(i) + l for i, l in zip(idx, lo))
            for idx in zip(*np.nonzero(mask))
        }

    yield to_sites(cur)
    for _ in range(n):
        nxt = np.zeros_like(cur)
        for j, y in enumerate(offsets):
            nxt |= _shift(cur & open_m[j], y)
        cur = nxt
        yield to_sites(cur)


def reachable_exactly(
    env: EnvironmentField, delta: float, n: int, start: Site
) -> set[Site]:
    """R(n): the set of sites reached in exactly n delta-open steps."""
    out: set[Site] = set()
    for out in iter_reachable(env, delta, n, start):
        pass
    return out


@dataclass(frozen=True)
class NormEstimate:
    a: RationalVector
    k0: int
    samples: tuple[tuple[int, float], ...]
    value: float


def norm_estimate(
    env: EnvironmentField,
    delta: float,
    a: RationalVector,
    n_max: int,
    radius: int | None = None,
) -> NormEstimate:
    """Finite-n proxy for the passage-time norm along the rational ray a.

    Samples T(0, k0*a*n) / (k0*n) for n = 1..n_max, with k0 the smallest
    positive integer making k0*a integral; `value` is the largest-n finite
    sample (math.inf if the ray is never reached inside the ball).
    """
    if a.is_zero():
        raise ShapeError("direction must be nonzero")
    if n_max < 1:
        raise ShapeError("need n_max >= 1")
    k0 = a.integer_scale()
    need = int(math.ceil(float(k0 * n_max * a.l1())))
    if radius is None:
        radius = need
    elif radius < need:
        raise ShapeError(
            f"ray endpoint at l1 distance {need} exits the computed radius {radius}"
        )
    ptm = passage_times(env, delta, radius)
    samples: list[tuple[int, float]] = []
    value = INF
    for j in range(1, n_max + 1):
        target = a.site_at(k0 * j)
        t = ptm.t(target)
        if t < INF:
            samples.append((j, t / (k0 * j)))
            value = t / (k0 * j)
    return NormEstimate(a, k0, tuple(samples), value)


@dataclass(frozen=True)
class ShapeEstimate:
    delta: float
    n: int
    normalized_sites: tuple[tuple[float, ...], ...]
    hull: tuple[tuple[float, ...], ...]


def _hull_1d(points: Sequence[tuple[float, ...]]) -> list[tuple[float, ...]]:
    xs = sorted(p[0] for p in points)
    if xs[0] == xs[-1]:
        return [(xs[0],)]
    return [(xs[0],), (xs[-1],)]


def _hull_2d(points: Sequence[tuple[float, ...]]) -> list[tuple[float, ...]]:
    """Andrew's monotone chain; vertices in counter-clockwise order."""
    pts = sorted(set(points))
    if len(pts) <= 2:
        return list(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


def _hull_3d(points: Sequence[tuple[float, ...]]) -> list[tuple[float, ...]]:
    from scipy.spatial import ConvexHull, QhullError

    pts = sorted(set(points))
    if len(pts) <= 4:
        return list(pts)
    try:
        hull = ConvexHull(np.asarray(pts, dtype=np.float64))
    except QhullError:
        return list(pts)
    return [tuple(float(c) for c in hull.points[v]) for v in sorted(hull.vertices)]


def convex_hull(points: Sequence[tuple[float, ...]]) -> list[tuple[float, ...]]:
    if not points:
        raise ShapeError("empty point set")
    d = len(points[0])
    if d == 1:
        return _hull_1d(points)
    if d == 2:
        return _hull_2d(points)
    return _hull_3d(points)


def shape_polytope(ptm: PassageTimeMap, n: int) -> ShapeEstimate:
    """Normalized reachable set W(n)/n with its convex hull."""
    if n > ptm.radius:
        raise ShapeError(f"n={n} exceeds the map radius {ptm.radius}")
    if n == 0:
        pt = tuple(0.0 for _ in ptm.origin)
        return ShapeEstimate(ptm.delta, 0, (pt,), (pt,))
    sites = sorted(
        tuple(c - o for c, o in zip(x, ptm.origin)) for x in ptm.reached(n)
    )
    norm = tuple(tuple(c / n for c in x) for x in sites)
    # hull on the integer sites: exact arithmetic, no float-collinearity noise
    hull = tuple(tuple(c / n for c in v) for v in convex_hull(sites))
    return ShapeEstimate(ptm.delta, n, norm, hull)


def hausdorff_l1(
    a_points: Iterable[Sequence[float]], b_points: Iterable[Sequence[float]]
) -> float:
    """l1 Hausdorff distance between two finite nonempty point sets."""
    a = np.asarray(list(a_points), dtype=np.float64)
    b = np.asarray(list(b_points), dtype=np.float64)
    if a.size == 0 or b.size == 0:
        raise ShapeError("empty point set")
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]

    def directed(p: np.ndarray, q: np.ndarray) -> float:
        worst = 0.0
        for i in range(0, len(p), 512):
            chunk = p[i : i + 512]
            dist = np.abs(chunk[:, None, :] - q[None, :, :]).sum(axis=2)
            worst = max(worst, float(dist.min(axis=1).max()))
        return worst

    return max(directed(a, b), directed(b, a))
