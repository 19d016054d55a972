"""Transience criterion for i.i.d. environments as a convex program.

The process is transient iff there are s != 0 and lambda > 0 with
sum_y mu_y^w lambda^{y.s} <= 1 for every law w in the support.  Writing
t = (ln lambda) s collapses the pair into one vector: transience holds iff

    Phi(t) = max_w ln sum_y mu_y^w exp(t.y)

dips to 0 or below at some t != 0.  Phi is a maximum of log-sum-exp
functions, hence convex, so a global minimum is found by a direction grid
with golden-section line searches plus a finite-difference descent polish.
The excluded point t = 0 corresponds to lambda = 1, where the criterion
degenerates to "every support law has mean total offspring <= 1"; that case
is tested separately and flagged.

The reported `value` is on the lambda scale (exp of the minimum of Phi), the
quantity compared against 1; `log_value` is the minimum itself.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .environment import SiteLaw
from .lattice import Site

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
SEARCH_RADIUS = 64.0


class CriterionError(ValueError):
    pass


@dataclass(frozen=True)
class CriterionResult:
    t_star: tuple[float, ...]
    value: float
    log_value: float
    verdict: str
    argmax_law: int
    gradient_norm: float
    on_boundary: bool
    lambda_one: bool

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "t_star": list(self.t_star),
            "value": self.value,
            "log_value": self.log_value,
            "argmax_law": self.argmax_law,
            "gradient_norm": self.gradient_norm,
            "on_boundary": self.on_boundary,
            "lambda_one": self.lambda_one,
        }


class _Phi:
    """Phi(t) = max over support laws of ln sum_y mu_y exp(t.y)."""

    def __init__(self, law_support: list[SiteLaw]):
        if not law_support:
            raise CriterionError("empty law support")
        self.per_law: list[tuple[np.ndarray, np.ndarray]] = []
        self.dimension = None
        for law in law_support:
            mu = law.mean_offspring
            if sum(mu.values()) < 1.0 - 1e-9:
                raise CriterionError(
                    f"law has mean total offspring {sum(mu.values())} < 1"
                )
            offs = [y for y, m in mu.items() if m > 0.0]
            self.dimension = len(offs[0])
            self.per_law.append(
                (
                    np.log(np.array([mu[y] for y in offs], dtype=np.float64)),
                    np.array(offs, dtype=np.float64),
                )
            )

    def value(self, t: np.ndarray) -> float:
        return max(
            float(logsumexp(logmu + offs @ t)) for logmu, offs in self.per_law
        )

    def argmax_law(self, t: np.ndarray) -> int:
        vals = [float(logsumexp(logmu + offs @ t)) for logmu, offs in self.per_law]
        return int(np.argmax(vals))


def criterion_value_at(law_support: list[SiteLaw], t) -> float:
    """Phi(t): the worst-case log criterion value at parameter t."""
    return _Phi(list(law_support)).value(np.asarray(t, dtype=np.float64))


def _golden_section(f, lo: float, hi: float, iters: int = 90) -> tuple[float, float]:
    a, b = lo, hi
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(iters):
        if b - a < 1e-13 * max(1.0, abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def _direction_grid(d: int) -> list[np.ndarray]:
    if d == 1:
        return [np.array([1.0]), np.array([-1.0])]
    if d == 2:
        return [
            np.array([math.cos(k * math.pi / 16), math.sin(k * math.pi / 16)])
            for k in range(32)
        ]
    dirs = []
    for v in itertools.product((-1.0, 0.0, 1.0), repeat=3):
        a = np.array(v)
        n = np.linalg.norm(a)
        if n > 0:
            dirs.append(a / n)
    return dirs


def _fd_descent(phi: _Phi, t0: np.ndarray, max_iter: int = 300) -> np.ndarray:
    """Finite-difference gradient descent with backtracking, convex objective."""
    h = 1e-7
    t = t0.astype(np.float64).copy()
    f = phi.value(t)
    d = len(t)
    for _ in range(max_iter):
        grad = np.zeros(d)
        for i in range(d):
            e = np.zeros(d)
            e[i] = h
            grad[i] = (phi.value(t + e) - phi.value(t - e)) / (2 * h)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < 1e-12:
            break
        step = 1.0
        moved = False
        while step * gnorm > 1e-8:
            cand = t - step * grad
            cand = np.clip(cand, -SEARCH_RADIUS, SEARCH_RADIUS)
            fc = phi.value(cand)
            if fc < f - 1e-15:
                t, f = cand, fc
                moved = True
                break
            step *= 0.5
        if not moved:
            break
    return t


def transience_criterion(
    law_support: list[SiteLaw], tol: float = 1e-6
) -> CriterionResult:
    """Minimize the criterion over t and classify.

    Verdicts: "transient" when min Phi < -tol (a feasible witness t != 0
    exists), "recurrent" when min Phi > tol, "boundary" within +-tol
    (exact equality is transient but finite precision cannot certify it).
    """
    support = list(law_support)
    phi = _Phi(support)
    d = phi.dimension
    assert d is not None

    # lambda = 1 special case: criterion reads sum_y mu_y <= 1 for all laws
    max_total = max(sum(law.mean_offspring.values()) for law in support)
    if max_total <= 1.0 + 1e-12:
        t0 = np.zeros(d)
        return CriterionResult(
            t_star=tuple(t0),
            value=float(max_total),
            log_value=math.log(max_total),
            verdict="transient",
            argmax_law=phi.argmax_law(t0),
            gradient_norm=0.0,
            on_boundary=False,
            lambda_one=True,
        )

    best_t = np.zeros(d)
    best_f = phi.value(best_t)
    for u in _direction_grid(d):
        r, fr = _golden_section(lambda r: phi.value(r * u), 0.0, SEARCH_RADIUS)
        if fr < best_f:
            best_f, best_t = fr, r * u
    t_star = _fd_descent(phi, best_t)
    f_star = phi.value(t_star)
    if f_star > best_f:
        t_star, f_star = best_t, best_f

    h = 1e-7
    grad = np.zeros(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        grad[i] = (phi.value(t_star + e) - phi.value(t_star - e)) / (2 * h)
    gnorm = float(np.linalg.norm(grad))
    on_boundary = bool(np.max(np.abs(t_star)) >= SEARCH_RADIUS * 0.999)

    if f_star < -tol:
        verdict = "transient"
    elif f_star > tol:
        verdict = "recurrent"
    else:
        verdict = "boundary"
    return CriterionResult(
        t_star=tuple(float(c) for c in t_star),
        value=float(math.exp(f_star)),
        log_value=float(f_star),
        verdict=verdict,
        argmax_law=phi.argmax_law(t_star),
        gradient_norm=gnorm,
        on_boundary=on_boundary,
        lambda_one=False,
    )
