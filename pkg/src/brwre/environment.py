"""Random branching environments on Z^d.

A SiteLaw is a finitely supported offspring distribution: each atom is an
offspring configuration v (how many children go to each admissible offset),
and every configuration carries at least one child, so populations never die
out under the unrestricted dynamics.  An EnvironmentField assigns one law
from a finite support to every lattice site through a counter-based hash of
(master_seed, cell), which makes the field lazily evaluable over an infinite
lattice, reproducible, and -- in block-window mode -- finitely dependent by
construction: the law at x reads only the per-cell uniforms in the l1-window
of radius w around x, so sites at l1 distance >= 2w+1 see disjoint cells.

Condition checks (branching, uniform ellipticity, bounded mean offspring,
aperiodicity) are evaluated on the support, not on a realization: they are
almost-sure properties of the field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .lattice import Site, StepSet, l1_norm, unit_vectors
from .seeding import TAG_ENVIRONMENT, cell_uniform

PROB_TOL = 1e-12


class EnvironmentError_(ValueError):
    """Invalid environment specification or query."""


@dataclass(frozen=True)
class OffspringConfig:
    """One offspring configuration v: children per offset, at least one child."""

    counts: tuple[tuple[Site, int], ...]

    def __post_init__(self) -> None:
        seen = set()
        for offset, c in self.counts:
            if c < 0:
                raise EnvironmentError_(f"negative child count at {offset}")
            if offset in seen:
                raise EnvironmentError_(f"duplicate offset {offset}")
            seen.add(offset)
        if self.total < 1:
            raise EnvironmentError_("offspring configuration with no children")

    @classmethod
    def from_dict(cls, counts: Mapping[Site, int]) -> "OffspringConfig":
        items = tuple(sorted((tuple(k), int(v)) for k, v in counts.items() if v))
        return cls(items)

    @property
    def total(self) -> int:
        return sum(c for _, c in self.counts)

    def count(self, offset: Site) -> int:
        for o, c in self.counts:
            if o == offset:
                return c
        return 0

    def as_dict(self) -> dict[Site, int]:
        return dict(self.counts)


@dataclass(frozen=True)
class SiteLaw:
    """Offspring law at one site: atoms (configuration, probability)."""

    atoms: tuple[tuple[OffspringConfig, float], ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            raise EnvironmentError_("law with no atoms")
        total_p = 0.0
        for _, p in self.atoms:
            if not 0.0 <= p <= 1.0:
                raise EnvironmentError_(f"atom probability {p} outside [0,1]")
            total_p += p
        if abs(total_p - 1.0) > PROB_TOL:
            raise EnvironmentError_(f"atom probabilities sum to {total_p}, not 1")

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[tuple[Mapping[Site, int] | OffspringConfig, float]]
    ) -> "SiteLaw":
        atoms = []
        for cfg, p in pairs:
            if not isinstance(cfg, OffspringConfig):
                cfg = OffspringConfig.from_dict(cfg)
            atoms.append((cfg, float(p)))
        return cls(tuple(atoms))

    @cached_property
    def mean_offspring(self) -> dict[Site, float]:
        """mu_y = sum_v w(v) v_y, the mean number of children sent to offset y."""
        mu: dict[Site, float] = {}
        for cfg, p in self.atoms:
            for offset, c in cfg.counts:
                mu[offset] = mu.get(offset, 0.0) + p * c
        return dict(sorted(mu.items()))

    @cached_property
    def mean_total(self) -> float:
        return sum(p * cfg.total for cfg, p in self.atoms)

    @cached_property
    def atom_probs(self) -> np.ndarray:
        """Atom probabilities normalized to sum exactly 1 (sampler input)."""
        p = np.array([p for _, p in self.atoms], dtype=np.float64)
        return p / p.sum()

    def prob_of(self, cfg: OffspringConfig) -> float:
        for a, p in self.atoms:
            if a == cfg:
                return p
        return 0.0

    def step_mass(self, offset: Site) -> float:
        """Probability that at least one child lands on `offset`."""
        return sum(p for cfg, p in self.atoms if cfg.count(offset) >= 1)


def mean_offspring(law: SiteLaw) -> dict[Site, float]:
    """Mean offspring vector of a law (module-level alias of the property)."""
    return law.mean_offspring


@dataclass(frozen=True)
class Dependence:
    mode: str
    window_radius: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("iid", "block_window"):
            raise EnvironmentError_(f"unknown dependence mode {self.mode!r}")
        if self.mode == "block_window" and self.window_radius < 1:
            raise EnvironmentError_("block_window mode needs window_radius >= 1")
        if self.mode == "iid" and self.window_radius not in (0,):
            raise EnvironmentError_("iid mode takes no window_radius")

    @property
    def rho(self) -> int:
        """Declared l1 dependence range: laws at distance >= rho are independent."""
        return 1 if self.mode == "iid" else 2 * self.window_radius + 1


@dataclass(frozen=True)
class EnvironmentSpec:
    dimension: int
    step_set: StepSet
    law_support: tuple[SiteLaw, ...]
    weights: tuple[float, ...]
    dependence: Dependence = Dependence("iid")
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.dimension not in (1, 2, 3):
            raise EnvironmentError_(f"dimension {self.dimension} not supported")
        if self.step_set.dimension != self.dimension:
            raise EnvironmentError_("step set dimension mismatch")
        if len(self.law_support) != len(self.weights):
            raise EnvironmentError_("one weight per support law required")
        if not self.law_support:
            raise EnvironmentError_("empty law support")
        if any(w < 0 for w in self.weights):
            raise EnvironmentError_("negative weight")
        if abs(sum(self.weights) - 1.0) > PROB_TOL:
            raise EnvironmentError_(f"weights sum to {sum(self.weights)}, not 1")
        allowed = set(self.step_set.offsets)
        for law in self.law_support:
            for cfg, _ in law.atoms:
                for offset, _ in cfg.counts:
                    if offset not in allowed:
                        raise EnvironmentError_(
                            f"offspring offset {offset} outside the step set"
                        )

    @property
    def rho(self) -> int:
        return self.dependence.rho


@dataclass(frozen=True)
class ConditionReport:
    holds_B: bool
    holds_UE: bool
    epsilon0: float
    holds_D: bool
    D0: float
    holds_A: bool
    witness: tuple[Site, OffspringConfig] | None
    rho: int

    def all_standing(self) -> bool:
        return self.holds_B and self.holds_UE and self.holds_D and self.holds_A

    def as_dict(self) -> dict:
        w = None
        if self.witness is not None:
            x, v = self.witness
            w = {"offset": list(x), "counts": {_offset_key(o): c for o, c in v.counts}}
        return {
            "holds_B": self.holds_B,
            "holds_UE": self.holds_UE,
            "epsilon0": self.epsilon0,
            "holds_D": self.holds_D,
            "D0": self.D0,
            "holds_A": self.holds_A,
            "witness": w,
            "rho": self.rho,
        }


def _select_law_index(cell_uniforms: Sequence[float], cum_weights: np.ndarray) -> int:
    """Mixing rule: sum of per-cell uniforms mod 1, then inverse CDF over weights.

    Pure in the uniforms, so two sites with equal window content always get
    the same law (the construction-audit property).  The sum is accumulated
    in window-cell order, matching the vectorized grid path bit for bit.
    """
    acc = np.float64(0.0)
    for u in cell_uniforms:
        acc = acc + np.float64(u)
    return int(np.searchsorted(cum_weights, np.mod(acc, 1.0), side="right"))


@dataclass(frozen=True, eq=False)
class EnvironmentField:
    """Lazily evaluated environment: pure map Site -> SiteLaw.

    Immutable and safe for concurrent reads.  `law_index_grid` is the
    vectorized evaluation over a box and agrees bitwise with per-site calls.
    """

    spec: EnvironmentSpec
    _override: Callable[[Site], int] | None = field(default=None, repr=False)

    @cached_property
    def _cum_weights(self) -> np.ndarray:
        return np.cumsum(np.asarray(self.spec.weights, dtype=np.float64))

    @cached_property
    def _window_cells(self) -> tuple[Site, ...]:
        dep = self.spec.dependence
        if dep.mode == "iid":
            return (tuple(0 for _ in range(self.spec.dimension)),)
        w = dep.window_radius
        cells = [
            c
            for c in product(range(-w, w + 1), repeat=self.spec.dimension)
            if l1_norm(c) <= w
        ]
        return tuple(sorted(cells))

    @property
    def rho(self) -> int:
        return self.spec.rho

    @cached_property
    def conditions(self) -> ConditionReport:
        return check_conditions(self.spec)

    @cached_property
    def _index_memo(self) -> dict[Site, int]:
        return {}

    def dependence_window(self, x: Site) -> list[Site]:
        """Underlying seed cells the law at x reads."""
        return [tuple(a + b for a, b in zip(x, c)) for c in self._window_cells]

    def law_index(self, x: Site) -> int:
        x = tuple(x)
        if self._override is not None:
            return self._override(x)
        # memoized: the field is a pure function of the site, and simulation
        # revisits the same sites every generation
        hit = self._index_memo.get(x)
        if hit is not None:
            return hit
        us = [
            float(cell_uniform(self.spec.master_seed, cell, TAG_ENVIRONMENT))
            for cell in self.dependence_window(x)
        ]
        if self.spec.dependence.mode == "iid":
            # single-cell window: plain inverse CDF on the cell uniform
            idx = int(np.searchsorted(self._cum_weights, us[0], side="right"))
        else:
            idx = _select_law_index(us, self._cum_weights)
        self._index_memo[x] = idx
        return idx

    def law_at(self, x: Site) -> SiteLaw:
        return self.spec.law_support[self.law_index(x)]

    def law_index_grid(self, lo: Site, hi: Site) -> np.ndarray:
        """Law indices over the inclusive box [lo, hi], vectorized.

        Returns an int array of shape hi-lo+1 whose entry at (x-lo) is
        law_index(x).
        """
        d = self.spec.dimension
        shape = tuple(h - l + 1 for l, h in zip(lo, hi))
        if any(s <= 0 for s in shape):
            raise EnvironmentError_(f"empty box {lo}..{hi}")
        if self._override is not None:
            out = np.empty(shape, dtype=np.int64)
            for idx in product(*(range(s) for s in shape)):
                out[idx] = self._override(tuple(l + i for l, i in zip(lo, idx)))
            return out
        axes = [np.arange(l, h + 1, dtype=np.int64) for l, h in zip(lo, hi)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        if self.spec.dependence.mode == "iid":
            u = cell_uniform(self.spec.master_seed, mesh, TAG_ENVIRONMENT)
        else:
            w = self.spec.dependence.window_radius
            pad_lo = tuple(l - w for l in lo)
            pad_hi = tuple(h + w for h in hi)
            pad_axes = [
                np.arange(l, h + 1, dtype=np.int64) for l, h in zip(pad_lo, pad_hi)
            ]
            pad_mesh = np.stack(np.meshgrid(*pad_axes, indexing="ij"), axis=-1)
            cell_u = cell_uniform(self.spec.master_seed, pad_mesh, TAG_ENVIRONMENT)
            acc = np.zeros(shape, dtype=np.float64)
            for c in self._window_cells:
                sl = tuple(slice(w + ci, w + ci + s) for ci, s in zip(c, shape))
                acc += cell_u[sl]
            u = np.mod(acc, 1.0)
        return np.searchsorted(self._cum_weights, u, side="right").astype(np.int64)

    @classmethod
    def from_index_function(
        cls, spec: EnvironmentSpec, law_index_fn: Callable[[Site], int]
    ) -> "EnvironmentField":
        """Hand-built field for oracles and tests; determinism is the caller's duty."""
        return cls(spec, law_index_fn)


def build_environment(spec: EnvironmentSpec) -> EnvironmentField:
    """Realize the random environment described by `spec`."""
    return EnvironmentField(spec)


def site_law(env: EnvironmentField, x: Site) -> SiteLaw:
    """The offspring law the environment assigns to site x."""
    return env.law_at(tuple(x))


def check_conditions(spec: EnvironmentSpec) -> ConditionReport:
    """Evaluate the standing conditions on the support of the environment law.

    B: some charged support law has an atom with two or more children.
    UE: eps0 = min over charged laws and signed unit directions e of the
        probability of sending at least one child to e; UE holds iff eps0 > 0.
    D: D0 = max mean total offspring over the support (always finite here).
    A: some charged law has an atom v with v_x >= 1 at an offset x of even
       l1 norm (offset 0, if admissible, counts: ||0|| = 0 is even).
    """
    charged = [
        law for law, w in zip(spec.law_support, spec.weights) if w > 0.0
    ]
    holds_B = any(
        cfg.total >= 2 and p > 0.0 for law in charged for cfg, p in law.atoms
    )
    eps0 = min(
        law.step_mass(e) for law in charged for e in unit_vectors(spec.dimension)
    )
    holds_UE = eps0 > 0.0
    D0 = max(law.mean_total for law in charged)
    witness: tuple[Site, OffspringConfig] | None = None
    for law in charged:
        for cfg, p in law.atoms:
            if p <= 0.0:
                continue
            for offset, c in cfg.counts:
                if c >= 1 and l1_norm(offset) % 2 == 0:
                    witness = (offset, cfg)
                    break
            if witness:
                break
        if witness:
            break
    return ConditionReport(
        holds_B=holds_B,
        holds_UE=holds_UE,
        epsilon0=float(eps0),
        holds_D=True,
        D0=float(D0),
        holds_A=witness is not None,
        witness=witness,
        rho=spec.rho,
    )


def is_delta_aperiodic(
    law: SiteLaw, delta: float, witness: tuple[Site, OffspringConfig]
) -> bool:
    """True iff the law charges the aperiodicity witness strictly above delta.

    The witness must be admissible: an offset of even l1 norm receiving at
    least one child in the configuration.
    """
    x, v = witness
    if l1_norm(x) % 2 != 0 or v.count(tuple(x)) < 1:
        raise EnvironmentError_(f"witness ({x}, {v}) is not an aperiodicity witness")
    return law.prob_of(v) > delta


# --- JSON interchange -------------------------------------------------------
#
# Schema (all fields required unless noted; unknown fields are rejected):
# {
#   "dimension": 1|2|3,
#   "step_set": [[dx, ...], ...],
#   "laws": [{"atoms": [{"counts": {"(1,)": 1, ...}, "p": 0.5}, ...]}, ...],
#   "weights": [w0, ...],
#   "dependence": {"mode": "iid"} | {"mode": "block_window", "window_radius": w},
#   "seed": integer
# }
# Offset keys are the coordinates in parentheses, e.g. "(1,)" in d=1 and
# "(1,0)" in d=2; bare "1" is accepted on input for d=1.


def _offset_key(offset: Site) -> str:
    if len(offset) == 1:
        return f"({offset[0]},)"
    return "(" + ",".join(str(c) for c in offset) + ")"


def _parse_offset_key(key: str, dimension: int) -> Site:
    body = key.strip()
    if body.startswith("(") and body.endswith(")"):
        body = body[1:-1]
    parts = [p for p in (s.strip() for s in body.split(",")) if p]
    try:
        offset = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise EnvironmentError_(f"bad offset key {key!r}") from exc
    if len(offset) != dimension:
        raise EnvironmentError_(
            f"offset key {key!r} has {len(offset)} coords, expected {dimension}"
        )
    return offset


def _require_keys(obj: Mapping, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise EnvironmentError_(f"unknown fields in {where}: {sorted(unknown)}")


def spec_from_dict(doc: Mapping) -> EnvironmentSpec:
    _require_keys(
        doc, {"dimension", "step_set", "laws", "weights", "dependence", "seed"}, "environment"
    )
    try:
        dimension = int(doc["dimension"])
        step_set = StepSet(tuple(tuple(int(c) for c in y) for y in doc["step_set"]))
        laws_doc = doc["laws"]
        weights = tuple(float(w) for w in doc["weights"])
        dep_doc = doc.get("dependence", {"mode": "iid"})
        seed = int(doc.get("seed", 0))
    except KeyError as exc:
        raise EnvironmentError_(f"missing environment field {exc}") from exc
    _require_keys(dep_doc, {"mode", "window_radius"}, "dependence")
    dependence = Dependence(
        str(dep_doc["mode"]), int(dep_doc.get("window_radius", 0))
    )
    laws = []
    for i, law_doc in enumerate(laws_doc):
        _require_keys(law_doc, {"atoms"}, f"laws[{i}]")
        atoms = []
        for j, atom_doc in enumerate(law_doc["atoms"]):
            _require_keys(atom_doc, {"counts", "p"}, f"laws[{i}].atoms[{j}]")
            counts = {
                _parse_offset_key(k, dimension): int(v)
                for k, v in atom_doc["counts"].items()
            }
            atoms.append((OffspringConfig.from_dict(counts), float(atom_doc["p"])))
        laws.append(SiteLaw(tuple(atoms)))
    return EnvironmentSpec(
        dimension=dimension,
        step_set=step_set,
        law_support=tuple(laws),
        weights=weights,
        dependence=dependence,
        master_seed=seed,
    )


def spec_to_dict(spec: EnvironmentSpec) -> dict:
    dep: dict = {"mode": spec.dependence.mode}
    if spec.dependence.mode == "block_window":
        dep["window_radius"] = spec.dependence.window_radius
    return {
        "dimension": spec.dimension,
        "step_set": [list(y) for y in spec.step_set.offsets],
        "laws": [
            {
                "atoms": [
                    {
                        "counts": {_offset_key(o): c for o, c in cfg.counts},
                        "p": p,
                    }
                    for cfg, p in law.atoms
                ]
            }
            for law in spec.law_support
        ],
        "weights": list(spec.weights),
        "dependence": dep,
        "seed": spec.master_seed,
    }


def load_spec(path: str) -> EnvironmentSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return spec_from_dict(json.load(fh))


def dump_spec(spec: EnvironmentSpec, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec_to_dict(spec), fh, indent=2, sort_keys=True)
        fh.write("\n")
