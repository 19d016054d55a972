"""Command line front end: config ingestion, pipelines, artifacts, reports.

One JSON config file describes an experiment (environment plus command
parameters); flags may override its scalar fields.  Every command writes
its outputs under the configured output directory and records them in a
shared manifest so that `report` can consolidate and audit them.

Exit codes: 0 success, 2 config error, 3 runtime error, 4 the executed
classifier could not decide.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from . import __version__
from .classify import CriterionError, transience_criterion
from .environment import (
    EnvironmentError_,
    EnvironmentField,
    EnvironmentSpec,
    build_environment,
    spec_from_dict,
    spec_to_dict,
)
from .expectation import (
    SolverError,
    expected_total,
    iter_layers,
    write_layer_binary,
    write_layer_csv,
)
from .growth import (
    BetaProfile,
    GrowthError,
    beta_profile,
    classify_by_beta,
    total_growth,
)
from .lattice import RationalVector
from .montecarlo import (
    SamplerStats,
    SimulationError,
    estimate_return_probability,
    run as mc_run,
)
from .seeding import PURPOSE_DYNAMICS, replica_rng
from .shape import ShapeError, passage_times, shape_polytope
from . import svgplot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_INCONCLUSIVE = 4

COMMANDS = ("check", "solve", "shape", "beta", "classify", "simulate", "report")

_MODULE_ERRORS = (
    EnvironmentError_, SolverError, ShapeError, GrowthError,
    CriterionError, SimulationError, OSError, ValueError,
)


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config document

@dataclasses.dataclass(frozen=True)
class ConfigDoc:
    """Parsed and validated experiment description."""

    command: str
    output_dir: str
    environment: EnvironmentSpec | None
    seed: int | None
    workers: int | None
    parameters: dict

    def __eq__(self, other):
        if not isinstance(other, ConfigDoc):
            return NotImplemented
        return (self.command, self.output_dir, self.environment, self.seed,
                self.workers, self.parameters) == \
               (other.command, other.output_dir, other.environment,
                other.seed, other.workers, other.parameters)


def _reject_unknown(doc: Mapping, allowed: set[str], where: str) -> None:
    extra = set(doc) - allowed
    if extra:
        raise ConfigError(f"unknown fields in {where}: {sorted(extra)}")


def _as_int(doc: Mapping, key: str, where: str, *, lo: int | None = None,
            hi: int | None = None, default: int | None = None) -> int | None:
    if key not in doc or doc[key] is None:
        return default
    v = doc[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{where}.{key} must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{where}.{key} must be <= {hi}, got {v}")
    return v


def _as_site(value, dimension: int, where: str) -> list[int]:
    if (not isinstance(value, list) or len(value) != dimension
            or not all(isinstance(c, int) and not isinstance(c, bool)
                       for c in value)):
        raise ConfigError(f"{where} must be a list of {dimension} integers")
    return list(value)


def _fraction_str(f: Fraction) -> str:
    return str(f.numerator) if f.denominator == 1 else \
        f"{f.numerator}/{f.denominator}"


def _parse_fraction(v, where: str) -> Fraction:
    try:
        if isinstance(v, bool):
            raise ValueError
        if isinstance(v, (int, str)):
            return Fraction(v)
        if isinstance(v, float):
            return Fraction(str(v))
    except (ValueError, ZeroDivisionError):
        pass
    raise ConfigError(f"{where} is not a rational number: {v!r}")


def _parse_grid(value, dimension: int, where: str) -> list[list[str]]:
    """Normalize a direction grid to nested fraction strings."""
    if not isinstance(value, list) or not value:
        raise ConfigError(f"{where} must be a nonempty list")
    out = []
    for i, entry in enumerate(value):
        coords = entry if isinstance(entry, list) else [entry]
        if len(coords) != dimension:
            raise ConfigError(
                f"{where}[{i}] must have {dimension} coordinates")
        out.append([_fraction_str(_parse_fraction(c, f"{where}[{i}]"))
                    for c in coords])
    if len({tuple(e) for e in out}) != len(out):
        raise ConfigError(f"{where} contains duplicate directions")
    return out


def _validate_parameters(command: str, params: Mapping,
                         dimension: int | None) -> dict:
    """Check ranges and fill defaults; returns the canonical form."""
    if not isinstance(params, Mapping):
        raise ConfigError("parameters must be an object")
    w = f"parameters({command})"
    if command == "check":
        _reject_unknown(params, set(), w)
        return {}
    if command == "solve":
        _reject_unknown(params, {"horizon", "start", "adjoint",
                                 "max_radius", "save"}, w)
        horizon = _as_int(params, "horizon", w, lo=0)
        if horizon is None:
            raise ConfigError(f"{w}.horizon is required")
        start = params.get("start", [0] * dimension)
        adjoint = params.get("adjoint", False)
        if not isinstance(adjoint, bool):
            raise ConfigError(f"{w}.adjoint must be a boolean")
        save = params.get("save", "last")
        if save not in ("last", "all"):
            raise ConfigError(f"{w}.save must be 'last' or 'all'")
        return {
            "horizon": horizon,
            "start": _as_site(start, dimension, f"{w}.start"),
            "adjoint": adjoint,
            "max_radius": _as_int(params, "max_radius", w, lo=1),
            "save": save,
        }
    if command == "shape":
        _reject_unknown(params, {"horizon", "delta_grid", "radius"}, w)
        horizon = _as_int(params, "horizon", w, lo=1)
        if horizon is None:
            raise ConfigError(f"{w}.horizon is required")
        grid = params.get("delta_grid")
        if (not isinstance(grid, list) or not grid
                or not all(isinstance(v, (int, float))
                           and not isinstance(v, bool) for v in grid)):
            raise ConfigError(f"{w}.delta_grid must be a nonempty number list")
        grid = [float(v) for v in grid]
        if any(not 0.0 <= v < 1.0 for v in grid):
            raise ConfigError(f"{w}.delta_grid values must lie in [0, 1)")
        if sorted(set(grid)) != grid:
            raise ConfigError(f"{w}.delta_grid must be strictly increasing")
        return {
            "horizon": horizon,
            "delta_grid": grid,
            "radius": _as_int(params, "radius", w, lo=1),
        }
    if command == "beta":
        _reject_unknown(params, {"horizon", "grid"}, w)
        horizon = _as_int(params, "horizon", w, lo=1)
        if horizon is None:
            raise ConfigError(f"{w}.horizon is required")
        if "grid" not in params:
            raise ConfigError(f"{w}.grid is required")
        return {
            "horizon": horizon,
            "grid": _parse_grid(params["grid"], dimension, f"{w}.grid"),
        }
    if command == "classify":
        _reject_unknown(params, {"tolerance"}, w)
        tol = params.get("tolerance", 1e-6)
        if isinstance(tol, bool) or not isinstance(tol, (int, float)) \
                or not 0.0 < tol < 1.0:
            raise ConfigError(f"{w}.tolerance must be a number in (0, 1)")
        return {"tolerance": float(tol)}
    if command == "simulate":
        _reject_unknown(params, {"horizon", "replicas", "bit_budget",
                                 "start", "track_sites",
                                 "return_probability"}, w)
        horizon = _as_int(params, "horizon", w, lo=1)
        replicas = _as_int(params, "replicas", w, lo=1)
        if horizon is None or replicas is None:
            raise ConfigError(f"{w}.horizon and {w}.replicas are required")
        start = _as_site(params.get("start", [0] * dimension), dimension,
                         f"{w}.start")
        track = params.get("track_sites", [start])
        if not isinstance(track, list) or not track:
            raise ConfigError(f"{w}.track_sites must be a nonempty list")
        track = [_as_site(s, dimension, f"{w}.track_sites[{i}]")
                 for i, s in enumerate(track)]
        ret = params.get("return_probability")
        if ret is not None:
            _reject_unknown(ret, {"horizon", "replicas"},
                            f"{w}.return_probability")
            ret = {
                "horizon": _as_int(ret, "horizon",
                                   f"{w}.return_probability", lo=1),
                "replicas": _as_int(ret, "replicas",
                                    f"{w}.return_probability", lo=1),
            }
            if ret["horizon"] is None or ret["replicas"] is None:
                raise ConfigError(
                    f"{w}.return_probability needs horizon and replicas")
        return {
            "horizon": horizon,
            "replicas": replicas,
            "bit_budget": _as_int(params, "bit_budget", w, lo=16,
                                  default=4096),
            "start": start,
            "track_sites": track,
            "return_probability": ret,
        }
    if command == "report":
        _reject_unknown(params, set(), w)
        return {}
    raise ConfigError(f"unknown command {command!r}")


def config_from_dict(doc: Mapping) -> ConfigDoc:
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, {"command", "output_dir", "environment", "seed",
                          "workers", "parameters"}, "config")
    command = doc.get("command")
    if command not in COMMANDS:
        raise ConfigError(
            f"config.command must be one of {list(COMMANDS)}, got {command!r}")
    output_dir = doc.get("output_dir")
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("config.output_dir must be a nonempty string")
    env_doc = doc.get("environment")
    if env_doc is None:
        if command != "report":
            raise ConfigError(f"config.environment is required for {command}")
        spec = None
    else:
        try:
            spec = spec_from_dict(env_doc)
        except EnvironmentError_ as exc:
            raise ConfigError(f"config.environment: {exc}") from exc
    seed = _as_int(doc, "seed", "config", lo=0)
    workers = _as_int(doc, "workers", "config", lo=1)
    params = _validate_parameters(command, doc.get("parameters", {}),
                                  spec.dimension if spec else None)
    return ConfigDoc(command=command, output_dir=output_dir,
                     environment=spec, seed=seed, workers=workers,
                     parameters=params)


def config_to_dict(cfg: ConfigDoc) -> dict:
    out: dict[str, Any] = {
        "command": cfg.command,
        "output_dir": cfg.output_dir,
        "parameters": cfg.parameters,
    }
    if cfg.environment is not None:
        out["environment"] = spec_to_dict(cfg.environment)
    if cfg.seed is not None:
        out["seed"] = cfg.seed
    if cfg.workers is not None:
        out["workers"] = cfg.workers
    return out


def canonical_json(cfg: ConfigDoc) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n"


def load_config(path: str) -> ConfigDoc:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return config_from_dict(doc)


# ---------------------------------------------------------------------------
# manifest

_MANIFEST = "manifest.json"


def _load_manifest(outdir: Path) -> dict:
    path = outdir / _MANIFEST
    if not path.exists():
        return {"code_version": __version__, "runs": {}}
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _record_run(outdir: Path, command: str, entry: dict) -> None:
    man = _load_manifest(outdir)
    man["code_version"] = __version__
    man["runs"][command] = entry
    with open(outdir / _MANIFEST, "w", encoding="utf-8") as fh:
        json.dump(man, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_json(path: Path, doc) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# ---------------------------------------------------------------------------
# command bodies; each returns (artifacts, warnings, exit_code)

def _cmd_check(env: EnvironmentField, cfg: ConfigDoc, outdir: Path,
               workers: int, seed: int) -> tuple[list[str], list[str], int]:
    report = env.conditions.as_dict()
    _write_json(outdir / "condition_report.json", report)
    print(json.dumps(report, sort_keys=True, indent=2))
    return ["condition_report.json"], [], EXIT_OK


def _cmd_solve(env, cfg, outdir, workers, seed):
    p = cfg.parameters
    start = tuple(p["start"])
    rows = []
    last = None
    for fld in iter_layers(env, start, p["horizon"], adjoint=p["adjoint"],
                           max_radius=p["max_radius"], workers=workers):
        log_total = expected_total(fld)
        rate = log_total / fld.n if fld.n > 0 else 0.0
        rows.append((fld.n, log_total, rate, fld.support_size()))
        if p["save"] == "all":
            write_layer_csv(fld, str(outdir / f"layer_{fld.n:04d}.csv"))
        last = fld
    artifacts = []
    if p["save"] == "all":
        artifacts += [f"layer_{k:04d}.csv" for k in range(p["horizon"] + 1)]
    write_layer_csv(last, str(outdir / "layer_final.csv"))
    write_layer_binary(last, str(outdir / "layer_final.bin"))
    with open(outdir / "growth_trace.csv", "w", encoding="utf-8") as fh:
        fh.write("n,log_total,log_total_over_n,support\n")
        for n_, lt, rt, sup in rows:
            fh.write(f"{n_},{lt!r},{rt!r},{sup}\n")
    artifacts += ["layer_final.csv", "layer_final.bin", "growth_trace.csv"]
    print(json.dumps({
        "horizon": p["horizon"],
        "adjoint": p["adjoint"],
        "log_total": rows[-1][1],
        "log_total_over_n": rows[-1][2],
        "support": rows[-1][3],
    }, sort_keys=True))
    return artifacts, [], EXIT_OK


def _cmd_shape(env, cfg, outdir, workers, seed):
    p = cfg.parameters
    d = env.spec.dimension
    n = p["horizon"]
    # paths of length <= n stay inside the n*L0 ball, so the default
    # radius makes the reached set exact; smaller overrides may truncate
    radius = p["radius"] or n * env.spec.step_set.l0_max
    artifacts, warnings = [], []
    summary = []
    polygons = []
    for i, delta in enumerate(p["delta_grid"]):
        ptm = passage_times(env, delta, radius)
        est = shape_polytope(ptm, n)
        name = f"shape_hull_{i:02d}.csv"
        with open(outdir / name, "w", encoding="utf-8") as fh:
            fh.write(",".join(f"x{k + 1}" for k in range(d)) + "\n")
            for v in est.hull:
                fh.write(",".join(repr(c) for c in v) + "\n")
        artifacts.append(name)
        if ptm.boundary_contact and radius < n * env.spec.step_set.l0_max:
            warnings.append(
                f"delta={delta}: radius {radius} may truncate the "
                f"horizon-{n} reachable set")
        summary.append({
            "delta": delta,
            "hull_csv": name,
            "vertices": len(est.hull),
            "reached": len(ptm.times),
            "radius": radius,
            "boundary_contact": ptm.boundary_contact,
        })
        polygons.append((f"delta={delta:g}", [tuple(v) for v in est.hull]))
    _write_json(outdir / "passage_summary.json",
                {"horizon": n, "deltas": summary})
    artifacts.append("passage_summary.json")
    svg = _shape_svg(d, polygons)
    if svg is None:
        warnings.append(f"no hull plot for dimension {d}")
    else:
        _write_text(outdir / "shape_hulls.svg", svg)
        artifacts.append("shape_hulls.svg")
    print(json.dumps({"horizon": n, "deltas": [s["delta"] for s in summary],
                      "boundary_contact": [s["boundary_contact"]
                                           for s in summary]}, sort_keys=True))
    return artifacts, warnings, EXIT_OK


def _shape_svg(d: int, polygons) -> str | None:
    """Hull overlay with the unit l1 ball for reference; d <= 2 only."""
    if d == 1:
        rows = [(name, [(min(v[0] for v in pts), max(v[0] for v in pts))])
                for name, pts in polygons if pts]
        rows.append(("unit l1 ball", [(-1.0, 1.0)]))
        return svgplot.render_interval_sets(rows, title="reachable shape",
                                            x_label="x/n")
    if d == 2:
        polys = [(name, pts) for name, pts in polygons]
        polys.append(("unit l1 ball",
                      [(-1.0, 0.0), (0.0, -1.0), (1.0, 0.0), (0.0, 1.0)]))
        return svgplot.render_polygons(polys, title="reachable shape",
                                       x_label="x1/n", y_label="x2/n")
    return None


def _profile_svgs(profile: BetaProfile, d: int) -> dict[str, str]:
    out: dict[str, str] = {}
    if d == 1:
        pts = [(float(Fraction(a.numerators[0], a.denominator)), est.value)
               for a, est in profile.grid if not est.minus_infinity]
        if pts:
            out["profile.svg"] = svgplot.render_curve(
                [("beta estimate", sorted(pts))],
                title="growth exponent profile", x_label="a", y_label="beta")
        if profile.b_hull:
            xs = [v[0] for v in profile.b_hull]
            out["b_hull.svg"] = svgplot.render_interval_sets(
                [("B hull", [(min(xs), max(xs))])],
                title="positive-growth region", x_label="a")
    elif d == 2 and len(profile.b_hull) >= 2:
        out["b_hull.svg"] = svgplot.render_polygons(
            [("B hull", [tuple(v) for v in profile.b_hull])],
            title="positive-growth region", x_label="a1", y_label="a2")
    return out


def _cmd_beta(env, cfg, outdir, workers, seed):
    p = cfg.parameters
    d = env.spec.dimension
    grid = [RationalVector.from_fractions([Fraction(c) for c in entry])
            for entry in p["grid"]]
    profile = beta_profile(env, grid, p["horizon"], workers=workers)
    growth = total_growth(env, p["horizon"], profile)
    artifacts, warnings = [], []

    with open(outdir / "profile.csv", "w", encoding="utf-8") as fh:
        head = ",".join(f"a{k + 1}" for k in range(d))
        fh.write(f"{head},k0,n,samples,beta_hat,minus_infinity\n")
        for a, est in profile.grid:
            coords = ",".join(
                _fraction_str(Fraction(num, a.denominator))
                for num in a.numerators)
            beta_txt = "" if est.minus_infinity else repr(est.value)
            fh.write(f"{coords},{est.k0},{p['horizon']},{len(est.samples)},"
                     f"{beta_txt},{est.minus_infinity}\n")
    artifacts.append("profile.csv")

    with open(outdir / "b_hull.csv", "w", encoding="utf-8") as fh:
        fh.write(",".join(f"a{k + 1}" for k in range(d)) + "\n")
        for v in profile.b_hull:
            fh.write(",".join(repr(c) for c in v) + "\n")
    artifacts.append("b_hull.csv")

    _write_json(outdir / "total_growth.json", {
        "horizon": p["horizon"],
        "log_expected_total_over_n": growth.log_expected,
        "sup_beta": profile.sup_beta,
        "sup_beta_gap": growth.sup_beta_gap,
        "sup_beta_positive": growth.sup_beta_positive,
    })
    artifacts.append("total_growth.json")

    svgs = _profile_svgs(profile, d)
    for name, text in sorted(svgs.items()):
        _write_text(outdir / name, text)
        artifacts.append(name)
    if "profile.svg" not in svgs and d > 1:
        warnings.append(f"no profile plot for dimension {d}")

    exit_code = EXIT_OK
    origin = RationalVector((0,) * d, 1)
    verdict = None
    if any(a == origin for a, _ in profile.grid):
        verdict = classify_by_beta(profile)
        _write_json(outdir / "beta_classifier.json", {
            "verdict": verdict,
            "beta_at_origin": profile.find(origin).value,
            "horizon": p["horizon"],
        })
        artifacts.append("beta_classifier.json")
        if verdict == "inconclusive":
            exit_code = EXIT_INCONCLUSIVE
    print(json.dumps({
        "horizon": p["horizon"],
        "grid_size": len(grid),
        "sup_beta": profile.sup_beta,
        "verdict": verdict,
    }, sort_keys=True))
    return artifacts, warnings, exit_code


def _cmd_classify(env, cfg, outdir, workers, seed):
    res = transience_criterion(list(env.spec.law_support),
                               tol=cfg.parameters["tolerance"])
    doc = res.as_dict()
    _write_json(outdir / "classify.json", doc)
    print(json.dumps(doc, sort_keys=True, indent=2))
    code = EXIT_INCONCLUSIVE if res.verdict == "boundary" else EXIT_OK
    return ["classify.json"], [], code


def _cmd_simulate(env, cfg, outdir, workers, seed):
    p = cfg.parameters
    start = tuple(p["start"])
    track = [tuple(s) for s in p["track_sites"]]
    stats = SamplerStats()
    first_run = None
    final_counts = []
    for r in range(p["replicas"]):
        rng = replica_rng(seed, r, PURPOSE_DYNAMICS)
        states = mc_run(env, start, p["horizon"], rng,
                        bit_budget=p["bit_budget"], stats=stats)
        if r == 0:
            first_run = states
        final_counts.append(states[-1].counts)

    artifacts, warnings = [], []
    with open(outdir / "trajectory.csv", "w", encoding="utf-8") as fh:
        site_cols = ",".join(f"eta@{'|'.join(map(str, s))}" for s in track)
        fh.write(f"n,total,ln_total,occupied,{site_cols}\n")
        for st in first_run:
            ln_total = repr(math.log(st.total)) if st.total > 0 else ""
            cells = ",".join(str(st.count(s)) for s in track)
            fh.write(f"{st.n},{st.total},{ln_total},{st.occupied()},{cells}\n")
    artifacts.append("trajectory.csv")

    h = p["horizon"]
    with open(outdir / "realized_exponent.csv", "w", encoding="utf-8") as fh:
        fh.write("site,n,mean,ci_low,ci_high,occupancy,samples\n")
        for s in track:
            vals = [math.log(c[s]) / h for c in final_counts if c.get(s, 0) >= 1]
            k = len(vals)
            if k:
                mean = sum(vals) / k
                if k >= 2:
                    var = sum((v - mean) ** 2 for v in vals) / (k - 1)
                    half = 1.96 * math.sqrt(var / k)
                else:
                    half = 0.0
                row = (f"{'|'.join(map(str, s))},{h},{mean!r},"
                       f"{mean - half!r},{mean + half!r},"
                       f"{k / len(final_counts)!r},{k}")
            else:
                row = f"{'|'.join(map(str, s))},{h},,,,0.0,0"
            fh.write(row + "\n")
    artifacts.append("realized_exponent.csv")

    ret_doc = None
    if p["return_probability"] is not None:
        rp = p["return_probability"]
        est = estimate_return_probability(
            env, start, rp["horizon"], rp["replicas"], seed,
            bit_budget=p["bit_budget"], stats=stats)
        ret_doc = {
            "site": list(est.site), "horizon": est.horizon,
            "replicas": est.replicas, "hits": est.hits,
            "estimate": est.estimate,
            "ci_low": est.ci_low, "ci_high": est.ci_high,
        }
        _write_json(outdir / "return_probability.json", ret_doc)
        artifacts.append("return_probability.json")

    _write_json(outdir / "sampler_stats.json", stats.as_dict())
    artifacts.append("sampler_stats.json")
    if stats.normal_draws:
        warnings.append(
            f"normal fast path used for {stats.normal_draws} draws")
    if stats.poisson_draws:
        warnings.append(
            f"poisson fast path used for {stats.poisson_draws} draws")

    final = first_run[-1]
    print(json.dumps({
        "horizon": h,
        "replicas": p["replicas"],
        "final_total_digits": len(str(final.total)),
        "ln_total_over_n": (math.log(final.total) / h
                            if final.total > 0 else None),
        "return_probability": None if ret_doc is None
        else ret_doc["estimate"],
    }, sort_keys=True))
    return artifacts, warnings, EXIT_OK


# ---------------------------------------------------------------------------
# report

_REQUIRED_FOR_REPORT = (
    "condition_report.json",
    "classify.json",
    "profile.csv",
    "beta_classifier.json",
    "growth_trace.csv",
)


def _read_csv_rows(path: Path) -> list[dict[str, str]]:
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _report_text(outdir: Path) -> str:
    lines = ["reachability and growth summary",
             "=" * 31, ""]
    cond = json.loads((outdir / "condition_report.json").read_text())
    lines.append("standing conditions")
    for key in sorted(cond):
        lines.append(f"  {key} = {cond[key]}")
    lines.append("")

    cls = json.loads((outdir / "classify.json").read_text())
    bc = json.loads((outdir / "beta_classifier.json").read_text())
    lines.append("recurrence verdicts")
    lines.append(f"  convex criterion : {cls['verdict']} "
                 f"(value={cls['value']:.6f}, t_star={cls['t_star']})")
    lines.append(f"  beta classifier  : {bc['verdict']} "
                 f"(beta_at_origin={bc['beta_at_origin']:.6f}, "
                 f"horizon={bc['horizon']})")
    lines.append("")

    rows = _read_csv_rows(outdir / "profile.csv")
    finite = [float(r["beta_hat"]) for r in rows if r["beta_hat"]]
    lines.append("growth exponent profile")
    lines.append(f"  grid points      : {len(rows)}")
    lines.append(f"  finite estimates : {len(finite)}")
    if finite:
        lines.append(f"  sup beta_hat     : {max(finite):.6f}")
        lines.append(f"  min beta_hat     : {min(finite):.6f}")
    if (outdir / "b_hull.csv").exists():
        hull = _read_csv_rows(outdir / "b_hull.csv")
        lines.append(f"  B hull vertices  : {len(hull)}")
    lines.append("")

    if (outdir / "total_growth.json").exists():
        tg = json.loads((outdir / "total_growth.json").read_text())
        lines.append("total population growth")
        lines.append(f"  ln E Z_n / n     : "
                     f"{tg['log_expected_total_over_n']:.6f} "
                     f"(n={tg['horizon']})")
        lines.append(f"  sup beta gap     : {tg['sup_beta_gap']:.6f}")
        lines.append("")

    trace = _read_csv_rows(outdir / "growth_trace.csv")
    lines.append("expected-total trace (last 5 layers)")
    for r in trace[-5:]:
        lines.append(f"  n={r['n']:>5}  ln E Z_n / n = "
                     f"{float(r['log_total_over_n']):.6f}")
    lines.append("")

    if (outdir / "passage_summary.json").exists():
        ps = json.loads((outdir / "passage_summary.json").read_text())
        lines.append(f"reachable shape (horizon {ps['horizon']})")
        for entry in ps["deltas"]:
            flag = " boundary-contact" if entry["boundary_contact"] else ""
            lines.append(f"  delta={entry['delta']:<8g} "
                         f"hull_vertices={entry['vertices']} "
                         f"reached={entry['reached']}{flag}")
        lines.append("")

    if (outdir / "realized_exponent.csv").exists():
        lines.append("realized local exponents (Monte Carlo)")
        for r in _read_csv_rows(outdir / "realized_exponent.csv"):
            if r["mean"]:
                lines.append(f"  x={r['site']:<12} n={r['n']} "
                             f"mean={float(r['mean']):.6f} "
                             f"occupancy={float(r['occupancy']):.3f}")
            else:
                lines.append(f"  x={r['site']:<12} n={r['n']} never occupied")
        lines.append("")

    if (outdir / "return_probability.json").exists():
        rp = json.loads((outdir / "return_probability.json").read_text())
        lines.append("return probability (lower bound)")
        lines.append(f"  site={rp['site']} horizon={rp['horizon']} "
                     f"estimate={rp['estimate']:.4f} "
                     f"ci=[{rp['ci_low']:.4f}, {rp['ci_high']:.4f}]")
        lines.append("")
    return "\n".join(lines) + "\n"


def _run_report(outdir: Path) -> tuple[list[str], list[str], int]:
    if not outdir.is_dir():
        raise ConfigError(f"output dir {outdir} does not exist")
    man_path = outdir / _MANIFEST
    missing = [name for name in _REQUIRED_FOR_REPORT
               if not (outdir / name).exists()]
    if not man_path.exists():
        missing.insert(0, _MANIFEST)
    if missing:
        raise SimulationError(
            "missing artifacts: " + ", ".join(sorted(missing)))
    man = _load_manifest(outdir)
    known: set[str] = {_MANIFEST, "summary.txt"}
    for entry in man.get("runs", {}).values():
        known.update(entry.get("artifacts", []))
    orphans = sorted(f.name for f in outdir.iterdir()
                     if f.is_file() and f.name not in known)
    if orphans:
        raise SimulationError(
            "artifacts missing from the manifest: " + ", ".join(orphans))

    artifacts = ["summary.txt"]
    trace = _read_csv_rows(outdir / "growth_trace.csv")
    pts = [(float(r["n"]), float(r["log_total_over_n"]))
           for r in trace if int(r["n"]) > 0]
    if pts:
        _write_text(outdir / "growth_trace.svg", svgplot.render_curve(
            [("ln E Z_n / n", pts)], title="expected total growth",
            x_label="n", y_label="ln E Z_n / n"))
        artifacts.append("growth_trace.svg")
    text = _report_text(outdir)
    _write_text(outdir / "summary.txt", text)
    print(text, end="")
    return artifacts, [], EXIT_OK


# ---------------------------------------------------------------------------
# driver

_DISPATCH = {
    "check": _cmd_check,
    "solve": _cmd_solve,
    "shape": _cmd_shape,
    "beta": _cmd_beta,
    "classify": _cmd_classify,
    "simulate": _cmd_simulate,
}


def _effective_seed(cfg: ConfigDoc, flag_seed: int | None) -> int:
    if flag_seed is not None:
        return flag_seed
    env_seed = os.environ.get("BRWRE_SEED")
    if env_seed is not None:
        try:
            return int(env_seed)
        except ValueError as exc:
            raise ConfigError(
                f"BRWRE_SEED must be an integer, got {env_seed!r}") from exc
    if cfg.seed is not None:
        return cfg.seed
    if cfg.environment is not None:
        return cfg.environment.master_seed
    return 0


def run_command(cfg: ConfigDoc, flag_seed: int | None = None) -> int:
    """Execute a validated config; returns the process exit code."""
    outdir = Path(cfg.output_dir)
    if cfg.command == "report":
        artifacts, warnings, code = _run_report(outdir)
        _record_run(outdir, "report", {
            "config_sha256": hashlib.sha256(
                canonical_json(cfg).encode()).hexdigest(),
            "master_seed": None,
            "workers": None,
            "completed_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ",
                                           time.gmtime()),
            "wall_clock_s": {},
            "warnings": warnings,
            "artifacts": artifacts,
        })
        return code

    seed = _effective_seed(cfg, flag_seed)
    workers = cfg.workers or os.cpu_count() or 1
    spec = dataclasses.replace(cfg.environment, master_seed=seed)
    env = build_environment(spec)
    outdir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    artifacts, warnings, code = _DISPATCH[cfg.command](
        env, cfg, outdir, workers, seed)
    elapsed = time.perf_counter() - t0
    _record_run(outdir, cfg.command, {
        "config_sha256": hashlib.sha256(
            canonical_json(cfg).encode()).hexdigest(),
        "master_seed": seed,
        "workers": workers,
        "completed_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "wall_clock_s": {cfg.command: round(elapsed, 3)},
        "warnings": warnings,
        "artifacts": artifacts,
    })
    return code


def _apply_overrides(cfg: ConfigDoc, args: argparse.Namespace) -> ConfigDoc:
    """Scalar flag overrides; re-validates the parameter block."""
    params = dict(cfg.parameters)
    for name in ("horizon", "replicas", "tolerance"):
        v = getattr(args, name, None)
        if v is not None:
            params[name] = v
    doc = config_to_dict(cfg)
    doc["parameters"] = params
    if getattr(args, "output_dir", None):
        doc["output_dir"] = args.output_dir
    if getattr(args, "workers", None):
        doc["workers"] = args.workers
    return config_from_dict(doc)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="brwre",
        description="branching random walk in random environment toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    common_help = {
        "check": "validate an environment and report standing conditions",
        "solve": "expected particle counts by dynamic programming",
        "shape": "passage times and reachable-set hulls over a delta grid",
        "beta": "growth exponent profile over a direction grid",
        "classify": "recurrence/transience by the convex criterion",
        "simulate": "quenched Monte Carlo population runs",
    }
    for cmd, help_txt in common_help.items():
        p = sub.add_parser(cmd, help=help_txt)
        p.add_argument("config", help="path to the JSON config")
        p.add_argument("--output-dir", help="override config.output_dir")
        p.add_argument("--seed", type=int,
                       help="override the master seed (beats BRWRE_SEED)")
        p.add_argument("--workers", type=int, help="override config.workers")
        if cmd in ("solve", "shape", "beta", "simulate"):
            p.add_argument("--horizon", type=int,
                           help="override parameters.horizon")
        if cmd == "simulate":
            p.add_argument("--replicas", type=int,
                           help="override parameters.replicas")
        if cmd == "classify":
            p.add_argument("--tolerance", type=float,
                           help="override parameters.tolerance")
    pr = sub.add_parser("report",
                        help="consolidate artifacts into one summary")
    pr.add_argument("output_dir", help="directory holding the artifacts")
    return parser


def _fail(code: int, exc: BaseException) -> int:
    doc = {"error": {"code": code, "type": type(exc).__name__,
                     "message": str(exc)}}
    print(json.dumps(doc, sort_keys=True), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            cfg = ConfigDoc(command="report", output_dir=args.output_dir,
                            environment=None, seed=None, workers=None,
                            parameters={})
        else:
            cfg = load_config(args.config)
            if cfg.command != args.command:
                raise ConfigError(
                    f"config.command is {cfg.command!r} but the "
                    f"{args.command!r} subcommand was invoked")
            cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        return _fail(EXIT_CONFIG, exc)
    try:
        return run_command(cfg, flag_seed=getattr(args, "seed", None))
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except _MODULE_ERRORS as exc:
        return _fail(EXIT_RUNTIME, exc)


if __name__ == "__main__":
    sys.exit(main())
