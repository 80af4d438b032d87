"""Batch experiment driver.

``circle-dyn <experiment> --group <path|builtin> [--flags]`` runs one named
experiment against a group action and writes its artifacts: CSV for data
series, JSON for structured objects, plus a ``<output>.params.json`` sidecar
recording every resolved parameter (defaults included) and the seed, so any
artifact can be regenerated exactly.

Exit codes: 0 on success; 2 on contract errors (bad config, unknown
experiment or parameter, missing precondition) with a machine-readable error
JSON on stdout; 1 on internal failure.

Determinism: for a fixed seed the outputs are byte-identical across runs and
across ``--workers`` values.  Floats are written with ``repr`` ('.' decimal,
no locale), JSON keys are sorted, and parallel phases merge their chunks in
input order.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from . import distortion, expansion, markov, minimal
from .circle import Arc, CirclePoint
from .config import GroupConfig, ParseError, build_system, validate_config
from .groups import BUILTIN_GROUPS, PSL2Z_INTEGER_LETTERS, builtin_seed_arcs
from .maps import MobiusTransform
from .words import GroupSystem, ReducedWord, alphabet, word_concat

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_CONTRACT = 2


class ContractError(Exception):
    """Caller-side failure: bad input, unknown name, missing precondition."""

    def __init__(self, message: str, details: list[dict] | None = None):
        super().__init__(message)
        self.details = details or []


# ---------------------------------------------------------------------------
# Experiment registry
# ---------------------------------------------------------------------------

# name -> {parameter: (type, default, help)}
_PARAMS: dict[str, dict[str, tuple[type, Any, str]]] = {
    "ball-sum": {
        "x": (float, 0.0, "base point on [0, 1)"),
        "n_max": (int, 12, "largest ball radius"),
        "dedupe": (bool, False, "deduplicate words by exact integer matrix (psl2z only)"),
        "node_budget": (int, expansion.DEFAULT_NODE_BUDGET, "tree-walk node cap"),
    },
    "ne-scan": {
        "points": (str, "0.0", "comma-separated sample points"),
        "grid": (int, 0, "if > 0, scan this many uniform grid points instead"),
        "depth": (int, 10, "ball radius for the derivative scan"),
        "tol": (float, expansion.NE_TOL, "slack above 1 before a point counts as expandable"),
        "node_budget": (int, expansion.DEFAULT_NODE_BUDGET, "tree-walk node cap"),
    },
    "fixers": {
        "x": (float, 0.0, "point whose fixing words are searched"),
        "depth": (int, 6, "ball radius for the fixer search"),
        "fix_tol": (float, expansion.FIX_TOL, "max endpoint displacement to count as fixing"),
        "node_budget": (int, expansion.DEFAULT_NODE_BUDGET, "tree-walk node cap"),
    },
    "markov": {
        "resolution": (float, 1e-2, "grid resolution for the component scan"),
        "threshold": (float, 1e4, "derivative-sum divergence threshold"),
        "max_len": (int, 8, "longest first-return word searched"),
        "j_max": (int, 3, "refinement depth used when certifying the partition"),
        "kappa_grid": (int, 1200, "grid for the distortion constant"),
        "restrict_level": (int, 0, "if > 0, restrict the scan to this cover level (needs seed arcs)"),
        "snap_level": (int, 0, "if > 0, snap component endpoints to this cover level"),
    },
    "refine": {
        "resolution": (float, 1e-2, "grid resolution for the component scan"),
        "threshold": (float, 1e4, "derivative-sum divergence threshold"),
        "j_max": (int, 6, "deepest refinement level reported"),
        "tilde": (bool, False, "refine the accelerated (first-exit) partition"),
    },
    "measure-lambda": {
        "level": (int, 10, "deepest cover level; rows cover levels 0..level"),
    },
    "gaps": {
        "level": (int, 6, "cover level whose complementary gaps are classified"),
        "max_steps": (int, 60, "expansion steps allowed per gap"),
        "match_tol": (float, 1e-3, "endpoint tolerance when matching gaps"),
        "merge_max_len": (int, 3, "ball radius for the orbit-merge pass"),
        "ne_points": (str, "", "comma-separated non-expandable points, if any"),
    },
    "psl2z-growth": {
        "n_max": (int, 12, "largest word length checked"),
        "prune": (bool, True, "skip subtrees whose norm growth cannot exceed the bound"),
        "node_budget": (int, expansion.DEFAULT_NODE_BUDGET, "tree-walk node cap"),
    },
    "commutator": {
        "trials": (int, 20, "number of random map pairs"),
        "k_max": (int, 12, "cascade length per pair"),
        "eps": (float, 1e-3, "matrix-entry distance of the random pairs from the identity"),
        "arc_start": (float, 0.3, "start of the arc the distances are measured on"),
        "arc_length": (float, 0.2, "length of that arc"),
        "grid": (int, 256, "sample points per distance evaluation"),
    },
    "distortion-suite": {
        "trials": (int, 1000, "randomized trials per property"),
        "max_word_len": (int, 6, "longest random word"),
        "min_arc": (float, 0.02, "shortest random arc"),
        "max_arc": (float, 0.2, "longest random arc"),
    },
    "closest-return": {
        "x": (float, 0.0, "base point of the return search"),
        "n_min": (int, 8, "first ball radius"),
        "n_max": (int, 14, "last ball radius"),
        "side": (str, "right", "which side the return approaches from: right or left"),
        "fix_tol": (float, expansion.FIX_TOL, "displacement below which a word counts as fixing x"),
        "radius": (float, 0.1, "deviation window radius; 0 means radius_scale times the gap"),
        "radius_scale": (float, 1.0, "fallback window scale when radius is 0"),
        "grid": (int, 256, "sample points for the rescaled deviation"),
        "dedupe": (bool, False, "deduplicate ball sums by exact integer matrix (psl2z only)"),
        "node_budget": (int, expansion.DEFAULT_NODE_BUDGET, "tree-walk node cap"),
    },
    "grow-tree": {
        "x": (float, 0.1, "base point of the tree"),
        "m": (int, 8, "deepest tree level; rows cover levels 1..m"),
        "target": (float, 2.0, "per-level derivative-sum growth factor"),
        "resolution": (float, 1e-3, "region resolution for the cone family"),
        "family_depth": (int, 8, "longest word allowed in the cone family"),
        "member_budget": (int, 2_000_000, "cap on tree members"),
        "verify": (bool, True, "re-derive the tree conditions independently"),
    },
}

_JSON_EXPERIMENTS = frozenset({"fixers", "markov", "gaps"})

_SUMMARIES = {
    "ball-sum": "cumulative derivative sums over word balls at a point",
    "ne-scan": "classify points as expandable or non-expandable candidates",
    "fixers": "words fixing a point, with displacements and derivatives",
    "markov": "extract an expanding Markov interval system",
    "refine": "diameters of iterated Markov partition refinements",
    "measure-lambda": "total cover length of the limit Cantor set per level",
    "gaps": "classify complementary gaps of a Cantor cover into orbits",
    "psl2z-growth": "max integer matrix entry per word length vs Fibonacci bounds",
    "commutator": "C0/C1 distance to identity along iterated commutators",
    "distortion-suite": "randomized checks of the distortion inequalities",
    "closest-return": "closest-return gaps and rescaled return deviations",
    "grow-tree": "doubling trees of derivative sums with verification",
}


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment invocation: name, overrides, output path, seed."""

    name: str
    parameters: Mapping[str, Any] = field(default_factory=dict)
    output_path: str = ""
    seed: int = 0

    def __post_init__(self):
        if self.name not in _PARAMS:
            raise ContractError(f"unknown experiment {self.name!r}",
                                details=[{"known": sorted(_PARAMS)}])
        table = _PARAMS[self.name]
        for key in self.parameters:
            if key not in table:
                raise ContractError(
                    f"unknown parameter {key!r} for experiment {self.name}",
                    details=[{"known": sorted(table)}])
        if not self.output_path:
            ext = "json" if self.name in _JSON_EXPERIMENTS else "csv"
            object.__setattr__(self, "output_path", f"{self.name}.{ext}")


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------

def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: str, header: tuple[str, ...], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(cell) for cell in row])


def _write_json(path: str, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n",
                          encoding="utf-8")


def _write_text(path: str, text: str) -> None:
    if not text.endswith("\n"):
        text += "\n"
    Path(path).write_text(text, encoding="utf-8")


def _write_sidecar(spec: ExperimentSpec, config: GroupConfig,
                   params: dict[str, Any]) -> None:
    # workers is deliberately absent: outputs do not depend on it
    doc = {
        "experiment": spec.name,
        "group": config.builtin or config.label,
        "output": os.path.basename(spec.output_path),
        "parameters": params,
        "seed": spec.seed,
    }
    _write_json(spec.output_path + ".params.json", doc)


def _parse_points(text: str) -> list[float]:
    stripped = text.strip()
    if not stripped:
        return []
    try:
        return [float(tok) for tok in stripped.split(",")]
    except ValueError as exc:
        raise ContractError(f"bad point list {text!r}: {exc}") from None


def _seed_arcs_for(config: GroupConfig):
    if config.builtin is None:
        raise ContractError(
            "this experiment needs ping-pong seed arcs, which only builtin "
            "groups provide")
    try:
        return builtin_seed_arcs(config.builtin)
    except KeyError:
        raise ContractError(
            f"builtin {config.builtin!r} has no ping-pong seed arcs") from None


def _integer_letters_for(config: GroupConfig, flag: str):
    if config.builtin != "psl2z":
        raise ContractError(
            f"{flag} needs exact integer letter matrices, which only the "
            "psl2z builtin carries")
    return PSL2Z_INTEGER_LETTERS


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def _run_ball_sum(system: GroupSystem, config: GroupConfig, p: dict,
                  spec: ExperimentSpec, workers: int) -> None:
    letters = _integer_letters_for(config, "--dedupe") if p["dedupe"] else None
    series = expansion.ball_sum(system, CirclePoint(p["x"]), p["n_max"],
                                node_budget=p["node_budget"],
                                dedupe_integer_letters=letters)
    rows = [(e.n, e.ball_sum, e.max_derivative, e.witness.serialize())
            for e in series.entries]
    _write_csv(spec.output_path,
               ("n", "ball_sum", "max_derivative", "witness"), rows)


def _run_ne_scan(system: GroupSystem, config: GroupConfig, p: dict,
                 spec: ExperimentSpec, workers: int) -> None:
    if p["grid"] > 0:
        xs = [i / p["grid"] for i in range(p["grid"])]
    else:
        xs = _parse_points(p["points"])
        if not xs:
            raise ContractError("ne-scan needs --points or --grid")
    reports = expansion.ne_scan(system, [CirclePoint(x) for x in xs],
                                p["depth"], tol=p["tol"],
                                node_budget=p["node_budget"])
    rows = [(r.x.x, r.depth, r.max_derivative, r.verdict.value,
             r.witness.serialize() if r.witness is not None else "")
            for r in reports]
    _write_csv(spec.output_path,
               ("x", "depth", "max_derivative", "verdict", "witness"), rows)


def _run_fixers(system: GroupSystem, config: GroupConfig, p: dict,
                spec: ExperimentSpec, workers: int) -> None:
    report = expansion.find_fixers(system, CirclePoint(p["x"]), p["depth"],
                                   fix_tol=p["fix_tol"],
                                   node_budget=p["node_budget"])
    doc = {
        "x": report.x.x,
        "star_satisfied_to_depth": report.star_satisfied_to_depth,
        "fixers": [{"word": f.word.serialize(),
                    "displacement": f.displacement,
                    "derivative": f.derivative}
                   for f in report.fixers],
    }
    _write_json(spec.output_path, doc)


def _cover_arcs(system: GroupSystem, config: GroupConfig, level: int,
                workers: int):
    seeds = _seed_arcs_for(config)
    return minimal.schottky_cover(system, seeds, level, workers=workers)


def _run_markov(system: GroupSystem, config: GroupConfig, p: dict,
                spec: ExperimentSpec, workers: int) -> None:
    restrict_to = snap_cover = None
    if p["restrict_level"] > 0:
        restrict_to = _cover_arcs(system, config, p["restrict_level"],
                                  workers).arcs
    if p["snap_level"] > 0:
        snap_cover = _cover_arcs(system, config, p["snap_level"],
                                 workers).arcs
    ms = markov.extract_markov(system,
                               resolution=p["resolution"],
                               threshold=p["threshold"],
                               max_len=p["max_len"],
                               j_max=p["j_max"],
                               kappa_grid=p["kappa_grid"],
                               restrict_to=restrict_to,
                               snap_cover=snap_cover)
    _write_text(spec.output_path, ms.to_json())


def _run_refine(system: GroupSystem, config: GroupConfig, p: dict,
                spec: ExperimentSpec, workers: int) -> None:
    ms = markov.extract_markov(system, resolution=p["resolution"],
                               threshold=p["threshold"])
    rows = []
    for j in range(1, p["j_max"] + 1):
        rp = markov.refine_partition(ms, j, tilde=p["tilde"])
        rows.append((j, len(rp.intervals), rp.max_diameter,
                     rp.intervals_complete))
    _write_csv(spec.output_path,
               ("j", "piece_count", "max_diameter", "intervals_complete"),
               rows)


def _run_measure_lambda(system: GroupSystem, config: GroupConfig, p: dict,
                        spec: ExperimentSpec, workers: int) -> None:
    seeds = _seed_arcs_for(config)
    try:
        minimal.verify_schottky(system, seeds)
    except minimal.NotSchottky as exc:
        raise ContractError(f"seed arcs are not ping-pong for this group: {exc}")
    rows = []
    for level in range(p["level"] + 1):
        cover = minimal.schottky_cover(system, seeds, level, workers=workers)
        rows.append((cover.level, cover.total_length))
    _write_csv(spec.output_path, ("level", "total_length"), rows)


def _run_gaps(system: GroupSystem, config: GroupConfig, p: dict,
              spec: ExperimentSpec, workers: int) -> None:
    cover = _cover_arcs(system, config, p["level"], workers)
    ne_points = tuple(CirclePoint(x) for x in _parse_points(p["ne_points"]))
    count, reps = minimal.classify_gap_orbits(
        system, cover, ne_points, p["max_steps"],
        match_tol=p["match_tol"], merge_max_len=p["merge_max_len"])
    _write_text(spec.output_path, minimal.classification_to_json(count, reps))


def _fibonacci_bounds(n_max: int) -> list[int]:
    # bound for length n is the (n+1)-st Fibonacci number (1, 1, 2, 3, ...),
    # attained by the n-th power of the (1 1; 1 0) letter
    bounds = [1] * (n_max + 1)
    for n in range(2, n_max + 1):
        bounds[n] = bounds[n - 1] + bounds[n - 2]
    return bounds


def _run_psl2z_growth(system: GroupSystem, config: GroupConfig, p: dict,
                      spec: ExperimentSpec, workers: int) -> None:
    letters = _integer_letters_for(config, "psl2z-growth")
    levels = expansion.integer_ball_entry_max(
        letters, p["n_max"], _fibonacci_bounds(p["n_max"]),
        prune=p["prune"], node_budget=p["node_budget"])
    rows = [(lv.n, lv.bound, lv.max_entry_found, lv.exceeded) for lv in levels]
    _write_csv(spec.output_path,
               ("n", "bound", "max_entry_found", "exceeded"), rows)


def _random_near_identity(rng: random.Random, eps: float) -> MobiusTransform:
    while True:
        a = 1.0 + rng.uniform(-eps, eps)
        b = rng.uniform(-eps, eps)
        c = rng.uniform(-eps, eps)
        d = 1.0 + rng.uniform(-eps, eps)
        if abs(a * d - b * c) > 0.5:
            return MobiusTransform(a, b, c, d)


def _run_commutator(system: GroupSystem, config: GroupConfig, p: dict,
                    spec: ExperimentSpec, workers: int) -> None:
    rng = random.Random(spec.seed)
    region = Arc(CirclePoint(p["arc_start"]), p["arc_length"])
    rows = []
    for trial in range(p["trials"]):
        f1 = _random_near_identity(rng, p["eps"])
        f2 = _random_near_identity(rng, p["eps"])
        for k, c0, c1 in expansion.commutator_cascade(f1, f2, p["k_max"],
                                                      region, grid=p["grid"]):
            rows.append((trial, k, c0, c1))
    _write_csv(spec.output_path,
               ("trial", "k", "c0_distance", "c1_distance"), rows)


def _random_word(rng: random.Random, letters, max_len: int) -> ReducedWord:
    n = rng.randint(1, max_len)
    out = []
    last = None
    for _ in range(n):
        choices = [l for l in letters
                   if last is None or not l.cancels(last)]
        last = rng.choice(choices)
        out.append(last)
    return ReducedWord(tuple(out))


def _run_distortion_suite(system: GroupSystem, config: GroupConfig, p: dict,
                          spec: ExperimentSpec, workers: int) -> None:
    rng = random.Random(spec.seed)
    letters = alphabet(system.rank)
    names = ("subadditivity", "inverse_exact", "p_sum", "bound", "lsum")
    violations = dict.fromkeys(names, 0)
    for _ in range(p["trials"]):
        start = rng.random()
        length = rng.uniform(p["min_arc"], p["max_arc"])
        arc = Arc(CirclePoint(start), length)
        x0 = CirclePoint(start + rng.random() * length)
        w = _random_word(rng, letters, p["max_word_len"])
        g = _random_word(rng, letters, p["max_word_len"])
        h = _random_word(rng, letters, p["max_word_len"])

        k_gh = distortion.kappa_word(system, word_concat(g, h), arc).value
        h_arc = minimal.image_arc(system.word_diffeo(h), arc)
        k_g = distortion.kappa_word(system, g, h_arc).value
        k_h = distortion.kappa_word(system, h, arc).value
        if k_gh > k_g + k_h + 1e-9:
            violations["subadditivity"] += 1

        w_arc = minimal.image_arc(system.word_diffeo(w), arc)
        k_fwd = distortion.kappa_word(system, w, arc).value
        k_inv = distortion.kappa_word(system, w.inverse(), w_arc).value
        if abs(k_fwd - k_inv) > 1e-9:
            violations["inverse_exact"] += 1

        if not distortion.check_p_sum(system, w, arc).holds:
            violations["p_sum"] += 1
        if not distortion.check_bound(system, w, x0).holds:
            violations["bound"] += 1
        lsum = distortion.check_lsum(system, w, arc, x0)
        if not (lsum.holds and lsum.pointwise_holds):
            violations["lsum"] += 1
    rows = [(name, p["trials"], violations[name]) for name in names]
    _write_csv(spec.output_path, ("property", "trials", "violations"), rows)


def _run_closest_return(system: GroupSystem, config: GroupConfig, p: dict,
                        spec: ExperimentSpec, workers: int) -> None:
    sides = {"right": expansion.Side.RIGHT, "left": expansion.Side.LEFT}
    if p["side"] not in sides:
        raise ContractError(f"side must be 'right' or 'left', got {p['side']!r}")
    letters = (_integer_letters_for(config, "--dedupe")
               if p["dedupe"] else None)
    x0 = CirclePoint(p["x"])
    rows = []
    for n in range(p["n_min"], p["n_max"] + 1):
        cr = expansion.closest_return(system, x0, n, side=sides[p["side"]],
                                      fix_tol=p["fix_tol"],
                                      node_budget=p["node_budget"])
        series = expansion.ball_sum(system, x0, n // 2,
                                    node_budget=p["node_budget"],
                                    dedupe_integer_letters=letters)
        s_half = series.entries[-1].ball_sum
        radius = p["radius"] if p["radius"] > 0.0 else p["radius_scale"] * cr.gap
        c0, c1 = expansion.rescaled_return_deviation(
            system, cr, radius, grid=p["grid"])
        rows.append((n, cr.gap, cr.f_n.serialize(), s_half,
                     cr.gap * s_half / n, c0, c1))
    _write_csv(spec.output_path,
               ("n", "gap", "word", "ball_sum_half", "scaled_gap",
                "c0_deviation", "c1_deviation"), rows)


def _run_grow_tree(system: GroupSystem, config: GroupConfig, p: dict,
                   spec: ExperimentSpec, workers: int) -> None:
    try:
        family = expansion.build_cone_family(system,
                                             resolution=p["resolution"],
                                             target=p["target"],
                                             max_depth=p["family_depth"])
    except expansion.FamilyIncomplete as exc:
        raise ContractError(
            f"no complete expansion family for this group: {exc}")
    x = CirclePoint(p["x"])
    rows = []
    for level in range(1, p["m"] + 1):
        tree = expansion.grow_tree(system, x, family, level,
                                   target=p["target"],
                                   member_budget=p["member_budget"])
        verified = (expansion.verify_growing_tree(system, x, tree)
                    if p["verify"] else True)
        rows.append((level, len(tree.member_slots), tree.sum_at_x, verified))
    _write_csv(spec.output_path,
               ("level", "members", "derivative_sum", "verified"), rows)


_RUNNERS: dict[str, Callable] = {
    "ball-sum": _run_ball_sum,
    "ne-scan": _run_ne_scan,
    "fixers": _run_fixers,
    "markov": _run_markov,
    "refine": _run_refine,
    "measure-lambda": _run_measure_lambda,
    "gaps": _run_gaps,
    "psl2z-growth": _run_psl2z_growth,
    "commutator": _run_commutator,
    "distortion-suite": _run_distortion_suite,
    "closest-return": _run_closest_return,
    "grow-tree": _run_grow_tree,
}


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def _resolve_parameters(spec: ExperimentSpec) -> dict[str, Any]:
    table = _PARAMS[spec.name]
    params = {name: default for name, (_t, default, _h) in table.items()}
    for key, value in spec.parameters.items():
        ptype = table[key][0]
        if isinstance(value, ptype) and not (ptype is not bool
                                             and isinstance(value, bool)):
            params[key] = value
            continue
        if ptype is bool and isinstance(value, str):
            lowered = value.strip().lower()
            if lowered in ("true", "1", "yes"):
                params[key] = True
            elif lowered in ("false", "0", "no"):
                params[key] = False
            else:
                raise ContractError(
                    f"parameter {key!r} expects a boolean, got {value!r}")
            continue
        try:
            params[key] = ptype(value)
        except (TypeError, ValueError):
            raise ContractError(
                f"parameter {key!r} expects {ptype.__name__}, "
                f"got {value!r}") from None
    return params


def _emit_error(kind: str, message: str, details: list[dict]) -> None:
    doc: dict[str, Any] = {"error": {"kind": kind, "message": message}}
    if details:
        doc["error"]["details"] = details
    print(json.dumps(doc, sort_keys=True))


def load_group(ref: str) -> GroupConfig:
    """Resolve a --group value: builtin name first, then config file path."""
    if ref in BUILTIN_GROUPS:
        return GroupConfig(label=ref, kind="mobius", generators=(),
                           builtin=ref)
    path = Path(ref)
    if not path.exists():
        raise ContractError(
            f"group {ref!r} is neither a builtin name nor an existing "
            "config file", details=[{"known_builtins": sorted(BUILTIN_GROUPS)}])
    try:
        result = validate_config(path)
    except ParseError as exc:
        raise ContractError(f"config syntax error: {exc}",
                            details=[{"line": exc.line}]) from None
    if isinstance(result, list):
        raise ContractError(
            "config validation failed",
            details=[{"line": d.line, "field": d.field, "reason": d.reason}
                     for d in result])
    return result


def run_experiment(config: GroupConfig, spec: ExperimentSpec, *,
                   workers: int = 1) -> int:
    """Run one experiment; returns the process exit status."""
    try:
        params = _resolve_parameters(spec)
        system = build_system(config)
        _RUNNERS[spec.name](system, config, params, spec, workers)
        _write_sidecar(spec, config, params)
        return EXIT_OK
    except ContractError as exc:
        _emit_error("contract", str(exc), exc.details)
        return EXIT_CONTRACT
    except Exception as exc:  # pragma: no cover - defensive catch-all
        _emit_error("internal", f"{type(exc).__name__}: {exc}", [])
        return EXIT_INTERNAL


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="circle-dyn",
        description="Run a named experiment and write CSV/JSON artifacts.")
    sub = parser.add_subparsers(dest="experiment", required=True,
                                metavar="experiment")
    for name, table in _PARAMS.items():
        sp = sub.add_parser(name, help=_SUMMARIES[name])
        sp.add_argument("--group", required=True,
                        help="builtin group name or path to a config file")
        sp.add_argument("--out", default=None,
                        help="output path (default: <experiment>.<csv|json>)")
        sp.add_argument("--seed", type=int, default=0,
                        help="seed for randomized experiments")
        sp.add_argument("--workers", type=int,
                        default=os.cpu_count() or 1,
                        help="worker pool size for parallel phases")
        for pname, (ptype, default, help_text) in table.items():
            flag = "--" + pname.replace("_", "-")
            if ptype is bool:
                sp.add_argument(flag, dest=pname,
                                action=argparse.BooleanOptionalAction,
                                default=default, help=help_text)
            else:
                sp.add_argument(flag, dest=pname, type=ptype,
                                default=default, help=help_text)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    table = _PARAMS[args.experiment]
    try:
        config = load_group(args.group)
        spec = ExperimentSpec(
            name=args.experiment,
            parameters={pname: getattr(args, pname) for pname in table},
            output_path=args.out or "",
            seed=args.seed)
    except ContractError as exc:
        _emit_error("contract", str(exc), exc.details)
        return EXIT_CONTRACT
    return run_experiment(config, spec, workers=max(1, args.workers))


if __name__ == "__main__":
    raise SystemExit(main())
