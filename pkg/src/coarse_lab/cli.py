"""``coarse-lab`` command line.

Exit status: 0 when every reported check passes, 1 when a check fails, 2 on
bad input.  Spaces are JSON files or ``family:size`` model truncations.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import flasque as fl
from . import homotopy as hm
from . import io as cio
from .geodesic import check_geodesification, geodesify, upper_control
from .maps import MapWitness, closeness_constant, surjectivity_constant
from .metric import MetricError, format_label, generate, parse_tower, validate_metric
from .product import build_product, canonical_embed, mediate
from .rays import check_ray_criterion, extract_ray
from .suite import CHECKS, INJECTIONS, SuiteConfig, run_suite


_NONNEG = ("c", "R", "r0", "m", "N", "M", "n_max", "budget", "slack")


@dataclass
class RunConfig:
    """Parsed command plus its parameters, validated before dispatch."""

    command: str
    params: dict = field(default_factory=dict)
    out: str | None = None

    @classmethod
    def from_namespace(cls, a: argparse.Namespace) -> "RunConfig":
        params = {k: v for k, v in vars(a).items() if k not in ("fn", "command", "out")}
        for k in _NONNEG:
            v = params.get(k)
            if isinstance(v, (int, float)) and v < 0:
                raise cio.InputError(f"--{k.replace('_', '-')} must be nonnegative")
        if "tol" in params and not params["tol"] > 0:
            raise cio.InputError("--tol must be positive")
        return cls(a.command, params, getattr(a, "out", None))


def _scales(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise cio.InputError(f"bad scale list {text!r}") from exc
    if not vals or any(v < 0 for v in vals) or vals != sorted(vals):
        raise cio.InputError("scales must be a nonempty ascending list of nonnegative numbers")
    return vals


def _nonneg(name: str, v: float) -> float:
    if v < 0:
        raise cio.InputError(f"--{name} must be nonnegative")
    return v


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _label(space, text: str):
    try:
        return space.points[space.index(text)]
    except KeyError as exc:
        raise cio.InputError(str(exc)) from exc


def _verdict(rows) -> int:
    return 0 if all(r[4] for r in rows) else 1


# ---------------------------------------------------------------------------
# commands


def cmd_validate(a) -> int:
    X = cio.load_space(a.space)
    bad = validate_metric(X, tol=a.tol)
    _emit(cio.dump_json({"points": len(X), "valid": not bad,
                         "violations": [str(v) for v in bad]}), a.out)
    return 0 if not bad else 1


def cmd_geodesify(a) -> int:
    X = cio.load_space(a.space)
    real = geodesify(X, _nonneg("c", a.c), a.m)
    _emit(cio.dump_json(cio.space_to_json(real.space)), a.out)
    if a.check:
        chk = check_geodesification(real)
        sys.stderr.write(f"uniformity slack {chk.uniformity_slack:g}, "
                         f"injectivity slack {chk.injectivity_slack:g}\n")
        return 0 if chk.passed else 1
    return 0


def cmd_ray(a) -> int:
    X = cio.load_space(a.space)
    seq = [_label(X, s) for s in cio.load_sequence(a.seq)]
    base = _label(X, a.basepoint) if a.basepoint else None
    ext = extract_ray(X, seq, _nonneg("r0", a.r0), _nonneg("c", a.c), base)
    phi = upper_control(X, a.c, np.arange(0, math.ceil(X.diameter()) + 1))
    crit = check_ray_criterion(ext.ray.points, X, a.c + a.r0, phi)
    _emit(cio.dump_json({"ray": [format_label(p) for p in ext.ray.points],
                         "constant": ext.constant,
                         "covered_indices": list(ext.covered_indices),
                         "criterion": crit.passed}), a.out)
    return 0 if crit.passed else 1


def _product(a):
    L, Rt = cio.load_space(a.left), cio.load_space(a.right)
    return build_product(L, _label(L, a.p), Rt, _label(Rt, a.q),
                         None if a.R is None else _nonneg("R", a.R), a.combiner)


def cmd_product(a) -> int:
    if a.action == "build":
        prod = _product(a)
        data = cio.space_to_json(prod.space) if a.matrix else {
            "pairs": [format_label(p) for p in prod.pairs], "R": prod.R, "combiner": prod.combiner}
        data["count"] = len(prod)
        _emit(cio.dump_json(data), a.out)
        return 0
    if a.action == "mediate":
        prod = _product(a)
        Z = cio.load_space(a.source)
        f = cio.load_map(a.f, Z, prod.left)
        g = cio.load_map(a.g, Z, prod.right)
        med = mediate(f, g, prod, _nonneg("c", a.c), a.slack)
        data = cio.map_to_json(med.map)
        data.update({"K": med.K, "R_comp": med.R_comp})
        _emit(cio.dump_json(data), a.out)
        return 0
    X = cio.load_space(a.space)
    p = _label(X, a.p)
    R = _nonneg("R", a.R)
    M = int(math.ceil(X.eccentricity(p) + R))
    prod = build_product(X, p, generate("zplus", M), 0, R)
    e = canonical_embed(X, p, prod)
    surj = surjectivity_constant(e)
    data = cio.map_to_json(e)
    data.update({"surjectivity": surj, "bound": R})
    _emit(cio.dump_json(data), a.out)
    return 0 if surj <= R + 1e-9 else 1


def cmd_cone(a) -> int:
    base = cio.load_space(a.base) if a.base else None
    res = a.resolution if a.resolution == "interval" else int(a.resolution)
    cone = hm.build_cone(base, a.N, res)
    data = cio.space_to_json(cone.space)
    data["violations"] = [str(v) for v in cone.violations]
    _emit(cio.dump_json(data), a.out)
    return 0 if not cone.violations else 1


def _load_family(path, X, Y) -> hm.HomotopyFamily:
    raw = cio._read_json(path)
    try:
        grid = [Fraction(t) for t in raw["grid"]]
        maps = [cio.map_from_json({"map": raw["maps"][str(t)]}, X, Y) for t in raw["grid"]]
    except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
        raise cio.InputError(f"bad family file: {exc}") from exc
    try:
        return hm.HomotopyFamily(tuple(grid), tuple(maps), float(raw.get("c", 1.0)))
    except ValueError as exc:
        raise cio.InputError(str(exc)) from exc


def cmd_homotopy(a) -> int:
    X = cio.load_space(a.space)
    Y = cio.load_space(a.target)
    if a.action == "check-family":
        fam = _load_family(a.family, X, Y)
        rays = [[_label(X, s) for s in cio.load_sequence(r)] for r in a.ray]
        rep = hm.check_family_condition(fam, rays, budget=a.budget)
        rows = [(f"family_condition:t={t}", float(t), v, "" if a.budget is None else a.budget,
                 t not in rep.failing) for t, v in rep.per_t.items()]
        _emit(cio.report_csv(rows), a.out)
        return _verdict(rows)
    p = _label(X, a.p)
    prod = hm.homotopy_domain(X, p, R=_nonneg("R", a.R))
    scales = _scales(a.scales)
    if a.action == "from-close":
        f, g = cio.load_map(a.f, X, Y), cio.load_map(a.g, X, Y)
        h = hm.homotopy_from_close(f, g, prod)
        C = closeness_constant(f, g)
        if a.map_out:
            Path(a.map_out).write_text(cio.dump_json(cio.map_to_json(h)), encoding="utf-8")
    else:
        h = cio.load_map(a.h, prod.space, Y)
        C = None
    rep = hm.check_homotopy_map(h, prod, scales)
    rows = [("uniformity", s, b, "", True) for s, b in rep.uniformity.rows()]
    rows += [("properness", s, b, "", True) for s, b in rep.properness.rows()]
    if a.action == "from-close":
        ends = hm.restriction_matches(h, prod, 0, f) and hm.restriction_matches(h, prod, 1, g)
        rows.append(("endpoints", "", C, "", ends))
    _emit(cio.report_csv(rows), a.out)
    return _verdict(rows)


def _model_tower(spec: str):
    family, sizes = parse_tower(spec)
    return family, [generate(family, s) for s in sizes]


def cmd_flasque(a) -> int:
    try:
        family, tower = _model_tower(a.space)
    except MetricError as exc:
        raise cio.InputError(str(exc)) from exc
    top = tower[-1]
    n_max = a.n_max or 2 * int(math.ceil(top.diameter())) + 2
    try:
        w = fl.FlasqueWitness.named(family, n_max, "identity" if a.shift == "identity" else None)
    except ValueError as exc:
        raise cio.InputError(str(exc)) from exc
    if a.action == "certify":
        rep = fl.certify_flasque(w, tower, _scales(a.scales), _scales(a.balls))
        rows = [("closeness", "", rep.closeness, "", True)]
        rows += [("escape", k, v, "", math.isfinite(v)) for k, v in sorted(rep.escape.items())]
        rows += [("iterate_union", s, b, "", rep.stable) for s, b in rep.control.rows()]
        _emit(cio.report_csv(rows), a.out)
        return 0 if rep.passed else 1
    M = a.M if a.M is not None else len(top) - 1
    fh = fl.flasque_homotopy(w, top, M, scales=_scales(a.scales))
    rows = [("start_is_identity", "", "", "", fh.start_is_identity),
            ("end_is_i0_Phi", "", "", "", fh.end_is_i0_Phi),
            ("Phi_i0_identity", "", "", "", fh.Phi_i0_identity),
            ("zplus_factor_excess", 1, fh.zplus_excess, 2, fh.zplus_excess <= 2)]
    rows += [("uniformity", s, b, "", True) for s, b in fh.report.uniformity.rows()]
    _emit(cio.report_csv(rows), a.out)
    return _verdict(rows)


def cmd_suite(a) -> int:
    cfg = SuiteConfig()
    if a.tower is not None:
        fam, sizes = parse_tower(a.tower)
        if len(sizes) < 2:
            raise cio.InputError("suite towers need at least two levels")
        cfg.line = (fam, tuple(sizes))
    if a.plane is not None:
        fam, sizes = parse_tower(a.plane)
        if len(sizes) < 2:
            raise cio.InputError("suite towers need at least two levels")
        cfg.plane = (fam, tuple(sizes))
    if a.only:
        try:
            only = frozenset(int(k) for k in a.only.split(","))
        except ValueError as exc:
            raise cio.InputError(f"bad --only list {a.only!r}") from exc
        if not only <= set(CHECKS):
            raise cio.InputError(f"unknown checks in --only: {sorted(only - set(CHECKS))}")
        cfg.only = only
    for name in a.inject:
        if name not in INJECTIONS:
            raise cio.InputError(f"unknown injection {name!r}; choose from {', '.join(INJECTIONS)}")
    cfg.inject = frozenset(a.inject)
    cfg.seed = a.seed
    rows = run_suite(cfg)
    _emit(cio.report_csv(rows), a.out)
    return _verdict(rows)


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coarse-lab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="write the report here instead of stdout")
        return p

    p = common(sub.add_parser("validate", help="check the metric axioms"))
    p.add_argument("--space", required=True)
    p.add_argument("--tol", type=float, default=1e-9)
    p.set_defaults(fn=cmd_validate)

    p = common(sub.add_parser("geodesify", help="subdivided Rips 1-skeleton"))
    p.add_argument("--space", required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--m", type=int, default=2)
    p.add_argument("--check", action="store_true", help="also replay the comparison bounds")
    p.set_defaults(fn=cmd_geodesify)

    p = common(sub.add_parser("ray", help="coarse ray extraction"))
    p.add_argument("action", choices=["extract"])
    p.add_argument("--space", required=True)
    p.add_argument("--seq", required=True)
    p.add_argument("--r0", type=float, required=True)
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--basepoint")
    p.set_defaults(fn=cmd_ray)

    p = common(sub.add_parser("product", help="asymptotic products"))
    p.add_argument("action", choices=["build", "mediate", "embed"])
    p.add_argument("--left"); p.add_argument("--p")
    p.add_argument("--right"); p.add_argument("--q")
    p.add_argument("--R", type=float)
    p.add_argument("--combiner", choices=["max", "sum"], default="max")
    p.add_argument("--matrix", action="store_true", help="emit the product as a space file")
    p.add_argument("--source"); p.add_argument("--f"); p.add_argument("--g")
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--slack", type=float)
    p.add_argument("--space")
    p.set_defaults(fn=cmd_product)

    p = common(sub.add_parser("cone", help="cone spaces"))
    p.add_argument("action", choices=["build"])
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--base", help="base space (default: sampled unit interval)")
    p.add_argument("--resolution", default="interval")
    p.set_defaults(fn=cmd_cone)

    p = common(sub.add_parser("homotopy", help="coarse homotopies"))
    p.add_argument("action", choices=["check-map", "check-family", "from-close"])
    p.add_argument("--space", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--p", default="0")
    p.add_argument("--R", type=float, default=2.0)
    p.add_argument("--scales", default="0,1,2,4")
    p.add_argument("--f"); p.add_argument("--g"); p.add_argument("--h")
    p.add_argument("--map-out")
    p.add_argument("--family"); p.add_argument("--ray", action="append", default=[])
    p.add_argument("--budget", type=float)
    p.set_defaults(fn=cmd_homotopy)

    p = common(sub.add_parser("flasque", help="flasque shifts"))
    p.add_argument("action", choices=["certify", "homotopy"])
    p.add_argument("--space", required=True, help="model tower FAMILY:S1,S2,...")
    p.add_argument("--shift", default="shift", help="'shift' (the family's named shift) or 'identity'")
    p.add_argument("--scales", default="0,1,2,4")
    p.add_argument("--balls", default="0,1,2,4")
    p.add_argument("--n-max", type=int)
    p.add_argument("--M", type=int)
    p.set_defaults(fn=cmd_flasque)

    p = common(sub.add_parser("suite", help="run the invariant suite"))
    p.add_argument("--tower", help="line tower, e.g. zplus:64,128,256")
    p.add_argument("--plane", help="plane tower, e.g. grid2_l1:4,6,8")
    p.add_argument("--only", help="comma-separated check numbers")
    p.add_argument("--inject", action="append", default=[], help=f"one of {', '.join(INJECTIONS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--paper-lemmas", action="store_true", help="run the full acceptance suite (the default)")
    p.set_defaults(fn=cmd_suite)
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        a = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        RunConfig.from_namespace(a)
        return a.fn(a)
    except (cio.InputError, MetricError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        sys.stderr.write(f"coarse-lab: error: {msg}\n")
        return 2
    except (ValueError, TypeError) as exc:
        sys.stderr.write(f"coarse-lab: error: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
