"""Scene files, the stage pipeline, and report emission.

A scene is a flat sectioned key = value text; values are shlex-split so
expressions travel as quoted tokens.  Sections: [poisson] (dim, entry,
domain), [submanifold] (params, vars, component, domain), [flow] (steps,
xi_radius), [complement] (mode, g/h/w frame columns), [model] (counts,
seeds, tolerances), or [presymplectic] (dim, entry, radius) for the
coisotropic-embedding pipeline.

Commands run the stages analyze -> saturate -> model -> verify and emit
a JSON report (schema 1) plus an optional CSV point cloud.  Exit codes:
0 all stages pass, 2 a tolerance check fails, 3 a prerequisite fails
(non-regular chart, Jacobi certificate, complement rank conditions),
4 file/parse/numeric failure.
"""

from __future__ import annotations

import argparse
import json
import shlex
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import CONVENTION, __version__
from .expr import ExprError, evaluate, parse
from .field import BivectorField, JacobiError
from .fixtures import FIXTURES
from .linear import NotPoisson, RankDeficient, SkewForm, dirac_graph
from .model import (
    ComplementChoice,
    GotayModel,
    eta_canonical,
    eta_closedness_residual,
    eta_zero_section,
    extraction_radius,
    full_fiber_landing,
    marle_invariants,
    saturation_chart,
    saturation_residuals,
    sigma_tau,
    verify_normal_form,
    verify_saturation_poisson,
)
from .submanifold import Chart, classify, regularity_scan

_MISSING = object()

_SECTIONS = {
    "poisson": {"dim", "entry", "domain"},
    "submanifold": {"params", "vars", "component", "domain"},
    "flow": {"steps", "xi_radius"},
    "complement": {"mode", "g", "h", "w"},
    "model": {"u_counts", "per_u", "seed", "tol_normal", "tol_saturation", "tol_landing"},
    "presymplectic": {"dim", "entry", "radius"},
}


class SceneError(ValueError):
    """Scene text failure; carries the 1-based line in .line."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class Scene:
    """Parsed scene: ordered (key, tokens, line) rows per section."""

    def __init__(self, sections):
        self.sections = sections

    def has(self, section):
        return section in self.sections

    def rows(self, section, key):
        return [(t, ln) for k, t, ln in self.sections.get(section, []) if k == key]

    def scalar(self, section, key, default=_MISSING, convert=str):
        rows = self.rows(section, key)
        if not rows:
            if default is _MISSING:
                raise SceneError(f"[{section}] is missing '{key}'")
            return default
        tokens, line = rows[-1]
        if len(tokens) != 1:
            raise SceneError(f"'{key}' takes a single value", line)
        try:
            return convert(tokens[0])
        except ValueError:
            raise SceneError(f"bad value for '{key}': {tokens[0]!r}", line) from None


def parse_scene(text: str) -> Scene:
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if not current:
                raise SceneError("empty section name", lineno)
            if current not in _SECTIONS:
                raise SceneError(f"unknown section [{current}]", lineno)
            sections.setdefault(current, [])
            continue
        if current is None:
            raise SceneError("key outside any [section]", lineno)
        key, eq, value = line.partition("=")
        if not eq:
            raise SceneError("expected key = value", lineno)
        key = key.strip()
        if key not in _SECTIONS[current]:
            raise SceneError(f"unknown key '{key}' in [{current}]", lineno)
        try:
            tokens = shlex.split(value.strip(), comments=False, posix=True)
        except ValueError as exc:
            raise SceneError(f"bad value: {exc}", lineno) from None
        if not tokens:
            raise SceneError(f"'{key}' has no value", lineno)
        sections[current].append((key, tokens, lineno))
    if "poisson" in sections and "presymplectic" in sections:
        raise SceneError("scene mixes [poisson] and [presymplectic]")
    if "poisson" not in sections and "presymplectic" not in sections:
        raise SceneError("scene needs a [poisson] or [presymplectic] section")
    return Scene(sections)


# Builders


def _entries(scene, section, dim):
    entries = {}
    for tokens, line in scene.rows(section, "entry"):
        if len(tokens) != 3:
            raise SceneError('entry takes: i j "expression"', line)
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise SceneError(f"bad entry indices {tokens[0]!r} {tokens[1]!r}", line) from None
        if not (1 <= i <= dim and 1 <= j <= dim) or i == j:
            raise SceneError(f"entry indices out of range: {i} {j}", line)
        if (i - 1, j - 1) in entries or (j - 1, i - 1) in entries:
            raise SceneError(f"duplicate entry {i} {j}", line)
        entries[(i - 1, j - 1)] = tokens[2]
    return entries


def _domain(scene, section, dim):
    rows = scene.rows(section, "domain")
    if not rows:
        return None
    vals = []
    for tokens, line in rows:
        if len(tokens) != 2:
            raise SceneError("domain takes: lo hi", line)
        try:
            lo, hi = float(tokens[0]), float(tokens[1])
        except ValueError:
            raise SceneError(f"bad domain row {tokens!r}", line) from None
        if not lo < hi:
            raise SceneError(f"empty domain interval [{lo}, {hi}]", line)
        vals.append([lo, hi])
    if len(vals) == 1:
        vals = vals * dim
    if len(vals) != dim:
        raise SceneError(f"[{section}] needs 1 or {dim} domain rows, got {len(vals)}",
                         rows[-1][1])
    return np.array(vals)


def build_bivector(scene: Scene) -> BivectorField:
    dim = scene.scalar("poisson", "dim", convert=int)
    if dim < 1:
        raise SceneError("dim must be positive")
    entries = _entries(scene, "poisson", dim)
    return BivectorField(dim, entries, domain=_domain(scene, "poisson", dim))


def build_chart(scene: Scene, ambient_dim) -> Chart:
    k = scene.scalar("submanifold", "params", convert=int)
    if k < 0:
        raise SceneError("params must be nonnegative")
    names = None
    rows = scene.rows("submanifold", "vars")
    if rows:
        tokens, line = rows[-1]
        if len(tokens) != k:
            raise SceneError(f"vars needs {k} names, got {len(tokens)}", line)
        names = tokens
    comps = []
    for tokens, line in scene.rows("submanifold", "component"):
        if len(tokens) != 1:
            raise SceneError("component takes a single expression", line)
        comps.append(tokens[0])
    if len(comps) != ambient_dim:
        raise SceneError(f"need {ambient_dim} components, got {len(comps)}")
    comps = [parse(c, k, names) for c in comps]
    return Chart(k, ambient_dim, comps, domain=_domain(scene, "submanifold", k), names=names)


def _frame_columns(scene, key, chart):
    """Frame value for [complement] g/h/w: constant matrix or callable."""
    rows = scene.rows("complement", key)
    if not rows:
        return None
    n, k = chart.ambient_dim, chart.param_dim
    names = None  # chart components were already parsed; reuse text names
    vars_rows = scene.rows("submanifold", "vars")
    if vars_rows:
        names = vars_rows[-1][0]
    cols = []
    for tokens, line in rows:
        if len(tokens) != n:
            raise SceneError(f"'{key}' column needs {n} expressions, got {len(tokens)}", line)
        cols.append([parse(t, k, names) for t in tokens])
    probes = np.vstack([chart.grid(2), chart.sample(3, seed=7)]) if k else np.zeros((1, 0))
    flat = np.array([[evaluate(e, probes) for e in col] for col in cols])
    if np.ptp(flat, axis=-1).max() == 0.0:
        return flat[..., 0].T  # (n, cols) constant frame
    if key != "w":
        raise SceneError(f"'{key}' must be a constant frame", rows[0][1])

    def at(u):
        pts = np.atleast_1d(np.asarray(u, dtype=float))[None, :]
        return np.array([[evaluate(e, pts)[0] for e in col] for col in cols]).T

    return at


def build_complement(scene: Scene, bv, chart) -> ComplementChoice:
    mode = scene.scalar("complement", "mode", default="default")
    if mode not in ("default", "coisotropic", "pre_poisson", "custom"):
        raise SceneError(f"unknown complement mode {mode!r}")
    g = _frame_columns(scene, "g", chart)
    h = _frame_columns(scene, "h", chart)
    w = _frame_columns(scene, "w", chart)
    if mode == "custom" and w is None:
        raise SceneError("custom mode needs a w frame")
    return ComplementChoice(bv, chart, mode=mode, g=g, h=h, w=w)


def scene_parameters(scene: Scene, steps_override=None, tol_override=None):
    p = {
        "steps": scene.scalar("flow", "steps", default=1024, convert=int),
        "xi_radius": scene.scalar("flow", "xi_radius", default=0.2, convert=float),
        "u_counts": scene.scalar("model", "u_counts", default=5, convert=int),
        "per_u": scene.scalar("model", "per_u", default=3, convert=int),
        "seed": scene.scalar("model", "seed", default=0, convert=int),
        "mode": scene.scalar("complement", "mode", default="default"),
        "tolerances": {
            "normal": scene.scalar("model", "tol_normal", default=1e-4, convert=float),
            "saturation": scene.scalar("model", "tol_saturation", default=1e-8, convert=float),
            "landing": scene.scalar("model", "tol_landing", default=1e-4, convert=float),
        },
    }
    if steps_override is not None:
        p["steps"] = int(steps_override)
    if tol_override is not None:
        p["tolerances"]["normal"] = float(tol_override)
    for name, tol in p["tolerances"].items():
        if tol <= 0:
            raise SceneError(f"tolerance '{name}' must be positive")
    if p["steps"] < 1 or p["u_counts"] < 1 or p["per_u"] < 0 or p["xi_radius"] <= 0:
        raise SceneError("flow/model parameters out of range")
    return p


# Stages

_STAGES = ("analyze", "saturate", "model", "verify")

_RUNS = {
    "analyze": ("analyze",),
    "saturate": ("analyze", "saturate"),
    "model": ("analyze", "model"),
    "verify": ("analyze", "verify"),
    "all": _STAGES,
}


def _stage_analyze(bv, chart, seed):
    scan = regularity_scan(bv, chart, counts=9, seed=seed)
    cls = classify(bv, chart, counts=9, seed=seed)
    out = {
        "status": "pass" if scan.regular_on_samples else "fail",
        "observed_ranks": sorted(int(r) for r in scan.witnesses),
        "witnesses": {str(r): [float(v) for v in u]
                      for r, u in sorted(scan.witnesses.items())},
        "samples": int(len(scan.params)),
        "refined": int(scan.refined),
        "flags": {k: bool(v) for k, v in cls.flags.items()},
        "rank_sets": cls.ranks,
    }
    if out["status"] == "fail":
        out["reason"] = "rank of TXperp is not constant on the sampled set"
    return out


def _stage_saturate(bv, chart, comp, p):
    sat = saturation_chart(bv, chart, comp, steps=p["steps"], u_counts=p["u_counts"],
                           radius=p["xi_radius"], per_u=p["per_u"], seed=p["seed"])
    ver = verify_saturation_poisson(bv, sat, tol=p["tolerances"]["saturation"])
    land = full_fiber_landing(sat, radius=min(0.05, p["xi_radius"]), seed=p["seed"] + 1,
                              tol=p["tolerances"]["landing"])
    out = {
        "status": "pass" if ver["ok"] and land["ok"] else "fail",
        "model_dim": int(sat.model_dim),
        "samples": int(len(sat.points)),
        "radius_used": float(sat.radius_used),
        "max_residual": ver["max_residual"],
        "tol_saturation": ver["tol"],
        "landing_distance": land["max_distance"],
        "tol_landing": land["tol"],
    }
    return out, sat


def _stage_model(bv, chart, comp, p):
    u0 = chart.center()
    sigma, tau = sigma_tau(bv, chart, comp, u0)
    fr = comp.at(u0)
    zero_resid = 0.0
    for u in chart.grid(3):
        eta = eta_canonical(bv, chart, comp, u, np.zeros(comp.rank_perp), steps=p["steps"])
        zero_resid = max(zero_resid, float(np.abs(eta - eta_zero_section(bv, chart, comp, u)).max()))
    zeta = np.full(comp.rank_perp, p["xi_radius"] / 4)
    closed = eta_closedness_residual(bv, chart, comp, u0, zeta,
                                     steps=min(p["steps"], 256))
    radius = extraction_radius(bv, chart, comp, u0, steps=min(p["steps"], 256),
                               start=p["xi_radius"], seed=p["seed"])
    conditions = {k: bool(v) if isinstance(v, (bool, np.bool_)) else float(v)
                  for k, v in fr.conditions.items()}
    ok = (zero_resid <= 1e-6 and closed <= 1e-6 and radius > 0.0
          and all(v <= 1e-8 for v in conditions.values() if not isinstance(v, bool))
          and all(v for v in conditions.values() if isinstance(v, bool)))
    out = {
        "status": "pass" if ok else "fail",
        "rank_perp": int(comp.rank_perp),
        "cap_dim": int(comp.cap_dim),
        "sigma_rank": int(sigma.rank()),
        "tau_max": float(np.abs(tau).max()) if tau.size else 0.0,
        "eta_zero_section_residual": zero_resid,
        "eta_closedness_residual": float(closed),
        "extraction_radius": float(radius),
        "conditions": conditions,
    }
    if comp.mode == "pre_poisson":
        rows = marle_invariants(bv, chart, comp, chart.grid(3))
        out["quotient_rank"] = int(rows[0]["quotient"].rank())
        out["cross_residual"] = max(r["cross_residual"] for r in rows)
    return out


def _stage_verify(bv, chart, comp, p):
    rep = verify_normal_form(bv, chart, comp, steps=p["steps"], u_counts=p["u_counts"],
                             radius=p["xi_radius"], per_u=p["per_u"], seed=p["seed"],
                             tol=p["tolerances"]["normal"])
    return {
        "status": "pass" if rep["ok"] else "fail",
        "max_mismatch": rep["max_mismatch"],
        "tol_normal": rep["tol"],
        "radius_used": rep["radius_used"],
        "samples": int(rep["samples"]),
        "steps": int(rep["steps"]),
    }


def _gotay_tolerances():
    return {"coisotropy": 1e-10, "reproduction": 1e-8, "jacobi": 1e-10}


def _run_gotay(scene, command, report, p):
    dim = scene.scalar("presymplectic", "dim", convert=int)
    if dim < 1:
        raise SceneError("dim must be positive")
    radius = scene.scalar("presymplectic", "radius", default=0.1, convert=float)
    entries = _entries(scene, "presymplectic", dim)
    trees = {ij: parse(text, dim) for ij, text in entries.items()}
    stages = report["stages"]

    def form_at(x):
        m = np.zeros((dim, dim))
        for (i, j), tree in trees.items():
            v = float(evaluate(tree, np.asarray(x, dtype=float)[None, :])[0])
            m[i, j] = v
            m[j, i] = -v
        return dirac_graph(SkewForm(m), "two_form")

    exit_code = 0
    try:
        got = GotayModel(dim, form_at)
    except RankDeficient as exc:
        stages["analyze"] = {"status": "fail", "reason": str(exc)}
        report["exit_code"] = 3
        return 3, None
    stages["analyze"] = {
        "status": "pass",
        "base_dim": int(dim),
        "fiber_dim": int(got.fiber_dim),
        "model_dim": int(dim + got.fiber_dim),
    }
    if "saturate" in _RUNS[command]:
        stages["saturate"] = {"status": "skipped", "reason": "presymplectic scene"}
    if "model" in _RUNS[command]:
        p0 = got.bivector_at(np.zeros(dim), np.zeros(got.fiber_dim))
        stages["model"] = {
            "status": "pass",
            "bivector_at_origin": [[float(v) for v in row] for row in p0],
        }
    if "verify" in _RUNS[command]:
        tols = _gotay_tolerances()
        rep = got.verify(samples=20, radius=radius, seed=p["seed"] + 4)
        ok = (rep["coisotropy"] <= tols["coisotropy"]
              and rep["reproduction_angle"] <= tols["reproduction"]
              and rep["jacobi_fd"] <= tols["jacobi"])
        stages["verify"] = {
            "status": "pass" if ok else "fail",
            "coisotropy": rep["coisotropy"],
            "reproduction_angle": rep["reproduction_angle"],
            "jacobi_fd": rep["jacobi_fd"],
            "tolerances": tols,
        }
        if not ok:
            exit_code = 2
    report["exit_code"] = exit_code
    return exit_code, None


def run_scene(scene: Scene, command, scene_name="scene", steps_override=None,
              tol_override=None, want_csv=False):
    """Run the requested stages; returns (exit_code, report, csv_text)."""
    if command not in _RUNS:
        raise ValueError(f"unknown command {command!r}")
    p = scene_parameters(scene, steps_override, tol_override)
    report = {
        "schema": 1,
        "convention": CONVENTION,
        "scene": scene_name,
        "command": command,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "parameters": p,
        "stages": {},
    }
    if scene.has("presymplectic"):
        code, _ = _run_gotay(scene, command, report, p)
        return code, report, None

    stages = report["stages"]
    try:
        bv = build_bivector(scene)
    except JacobiError as exc:
        stages["analyze"] = {
            "status": "fail",
            "reason": "jacobi certificate failed",
            "residual": exc.residual,
            "point": list(exc.point),
        }
        report["exit_code"] = 3
        return 3, report, None
    chart = build_chart(scene, bv.dim)

    stages["analyze"] = _stage_analyze(bv, chart, p["seed"])
    if stages["analyze"]["status"] == "fail":
        report["exit_code"] = 3
        return 3, report, None

    todo = [s for s in _RUNS[command] if s != "analyze"]
    exit_code = 0
    csv_text = None
    comp = None
    if todo:
        try:
            comp = build_complement(scene, bv, chart)
        except RankDeficient as exc:
            stages[todo[0]] = {"status": "fail", "reason": str(exc)}
            report["exit_code"] = 3
            return 3, report, None

    for stage in todo:
        try:
            if stage == "saturate":
                stages[stage], sat = _stage_saturate(bv, chart, comp, p)
                if want_csv:
                    csv_text = _csv_text(sat)
            elif stage == "model":
                stages[stage] = _stage_model(bv, chart, comp, p)
            elif stage == "verify":
                stages[stage] = _stage_verify(bv, chart, comp, p)
        except RankDeficient as exc:
            stages[stage] = {"status": "fail", "reason": str(exc)}
            report["exit_code"] = 3
            return 3, report, csv_text
        except (NotPoisson, ValueError) as exc:
            stages[stage] = {"status": "error", "reason": str(exc)}
            report["exit_code"] = 4
            return 4, report, csv_text
        if stages[stage]["status"] == "fail":
            exit_code = 2

    report["exit_code"] = exit_code
    return exit_code, report, csv_text


def _csv_text(sat):
    k = sat.chart.param_dim
    r = sat.comp.rank_perp
    n = sat.bv.dim
    header = ([f"u{i + 1}" for i in range(k)] + [f"xi{i + 1}" for i in range(r)]
              + [f"x{i + 1}" for i in range(n)] + ["residual"])
    res = saturation_residuals(sat.bv, sat)
    lines = [",".join(header)]
    for i in range(len(sat.points)):
        vals = [*sat.us[i], *sat.zetas[i], *sat.points[i], res[i]]
        lines.append(",".join(f"{float(v):.17g}" for v in vals))
    return "\n".join(lines) + "\n"


def report_text(report):
    return json.dumps(report, indent=2) + "\n"


# Entry point


def _build_parser():
    ap = argparse.ArgumentParser(prog="poissat",
                                 description="saturation and local-model pipeline")
    ap.add_argument("--version", action="version", version=f"poissat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("analyze", "saturate", "model", "verify", "all"):
        c = sub.add_parser(name, help=f"run the {name} stage(s) of a scene")
        c.add_argument("scene", help="scene file path")
        c.add_argument("--steps", type=int, default=None, help="override flow steps")
        c.add_argument("--tol", type=float, default=None, help="override tol_normal")
        c.add_argument("--out", default=None, help="directory for report.json/points.csv")
        c.add_argument("--csv", action="store_true", help="emit the saturation point cloud")
    f = sub.add_parser("fixtures", help="list or emit shipped scenes")
    f.add_argument("action", choices=("list", "emit"))
    f.add_argument("name", nargs="?", default=None)
    f.add_argument("--out", default=None, help="directory to write the scene file into")
    return ap


def _error_report(scene_name, command, message):
    return {
        "schema": 1,
        "convention": CONVENTION,
        "scene": scene_name,
        "command": command,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "error": message,
        "exit_code": 4,
    }


def _emit(report, csv_text, out_dir, stream):
    stream.write(report_text(report))
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report_text(report))
        if csv_text is not None:
            (out / "points.csv").write_text(csv_text)


def main(argv=None, stream=None):
    stream = sys.stdout if stream is None else stream
    args = _build_parser().parse_args(argv)

    if args.command == "fixtures":
        if args.action == "list":
            for name in FIXTURES:
                stream.write(name + "\n")
            return 0
        if args.name not in FIXTURES:
            stream.write(f"unknown fixture {args.name!r}; see `poissat fixtures list`\n")
            return 4
        text = FIXTURES[args.name]
        stream.write(text)
        if args.out is not None:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            (out / f"{args.name}.scene").write_text(text)
        return 0

    scene_name = Path(args.scene).name
    try:
        text = Path(args.scene).read_text()
    except OSError as exc:
        report = _error_report(scene_name, args.command, f"cannot read scene: {exc}")
        _emit(report, None, args.out, stream)
        return 4
    try:
        scene = parse_scene(text)
        code, report, csv_text = run_scene(scene, args.command, scene_name=scene_name,
                                           steps_override=args.steps, tol_override=args.tol,
                                           want_csv=args.csv or args.out is not None)
    except (SceneError, ExprError, ValueError) as exc:
        report = _error_report(scene_name, args.command, str(exc))
        _emit(report, None, args.out, stream)
        return 4
    _emit(report, csv_text, args.out, stream)
    return code


if __name__ == "__main__":
    sys.exit(main())
