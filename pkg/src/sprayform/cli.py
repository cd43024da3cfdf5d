"""Batch front end: validate a problem config, run checks, write reports.

Subcommands:

* ``check``        run the scenario pipeline for the config's kind; write a
                   JSON report and a residual CSV; exit 0 iff all pass.
* ``convergence``  resolution ladder for the config's form; CSV table.
* ``eval``         print omega / d omega / Pi / mu / cocycle values at a
                   point in JSON.
* ``schema``       print the config JSON schema.

Exit codes: 0 pass, 1 check failure, 2 config error, 3 runtime math error.
Reports are byte-identical across runs with the same config and seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import expr as ex
from .algebroid import (
    check_algebroid,
    check_spray,
    cotangent_algebroid,
    default_spray,
    jacobi_cocycle,
    AlgebroidChart,
    SymbolicStructure,
)
from .errors import ConfigError, ExprError, SprayformError
from .groupoid import (
    SprayGroupoid,
    discover_validity_box,
    integrate_cocycle,
    multiply_poisson,
)
from .imform import linear_form, poisson_im_pair, jacobi_linear_form
from .report import CheckReport
from .scenarios import (
    Numerics,
    build_dirac,
    build_jacobi,
    build_nijenhuis,
    build_symplectic_groupoid,
    convergence_study,
    gcs_identity_check,
)
from .tensor import index_list

SCHEMA_VERSION = 1

_EXPR = {"type": "string", "minLength": 1}
_EXPR_MATRIX = {"type": "array", "items": {"type": "array", "items": _EXPR}}
_FORM = {"type": "object", "patternProperties": {r"^[1-8]+$": _EXPR},
         "additionalProperties": False}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "sprayform problem configuration",
    "type": "object",
    "required": ["schema_version", "kind", "chart", "coefficients"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": ["poisson", "nijenhuis", "gcs", "dirac", "jacobi",
                          "raw_algebroid"]},
        "chart": {
            "type": "object",
            "required": ["dim", "box"],
            "additionalProperties": False,
            "properties": {
                "dim": {"type": "integer", "minimum": 1, "maximum": 8},
                "box": {"type": "array",
                        "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                  "items": {"type": "number"}}},
            },
        },
        "coefficients": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "pi": _FORM,
                "l": _EXPR_MATRIX,
                "varpi": _FORM,
                "R": {"type": "array", "items": _EXPR},
                "H": _FORM,
                "sections": {
                    "type": "array",
                    "items": {
                        "type": "object",
                        "required": ["v", "alpha"],
                        "additionalProperties": False,
                        "properties": {
                            "v": {"type": "array", "items": _EXPR},
                            "alpha": {"type": "array", "items": _EXPR},
                        },
                    },
                },
                "rank": {"type": "integer", "minimum": 1, "maximum": 8},
                "anchor": _EXPR_MATRIX,
                "c": {"type": "array",
                      "items": {"type": "array", "items":
                                {"type": "array", "items": _EXPR}}},
                "christoffel": {"type": "array",
                                "items": {"type": "array", "items":
                                          {"type": "array", "items": _EXPR}}},
            },
        },
        "numerics": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "quad_nodes": {"type": "integer", "minimum": 2},
                "quad_kind": {"enum": ["simpson", "gauss"]},
                "mu_steps": {"type": "integer", "minimum": 1},
                "ode_tol": {"type": "number", "exclusiveMinimum": 0},
                "samples": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
                "mult_pairs": {"type": "integer", "minimum": 0},
                "assoc_triples": {"type": "integer", "minimum": 0},
                "tolerances": {"type": "object",
                               "additionalProperties": {"type": "number"}},
            },
        },
        "outputs": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "report": {"type": "string"},
                "csv": {"type": "string"},
                "convergence_csv": {"type": "string"},
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"const": "poisson"}}},
         "then": {"properties": {"coefficients": {"required": ["pi"]}}}},
        {"if": {"properties": {"kind": {"const": "nijenhuis"}}},
         "then": {"properties": {"coefficients": {"required": ["pi", "l"]}}}},
        {"if": {"properties": {"kind": {"const": "gcs"}}},
         "then": {"properties": {"coefficients":
                                 {"required": ["pi", "l", "varpi"]}}}},
        {"if": {"properties": {"kind": {"const": "dirac"}}},
         "then": {"properties": {"coefficients": {"required": ["sections"]}}}},
        {"if": {"properties": {"kind": {"const": "jacobi"}}},
         "then": {"properties": {"coefficients": {"required": ["pi", "R"]}}}},
        {"if": {"properties": {"kind": {"const": "raw_algebroid"}}},
         "then": {"properties": {"coefficients":
                                 {"required": ["rank", "anchor", "c"]}}}},
    ],
}


# ---------------------------------------------------------------------------
# Config loading


def load_config(path):
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config schema violation: {exc.message}") from exc
    return raw


def _xs(n):
    return [f"x{i+1}" for i in range(n)]


def _parse_form(mapping, n, degree, what):
    comps = {}
    xs = _xs(n)
    for key, src in mapping.items():
        idx = tuple(int(ch) - 1 for ch in key)
        if len(idx) != degree or sorted(set(idx)) != list(idx) or max(idx) >= n:
            raise ConfigError(f"{what}: bad multi-index {key!r} for degree "
                              f"{degree} in dimension {n}")
        comps[idx] = ex.parse(src, xs)
    return comps


def _parse_matrix(rows, n_rows, n_cols, n_vars, what):
    if len(rows) != n_rows or any(len(r) != n_cols for r in rows):
        raise ConfigError(f"{what}: expected a {n_rows} x {n_cols} matrix")
    xs = _xs(n_vars)
    return [[ex.parse(e, xs) for e in row] for row in rows]


def build_numerics(raw):
    nm = raw.get("numerics", {})
    return Numerics(
        n_quad=nm.get("quad_nodes", 64),
        mu_steps=nm.get("mu_steps", 32),
        samples=nm.get("samples", 100),
        seed=nm.get("seed", 20240),
        quad_kind=nm.get("quad_kind", "simpson"),
        mult_pairs=nm.get("mult_pairs", 25),
        assoc_triples=nm.get("assoc_triples", 10),
        tolerances=nm.get("tolerances", {}),
    )


def _bivector(raw, n):
    pi_map = raw["coefficients"].get("pi", {})
    return ex.BivectorField(n, _parse_form(pi_map, n, 2, "pi"), _xs(n))


def _chart_box(raw):
    chart = raw["chart"]
    n = chart["dim"]
    box = np.asarray(chart["box"], dtype=np.float64)
    if box.shape != (n, 2):
        raise ConfigError("chart.box must list one [lo, hi] pair per dimension")
    if np.any(box[:, 0] >= box[:, 1]):
        raise ConfigError("chart.box intervals must be nonempty")
    return n, box


def _raw_algebroid_chart(raw, n, box):
    co = raw["coefficients"]
    r = co["rank"]
    anchor_rows = _parse_matrix(co["anchor"], n, r, n, "anchor")
    c_raw = co["c"]
    if len(c_raw) != r or any(len(row) != r for row in c_raw) or \
            any(len(cell) != r for row in c_raw for cell in row):
        raise ConfigError("c must be an r x r x r array of expressions")
    xs = _xs(n)
    table = [[[ex.parse(c_raw[i][j][k], xs) for k in range(r)]
              for j in range(r)] for i in range(r)]
    return AlgebroidChart(n=n, r=r, box=box, anchor=anchor_rows,
                          structure=SymbolicStructure(n, r, table),
                          label="raw")


def build_scenario(raw):
    """Construct the scenario object and its report from a validated config."""
    kind = raw["kind"]
    n, box = _chart_box(raw)
    nm = build_numerics(raw)
    co = raw["coefficients"]
    xs = _xs(n)
    if kind == "poisson":
        christoffel = None
        if "christoffel" in co:
            r = n
            christoffel = [[[ex.parse(co["christoffel"][k][i][j], xs)
                             for j in range(r)] for i in range(n)]
                           for k in range(r)]
        scen = build_symplectic_groupoid(_bivector(raw, n), box, numerics=nm,
                                         christoffel=christoffel)
        return scen, scen.report
    if kind == "nijenhuis":
        lmat = _parse_matrix(co["l"], n, n, n, "l")
        scen, pair, evL1, evL2 = build_nijenhuis(_bivector(raw, n), lmat, box,
                                                 numerics=nm)
        return scen, scen.report
    if kind == "gcs":
        lmat = _parse_matrix(co["l"], n, n, n, "l")
        varpi = ex.FormField(tuple(xs), 2, _parse_form(co["varpi"], n, 2, "varpi"))
        report, scen = gcs_identity_check(_bivector(raw, n), lmat, varpi, box,
                                          numerics=nm)
        return scen, report
    if kind == "dirac":
        sections = []
        for sec in co["sections"]:
            if len(sec["v"]) != n or len(sec["alpha"]) != n:
                raise ConfigError("each section needs n vector and n covector "
                                  "components")
            sections.append(([ex.parse(e, xs) for e in sec["v"]],
                             [ex.parse(e, xs) for e in sec["alpha"]]))
        H = ex.FormField(tuple(xs), 3, _parse_form(co.get("H", {}), n, 3, "H"))
        scen = build_dirac(sections, H, box, numerics=nm)
        return scen, scen.report
    if kind == "jacobi":
        R = [ex.parse(e, xs) for e in co["R"]]
        if len(R) != n:
            raise ConfigError("R needs one component per dimension")
        scen = build_jacobi(_bivector(raw, n), R, box, numerics=nm)
        return scen, scen.report
    if kind == "raw_algebroid":
        A = _raw_algebroid_chart(raw, n, box)
        report = CheckReport(environment={"kind": kind, "seed": nm.seed,
                                          "n_quad": nm.n_quad})
        report.merge(check_algebroid(A, samples=min(100, nm.samples),
                                     seed=nm.seed + 1), prefix="algebroid_")
        V = default_spray(A)
        report.merge(check_spray(V, A, seed=nm.seed + 2), prefix="spray_")
        G = SprayGroupoid(A, V, n_quad=nm.n_quad, quad_kind=nm.quad_kind)
        discover_validity_box(G, seed=nm.seed + 3)
        report.environment["validity_box"] = G.validity_box().tolist()
        scen = _RawScenario(A, G, nm)
        return scen, report
    raise ConfigError(f"unknown kind {kind!r}")


class _RawScenario:
    def __init__(self, chart, groupoid, numerics):
        self.chart = chart
        self.groupoid = groupoid
        self.numerics = numerics
        self.evaluator = None


# ---------------------------------------------------------------------------
# Output writers


def write_report(report, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(report.to_json() + "\n")


def residuals_csv_text(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["check", "residual", "tolerance", "verdict"])
    for c in report.checks:
        writer.writerow([c.name, format(c.residual, ".17g"),
                         format(c.tolerance, ".17g"),
                         "pass" if c.passed else "fail"])
    return buf.getvalue()


def write_csv(text, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_check(args):
    raw = load_config(args.config)
    if args.seed is not None:
        raw.setdefault("numerics", {})["seed"] = args.seed
    scen, report = build_scenario(raw)
    report.environment.setdefault("threads", args.threads)
    outputs = raw.get("outputs", {})
    out_dir = Path(args.out_dir) if args.out_dir else Path(".")
    report_path = out_dir / outputs.get("report", "report.json")
    csv_path = out_dir / outputs.get("csv", "residuals.csv")
    write_report(report, report_path)
    write_csv(residuals_csv_text(report), csv_path)
    for line in report.summary_lines():
        print(line)
    print(f"report: {report_path}")
    print(f"residuals: {csv_path}")
    return 0 if report.all_passed else 1


def cmd_convergence(args):
    raw = load_config(args.config)
    if args.seed is not None:
        raw.setdefault("numerics", {})["seed"] = args.seed
    kind = raw["kind"]
    n, box = _chart_box(raw)
    nm = build_numerics(raw)
    levels = []
    for part in args.ladder.split(","):
        nq, _, ss = part.partition("x")
        levels.append((int(nq), int(ss) if ss else 1))

    if kind in ("poisson", "nijenhuis", "gcs"):
        pi = _bivector(raw, n)
        A = cotangent_algebroid(pi, box)
        V = default_spray(A)
        lf = linear_form(poisson_im_pair(A))
        cocycle = None
    elif kind == "jacobi":
        from .algebroid import jacobi_algebroid
        pi = _bivector(raw, n)
        R = [ex.parse(e, _xs(n)) for e in raw["coefficients"]["R"]]
        A = jacobi_algebroid(pi, R, box, seed=nm.seed)
        V = default_spray(A)
        lf = jacobi_linear_form(A)
        cocycle = jacobi_cocycle(A)
    else:
        raise ConfigError(f"convergence ladder not supported for kind {kind!r}")

    G0 = SprayGroupoid(A, V, n_quad=levels[0][0])
    discover_validity_box(G0, seed=nm.seed + 3)
    pts = G0.sample_validity_points(min(10, nm.samples), nm.seed + 4)
    rows, order = convergence_study(A, V, lf, pts, levels=levels,
                                    weight_cocycle=cocycle)

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["n_quad", "substeps", "h", "error", "fitted_order"])
    for r in rows:
        writer.writerow([r["n_quad"], r["substeps"], format(r["h"], ".17g"),
                         format(r["error"], ".17g"), format(order, ".6g")])
    text = buf.getvalue()
    out_dir = Path(args.out_dir) if args.out_dir else Path(".")
    csv_path = out_dir / raw.get("outputs", {}).get("convergence_csv",
                                                    "convergence.csv")
    write_csv(text, csv_path)
    print(text, end="")
    print(f"fitted order: {order:.4f}")
    print(f"table: {csv_path}")
    return 0 if (order >= 3.5 or order == float("inf")) else 1


def _parse_vector(text, expected=None):
    vals = np.array([float(t) for t in text.split(",") if t.strip() != ""])
    if expected is not None and len(vals) != expected:
        raise ConfigError(f"expected {expected} components, got {len(vals)}")
    return vals


def cmd_eval(args):
    raw = load_config(args.config)
    if args.seed is not None:
        raw.setdefault("numerics", {})["seed"] = args.seed
    scen, report = build_scenario(raw)
    if scen is None:
        raise ConfigError("prechecks failed; nothing to evaluate "
                          f"(worst: {report.worst().name})")
    G = scen.groupoid
    ev = scen.evaluator
    out = {"schema_version": SCHEMA_VERSION}
    point = _parse_vector(args.point, G.dim)
    if ev is not None:
        W = ev.omega_at(point)
        keys = ["".join(str(i + 1) for i in I)
                for I in index_list(G.dim, ev.degree)]
        out["omega"] = dict(zip(keys, [float(v) for v in W.comps]))
        dW = ev.domega_at(point)
        dkeys = ["".join(str(i + 1) for i in I)
                 for I in index_list(G.dim, ev.degree + 1)]
        out["domega"] = dict(zip(dkeys, [float(v) for v in dW.comps]))
        if args.vectors:
            vecs = [_parse_vector(v, G.dim) for v in args.vectors.split(";")]
            if len(vecs) != ev.degree:
                raise ConfigError(f"omega takes {ev.degree} vectors")
            out["omega_on_vectors"] = float(W(*vecs))
        if ev.degree == 2:
            try:
                out["Pi"] = ev.inverse_matrices(point[None, :])[0].tolist()
            except SprayformError:
                out["Pi"] = None
        if args.pair and raw["kind"] in ("poisson", "nijenhuis", "gcs"):
            a_txt, _, b_txt = args.pair.partition("|")
            a = _parse_vector(a_txt, G.dim)
            b = _parse_vector(b_txt, G.dim)
            nm = scen.numerics
            out["mu"] = multiply_poisson(G, ev, a, b,
                                         n_steps=nm.mu_steps).tolist()
    if raw["kind"] == "jacobi":
        out["cocycle"] = float(integrate_cocycle(
            G, jacobi_cocycle(scen.chart), point[None, :])[0])
    print(json.dumps(out, indent=2))
    return 0


def cmd_schema(args):
    print(json.dumps(CONFIG_SCHEMA, indent=2))
    return 0


# ---------------------------------------------------------------------------


def make_parser():
    p = argparse.ArgumentParser(
        prog="sprayform",
        description="construct local Lie groupoids from algebroid sprays and "
                    "verify multiplicative-form identities")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="problem config JSON")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent checks")
        sp.add_argument("--out-dir", default=None,
                        help="directory for report files")

    sp = sub.add_parser("check", help="run the configured checks")
    common(sp)
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("convergence", help="resolution ladder study")
    common(sp)
    sp.add_argument("--ladder", default="16,32,64,128",
                    help="comma-separated n_quad values; use NxM for M "
                         "flow substeps per node gap")
    sp.set_defaults(fn=cmd_convergence)

    sp = sub.add_parser("eval", help="evaluate forms at a point")
    common(sp)
    sp.add_argument("--point", required=True,
                    help="total-space point, comma separated")
    sp.add_argument("--vectors", default=None,
                    help="semicolon-separated tangent vectors")
    sp.add_argument("--pair", default=None,
                    help="composable pair 'a|b' for the product")
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("schema", help="print the config JSON schema")
    sp.set_defaults(fn=cmd_schema)
    return p


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ExprError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SprayformError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
