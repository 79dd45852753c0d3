"""Command-line entry point: ``freeprodlab <group> <command>``.

Matrices in JSON inputs are lists of rows; an entry is a number or ``[re, im]``.
Complex outputs are written as ``[re, im]``.
"""

from __future__ import annotations

import csv
import io
import json
import re
import sys
from pathlib import Path

import click
import numpy as np

from . import experiments as ex
from . import pimsner as pm
from .cpmaps import MatrixAlgebra, UCPMap, extend_state_preserving, extension_report, linear_extension
from .fock import FockSpace, creation, semicircle_moments
from .freeprod import (ExactnessScenario, compression_pi, eval_in_free_product, lift_left_operator,
                       vector_state)
from .hilbert import build_free_product_space, pointed_from_json
from .ncpoly import NCPoly, eval_poly
from .norms import op_norm


def to_matrix(obj) -> np.ndarray:
    def entry(z):
        return complex(*z) if isinstance(z, (list, tuple)) else complex(z)

    return np.array([[entry(z) for z in row] for row in obj], dtype=complex)


def to_vector(obj) -> np.ndarray:
    return np.array([complex(*z) if isinstance(z, (list, tuple)) else complex(z) for z in obj])


def matrix_json(M) -> list:
    M = M.toarray() if hasattr(M, "toarray") else np.asarray(M)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def _load(path) -> dict:
    return json.loads(Path(path).read_text()) if path else {}


def _rows_csv(rows) -> str:
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (ex.dumps(v) if isinstance(v, (list, dict, complex)) else v) for k, v in r.items()})
    return buf.getvalue()


def emit(ctx: click.Context, report, rows=None) -> None:
    """Write ``report`` as JSON (or ``rows`` as CSV when ``--out`` ends in .csv)."""
    out = ctx.obj["out"]
    if out and out.endswith(".csv"):
        text = _rows_csv(rows if rows is not None else [report])
    else:
        text = ex.dumps(report) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        click.echo(text, nl=False)
    plot = ctx.obj["emit_plot"]
    if plot and rows is not None:
        Path(plot).write_text(_rows_csv(rows))


@click.group()
@click.option("--depth", type=int, default=None, help="Truncation depth.")
@click.option("--tol", type=float, default=None, help="Pass/fail tolerance.")
@click.option("--seed", type=int, default=None, help="RNG seed.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="report.json or report.csv")
@click.option("--emit-plot", type=click.Path(dir_okay=False), default=None, help="CSV of per-row data.")
@click.pass_context
def main(ctx, depth, tol, seed, out, emit_plot):
    """Truncated free products, Pimsner spaces and UCP maps."""
    ctx.obj = {"depth": depth, "tol": tol, "seed": seed, "out": out, "emit_plot": emit_plot}


def _override(ctx, cfg: dict, depth_key="depth") -> dict:
    cfg = dict(cfg)
    for key, name in ((depth_key, "depth"), ("tol", "tol"), ("seed", "seed")):
        if ctx.obj[name] is not None:
            cfg[key] = ctx.obj[name]
    return cfg


# freeprod ----------------------------------------------------------------------

def _model(obj: dict, depth: int | None):
    factors = [pointed_from_json(f) for f in obj["factors"]]
    space = build_free_product_space(factors, int(depth if depth is not None else obj.get("depth", 4)))
    return space


@main.group()
def freeprod():
    """Left actions on the truncated free-product space."""


@freeprod.command("lift")
@click.option("--input", "inp", type=click.Path(exists=True), required=True)
@click.pass_context
def freeprod_lift(ctx, inp):
    """Matrix of a factor operator lifted to the free product.

    Input: {"factors": [{"dim", "xi"}...], "depth", "factor": i, "matrix": M}.
    """
    obj = _load(inp)
    space = _model(obj, ctx.obj["depth"])
    T = lift_left_operator(to_matrix(obj["matrix"]), int(obj["factor"]), space)
    emit(ctx, {"dim": space.dim, "depth": space.depth, "matrix": matrix_json(T.matrix)})


@freeprod.command("moment")
@click.option("--input", "inp", type=click.Path(exists=True), required=True)
@click.pass_context
def freeprod_moment(ctx, inp):
    """Free-product state of a polynomial.

    Input: {"factors", "depth", "poly", "assignment": {name: M}, "tags": {tag: i}}.
    """
    obj = _load(inp)
    space = _model(obj, ctx.obj["depth"])
    asg = {k: to_matrix(v) for k, v in obj["assignment"].items()}
    T = eval_in_free_product(NCPoly.parse(obj["poly"]), asg, obj["tags"], space)
    emit(ctx, {"value": complex(vector_state(T)), "depth": space.depth})


def _scenario(obj: dict) -> ExactnessScenario:
    xi1 = to_vector(obj["xi1"]) if "xi1" in obj else None
    xi2 = to_vector(obj["xi2"]) if "xi2" in obj else None
    return ExactnessScenario(int(obj.get("a", 2)), int(obj.get("b", 1)), int(obj.get("dim2", 2)), xi1=xi1, xi2=xi2)


@freeprod.command("compress")
@click.option("--input", "inp", type=click.Path(exists=True), required=True)
@click.pass_context
def freeprod_compress(ctx, inp):
    """Compression of a word onto the quotient free product.

    Input: {"scenario": {a, b, dim2, xi1, xi2}, "depth", "word": [{"factor": 0, "A": .., "B": ..}
    or {"factor": 1, "matrix": ..}]}.
    """
    obj = _load(inp)
    sc = _scenario(obj.get("scenario", {}))
    depth = ctx.obj["depth"] if ctx.obj["depth"] is not None else int(obj.get("depth", 4))
    full = sc.full_space(depth)
    T = None
    for letter in obj["word"]:
        if int(letter["factor"]) == 0:
            M = sc.pi1(to_matrix(letter["A"]), to_matrix(letter["B"]) if sc.b else np.zeros((0, 0)))
        else:
            M = to_matrix(letter["matrix"])
        L = lift_left_operator(M, int(letter["factor"]), full).matrix
        T = L if T is None else T @ L
    emit(ctx, {"depth": depth, "matrix": matrix_json(compression_pi(T, sc, depth))})


# fock --------------------------------------------------------------------------

@main.group()
def fock():
    """Full Fock space and creation operators."""


@fock.command("moments")
@click.option("--k", "k_max", type=int, default=5, show_default=True)
@click.option("--depth", type=int, default=None, help="Fock truncation depth (default 2k).")
@click.pass_context
def fock_moments(ctx, k_max, depth):
    """CSV of even semicircle moments against Catalan numbers."""
    depth = depth if depth is not None else (ctx.obj["depth"] if ctx.obj["depth"] is not None else 2 * k_max)
    rows = semicircle_moments(k_max, depth)
    for r in rows:
        r["depth"] = depth
    text = _rows_csv(rows)
    if ctx.obj["out"]:
        Path(ctx.obj["out"]).write_text(text if ctx.obj["out"].endswith(".csv") else ex.dumps(rows) + "\n")
    else:
        click.echo(text, nl=False)


# pimsner -----------------------------------------------------------------------

PIMSNER_CHECKS = ("sstar_", "expectation_", "gauge_", "fejer_", "sigma_", "commuting_", "pi_prime_")


@main.group()
def pimsner():
    """Pimsner space, gauge action and Fejer sums."""


@pimsner.command("check")
@click.option("--scenario", type=click.Path(exists=True), default=None)
@click.pass_context
def pimsner_check(ctx, scenario):
    """JSON report of the Pimsner-side residuals."""
    cfg = ex.ScenarioConfig.from_json(_override(ctx, _load(scenario)))
    rep = ex.run_exactness_witness(cfg)
    checks = [c for c in rep["checks"] if c["name"].startswith(PIMSNER_CHECKS)]
    failed = [c["name"] for c in checks if not c["passed"]]
    emit(ctx, {"config": rep["config"], "checks": checks, "failed": failed, "passed": not failed}, checks)


def _fejer(ctx, op: str, n: int):
    w = pm.FejerWeights(n)
    rows = w.table()
    report = {"n": n, "table": rows}
    if op:
        cfg = _override(ctx, {"depth": 4})
        sc = ExactnessScenario()
        H1, _, H2 = sc.spaces()
        K = pm.PimsnerSpace([H1, H2], int(cfg["depth"]))
        if op == "S":
            T, expected = K.S, n / (n + 1)
        elif op == "S*":
            T, expected = K.S.conj().T.tocsc(), n / (n + 1)
        else:
            raise click.BadParameter(f"unknown operator {op!r}; use S or S*")
        R = pm.fejer_partial(T, n, K) - expected * T
        report.update({"op": op, "depth": K.depth, "expected_factor": expected,
                       "residual": float(np.max(np.abs(R.data), initial=0.0))})
    emit(ctx, report, rows)


@pimsner.command("fejer")
@click.option("--op", default="S", show_default=True, help="S, S* or empty for the table only.")
@click.option("--n", type=int, default=5, show_default=True)
@click.pass_context
def pimsner_fejer(ctx, op, n):
    """Fejer coefficient table and the band identity residual for S."""
    _fejer(ctx, op, n)


@main.command("fejer")
@click.option("--op", default="S", show_default=True)
@click.option("--n", type=int, default=5, show_default=True)
@click.pass_context
def fejer(ctx, op, n):
    """Alias of ``pimsner fejer``."""
    _fejer(ctx, op, n)


# cpmaps ------------------------------------------------------------------------

@main.group()
def cpmaps():
    """Unital completely positive maps."""


@cpmaps.command("extend")
@click.option("--input", "inp", type=click.Path(exists=True), required=True)
@click.pass_context
def cpmaps_extend(ctx, inp):
    """State-preserving UCP extension from a subalgebra to the full matrix algebra.

    Input: {"basis": [M...], "images": [phi(M)...], "xi": v, "eta": w}.
    """
    obj = _load(inp)
    basis = [to_matrix(b) for b in obj["basis"]]
    images = [to_matrix(b) for b in obj["images"]]
    xi, eta = to_vector(obj["xi"]), to_vector(obj["eta"])
    phi = UCPMap.from_function(linear_extension(basis, images), MatrixAlgebra(basis), images[0].shape[0])
    tol = ctx.obj["tol"] if ctx.obj["tol"] is not None else 1e-9
    psi = extend_state_preserving(phi, xi, eta, tol=tol)
    rng = np.random.default_rng(ctx.obj["seed"] or 0)
    emit(ctx, {"choi": matrix_json(psi.choi), "report": extension_report(phi, psi, xi, eta, rng)})


# experiments -------------------------------------------------------------------

@main.group()
def converge():
    """Norm and moment convergence experiments."""


def _convergence(ctx, runner, config, **defaults):
    obj = {**defaults, **_load(config)}
    cfg = ex.ConvergenceConfig.from_json(_override(ctx, obj))
    rep = runner(cfg)
    emit(ctx, rep, rep["rows"])
    if "passed" in rep and not rep["passed"]:
        sys.exit(1)


@converge.command("t31")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def converge_t31(ctx, config):
    """First factor varying, second fixed."""
    _convergence(ctx, ex.run_theorem31, config)


@converge.command("pisier")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def converge_pisier(ctx, config):
    """Both factors varying."""
    _convergence(ctx, ex.run_pisier_variant, config, polys=list(ex.PISIER_POLYS), depth=4, x_names=["x1"])


@converge.command("moments")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--degree", type=int, default=3, show_default=True)
@click.pass_context
def converge_moments(ctx, config, degree):
    """Moment gaps per k (the state vector leaks into the perturbed block)."""
    obj = {"leak": 1.0, **_load(config)}
    cfg = ex.ConvergenceConfig.from_json(_override(ctx, obj))
    rep = ex.run_moment_convergence(cfg, degree)
    emit(ctx, rep, rep["rows"])


@main.group()
def exactness():
    """Witness battery for the exact-sequence construction."""


@exactness.command("run")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.pass_context
def exactness_run(ctx, config):
    cfg = ex.ScenarioConfig.from_json(_override(ctx, _load(config)))
    rep = ex.run_exactness_witness(cfg)
    emit(ctx, rep, rep["checks"])
    if not rep["passed"]:
        sys.exit(1)


# space / norm ------------------------------------------------------------------

@main.group()
def space():
    """Free-product space utilities."""


@space.command("dump")
@click.option("--input", "inp", type=click.Path(exists=True), default=None,
              help='{"factors": [{"dim", "xi"}...], "depth"}')
@click.option("--dims", default=None, help="Comma-separated factor dimensions, e.g. 2,3.")
@click.pass_context
def space_dump(ctx, inp, dims):
    """Word manifest of a truncated free-product space."""
    if dims:
        obj = {"factors": [{"dim": int(d)} for d in dims.split(",")]}
    elif inp:
        obj = _load(inp)
    else:
        raise click.UsageError("give --input or --dims")
    sp_ = _model(obj, ctx.obj["depth"])
    emit(ctx, {"dim": sp_.dim, "depth": sp_.depth, "words": sp_.manifest()}, sp_.manifest())


_FOCK = re.compile(r"^fock:(\d+):(\d+)$")


@main.command("norm")
@click.option("--poly", required=True, help="Polynomial, e.g. \"a1+a1'\".")
@click.option("--space", "space_spec", required=True,
              help="fock:N:D (generator <name>i is the creation operator i) or a JSON model file.")
@click.option("--method", default="auto", show_default=True)
@click.pass_context
def norm(ctx, poly, space_spec, method):
    """Operator norm of a polynomial as a NormResult JSON."""
    p = NCPoly.parse(poly)
    tol = ctx.obj["tol"] if ctx.obj["tol"] is not None else 1e-9
    m = _FOCK.match(space_spec)
    if m:
        n, depth = int(m.group(1)), int(m.group(2))
        F = FockSpace(n, depth)
        asg = {}
        for name in p.symbols():
            idx = re.search(r"(\d+)$", name)
            if not idx or not 1 <= int(idx.group(1)) <= n:
                raise click.BadParameter(f"generator {name!r} must end in an index 1..{n}")
            asg[name] = creation(F, int(idx.group(1)) - 1)
        T = eval_poly(p, asg)
        res = op_norm(T, tol=tol, method=method)
        emit(ctx, {**res.to_json(), "space": space_spec, "dim": F.dim})
        return
    obj = _load(space_spec)
    fp = _model(obj, ctx.obj["depth"])
    asg = {k: to_matrix(v) for k, v in obj["assignment"].items()}
    T = eval_in_free_product(p, asg, obj["tags"], fp)
    res = op_norm(T, tol=tol, method=method)
    emit(ctx, {**res.to_json(), "space": space_spec, "dim": fp.dim, "depth": fp.depth})


if __name__ == "__main__":
    main()
