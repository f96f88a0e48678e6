"""Command-line front end: parameter sweeps and CSV/JSONL emission.

Each command wraps one computation family and writes deterministic tabular
output (CSV with a stable header, or JSONL for stochastic estimates with
the seed embedded).  A JSON config file supplies any of the command's
options; explicit flags win over the config.  ``--check`` runs the
command's internal oracle comparison and prints the discrepancy instead of
writing files.

Exit codes: 0 success, 2 validation error (bad flags, config keys, paths),
3 numerical failure.
"""

from __future__ import annotations

import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import click
import numpy as np

from . import analytic, applications, mat2, pdmp, switched
from .core import GrowthReport

_NUMERICAL_ERRORS = (
    pdmp.QuadratureError,
    switched.ConvergenceError,
    switched.StepSizeCollapseError,
    mat2.ComplexSpectrumError,
    ArithmeticError,
)


def _merge_config(ctx: click.Context, config_path: str | None) -> dict:
    """Config values fill parameters the command line left at their default;
    unknown keys are rejected before any computation runs."""
    params = dict(ctx.params)
    params.pop("config", None)
    if not config_path:
        return params
    try:
        with open(config_path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise click.UsageError(f"cannot read config {config_path}: {exc}")
    except json.JSONDecodeError as exc:
        raise click.UsageError(f"config {config_path} is not valid JSON: {exc}")
    unknown = set(data) - set(params)
    if unknown:
        raise click.UsageError(f"unknown config fields: {sorted(unknown)}")
    for key, value in data.items():
        src = ctx.get_parameter_source(key)
        if src is not None and src.name != "COMMANDLINE":
            params[key] = tuple(value) if isinstance(value, list) else value
    return params


def _write_rows(out: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    try:
        with open(out, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(c) for c in row) + "\n")
    except OSError as exc:
        raise click.UsageError(f"cannot write {out}: {exc}")


def _fmt(cell) -> str:
    if isinstance(cell, float):
        return f"{cell:.17g}"
    return str(cell)


def _write_jsonl(out: str, records: Iterable[dict]) -> None:
    try:
        with open(out, "w") as fh:
            for rec in records:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    except OSError as exc:
        raise click.UsageError(f"cannot write {out}: {exc}")


def _pmap(fn: Callable, items: Sequence, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _run(body: Callable[[], int | None]) -> None:
    try:
        code = body()
    except click.UsageError:
        raise
    except ValueError as exc:
        click.echo(f"validation error: {exc}", err=True)
        sys.exit(2)
    except _NUMERICAL_ERRORS as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        sys.exit(3)
    sys.exit(code or 0)


@click.group()
def main() -> None:
    """Growth exponents of two-patch switched populations."""


_common = [
    click.option("--config", type=click.Path(), default=None, help="JSON config file."),
    click.option("--out", type=click.Path(), default=None, help="Output path."),
    click.option("--seed", type=int, default=0, show_default=True),
    click.option("--jobs", type=int, default=1, show_default=True),
    click.option("--check", is_flag=True, help="Run the internal oracle check only."),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


def _require_out(params: dict) -> str:
    if not params.get("out"):
        raise click.UsageError("--out is required unless --check is given")
    return params["out"]


# ---------------------------------------------------------------------------


def _surface_chunk(args) -> np.ndarray:
    epsilon, m_vals, T_vals, nodes = args
    mg, Tg = np.meshgrid(m_vals, T_vals, indexing="ij")
    closed = np.asarray(analytic.delta_closed(epsilon, mg.ravel(), Tg.ravel()))
    spectral = np.array(
        [mat2.delta_spectral(epsilon, m, T) for m, T in zip(mg.ravel(), Tg.ravel())]
    )
    quadr = switched.delta_quadrature_grid(epsilon, mg.ravel(), Tg.ravel(), nodes)
    return np.column_stack([mg.ravel(), Tg.ravel(), closed, spectral, quadr])


@main.command("delta-surface")
@_with_common
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--m-min", type=float, default=0.0, show_default=True)
@click.option("--m-max", type=float, default=4.0, show_default=True)
@click.option("--m-steps", type=int, default=40, show_default=True)
@click.option("--t-min", type=float, default=0.1, show_default=True)
@click.option("--t-max", type=float, default=20.0, show_default=True)
@click.option("--t-steps", type=int, default=40, show_default=True)
@click.option("--nodes", type=int, default=64, show_default=True)
@click.pass_context
def cmd_delta_surface(ctx: click.Context, **_kw) -> None:
    """Growth-exponent surface over (m, T) by three independent routes."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        if p["m_steps"] < 1 or p["t_steps"] < 1:
            raise ValueError("grids must be nonempty")
        m_vals = np.linspace(p["m_min"], p["m_max"], p["m_steps"])
        T_vals = np.linspace(p["t_min"], p["t_max"], p["t_steps"])
        chunks = max(1, min(p["jobs"], len(m_vals)))
        m_parts = np.array_split(m_vals, chunks)
        blocks = _pmap(
            _surface_chunk,
            [(p["epsilon"], part, T_vals, p["nodes"]) for part in m_parts],
            p["jobs"],
        )
        table = np.vstack(blocks)
        disc = np.maximum(
            np.abs(table[:, 2] - table[:, 3]), np.abs(table[:, 2] - table[:, 4])
        )
        if p["check"]:
            click.echo(f"max |closed - spectral|   = {np.max(np.abs(table[:,2]-table[:,3])):.3e}")
            click.echo(f"max |closed - quadrature| = {np.max(np.abs(table[:,2]-table[:,4])):.3e}")
            return 0
        out = _require_out(p)
        _write_rows(
            out,
            ["m", "T", "delta_closed", "delta_spectral", "delta_quadrature", "max_discrepancy"],
            np.column_stack([table, disc]),
        )
        return 0

    _run(body)


def _threshold_row(args) -> tuple:
    epsilon, T = args
    asym = math.exp(-(1.0 - epsilon) * T)
    try:
        res = analytic.threshold_m_star(epsilon, T)
    except analytic.NoRootError:
        return (T, math.nan, asym, math.nan, "no_root")
    return (T, res.m_star, res.asymptote, res.m_star / res.asymptote, "ok")


@main.command("threshold")
@_with_common
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--t", "t_values", type=float, multiple=True, default=(5.0, 10.0, 20.0, 40.0, 80.0),
              show_default=True, help="Half-period grid (repeatable).")
@click.pass_context
def cmd_threshold(ctx: click.Context, **_kw) -> None:
    """Smallest dispersal with positive growth versus its large-T predictor."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        if not p["t_values"]:
            raise ValueError("need at least one --t value")
        rows = _pmap(_threshold_row, [(p["epsilon"], T) for T in p["t_values"]], p["jobs"])
        if p["check"]:
            worst = 0.0
            for T, m_star, _, _, status in rows:
                if status == "ok":
                    worst = max(worst, abs(float(analytic.delta_closed(p["epsilon"], m_star, T))))
            click.echo(f"max |delta at root| = {worst:.3e}")
            return 0
        _write_rows(_require_out(p), ["T", "m_star", "asymptote", "ratio", "status"], rows)
        return 0

    _run(body)


@main.command("pdmp")
@_with_common
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--m", type=float, default=0.2, show_default=True)
@click.option("--rate", type=float, default=0.4, show_default=True)
@click.option("--horizon", type=float, default=1e5, show_default=True)
@click.pass_context
def cmd_pdmp(ctx: click.Context, **_kw) -> None:
    """Growth exponent under exponential switching, three ways."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        _, mc = pdmp.simulate_pdmp(p["epsilon"], p["m"], p["rate"], p["horizon"], p["seed"])
        lam = pdmp.lyapunov_polar(p["epsilon"], p["m"], p["rate"], p["horizon"], p["seed"])
        quad = pdmp.delta_pdmp_quadrature(p["epsilon"], p["m"], 1.0 / p["rate"])
        if p["check"]:
            se = math.hypot(mc.stderr, 2.0 * lam.stderr)
            click.echo(f"|u_slope - quadrature|      = {abs(mc.value - quad.value):.3e} (se {mc.stderr:.1e})")
            click.echo(f"|2*lyapunov - quadrature|   = {abs(2*lam.value - quad.value):.3e} (se {2*lam.stderr:.1e})")
            click.echo(f"|u_slope - 2*lyapunov|      = {abs(mc.value - 2*lam.value):.3e} (se {se:.1e})")
            return 0
        records = [
            {"label": "u_slope", **mc.to_dict()},
            {"label": "polar_lyapunov", **lam.to_dict()},
            {"label": "density_quadrature", **quad.to_dict()},
        ]
        _write_jsonl(_require_out(p), records)
        return 0

    _run(body)


def _density_grid(dens: pdmp.InvariantDensity, mid_points: int) -> np.ndarray:
    """Interior grid for pointwise density export.

    When the ends are singular the grid continues geometrically toward each
    endpoint down to the last double-precision point below it, so a plain
    trapezoid over the emitted rows closes the unit mass as tightly as a
    pointwise v-column allows (the sliver between the deepest representable
    point and the endpoint carries ~1e-4 of mass for strongly singular
    tails; that floor is not reachable by any finite grid).
    """
    vp = dens.v_plus
    edge = 0.3 * vp
    mid = np.linspace(-vp + edge, vp - edge, mid_points)
    d_min = 2.0 * np.spacing(vp)
    gamma = 3.0e-3
    n_geo = int(math.log(edge / d_min) / gamma) + 2
    geo = vp - edge * np.exp(-gamma * np.arange(n_geo))
    geo = geo[geo < vp]
    pieces = [-geo[::-1], mid, geo]
    if dens.tail_exponent >= 0.0:
        pieces = [np.array([-vp]), *pieces, np.array([vp])]
    return np.unique(np.concatenate(pieces))


@main.command("density")
@_with_common
@click.option("--m", type=float, default=0.2, show_default=True)
@click.option("--t", "t_value", type=float, default=2.5, show_default=True)
@click.option("--points", type=int, default=2001, show_default=True,
              help="Interior grid size (endpoint tails are added automatically).")
@click.pass_context
def cmd_density(ctx: click.Context, **_kw) -> None:
    """Stationary density of the log ratio: v, rho_plus, rho_minus, rho."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        dens = pdmp.invariant_density(p["m"], p["t_value"])
        grid = _density_grid(dens, p["points"])
        plus, minus = dens.rho_parts(grid)
        total = plus + minus
        if p["check"]:
            closure = np.trapezoid(total[np.isfinite(total)], grid[np.isfinite(total)])
            click.echo(f"|trapezoid closure - 1| = {abs(closure - 1.0):.3e}")
            return 0
        _write_rows(
            _require_out(p),
            ["v", "rho_plus", "rho_minus", "rho"],
            np.column_stack([grid, plus, minus, total]),
        )
        return 0

    _run(body)


@main.command("sape")
@_with_common
@click.option("--epsilon", type=float, default=0.5, show_default=True)
@click.option("--m", type=float, default=0.2, show_default=True)
@click.option("--t", "t_value", type=float, default=4.0, show_default=True)
@click.option("--eta", "etas", type=float, multiple=True, default=(0.4, 0.2, 0.1, 0.05),
              show_default=True, help="Sojourn half-widths (repeatable).")
@click.option("--horizon", type=float, default=2e5, show_default=True)
@click.pass_context
def cmd_sape(ctx: click.Context, **_kw) -> None:
    """Near-periodic renewal switching: estimates approaching the closed form."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        if not p["etas"]:
            raise ValueError("need at least one --eta")
        target = float(analytic.delta_closed(p["epsilon"], p["m"], p["t_value"]))
        reports = _pmap(
            _sape_point,
            [(p["epsilon"], p["m"], p["t_value"], eta, p["horizon"], p["seed"]) for eta in p["etas"]],
            p["jobs"],
        )
        if p["check"]:
            r0 = pdmp.simulate_sape(p["epsilon"], p["m"], p["t_value"], 0.0, p["horizon"], p["seed"])
            click.echo(f"|estimate(eta=0) - closed form| = {abs(r0.value - target):.3e}")
            return 0
        records = [
            {"label": f"eta={eta}", "eta": eta, "closed_form": target, **rep.to_dict()}
            for eta, rep in zip(p["etas"], reports)
        ]
        _write_jsonl(_require_out(p), records)
        return 0

    _run(body)


def _sape_point(args) -> GrowthReport:
    epsilon, m, T, eta, horizon, seed = args
    return pdmp.simulate_sape(epsilon, m, T, eta, horizon, seed)


@main.command("persistence")
@_with_common
@click.option("--epsilon", type=float, default=0.1, show_default=True)
@click.option("--alpha", type=float, default=0.1, show_default=True)
@click.option("--t", "t_value", type=float, default=5.0, show_default=True)
@click.option("--m-min", type=float, default=1e-5, show_default=True)
@click.option("--m-max", type=float, default=15.0, show_default=True)
@click.option("--m-points", type=int, default=15, show_default=True)
@click.option("--periods", type=float, default=1000.0, show_default=True)
@click.option("--dt", type=float, default=0.05, show_default=True)
@click.pass_context
def cmd_persistence(ctx: click.Context, **_kw) -> None:
    """Extinction/persistence sweep against the growth-exponent sign."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        if p["m_points"] < 1:
            raise ValueError("m grid must be nonempty")
        m_vals = np.logspace(math.log10(p["m_min"]), math.log10(p["m_max"]), p["m_points"])
        horizon = p["periods"] * 2.0 * p["t_value"]
        points = applications.persistence_sweep(
            p["epsilon"], p["alpha"], m_vals, p["t_value"], horizon, p["dt"]
        )
        if p["check"]:
            interior = sum(
                1
                for a, b in zip(points[:-1], points[1:])
                if a.verdict != a.predicted and a.predicted == b.predicted
            )
            click.echo(f"off-boundary mismatches = {interior}")
            return 0
        rows = [
            (pt.m, pt.verdict.value, int(np.sign(pt.delta)))
            for pt in points
        ]
        _write_rows(_require_out(p), ["m", "verdict", "delta_sign"], rows)
        return 0

    _run(body)


@main.command("sir")
@_with_common
@click.option("--m-min", type=float, default=0.0, show_default=True)
@click.option("--m-max", type=float, default=0.5, show_default=True)
@click.option("--m-points", type=int, default=11, show_default=True)
@click.option("--horizon-days", type=float, default=1500.0, show_default=True)
@click.option("--dt", type=float, default=0.1, show_default=True)
@click.option("--traj-m", type=float, default=0.005, show_default=True,
              help="Migration level for the exported trajectory.")
@click.option("--traj-out", type=click.Path(), default=None,
              help="Trajectory CSV path (default: <out>.traj.csv).")
@click.pass_context
def cmd_sir(ctx: click.Context, **_kw) -> None:
    """Two-patch epidemic: cumulative-cases sweep plus one trajectory."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        holt = applications.HoltParams()
        if p["check"]:
            no_removal = applications.HoltParams(mu=0.0)
            res = applications.simulate_sir(no_removal, m=0.1, horizon_days=200.0, dt=0.05)
            drift = abs(
                (res.trajectory.states[-1].sum() + sum(res.cumulative_removals))
                - res.trajectory.states[0].sum()
            )
            click.echo(f"conservation drift (mu=0) = {drift:.3e}")
            return 0
        out = _require_out(p)
        if p["m_points"] < 1:
            raise ValueError("m grid must be nonempty")
        m_vals = np.linspace(p["m_min"], p["m_max"], p["m_points"])
        sweep = applications.cumulative_cases_sweep(
            holt, m_vals, p["horizon_days"], p["dt"]
        )
        _write_rows(out, ["m", "cumulative_cases"], sweep)
        res = applications.simulate_sir(holt, m=p["traj_m"], horizon_days=p["horizon_days"], dt=p["dt"])
        traj_out = p.get("traj_out") or out + ".traj.csv"
        try:
            with open(traj_out, "w") as fh:
                res.trajectory.to_csv(fh)
        except OSError as exc:
            raise click.UsageError(f"cannot write {traj_out}: {exc}")
        return 0

    _run(body)


@main.command("orbit")
@_with_common
@click.option("--m", type=float, default=0.2, show_default=True)
@click.option("--t", "t_value", type=float, default=10.0, show_default=True)
@click.option("--points", type=int, default=801, show_default=True)
@click.pass_context
def cmd_orbit(ctx: click.Context, **_kw) -> None:
    """Sample the attracting periodic log-ratio orbit over one period."""

    def body() -> int:
        p = _merge_config(ctx, ctx.params.get("config"))
        m, T = p["m"], p["t_value"]
        orbit = switched.periodic_orbit(m, T)
        if p["check"]:
            click.echo(f"|closed-form amplitude - fixed point| = {abs(analytic.p_plus(m, T) - orbit.p_plus):.3e}")
            return 0
        n = p["points"]
        t_up = np.linspace(0.0, T, n // 2, endpoint=False)
        t_dn = np.linspace(0.0, T, n - n // 2)
        v_up = switched.flow_exact(orbit.v_e, +1, m, t_up)
        v_dn = switched.flow_exact(orbit.p_plus, -1, m, t_dn)
        t_all = np.concatenate([t_up, T + t_dn])
        v_all = np.concatenate([np.atleast_1d(v_up), np.atleast_1d(v_dn)])
        u_all = np.where(t_all < T, 1, -1)
        _write_rows(_require_out(p), ["t", "V", "u"], np.column_stack([t_all, v_all, u_all]))
        return 0

    _run(body)


if __name__ == "__main__":
    main()
