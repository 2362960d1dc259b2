"""Command-line entry point: ``camg <subcommand> [options]``.

Every subcommand writes plot-ready data (JSON by default, CSV on request) to
``--out`` or stdout, and a one-line human summary to stderr. Exit codes:
0 success, 2 validation failure or episode cap hit, 3 protocol deviation.
"""

from __future__ import annotations

import csv
import io
import json
import sys
from functools import wraps

import click

from camg.asymptotics import LN2, alpha_closed_form, g_tilde_numeric, oscillation_profile
from camg.exact import ExactTimeTable, linear_fit
from camg.model import GameConfig
from camg.protocol import ProtocolDeviation
from camg.sim import (
    TRIGGERS,
    EpisodeCapExceeded,
    run_baseline,
    run_monte_carlo,
    validate_cyclic,
)

EXIT_VALIDATION = 2
EXIT_DEVIATION = 3

_format_opt = click.option(
    "--format", "fmt", type=click.Choice(["json", "csv"]), default="json", show_default=True
)
_out_opt = click.option(
    "--out", type=click.Path(dir_okay=False, writable=True), default=None, help="Write here instead of stdout."
)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        click.echo(text, nl=not text.endswith("\n"))
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _csv(header: list[str], rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _note(msg: str) -> None:
    click.echo(msg, err=True)


def _exit_codes(fn):
    """Map domain failures onto the documented exit codes."""

    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ProtocolDeviation as exc:
            _note(f"protocol deviation: {exc}")
            sys.exit(EXIT_DEVIATION)
        except (EpisodeCapExceeded, ValueError) as exc:
            _note(f"error: {exc}")
            sys.exit(EXIT_VALIDATION)

    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main() -> None:
    """Coordination protocol for the co-action minority game."""


@main.command()
@click.option("--n-max", type=int, default=30, show_default=True, help="Largest set size in the table.")
@click.option("--fit-min", type=int, default=None, help="First n of the least-squares fit [default: 1].")
@click.option("--fit-max", type=int, default=None, help="Last n of the fit [default: min(30, n-max)].")
@_format_opt
@_out_opt
@_exit_codes
def exact(n_max, fit_min, fit_max, fmt, out):
    """Exact expected stage-two times T_n and their linear fit."""
    if n_max < 0:
        raise ValueError("--n-max must be non-negative")
    table = ExactTimeTable.build(n_max)
    explicit = fit_min is not None or fit_max is not None
    lo = 1 if fit_min is None else fit_min
    hi = min(30, n_max) if fit_max is None else fit_max
    fit = tail = None
    if hi - lo + 1 >= 2 and 0 <= lo and hi <= n_max:
        slope, intercept = linear_fit(table, lo, hi)
        fit = {"n_min": lo, "n_max": hi, "slope": slope, "intercept": intercept}
    elif explicit:
        raise ValueError(f"invalid fit range {lo}..{hi} for n-max {n_max}")
    else:
        _note(f"fit skipped: need n-max >= 2 (got {n_max})")
    if n_max >= 40:
        t_lo = max(2, (3 * n_max) // 4)
        slope, intercept = linear_fit(table, t_lo, n_max)
        tail = {"n_min": t_lo, "n_max": n_max, "slope": slope, "intercept": intercept}

    if fmt == "csv":
        _emit(table.to_csv(), out)
    else:
        rows = [
            {"n": n, "numerator": t.numerator, "denominator": t.denominator, "value": float(t)}
            for n, t in enumerate(table.values)
        ]
        _emit(_json({"table": rows, "fit": fit, "tail_fit": tail, "one_over_ln2": 1 / LN2}), out)
    if fit:
        _note(f"fit n={lo}..{hi}: slope {fit['slope']:.6f}, intercept {fit['intercept']:.6f}")
    if tail:
        _note(f"tail fit n={tail['n_min']}..{n_max}: slope {tail['slope']:.6f} (1/ln 2 = {1 / LN2:.6f})")


@main.command()
@click.option("--N", "n_big", type=click.IntRange(min=1), required=True, help="Half-size: 2N+1 agents.")
@click.option("--trials", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--seed", type=click.IntRange(min=0, max=(1 << 64) - 1), default=0, show_default=True)
@click.option("--engine", "engine_name", type=click.Choice(["fast", "reference"]), default="fast", show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--subsets", is_flag=True, help="Also report per-set-size split durations (reference engine).")
@_format_opt
@_out_opt
@_exit_codes
def simulate(n_big, trials, seed, engine_name, workers, subsets, fmt, out):
    """Monte Carlo over seeded episodes: stage-one and stage-two durations."""
    cfg = GameConfig(n_big, seed)
    if subsets:
        engine_name = "reference"
    report = run_monte_carlo(cfg, trials, engine_name=engine_name, workers=workers, collect_subsets=subsets)
    exact_two = report.exact_stage_two
    rows = [
        ("stage_one", n_big, report.stage_one, None),
        ("stage_two", report.n_set, report.stage_two, float(exact_two)),
    ]
    for size, stats in report.subsets.items():
        rows.append(("set_split", size, stats, float(ExactTimeTable.build(size)[size])))

    if fmt == "csv":
        _emit(
            _csv(
                ["quantity", "n", "trials", "mean", "std_error", "exact_value"],
                [(q, n, s.trials, repr(s.mean), repr(s.std_error), "" if e is None else repr(e)) for q, n, s, e in rows],
            ),
            out,
        )
    else:
        payload = {
            "n_big": n_big,
            "seed": seed,
            "trials": trials,
            "stage_one": report.stage_one.to_dict(),
            "stage_two": {**report.stage_two.to_dict(), "exact_value": float(exact_two), "n": report.n_set},
            "total_mean": report.total_mean,
        }
        if subsets:
            payload["set_splits"] = {
                str(n): {**s.to_dict(), "exact_value": e} for q, n, s, e in rows if q == "set_split"
            }
        _emit(_json(payload), out)
    z = report.stage_two.z_score(exact_two) if report.stage_two.std_error > 0 else float("nan")
    _note(
        f"N={n_big}: stage one {report.stage_one.mean:.4f} d, stage two {report.stage_two.mean:.4f} d "
        f"(exact {float(exact_two):.4f}, z={z:+.2f})"
    )


@main.command()
@click.option("--samples", type=click.IntRange(min=64), default=1024, show_default=True)
@_format_opt
@_out_opt
@_exit_codes
def oscillations(samples, fmt, out):
    """Sample H*(y) over one octave and measure its log-periodic oscillation."""
    profile = oscillation_profile(samples)
    summary = {
        "mean": profile.mean,
        "amplitude_dft": profile.amplitude,
        "amplitude_minmax": profile.amplitude_minmax,
        "alpha": alpha_closed_form(),
        "alpha_quadrature": 2.0 * g_tilde_numeric(1.0 / LN2).real / LN2,
        "ratio": profile.amplitude / alpha_closed_form(),
    }
    if fmt == "csv":
        _emit(
            _csv(
                ["log2_y", "h_star", "deviation"],
                [(repr(float(u)), repr(float(v)), repr(float(v - profile.mean))) for u, v in zip(profile.log2_y, profile.values)],
            ),
            out,
        )
    else:
        points = [{"log2_y": float(u), "h_star": float(v)} for u, v in zip(profile.log2_y, profile.values)]
        _emit(_json({**summary, "profile": points}), out)
    _note(f"mean {profile.mean:.12f}, amplitude {profile.amplitude:.4e}, alpha {summary['alpha']:.4e}")


@main.command("validate-cycle")
@click.option("--N", "n_big", type=click.IntRange(min=1), required=True)
@click.option("--horizon", type=int, default=None, help="Days to audit [default: two periods].")
@_format_opt
@_out_opt
@_exit_codes
def validate_cycle(n_big, horizon, fmt, out):
    """Audit the cyclic schedule: wins per period and the 2m-window bounds."""
    cfg = GameConfig(n_big)
    horizon = 2 * cfg.n_agents if horizon is None else horizon
    # the zero group holds agents 0..N-1; the rest carry IDs 1..N+1
    ids = {i: max(0, i - n_big + 1) for i in range(cfg.n_agents)}
    report = validate_cyclic(cfg, ids, horizon)
    if fmt == "csv":
        _emit(
            _csv(
                ["agent", "period", "wins"],
                [(i, p + 1, w) for i, ws in report.wins_per_period.items() for p, w in enumerate(ws)],
            ),
            out,
        )
    else:
        _emit(_json(report.to_dict()), out)
    _note(
        f"N={n_big}, {horizon} days: per-period wins {'ok' if report.periods_ok else 'WRONG'}, "
        f"{len(report.attendance_errors)} attendance errors, {len(report.violations)} window violations"
    )
    if not report.ok:
        sys.exit(EXIT_VALIDATION)


@main.command()
@click.option("--N", "n_big", type=click.IntRange(min=1), required=True)
@click.option("--readjust-prob", type=click.FloatRange(0.0, 1.0), default=0.1, show_default=True)
@click.option("--trials", type=click.IntRange(min=1), default=1000, show_default=True)
@click.option("--max-rounds", type=click.IntRange(min=1), default=10_000, show_default=True)
@click.option("--seed", type=click.IntRange(min=0, max=(1 << 64) - 1), default=0, show_default=True)
@click.option("--trigger", type=click.Choice(TRIGGERS), default="start_day", show_default=True,
              help="Who may move after a crowded period.")
@_format_opt
@_out_opt
@_exit_codes
def baseline(n_big, readjust_prob, trials, max_rounds, seed, trigger, fmt, out):
    """Trial-and-error phase-shift baseline; censored trials count at max-rounds."""
    report = run_baseline(GameConfig(n_big, seed), readjust_prob, trials, max_rounds, trigger)
    data = {**report.to_dict(), "seed": seed, "trigger": trigger}
    if fmt == "csv":
        keys = sorted(data)
        _emit(_csv(keys, [[data[k] for k in keys]]), out)
    else:
        _emit(_json(data), out)
    bound = " (lower bound)" if report.timeouts or report.stalled else ""
    _note(
        f"N={n_big}: mean {report.periods.mean:.1f} periods = {report.mean_days:.1f} days{bound}; "
        f"{report.timeouts} timeouts, {report.stalled} stalled of {trials}"
    )


if __name__ == "__main__":  # pragma: no cover
    main()
