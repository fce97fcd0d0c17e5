"""Command-line entry point: ``scatterlab <kind> [--scenario PATH] ...``.

Each subcommand runs scenarios of one kind; ``all`` runs every scenario it
is given (or every shipped one).  Exit status is 0 when every check
passes, 1 when a check fails or a module error occurs, 2 on a
configuration error.

Shipped scenarios are looked up in ``$SCATTERLAB_SCENARIOS`` or in the
``scenarios/`` directory of the source checkout.  ``SCATTERLAB_THREADS``
caps the number of scenarios ``all`` runs concurrently (default 1).
"""

from __future__ import annotations

import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click

from scatterlab.errors import ConfigError
from scatterlab.runners import RunError, emit_report, run_scenario
from scatterlab.scenario import KINDS, SchemaWarning, load_scenario

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def shipped_dir() -> Path | None:
    env = os.environ.get("SCATTERLAB_SCENARIOS")
    if env:
        return Path(env)
    here = Path(__file__).resolve().parents[2] / "scenarios"
    return here if here.is_dir() else None


def _threads() -> int:
    raw = os.environ.get("SCATTERLAB_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SCATTERLAB_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("SCATTERLAB_THREADS must be a positive integer")
    return n


def _expand(paths) -> list[Path]:
    out = []
    for p in paths:
        p = Path(p)
        out += sorted(p.glob("*.ini")) if p.is_dir() else [p]
    return out


def _collect(paths, kind, strict, seed):
    if not paths:
        d = shipped_dir()
        paths = [d] if d is not None else []
    scs = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SchemaWarning)
        for p in _expand(paths):
            s = load_scenario(p, strict=strict)
            if kind is None or s.kind == kind:
                scs.append(s if seed is None else s.with_seed(seed))
    for w in caught:
        click.echo(f"warning: {w.message}", err=True)
    names = [s.output_dir for s in scs]
    dup = {n for n in names if names.count(n) > 1}
    if dup:
        raise ConfigError(f"scenarios share an output directory: {sorted(dup)}")
    return scs


def _run_one(args):
    sc, out = args
    return run_scenario(sc, out)


def _execute(ctx, paths, out, seed, strict, kind):
    try:
        scs = _collect(paths, kind, strict, seed)
        workers = _threads()
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    if not scs:
        click.echo(ctx.get_help())
        click.echo("\nno scenarios to run", err=True)
        ctx.exit(EXIT_CONFIG)
    jobs = [(s, out) for s in scs]
    try:
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
                reports = list(pool.map(_run_one, jobs))
        else:
            reports = [_run_one(j) for j in jobs]
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    except RunError as exc:
        click.echo(f"error: {exc}", err=True)
        ctx.exit(EXIT_FAIL)
    click.echo(emit_report(reports))
    ctx.exit(EXIT_OK if all(r.passed for r in reports) else EXIT_FAIL)


def _options(fn):
    fn = click.option("--strict", is_flag=True, help="Reject unknown keys instead of warning.")(fn)
    fn = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                      help="Override the scenario seed (unsigned 64-bit).")(fn)
    fn = click.option("--out", "out", type=click.Path(file_okay=False), default="scatterlab-out",
                      show_default=True, help="Output root; each scenario writes a subdirectory.")(fn)
    fn = click.option("--scenario", "paths", multiple=True, type=click.Path(exists=True),
                      help="Scenario file or directory (repeatable). Defaults to the shipped set.")(fn)
    return fn


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(package_name="artifact", prog_name="scatterlab")
def main():
    """Run scattering scenarios and report pass/fail per check."""


def _make(kind):
    @main.command(name=kind, help=f"Run {kind} scenarios.")
    @_options
    @click.pass_context
    def cmd(ctx, paths, out, seed, strict):
        _execute(ctx, paths, out, seed, strict, kind)

    return cmd


for _k in KINDS:
    _make(_k)


@main.command(name="all", help="Run every scenario given (default: all shipped scenarios).")
@_options
@click.pass_context
def run_all(ctx, paths, out, seed, strict):
    _execute(ctx, paths, out, seed, strict, None)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
