"""Command-line entry point."""
from __future__ import annotations

import sys
from dataclasses import replace
from pathlib import Path

import click

from subspace_qkd import __version__
from subspace_qkd.config import ConfigError, parse_config
from subspace_qkd.harness import SweepSpec, format_report, reports_csv, run_experiment, run_sweep
from subspace_qkd.protocol import InsufficientDataError

EXIT_CONFIG = 2
EXIT_INSUFFICIENT_DATA = 3


def _load(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text)


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(__version__, prog_name="subspace-qkd")
def main() -> None:
    """Monte Carlo simulator for two-qubit subspace QKD under collective noise."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Override the config seed.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report path.")
@click.option("--format", "fmt", type=click.Choice(["csv", "structured"]), default=None)
def simulate(config_path: str, seed: int | None, out: str | None, fmt: str | None) -> None:
    """Run one experiment and emit its report."""
    try:
        cfg = _load(config_path)
        if seed is not None:
            if not 0 <= seed < 2**64:
                raise ConfigError("must lie in [0, 2**64)", field="seed")
            cfg = replace(cfg, seed=seed)
        if out is not None:
            cfg = replace(cfg, output_path=out)
        if fmt is not None:
            cfg = replace(cfg, output_format=fmt)
        report = run_experiment(cfg)
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    except InsufficientDataError as exc:
        _fail(f"insufficient data: {exc}", EXIT_INSUFFICIENT_DATA)
    if cfg.output_path is None:
        click.echo(format_report(report, cfg.output_format), nl=False)


def _theta_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"not a comma-separated list of numbers: {text!r}", field="theta") from None
    if not values:
        raise ConfigError("empty list", field="theta")
    return values


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--theta", "theta", required=True, help="Comma-separated rotation angles (rad).")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV path.")
@click.option("--jobs", type=int, default=1, show_default=True, help="Parallel rows.")
def sweep(config_path: str, theta: str, out: str | None, jobs: int) -> None:
    """Run the config once per theta value and emit a CSV table."""
    try:
        spec = SweepSpec(_load(config_path), tuple(_theta_list(theta)))
        text = reports_csv(run_sweep(spec, jobs=jobs))
    except ConfigError as exc:
        _fail(str(exc), EXIT_CONFIG)
    except InsufficientDataError as exc:
        _fail(f"insufficient data: {exc}", EXIT_INSUFFICIENT_DATA)
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text, encoding="utf-8")


if __name__ == "__main__":
    main()
