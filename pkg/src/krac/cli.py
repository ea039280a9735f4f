"""Command line front end: bench, predict, run."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bench import BenchConfig, predict, run_experiment
from .scenario import ScriptError, run_script


@click.group()
def main() -> None:
    """k-resilient access-controlled DHT: benchmark and scenario tools."""


@main.command()
@click.option("--mechanism", type=click.Choice(["pk", "zkp", "oth"]), default="pk")
@click.option("--k", type=int, default=3, help="tolerated subverted peers")
@click.option("--n", "rounds", type=int, default=20, help="challenge rounds (zkp)")
@click.option("--acl-size", type=int, default=2, help="grantees per ACL")
@click.option("--peers", type=int, default=64)
@click.option("--adversary", type=int, default=0, help="number of subverted peers")
@click.option(
    "--behavior",
    "behaviors",
    multiple=True,
    default=("deny",),
    help="behavior list, repeatable or comma-joined "
    "(deny|forge[:hex]|tamper|replay|claim)",
)
@click.option("--seed", type=int, default=0)
@click.option("--trials", type=int, default=3)
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="json")
@click.option("--out", type=click.Path(dir_okay=False, writable=True), default=None)
def bench(mechanism, k, rounds, acl_size, peers, adversary, behaviors, seed, trials, fmt, out):
    """Run seeded trials and report measured vs predicted overhead."""
    flat = tuple(b for spec in behaviors for b in spec.split(",") if b)
    cfg = BenchConfig(
        mechanism=mechanism,
        k=k,
        rounds=rounds,
        acl_size=acl_size,
        peers=peers,
        adversary=adversary,
        behaviors=flat or ("deny",),
        seed=seed,
        trials=trials,
    )
    report = run_experiment(cfg)
    text = report.to_json() if fmt == "json" else report.to_csv()
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command(name="predict")
@click.option("--profile", type=click.Choice(["paper", "artifact"]), default="artifact")
@click.option("--mechanism", type=click.Choice(["pk", "zkp", "oth"]), default="pk")
@click.option("--k", type=int, default=3)
@click.option("--n", "rounds", type=int, default=20)
@click.option("--acl-size", type=int, default=10)
@click.option("--y", type=int, default=2, help="messages per unreplicated exchange")
def predict_cmd(profile, mechanism, k, rounds, acl_size, y):
    """Print the analytical overhead model for one configuration."""
    out = predict(profile, mechanism, k, rounds=rounds, acl_size=acl_size, y=y)
    click.echo(json.dumps(out, sort_keys=True, indent=2))


@main.command(name="run")
@click.argument("script", type=click.Path(exists=True, dir_okay=False, allow_dash=True))
def run_cmd(script):
    """Execute a scenario script; exit 0 only if every assertion held."""
    with click.open_file(script) as handle:
        text = handle.read()
    try:
        result = run_script(text)
    except ScriptError as exc:
        click.echo(f"script error: {exc}", err=True)
        sys.exit(2)
    click.echo(result.render())
    sys.exit(0 if result.passed else 1)
