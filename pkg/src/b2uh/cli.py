"""Command-line harness: ``b2uh <verb> [options]``."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import __version__
from .analytics import CSV_COLUMNS, crossover, monte_carlo_b2uh, success_rows, write_csv, ModelRow
from .experiments import (
    GROUPING_COLUMNS,
    REFERENCE_COMMUNICATION,
    REFERENCE_COMPUTATION,
    REFERENCE_LATENCY_MS,
    REFERENCE_THROUGHPUT_TPS,
    STABILITY_COLUMNS,
    grouping_table,
    run_simulation,
    stability_experiment,
    verify_overheads,
    write_rows,
)
from .grouping import SCHEMES, GroupingWeights, optimal_group_sizes, scheme_weights
from .mobility import WorldConfig, load_trace, read_config


def parse_ints(text: str) -> list[int]:
    """``"360,660"`` or an inclusive range ``"60:120:12"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            lo, hi, step = (bits + [1])[:3]
            out.extend(range(lo, hi + 1, step))
        else:
            out.append(int(part))
    return out


def parse_floats(text: str) -> list[float]:
    """``"0.1,0.2"`` or an inclusive grid ``"0:1:0.05"``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            lo, hi, step = (float(b) for b in part.split(":"))
            n = int(round((hi - lo) / step))
            out.extend(round(lo + i * step, 10) for i in range(n + 1))
        else:
            out.append(float(part))
    return out


def _settings(ctx_params: dict, config: str | None) -> dict:
    # the config file wins over command-line flags
    merged = {k: v for k, v in ctx_params.items() if v is not None}
    if config:
        merged.update(read_config(config))
    return merged


def _weights(settings: dict) -> tuple[GroupingWeights, str]:
    lm = float(settings.get("l", 0.5)), float(settings.get("m", 0.5))
    if all(k in settings for k in ("a", "b", "c")):
        return GroupingWeights(*lm, *(float(settings[k]) for k in ("a", "b", "c"))), "custom"
    scheme = int(settings.get("scheme", 1))
    return scheme_weights(scheme, *lm), str(scheme)


def _out_dir(settings: dict) -> Path:
    p = Path(settings.get("out", "out"))
    p.mkdir(parents=True, exist_ok=True)
    return p


common_config = click.option("--config", type=click.Path(exists=True, dir_okay=False),
                             help="key = value file; its entries override flags.")
common_out = click.option("--out", type=click.Path(file_okay=False), help="Output directory.")


@click.group()
@click.version_option(__version__, prog_name="b2uh")
def main():
    """Fog grouping, two-layer consensus and identity-protocol experiments."""


@main.command("analyze-grouping")
@click.option("--z", default="360,660,1092", show_default=True, help="Vehicle counts (list or a:b:step).")
@common_out
@common_config
def analyze_grouping(z, out, config):
    """Optimal and neighbouring (x, y) splits with their message costs."""
    s = _settings({"z": z, "out": out}, config)
    rows = grouping_table(parse_ints(s["z"]))
    dest = _out_dir(s) / "grouping.csv"
    write_rows(dest, GROUPING_COLUMNS, rows)
    for r in rows:
        if r["optimal"]:
            click.echo(f"Z={r['Z']}: x={r['x']} y={r['y']} C={r['C']} vs {r['C_single']} "
                       f"({r['reduction_pct']:.2f}% fewer messages)")
    click.echo(f"wrote {dest}")


@main.command("analyze-success")
@click.option("--z", default="360,660,1092", show_default=True)
@click.option("--pf", default="0:1:0.05", show_default=True, help="Failure probabilities (list or a:b:step).")
@click.option("--trials", type=int, default=0, show_default=True, help="Monte Carlo trials per point (0: none).")
@click.option("--seed", type=int, default=0, show_default=True)
@common_out
@common_config
def analyze_success(z, pf, trials, seed, out, config):
    """Flat vs two-layer consensus success and their relative change."""
    s = _settings({"z": z, "pf": pf, "trials": trials, "seed": seed, "out": out}, config)
    Zs, pfs = parse_ints(s["z"]), parse_floats(s["pf"])
    rows = success_rows(Zs, pfs)
    trials = int(s["trials"])
    if trials > 0:
        for Z in Zs:
            x, y, _ = optimal_group_sizes(Z)
            for p in pfs:
                est = monte_carlo_b2uh(x, y, p, trials, int(s["seed"]))
                rows.append(ModelRow("P_S2_mc", Z, x, y, p, est.value))
    d = _out_dir(s)
    write_csv(rows, d / "success.csv")
    summary = {str(Z): crossover(Z) for Z in Zs}
    (d / "crossover.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    for Z, c in summary.items():
        click.echo(f"Z={Z}: I turns positive at P_f={c:.4f}" if c is not None else f"Z={Z}: I never turns positive")
    click.echo(f"wrote {d / 'success.csv'} ({', '.join(CSV_COLUMNS)})")


@main.command("sim-run")
@click.option("--z", type=int, default=100, show_default=True)
@click.option("--pf", type=float, default=0.0, show_default=True)
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--scheme", type=click.IntRange(1, 7), default=1, show_default=True)
@click.option("--trace", type=click.Path(exists=True, dir_okay=False), help="Use a trace CSV instead of the generator.")
@common_out
@common_config
def sim_run(z, pf, seed, scheme, trace, out, config):
    """End-to-end run: grouping, registration, authentication, logout, consensus."""
    s = _settings({"z": z, "pf": pf, "seed": seed, "scheme": scheme, "trace": trace, "out": out}, config)
    weights, _ = _weights(s)
    world = WorldConfig.from_mapping(s, vehicles=int(s["z"]), seed=int(s["seed"]))
    frames = load_trace(s["trace"]) if s.get("trace") else None
    res = run_simulation(
        world.vehicles, float(s["pf"]), int(s["seed"]), weights, world, frames, _out_dir(s),
        delta_ts=int(s.get("delta_ts", 5)),
    )
    r = res.report
    t = r["timing"]
    click.echo(f"registrations {r['registration']['accepted']}/{r['registration']['attempted']}, "
               f"authentications {r['authentication']['succeeded']}/"
               f"{r['authentication']['same_fog'] + r['authentication']['cross_fog']}, "
               f"revoked {r['logout']['revoked']}, rejected {len(r['rejected'])}")
    click.echo(f"consensus rounds ok: {r['consensus']['all_succeeded']}; "
               f"ledgers verified: {all(r['ledgers']['verified'].values())}")
    click.echo(f"auth latency {t['auth_latency_ms_mean']:.2f} ms, peak throughput "
               f"{t['throughput']['peak_tps']:.1f} TPS on {t['host']} "
               f"(published: {REFERENCE_LATENCY_MS} ms / {REFERENCE_THROUGHPUT_TPS} TPS, other hardware)")
    if not res.ok:
        click.echo("run reported failures; see report.json", err=True)
        sys.exit(1)


@main.command("sim-stability")
@click.option("--z", type=int, default=660, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True, help="First trace seed.")
@click.option("--seeds", type=int, default=5, show_default=True, help="Number of consecutive seeds.")
@click.option("--scheme", default="all", show_default=True, help="'all' or a list of scheme ids 1-7.")
@click.option("--trace", type=click.Path(exists=True, dir_okay=False), help="Use one trace CSV for every seed.")
@common_out
@common_config
def sim_stability(z, seed, seeds, scheme, trace, out, config):
    """Mean fog updated rate per weight scheme against random fog assignment."""
    s = _settings({"z": z, "seed": seed, "seeds": seeds, "scheme": scheme, "trace": trace, "out": out}, config)
    world = WorldConfig.from_mapping(s, vehicles=int(s["z"]), seed=int(s["seed"]))
    seed_list = list(range(int(s["seed"]), int(s["seed"]) + int(s["seeds"])))
    if str(s["scheme"]).lower() == "all":
        schemes: list = list(SCHEMES)
    else:
        schemes = parse_ints(s["scheme"])
    if all(k in s for k in ("a", "b", "c")):
        schemes = ["custom"]
    frames = None
    if s.get("trace"):
        loaded = load_trace(s["trace"])
        frames = {sd: loaded for sd in seed_list}
    weights = _weights(s)[0] if schemes == ["custom"] else None
    rows, means = stability_experiment(world, seed_list, schemes + ["random"], frames, weights)
    d = _out_dir(s)
    write_rows(d / "stability.csv", STABILITY_COLUMNS, rows)
    (d / "stability_summary.json").write_text(json.dumps(means, indent=2, sort_keys=True) + "\n")
    for k, v in means.items():
        label = "random" if k == "random" else f"scheme {k}"
        click.echo(f"{label}: mean U = {v:.4f}")
    click.echo(f"wrote {d / 'stability.csv'}")


@main.command("verify-overheads")
@click.option("--seed", type=int, default=0, show_default=True)
@common_out
@common_config
def verify_overheads_cmd(seed, out, config):
    """Operation counts and byte sizes of one same-fog mutual authentication."""
    s = _settings({"seed": seed, "out": out}, config)
    rep = verify_overheads(int(s["seed"]))
    o, b = rep["ops"], rep["bytes"]
    click.echo("scheme  signatures  verifications  hashes  encryptions")
    click.echo(f"ESIA    {o['signatures']:>10}  {o['verifications']:>13}  {o['hashes']:>6}  {o['encryptions']:>11}")
    for r in REFERENCE_COMPUTATION:
        click.echo(f"{r['scheme']:<6}  {r['signatures']:>10}  {r['verifications']:>13}  {r['hashes']:>6}  "
                   f"{r['encryptions']:>11}  (reference)")
    click.echo("scheme  registration  authentication  total")
    click.echo(f"ESIA    {b['registration']:>12}  {b['authentication']:>14}  {b['total']:>5}")
    for r in REFERENCE_COMMUNICATION:
        click.echo(f"{r['scheme']:<6}  {r['registration']:>12}  {r['authentication']:>14}  {r['total']:>5}  (reference)")
    if s.get("out"):
        (_out_dir(s) / "overheads.json").write_text(json.dumps(rep, indent=2, sort_keys=True) + "\n")
    for name, ok in rep["checks"].items():
        if not ok:
            click.echo(f"check failed: {name}", err=True)
    if not rep["ok"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
