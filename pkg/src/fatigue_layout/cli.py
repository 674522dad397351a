"""``fatigue-layout`` command line.

Every subcommand accepts ``--config``, ``--seed``, ``--jobs``, ``--noise``,
``--out`` and ``--plot``.  Results go to ``--out`` (default
``<output.dir>/<command>``) together with ``manifest.json``.

Exit status: 0 on success (penalised episodes included), 2 for
configuration or argument errors, 3 for numeric failures.
"""

from __future__ import annotations

import functools
import logging
import sys
from importlib import metadata
from pathlib import Path

import click
import numpy as np

from . import io
from ._validation import N_CELLS, ConfigError, InputDomainError, NumericError
from .baselines import (
    REFERENCE_BO_LAYOUT,
    bayes_opt,
    compare,
    enumerate_exhaustive,
    static_layout,
)
from .config import RunConfig, load_config
from .rl import train
from .task import TRACE_HEADER, validate_layout

log = logging.getLogger("fatigue_layout")

EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        from . import __version__

        return __version__


class _Group(click.Group):
    """Maps library errors onto the documented exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (ConfigError, InputDomainError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(EXIT_CONFIG)
        except (NumericError, FloatingPointError, np.linalg.LinAlgError) as exc:
            click.echo(f"numeric failure: {exc}", err=True)
            ctx.exit(EXIT_NUMERIC)


def parse_layout(text: str, n_cells: int = N_CELLS) -> tuple[int, ...]:
    """``"8,9,10"`` to ``(8, 9, 10)``; duplicates are kept (the episode penalises them)."""
    parts = [p.strip() for p in text.replace("-", ",").split(",")]
    if not parts or any(p == "" for p in parts):
        raise click.BadParameter(f"expected comma-separated cell indices, got {text!r}")
    try:
        cells = tuple(int(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"cell indices must be integers, got {text!r}") from None
    bad = [c for c in cells if not 0 <= c < n_cells]
    if bad:
        raise click.BadParameter(f"cells {bad} outside 0..{n_cells - 1}")
    return cells


def common_options(fn):
    @click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                  help="JSON run configuration (defaults apply when omitted).")
    @click.option("--seed", type=click.IntRange(min=0), default=None, help="Global seed.")
    @click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True,
                  help="Worker processes; 1 guarantees byte-identical outputs.")
    @click.option("--noise", type=click.FloatRange(min=0.0), default=None,
                  help="Multiplicative noise sigma on durations and loads.")
    @click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None,
                  help="Output directory.")
    @click.option("--plot", is_flag=True, help="Also write PNG charts (needs matplotlib).")
    @functools.wraps(fn)
    def wrapper(config_path, seed, jobs, noise, out_dir, plot, **kw):
        cfg = load_config(config_path)
        if seed is not None:
            cfg.seed = seed
        ctx = RunContext(cfg, jobs, noise, out_dir, plot, fn.__name__.removeprefix("cmd_"))
        return fn(ctx, **kw)

    return wrapper


class RunContext:
    def __init__(self, cfg: RunConfig, jobs: int, noise, out_dir, plot: bool, name: str):
        self.cfg = cfg
        self.jobs = jobs
        self.noise = noise
        self.plot = plot
        self.name = name.replace("_", "-")
        self.out = Path(out_dir) if out_dir else Path(cfg.out_dir) / self.name
        self.manifest = None

    @property
    def seed(self) -> int:
        return self.cfg.seed

    @property
    def sigma(self) -> float:
        if self.noise is not None:
            return self.noise
        return float(self.cfg.episode.get("noise", 0.0))

    def start(self) -> None:
        """Create the output directory; called only after all validation passed."""
        io.prepare_out_dir(self.out)
        snapshot = self.cfg.to_dict()
        snapshot["episode"]["noise"] = self.sigma
        self.manifest = io.RunManifest(self.name, snapshot, self.seed, _version())

    def csv(self, name: str, header, rows) -> Path:
        return self.manifest.add(io.write_csv(self.out / name, header, rows))

    def json(self, name: str, obj) -> Path:
        return self.manifest.add(io.write_json(self.out / name, obj))

    def add(self, path: Path) -> Path:
        return self.manifest.add(path)

    def finish(self) -> None:
        self.manifest.write(self.out)
        click.echo(f"wrote {len(self.manifest.files)} files to {self.out}")


def _cell_cols(n: int) -> list[str]:
    return [f"cell_{i}" for i in range(n)]


def _read_oracle(path: str) -> dict[tuple[int, ...], float]:
    try:
        header, rows = io.read_csv(Path(path))
    except (OSError, IndexError) as exc:
        raise ConfigError(f"cannot read oracle table {path}: {exc}") from exc
    if header[-2:] != ["total_effort", "rank"]:
        raise ConfigError(f"{path} is not an oracle table")
    n = len(header) - 2
    return {tuple(int(c) for c in r[:n]): float(r[n]) for r in rows}


def _plot(path: Path, kind: str, **data) -> Path | None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        click.echo("matplotlib not installed; skipping --plot", err=True)
        return None
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if kind == "curves":
        for label, ys in data["series"].items():
            ax.plot(ys, label=label, lw=1)
        ax.set_xlabel(data.get("xlabel", "batch"))
        ax.set_ylabel(data.get("ylabel", "mean reward"))
        ax.legend(fontsize=7)
    else:
        labels, means, stds = data["labels"], data["means"], data["stds"]
        ax.bar(labels, means, yerr=stds, capsize=4, color="0.6")
        ax.set_ylabel("total effort")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


@click.group(cls=_Group)
@click.version_option(_version(), prog_name="fatigue-layout")
@click.option("-v", "--verbose", count=True, help="Repeat for more log output.")
def cli(verbose):
    """Fatigue-aware button layout optimisation."""
    level = logging.WARNING - 10 * min(verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


# ---- simulate -------------------------------------------------------------


@cli.command("simulate")
@common_options
@click.option("--layout", "layout_text", required=True, help="Cells, e.g. 8,9,10.")
def cmd_simulate(ctx: RunContext, layout_text):
    """Run one episode and write its muscle trace and summary."""
    layout = parse_layout(layout_text)
    n = len(layout)
    task = "5-button-freq" if n > 3 else "3-button"
    env = ctx.cfg.environment(noise=ctx.sigma, task=task, n_buttons=n)
    ctx.start()
    res = env.run(layout, seed=ctx.seed, record_trace=True)
    ctx.csv("trace.csv", TRACE_HEADER, res.trace)
    ctx.json("summary.json", res.summary() | {"seed": ctx.seed, "noise": ctx.sigma})
    ctx.finish()
    for kind, amount in res.penalties:
        click.echo(f"penalty {kind}: {amount}")
    click.echo(f"total_effort {res.total_effort!r}")
    click.echo(f"reward {res.reward!r}")


# ---- enumerate ------------------------------------------------------------


@cli.command("enumerate")
@common_options
@click.option("--buttons", type=click.IntRange(1, 5), default=None,
              help="Button count (default: 3, or the usage length for the frequency task).")
@click.option("--top-k", type=click.IntRange(min=1), default=None,
              help="Exactly simulated layouts in the five-button mode.")
@click.option("--layouts-from", type=click.Path(exists=True, dir_okay=False), default=None,
              help="layouts.csv of an optimize run; writes a per-seed regret report.")
def cmd_enumerate(ctx: RunContext, buttons, top_k, layouts_from):
    """Rank every layout by simulated cost (noise must be off)."""
    if ctx.sigma != 0:
        raise ConfigError("enumerate requires noise sigma = 0")
    task = "5-button-freq" if (buttons or (5 if ctx.cfg.task == "5-button-freq" else 3)) > 3 else "3-button"
    env = ctx.cfg.environment(noise=0.0, task=task, n_buttons=buttons)
    if task == "5-button-freq" and env.n_buttons != len(ctx.cfg.frequency.usage):
        raise ConfigError("usage distribution length must equal --buttons")
    runs = None
    if layouts_from:
        runs = _read_layout_runs(layouts_from, env.n_buttons)
    ctx.start()
    table = enumerate_exhaustive(env, top_k=top_k or ctx.cfg.top_k, n_jobs=ctx.jobs)
    n = env.n_buttons
    ctx.csv("oracle.csv", _cell_cols(n) + ["total_effort", "rank"],
            (list(cells) + [cost, i + 1] for i, (cells, cost) in enumerate(table.ranking)))
    if table.approx_ranking:
        ctx.csv("oracle_approx.csv", _cell_cols(n) + ["approx_cost", "rank"],
                (list(c) + [v, i + 1] for i, (c, v) in enumerate(table.approx_ranking)))
    ctx.csv("pairwise.csv", ["start"] + [f"to_{c}" for c in range(N_CELLS)],
            ([("rest" if s == 0 else s - 1)] + list(row) for s, row in enumerate(table.pairwise)))
    if runs is not None:
        costs = dict(table.ranking)
        rows = []
        for seed, cells in runs:
            cost = costs.get(cells, float("nan"))
            rows.append([seed] + list(cells) + [cost, cost - table.minimum,
                                                100 * (cost - table.minimum) / table.minimum])
        ctx.csv("regret.csv", ["seed"] + _cell_cols(n) + ["total_effort", "regret", "regret_pct"], rows)
        for r in rows:
            click.echo(f"seed {r[0]}: {tuple(r[1:1 + n])} regret {r[-1]:.2f}%")
    best, cost = table.best
    ctx.json("summary.json", {"n_layouts": len(table.ranking), "best_layout": list(best),
                              "best_total_effort": cost})
    ctx.finish()
    click.echo(f"{len(table.ranking)} layouts; best {best} total_effort {cost!r}")


def _read_layout_runs(path: str, n: int) -> list[tuple[int, tuple[int, ...]]]:
    header, rows = io.read_csv(Path(path))
    cols = _cell_cols(n)
    if header[0] != "seed" or header[1:1 + n] != cols:
        raise ConfigError(f"{path} has no seed/{n}-cell layout columns")
    return [(int(r[0]), tuple(int(c) for c in r[1:1 + n])) for r in rows]


# ---- optimize -------------------------------------------------------------


@cli.group("optimize", cls=_Group)
def optimize():
    """Search layouts with the policy-gradient agent or Bayesian optimisation."""


def _oracle_columns(oracle, cells):
    if oracle is None:
        return []
    best = min(oracle.values())
    cost = oracle.get(tuple(cells), float("nan"))
    return [cost - best, 100 * (cost - best) / best]


@optimize.command("rl")
@common_options
@click.option("--seeds", type=click.IntRange(min=1), default=1, show_default=True,
              help="Train this many agents with seeds seed, seed+1, ...")
@click.option("--episodes", type=click.IntRange(min=1), default=None)
@click.option("--policy", "policy_kind", type=click.Choice(["logits", "mlp"]), default=None)
@click.option("--oracle", type=click.Path(exists=True, dir_okay=False), default=None,
              help="oracle.csv from enumerate, to report regret.")
def cmd_optimize_rl(ctx: RunContext, seeds, episodes, policy_kind, oracle):
    """Train layout agents and write curves, policies and final layouts."""
    overrides = {"parallel_envs": ctx.jobs}
    if episodes:
        overrides["episodes"] = episodes
    if policy_kind:
        overrides["policy"] = policy_kind
    ctx.cfg.train_config(**overrides)
    env = ctx.cfg.environment(noise=ctx.sigma)
    table = _read_oracle(oracle) if oracle else None
    ctx.start()
    eval_env = env.with_noise(0.0)
    rows, series = [], {}
    for s in range(ctx.seed, ctx.seed + seeds):
        res = train(env, ctx.cfg.train_config(seed=s, **overrides))
        ctx.csv(f"curve_seed{s}.csv", ["batch", "mean_reward", "best_reward", "entropy"], res.curve)
        ctx.add(io.write_policy(ctx.out / f"policy_seed{s}.txt", res.policy, res.reference_obs))
        cells = res.layout
        ep = eval_env.run(cells)
        rows.append([s] + list(cells) + [ep.cost, int(validate_layout(cells)[0])]
                    + _oracle_columns(table, cells))
        series[f"seed {s}"] = [c[1] for c in res.curve]
        click.echo(f"seed {s}: layout {cells} cost {ep.cost:.3f}")
    extra = ["regret", "regret_pct"] if table else []
    ctx.csv("layouts.csv", ["seed"] + _cell_cols(env.n_buttons) + ["total_effort", "valid"] + extra, rows)
    if ctx.plot:
        p = _plot(ctx.out / "curves.png", "curves", series=series)
        if p:
            ctx.add(p)
    ctx.finish()


@optimize.command("bo")
@common_options
@click.option("--seeds", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--iterations", type=click.IntRange(min=0), default=None,
              help="Model-based proposals after the Sobol design.")
@click.option("--buttons", type=click.IntRange(1, 3), default=None)
@click.option("--oracle", type=click.Path(exists=True, dir_okay=False), default=None)
def cmd_optimize_bo(ctx: RunContext, seeds, iterations, buttons, oracle):
    """Sobol-initialised GP/EI search; writes histories and final layouts."""
    from dataclasses import replace

    bo_cfg = ctx.cfg.bo
    if iterations is not None:
        bo_cfg = replace(bo_cfg, n_iterations=iterations)
    env = ctx.cfg.environment(noise=ctx.sigma, n_buttons=buttons)
    table = _read_oracle(oracle) if oracle else None
    ctx.start()
    eval_env = env.with_noise(0.0)
    n = env.n_buttons
    rows, series = [], {}
    for s in range(ctx.seed, ctx.seed + seeds):
        res = bayes_opt(env, bo_cfg, seed=s)
        ctx.csv(f"history_seed{s}.csv", ["iter"] + _cell_cols(n) + ["objective", "incumbent_objective"],
                ([i] + list(c) + [v, inc] for i, c, v, inc in res.history))
        ep = eval_env.run(res.layout)
        rows.append([s] + list(res.layout) + [ep.cost, int(validate_layout(res.layout)[0])]
                    + _oracle_columns(table, res.layout))
        series[f"seed {s}"] = [h[3] for h in res.history]
        click.echo(f"seed {s}: layout {res.layout} cost {ep.cost:.3f}")
    extra = ["regret", "regret_pct"] if table else []
    ctx.csv("layouts.csv", ["seed"] + _cell_cols(n) + ["total_effort", "valid"] + extra, rows)
    if ctx.plot:
        p = _plot(ctx.out / "incumbent.png", "curves", series=series, xlabel="evaluation",
                  ylabel="incumbent objective")
        if p:
            ctx.add(p)
    ctx.finish()


# ---- compare --------------------------------------------------------------


def _resolve_layouts(ctx: RunContext, spec: str) -> dict[str, tuple[int, ...]]:
    """Names ``static``, ``reference-bo``, ``rl`` and ``bo`` or explicit ``17-16-15`` layouts."""
    names = [s.strip() for s in spec.split(",") if s.strip()]
    if not names:
        raise click.BadParameter("no layouts given", param_hint="--layouts")
    out = {}
    for name in names:
        if name == "static":
            out[name] = static_layout()
        elif name == "reference-bo":
            out[name] = REFERENCE_BO_LAYOUT
        elif name in ("rl", "bo"):
            out[name] = None  # trained below, after validation
        else:
            try:
                out[name] = parse_layout(name.replace("-", ","))
            except click.BadParameter as exc:
                raise click.BadParameter(f"unknown layout {name!r}: {exc.message}",
                                         param_hint="--layouts") from None
    return out


@cli.command("compare")
@common_options
@click.option("--layouts", "layout_spec", default="static,rl,bo", show_default=True,
              help="Comma-separated names (static, reference-bo, rl, bo) or dash-separated cells.")
@click.option("--trials", type=click.IntRange(min=1), default=30, show_default=True)
def cmd_compare(ctx: RunContext, layout_spec, trials):
    """Mean and standard deviation of total effort per layout over shared trials."""
    layouts = _resolve_layouts(ctx, layout_spec)
    env = ctx.cfg.environment(noise=0.0)
    for label, cells in layouts.items():
        if cells is not None and len(cells) != env.n_buttons:
            raise click.BadParameter(f"layout {label} needs {env.n_buttons} cells", param_hint="--layouts")
    ctx.cfg.train_config()
    ctx.start()
    # optimisers are trained on the noise-free task, then all layouts share the noisy trials
    if "rl" in layouts:
        layouts["rl"] = train(env, ctx.cfg.train_config(parallel_envs=ctx.jobs)).layout
    if "bo" in layouts:
        layouts["bo"] = bayes_opt(env, ctx.cfg.bo, seed=ctx.seed).layout
    rows = compare(env, layouts, trials=trials, noise=ctx.sigma, seed=ctx.seed)
    ctx.csv("compare.csv", ["layout", "cells", "mean_total_effort", "std_total_effort", "trials",
                            "mean_penalty"],
            ([r.label, "-".join(map(str, r.layout)), r.mean, r.std, r.trials, r.penalty_mean]
             for r in rows))
    ctx.csv("compare_trials.csv", ["trial", "layout", "total_effort"],
            ([t, r.label, v] for r in rows for t, v in enumerate(r.values)))
    ctx.json("summary.json", {"trials": trials, "noise": ctx.sigma, "seed": ctx.seed,
                              "rows": [{"layout": r.label, "cells": list(r.layout), "mean": r.mean,
                                        "std": r.std} for r in rows]})
    if ctx.plot:
        p = _plot(ctx.out / "compare.png", "bars", labels=[r.label for r in rows],
                  means=[r.mean for r in rows], stds=[r.std for r in rows])
        if p:
            ctx.add(p)
    ctx.finish()
    click.echo(f"{'layout':<10} {'cells':<12} {'mean':>10} {'std':>9}")
    for r in rows:
        click.echo(f"{r.label:<10} {'-'.join(map(str, r.layout)):<12} {r.mean:10.4f} {r.std:9.4f}")


# ---- freq-task ------------------------------------------------------------


@cli.command("freq-task")
@common_options
@click.option("--seeds", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--usage", default=None, help="Comma-separated button usage probabilities.")
@click.option("--episodes", type=click.IntRange(min=1), default=None)
def cmd_freq_task(ctx: RunContext, seeds, usage, episodes):
    """Train five-button agents under the frequency-weighted reward and check them against the oracle."""
    from dataclasses import replace

    if usage:
        try:
            probs = tuple(float(u) for u in usage.split(","))
        except ValueError:
            raise click.BadParameter(f"not a list of numbers: {usage!r}", param_hint="--usage") from None
        ctx.cfg.frequency = replace(ctx.cfg.frequency, usage=probs)
    ctx.cfg.task = "5-button-freq"
    overrides = {"parallel_envs": ctx.jobs, **({"episodes": episodes} if episodes else {})}
    ctx.cfg.train_config(**overrides)
    env = ctx.cfg.environment(noise=ctx.sigma)
    oracle_env = env.with_noise(0.0)
    ctx.start()
    table = enumerate_exhaustive(oracle_env, top_k=ctx.cfg.top_k, n_jobs=ctx.jobs)
    n = env.n_buttons
    ctx.csv("oracle.csv", _cell_cols(n) + ["total_effort", "rank"],
            (list(c) + [v, i + 1] for i, (c, v) in enumerate(table.ranking)))
    best, best_cost = table.best
    top = int(np.argmax(env.usage))
    rows, keys = [], []
    for s in range(ctx.seed, ctx.seed + seeds):
        res = train(env, ctx.cfg.train_config(seed=s, **overrides))
        ctx.csv(f"curve_seed{s}.csv", ["batch", "mean_reward", "best_reward", "entropy"], res.curve)
        ctx.add(io.write_policy(ctx.out / f"policy_seed{s}.txt", res.policy, res.reference_obs))
        cells = res.layout
        cost = dict(table.ranking).get(cells, float("nan"))
        key = canonical_layout(cells, env.usage)
        keys.append(key)
        rows.append([s] + list(cells) + [cost, int(cells[top] == best[top]), "|".join(key)])
        click.echo(f"seed {s}: layout {cells} top button on {cells[top]} (oracle {best[top]})")
    ctx.csv("layouts.csv", ["seed"] + _cell_cols(n) + ["total_effort", "top_button_match", "canonical"],
            rows)
    mode = max(set(keys), key=keys.count)
    ctx.json("summary.json", {
        "usage": list(env.usage), "oracle_best": list(best), "oracle_best_cost": best_cost,
        "top_button": top,
        "top_button_matches": sum(r[n + 2] for r in rows),
        "modal_layout": mode, "modal_share": keys.count(mode) / len(keys),
    })
    ctx.finish()


def canonical_layout(cells, usage) -> tuple[str, ...]:
    """Layout key that ignores swaps between buttons of equal usage.

    Buttons with identical probability are interchangeable in the
    frequency-weighted objective, so their cells are compared as a set.
    """
    groups: dict[float, list[int]] = {}
    for c, p in zip(cells, usage):
        groups.setdefault(float(p), []).append(int(c))
    return tuple(
        f"p={p!r}:" + ",".join(map(str, sorted(cs))) for p, cs in sorted(groups.items(), reverse=True)
    )


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="fatigue-layout", standalone_mode=False)
        # click hands back the code of ctx.exit() instead of raising in this mode
        return rv if isinstance(rv, int) else 0
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return EXIT_CONFIG
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
