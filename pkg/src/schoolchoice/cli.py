"""Command-line interface.

Exit codes: 0 success, 1 a golden claim failed (or an equilibrium was not
certified), 2 invalid input.
"""

from __future__ import annotations

import csv
import json
import sys
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

import click
import numpy as np

from . import census as cz
from .equilibrium import (
    ContractError,
    DeviationSpace,
    NoMixedEquilibrium,
    NoSymmetricEquilibrium,
    best_response,
    best_response_dynamics,
    enumerate_pure_equilibria,
    solve_bayesian_gadget,
    solve_gadget_mixed,
    solve_symmetric_two_strategy,
    verify_equilibrium,
)
from .evaluation import ExactEvaluator, MonteCarloEvaluator
from .experiments import ExperimentSpec
from .fixtures import FIXTURES, fixture
from .generators import UniformModelSpec, generate_uniform
from .mechanisms import get_mechanism, mechanism_name
from .model import (
    MTB,
    STB,
    BudgetExceeded,
    InputError,
    StrategyProfile,
    TieBreak,
    dumps_market,
    format_number,
    load_market,
    parse_number,
    validate_market,
)

MODE = click.Choice([MTB, STB], case_sensitive=False)


class _Group(click.Group):
    """Maps library input errors to exit code 2."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except (InputError, ContractError, BudgetExceeded, json.JSONDecodeError) as exc:
            click.echo(f"error: {exc}", err=True)
            ctx.exit(2)


def _load(path: str):
    try:
        market = load_market(path)
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{path}: not a market file ({exc})") from exc
    problems = validate_market(market)
    if problems:
        raise InputError(f"{path}: " + "; ".join(problems))
    return market


def _load_profile(market, path: str | None) -> StrategyProfile:
    """Profile file: ``{student: [[rol, p], ...]}`` or ``{student: rol}``;
    students left out report truthfully."""
    base = StrategyProfile.truthful(market)
    if path is None:
        return base
    data = json.loads(Path(path).read_text())
    for student, value in data.items():
        if value and all(isinstance(s, str) for s in value):
            base = base.with_pure(student, value)
        else:
            base = base.replace(student, [(tuple(r), parse_number(p)) for r, p in value])
    problems = base.violations(market)
    if problems:
        raise InputError("; ".join(problems))
    return base


def _jsonable(x):
    if isinstance(x, Fraction):
        return format_number(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def _echo_json(data) -> None:
    click.echo(json.dumps(_jsonable(data), indent=2))


def _evaluator(exact: bool, mc: int | None, mechanism: str, mode: str, seed: int, workers: int):
    if mc is not None and exact:
        raise InputError("choose one of --exact and --mc")
    if mc is not None:
        return MonteCarloEvaluator(mechanism, mode, mc, seed, workers)
    return ExactEvaluator(mechanism, mode)


def _space(truncations: bool, all_schools: bool) -> DeviationSpace:
    return DeviationSpace(truncations=truncations, all_schools=all_schools)


def _parse_param(text: str):
    if "=" not in text:
        raise InputError(f"parameter {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        if "," in raw:
            value = [parse_number(v) for v in raw.split(",")]
        else:
            try:
                value = parse_number(raw)
            except (ValueError, ZeroDivisionError):
                value = raw
    if isinstance(value, list):
        value = [parse_number(v) if isinstance(v, str) and "/" in v else v for v in value]
    return key, value


@click.group(cls=_Group)
def main():
    """School-choice mechanism laboratory."""


@main.command()
@click.argument("market_file", type=click.Path(exists=True, dir_okay=False))
def validate(market_file):
    """Check a market file and print its canonical form."""
    market = _load(market_file)
    click.echo(dumps_market(market), nl=False)


@main.command()
@click.argument("mechanism")
@click.argument("market_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", type=click.Path(exists=True, dir_okay=False), help="Pure reports (default truthful).")
@click.option("--mode", type=MODE, default=MTB, show_default=True)
@click.option("--tiebreak-seed", type=int, default=0, show_default=True)
@click.option("--trace", is_flag=True, help="Emit the round trace as JSON lines, then the matching.")
def run(mechanism, market_file, profile, mode, tiebreak_seed, trace):
    """Run one mechanism on one tie-break draw."""
    market = _load(market_file)
    prof = _load_profile(market, profile)
    if not prof.is_pure():
        raise InputError("run needs a pure profile")
    reports = prof.pure_reports()
    tiebreak = TieBreak.draw(market, mode.upper(), np.random.default_rng(tiebreak_seed))
    matching, rounds = get_mechanism(mechanism_name(mechanism))(market, reports, tiebreak)
    if trace:
        click.echo(rounds.to_jsonl(), nl=False)
        click.echo(json.dumps({"matching": matching.assignment}))
        return
    click.echo("student,school")
    for i in market.student_ids:
        click.echo(f"{i},{matching.get(i) or ''}")


@main.command(name="eval")
@click.argument("market_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", type=click.Path(exists=True, dir_okay=False))
@click.option("--mechanism", default="BM", show_default=True)
@click.option("--mode", type=MODE, default=MTB, show_default=True)
@click.option("--exact", is_flag=True, help="Exact evaluation (the default).")
@click.option("--mc", type=int, default=None, help="Monte Carlo with this many samples.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def eval_(market_file, profile, mechanism, mode, exact, mc, seed, workers):
    """Expected utilities as CSV."""
    market = _load(market_file)
    prof = _load_profile(market, profile)
    ev = _evaluator(exact, mc, mechanism_name(mechanism), mode.upper(), seed, workers)
    click.echo(ev(market, prof).to_csv(), nl=False)


@main.command()
@click.argument("solver", type=click.Choice(["verify", "best-response", "pure", "dynamics", "symmetric", "gadget", "bayesian"]))
@click.argument("market_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", type=click.Path(exists=True, dir_okay=False))
@click.option("--student", help="Player for best-response.")
@click.option("--cohort", help="Comma-separated cohort for symmetric.")
@click.option("--rol-a", help="Comma-separated first list for symmetric.")
@click.option("--rol-b", help="Comma-separated second list for symmetric.")
@click.option("--players", help="Comma-separated gadget players.")
@click.option("--p-z", default="0", show_default=True)
@click.option("--p-y", default="0", show_default=True)
@click.option("--epsilon", default=None)
@click.option("--truncations", is_flag=True, help="Also consider truncated lists.")
@click.option("--all-schools", is_flag=True, help="Also consider unacceptable schools.")
@click.option("--mode", type=MODE, default=MTB, show_default=True)
@click.option("--mc", type=int, default=None, help="Monte Carlo samples instead of exact evaluation.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def solve(solver, market_file, profile, student, cohort, rol_a, rol_b, players, p_z, p_y, epsilon,
          truncations, all_schools, mode, mc, seed, workers):
    """Equilibrium solvers and certificates (JSON output)."""
    market = _load(market_file)
    ev = _evaluator(False, mc, "BM", mode.upper(), seed, workers)
    space = _space(truncations, all_schools)
    prof = _load_profile(market, profile)
    split = lambda text: tuple(x for x in (text or "").split(",") if x)  # noqa: E731
    if solver == "verify":
        eps = parse_number(epsilon) if epsilon is not None else None
        cert = verify_equilibrium(market, prof, eps, ev, space)
        click.echo(cert.to_json())
        sys.exit(0 if cert.certified else 1)
    if solver == "best-response":
        if not student:
            raise InputError("best-response needs --student")
        br = best_response(market, prof, student, space, ev)
        _echo_json({"student": student, "rol": list(br.rol), "gain": br.gain, "utility": br.utility, "std_err": br.std_err})
    elif solver == "pure":
        found = enumerate_pure_equilibria(market, space, ev, workers=workers)
        ordered = [{i: p.pure_reports()[i] for i in market.student_ids} for p in found]
        _echo_json({"equilibria": ordered})
    elif solver == "dynamics":
        final, sweeps = best_response_dynamics(market, prof, space, ev)
        cert = verify_equilibrium(market, final, None, ev, space)
        _echo_json({"sweeps": sweeps, "profile": final.to_dict(), "certified": cert.certified})
        sys.exit(0 if cert.certified else 1)
    elif solver == "symmetric":
        if not (cohort and rol_a and rol_b):
            raise InputError("symmetric needs --cohort, --rol-a and --rol-b")
        try:
            sol = solve_symmetric_two_strategy(market, split(cohort), split(rol_a), split(rol_b), prof, ev)
        except NoSymmetricEquilibrium as exc:
            click.echo(f"no symmetric equilibrium: {exc}", err=True)
            sys.exit(1)
        _echo_json({"t": sol.t, "kind": sol.kind, "residual": sol.residual, "utilities": sol.report.utilities})
    elif solver == "gadget":
        try:
            mixed = solve_gadget_mixed(market, split(players) or None, ev)
        except NoMixedEquilibrium as exc:
            click.echo(f"no mixed equilibrium: {exc}", err=True)
            sys.exit(1)
        _echo_json({"players": mixed.players, "q": mixed.q, "utilities": mixed.utilities})
    else:
        sol = solve_bayesian_gadget(market, parse_number(p_z), parse_number(p_y), players=split(players) or None, evaluator=ev)
        _echo_json({
            "players": sol.players, "t_star": sol.t_star, "q": sol.q, "facing": sol.facing,
            "residual": sol.residual, "become_sincere": sol.become_sincere, "half_u2": sol.half_u2,
        })
        sys.exit(0 if sol.certified() else 1)


@main.command(name="census")
@click.argument("pattern", type=click.Choice(cz.PATTERNS))
@click.argument("market_file", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", type=int, default=None, help="Scan a fresh uniform market of this size instead.")
@click.option("--seed", type=int, default=0, show_default=True)
def census_(pattern, market_file, n, seed):
    """List gadget patterns as CSV."""
    if (market_file is None) == (n is None):
        raise InputError("give either a market file or --n")
    market = _load(market_file) if market_file else generate_uniform(UniformModelSpec(n, seed=seed))
    click.echo(cz.matches_to_csv(cz.census(market, pattern)), nl=False)


@main.command()
@click.argument("name", type=click.Choice(sorted(FIXTURES)))
@click.option("--param", "params", multiple=True, help="Fixture parameter key=value.")
def export(name, params):
    """Write a named fixture market in the market file format."""
    kwargs = dict(_parse_param(p) for p in params)
    click.echo(dumps_market(fixture(name, **kwargs).market), nl=False)


@main.command()
@click.option("--n", type=int, required=True)
@click.option("--u", "utilities", default="3,5/2", show_default=True, help="Comma-separated decreasing utilities.")
@click.option("--p", default="0", show_default=True, help="I.i.d. sincerity probability.")
@click.option("--seed", type=int, default=0, show_default=True)
def generate(n, utilities, p, seed):
    """Draw a uniform-model market."""
    utils = tuple(parse_number(u) for u in utilities.split(","))
    click.echo(dumps_market(generate_uniform(UniformModelSpec(n, utils, p=float(parse_number(p)), seed=seed))), nl=False)


@main.command()
@click.argument("experiment_id", required=False)
@click.option("--config", type=click.Path(exists=True, dir_okay=False), help="JSON config document.")
@click.option("--param", "params", multiple=True, help="Experiment parameter key=value (repeatable).")
@click.option("--seed", type=int, default=None)
@click.option("--mode", type=MODE, default=None)
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Append rows to <out>/<id>.csv.")
def experiment(experiment_id, config, params, seed, mode, out):
    """Run a named experiment; exit 1 if any golden claim fails."""
    doc = json.loads(Path(config).read_text()) if config else {}
    spec = ExperimentSpec.from_config(
        doc,
        experiment=experiment_id,
        seed=seed,
        mode=mode.upper() if mode else None,
        output=out,
        params=dict(_parse_param(p) for p in params),
    )
    result = spec.run()
    if spec.output:
        folder = Path(spec.output)
        folder.mkdir(parents=True, exist_ok=True)
        path = folder / f"{spec.experiment}.csv"
        new = not path.exists()
        with path.open("a") as fh:
            fh.write(result.to_csv(header=new))
        meta = {**result.meta, "seed": spec.seed, "mode": spec.mode, "params": spec.params,
                "claims": {c.name: c.passed for c in result.claims}}
        (folder / f"{spec.experiment}.meta.json").write_text(json.dumps(_jsonable(meta), indent=2) + "\n")
    else:
        click.echo(result.to_csv(), nl=False)
    click.echo(result.summary(), err=True)
    sys.exit(0 if result.passed else 1)


@main.command()
@click.argument("csv_files", nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Directory for SVG plots.")
def report(csv_files, out):
    """Summarize result CSVs (mean over seeds) and plot numeric fields."""
    values = defaultdict(list)
    for path in csv_files:
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                try:
                    v = float(Fraction(row["value"]))
                except (ValueError, ZeroDivisionError):
                    v = {"true": 1.0, "false": 0.0}.get(row["value"])
                if v is not None:
                    values[(row["experiment"], row["label"], row["field"])].append(v)
    if not values:
        raise InputError("no numeric rows found")
    click.echo(f"{'experiment':<24} {'label':<22} {'field':<34} {'mean':>14} {'runs':>5}")
    for (exp, label, name), vs in sorted(values.items()):
        click.echo(f"{exp:<24} {label:<22} {name:<34} {np.mean(vs):>14.6g} {len(vs):>5}")
    if out:
        _plot(values, Path(out))


def _plot(values: dict, folder: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    folder.mkdir(parents=True, exist_ok=True)
    by_exp = defaultdict(list)
    for (exp, label, name), vs in sorted(values.items()):
        by_exp[exp].append((f"{label}.{name}", float(np.mean(vs))))
    for exp, items in by_exp.items():
        names, heights = zip(*items)
        fig, ax = plt.subplots(figsize=(8, 0.3 * len(items) + 1.2))
        ax.barh(range(len(items)), heights)
        ax.set_yticks(range(len(items)), names, fontsize=7)
        positive = [h for h in heights if h > 0]
        if positive and len(positive) == len(heights) and max(positive) / min(positive) > 1e3:
            ax.set_xscale("log")
        ax.set_title(exp)
        fig.tight_layout()
        fig.savefig(folder / f"{exp}.svg", format="svg", metadata={"Date": None})
        plt.close(fig)


if __name__ == "__main__":
    main()
