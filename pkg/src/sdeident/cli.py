"""Command-line front end.

Commands: check, explain, simulate, estimate, reproduce, intervene,
genericity. Model files follow the JSON schema of
:func:`sdeident.models.model_from_dict`; trajectory CSVs use the
``replicate,time,x_1..x_d`` layout. The ``check`` exit code encodes the
verdict for scripting: 0 identifiable, 2 unidentifiable, 3 inconclusive,
1 error.
"""

from __future__ import annotations

import json
import sys

import click
import numpy as np

from . import presets
from .estimate import fit as fit_op
from .estimate import run_experiment
from .exceptions import SdeIdentError
from .identifiability import (
    check_additive,
    check_commuting,
    check_controllability,
    check_multiplicative,
    diagnose_subspace,
    genericity_probe,
)
from .intervention import (
    InterventionSpec,
    compare_post_intervention,
    post_moments_additive,
    post_moments_multiplicative,
)
from .models import AdditiveSDE, MultiplicativeSDE, load_model
from .simulate import load_trajectories, simulate_em, simulate_exact_additive

EXIT = {"identifiable": 0, "unidentifiable": 2, "inconclusive": 3}


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def _load(path):
    try:
        return load_model(path)
    except (OSError, SdeIdentError) as exc:
        _fail(str(exc))


def _emit(text: str, out):
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
    else:
        click.echo(text)


def _emit_csv(obj, out):
    if out:
        obj.to_csv(out)
    else:
        obj.to_csv(sys.stdout)


@click.group()
def main():
    """Identifiability analysis for linear SDE generators."""


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Write report JSON here.")
@click.option("--tol", type=float, default=None, help="Relative rank tolerance.")
def check(model_path, out, tol):
    """Run all applicable identifiability checks on a model file.

    Exit code: 0 identifiable, 2 unidentifiable, 3 inconclusive, 1 error.
    """
    model = _load(model_path)
    try:
        if isinstance(model, AdditiveSDE):
            reports = {
                "generator-condition": check_additive(model, rank_rtol=tol),
                "controllability": check_controllability(model, rank_rtol=tol),
            }
            verdict = reports["generator-condition"].verdict
        else:
            reports = {
                "sufficient-conditions": check_multiplicative(model, rank_rtol=tol),
                "commuting-conditions": check_commuting(model, rank_rtol=tol),
            }
            verdict = (
                "identifiable"
                if any(r.verdict == "identifiable" for r in reports.values())
                else "inconclusive"
            )
    except SdeIdentError as exc:
        _fail(str(exc))
    payload = {
        "verdict": verdict,
        "checks": {name: rep.to_dict() for name, rep in reports.items()},
    }
    _emit(json.dumps(payload, indent=2, sort_keys=True), out)
    sys.exit(EXIT[verdict])


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None)
@click.option("--tol", type=float, default=None)
def explain(model_path, out, tol):
    """Explain an additive model's verdict via invariant-subspace weights."""
    model = _load(model_path)
    if not isinstance(model, AdditiveSDE):
        _fail("explain currently supports additive models only")
    try:
        report = check_additive(model, rank_rtol=tol)
    except SdeIdentError as exc:
        _fail(str(exc))
    lines = [f"verdict: {report.verdict}"]
    cond = report.condition("joint-krylov")
    lines.append(
        f"joint Krylov rank {cond.achieved_rank} of required {cond.required_rank}"
    )
    if report.diagnosis is not None:
        diag = report.diagnosis
        lines.append(
            f"failing block index {diag.block_index} ({diag.block_kind}): all "
            "tested vectors have (near-)zero weight on this eigen-direction"
        )
        for j, w in enumerate(diag.weights):
            label = "x0" if j == 0 else f"noise-cov column {j}"
            lines.append(f"  |w| for {label}: {w:.3e}")
    else:
        lines.append("no drift-invariant proper subspace confines the test vectors")
    _emit("\n".join(lines), out)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--out", type=click.Path(), default=None, help="Output CSV path.")
@click.option("--T", "horizon", type=float, default=1.0, show_default=True)
@click.option("--n-obs", type=int, default=50, show_default=True)
@click.option("--n-sub", type=int, default=10, show_default=True)
@click.option("--N", "n_paths", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option(
    "--scheme",
    type=click.Choice(["euler", "exact"]),
    default="euler",
    show_default=True,
)
def simulate(model_path, out, horizon, n_obs, n_sub, n_paths, seed, scheme):
    """Simulate trajectories and write them as CSV."""
    model = _load(model_path)
    try:
        if scheme == "exact":
            if not isinstance(model, AdditiveSDE):
                _fail("exact sampling requires an additive model")
            traj = simulate_exact_additive(model, horizon, n_obs, N=n_paths, seed=seed)
        else:
            traj = simulate_em(
                model, horizon, n_obs, n_sub=n_sub, N=n_paths, seed=seed
            )
    except SdeIdentError as exc:
        _fail(str(exc))
    _emit_csv(traj, out)


@main.command()
@click.option("--data", "data_path", required=True, type=click.Path(exists=True))
@click.option(
    "--model-kind",
    type=click.Choice(["additive", "multiplicative"]),
    required=True,
)
@click.option(
    "--init",
    "init_path",
    required=True,
    type=click.Path(exists=True),
    help="Model JSON used as the optimizer starting point.",
)
@click.option(
    "--true",
    "true_path",
    type=click.Path(exists=True),
    default=None,
    help="Optional truth for MSE metrics.",
)
@click.option("--out", type=click.Path(), default=None)
def estimate(data_path, model_kind, init_path, true_path, out):
    """Fit model parameters to a trajectory CSV; emits FitResult JSON."""
    init = _load(init_path)
    truth = _load(true_path) if true_path else None
    try:
        data = load_trajectories(data_path)
        result = fit_op(data, model_kind, init, true_model=truth)
    except (SdeIdentError, ValueError) as exc:
        _fail(str(exc))
    _emit(result.to_json(), out)


@main.command()
@click.argument("scenario", type=click.Choice(sorted(presets.SCENARIOS)))
@click.option("--N", "n_list", default="5,10", show_default=True,
              help="Comma-separated trajectory counts.")
@click.option("--replications", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n-obs", type=int, default=50, show_default=True)
@click.option("--n-sub", type=int, default=10, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="Output CSV path.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv",
              show_default=True)
def reproduce(scenario, n_list, replications, seed, n_obs, n_sub, threads, out, fmt):
    """Run a named benchmark scenario and emit its MSE table."""
    try:
        N_list = tuple(int(tok) for tok in n_list.split(",") if tok.strip())
    except ValueError:
        _fail(f"could not parse --N {n_list!r}")
    spec = presets.scenario_spec(
        scenario, N_list, replications, seed=seed, n_obs=n_obs, n_sub=n_sub
    )
    result = run_experiment(spec, n_jobs=threads)
    if fmt == "json":
        _emit(result.to_json(), out)
    else:
        _emit_csv(result, out)


@main.command()
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option(
    "--other",
    "other_path",
    type=click.Path(exists=True),
    default=None,
    help="Second model; when given, emits an equivalence comparison report.",
)
@click.option("--coordinate", type=int, default=1, show_default=True,
              help="1-based coordinate to clamp.")
@click.option("--value", type=float, default=1.0, show_default=True)
@click.option("--T", "horizon", type=float, default=1.0, show_default=True)
@click.option("--n-points", type=int, default=11, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def intervene(model_path, other_path, coordinate, value, horizon, n_points, out):
    """Post-intervention moments, or a two-model comparison report."""
    model = _load(model_path)
    spec = InterventionSpec(coordinate=coordinate, value=value)
    times = np.linspace(horizon / n_points, horizon, n_points)
    try:
        if other_path:
            other = _load(other_path)
            report = compare_post_intervention(model, other, spec, times)
            _emit(json.dumps(report, indent=2, sort_keys=True), out)
            return
        if isinstance(model, AdditiveSDE):
            curve = post_moments_additive(model, spec, times)
        else:
            curve = post_moments_multiplicative(model, spec, times)
    except (SdeIdentError, ValueError) as exc:
        _fail(str(exc))
    _emit_csv(curve, out)


@main.command()
@click.option("--d", "dim", type=int, default=2, show_default=True)
@click.option("--m", "n_noise", type=int, default=2, show_default=True)
@click.option(
    "--kind",
    type=click.Choice(["additive", "multiplicative"]),
    default="additive",
    show_default=True,
)
@click.option("--samples", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None)
def genericity(dim, n_noise, kind, samples, seed, out):
    """Fraction of random systems satisfying the identifiability conditions."""
    frac = genericity_probe(dim, n_noise, kind, samples, seed=seed)
    payload = {
        "d": dim,
        "m": n_noise,
        "kind": kind,
        "samples": samples,
        "seed": seed,
        "fraction_satisfied": frac,
    }
    _emit(json.dumps(payload, indent=2, sort_keys=True), out)


if __name__ == "__main__":
    main()
