"""Batch command-line front end.

Every subcommand reads a panel (or generator config), writes tidy CSV
artifacts plus a JSON manifest carrying the fully resolved configuration,
its hash, the package version, and the runtime, so each output file is
reproducible from its manifest alone. Failures exit nonzero and emit a
machine-readable error JSON.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import click

from . import __version__, aggregation, bias, covariates, dgp, event_study
from . import inference, validation
from .errors import NtdidError
from .estimators import Estimand
from .panel import GENDERS, build_two_by_two, load_panel, write_panel


def _out_dir(out):
    path = Path(out or os.environ.get("NTDID_OUT", "."))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _apply_config(config, params):
    """Config-file values override CLI-provided parameters."""
    if not config:
        return params
    with open(config) as fh:
        overrides = json.load(fh)
    params = dict(params)
    params.update(overrides)
    return params


def _manifest(out, command, params, started, extra=None):
    resolved = {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in sorted(params.items())}
    payload = {
        "command": command,
        "config": resolved,
        "config_hash": hashlib.sha256(
            json.dumps(resolved, sort_keys=True, default=str).encode()
        ).hexdigest(),
        "version": __version__,
        "runtime_seconds": round(time.time() - started, 3),
    }
    if extra:
        payload.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(payload, fh, indent=2, default=str)


def _fail(exc):
    click.echo(json.dumps({
        "error": type(exc).__name__,
        "message": str(exc),
    }), err=True)
    sys.exit(1)


def _int_list(_ctx, _param, value):
    if not value:
        return None
    return tuple(int(v) for v in str(value).replace(",", " ").split())


@click.group()
@click.option("--threads", type=int, default=None,
              help="Cap worker threads (results are identical at any cap).")
def main(threads):
    """Child-penalty estimation pipelines."""
    if threads:
        os.environ["OMP_NUM_THREADS"] = str(threads)


@main.command()
@click.option("--config", "config_path", required=True,
              type=click.Path(exists=True),
              help="Generator spec as key = value lines.")
@click.option("--seed", type=int, default=None, help="Override spec seed.")
@click.option("--out", default=None, help="Output directory.")
def simulate(config_path, seed, out):
    """Generate a synthetic panel and its causal oracle."""
    started = time.time()
    try:
        spec = dgp.read_spec(config_path)
        if seed is not None:
            spec = dgp.with_overrides(spec, seed=seed)
        data, oracle = dgp.generate(spec)
        outp = _out_dir(out)
        write_panel(data, outp / "panel.csv")
        oracle.write_json(outp / "oracle.json")
        _manifest(outp, "simulate",
                  {"config_path": config_path, "seed": spec.seed},
                  started, extra={"n_rows": data.n_rows,
                                  "n_units": data.n_units})
    except NtdidError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True))
@click.option("--d-values", callback=_int_list, default=None,
              help="Treatment groups (default: all observed).")
@click.option("--event-times", callback=_int_list, default="0 1 2 3 4 5")
@click.option("--estimands", default=None,
              help="Comma-separated estimand ids (default: all fifteen).")
@click.option("--control-offset", type=int, default=1)
@click.option("--baseline-gap", type=int, default=1)
@click.option("--no-se", is_flag=True, default=False)
@click.option("--config", default=None, type=click.Path(exists=True),
              help="JSON file of option overrides.")
@click.option("--out", default=None)
def estimate(input_path, d_values, event_times, estimands, control_offset,
             baseline_gap, no_se, config, out):
    """All estimands over a treatment-group x event-time grid."""
    started = time.time()
    params = _apply_config(config, {
        "input": input_path, "d_values": d_values,
        "event_times": event_times, "estimands": estimands,
        "control_offset": control_offset, "baseline_gap": baseline_gap,
        "no_se": no_se,
    })
    try:
        data = load_panel(params["input"])
        wanted = None
        if params["estimands"]:
            wanted = [Estimand(e.strip())
                      for e in str(params["estimands"]).split(",")]
        dv = params["d_values"] or data.treatment_groups()
        records, skipped = inference.estimate_grid(
            data, dv, params["event_times"], estimands=wanted,
            control_offset=params["control_offset"],
            baseline_gap=params["baseline_gap"],
            with_se=not params["no_se"])
        outp = _out_dir(out)
        import pandas as pd

        pd.DataFrame([r.to_dict() for r in records]).to_csv(
            outp / "estimates.csv", index=False)
        with open(outp / "skipped.json", "w") as fh:
            json.dump(skipped, fh, indent=2)
        _manifest(outp, "estimate", params, started,
                  extra={"n_estimates": len(records),
                         "n_skipped": len(skipped)})
    except NtdidError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True))
@click.option("--d", type=int, required=True)
@click.option("--max-horizon", type=int, default=5)
@click.option("--pre-events", callback=_int_list, default="-4 -3 -2")
@click.option("--alpha", type=float, default=0.05)
@click.option("--bonferroni", is_flag=True, default=False)
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--out", default=None)
def validate(input_path, d, max_horizon, pre_events, alpha, bonferroni,
             config, out):
    """Pre-treatment placebo suite for one treatment group."""
    started = time.time()
    params = _apply_config(config, {
        "input": input_path, "d": d, "max_horizon": max_horizon,
        "pre_events": pre_events, "alpha": alpha, "bonferroni": bonferroni,
    })
    try:
        data = load_panel(params["input"])
        results = validation.pretrend_suite(
            data, params["d"], max_horizon=params["max_horizon"],
            pre_events=params["pre_events"], alpha=params["alpha"],
            bonferroni=params["bonferroni"])
        outp = _out_dir(out)
        validation.results_frame(results).to_csv(outp / "suite.csv",
                                                 index=False)
        with open(outp / "gate.json", "w") as fh:
            json.dump(validation.ntd_gate(results), fh, indent=2)
        _manifest(outp, "validate", params, started,
                  extra={"n_tests": len(results)})
    except NtdidError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True),
              help="estimates.csv produced by the estimate command.")
@click.option("--panel", default=None, type=click.Path(exists=True),
              help="Panel CSV for the empirical timing distribution.")
@click.option("--dist", default="empirical",
              help="empirical | uniform | normal:MEAN[:SD] | CSV path.")
@click.option("--event-times", callback=_int_list, default="0 1 2 3 4 5")
@click.option("--d-max", type=int, default=None)
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--out", default=None)
def aggregate(input_path, panel, dist, event_times, d_max, config, out):
    """Aggregate per-group normalized effects across treatment timing."""
    started = time.time()
    params = _apply_config(config, {
        "input": input_path, "panel": panel, "dist": dist,
        "event_times": event_times, "d_max": d_max,
    })
    try:
        import pandas as pd

        df = pd.read_csv(params["input"])
        d_max = params["d_max"] or int(df["dprime"].max())
        rows = []
        for e in params["event_times"]:
            sub = df[df["a"] - df["d"] == e]
            theta_rows = sub[sub.estimand == "did_theta_f"]
            theta_f = {int(r.d): r.value for r in theta_rows.itertuples()}
            theta_se = {int(r.d): r.se for r in theta_rows.itertuples()
                        if "se" in sub.columns}
            ates = {int(r.d): r.value for r in
                    sub[sub.estimand == "did_ate_f"].itertuples()}
            apos = {int(r.d): r.value for r in
                    sub[sub.estimand == "did_apo_f"].itertuples()}
            if not theta_f:
                continue
            d_obj = _resolve_dist(params["dist"], params["panel"], e, d_max,
                                  theta_f)
            v1, info1 = aggregation.theta_agg1(theta_f, d_obj, e, d_max,
                                               ses=theta_se or None)
            v2, _ = aggregation.theta_agg2(ates, apos, d_obj, e, d_max)
            rows.append({"label": d_obj.label, "e": e, "theta_agg1": v1,
                         "theta_agg2": v2, "se": info1["se"]})
        outp = _out_dir(out)
        pd.DataFrame(rows).to_csv(outp / "aggregates.csv", index=False)
        _manifest(outp, "aggregate", params, started,
                  extra={"n_rows": len(rows)})
    except NtdidError as exc:
        _fail(exc)


def _resolve_dist(dist, panel_path, e, d_max, available):
    if dist == "uniform":
        return aggregation.uniform_distribution(available)
    if dist == "empirical":
        if panel_path:
            return aggregation.empirical_distribution(
                load_panel(panel_path), e=e, d_max=d_max)
        return aggregation.uniform_distribution(available)
    if dist.startswith("normal:"):
        parts = dist.split(":")
        mean = float(parts[1])
        sd = float(parts[2]) if len(parts) > 2 else 3.0
        return aggregation.normal_distribution(mean, available, sd=sd)
    return aggregation.load_distribution(dist)


@main.command("bias-bound")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True))
@click.option("--d", type=int, required=True)
@click.option("--a", type=int, required=True)
@click.option("--grid", default="-0.10 -0.05 0 0.05 0.10",
              help="Assumed fathers' normalized effects.")
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--out", default=None)
def bias_bound(input_path, d, a, grid, config, out):
    """Bias-corrected normalized gaps over assumed fathers' effects."""
    started = time.time()
    params = _apply_config(config, {
        "input": input_path, "d": d, "a": a, "grid": grid,
    })
    try:
        data = load_panel(params["input"])
        sl = build_two_by_two(data, params["d"], params["a"])
        values = [float(v) for v in
                  str(params["grid"]).replace(",", " ").split()]
        rows = bias.bias_grid(sl, grid=values, data=data)
        outp = _out_dir(out)
        bias.grid_frame(rows).to_csv(outp / "bias_grid.csv", index=False)
        _manifest(outp, "bias-bound", params, started,
                  extra={"n_rows": len(rows)})
    except NtdidError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True))
@click.option("--d", type=int, required=True)
@click.option("--a", type=int, required=True)
@click.option("--donors", callback=_int_list, default=None,
              help="Donor groups for the ratio imputation.")
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--out", default=None)
def decompose(input_path, d, a, donors, config, out):
    """Four-term decomposition of the gender trend-violation gap."""
    started = time.time()
    params = _apply_config(config, {
        "input": input_path, "d": d, "a": a, "donors": donors,
    })
    try:
        data = load_panel(params["input"])
        row = bias.decomposition_from_data(data, params["d"], params["a"],
                                           donor_groups=params["donors"])
        outp = _out_dir(out)
        bias.grid_frame([row]).to_csv(outp / "decomposition.csv",
                                      index=False)
        _manifest(outp, "decompose", params, started)
    except NtdidError as exc:
        _fail(exc)


@main.command()
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True))
@click.option("--d", type=int, required=True)
@click.option("--a", type=int, required=True)
@click.option("--gender", type=click.Choice(list(GENDERS)), default="f")
@click.option("--method", type=click.Choice(["OR", "IPW", "DR"]),
              default="DR")
@click.option("--folds", type=int, default=covariates.DEFAULT_FOLDS,
              help="0 disables cross-fitting.")
@click.option("--seed", type=int, default=0)
@click.option("--clip-eps", type=float, default=covariates.DEFAULT_CLIP)
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--out", default=None)
def dr(input_path, d, a, gender, method, folds, seed, clip_eps, config, out):
    """Covariate-adjusted effects with cross-fitted nuisances."""
    started = time.time()
    params = _apply_config(config, {
        "input": input_path, "d": d, "a": a, "gender": gender,
        "method": method, "folds": folds, "seed": seed,
        "clip_eps": clip_eps,
    })
    try:
        data = load_panel(params["input"])
        sl = build_two_by_two(data, params["d"], params["a"])
        fold_obj = (covariates.assign_folds(data, params["folds"],
                                            params["seed"])
                    if params["folds"] else None)
        nf = covariates.fit_nuisances(data, sl, folds=fold_obj,
                                      clip_eps=params["clip_eps"])
        apo = covariates.apo_with_covariates(data, sl, params["gender"], nf,
                                             method=params["method"])
        ate, theta = covariates.ate_theta_with_covariates(
            data, sl, params["gender"], nf, method=params["method"])
        td = covariates.td_with_covariates(data, sl, nf,
                                           method=params["method"])
        outp = _out_dir(out)
        import pandas as pd

        pd.DataFrame([r.to_dict() for r in (apo, ate, theta, td)]).to_csv(
            outp / "dr_estimates.csv", index=False)
        with open(outp / "nuisance_diagnostics.json", "w") as fh:
            json.dump(nf.diagnostics(), fh, indent=2)
        _manifest(outp, "dr", params, started)
    except NtdidError as exc:
        _fail(exc)


@main.command("event-study")
@click.option("--input", "input_path", required=True,
              type=click.Path(exists=True))
@click.option("--window", callback=_int_list, default="-5 10",
              help="Event-time window, inclusive.")
@click.option("--config", default=None, type=click.Path(exists=True))
@click.option("--out", default=None)
def event_study_cmd(input_path, window, config, out):
    """Conventional normalized event study per gender, plus gaps."""
    started = time.time()
    params = _apply_config(config, {"input": input_path, "window": window})
    try:
        data = load_panel(params["input"])
        lo, hi = params["window"][0], params["window"][-1]
        outp = _out_dir(out)
        import pandas as pd

        fits = {}
        for g in GENDERS:
            fits[g] = event_study.fit_event_study(data, g, (lo, hi))
            fits[g].to_frame().to_csv(outp / f"event_study_{g}.csv",
                                      index=False)
        gaps = event_study.event_study_gap(fits["f"], fits["m"])
        pd.DataFrame(gaps).to_csv(outp / "event_study_gaps.csv", index=False)
        _manifest(outp, "event-study", params, started,
                  extra={"dropped_columns": {g: fits[g].dropped
                                             for g in GENDERS}})
    except NtdidError as exc:
        _fail(exc)


if __name__ == "__main__":
    main()
