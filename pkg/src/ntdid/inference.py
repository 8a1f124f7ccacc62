"""Influence functions and cluster-robust variance for 2x2 estimands.

The influence function of a cell mean mu = E[S Y]/E[S] is
psi_i = S_i / E[S] * (Y_i - mu), nonzero only inside the cell. Composite
estimands combine these linearly with the chain-rule gradient produced by
the estimators module. The clustered variance replaces observations with
cluster sums: Var = n^-2 * sum_c (sum_{i in c} psi_i)^2; it is invariant to
enlarging the reference sample with zero-contribution rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import estimators
from .errors import DegenerateDenominator, EmptyCell
from .estimators import Estimand, EstimateRecord, evaluate
from .panel import GENDERS, PanelData, TwoByTwoSlice, build_two_by_two


@dataclass
class InfluenceVector:
    """Sparse per-observation influence contributions.

    positions index rows of the source panel; rows not listed contribute 0.
    n is the size of the reference sample the contributions are scaled to.
    """

    estimand: object
    positions: np.ndarray
    values: np.ndarray
    cluster_codes: np.ndarray
    n: int

    def total(self) -> float:
        return float(self.values.sum())

    def dense(self, n: int | None = None) -> np.ndarray:
        """Contributions aligned to dataset row order (zeros elsewhere)."""
        out = np.zeros(self.n if n is None else n)
        np.add.at(out, self.positions, self.values)
        return out

    def abs_total(self) -> float:
        return float(np.abs(self.values).sum())

    def cluster_sums(self):
        """(cluster codes, summed contributions) over contributing rows."""
        codes, inv = np.unique(self.cluster_codes, return_inverse=True)
        sums = np.bincount(inv, weights=self.values)
        return codes, sums


def _slice_rows(data: PanelData, sl: TwoByTwoSlice):
    keys = [(g, grp, age) for g in GENDERS for grp in (sl.d, sl.dprime)
            for age in (sl.a, sl.b)]
    rows = {k: data.cell_rows(*k) for k in keys}
    n = int(sum(len(r) for r in rows.values()))
    return rows, n


def influence_mu(data: PanelData, gender: str, treat_age: int, age: int,
                 n: int | None = None) -> InfluenceVector:
    """Influence of the (gender, group, age) cell mean.

    n defaults to the full panel size; any reference sample containing the
    cell yields the same clustered SE.
    """
    rows = data.cell_rows(gender, treat_age, age)
    if len(rows) == 0:
        raise EmptyCell(gender, treat_age, age)
    if n is None:
        n = data.n_rows
    y = data.earnings[rows]
    mu = y.mean()
    values = (y - mu) * (n / len(rows))
    return InfluenceVector(estimand=("mu", gender, treat_age, age),
                           positions=rows, values=values,
                           cluster_codes=data.cluster_code[rows], n=n)


def influence_from_gradient(data: PanelData, grad: dict, n: int | None = None,
                            label=None) -> InfluenceVector:
    """Influence vector for any smooth function of cell means.

    grad maps (gender, group, age) to the partial derivative with respect
    to that cell mean; psi = sum over cells of coefficient * psi_mu_cell.
    """
    if n is None:
        n = int(sum(len(data.cell_rows(*key)) for key in grad))
    positions, values = [], []
    for key, coef in grad.items():
        r = data.cell_rows(*key)
        if len(r) == 0:
            raise EmptyCell(*key)
        y = data.earnings[r]
        positions.append(r)
        values.append(coef * (y - y.mean()) * (n / len(r)))
    positions = np.concatenate(positions)
    values = np.concatenate(values)
    return InfluenceVector(estimand=label, positions=positions,
                           values=values,
                           cluster_codes=data.cluster_code[positions], n=n)


def influence_composite(data: PanelData, sl: TwoByTwoSlice,
                        estimand: Estimand) -> InfluenceVector:
    """Influence function of a composite estimand via the chain rule.

    psi = sum over cells of (d estimand / d mu_cell) * psi_mu_cell, with the
    gradient evaluated at the sample cell means (plug-in).
    """
    cv = evaluate(sl, estimand)
    _, n = _slice_rows(data, sl)
    return influence_from_gradient(data, cv.grad, n=n, label=estimand)


def cluster_se(iv: InfluenceVector, n: int | None = None) -> float:
    """Cluster-robust standard error from an influence vector."""
    if n is None:
        n = iv.n
    if len(iv.values) == 0:
        return 0.0
    _, sums = iv.cluster_sums()
    return float(np.sqrt((sums ** 2).sum()) / n)


def estimate(data: PanelData, sl: TwoByTwoSlice,
             estimand: Estimand) -> EstimateRecord:
    """Point estimate plus IF-based cluster-robust SE on one slice."""
    iv = influence_composite(data, sl, estimand)
    value = evaluate(sl, estimand).value
    codes = np.unique(iv.cluster_codes)
    return EstimateRecord(estimand=estimand, d=sl.d, dprime=sl.dprime,
                          a=sl.a, b=sl.b, value=value,
                          se=cluster_se(iv), n_obs=iv.n,
                          n_clusters=len(codes), influence=iv)


@dataclass
class BootstrapResult:
    se: float
    reps: int
    redraws: int

    def __float__(self):
        return self.se


def cluster_bootstrap(data: PanelData, sl: TwoByTwoSlice, estimand: Estimand,
                      reps: int, seed: int, redraw_cap: int = 10) -> BootstrapResult:
    """Cluster bootstrap SE used as an internal oracle for the IF-based SEs.

    Clusters contributing to the slice are resampled with replacement;
    cell means are recomputed from cluster multiplicities and the estimand
    re-evaluated. Degenerate resamples are redrawn up to redraw_cap times
    per replication and counted.
    """
    if reps < 100:
        raise ValueError("reps must be at least 100")
    rows, _ = _slice_rows(data, sl)
    all_rows = np.concatenate([r for r in rows.values()])
    clusters = np.unique(data.cluster_code[all_rows])
    n_c = len(clusters)
    remap = {c: i for i, c in enumerate(clusters)}

    # per-cell (cluster-local sums, counts) so each replication is two dots
    cell_stats = {}
    for key, r in rows.items():
        local = np.fromiter((remap[c] for c in data.cluster_code[r]),
                            dtype=np.int64, count=len(r))
        sums = np.bincount(local, weights=data.earnings[r], minlength=n_c)
        counts = np.bincount(local, minlength=n_c).astype(np.float64)
        cell_stats[key] = (sums, counts)

    rng = np.random.default_rng(seed)
    draws = np.empty(reps)
    redraws = 0
    for rep in range(reps):
        for attempt in range(redraw_cap + 1):
            picked = rng.integers(0, n_c, size=n_c)
            w = np.bincount(picked, minlength=n_c).astype(np.float64)
            try:
                draws[rep] = _replicate_value(sl, estimand, cell_stats, w)
                break
            except (EmptyCell, DegenerateDenominator):
                redraws += 1
                if attempt == redraw_cap:
                    raise
    return BootstrapResult(se=float(draws.std(ddof=1)), reps=reps,
                           redraws=redraws)


def _replicate_value(sl, estimand, cell_stats, w):
    from .panel import CellStats

    cells = {}
    for key, (sums, counts) in cell_stats.items():
        g, grp, age = key
        cnt = float(w @ counts)
        cells[key] = CellStats(gender=g, treat_age=grp, age=age,
                               count=int(round(cnt)), total=float(w @ sums))
    boot_slice = TwoByTwoSlice(d=sl.d, dprime=sl.dprime, a=sl.a, b=sl.b,
                               cells=cells)
    return evaluate(boot_slice, estimand).value


def estimate_grid(data: PanelData, d_values, event_times,
                  estimands=None, control_offset: int = 1,
                  baseline_gap: int = 1, with_se: bool = True):
    """All requested estimands over a (treatment group, event time) grid.

    Returns a list of EstimateRecord; slices with empty required cells or
    degenerate denominators are skipped (recorded in the companion list of
    skip reasons returned as second element).
    """
    if estimands is None:
        estimands = estimators.CORE_ESTIMANDS
    records, skipped = [], []
    for d in d_values:
        for e in event_times:
            a = d + e
            try:
                sl = build_two_by_two(data, d, a,
                                      control_offset=control_offset,
                                      baseline_gap=baseline_gap)
            except Exception as exc:  # InvalidWindow
                skipped.append({"d": d, "e": e, "reason": str(exc)})
                continue
            for est in estimands:
                try:
                    if with_se:
                        records.append(estimate(data, sl, est))
                    else:
                        value = evaluate(sl, est).value
                        records.append(EstimateRecord(
                            estimand=est, d=sl.d, dprime=sl.dprime,
                            a=sl.a, b=sl.b, value=value))
                except (EmptyCell, DegenerateDenominator) as exc:
                    skipped.append({"d": d, "e": e,
                                    "estimand": est.value,
                                    "reason": str(exc)})
    return records, skipped


def dump_cluster_sums(iv: InfluenceVector, path):
    """Per-cluster influence sums as CSV, for external variance audits."""
    import pandas as pd

    codes, sums = iv.cluster_sums()
    pd.DataFrame({"cluster_code": codes, "influence_sum": sums}).to_csv(
        path, index=False)
