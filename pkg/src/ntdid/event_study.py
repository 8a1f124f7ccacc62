"""Conventional normalized event study, for contrast with the 2x2 stack.

Per gender, earnings are regressed on event-time dummies (relative year -1
omitted) plus age and calendar-year fixed effects, pooling all treatment
groups. Event coefficients are normalized by the mean predicted earnings
net of event terms among observations at that event time. Under staggered
timing with heterogeneous effects this estimator mixes groups and can be
biased — that caveat is the point of including it.

All regressors are indicators, so the normal equations are assembled from
contingency counts in one pass; a greedy factorization keeps earlier
columns (intercept, event, age, year order) and drops collinear ones with
a report, which pins down the single-group case where age dummies are
redundant with event time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CollinearDesign, WindowMismatch
from .panel import NEVER, FEMALE, MALE, PanelData


def _greedy_factor(A: np.ndarray, rtol: float = 1e-9):
    """Cholesky with column skipping; returns (kept, dropped) indices.

    Columns are admitted in order; a column whose residual variance after
    projection on the kept predecessors is below rtol of its own scale is
    collinear and dropped. Keeping earlier columns makes the resolution of
    rank deficiency deterministic and reportable.
    """
    p = A.shape[0]
    L = np.zeros((p, p))
    kept, dropped = [], []
    for j in range(p):
        d = A[j, j] - L[j, :j] @ L[j, :j]
        if A[j, j] <= 0 or d <= rtol * A[j, j]:
            dropped.append(j)
            continue
        L[j, j] = math.sqrt(d)
        if j + 1 < p:
            L[j + 1:, j] = (A[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
        kept.append(j)
    return kept, dropped


@dataclass
class EventStudyFit:
    """Per-gender event-study fit with normalized coefficients."""

    gender: str
    window: tuple
    beta: dict           # e -> coefficient (reference e = -1 -> 0.0)
    beta_se: dict
    theta_es: dict       # e -> beta_e / mean predicted baseline at e
    alpha_age: dict
    alpha_year: dict
    dropped: list        # human-readable dropped-column report
    n_obs: int
    rss: float
    normal_residual: float

    def to_frame(self):
        import pandas as pd

        rows = [{"e": e, "beta": self.beta[e], "se": self.beta_se[e],
                 "theta_es": self.theta_es[e]}
                for e in sorted(self.beta)]
        return pd.DataFrame(rows)


def fit_event_study(data: PanelData, g: str, event_window=(-5, 10),
                    rtol: float = 1e-9) -> EventStudyFit:
    """Least-squares event study for one gender.

    Rows are parent observations with event time e = age - treatment age
    inside the window. The design is intercept + event dummies (e != -1)
    + age dummies (first age omitted) + year dummies (first year omitted);
    further collinear columns are dropped greedily and reported.
    """
    g_code = 0 if g == FEMALE else 1
    lo, hi = int(event_window[0]), int(event_window[1])
    e_all = data.age - data.treat_age
    rows = np.nonzero((data.gender_code == g_code)
                      & (data.treat_age != NEVER)
                      & (e_all >= lo) & (e_all <= hi))[0]
    if len(rows) == 0:
        raise CollinearDesign("no observations in the event window")
    y = data.earnings[rows]
    ev = e_all[rows]
    age = data.age[rows]
    year = data.year[rows]

    events = np.arange(lo, hi + 1)
    ages = np.unique(age)
    years = np.unique(year)

    # column layout: 0 intercept | events != -1 | ages[1:] | years[1:]
    ev_cols = [e for e in events if e != -1]
    n_ev, n_ag, n_yr = len(ev_cols), len(ages) - 1, len(years) - 1
    p = 1 + n_ev + n_ag + n_yr
    names = (["intercept"] + [f"event={e}" for e in ev_cols]
             + [f"age={a}" for a in ages[1:]]
             + [f"year={t}" for t in years[1:]])

    ev_pos = {e: 1 + i for i, e in enumerate(ev_cols)}
    ev_col = np.array([ev_pos.get(e, -1) for e in events])[ev - lo]
    age_col = np.searchsorted(ages, age) + n_ev  # index 0 -> n_ev = ref age
    age_col = np.where(age_col == n_ev, -1, age_col)
    yr_col = np.searchsorted(years, year) + 1 + n_ev + n_ag - 1
    yr_col = np.where(yr_col == n_ev + n_ag, -1, yr_col)
    intercept = np.zeros(len(rows), dtype=np.int64)

    cols = (intercept, ev_col, age_col, yr_col)
    A = np.zeros(p * p)
    b = np.zeros(p)
    for c1 in cols:
        m1 = c1 >= 0
        np.add.at(b, c1[m1], y[m1])
        for c2 in cols:
            m = m1 & (c2 >= 0)
            np.add.at(A, c1[m] * p + c2[m], 1.0)
    A = A.reshape(p, p)
    yty = float(y @ y)

    kept, dropped_idx = _greedy_factor(A, rtol=rtol)
    if 0 in dropped_idx:
        raise CollinearDesign("design has no usable columns")
    sub = np.ix_(kept, kept)
    coef = np.zeros(p)
    Ak = A[sub]
    coef[kept] = np.linalg.solve(Ak, b[kept])
    rss = max(yty - 2 * coef @ b + coef @ A @ coef, 0.0)
    n, k = len(rows), len(kept)
    sigma2 = rss / max(n - k, 1)
    var = np.zeros(p)
    var[kept] = sigma2 * np.diag(np.linalg.inv(Ak))
    normal_residual = float(np.max(np.abs(b - A @ coef)))

    beta = {int(e): (float(coef[ev_pos[e]]) if e != -1 else 0.0)
            for e in events}
    beta_se = {int(e): (float(math.sqrt(max(var[ev_pos[e]], 0.0)))
                        if e != -1 else 0.0) for e in events}
    alpha_age = {int(a): float(coef[n_ev + i]) if i else 0.0
                 for i, a in enumerate(ages)}
    alpha_year = {int(t): float(coef[1 + n_ev + n_ag - 1 + i]) if i else 0.0
                  for i, t in enumerate(years)}

    # predicted earnings net of event terms, averaged per event time
    base = coef[0] + np.where(age_col >= 0, coef[np.maximum(age_col, 0)], 0.0) \
        + np.where(yr_col >= 0, coef[np.maximum(yr_col, 0)], 0.0)
    theta_es = {}
    for e in events:
        at_e = ev == e
        if not at_e.any():
            theta_es[int(e)] = float("nan")
            continue
        denom = float(base[at_e].mean())
        theta_es[int(e)] = beta[int(e)] / denom if denom else float("nan")

    return EventStudyFit(
        gender=g, window=(lo, hi), beta=beta, beta_se=beta_se,
        theta_es=theta_es, alpha_age=alpha_age, alpha_year=alpha_year,
        dropped=[names[j] for j in dropped_idx],
        n_obs=n, rss=float(rss), normal_residual=normal_residual)


def event_study_gap(fit_f: EventStudyFit, fit_m: EventStudyFit) -> list:
    """Per-event-time gender gap in normalized event coefficients.

    Pre-treatment gaps (e < 0) are the conventional placebo series; the
    post-treatment gaps are the conventional headline penalty series.
    """
    if fit_f.window != fit_m.window:
        raise WindowMismatch(
            f"windows differ: {fit_f.window} vs {fit_m.window}")
    out = []
    for e in sorted(fit_f.theta_es):
        out.append({
            "e": e,
            "gap": fit_f.theta_es[e] - fit_m.theta_es[e],
            "theta_f": fit_f.theta_es[e],
            "theta_m": fit_m.theta_es[e],
            "period": "pre" if e < 0 else "post",
        })
    return out
