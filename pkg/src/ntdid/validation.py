"""Pre-treatment validation suites and the pre-birth gender-ratio series.

Each test is a 2x2 statistic evaluated strictly before treatment: if the
identifying assumption of the framework holds, the population value is 0.
Tests are reported per treatment-control pair; pooling across control
groups would mask offsetting violations, so the suite never aggregates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .errors import (
    DegenerateDenominator,
    EmptyCell,
    InvalidWindow,
    NtdidError,
)
from .estimators import Estimand
from .inference import InfluenceVector, cluster_se, influence_composite, influence_mu
from .panel import FEMALE, MALE, PanelData, build_pretrend_slice
from . import estimators

FRAMEWORKS = ("DID_F", "DID_M", "TD", "NTD")

_FRAMEWORK_ESTIMAND = {
    "DID_F": Estimand.DID_ATE_F,
    "DID_M": Estimand.DID_ATE_M,
    "TD": Estimand.TD_GAP,
    "NTD": Estimand.NTD_GAP,
}


@dataclass
class ValidationResult:
    """One pre-treatment placebo test for one treatment-control pair."""

    framework: str
    d: int
    dprime: int
    e: int
    estimate: float = float("nan")
    se: float = float("nan")
    z: float = float("nan")
    passed: bool = False
    alpha: float = 0.05
    reason: str = ""

    def to_dict(self):
        return {
            "framework": self.framework, "d": self.d, "dprime": self.dprime,
            "e": self.e, "estimate": self.estimate, "se": self.se,
            "z": self.z, "passed": self.passed, "alpha": self.alpha,
            "reason": self.reason,
        }


def _critical(alpha: float) -> float:
    return float(sstats.norm.ppf(1.0 - alpha / 2.0))


def pretrend_test(data: PanelData, framework: str, d: int, dprime: int,
                  e: int, alpha: float = 0.05,
                  baseline_gap: int = 1) -> ValidationResult:
    """Placebo 2x2 statistic at pre-treatment event time e < 0.

    The target age is a = d + e with baseline b = d - baseline_gap; the
    statistic is the framework's gap evaluated on ages where group d is
    still untreated, so its population value is 0 under the framework's
    identifying assumption.
    """
    if framework not in _FRAMEWORK_ESTIMAND:
        raise ValueError(f"unknown framework {framework!r}")
    if e >= 0:
        raise InvalidWindow(f"pre-treatment test requires e < 0, got {e}")
    a = d + e
    b = d - baseline_gap
    if a >= b:
        raise InvalidWindow(
            f"target age {a} must precede baseline age {b}")
    sl = build_pretrend_slice(data, d, dprime, a, baseline_gap=baseline_gap)
    estimand = _FRAMEWORK_ESTIMAND[framework]
    value = estimators.evaluate(sl, estimand).value
    iv = influence_composite(data, sl, estimand)
    se = cluster_se(iv)
    z = value / se if se > 0 else (0.0 if value == 0 else float("inf"))
    return ValidationResult(framework=framework, d=d, dprime=dprime, e=e,
                            estimate=value, se=se, z=z,
                            passed=abs(z) <= _critical(alpha), alpha=alpha)


def pretrend_suite(data: PanelData, d: int, max_horizon: int = 5,
                   pre_events=(-4, -3, -2), alpha: float = 0.05,
                   bonferroni: bool = False,
                   baseline_gap: int = 1) -> list:
    """All placebo tests for one treatment group.

    Control groups d' = d + 1 .. d + max_horizon + 1 are each tested
    separately at every pre-treatment event time, for all four frameworks.
    Infeasible elements are kept in the output with a reason instead of
    aborting the suite.
    """
    offsets = range(1, max_horizon + 2)
    events = sorted(pre_events)
    n_tests = len(FRAMEWORKS) * len(offsets) * len(events)
    level = alpha / n_tests if bonferroni else alpha
    out = []
    for framework in FRAMEWORKS:
        for off in offsets:
            for e in events:
                dprime = d + off
                try:
                    out.append(pretrend_test(data, framework, d, dprime, e,
                                             alpha=level,
                                             baseline_gap=baseline_gap))
                except NtdidError as exc:
                    out.append(ValidationResult(
                        framework=framework, d=d, dprime=dprime, e=e,
                        alpha=level, reason=str(exc)))
    return out


def ntd_gate(results) -> dict:
    """Advisory summary: a group is plausible when all its NTD tests pass.

    Only completed NTD tests count; elements skipped for feasibility are
    reported separately. The gate never filters estimation automatically.
    """
    ntd = [r for r in results if r.framework == "NTD"]
    tested = [r for r in ntd if not r.reason]
    return {
        "n_tested": len(tested),
        "n_failed": sum(not r.passed for r in tested),
        "n_skipped": len(ntd) - len(tested),
        "plausible": bool(tested) and all(r.passed for r in tested),
    }


def rho_pretrend_series(data: PanelData, d_range, a_range) -> list:
    """Pre-birth female-to-male mean-earnings ratios with SEs.

    For ages a < d both genders are untreated, so the ratio of cell means
    estimates the counterfactual gender ratio directly. Points with empty
    cells or a degenerate male mean are skipped with a reason.
    """
    out = []
    for d in d_range:
        for a in a_range:
            if a >= d:
                continue
            point = {"d": int(d), "a": int(a), "ratio": float("nan"),
                     "se": float("nan"), "reason": ""}
            try:
                point.update(_ratio_point(data, d, a))
            except (EmptyCell, DegenerateDenominator) as exc:
                point["reason"] = str(exc)
            out.append(point)
    return out


def _ratio_point(data: PanelData, d: int, a: int) -> dict:
    rows_f = data.cell_rows(FEMALE, d, a)
    rows_m = data.cell_rows(MALE, d, a)
    if len(rows_f) == 0:
        raise EmptyCell(FEMALE, d, a)
    if len(rows_m) == 0:
        raise EmptyCell(MALE, d, a)
    n = len(rows_f) + len(rows_m)
    mf = float(data.earnings[rows_f].mean())
    mm = float(data.earnings[rows_m].mean())
    scale = (abs(data.earnings[rows_f]).sum()
             + abs(data.earnings[rows_m]).sum()) / n
    if abs(mm) < 1e-8 * max(scale, 1.0):
        raise DegenerateDenominator(f"male mean at (d={d}, a={a})", mm)
    ratio = mf / mm
    # ratio chain rule: psi = psi_f / mm - (mf / mm^2) psi_m
    iv_f = influence_mu(data, FEMALE, d, a, n=n)
    iv_m = influence_mu(data, MALE, d, a, n=n)
    iv = InfluenceVector(
        estimand=("rho", d, a),
        positions=np.concatenate([iv_f.positions, iv_m.positions]),
        values=np.concatenate([iv_f.values / mm,
                               -(mf / mm ** 2) * iv_m.values]),
        cluster_codes=np.concatenate([iv_f.cluster_codes,
                                      iv_m.cluster_codes]),
        n=n)
    return {"ratio": ratio, "se": cluster_se(iv)}


def results_frame(results):
    """Suite output as a tidy DataFrame for CSV export and plotting."""
    import pandas as pd

    return pd.DataFrame([r.to_dict() for r in results])
