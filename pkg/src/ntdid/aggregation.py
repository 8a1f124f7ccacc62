"""Aggregation of per-group effects under explicit treatment-timing weights.

Two normalized aggregates are available: an average of per-group ratios
(theta_agg1) and a ratio of weighted averages (theta_agg2). They differ
whenever counterfactual levels vary across groups; theta_agg2 implicitly
reweights toward high-level groups, and the implied weights are returned so
the difference is auditable. A fixed reference distribution makes
aggregates comparable across strata with different timing compositions.

Aggregate SEs treat the weights as fixed constants and the per-group
samples as independent; sampling noise in estimated weights is ignored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, MissingGroup
from .panel import NEVER, PanelData


@dataclass
class TreatmentDistribution:
    """Probability weights over treatment groups (age at first birth)."""

    weights: dict
    label: str = ""

    def __post_init__(self):
        clean = {int(d): float(w) for d, w in self.weights.items() if w > 0}
        total = sum(clean.values())
        if total <= 0:
            raise DegenerateDenominator("distribution weight total", total)
        self.weights = {d: w / total for d, w in clean.items()}

    @property
    def support(self):
        return sorted(self.weights)

    def restricted(self, e: int, d_max: int, strict: bool = False):
        """Weights renormalized to the feasible support d + e < d_max."""
        feasible = {d: w for d, w in self.weights.items() if d + e < d_max}
        dropped = sorted(set(self.weights) - set(feasible))
        if strict and dropped:
            raise MissingGroup(dropped)
        if not feasible:
            raise MissingGroup(self.support)
        total = sum(feasible.values())
        return {d: w / total for d, w in feasible.items()}, dropped


def uniform_distribution(groups, label: str = "uniform") -> TreatmentDistribution:
    return TreatmentDistribution({d: 1.0 for d in groups}, label=label)


def normal_distribution(mean: float, groups, sd: float = 3.0,
                        label: str = "") -> TreatmentDistribution:
    """Normal density discretized over the given treatment groups."""
    weights = {d: math.exp(-0.5 * ((d - mean) / sd) ** 2) for d in groups}
    return TreatmentDistribution(weights, label=label or f"normal({mean},{sd})")


def empirical_distribution(data: PanelData, e: int = 0,
                           d_max: int | None = None,
                           label: str = "empirical") -> TreatmentDistribution:
    """Unit shares of each treatment group within the feasible support."""
    first = np.unique(data.unit_code, return_index=True)[1]
    d_units = data.treat_age[first]
    d_units = d_units[d_units != NEVER]
    if d_max is None:
        d_max = int(data.age.max()) + 1
    d_units = d_units[d_units + e < d_max]
    groups, counts = np.unique(d_units, return_counts=True)
    return TreatmentDistribution(
        {int(d): int(c) for d, c in zip(groups, counts)}, label=label)


def load_distribution(path, label: str = "") -> TreatmentDistribution:
    """Read a (d, weight) CSV."""
    import pandas as pd

    df = pd.read_csv(path)
    return TreatmentDistribution(
        dict(zip(df.iloc[:, 0].astype(int), df.iloc[:, 1].astype(float))),
        label=label or str(path))


def _require(values: dict, support) -> list:
    missing = [d for d in support if d not in values]
    if missing:
        raise MissingGroup(missing)
    return [values[d] for d in support]


def _combined_se(ses: dict, weights: dict) -> float:
    """Fixed-weight SE assuming independent per-group samples."""
    total = 0.0
    for d, w in weights.items():
        se = ses.get(d)
        if se is None or not np.isfinite(se):
            return float("nan")
        total += (w * se) ** 2
    return math.sqrt(total)


def theta_agg1(thetas: dict, dist: TreatmentDistribution, e: int, d_max: int,
               ses: dict | None = None, strict: bool = False):
    """Average of per-group normalized effects under feasible-support weights.

    Returns (value, info) where info carries the renormalized weights, the
    dropped groups, and a fixed-weight SE when per-group SEs are supplied.
    """
    weights, dropped = dist.restricted(e, d_max, strict=strict)
    support = sorted(weights)
    vals = _require(thetas, support)
    value = float(sum(weights[d] * v for d, v in zip(support, vals)))
    info = {"weights": weights, "dropped": dropped,
            "se": _combined_se(ses, weights) if ses else float("nan")}
    return value, info


def theta_agg2(ates: dict, apos: dict, dist: TreatmentDistribution, e: int,
               d_max: int, strict: bool = False):
    """Ratio of weighted averages: (sum p ATE) / (sum p APO).

    Equivalent to a theta average under implied weights
    w_d = p_d APO_d / sum p APO, returned in info — groups with larger
    counterfactual levels get proportionally more weight.
    """
    weights, dropped = dist.restricted(e, d_max, strict=strict)
    support = sorted(weights)
    ate_vals = _require(ates, support)
    apo_vals = _require(apos, support)
    denom = sum(weights[d] * v for d, v in zip(support, apo_vals))
    if abs(denom) < 1e-12 * max(abs(v) for v in apo_vals):
        raise DegenerateDenominator("weighted APO average", denom)
    value = float(sum(weights[d] * v for d, v in zip(support, ate_vals)) / denom)
    implied = {d: weights[d] * apo / denom
               for d, apo in zip(support, apo_vals)}
    return value, {"weights": weights, "implied_weights": implied,
                   "dropped": dropped}


def rho_agg(delta_rhos: dict, dist: TreatmentDistribution, e: int, d_max: int,
            ses: dict | None = None, strict: bool = False):
    """Weighted average of per-group gender-ratio effects."""
    return theta_agg1(delta_rhos, dist, e, d_max, ses=ses, strict=strict)


def reference_reweight(strata: dict, reference: TreatmentDistribution,
                       e: int = 0, d_max: int | None = None) -> dict:
    """Aggregate each stratum's per-group values under one fixed reference.

    strata maps label -> {d: value}. With identical weights everywhere,
    cross-stratum differences reflect per-group effects, not timing
    composition. Reference support must be available in every stratum.
    """
    if d_max is None:
        d_max = max(reference.support) + max(0, e) + 1
    out = {}
    for label, values in strata.items():
        value, info = theta_agg1(values, reference, e, d_max)
        out[label] = {"value": value, "weights": info["weights"]}
    return out


def aggregate_frame(aggregates):
    """Tidy (label, e, value, se) DataFrame for CSV export."""
    import pandas as pd

    return pd.DataFrame(aggregates,
                        columns=["label", "e", "value", "se"])
