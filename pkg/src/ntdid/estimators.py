"""Descriptive 2x2 estimands on earnings panels.

Every estimand here is a smooth function of the eight cell means of a
TwoByTwoSlice. Values are computed through a tiny forward-mode derivative
algebra (CellValue) keyed by cell, so the exact gradient with respect to each
cell mean is available for free; the inference module turns that gradient
into influence functions via the chain rule.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import DegenerateDenominator, EmptyCell
from .panel import FEMALE, MALE, TwoByTwoSlice

#: Relative tolerance for denominators: |den| < DENOM_RTOL * (mean absolute
#: earnings in the slice) raises DegenerateDenominator. Relative because
#: currency units are arbitrary.
DENOM_RTOL = 1e-8


class Estimand(enum.Enum):
    """The descriptive estimands computable on a single 2x2 slice."""

    DID_APO_F = "did_apo_f"
    DID_APO_M = "did_apo_m"
    DID_ATE_F = "did_ate_f"
    DID_ATE_M = "did_ate_m"
    DID_THETA_F = "did_theta_f"
    DID_THETA_M = "did_theta_m"
    TD_GAP = "td_gap"
    NTD_GAP = "ntd_gap"
    NTD_ALT = "ntd_alt"
    TD_NULL_APO = "td_null_apo"
    TD_NULL_ATE = "td_null_ate"
    TD_NULL_THETA = "td_null_theta"
    NTD_NULL_APO = "ntd_null_apo"
    NTD_NULL_ATE = "ntd_null_ate"
    NTD_NULL_THETA = "ntd_null_theta"
    # Cross-gender gap normalized by the female reconstructed counterfactual;
    # an additional diagnostic beyond the core fifteen.
    P_GAP = "p_gap"


#: The fifteen core estimands (P_GAP is a supplementary diagnostic).
CORE_ESTIMANDS = tuple(e for e in Estimand if e is not Estimand.P_GAP)

#: Estimands measured in currency units (scale with earnings).
LEVEL_ESTIMANDS = frozenset({
    Estimand.DID_APO_F, Estimand.DID_APO_M, Estimand.DID_ATE_F,
    Estimand.DID_ATE_M, Estimand.TD_GAP, Estimand.TD_NULL_APO,
    Estimand.TD_NULL_ATE, Estimand.NTD_NULL_APO, Estimand.NTD_NULL_ATE,
})


class CellValue:
    """A scalar with its gradient with respect to cell means.

    grad maps (gender, group, age) -> partial derivative. Supports the
    arithmetic needed by the estimand formulas (linear combinations and
    ratios), which is exactly the chain-rule calculus used for the
    influence functions.
    """

    __slots__ = ("value", "grad")

    def __init__(self, value, grad=None):
        self.value = float(value)
        self.grad = grad or {}

    @classmethod
    def leaf(cls, key, value):
        return cls(value, {key: 1.0})

    def _combine(self, other, sa, sb):
        grad = {k: sa * v for k, v in self.grad.items()}
        for k, v in other.grad.items():
            grad[k] = grad.get(k, 0.0) + sb * v
        return CellValue(sa * self.value + sb * other.value, grad)

    def __add__(self, other):
        other = _as_cell_value(other)
        return self._combine(other, 1.0, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        other = _as_cell_value(other)
        return self._combine(other, 1.0, -1.0)

    def __rsub__(self, other):
        return _as_cell_value(other).__sub__(self)

    def __mul__(self, other):
        if isinstance(other, CellValue):
            grad = {k: v * other.value for k, v in self.grad.items()}
            for k, v in other.grad.items():
                grad[k] = grad.get(k, 0.0) + v * self.value
            return CellValue(self.value * other.value, grad)
        return CellValue(self.value * other,
                         {k: v * other for k, v in self.grad.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, CellValue):
            inv = 1.0 / other.value
            grad = {k: v * inv for k, v in self.grad.items()}
            scale = -self.value * inv * inv
            for k, v in other.grad.items():
                grad[k] = grad.get(k, 0.0) + scale * v
            return CellValue(self.value * inv, grad)
        return self * (1.0 / other)

    def __neg__(self):
        return self * -1.0


def _as_cell_value(x):
    return x if isinstance(x, CellValue) else CellValue(x)


class SliceContext:
    """Cell-mean leaves and denominator guard for one slice."""

    def __init__(self, sl: TwoByTwoSlice, denom_rtol: float = DENOM_RTOL):
        self.slice = sl
        self.tol = denom_rtol * sl.earnings_scale()

    def mu(self, gender, group, age) -> CellValue:
        cell = self.slice.cell(gender, group, age)
        if cell.is_empty:
            raise EmptyCell(gender, group, age)
        return CellValue.leaf((gender, group, age), cell.mean)

    def ratio(self, num: CellValue, den: CellValue, what: str) -> CellValue:
        if abs(den.value) < self.tol:
            raise DegenerateDenominator(what, den.value)
        return num / den


def _delta_apo(ctx, g):
    sl = ctx.slice
    return (ctx.mu(g, sl.d, sl.b) + ctx.mu(g, sl.dprime, sl.a)
            - ctx.mu(g, sl.dprime, sl.b))


def _delta_ate(ctx, g):
    sl = ctx.slice
    return ctx.mu(g, sl.d, sl.a) - _delta_apo(ctx, g)


def _delta_theta(ctx, g):
    return ctx.ratio(_delta_ate(ctx, g), _delta_apo(ctx, g),
                     f"delta_apo({g})")


def _ntd_alt(ctx):
    sl = ctx.slice
    observed = ctx.ratio(ctx.mu(FEMALE, sl.d, sl.a), ctx.mu(MALE, sl.d, sl.a),
                         "observed male mean")
    counterfactual = ctx.ratio(_delta_apo(ctx, FEMALE),
                               _delta_apo(ctx, MALE), "delta_apo(m)")
    return observed - counterfactual


def _td_null_apo(ctx):
    return _delta_apo(ctx, FEMALE) + _delta_ate(ctx, MALE)


def _td_null_ate(ctx):
    sl = ctx.slice
    return ctx.mu(FEMALE, sl.d, sl.a) - _td_null_apo(ctx)


def _ntd_null_apo(ctx):
    sl = ctx.slice
    return ctx.ratio(_delta_apo(ctx, FEMALE) * ctx.mu(MALE, sl.d, sl.a),
                     _delta_apo(ctx, MALE), "delta_apo(m)")


def _ntd_null_ate(ctx):
    sl = ctx.slice
    return ctx.mu(FEMALE, sl.d, sl.a) - _ntd_null_apo(ctx)


_FORMULAS = {
    Estimand.DID_APO_F: lambda ctx: _delta_apo(ctx, FEMALE),
    Estimand.DID_APO_M: lambda ctx: _delta_apo(ctx, MALE),
    Estimand.DID_ATE_F: lambda ctx: _delta_ate(ctx, FEMALE),
    Estimand.DID_ATE_M: lambda ctx: _delta_ate(ctx, MALE),
    Estimand.DID_THETA_F: lambda ctx: _delta_theta(ctx, FEMALE),
    Estimand.DID_THETA_M: lambda ctx: _delta_theta(ctx, MALE),
    Estimand.TD_GAP: lambda ctx: _delta_ate(ctx, FEMALE) - _delta_ate(ctx, MALE),
    Estimand.NTD_GAP: lambda ctx: _delta_theta(ctx, FEMALE) - _delta_theta(ctx, MALE),
    Estimand.NTD_ALT: _ntd_alt,
    Estimand.P_GAP: lambda ctx: ctx.ratio(
        _delta_ate(ctx, FEMALE) - _delta_ate(ctx, MALE),
        _delta_apo(ctx, FEMALE), "delta_apo(f)"),
    Estimand.TD_NULL_APO: _td_null_apo,
    Estimand.TD_NULL_ATE: _td_null_ate,
    Estimand.TD_NULL_THETA: lambda ctx: ctx.ratio(
        _td_null_ate(ctx), _td_null_apo(ctx), "td_null_apo"),
    Estimand.NTD_NULL_APO: _ntd_null_apo,
    Estimand.NTD_NULL_ATE: _ntd_null_ate,
    Estimand.NTD_NULL_THETA: lambda ctx: ctx.ratio(
        _ntd_null_ate(ctx), _ntd_null_apo(ctx), "ntd_null_apo"),
}


def evaluate(sl: TwoByTwoSlice, estimand: Estimand,
             denom_rtol: float = DENOM_RTOL) -> CellValue:
    """Value and cell-mean gradient of an estimand on a slice."""
    ctx = SliceContext(sl, denom_rtol)
    return _FORMULAS[estimand](ctx)


# -- plain-float conveniences ------------------------------------------------

def delta_apo(sl: TwoByTwoSlice, gender: str) -> float:
    """DID reconstruction of the counterfactual mean: baseline level of the
    treated group plus the control group's trend."""
    return evaluate(sl, Estimand.DID_APO_F if gender == FEMALE
                    else Estimand.DID_APO_M).value


def delta_ate(sl: TwoByTwoSlice, gender: str) -> float:
    return evaluate(sl, Estimand.DID_ATE_F if gender == FEMALE
                    else Estimand.DID_ATE_M).value


def delta_theta(sl: TwoByTwoSlice, gender: str) -> float:
    return evaluate(sl, Estimand.DID_THETA_F if gender == FEMALE
                    else Estimand.DID_THETA_M).value


def td_gap(sl: TwoByTwoSlice) -> float:
    return evaluate(sl, Estimand.TD_GAP).value


def ntd_gap(sl: TwoByTwoSlice) -> float:
    return evaluate(sl, Estimand.NTD_GAP).value


def p_gap(sl: TwoByTwoSlice) -> float:
    return evaluate(sl, Estimand.P_GAP).value


def ntd_alt(sl: TwoByTwoSlice) -> float:
    """Observed female/male earnings ratio minus the ratio of reconstructed
    counterfactual means: the effect of parenthood on the gender ratio."""
    return evaluate(sl, Estimand.NTD_ALT).value


def null_for_fathers(sl: TwoByTwoSlice, framework: str):
    """(apo, ate, theta) for mothers under a zero-effect-for-fathers assumption.

    framework is "TD" (additive correction) or "NTD" (ratio correction).
    """
    if framework == "TD":
        keys = (Estimand.TD_NULL_APO, Estimand.TD_NULL_ATE,
                Estimand.TD_NULL_THETA)
    elif framework == "NTD":
        keys = (Estimand.NTD_NULL_APO, Estimand.NTD_NULL_ATE,
                Estimand.NTD_NULL_THETA)
    else:
        raise ValueError(f"unknown framework {framework!r}")
    return tuple(evaluate(sl, k).value for k in keys)


def decompose_gap(sl: TwoByTwoSlice, denom_rtol: float = DENOM_RTOL):
    """Split observed gender inequality at the target age into the part due
    to parenthood and the remainder.

    Returns (total_gap, parenthood, other, share) where total = 1 - observed
    ratio, parenthood = counterfactual ratio - observed ratio, and
    share = parenthood / total.
    """
    ctx = SliceContext(sl, denom_rtol)
    observed = ctx.ratio(ctx.mu(FEMALE, sl.d, sl.a),
                         ctx.mu(MALE, sl.d, sl.a), "observed male mean").value
    delta_rho = _ntd_alt(ctx).value
    total = 1.0 - observed
    parenthood = -delta_rho
    other = total - parenthood
    if abs(total) < denom_rtol:
        raise DegenerateDenominator("total gap", total)
    return total, parenthood, other, parenthood / total


def decompose_ratios(rho_counterfactual: float, rho_observed: float):
    """decompose_gap on already-computed gender earnings ratios."""
    total = 1.0 - rho_observed
    parenthood = rho_counterfactual - rho_observed
    if total == 0:
        raise DegenerateDenominator("total gap", total)
    return total, parenthood, total - parenthood, parenthood / total


def relation_identity(theta_f: float, theta_m: float, rho_cf: float) -> float:
    """Gender-ratio effect implied by the two normalized effects and the
    counterfactual ratio: rho_cf * (theta_f - theta_m) / (1 + theta_m)."""
    if abs(1.0 + theta_m) < 1e-12:
        raise DegenerateDenominator("1 + theta_m", 1.0 + theta_m)
    return rho_cf * (theta_f - theta_m) / (1.0 + theta_m)


@dataclass
class EstimateRecord:
    """One estimand on one slice, with cluster-robust inference payload."""

    estimand: Estimand
    d: int
    dprime: int
    a: int
    b: int
    value: float
    se: float = float("nan")
    n_obs: int = 0
    n_clusters: int = 0
    influence: object = None  # InfluenceVector, set by the inference module

    def to_dict(self):
        return {
            "estimand": (self.estimand.value
                         if isinstance(self.estimand, Estimand)
                         else str(self.estimand)),
            "d": self.d,
            "dprime": self.dprime,
            "a": self.a,
            "b": self.b,
            "value": self.value,
            "se": self.se,
            "n_obs": self.n_obs,
            "n_clusters": self.n_clusters,
        }
