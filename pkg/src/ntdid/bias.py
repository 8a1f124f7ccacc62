"""Bias diagnostics and sensitivity tools for the normalized gap.

The normalized-gap estimator scales the true gap in normalized effects by a
factor apo_cf / (apo_cf - gamma_pt): trend violations with gamma_pt < 0
attenuate the estimated penalty. If fathers' normalized effect theta_m is
assumed known, the male counterfactual level is point-identified and the
gap can be corrected exactly; a grid of assumed theta_m values brackets the
truth. A four-term decomposition expresses the gender difference in trend
violations through the pre-birth gender earnings ratio at the four corners
of the 2x2, including the threshold male counterfactual level at which the
difference vanishes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDenominator, EmptyCell, NoDonors
from .estimators import (
    Estimand,
    SliceContext,
    delta_apo,
    evaluate,
)
from .inference import cluster_se, influence_from_gradient
from .panel import FEMALE, MALE, PanelData, TwoByTwoSlice

DEFAULT_THETA_M_GRID = (-0.10, -0.05, 0.0, 0.05, 0.10)


@dataclass
class BiasGridRow:
    """Corrected normalized gap under one assumed fathers' effect."""

    d: int
    a: int
    assumed_theta_m: float
    conventional: float
    corrected: float
    correction_factor: float
    se: float = float("nan")

    def to_dict(self):
        return {
            "d": self.d, "a": self.a,
            "assumed_theta_m": self.assumed_theta_m,
            "conventional": self.conventional, "corrected": self.corrected,
            "correction_factor": self.correction_factor, "se": self.se,
        }


@dataclass
class DecompositionRow:
    """Four-term split of the gender difference in trend violations."""

    d: int
    a: int
    dprime: int
    b: int
    term1: float
    term2: float
    term3: float
    term4: float
    total: float
    imputed_rho: float = float("nan")
    apo_star: float = float("nan")

    def to_dict(self):
        return {
            "d": self.d, "a": self.a, "dprime": self.dprime, "b": self.b,
            "term1": self.term1, "term2": self.term2, "term3": self.term3,
            "term4": self.term4, "total": self.total,
            "imputed_rho": self.imputed_rho, "apo_star": self.apo_star,
        }


def bias_factor(apo_cf: float, gamma_pt: float) -> float:
    """Multiplier linking the estimated normalized gap to the true one.

    Equal to 1 under parallel trends; below 1 (attenuation) when the
    control group's counterfactual growth is steeper (gamma_pt < 0).
    """
    denom = apo_cf - gamma_pt
    if denom == 0:
        raise DegenerateDenominator("apo_cf - gamma_pt", denom)
    return apo_cf / denom


def _corrected_cell_value(sl: TwoByTwoSlice, theta_m: float):
    """Corrected gap as a differentiable function of cell means."""
    if theta_m == -1.0:
        raise DegenerateDenominator("1 + assumed_theta_m", 0.0)
    ctx = SliceContext(sl)
    conventional = evaluate(sl, Estimand.NTD_GAP)
    # assumed theta_m pins the male counterfactual level at
    # mu(m,d,a) / (1 + theta_m); the factor rescales the DID reconstruction
    # onto that level.
    apo_m = (ctx.mu(MALE, sl.d, sl.b) + ctx.mu(MALE, sl.dprime, sl.a)
             - ctx.mu(MALE, sl.dprime, sl.b))
    factor = ctx.ratio(apo_m * (1.0 + theta_m), ctx.mu(MALE, sl.d, sl.a),
                       "observed male mean")
    return conventional * factor, factor


def bias_corrected_gap(sl: TwoByTwoSlice, theta_m_assumed: float,
                       data: PanelData | None = None) -> BiasGridRow:
    """Normalized gap corrected under an assumed fathers' effect.

    With the true theta_m this recovers theta(f) - theta(m) exactly when
    normalized trend violations are equal across genders. The SE (when a
    panel is supplied) treats theta_m as a known constant.
    """
    corrected, factor = _corrected_cell_value(sl, theta_m_assumed)
    conventional = evaluate(sl, Estimand.NTD_GAP)
    se = float("nan")
    if data is not None:
        iv = influence_from_gradient(data, corrected.grad,
                                     label=("bias_corrected", theta_m_assumed))
        se = cluster_se(iv)
    return BiasGridRow(d=sl.d, a=sl.a, assumed_theta_m=theta_m_assumed,
                       conventional=conventional.value,
                       corrected=corrected.value,
                       correction_factor=factor.value, se=se)


def bias_grid(sl: TwoByTwoSlice, grid=DEFAULT_THETA_M_GRID,
              data: PanelData | None = None) -> list:
    """bias_corrected_gap over a grid of assumed fathers' effects."""
    return [bias_corrected_gap(sl, t, data=data) for t in grid]


def td_decomposition(rho_at, apo_m_at):
    """Four-term decomposition of gamma_pt(f) - gamma_pt(m).

    Inputs are the counterfactual gender ratio and male counterfactual
    level at the four corners in the order (d,a), (d,b), (d',a), (d',b).
    Terms 2 and 3 carry reversed signs; the signed terms sum to the gender
    difference in trend violations.
    """
    r = [float(v) for v in rho_at]
    m = [float(v) for v in apo_m_at]
    if len(r) != 4 or len(m) != 4:
        raise ValueError("expected four ratios and four levels")
    terms = ((r[0] - 1.0) * m[0], -(r[1] - 1.0) * m[1],
             -(r[2] - 1.0) * m[2], (r[3] - 1.0) * m[3])
    return terms, float(sum(terms))


def impute_rho(data: PanelData, d: int, a: int,
               donor_groups=None) -> float:
    """Counterfactual gender ratio at a post-treatment age, via donors.

    Starts from the group's last pre-birth ratio at age d-1 and adds the
    average lifecycle change from d-1 to a among donor groups still
    untreated at a (default: every such observed group).
    """
    if donor_groups is None:
        donor_groups = [g for g in data.treatment_groups() if g > a]
    donors = [g for g in donor_groups if g > a]
    if not donors:
        raise NoDonors(f"no untreated donor groups at age {a}")
    base = _cell_ratio(data, d, d - 1)
    changes = [_cell_ratio(data, g, a) - _cell_ratio(data, g, d - 1)
               for g in donors]
    return base + float(np.mean(changes))


def _cell_ratio(data: PanelData, group: int, age: int) -> float:
    rows_f = data.cell_rows(FEMALE, group, age)
    rows_m = data.cell_rows(MALE, group, age)
    if len(rows_f) == 0:
        raise EmptyCell(FEMALE, group, age)
    if len(rows_m) == 0:
        raise EmptyCell(MALE, group, age)
    mm = float(data.earnings[rows_m].mean())
    if mm == 0:
        raise DegenerateDenominator(f"male mean at ({group}, {age})", mm)
    return float(data.earnings[rows_f].mean()) / mm


def solve_apo_star(rho1: float, fixed_terms) -> float:
    """Male counterfactual level at (d, a) nulling the four-term sum.

    The sum is affine in that level with slope rho1 - 1, so the root is
    closed-form: -(term2 + term3 + term4) / (rho1 - 1).
    """
    if rho1 == 1.0:
        raise DegenerateDenominator("rho1 - 1", 0.0)
    fixed = float(sum(fixed_terms))
    return -fixed / (rho1 - 1.0)


def decomposition_from_data(data: PanelData, d: int, a: int,
                            donor_groups=None,
                            apo_m_target: float | None = None) -> DecompositionRow:
    """Assemble the decomposition for one (d, a) from panel cells.

    The ratio at the post-treatment corner (d, a) is imputed from donor
    lifecycle changes; the other three corners use observed cell ratios.
    The male counterfactual at (d, a) defaults to the DID reconstruction
    delta_APO(m); pass apo_m_target to override with an external value.
    """
    dprime, b = a + 1, d - 1
    rho1 = impute_rho(data, d, a, donor_groups=donor_groups)
    rhos = (rho1, _cell_ratio(data, d, b), _cell_ratio(data, dprime, a),
            _cell_ratio(data, dprime, b))
    if apo_m_target is None:
        from .panel import build_two_by_two

        apo_m_target = delta_apo(build_two_by_two(data, d, a), MALE)
    levels = (apo_m_target,
              float(data.earnings[data.cell_rows(MALE, d, b)].mean()),
              float(data.earnings[data.cell_rows(MALE, dprime, a)].mean()),
              float(data.earnings[data.cell_rows(MALE, dprime, b)].mean()))
    terms, total = td_decomposition(rhos, levels)
    try:
        star = solve_apo_star(rho1, terms[1:])
    except DegenerateDenominator:
        star = float("nan")
    return DecompositionRow(d=d, a=a, dprime=dprime, b=b,
                            term1=terms[0], term2=terms[1], term3=terms[2],
                            term4=terms[3], total=total,
                            imputed_rho=rho1, apo_star=star)


def grid_frame(rows):
    """Grid or decomposition rows as a tidy DataFrame."""
    import pandas as pd

    return pd.DataFrame([r.to_dict() for r in rows])
