"""Estimator-object front end in the scikit-learn style.

Each class wraps the functional core with the fit/get_params protocol so
the stack drops into sklearn-flavored pipelines and parameter sweeps.
fit() accepts a PanelData, a pandas DataFrame in the standard schema, or a
CSV path; fitted artifacts land on trailing-underscore attributes.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator

from . import aggregation, covariates, event_study, inference, validation
from .panel import GENDERS, PanelData, build_two_by_two, load_panel


def as_panel(X) -> PanelData:
    """Coerce fit() input (PanelData, DataFrame, or CSV path) to PanelData."""
    if isinstance(X, PanelData):
        return X
    return load_panel(X)


class NtdEstimator(BaseEstimator):
    """All requested estimands over a treatment-group x event-time grid.

    Parameters mirror the 2x2 construction: control_offset picks the
    not-yet-treated control group d' = a + offset and baseline_gap the
    baseline age b = d - gap. with_se=False skips influence-function SEs.
    """

    def __init__(self, d_values=None, event_times=(0, 1, 2, 3, 4, 5),
                 estimands=None, control_offset=1, baseline_gap=1,
                 with_se=True):
        self.d_values = d_values
        self.event_times = event_times
        self.estimands = estimands
        self.control_offset = control_offset
        self.baseline_gap = baseline_gap
        self.with_se = with_se

    def fit(self, X, y=None):
        data = as_panel(X)
        d_values = (self.d_values if self.d_values is not None
                    else data.treatment_groups())
        self.results_, self.skipped_ = inference.estimate_grid(
            data, d_values, self.event_times, estimands=self.estimands,
            control_offset=self.control_offset,
            baseline_gap=self.baseline_gap, with_se=self.with_se)
        return self

    def results_frame(self):
        import pandas as pd

        return pd.DataFrame([r.to_dict() for r in self.results_])


class PretrendValidator(BaseEstimator):
    """Placebo-test suite for one treatment group (advisory gate included)."""

    def __init__(self, d=None, max_horizon=5, pre_events=(-4, -3, -2),
                 alpha=0.05, bonferroni=False, baseline_gap=1):
        self.d = d
        self.max_horizon = max_horizon
        self.pre_events = pre_events
        self.alpha = alpha
        self.bonferroni = bonferroni
        self.baseline_gap = baseline_gap

    def fit(self, X, y=None):
        data = as_panel(X)
        d = self.d if self.d is not None else min(data.treatment_groups())
        self.results_ = validation.pretrend_suite(
            data, d, max_horizon=self.max_horizon,
            pre_events=self.pre_events, alpha=self.alpha,
            bonferroni=self.bonferroni, baseline_gap=self.baseline_gap)
        self.gate_ = validation.ntd_gate(self.results_)
        return self

    def results_frame(self):
        return validation.results_frame(self.results_)


class EventStudyEstimator(BaseEstimator):
    """Conventional normalized event study, fitted per gender."""

    def __init__(self, event_window=(-5, 10)):
        self.event_window = event_window

    def fit(self, X, y=None):
        data = as_panel(X)
        self.fits_ = {g: event_study.fit_event_study(data, g,
                                                     self.event_window)
                      for g in GENDERS}
        self.gaps_ = event_study.event_study_gap(self.fits_["f"],
                                                 self.fits_["m"])
        return self


class DoublyRobustEstimator(BaseEstimator):
    """Covariate-adjusted effects for one (d, a) with cross-fitting.

    n_folds=None disables cross-fitting (full-sample nuisances), which is
    also the exact covariate-free collapse mode.
    """

    def __init__(self, d=None, a=None, gender="f", method="DR", n_folds=5,
                 seed=0, clip_eps=covariates.DEFAULT_CLIP,
                 control_offset=1, baseline_gap=1):
        self.d = d
        self.a = a
        self.gender = gender
        self.method = method
        self.n_folds = n_folds
        self.seed = seed
        self.clip_eps = clip_eps
        self.control_offset = control_offset
        self.baseline_gap = baseline_gap

    def fit(self, X, y=None):
        data = as_panel(X)
        sl = build_two_by_two(data, self.d, self.a,
                              control_offset=self.control_offset,
                              baseline_gap=self.baseline_gap)
        folds = (covariates.assign_folds(data, self.n_folds, self.seed)
                 if self.n_folds else None)
        self.nuisances_ = covariates.fit_nuisances(data, sl, folds=folds,
                                                   clip_eps=self.clip_eps)
        self.apo_ = covariates.apo_with_covariates(
            data, sl, self.gender, self.nuisances_, method=self.method)
        self.ate_, self.theta_ = covariates.ate_theta_with_covariates(
            data, sl, self.gender, self.nuisances_, method=self.method)
        self.td_ = covariates.td_with_covariates(
            data, sl, self.nuisances_, method=self.method)
        return self


class Aggregator(BaseEstimator):
    """Aggregate per-group normalized effects under a timing distribution."""

    def __init__(self, distribution=None, e=0, d_max=None, strict=False):
        self.distribution = distribution
        self.e = e
        self.d_max = d_max
        self.strict = strict

    def fit(self, X, y=None):
        """X: mapping d -> (theta, ate, apo) triples or a results frame."""
        thetas, ates, apos = {}, {}, {}
        for d, (theta, ate, apo) in dict(X).items():
            thetas[d], ates[d], apos[d] = theta, ate, apo
        dist = self.distribution or aggregation.uniform_distribution(thetas)
        d_max = self.d_max if self.d_max is not None else max(thetas) + 1
        self.agg1_, self.agg1_info_ = aggregation.theta_agg1(
            thetas, dist, self.e, d_max, strict=self.strict)
        self.agg2_, self.agg2_info_ = aggregation.theta_agg2(
            ates, apos, dist, self.e, d_max, strict=self.strict)
        return self
