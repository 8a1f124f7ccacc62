"""Covariate-conditional 2x2 estimation with cross-fitting.

Identification conditions on covariates X: parallel trends needs to hold
only within covariate cells. Three estimators of the reconstructed
counterfactual level are provided — outcome-regression (OR), inverse
propensity weighting (IPW), and the doubly robust (DR) combination that is
consistent if either nuisance is correct. A cross-gender variant estimates
the gap in level effects with the male effect reweighted to the female
covariate distribution.

Nuisances are class probabilities over the four (gender, group) arms and
per-arm earnings-trend regressions, fitted out-of-fold on a unit-level
partition (both ages of a unit stay in one fold). Every propensity entering
a weight is clipped into [eps, 1-eps] and the clip count is reported.

With no covariates every estimator collapses to its unconditional
counterpart exactly, provided nuisances are fitted on the full sample
(folds=None): cross-fitting perturbs the collapse at O(1/n).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateDenominator,
    DegenerateTrainingSplit,
    NonFiniteWeight,
    SingularDesign,
    TooFewUnits,
)
from .estimators import EstimateRecord
from .panel import FEMALE, GENDERS, MALE, PanelData, TwoByTwoSlice

DEFAULT_CLIP = 0.01
DEFAULT_FOLDS = 5


@dataclass
class FoldAssignment:
    """Unit-level partition into K folds of near-equal size."""

    unit_code: np.ndarray
    fold: np.ndarray
    K: int
    seed: int

    def lookup(self, unit_code: np.ndarray) -> np.ndarray:
        mapping = dict(zip(self.unit_code.tolist(), self.fold.tolist()))
        return np.array([mapping[u] for u in unit_code.tolist()],
                        dtype=np.int64)


def assign_folds(data: PanelData, K: int, seed: int) -> FoldAssignment:
    """Deterministically partition units (not rows) into K folds.

    Fold sizes differ by at most one for any (n, K).
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    units = np.unique(data.unit_code)
    if len(units) < K:
        raise TooFewUnits(f"{len(units)} units for K={K} folds")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(units))
    fold = np.empty(len(units), dtype=np.int64)
    fold[perm] = np.arange(len(units)) % K
    return FoldAssignment(unit_code=units, fold=fold + 1, K=K, seed=seed)


# -- learners -----------------------------------------------------------------


def _design(x: np.ndarray) -> np.ndarray:
    return np.column_stack([np.ones(len(x)), x])


def fit_logistic(x: np.ndarray, y: np.ndarray, tol: float = 1e-8,
                 max_iter: int = 100) -> np.ndarray:
    """Logistic regression by iteratively reweighted least squares."""
    X = _design(x)
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(p * (1.0 - p), 1e-10)
        z = eta + (y - p) / w
        wx = X * w[:, None]
        try:
            new = np.linalg.solve(X.T @ wx, wx.T @ z)
        except np.linalg.LinAlgError as exc:
            raise SingularDesign(str(exc)) from exc
        if np.max(np.abs(new - beta)) < tol:
            return new
        beta = new
    return beta


def predict_logistic(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    eta = np.clip(_design(x) @ beta, -30, 30)
    return 1.0 / (1.0 + np.exp(-eta))


def fit_linear(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    X = _design(x)
    beta, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise SingularDesign("outcome design is rank deficient")
    return beta


def predict_linear(beta: np.ndarray, x: np.ndarray) -> np.ndarray:
    return _design(x) @ beta


# -- nuisances ----------------------------------------------------------------


class NuisanceFit:
    """Out-of-fold nuisance predictions on a slice's balanced unit table.

    Arrays are aligned to the units of the 2x2 (both groups, both genders,
    observed at both ages). q[(g, group)] holds the class probability of
    that arm, mu[(g, group)] the predicted earnings change from baseline to
    target age under that arm's model, and share[(g, group)] the
    out-of-fold arm share used in weight denominators.
    """

    def __init__(self, sl, units, q, mu, share, clip_eps, n_clipped,
                 description):
        self.slice = sl
        self.units = units
        self.q = q
        self.mu = mu
        self.share = share
        self.clip_eps = clip_eps
        self.n_clipped = int(n_clipped)
        self.description = description
        self.arms = [(g, grp) for g in GENDERS for grp in (sl.d, sl.dprime)]
        gc = units["gender_code"]
        self.mask = {(g, grp): (gc == (0 if g == FEMALE else 1))
                     & (units["treat_age"] == grp)
                     for g, grp in self.arms}
        self.n = len(gc)

    @property
    def y_b(self):
        return self.units["earnings"][:, 0]

    @property
    def y_a(self):
        return self.units["earnings"][:, 1]

    @property
    def dy(self):
        return self.y_a - self.y_b

    def _clip(self, p):
        eps = self.clip_eps
        clipped = np.clip(p, eps, 1.0 - eps)
        self.n_clipped += int(np.sum(clipped != p))
        return clipped

    def pairwise(self, g: str, d: int, dprime: int) -> np.ndarray:
        """P(D=d | gender g, D in {d, d'}, x_i), clipped."""
        denom = self.q[(g, d)] + self.q[(g, dprime)]
        if np.any(denom <= 0):
            raise NonFiniteWeight(f"zero class probability for gender {g}")
        return self._clip(self.q[(g, d)] / denom)

    def arm_prob(self, g: str, group: int, conditioning) -> np.ndarray:
        """P(arm | (G,D) restricted to groups in ``conditioning``, x_i)."""
        denom = np.zeros(self.n)
        for g2, grp2 in self.arms:
            if grp2 in conditioning:
                denom += self.q[(g2, grp2)]
        if np.any(denom <= 0):
            raise NonFiniteWeight("zero class probability in conditioning set")
        return self._clip(self.q[(g, group)] / denom)

    def diagnostics(self) -> dict:
        return {
            "description": self.description,
            "clip_eps": self.clip_eps,
            "n_clipped": self.n_clipped,
            "n_units": self.n,
            "arm_counts": {f"{g},{grp}": int(self.mask[(g, grp)].sum())
                           for g, grp in self.arms},
        }


def _slice_units(data: PanelData, sl: TwoByTwoSlice) -> dict:
    units = data.unit_table(groups=(sl.d, sl.dprime), ages=(sl.b, sl.a))
    if len(units["unit_code"]) == 0:
        raise TooFewUnits("no units observed at both slice ages")
    return units


def fit_nuisances(data: PanelData, sl: TwoByTwoSlice,
                  folds: FoldAssignment | None = None,
                  clip_eps: float = DEFAULT_CLIP) -> NuisanceFit:
    """Cross-fitted class probabilities and per-arm trend regressions.

    folds=None fits every nuisance on the full sample (no cross-fitting),
    which makes the covariate-free collapse to unconditional estimators
    exact. Default learners: one-vs-rest logistic regression (normalized)
    for arm probabilities, linear regression per arm for trends; with no
    covariates both reduce to training-split shares and means.
    """
    units = _slice_units(data, sl)
    n = len(units["unit_code"])
    x = units["covariates"]
    dy = units["earnings"][:, 1] - units["earnings"][:, 0]
    arms = [(g, grp) for g in GENDERS for grp in (sl.d, sl.dprime)]
    gc = units["gender_code"]
    mask = {(g, grp): (gc == (0 if g == FEMALE else 1))
            & (units["treat_age"] == grp) for g, grp in arms}

    fold_of = (folds.lookup(units["unit_code"]) if folds is not None
               else np.zeros(n, dtype=np.int64))
    fold_ids = np.unique(fold_of)

    q = {arm: np.empty(n) for arm in arms}
    mu = {arm: np.empty(n) for arm in arms}
    share = {arm: np.empty(n) for arm in arms}
    for k in fold_ids:
        predict = (fold_of == k) if folds is not None else np.ones(n, bool)
        train = ~(fold_of == k) if folds is not None else np.ones(n, bool)
        if not train.any():
            raise DegenerateTrainingSplit(f"fold {k} leaves no training data")
        raw = {}
        for arm in arms:
            arm_train = mask[arm] & train
            n_arm = int(arm_train.sum())
            if n_arm == 0:
                raise DegenerateTrainingSplit(
                    f"arm {arm} absent from training split of fold {k}")
            share[arm][predict] = n_arm / train.sum()
            if x.shape[1] == 0:
                raw[arm] = np.full(predict.sum(), n_arm / train.sum())
                mu[arm][predict] = dy[arm_train].mean()
            else:
                beta = fit_logistic(x[train], mask[arm][train].astype(float))
                raw[arm] = predict_logistic(beta, x[predict])
                gamma = fit_linear(x[arm_train], dy[arm_train])
                mu[arm][predict] = predict_linear(gamma, x[predict])
        total = sum(raw[arm] for arm in arms)
        for arm in arms:
            q[arm][predict] = raw[arm] / total
    return NuisanceFit(sl, units, q, mu, share, clip_eps, 0,
                       {"propensity": "one-vs-rest logistic (IRLS)",
                        "outcome": "linear regression",
                        "folds": folds.K if folds is not None else None})


def nuisances_from_functions(data: PanelData, sl: TwoByTwoSlice, q_fn, mu_fn,
                             clip_eps: float = DEFAULT_CLIP) -> NuisanceFit:
    """Nuisances from externally supplied functions of (gender, group, x).

    q_fn returns the arm class probability and mu_fn the expected earnings
    change from the baseline to the target age. Arm shares are the
    empirical full-sample shares. Used for injecting exact (or deliberately
    wrong) nuisances in identification and robustness checks.
    """
    units = _slice_units(data, sl)
    n = len(units["unit_code"])
    x = units["covariates"]
    arms = [(g, grp) for g in GENDERS for grp in (sl.d, sl.dprime)]
    gc = units["gender_code"]
    q, mu, share = {}, {}, {}
    for g, grp in arms:
        q[(g, grp)] = np.asarray([q_fn(g, grp, row) for row in x], dtype=float)
        mu[(g, grp)] = np.asarray([mu_fn(g, grp, row) for row in x],
                                  dtype=float)
        arm_n = int((((gc == (0 if g == FEMALE else 1))
                      & (units["treat_age"] == grp))).sum())
        share[(g, grp)] = np.full(n, arm_n / n)
    return NuisanceFit(sl, units, q, mu, share, clip_eps, 0,
                       {"propensity": "injected", "outcome": "injected",
                        "folds": None})


def nuisances_from_oracle(data: PanelData, sl: TwoByTwoSlice, oracle,
                          clip_eps: float = DEFAULT_CLIP) -> NuisanceFit:
    """True nuisances from a generator oracle (exact identification checks)."""
    arms = [(g, grp) for g in GENDERS for grp in (sl.d, sl.dprime)]

    def q_fn(g, grp, row):
        x = int(row[0]) if len(row) else 0
        return oracle.arm_probability(arms, g, grp, x)

    def mu_fn(g, grp, row):
        x = int(row[0]) if len(row) else 0
        return (oracle.cond_apo(g, grp, grp, sl.a, x)
                - oracle.cond_apo(g, grp, grp, sl.b, x))

    return nuisances_from_functions(data, sl, q_fn, mu_fn, clip_eps=clip_eps)


# -- estimators ----------------------------------------------------------------


def _w1(nf: NuisanceFit, g: str) -> np.ndarray:
    return nf.mask[(g, nf.slice.d)] / nf.share[(g, nf.slice.d)]


def _w2(nf: NuisanceFit, g: str) -> np.ndarray:
    sl = nf.slice
    p = nf.pairwise(g, sl.d, sl.dprime)
    odds = p / (1.0 - p)
    w = odds * nf.mask[(g, sl.dprime)] / nf.share[(g, sl.d)]
    if not np.all(np.isfinite(w)):
        raise NonFiniteWeight("non-finite inverse-propensity weight")
    return w


def _w3(nf: NuisanceFit, g: str, gprime: str, d2: int) -> np.ndarray:
    """Cross-arm reweighting: target arm (g, d), source arm (g', d2)."""
    sl = nf.slice
    conditioning = {sl.d, d2}
    num = nf.arm_prob(g, sl.d, conditioning)
    den = nf.arm_prob(gprime, d2, conditioning)
    w = (num / den) * nf.mask[(gprime, d2)] / nf.share[(g, sl.d)]
    if not np.all(np.isfinite(w)):
        raise NonFiniteWeight("non-finite cross-arm weight")
    return w


def _record(nf: NuisanceFit, label: str, psi: np.ndarray,
            center_weight: np.ndarray) -> EstimateRecord:
    sl = nf.slice
    value = float(psi.mean())
    big_psi = psi - center_weight * value
    se = float(np.sqrt(np.mean(big_psi ** 2) / nf.n))
    return EstimateRecord(estimand=label, d=sl.d, dprime=sl.dprime,
                          a=sl.a, b=sl.b, value=value, se=se,
                          n_obs=nf.n, n_clusters=nf.n, influence=big_psi)


def apo_with_covariates(data: PanelData, sl: TwoByTwoSlice, g: str,
                        nuisances: NuisanceFit,
                        method: str = "DR") -> EstimateRecord:
    """Covariate-adjusted reconstruction of the counterfactual level.

    OR imputes the control trend from the outcome model; IPW reweights
    control units to the treated covariate distribution; DR combines both
    and is consistent if either nuisance is correct.
    """
    nf = nuisances
    w1 = _w1(nf, g)
    mu_ctrl = nf.mu[(g, sl.dprime)]
    if method == "OR":
        psi = w1 * (nf.y_b + mu_ctrl)
    elif method == "IPW":
        psi = w1 * nf.y_b + _w2(nf, g) * nf.dy
    elif method == "DR":
        psi = w1 * (nf.y_b + mu_ctrl) + _w2(nf, g) * (nf.dy - mu_ctrl)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _record(nf, f"APO_{method}({g})", psi, w1)


def ate_theta_with_covariates(data: PanelData, sl: TwoByTwoSlice, g: str,
                              nuisances: NuisanceFit, method: str = "DR"):
    """Level and normalized effects built on the covariate-adjusted level.

    Returns (ate_record, theta_record); the normalized-effect influence
    combines the level scores by the ratio chain rule.
    """
    nf = nuisances
    apo = apo_with_covariates(data, sl, g, nf, method=method)
    w1 = _w1(nf, g)
    psi_apo = apo.influence + w1 * apo.value
    psi_ate = w1 * nf.y_a - psi_apo
    ate = _record(nf, f"ATE_{method}({g})", psi_ate, w1)
    if apo.value == 0:
        raise DegenerateDenominator(f"covariate-adjusted level ({g})", 0.0)
    theta_value = ate.value / apo.value
    big_theta = (-ate.value / apo.value ** 2) * apo.influence \
        + ate.influence / apo.value
    theta = EstimateRecord(estimand=f"THETA_{method}({g})", d=sl.d,
                           dprime=sl.dprime, a=sl.a, b=sl.b,
                           value=theta_value,
                           se=float(np.sqrt(np.mean(big_theta ** 2) / nf.n)),
                           n_obs=nf.n, n_clusters=nf.n, influence=big_theta)
    return ate, theta


def td_with_covariates(data: PanelData, sl: TwoByTwoSlice,
                       nuisances: NuisanceFit,
                       method: str = "DR") -> EstimateRecord:
    """Gender gap in level effects under conditional trend equality.

    The male effect is averaged over the female covariate distribution
    (among mothers in group d), so the contrast is a within-covariate
    comparison. The DR score combines three arm contrasts; the centered
    score supplies the SE.
    """
    nf = nuisances
    sl = nf.slice
    w1f = _w1(nf, FEMALE)
    mu_f_ctrl = nf.mu[(FEMALE, sl.dprime)]
    mu_m_trt = nf.mu[(MALE, sl.d)]
    mu_m_ctrl = nf.mu[(MALE, sl.dprime)]
    if method == "OR":
        psi = w1f * (nf.dy - mu_f_ctrl - mu_m_trt + mu_m_ctrl)
    elif method == "IPW":
        psi = (w1f - _w3(nf, FEMALE, FEMALE, sl.dprime)
               - _w3(nf, FEMALE, MALE, sl.d)
               + _w3(nf, FEMALE, MALE, sl.dprime)) * nf.dy
    elif method == "DR":
        psi = ((w1f - _w3(nf, FEMALE, FEMALE, sl.dprime))
               * (nf.dy - mu_f_ctrl)
               + (w1f - _w3(nf, FEMALE, MALE, sl.d)) * (nf.dy - mu_m_trt)
               - (w1f - _w3(nf, FEMALE, MALE, sl.dprime))
               * (nf.dy - mu_m_ctrl))
    else:
        raise ValueError(f"unknown method {method!r}")
    return _record(nf, f"TD_{method}", psi, w1f)
