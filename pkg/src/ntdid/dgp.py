"""Synthetic life-cycle earnings generator with an exact causal oracle.

Units are parents indexed by gender and age at first childbirth (the
treatment group d). Labor-market ability drives both earnings growth and
timing: later groups get steeper counterfactual trajectories, so an
early-treated group compared against a later control has a negative trend
violation. Female counterfactual means are a gender ratio rho(d, a) times
the male means; a ratio constant in (d, a) makes normalized trend
violations equal across genders by construction, while an age-varying
ratio breaks that.

Treatment effects are planted multiplicatively by default, so the planted
proportional effect is exactly the normalized effect theta. Noise is
multiplicative lognormal with unit mean, keeping every population mean in
closed form (and earnings positive); an optional within-unit AR(1)
component makes clustering matter for variance tests.

The DgpOracle mirrors the realized integer composition of the generated
panel, so a zero-noise sample reproduces oracle means exactly.
"""

from __future__ import annotations

import ast
import json
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import InvalidSpec, OutOfRange
from .panel import FEMALE, GENDERS, MALE, CellStats, PanelData

#: Counterfactual timing index: never treated.
INF = "inf"


@dataclass(frozen=True)
class DgpSpec:
    """Complete description of a synthetic population.

    Trajectories: male no-child mean earnings at age a for group d and
    ability level x are
        base_earnings + (base_slope + slope_gradient*(d - min d)
                         + x_slope*x) * (a - age_min)
        + curvature * (a - age_min)^2 + x_intercept * x.
    Gender ratio: rho(d, a) = rho_base + rho_age_slope*(a - age_min)
        + rho_age_curve*(a - rho_peak_age)^2   (constant iff both 0).
    Effects: effect_f / effect_m are either a constant applied at all
    event times e >= -anticipation, or a mapping e -> value.
    """

    treat_ages: tuple = (25, 26, 27, 28, 29, 30)
    units_per_group: int = 500
    cohort_sizes: dict | None = None       # d -> n or (gender, d) -> n
    age_min: int = 20
    age_max: int = 36
    base_earnings: float = 20_000.0
    base_slope: float = 800.0
    slope_gradient: float = 150.0
    curvature: float = 0.0
    rho_base: float = 0.8
    rho_age_slope: float = 0.0
    rho_age_curve: float = 0.0
    rho_peak_age: float = 28.0
    effect_f: object = -0.2
    effect_m: object = 0.0
    effect_mode: str = "multiplicative"    # or "additive"
    anticipation: int = 0
    noise_sd: float = 0.0                  # sd of log noise factor
    noise_ar1: float = 0.0
    zero_mass: float = 0.0                 # point mass at zero earnings
    x_fractions: dict = field(default_factory=dict)  # d -> level shares
    x_slope: float = 0.0
    x_intercept: float = 0.0
    n_cohorts: int = 1
    base_year: int = 2000
    year_effect: float = 0.0               # additive per calendar year
    seed: int = 0

    def validate(self):
        if not self.treat_ages:
            raise InvalidSpec("treat_ages", "must be non-empty")
        if self.age_min >= self.age_max:
            raise InvalidSpec("age_min", "age_min must be below age_max")
        for d in self.treat_ages:
            if not (self.age_min <= d <= self.age_max):
                raise InvalidSpec("treat_ages",
                                  f"group {d} outside observed age range")
        if self.units_per_group <= 0 and not self.cohort_sizes:
            raise InvalidSpec("units_per_group", "must be positive")
        if self.effect_mode not in ("multiplicative", "additive"):
            raise InvalidSpec("effect_mode", self.effect_mode)
        if not 0.0 <= self.zero_mass < 1.0:
            raise InvalidSpec("zero_mass", "must lie in [0, 1)")
        if not -1.0 < self.noise_ar1 < 1.0:
            raise InvalidSpec("noise_ar1", "must lie in (-1, 1)")
        if self.anticipation < 0:
            raise InvalidSpec("anticipation", "must be non-negative")
        if self.n_cohorts < 1:
            raise InvalidSpec("n_cohorts", "must be at least 1")
        for d, fr in (self.x_fractions or {}).items():
            if d not in self.treat_ages:
                raise InvalidSpec("x_fractions", f"unknown group {d}")
            if abs(sum(fr) - 1.0) > 1e-9 or any(f < 0 for f in fr):
                raise InvalidSpec("x_fractions",
                                  f"shares for group {d} must sum to 1")

    # -- population structure ------------------------------------------------

    @property
    def ages(self):
        return range(self.age_min, self.age_max + 1)

    @property
    def n_x_levels(self) -> int:
        if not self.x_fractions:
            return 0
        return max(len(fr) for fr in self.x_fractions.values())

    def group_size(self, gender: str, d: int) -> int:
        sizes = self.cohort_sizes or {}
        if (gender, d) in sizes:
            return int(sizes[(gender, d)])
        if d in sizes:
            return int(sizes[d])
        return int(self.units_per_group)

    def x_counts(self, gender: str, d: int) -> np.ndarray:
        """Integer ability composition (largest-remainder rounding)."""
        n = self.group_size(gender, d)
        fr = self.x_fractions.get(d) if self.x_fractions else None
        if fr is None:
            return np.array([n], dtype=np.int64)
        raw = np.asarray(fr) * n
        counts = np.floor(raw).astype(np.int64)
        short = n - counts.sum()
        if short:
            order = np.argsort(-(raw - counts), kind="stable")
            counts[order[:short]] += 1
        return counts

    # -- mean structure --------------------------------------------------

    def male_cf(self, d: int, a: int, x: int = 0) -> float:
        """Male no-child mean at (group, age, ability level)."""
        t = a - self.age_min
        slope = (self.base_slope
                 + self.slope_gradient * (d - min(self.treat_ages))
                 + self.x_slope * x)
        return (self.base_earnings + slope * t + self.curvature * t * t
                + self.x_intercept * x)

    def rho(self, d: int, a: int) -> float:
        return (self.rho_base + self.rho_age_slope * (a - self.age_min)
                + self.rho_age_curve * (a - self.rho_peak_age) ** 2)

    def effect(self, gender: str, d: int, e: int) -> float:
        """Planted effect at event time e (0 before treatment starts)."""
        if e < -self.anticipation:
            return 0.0
        spec = self.effect_f if gender == FEMALE else self.effect_m
        if isinstance(spec, dict):
            return float(spec.get(e, 0.0))
        return float(spec)


class DgpOracle:
    """Closed-form potential-outcome means for a DgpSpec.

    Ability compositions are the realized integer counts of the generated
    panel, so a zero-noise sample matches the oracle exactly. All means
    include the zero-earnings point mass factor (1 - zero_mass); the
    additive calendar-year term is excluded (it is generator-side texture
    for regression tests, and the causal identities require it to be 0).
    """

    def __init__(self, spec: DgpSpec):
        spec.validate()
        self.spec = spec
        self._counts = {(g, d): spec.x_counts(g, d)
                        for g in GENDERS for d in spec.treat_ages}

    # -- conditional (per ability level) means -------------------------------

    def cond_cf(self, gender: str, d: int, a: int, x: int = 0) -> float:
        """No-child mean for (gender, group, ability) at age a."""
        self._check(gender, d, a)
        male = self.spec.male_cf(d, a, x)
        scale = 1.0 - self.spec.zero_mass
        if gender == MALE:
            return scale * male
        return scale * self.spec.rho(d, a) * male

    def cond_apo(self, gender: str, d: int, dprime, a: int,
                 x: int = 0) -> float:
        """Mean under counterfactual timing dprime (INF = never)."""
        cf = self.cond_cf(gender, d, a, x)
        if dprime == INF or dprime is None:
            return cf
        tau = self.spec.effect(gender, int(dprime), a - int(dprime))
        if self.spec.effect_mode == "multiplicative":
            return cf * (1.0 + tau)
        return cf + tau * (1.0 - self.spec.zero_mass)

    def cond_cate(self, gender: str, d: int, a: int, x: int = 0) -> float:
        return self.cond_apo(gender, d, d, a, x) - self.cond_cf(gender, d, a, x)

    # -- unconditional means --------------------------------------------------

    def _mix(self, gender: str, d: int, values) -> float:
        counts = self._counts[(gender, d)]
        vals = np.array([values(x) for x in range(len(counts))])
        return float(vals @ counts / counts.sum())

    def apo(self, gender: str, d: int, dprime, a: int) -> float:
        """APO(g, d, d', a): group-d mean at age a under timing d'."""
        return self._mix(gender, d,
                         lambda x: self.cond_apo(gender, d, dprime, a, x))

    def observed_mean(self, gender: str, d: int, a: int) -> float:
        return self.apo(gender, d, d, a)

    def gamma_pt(self, gender: str, d: int, dprime: int, a: int,
                 b: int | None = None) -> float:
        """Trend violation: counterfactual trend of d minus that of d'."""
        if b is None:
            b = d - 1
        self._check(gender, d, b)
        return ((self.apo(gender, d, INF, a) - self.apo(gender, d, INF, b))
                - (self.apo(gender, dprime, INF, a)
                   - self.apo(gender, dprime, INF, b)))

    def ate(self, gender: str, d: int, a: int) -> float:
        return self.apo(gender, d, d, a) - self.apo(gender, d, INF, a)

    def theta(self, gender: str, d: int, a: int) -> float:
        return self.ate(gender, d, a) / self.apo(gender, d, INF, a)

    def rho(self, d: int, dprime, a: int) -> float:
        """Female-to-male mean ratio under timing d'."""
        return self.apo(FEMALE, d, dprime, a) / self.apo(MALE, d, dprime, a)

    def delta_rho(self, d: int, a: int) -> float:
        """Effect of parenthood on the gender earnings ratio."""
        return self.rho(d, d, a) - self.rho(d, INF, a)

    def bias(self, d: int, dprime: int, a: int,
             gender: str = FEMALE, b: int | None = None) -> float:
        cf = self.apo(gender, d, INF, a)
        return cf / (cf - self.gamma_pt(gender, d, dprime, a, b))

    def propensity(self, gender: str, d: int, dprime: int, x: int) -> float:
        """P(D = d | gender, D in {d, d'}, ability level x)."""
        n_d = self._level_count(gender, d, x)
        n_dp = self._level_count(gender, dprime, x)
        return n_d / (n_d + n_dp)

    def arm_probability(self, arms, gender: str, d: int, x: int) -> float:
        """P(G = g, D = d | (G, D) in arms, X = x)."""
        total = sum(self._level_count(g2, d2, x) for g2, d2 in arms)
        return self._level_count(gender, d, x) / total

    def _level_count(self, gender: str, d: int, x: int) -> float:
        counts = self._counts[(gender, d)]
        return float(counts[x]) if x < len(counts) else 0.0

    def _check(self, gender: str, d: int, a: int):
        if gender not in GENDERS:
            raise OutOfRange("gender", gender)
        if d not in self.spec.treat_ages:
            raise OutOfRange("treatment group", d)
        if not (self.spec.age_min <= a <= self.spec.age_max):
            raise OutOfRange("age", a)

    # -- exports ---------------------------------------------------------

    def population_cells(self, groups=None, ages=None,
                         nominal: int = 1_000_000) -> list:
        """Exact observed cell means packaged as CellStats.

        Counts are a nominal large value; totals are mean x count, so the
        estimator stack consumes population values unchanged.
        """
        groups = list(groups) if groups is not None else list(self.spec.treat_ages)
        ages = list(ages) if ages is not None else list(self.spec.ages)
        cells = []
        for g in GENDERS:
            for d in groups:
                for a in ages:
                    mu = self.observed_mean(g, d, a)
                    cells.append(CellStats(gender=g, treat_age=d, age=a,
                                           count=nominal,
                                           total=mu * nominal))
        return cells

    def to_dict(self) -> dict:
        spec = {f.name: getattr(self.spec, f.name) for f in fields(self.spec)}
        spec["treat_ages"] = list(self.spec.treat_ages)
        spec["x_fractions"] = {str(k): list(v)
                               for k, v in (self.spec.x_fractions or {}).items()}
        if self.spec.cohort_sizes:
            spec["cohort_sizes"] = {str(k): v
                                    for k, v in self.spec.cohort_sizes.items()}
        table = []
        for g in GENDERS:
            for d in self.spec.treat_ages:
                for a in self.spec.ages:
                    table.append({
                        "gender": g, "d": d, "a": a,
                        "apo_cf": self.apo(g, d, INF, a),
                        "apo_obs": self.apo(g, d, d, a),
                        "ate": self.ate(g, d, a),
                        "theta": self.theta(g, d, a),
                    })
        return {"spec": spec, "means": table}

    def write_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


_ESTIMAND_DISPATCH = {
    "apo": lambda o, g, d, dp, a: o.apo(g, d, dp, a),
    "gamma_pt": lambda o, g, d, dp, a: o.gamma_pt(g, d, dp, a),
    "ate": lambda o, g, d, dp, a: o.ate(g, d, a),
    "theta": lambda o, g, d, dp, a: o.theta(g, d, a),
    "rho": lambda o, g, d, dp, a: o.rho(d, dp, a),
    "delta_rho": lambda o, g, d, dp, a: o.delta_rho(d, a),
    "bias": lambda o, g, d, dp, a: o.bias(d, dp, a, gender=g or FEMALE),
}


def oracle_estimand(oracle: DgpOracle, which: str, g: str | None = None,
                    d: int = None, dprime=None, a: int = None) -> float:
    """Exact closed-form value of a named causal quantity."""
    if which not in _ESTIMAND_DISPATCH:
        raise OutOfRange("estimand", which)
    return _ESTIMAND_DISPATCH[which](oracle, g, d, dprime, a)


def generate(spec: DgpSpec) -> tuple:
    """Draw a panel from the spec; returns (PanelData, DgpOracle).

    Deterministic given the spec (including its seed). Units double as
    clusters. In discrete-ability mode the ability level is emitted as
    covariate x1.
    """
    oracle = DgpOracle(spec)
    rng = np.random.default_rng(spec.seed)
    ages = np.array(list(spec.ages), dtype=np.int32)
    n_ages = len(ages)

    # unit-level frames, blocked by (gender, group, ability level)
    blocks = []
    for g_code, g in enumerate((FEMALE, MALE)):
        for d in spec.treat_ages:
            counts = spec.x_counts(g, d)
            for x, n in enumerate(counts):
                if n:
                    blocks.append((g_code, d, x, int(n)))
    n_units = sum(b[3] for b in blocks)
    u_gender = np.empty(n_units, dtype=np.int8)
    u_treat = np.empty(n_units, dtype=np.int32)
    u_x = np.empty(n_units, dtype=np.int32)
    pos = 0
    for g_code, d, x, n in blocks:
        u_gender[pos:pos + n] = g_code
        u_treat[pos:pos + n] = d
        u_x[pos:pos + n] = x
        pos += n
    u_cohort = np.arange(n_units, dtype=np.int32) % spec.n_cohorts

    # mean earnings per row from the oracle's conditional means
    mean = np.empty((n_units, n_ages))
    for g_code, g in enumerate((FEMALE, MALE)):
        for d in spec.treat_ages:
            for x in range(len(spec.x_counts(g, d))):
                mask = (u_gender == g_code) & (u_treat == d) & (u_x == x)
                if not mask.any():
                    continue
                mean[mask] = [oracle.cond_apo(g, d, d, int(a), x)
                              for a in ages]
    # undo the zero-mass scaling: the point mass is applied per draw below
    if spec.zero_mass:
        mean /= (1.0 - spec.zero_mass)

    earnings = mean
    if spec.noise_sd > 0:
        z = rng.standard_normal((n_units, n_ages))
        if spec.noise_ar1:
            phi = spec.noise_ar1
            for t in range(1, n_ages):
                z[:, t] = phi * z[:, t - 1] + math.sqrt(1 - phi * phi) * z[:, t]
        sd = spec.noise_sd
        earnings = mean * np.exp(sd * z - 0.5 * sd * sd)
    if spec.year_effect:
        years = (u_cohort[:, None] + ages[None, :]).astype(np.float64)
        earnings = earnings + spec.year_effect * years
    if spec.zero_mass:
        keep = rng.random((n_units, n_ages)) >= spec.zero_mass
        earnings = earnings * keep

    unit_code = np.repeat(np.arange(n_units, dtype=np.int64), n_ages)
    data = PanelData(
        unit_labels=np.arange(n_units, dtype=np.int64),
        unit_code=unit_code,
        cluster_code=unit_code,
        gender_code=np.repeat(u_gender, n_ages),
        treat_age=np.repeat(u_treat, n_ages),
        age=np.tile(ages, n_units),
        year=(spec.base_year
              + np.repeat(u_cohort, n_ages)
              + np.tile(ages, n_units)).astype(np.int32),
        earnings=earnings.ravel(),
        covariates=(np.repeat(u_x, n_ages).astype(np.float64)[:, None]
                    if spec.n_x_levels else None),
    )
    return data, oracle


def read_spec(path) -> DgpSpec:
    """Parse a plain-text ``key = value`` configuration into a DgpSpec.

    Values are Python literals (numbers, tuples, dicts); '#' starts a
    comment. Unknown keys raise InvalidSpec.
    """
    known = {f.name for f in fields(DgpSpec)}
    kwargs = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidSpec(f"line {lineno}", "expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in known:
                raise InvalidSpec(key, "unknown configuration key")
            try:
                kwargs[key] = ast.literal_eval(value.strip())
            except (ValueError, SyntaxError):
                kwargs[key] = value.strip()
    spec = DgpSpec(**kwargs)
    spec.validate()
    return spec


def write_spec(spec: DgpSpec, path):
    """Serialize a DgpSpec back to the key = value format (round-trip)."""
    with open(path, "w") as fh:
        for f in fields(DgpSpec):
            fh.write(f"{f.name} = {getattr(spec, f.name)!r}\n")


def with_overrides(spec: DgpSpec, **kwargs) -> DgpSpec:
    """Copy of the spec with selected fields replaced (validated)."""
    out = replace(spec, **kwargs)
    out.validate()
    return out
