"""Shared fixtures: small synthetic worlds used across the test modules."""

import numpy as np
import pytest

from ntdid.dgp import DgpOracle, DgpSpec, generate, with_overrides
from ntdid.panel import TwoByTwoSlice, build_two_by_two


def population_slice(oracle, d, a, control_offset=1, baseline_gap=1):
    """Exact population 2x2 slice from an oracle, mirroring build_two_by_two."""
    dprime = (a if a >= d else d) + control_offset
    b = d - baseline_gap
    cells = oracle.population_cells(groups=(d, dprime), ages=(a, b))
    return TwoByTwoSlice.from_cells(d, dprime, a, b, cells)


@pytest.fixture(scope="session")
def constant_rho_spec():
    """Non-parallel trends (slope_gradient != 0) but a constant gender ratio."""
    return DgpSpec(treat_ages=(25, 26, 27, 28, 29, 30), units_per_group=200,
                   slope_gradient=150.0, curvature=10.0, rho_base=0.8,
                   effect_f=-0.2, effect_m=-0.05, seed=11)


@pytest.fixture(scope="session")
def constant_rho_oracle(constant_rho_spec):
    return DgpOracle(constant_rho_spec)


@pytest.fixture(scope="session")
def varying_rho_spec(constant_rho_spec):
    return with_overrides(constant_rho_spec, rho_age_slope=0.01,
                          rho_age_curve=-0.002)


@pytest.fixture(scope="session")
def varying_rho_oracle(varying_rho_spec):
    return DgpOracle(varying_rho_spec)


@pytest.fixture(scope="session")
def noisy_world(constant_rho_spec):
    """Moderate-size noisy sample with its oracle, for estimator smoke tests."""
    spec = with_overrides(constant_rho_spec, units_per_group=400,
                          noise_sd=0.2, noise_ar1=0.4, seed=42)
    data, oracle = generate(spec)
    return spec, data, oracle


@pytest.fixture(scope="session")
def clean_panel(constant_rho_spec):
    """Zero-noise panel: sample cell means equal the oracle exactly."""
    data, oracle = generate(constant_rho_spec)
    return data, oracle


def default_slice(data, d=26, a=28):
    return build_two_by_two(data, d, a)


def scenario_grid(n=40, base_seed=100):
    """Deterministic grid of oracle worlds exercising every DGP knob."""
    specs = []
    rng = np.random.default_rng(base_seed)
    for i in range(n):
        specs.append(DgpSpec(
            treat_ages=(25, 26, 27, 28, 29, 30),
            units_per_group=50,
            base_earnings=float(rng.uniform(10_000, 40_000)),
            base_slope=float(rng.uniform(200, 1200)),
            slope_gradient=float(rng.uniform(-300, 300)),
            curvature=float(rng.uniform(-20, 20)),
            rho_base=float(rng.uniform(0.6, 0.95)),
            rho_age_slope=float(rng.uniform(-0.005, 0.005)) if i % 2 else 0.0,
            rho_age_curve=float(rng.uniform(-0.002, 0.0)) if i % 3 == 0 else 0.0,
            effect_f=float(rng.uniform(-0.35, -0.05)),
            effect_m=float(rng.uniform(-0.10, 0.05)),
            x_fractions={} if i % 2 else {d: (0.5, 0.3, 0.2)
                                          for d in (25, 26, 27, 28, 29, 30)},
            x_slope=float(rng.uniform(0, 200)) if i % 2 == 0 else 0.0,
            x_intercept=float(rng.uniform(0, 3000)) if i % 2 == 0 else 0.0,
            seed=int(base_seed + i),
        ))
    return specs
