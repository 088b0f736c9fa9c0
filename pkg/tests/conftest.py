"""Shared fabrication helpers: households, cohort cells, and small panels.

Fabricated panels place a known share equation in one target function and
fill the remaining shares with a flat remainder; they exercise the
estimators without running the full survey pipeline.
"""

from __future__ import annotations

import math
import time
import warnings

import numpy as np
import pytest

from pseudopanel import cohort, datagen
from pseudopanel.functions import FUNCTION_CODES, N_FUNCTIONS

DEFAULT_YEARS = (1982, 1986, 1992)

#: Raw-variable coefficients used by fabricated panels (zero where unset).
DEFAULT_COEFFS = {
    "const": 0.20,
    "log_y": 0.03,
    "log_y_sq": 0.0,
    "log_age": 0.01,
    "log_age_sq": 0.0,
    "log_size": -0.01,
    "log_size_sq": 0.0,
}


def make_household(
    hid: str = "h0",
    year: int = 1982,
    y: float = 20000.0,
    age: float = 45.0,
    size: float = 2.0,
    shares: np.ndarray | None = None,
) -> cohort.HouseholdRecord:
    if shares is None:
        shares = np.full(N_FUNCTIONS, 1.0 / N_FUNCTIONS)
    return cohort.HouseholdRecord(
        household_id=hid,
        wave_year=year,
        budget_shares=shares,
        total_expenditure=y,
        age=age,
        size_oxford=size,
    )


def random_households(
    rng: np.random.Generator,
    n: int,
    year: int = 1982,
    equal_y: bool = False,
    prefix: str = "h",
) -> list[cohort.HouseholdRecord]:
    """Households with Dirichlet shares (sum to 1 exactly) and lognormal y."""
    alpha = np.full(N_FUNCTIONS, 3.0)
    shares = rng.dirichlet(alpha, size=n)
    if equal_y:
        y = np.full(n, float(rng.uniform(5000.0, 50000.0)))
    else:
        y = np.exp(rng.normal(10.0, 0.5, n))
    age = rng.uniform(20.0, 80.0, n)
    size = np.exp(rng.normal(0.7, 0.3, n))
    return [
        cohort.HouseholdRecord(
            household_id=f"{prefix}{i:05d}",
            wave_year=year,
            budget_shares=shares[i],
            total_expenditure=float(y[i]),
            age=float(age[i]),
            size_oxford=float(size[i]),
        )
        for i in range(n)
    ]


def make_cell(
    cohort_id: int,
    year: int,
    *,
    values: dict[str, float],
    target: str = "food_home",
    w: float = 0.2,
    n_members: int = 1,
    hetero_factor: float = 1.0,
) -> cohort.CohortObservation:
    """One fabricated cohort-wave cell with the target share set to ``w``."""
    shares = np.full(N_FUNCTIONS, (1.0 - w) / (N_FUNCTIONS - 1))
    shares[FUNCTION_CODES.index(target)] = w
    return cohort.CohortObservation(
        cohort_id=cohort_id,
        wave_year=year,
        n_members=n_members,
        shares=shares,
        log_y=values["log_y"],
        log_y_sq=values["log_y_sq"],
        log_age=values["log_age"],
        log_age_sq=values["log_age_sq"],
        log_size=values["log_size"],
        log_size_sq=values["log_size_sq"],
        hetero_factor=hetero_factor,
    )


def synthetic_panel(
    rng: np.random.Generator,
    n_units: int = 12,
    years: tuple[int, ...] = DEFAULT_YEARS,
    *,
    target: str = "food_home",
    coeffs: dict[str, float] | None = None,
    year_effects: dict[int, float] | None = None,
    unit_sd: float = 0.0,
    unit_effect_corr: float = 0.0,
    noise_sd: float = 0.005,
    random_factors: bool = False,
) -> cohort.PanelDataset:
    """Cohort-level panel following the raw share equation exactly.

    The raw cell variables follow centered, well-conditioned distributions
    (log y near 10, ages near 45). ``unit_sd`` adds a unit effect, drawn
    orthogonal to the unit's expenditure level unless ``unit_effect_corr``
    pulls it toward (log y - 10). With ``random_factors`` the cells get
    hetero factors in (1, sqrt(n)) and the raw noise is scaled by 1/factor,
    so the transformed regression is exactly homoskedastic.
    """
    b = dict(DEFAULT_COEFFS)
    if coeffs:
        b.update(coeffs)
    d_t = {y: 0.0 for y in years}
    if year_effects:
        d_t.update(year_effects)

    m_i = rng.normal(10.0, 0.45, n_units)
    mu_i = rng.normal(0.0, 1.0, n_units)
    mu_i = unit_sd * mu_i + unit_effect_corr * (m_i - 10.0)
    a_i = rng.normal(45.0, 8.0, n_units)
    s_i = np.exp(rng.normal(0.8, 0.25, n_units))

    cells: dict[tuple[int, int], cohort.CohortObservation] = {}
    for i in range(n_units):
        for j, year in enumerate(years):
            L = m_i[i] + 0.04 * j + rng.normal(0.0, 0.12)
            A = math.log(a_i[i] + 4.0 * j)
            S = math.log(s_i[i]) + rng.normal(0.0, 0.05)
            values = {
                "log_y": L,
                "log_y_sq": L * L + abs(rng.normal(0.02, 0.005)),
                "log_age": A,
                "log_age_sq": A * A,
                "log_size": S,
                "log_size_sq": S * S + abs(rng.normal(0.01, 0.002)),
            }
            if random_factors:
                n_members = 25
                factor = float(rng.uniform(1.5, 4.5))
            else:
                n_members, factor = 1, 1.0
            w = (
                b["const"]
                + b["log_y"] * values["log_y"]
                + b["log_y_sq"] * values["log_y_sq"]
                + b["log_age"] * values["log_age"]
                + b["log_age_sq"] * values["log_age_sq"]
                + b["log_size"] * values["log_size"]
                + b["log_size_sq"] * values["log_size_sq"]
                + d_t[year]
                + mu_i[i]
                + rng.normal(0.0, noise_sd) / factor
            )
            cells[(i + 1, year)] = make_cell(
                i + 1,
                year,
                values=values,
                target=target,
                w=w,
                n_members=n_members,
                hetero_factor=factor,
            )
    return cohort.PanelDataset(
        cohorts=list(range(1, n_units + 1)), periods=list(years), cells=cells
    )


def gaussian_panel(
    rng: np.random.Generator,
    n_units: int,
    years: tuple[int, ...],
    *,
    target: str = "food_home",
    random_factors: bool = True,
) -> cohort.PanelDataset:
    """A panel whose raw variables are iid standard normals.

    No economic structure; intended for estimator-identity checks where a
    well-conditioned design matters more than realism.
    """
    cells: dict[tuple[int, int], cohort.CohortObservation] = {}
    for i in range(1, n_units + 1):
        for year in years:
            values = {k: float(rng.normal()) for k in (
                "log_y", "log_y_sq", "log_age", "log_age_sq", "log_size", "log_size_sq"
            )}
            if random_factors:
                n_members, factor = 25, float(rng.uniform(1.0, 5.0))
            else:
                n_members, factor = 1, 1.0
            w = float(rng.normal(0.2, 0.05))
            cells[(i, year)] = make_cell(
                i, year, values=values, target=target, w=w,
                n_members=n_members, hetero_factor=factor,
            )
    return cohort.PanelDataset(
        cohorts=list(range(1, n_units + 1)), periods=list(years), cells=cells
    )


def dyadic_profile() -> np.ndarray:
    """A share profile whose float sum is exactly 1.0."""
    shares = np.full(N_FUNCTIONS, 0.5 / 16.0)
    shares[0] = 0.25
    shares[1] = 0.25
    assert shares.sum() == 1.0
    return shares


def zero_sum_bump(function: str, value: float) -> np.ndarray:
    """A coefficient vector with one target entry, compensated to sum to 0."""
    b = np.full(N_FUNCTIONS, -value / (N_FUNCTIONS - 1))
    b[FUNCTION_CODES.index(function)] = value
    return b


def tiny_config(
    n_classes: int = 2,
    waves=((1982, 300), (1986, 300)),
    b1: np.ndarray | None = None,
    b2: np.ndarray | None = None,
    sigma_nu: float = 0.0,
    profile_sep: float = 0.0,
    log_y_offsets: tuple[float, ...] | None = None,
    seed: int = 0,
) -> datagen.PopulationConfig:
    """A small fully-controlled population: flat profiles, optional per-class
    share bumps (paid for by the two large entries), zero coefficients unless
    overridden."""
    zeros = np.zeros(N_FUNCTIONS)
    classes = []
    for c in range(n_classes):
        shares = dyadic_profile()
        if profile_sep:
            shares[2 + c % 15] += profile_sep
            shares[0] -= profile_sep / 2.0
            shares[1] -= profile_sep / 2.0
        off = 0.0 if log_y_offsets is None else log_y_offsets[c]
        classes.append(
            datagen.ClassProfile(
                label=f"c{c}",
                shares=shares,
                log_y_mean=10.0 + off,
                log_y_sd=0.3,
                log_y_shift={},
                age_mean=45.0,
                age_sd=8.0,
                log_size_mean=0.7,
                log_size_sd=0.2,
            )
        )
    years = [y for y, _ in waves]
    return datagen.PopulationConfig(
        waves=tuple(waves),
        classes=classes,
        class_probs=np.full(n_classes, 1.0 / max(n_classes, 1)),
        b1=zeros if b1 is None else np.asarray(b1, dtype=float),
        b2=zeros if b2 is None else np.asarray(b2, dtype=float),
        b3=zeros.copy(),
        b4=zeros.copy(),
        b5=zeros.copy(),
        b6=zeros.copy(),
        year_effects={y: zeros.copy() for y in years},
        class_effects=np.zeros((n_classes, N_FUNCTIONS)),
        sigma_nu=np.full(N_FUNCTIONS, sigma_nu),
        reference_moments={
            "log_y": 10.0,
            "log_y_sq": 100.09,
            "log_age": 3.80,
            "log_age_sq": 14.47,
            "log_size": 0.70,
            "log_size_sq": 0.53,
        },
        rng_seed=seed,
    )


class DefaultRun:
    """One full default-configuration pipeline run plus its wall time."""

    def __init__(self, path, seconds: float):
        self.path = path
        self.seconds = seconds

    def __truediv__(self, rel: str):
        return self.path / rel


@pytest.fixture(scope="session")
def default_run_dir(tmp_path_factory):
    """Artifacts of one full default-configuration pipeline run (seed 7)."""
    from pseudopanel import cli

    out = tmp_path_factory.mktemp("default_run")
    start = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rc = cli.main(["run-all", "--out", str(out), "--seed", "7"])
    elapsed = time.perf_counter() - start
    assert rc == 0, "default run-all pipeline failed"
    return DefaultRun(out, elapsed)
