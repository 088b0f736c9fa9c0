"""Synthetic repeated cross-section survey with known ground truth.

Households belong to latent behavioral classes. Every budget share follows
the same linear share equation the estimators assume, built so adding-up
holds exactly: class share profiles sum to 1, every coefficient vector is
zero-sum across the 18 functions, regressors enter centered at fixed
reference moments (folded into the intercepts), class effects and household
noise are zero-sum. Expenditure and household size are lognormal and age is
a truncated normal, so the implied population moments (and hence the true
elasticities) are available semi-analytically.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .cohort import HouseholdRecord
from .functions import FUNCTION_CODES, N_FUNCTIONS

#: Household-level mean budget shares the default population is calibrated to.
DEFAULT_MEAN_SHARES = {
    "alcohol_tobacco": 0.030,
    "food_home": 0.157,
    "food_away": 0.043,
    "housing_maintenance": 0.027,
    "communications": 0.020,
    "others": 0.020,
    "transfers": 0.030,
    "education": 0.024,
    "clothing": 0.063,
    "housing": 0.186,
    "leisure": 0.054,
    "furniture": 0.061,
    "health": 0.065,
    "security": 0.038,
    "personal_care": 0.025,
    "personal_transport": 0.084,
    "public_transport": 0.020,
    "vehicles": 0.049,
}

#: Target total-expenditure elasticities (before the zero-sum correction).
DEFAULT_ELASTICITY_TARGETS = {
    "alcohol_tobacco": 0.60,
    "food_home": 0.51,
    "food_away": 1.19,
    "housing_maintenance": 1.07,
    "communications": 0.87,
    "others": 1.42,
    "transfers": 1.53,
    "education": 1.44,
    "clothing": 1.24,
    "housing": 0.84,
    "leisure": 1.31,
    "furniture": 1.38,
    "health": 0.73,
    "security": 0.89,
    "personal_care": 1.16,
    "personal_transport": 1.05,
    "public_transport": 0.86,
    "vehicles": 1.57,
}

DEFAULT_WAVES = ((1982, 10936), (1986, 9915), (1992, 9475))

#: Functions carrying a quadratic expenditure term in the default population.
DEFAULT_B2 = {
    "food_home": -0.012,
    "housing": -0.012,
    "leisure": 0.012,
    "vehicles": 0.012,
}


@dataclass
class ClassProfile:
    """One latent behavioral class."""

    label: str
    shares: np.ndarray  # intercept share profile, sums to 1
    log_y_mean: float
    log_y_sd: float
    log_y_shift: dict[int, float]  # per-wave shift of the log-expenditure mean
    age_mean: float
    age_sd: float
    log_size_mean: float
    log_size_sd: float

    def __post_init__(self):
        self.shares = np.asarray(self.shares, dtype=float)
        if self.shares.shape != (N_FUNCTIONS,):
            raise ValueError(f"class {self.label!r}: profile must have {N_FUNCTIONS} shares")
        if np.any(self.shares < 0):
            raise ValueError(f"class {self.label!r}: profile shares must be non-negative")
        if abs(float(self.shares.sum()) - 1.0) > 1e-8:
            raise ValueError(f"class {self.label!r}: profile shares must sum to 1")
        if self.log_y_sd <= 0 or self.age_sd <= 0 or self.log_size_sd <= 0:
            raise ValueError(f"class {self.label!r}: dispersions must be positive")


_REF_KEYS = ("log_y", "log_y_sq", "log_age", "log_age_sq", "log_size", "log_size_sq")


@dataclass
class PopulationConfig:
    waves: tuple[tuple[int, int], ...]
    classes: list[ClassProfile]
    class_probs: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray
    b5: np.ndarray
    b6: np.ndarray
    year_effects: dict[int, np.ndarray]
    class_effects: np.ndarray  # (n_classes, 18), zero-sum rows
    sigma_nu: np.ndarray  # (18,) additive share-noise sd
    reference_moments: dict[str, float]
    age_drift: dict[int, float] = field(default_factory=dict)
    age_min: float = 18.0
    rng_seed: int = 7

    def __post_init__(self):
        for name in ("b1", "b2", "b3", "b4", "b5", "b6", "sigma_nu", "class_probs"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        self.class_effects = np.asarray(self.class_effects, dtype=float)
        self.year_effects = {y: np.asarray(v, dtype=float) for y, v in self.year_effects.items()}

        if len(self.waves) < 2:
            raise ValueError("need at least two waves")
        years = [y for y, _ in self.waves]
        if sorted(set(years)) != years:
            raise ValueError("wave years must be distinct and ascending")
        if any(n < 1 for _, n in self.waves):
            raise ValueError("wave sizes must be positive")
        C = len(self.classes)
        if C < 1:
            raise ValueError("need at least one class")
        if self.class_probs.shape != (C,) or abs(self.class_probs.sum() - 1) > 1e-10:
            raise ValueError("class_probs must sum to 1 over the classes")
        if np.any(self.class_probs <= 0):
            raise ValueError("class_probs must be positive")
        for name in ("b1", "b2", "b3", "b4", "b5", "b6"):
            v = getattr(self, name)
            if v.shape != (N_FUNCTIONS,):
                raise ValueError(f"{name} must have {N_FUNCTIONS} entries")
            if abs(float(v.sum())) > 1e-8:
                raise ValueError(f"{name} must be zero-sum across functions (adding-up)")
        for y in years:
            d = self.year_effects.get(y)
            if d is None or d.shape != (N_FUNCTIONS,):
                raise ValueError(f"year_effects missing or malformed for wave {y}")
            if abs(float(d.sum())) > 1e-8:
                raise ValueError(f"year_effects[{y}] must be zero-sum")
        if np.any(np.abs(self.year_effects[years[0]]) > 0):
            raise ValueError("the first wave's year effects must be zero (base wave)")
        if self.class_effects.shape != (C, N_FUNCTIONS):
            raise ValueError("class_effects must be (n_classes, 18)")
        if np.any(np.abs(self.class_effects.sum(axis=1)) > 1e-8):
            raise ValueError("class_effects rows must be zero-sum")
        if self.sigma_nu.shape != (N_FUNCTIONS,) or np.any(self.sigma_nu < 0):
            raise ValueError("sigma_nu must be 18 non-negative values")
        missing = [k for k in _REF_KEYS if k not in self.reference_moments]
        if missing:
            raise ValueError(f"reference_moments missing keys: {missing}")

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def years(self) -> list[int]:
        return [y for y, _ in self.waves]

    def n_total(self) -> int:
        return sum(n for _, n in self.waves)


# ---------------------------------------------------------------------------
# implied moments (semi-analytic)


_age_moment_cache: dict[tuple[float, float, float], tuple[float, float]] = {}


def _age_moments(cfg: PopulationConfig, profile: ClassProfile, year: int) -> tuple[float, float]:
    """E[log age] and E[(log age)^2] for one class-wave (truncated normal)."""
    loc = profile.age_mean + cfg.age_drift.get(year, 0.0)
    scale = profile.age_sd
    key = (loc, scale, cfg.age_min)
    if key not in _age_moment_cache:
        a = (cfg.age_min - loc) / scale
        dist_args = dict(args=(a, np.inf), loc=loc, scale=scale)
        e1 = float(stats.truncnorm.expect(np.log, **dist_args))
        e2 = float(stats.truncnorm.expect(lambda x: np.log(x) ** 2, **dist_args))
        _age_moment_cache[key] = (e1, e2)
    return _age_moment_cache[key]


def class_wave_moments(cfg: PopulationConfig) -> dict[str, np.ndarray]:
    """Per class-wave moments of the regressors, (C, T) arrays.

    ``*_g`` entries are expenditure-weighted (g-tilted) moments
    E[y f(log y)] / E[y]; for lognormal y they shift the log mean by its
    variance.
    """
    C, T = cfg.n_classes, len(cfg.waves)
    out = {
        k: np.zeros((C, T))
        for k in (
            "log_y",
            "log_y_sq",
            "log_y_g",
            "log_y_sq_g",
            "log_age",
            "log_age_sq",
            "log_size",
            "log_size_sq",
        )
    }
    for ci, profile in enumerate(cfg.classes):
        for ti, (year, _) in enumerate(cfg.waves):
            m = profile.log_y_mean + profile.log_y_shift.get(year, 0.0)
            s2 = profile.log_y_sd**2
            out["log_y"][ci, ti] = m
            out["log_y_sq"][ci, ti] = m * m + s2
            out["log_y_g"][ci, ti] = m + s2
            out["log_y_sq_g"][ci, ti] = (m + s2) ** 2 + s2
            a1, a2 = _age_moments(cfg, profile, year)
            out["log_age"][ci, ti] = a1
            out["log_age_sq"][ci, ti] = a2
            sm, ss2 = profile.log_size_mean, profile.log_size_sd**2
            out["log_size"][ci, ti] = sm
            out["log_size_sq"][ci, ti] = sm * sm + ss2
    return out


def _mean_share_matrix(cfg: PopulationConfig, mom: dict[str, np.ndarray], tilted: bool) -> np.ndarray:
    """(C, T, 18) expected shares per class-wave, optionally y-weighted."""
    ref = cfg.reference_moments
    ly = mom["log_y_g"] if tilted else mom["log_y"]
    lq = mom["log_y_sq_g"] if tilted else mom["log_y_sq"]
    C, T = ly.shape
    W = np.zeros((C, T, N_FUNCTIONS))
    for ti, (year, _) in enumerate(cfg.waves):
        for ci in range(C):
            W[ci, ti] = (
                cfg.classes[ci].shares
                + cfg.b1 * (ly[ci, ti] - ref["log_y"])
                + cfg.b2 * (lq[ci, ti] - ref["log_y_sq"])
                + cfg.b3 * (mom["log_age"][ci, ti] - ref["log_age"])
                + cfg.b4 * (mom["log_age_sq"][ci, ti] - ref["log_age_sq"])
                + cfg.b5 * (mom["log_size"][ci, ti] - ref["log_size"])
                + cfg.b6 * (mom["log_size_sq"][ci, ti] - ref["log_size_sq"])
                + cfg.year_effects[year]
                + cfg.class_effects[ci]
            )
    return W


def implied_moments(cfg: PopulationConfig) -> dict:
    """Population-implied means at two weightings.

    ``population``: household-level means, classes weighted by class_probs
    and waves by wave size (what pooled sample means estimate).

    ``cells``: class-wave cells weighted equally (what unweighted means
    over a balanced panel of cohort cells estimate; map cells are narrow
    in log expenditure, so the expenditure-weighted within-cell tilt is
    second order and the untilted class moments are the right analog).
    """
    mom = class_wave_moments(cfg)
    n_t = np.array([n for _, n in cfg.waves], dtype=float)
    wave_w = n_t / n_t.sum()
    cw = cfg.class_probs[:, None] * wave_w[None, :]  # (C, T) population weights

    pop_shares = np.tensordot(cw, _mean_share_matrix(cfg, mom, tilted=False), axes=2)
    pop = {
        "log_y": float((cw * mom["log_y"]).sum()),
        "log_y_sq": float((cw * mom["log_y_sq"]).sum()),
        "log_age": float((cw * mom["log_age"]).sum()),
        "log_age_sq": float((cw * mom["log_age_sq"]).sum()),
        "log_size": float((cw * mom["log_size"]).sum()),
        "log_size_sq": float((cw * mom["log_size_sq"]).sum()),
        "shares": pop_shares,
    }

    cell_shares = _mean_share_matrix(cfg, mom, tilted=False).mean(axis=(0, 1))
    cells = {
        "log_y": float(mom["log_y"].mean()),
        "log_y_sq": float(mom["log_y_sq"].mean()),
        "shares": cell_shares,
    }
    return {"population": pop, "cells": cells}


# ---------------------------------------------------------------------------
# ground truth and generation


@dataclass
class GroundTruth:
    """Everything the generator knows that an estimator should recover."""

    b1: np.ndarray
    b2: np.ndarray
    b3: np.ndarray
    b4: np.ndarray
    b5: np.ndarray
    b6: np.ndarray
    year_effects: dict[int, np.ndarray]
    class_effects: np.ndarray
    sigma_nu: np.ndarray
    class_labels: dict[str, int]
    mean_log_y: float
    mean_shares: np.ndarray
    cell_mean_log_y: float
    cell_mean_shares: np.ndarray
    elasticities: np.ndarray
    clip_fraction: float | None = None

    def to_json_dict(self) -> dict:
        return {
            "coefficients": {
                "b1": self.b1.tolist(),
                "b2": self.b2.tolist(),
                "b3": self.b3.tolist(),
                "b4": self.b4.tolist(),
                "b5": self.b5.tolist(),
                "b6": self.b6.tolist(),
            },
            "year_effects": {str(y): v.tolist() for y, v in self.year_effects.items()},
            "class_effects": self.class_effects.tolist(),
            "sigma_nu": self.sigma_nu.tolist(),
            "function_codes": list(FUNCTION_CODES),
            "moments": {
                "mean_log_y": self.mean_log_y,
                "mean_shares": self.mean_shares.tolist(),
                "cell_mean_log_y": self.cell_mean_log_y,
                "cell_mean_shares": self.cell_mean_shares.tolist(),
            },
            "elasticities": self.elasticities.tolist(),
            "n_households": len(self.class_labels),
            "clip_fraction": self.clip_fraction,
        }

    def labels_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "class"])
        for hid, cls in self.class_labels.items():
            w.writerow([hid, cls])
        return buf.getvalue()


def _household_ids(year: int, n: int) -> list[str]:
    return [f"{year}-{i:06d}" for i in range(n)]


def _wave_seeds(cfg: PopulationConfig) -> list[tuple[np.random.SeedSequence, np.random.SeedSequence]]:
    children = np.random.SeedSequence(cfg.rng_seed).spawn(2 * len(cfg.waves))
    return [(children[2 * i], children[2 * i + 1]) for i in range(len(cfg.waves))]


def ground_truth(cfg: PopulationConfig) -> GroundTruth:
    """True coefficients, per-household class labels, and implied moments.

    The label draw is deterministic in the config seed and shared with
    :func:`generate`, so the truth can be materialized without generating
    the full survey. Elasticities are evaluated at the cell-level moments:
    e_f = 1 + (b1_f + 2 b2_f cell_mean_log_y) / cell_mean_w_f.
    """
    labels: dict[str, int] = {}
    for (year, n), (class_seed, _) in zip(cfg.waves, _wave_seeds(cfg)):
        rng = np.random.default_rng(class_seed)
        cls = rng.choice(cfg.n_classes, size=n, p=cfg.class_probs)
        for hid, c in zip(_household_ids(year, n), cls):
            labels[hid] = int(c)

    mom = implied_moments(cfg)
    w_c = mom["cells"]["shares"]
    ly_c = mom["cells"]["log_y"]
    if np.any(w_c <= 0):
        raise ValueError("implied mean shares must be positive; rebalance the profiles")
    elasticities = 1.0 + (cfg.b1 + 2.0 * cfg.b2 * ly_c) / w_c

    return GroundTruth(
        b1=cfg.b1.copy(),
        b2=cfg.b2.copy(),
        b3=cfg.b3.copy(),
        b4=cfg.b4.copy(),
        b5=cfg.b5.copy(),
        b6=cfg.b6.copy(),
        year_effects={y: v.copy() for y, v in cfg.year_effects.items()},
        class_effects=cfg.class_effects.copy(),
        sigma_nu=cfg.sigma_nu.copy(),
        class_labels=labels,
        mean_log_y=mom["population"]["log_y"],
        mean_shares=mom["population"]["shares"].copy(),
        cell_mean_log_y=ly_c,
        cell_mean_shares=w_c.copy(),
        elasticities=elasticities,
    )


def generate(cfg: PopulationConfig) -> tuple[list[list[HouseholdRecord]], GroundTruth]:
    """Draw the survey: one list of records per wave, plus the ground truth.

    Shares are assembled from the exact linear equation; rows that clip at
    zero are renormalized (rare under the default calibration; the realized
    fraction is recorded on the truth object and a warning fires above 2%).
    """
    truth = ground_truth(cfg)
    ref = cfg.reference_moments
    waves_out: list[list[HouseholdRecord]] = []
    n_clipped = 0

    for (year, n), (class_seed, data_seed) in zip(cfg.waves, _wave_seeds(cfg)):
        rng_class = np.random.default_rng(class_seed)
        cls = rng_class.choice(cfg.n_classes, size=n, p=cfg.class_probs)
        rng = np.random.default_rng(data_seed)

        log_y = np.empty(n)
        age = np.empty(n)
        log_size = np.empty(n)
        for ci, profile in enumerate(cfg.classes):
            idx = np.flatnonzero(cls == ci)
            if idx.size == 0:
                continue
            m = profile.log_y_mean + profile.log_y_shift.get(year, 0.0)
            log_y[idx] = rng.normal(m, profile.log_y_sd, idx.size)
            loc = profile.age_mean + cfg.age_drift.get(year, 0.0)
            a = (cfg.age_min - loc) / profile.age_sd
            age[idx] = stats.truncnorm.rvs(
                a, np.inf, loc=loc, scale=profile.age_sd, size=idx.size, random_state=rng
            )
            log_size[idx] = rng.normal(profile.log_size_mean, profile.log_size_sd, idx.size)

        log_age = np.log(age)
        nu = rng.normal(0.0, 1.0, (n, N_FUNCTIONS)) * cfg.sigma_nu[None, :]
        nu -= nu.mean(axis=1, keepdims=True)

        profiles = np.vstack([p.shares for p in cfg.classes])
        d_t = cfg.year_effects[year]
        W = (
            profiles[cls]
            + np.outer(log_y - ref["log_y"], cfg.b1)
            + np.outer(log_y**2 - ref["log_y_sq"], cfg.b2)
            + np.outer(log_age - ref["log_age"], cfg.b3)
            + np.outer(log_age**2 - ref["log_age_sq"], cfg.b4)
            + np.outer(log_size - ref["log_size"], cfg.b5)
            + np.outer(log_size**2 - ref["log_size_sq"], cfg.b6)
            + d_t[None, :]
            + cfg.class_effects[cls]
            + nu
        )
        clipped_rows = np.any(W < 0, axis=1)
        n_clipped += int(clipped_rows.sum())
        W = np.clip(W, 0.0, None)
        W /= W.sum(axis=1, keepdims=True)

        ids = _household_ids(year, n)
        records = [
            HouseholdRecord(
                household_id=ids[i],
                wave_year=year,
                budget_shares=W[i],
                total_expenditure=float(np.exp(log_y[i])),
                age=float(age[i]),
                size_oxford=float(np.exp(log_size[i])),
            )
            for i in range(n)
        ]
        waves_out.append(records)

    truth.clip_fraction = n_clipped / cfg.n_total()
    if truth.clip_fraction > 0.02:
        warnings.warn(
            f"{100 * truth.clip_fraction:.2f}% of households hit the zero-share "
            "clip; implied moments may drift (reduce sigma_nu or raise profiles)",
            RuntimeWarning,
            stacklevel=2,
        )
    return waves_out, truth


# ---------------------------------------------------------------------------
# default calibrated population


def _zero_sum(raw: np.ndarray, base: np.ndarray) -> np.ndarray:
    """Correct a coefficient vector to zero total, spreading the correction
    proportionally to the base share profile (keeps small shares safe)."""
    return raw - base * raw.sum()


# The default latent classes span wide expenditure levels (so the cohort
# panel has the between variation that identifies the quadratic term), ages
# across every age class, household sizes, and per-class expenditure trends.
_CLASS_SPECS = [
    # label, age_mean, log_y offset, trend eta, log_size_mean
    ("young starters", 25.0, -0.30, 0.15, math.log(1.4)),
    ("young urban", 29.0, 0.35, 0.12, math.log(1.6)),
    ("young families", 33.0, -0.15, 0.08, math.log(2.6)),
    ("mid thirties commuters", 37.0, 0.20, 0.05, math.log(2.9)),
    ("forties modest", 42.0, -0.50, 0.02, math.log(3.1)),
    ("large households", 46.0, 0.10, 0.00, math.log(3.4)),
    ("established fifties", 51.0, 0.50, -0.03, math.log(2.7)),
    ("empty nesters", 56.0, 0.05, -0.06, math.log(2.2)),
    ("pre retirement", 61.0, -0.10, -0.09, math.log(1.9)),
    ("retired comfortable", 66.0, 0.25, -0.12, math.log(1.7)),
    ("retired modest", 70.0, -0.45, -0.15, math.log(1.5)),
    ("single seniors", 74.0, -0.05, -0.10, math.log(1.4)),
]

# Zero-sum budget-share contrasts that differentiate the class profiles.
# They avoid the four quadratic-term functions, and the across-class mixing
# weights are drawn from the null space of the class-level regressor surface
# (constant, expenditure, age and size moments), so the profile heterogeneity
# is orthogonal to everything the demand system explains: pooled and
# random-effects fits of the expenditure terms stay unbiased by construction.
_PROFILE_PATTERNS = [
    # max deviation, zero-sum pattern over function codes
    (0.035, {"personal_transport": 1.0, "clothing": -1.0}),
    (0.025, {"health": 1.0, "food_away": -1.0}),
    (0.010, {"furniture": 1.0, "alcohol_tobacco": -1.0}),
    (0.010, {"transfers": 1.0, "personal_care": -1.0}),
    (0.007, {"education": 1.0, "security": -1.0}),
]

_COMMON_LOG_Y_DRIFT = {1982: 0.0, 1986: 0.05, 1992: 0.12}
_TREND_RAMP = {1982: 0.0, 1986: 0.5, 1992: 1.0}
_AGE_DRIFT = {1982: 0.0, 1986: 4.0, 1992: 6.0}

# demographic share gradients; planted on large-share functions only so the
# small shares never get pushed near zero (each pattern is already zero-sum)
_B3_RAW = {"health": 0.020, "food_home": 0.020, "leisure": -0.012,
           "clothing": -0.012, "food_away": -0.010, "vehicles": 0.006,
           "personal_transport": -0.012}
_B4_RAW = {"health": 0.002, "personal_transport": -0.002}
_B5_RAW = {"food_home": 0.030, "clothing": 0.008, "food_away": -0.014,
           "leisure": -0.012, "housing": -0.012}
_B6_RAW = {"food_home": 0.003, "housing": -0.003}

_YEAR_EFFECTS_RAW = {
    1986: {"communications": 0.003, "leisure": 0.003, "food_home": -0.004, "clothing": -0.002},
    1992: {"communications": 0.006, "health": 0.004, "food_home": -0.007, "alcohol_tobacco": -0.003},
}


def default_population_config(
    scale: float = 1.0,
    seed: int = 7,
    noise_scale: float = 0.03,
    sigma_mu: float = 0.001,
    effect_log_y_corr: float = 0.0,
    waves: tuple[tuple[int, int], ...] | None = None,
) -> PopulationConfig:
    """The calibrated 12-class default population.

    ``scale`` shrinks the wave sizes (for quick runs); ``sigma_mu`` sets the
    class-effect dispersion (for an average-sized share; effects scale with
    the square root of the share profile) and ``effect_log_y_corr`` rotates
    the class effects toward the class log-expenditure levels (nonzero
    values violate the random-effects orthogonality assumption on purpose,
    for power studies of the Hausman test).
    """
    if waves is None:
        waves = tuple((y, max(2, round(n * scale))) for y, n in DEFAULT_WAVES)
    base = np.array([DEFAULT_MEAN_SHARES[c] for c in FUNCTION_CODES])
    base = base / base.sum()

    def make_classes(profiles: np.ndarray) -> list[ClassProfile]:
        out = []
        for (label, age_mean, y_off, eta, lsm), shares in zip(_CLASS_SPECS, profiles):
            shift = {
                y: _COMMON_LOG_Y_DRIFT.get(y, 0.0) + eta * _TREND_RAMP.get(y, 0.0)
                for y, _ in waves
            }
            out.append(
                ClassProfile(
                    label=label,
                    shares=shares,
                    log_y_mean=10.0 + y_off,
                    log_y_sd=0.25,
                    log_y_shift=shift,
                    age_mean=age_mean,
                    age_sd=6.0,
                    log_size_mean=lsm,
                    log_size_sd=0.30,
                )
            )
        return out

    C = len(_CLASS_SPECS)
    class_probs = np.full(C, 1.0 / C)

    b2 = np.zeros(N_FUNCTIONS)
    for code, v in DEFAULT_B2.items():
        b2[FUNCTION_CODES.index(code)] = v

    def from_raw(raw_map: dict[str, float]) -> np.ndarray:
        v = np.zeros(N_FUNCTIONS)
        for code, x in raw_map.items():
            v[FUNCTION_CODES.index(code)] = x
        return _zero_sum(v, base)

    b3, b4, b5, b6 = map(from_raw, (_B3_RAW, _B4_RAW, _B5_RAW, _B6_RAW))

    year_effects = {waves[0][0]: np.zeros(N_FUNCTIONS)}
    for y, _ in waves[1:]:
        year_effects[y] = from_raw(_YEAR_EFFECTS_RAW.get(y, {}))

    # reference moments = implied population moments, so intercepts are means
    tmp = PopulationConfig(
        waves=waves,
        classes=make_classes(np.tile(base, (C, 1))),
        class_probs=class_probs,
        b1=np.zeros(N_FUNCTIONS),
        b2=np.zeros(N_FUNCTIONS),
        b3=np.zeros(N_FUNCTIONS),
        b4=np.zeros(N_FUNCTIONS),
        b5=np.zeros(N_FUNCTIONS),
        b6=np.zeros(N_FUNCTIONS),
        year_effects={y: np.zeros(N_FUNCTIONS) for y, _ in waves},
        class_effects=np.zeros((C, N_FUNCTIONS)),
        sigma_nu=np.zeros(N_FUNCTIONS),
        reference_moments=dict.fromkeys(_REF_KEYS, 0.0),
        age_drift=_AGE_DRIFT,
        rng_seed=seed,
    )
    mom = implied_moments(tmp)["population"]
    refs = {k: mom[k] for k in _REF_KEYS}

    # class profiles: base plus zero-sum contrast patterns, mixed across
    # classes with null-space weights orthogonal to the constant and to the
    # class-level time means of every regressor (expenditure moments are
    # taken expenditure-weighted because cohort cells aggregate that way)
    mom_ct = class_wave_moments(tmp)
    surface = np.column_stack(
        [
            np.ones(C),
            mom_ct["log_y_g"].mean(axis=1),
            mom_ct["log_y_sq_g"].mean(axis=1),
            mom_ct["log_age"].mean(axis=1),
            mom_ct["log_age_sq"].mean(axis=1),
            mom_ct["log_size"].mean(axis=1),
            mom_ct["log_size_sq"].mean(axis=1),
        ]
    )
    basis = linalg.null_space(surface.T)
    if basis.shape[1] < len(_PROFILE_PATTERNS):
        raise ValueError("too few classes to carry the profile contrast patterns")
    deviations = np.zeros((C, N_FUNCTIONS))
    for j, (dev_max, pattern) in enumerate(_PROFILE_PATTERNS):
        w = np.zeros(N_FUNCTIONS)
        for code, x in pattern.items():
            w[FUNCTION_CODES.index(code)] = x
        col = basis[:, j] / np.abs(basis[:, j]).max()
        deviations += dev_max * np.outer(col, w)
    classes = make_classes(base[None, :] + deviations)

    # b1 from elasticity targets at the reference point, zero-sum corrected;
    # the quadratic term's contribution at the reference point is netted out
    targets = np.array([DEFAULT_ELASTICITY_TARGETS[c] for c in FUNCTION_CODES])
    b1_raw = (targets - 1.0) * base - 2.0 * b2 * refs["log_y"]
    b1 = _zero_sum(b1_raw, base)

    # class effects: zero-sum rows, sd scaled with sqrt(share) so small
    # shares are not pushed near zero; the noise draw is residualized against
    # the class-level regressor surface so the realized effects (and not just
    # their expectation) satisfy random-effects orthogonality; optionally a
    # component correlated with class log y is added on purpose
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC1A55EFF]))
    z = rng.normal(0.0, 1.0, (C, N_FUNCTIONS))
    z -= surface @ np.linalg.lstsq(surface, z, rcond=None)[0]
    if effect_log_y_corr != 0.0:
        levels = np.array([p.log_y_mean for p in classes])
        sm = (levels - levels.mean()) / levels.std()
        pattern = np.where(np.arange(N_FUNCTIONS) % 2 == 0, 1.0, -1.0)
        pattern /= np.sqrt((pattern**2).mean())
        rho = float(np.clip(effect_log_y_corr, -1.0, 1.0))
        z = rho * np.outer(sm, pattern) + math.sqrt(1.0 - rho * rho) * z
    class_effects = sigma_mu * np.sqrt(N_FUNCTIONS * base)[None, :] * z
    class_effects -= class_effects.mean(axis=1, keepdims=True)

    sigma_nu = noise_scale * np.sqrt(base)

    return PopulationConfig(
        waves=waves,
        classes=classes,
        class_probs=class_probs,
        b1=b1,
        b2=b2,
        b3=b3,
        b4=b4,
        b5=b5,
        b6=b6,
        year_effects=year_effects,
        class_effects=class_effects,
        sigma_nu=sigma_nu,
        reference_moments=refs,
        age_drift=_AGE_DRIFT,
        rng_seed=seed,
    )
