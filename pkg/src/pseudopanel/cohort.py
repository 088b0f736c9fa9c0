"""Households, cohort features, weighted aggregation, and panel assembly.

A cohort is the set of households mapped to one SOM node. Within a
cohort-wave cell each household enters with weight g_h = y_h / sum(y), so
cell-level budget shares are expenditure-weighted means and the cell carries
a heteroskedasticity factor 1/sqrt(sum g^2) used to rescale the regression
variables (weighted-mean error variance shrinks with the effective cell
size; the factor restores homoskedasticity across cells).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .functions import FUNCTION_CODES, N_FUNCTIONS

SHARE_SUM_TOL = 0.02
DEFAULT_MIN_CELL_SIZE = 100

#: Raw cohort-level regression variables, in panel-file column order.
VARIABLE_NAMES = tuple([f"w_{c}" for c in FUNCTION_CODES]) + (
    "log_y",
    "log_y_sq",
    "log_age",
    "log_age_sq",
    "log_size",
    "log_size_sq",
)


@dataclass
class HouseholdRecord:
    """One household in one survey wave."""

    household_id: str
    wave_year: int
    budget_shares: np.ndarray
    total_expenditure: float
    age: float
    size_oxford: float

    def __post_init__(self):
        self.budget_shares = np.asarray(self.budget_shares, dtype=float)
        if self.budget_shares.shape != (N_FUNCTIONS,):
            raise ValueError(
                f"household {self.household_id}: expected {N_FUNCTIONS} budget "
                f"shares, got shape {self.budget_shares.shape}"
            )
        if np.any(self.budget_shares < 0) or np.any(self.budget_shares > 1):
            raise ValueError(
                f"household {self.household_id}: budget shares must lie in [0, 1]"
            )
        total = float(self.budget_shares.sum())
        if abs(total - 1.0) > SHARE_SUM_TOL:
            raise ValueError(
                f"household {self.household_id}: budget shares sum to {total:.4f}, "
                f"outside 1 +/- {SHARE_SUM_TOL}"
            )
        if not self.total_expenditure > 0:
            raise ValueError(
                f"household {self.household_id}: total expenditure must be positive"
            )
        if not self.age > 0:
            raise ValueError(f"household {self.household_id}: age must be positive")
        if not self.size_oxford > 0:
            raise ValueError(
                f"household {self.household_id}: household size must be positive"
            )


# ---------------------------------------------------------------------------
# age classes


@dataclass(frozen=True)
class AgeClassConfig:
    """Left-closed right-open age brackets with per-wave boundary offsets.

    The survey waves are years apart, so the bracket boundaries shift by the
    wave offset to follow the same birth cohorts across waves.
    """

    boundaries: tuple[float, ...] = (30.0, 40.0, 50.0, 65.0)
    wave_offsets: dict[int, float] = field(
        default_factory=lambda: {1982: 0.0, 1986: 4.0, 1992: 6.0}
    )

    def __post_init__(self):
        b = tuple(float(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        if len(b) == 0:
            raise ValueError("at least one age boundary is required")
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise ValueError("age boundaries must be strictly increasing")

    @property
    def n_classes(self) -> int:
        return len(self.boundaries) + 1

    def offset_for(self, wave_year: int) -> float:
        return float(self.wave_offsets.get(wave_year, 0.0))


def age_class_index(age: float, wave_year: int, config: AgeClassConfig) -> int:
    """0-based age class of ``age`` in ``wave_year``'s shifted brackets."""
    shifted = np.asarray(config.boundaries) + config.offset_for(wave_year)
    return int(np.searchsorted(shifted, age, side="right"))


def age_class_dummies(age: float, wave_year: int, config: AgeClassConfig) -> np.ndarray:
    out = np.zeros(config.n_classes)
    out[age_class_index(age, wave_year, config)] = 1.0
    return out


# ---------------------------------------------------------------------------
# SOM features


@dataclass(frozen=True)
class FeatureConfig:
    """Which household features feed the SOM."""

    include_age_dummies: bool = True
    include_log_size: bool = True
    include_log_expenditure: bool = False


def build_features(
    records: list[HouseholdRecord],
    age_classes: AgeClassConfig,
    config: FeatureConfig = FeatureConfig(),
) -> tuple[np.ndarray, list[str]]:
    """Raw (unstandardized) SOM feature matrix and its column names.

    Columns: the 18 budget shares, then age-class dummies, log household
    size, and log total expenditure as enabled in ``config``.
    """
    if not records:
        raise ValueError("no records to build features from")
    n = len(records)
    blocks = [np.vstack([r.budget_shares for r in records])]
    names = [f"w_{c}" for c in FUNCTION_CODES]
    if config.include_age_dummies:
        D = np.zeros((n, age_classes.n_classes))
        for i, r in enumerate(records):
            D[i, age_class_index(r.age, r.wave_year, age_classes)] = 1.0
        blocks.append(D)
        names += [f"age_class_{k}" for k in range(age_classes.n_classes)]
    if config.include_log_size:
        blocks.append(np.array([[math.log(r.size_oxford)] for r in records]))
        names.append("log_size")
    if config.include_log_expenditure:
        blocks.append(np.array([[math.log(r.total_expenditure)] for r in records]))
        names.append("log_y")
    return np.hstack(blocks), names


def assign_waves(
    som_map,
    waves: list[list[HouseholdRecord]],
    age_classes: AgeClassConfig,
    features: FeatureConfig = FeatureConfig(),
) -> dict[str, int]:
    """Map every household in every wave to its cohort (1-based node id).

    Features are rebuilt with the given recipe and standardized with the
    map's stored scaler, so later waves are projected into the training
    wave's feature space.
    """
    from . import som as _som

    if not waves or any(len(w) == 0 for w in waves):
        raise ValueError("every wave must contain at least one record")
    membership: dict[str, int] = {}
    for wave in waves:
        X, names = build_features(wave, age_classes, features)
        if tuple(names) != tuple(som_map.scaler.names):
            raise ValueError(
                "feature recipe does not match the map's scaler: "
                f"{names} vs {list(som_map.scaler.names)}"
            )
        Z = som_map.scaler.apply(X)
        nodes = _som.assign(som_map, Z)
        for r, node in zip(wave, nodes):
            if r.household_id in membership:
                raise ValueError(f"duplicate household id {r.household_id!r}")
            membership[r.household_id] = int(node)
    return membership


# ---------------------------------------------------------------------------
# aggregation


@dataclass
class CohortObservation:
    """One cohort-wave cell: expenditure-weighted means and the cell's
    heteroskedasticity factor."""

    cohort_id: int
    wave_year: int
    n_members: int
    shares: np.ndarray
    log_y: float
    log_y_sq: float
    log_age: float
    log_age_sq: float
    log_size: float
    log_size_sq: float
    hetero_factor: float
    g_weights: np.ndarray | None = None

    def __post_init__(self):
        self.shares = np.asarray(self.shares, dtype=float)
        if self.shares.shape != (N_FUNCTIONS,):
            raise ValueError(f"expected {N_FUNCTIONS} share means")
        if self.n_members < 1:
            raise ValueError("a cell must contain at least one household")
        ub = math.sqrt(self.n_members)
        if not (1.0 - 1e-9 <= self.hetero_factor <= ub + 1e-9):
            raise ValueError(
                f"hetero_factor {self.hetero_factor} outside [1, sqrt(n)] for "
                f"n={self.n_members}"
            )
        if self.g_weights is not None:
            self.g_weights = np.asarray(self.g_weights, dtype=float)
            if self.g_weights.shape != (self.n_members,):
                raise ValueError("g_weights length must equal n_members")
            if np.any(self.g_weights < 0):
                raise ValueError("g_weights must be non-negative")
            if abs(float(self.g_weights.sum()) - 1.0) > 1e-10:
                raise ValueError("g_weights must sum to 1")

    def variables(self) -> dict[str, float]:
        """Raw cell-level regression variables, untransformed."""
        out = {f"w_{c}": float(self.shares[i]) for i, c in enumerate(FUNCTION_CODES)}
        out.update(
            log_y=self.log_y,
            log_y_sq=self.log_y_sq,
            log_age=self.log_age,
            log_age_sq=self.log_age_sq,
            log_size=self.log_size,
            log_size_sq=self.log_size_sq,
        )
        return out


def aggregate(
    members: list[HouseholdRecord], cohort_id: int = 0
) -> CohortObservation:
    """Collapse one cohort-wave cell to its weighted means.

    Weights g_h = y_h / sum(y) over the cell. Every regression variable is
    the g-weighted mean of the household-level value; the factor
    1/sqrt(sum g^2) lies in [1, sqrt(n)], hitting sqrt(n) exactly when all
    expenditures are equal.
    """
    if not members:
        raise ValueError("cannot aggregate an empty cell")
    years = {r.wave_year for r in members}
    if len(years) != 1:
        raise ValueError(f"cell mixes wave years {sorted(years)}")
    y = np.array([r.total_expenditure for r in members], dtype=float)
    if np.any(y <= 0):
        raise ValueError("total expenditures must be positive")
    g = y / y.sum()

    W = np.vstack([r.budget_shares for r in members])
    log_y = np.log(y)
    log_age = np.log(np.array([r.age for r in members], dtype=float))
    log_size = np.log(np.array([r.size_oxford for r in members], dtype=float))

    return CohortObservation(
        cohort_id=cohort_id,
        wave_year=members[0].wave_year,
        n_members=len(members),
        shares=g @ W,
        log_y=float(g @ log_y),
        log_y_sq=float(g @ log_y**2),
        log_age=float(g @ log_age),
        log_age_sq=float(g @ log_age**2),
        log_size=float(g @ log_size),
        log_size_sq=float(g @ log_size**2),
        hetero_factor=float(1.0 / math.sqrt(float(g @ g))),
        g_weights=g,
    )


def transform(obs: CohortObservation) -> dict[str, float]:
    """Heteroskedasticity-corrected variables for estimation.

    Every variable, including the constant (and, downstream, the year
    dummies built from 'const'), is multiplied by the cell's factor.
    """
    f = obs.hetero_factor
    out = {"const": f}
    for name, value in obs.variables().items():
        out[name] = f * value
    return out


# ---------------------------------------------------------------------------
# panel assembly


@dataclass
class SizeReport:
    """Cell counts for every cohort (including later-dropped ones)."""

    cohort_ids: list[int]
    years: list[int]
    counts: np.ndarray  # (n_cohorts, n_years) int

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.shape != (len(self.cohort_ids), len(self.years)):
            raise ValueError("counts shape must be (n_cohorts, n_years)")

    def min_cell(self, cohort_id: int) -> int:
        i = self.cohort_ids.index(cohort_id)
        return int(self.counts[i].min())

    def total(self, cohort_id: int) -> int:
        i = self.cohort_ids.index(cohort_id)
        return int(self.counts[i].sum())

    def flagged(self, min_cell_size: int) -> list[int]:
        """Cohorts whose smallest cell falls below ``min_cell_size``."""
        return [
            c
            for i, c in enumerate(self.cohort_ids)
            if int(self.counts[i].min()) < min_cell_size
        ]

    def n_below_total(self, threshold: int) -> int:
        """How many cohorts have fewer than ``threshold`` households overall."""
        return int(sum(1 for c in self.cohort_ids if self.total(c) < threshold))

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cohort"] + [f"n_{y}" for y in self.years] + ["n_total", "n_min"])
        for i, c in enumerate(self.cohort_ids):
            row = self.counts[i]
            w.writerow([c] + [int(x) for x in row] + [int(row.sum()), int(row.min())])
        return buf.getvalue()

    def to_text(self, min_cell_size: int = DEFAULT_MIN_CELL_SIZE) -> str:
        lines = ["cohort sizes by wave"]
        header = f"{'cohort':>6} " + " ".join(f"{y:>7}" for y in self.years)
        lines.append(header + f" {'total':>7} {'min':>5} flag")
        for i, c in enumerate(self.cohort_ids):
            row = self.counts[i]
            flag = "SMALL" if int(row.min()) < min_cell_size else ""
            lines.append(
                f"{c:>6} "
                + " ".join(f"{int(x):>7}" for x in row)
                + f" {int(row.sum()):>7} {int(row.min()):>5} {flag}"
            )
        flagged = self.flagged(min_cell_size)
        lines.append(
            f"{len(flagged)} of {len(self.cohort_ids)} cohorts have a cell "
            f"below {min_cell_size} households"
        )
        return "\n".join(lines) + "\n"


@dataclass
class PanelDataset:
    """A balanced cohort-by-wave panel of aggregated cells."""

    cohorts: list[int]
    periods: list[int]
    cells: dict[tuple[int, int], CohortObservation]
    dropped: list[tuple[int, str]] = field(default_factory=list)
    size_report: SizeReport | None = None

    def __post_init__(self):
        if len(self.periods) < 2:
            raise ValueError("a panel needs at least two periods")
        if not self.cohorts:
            raise ValueError("a panel needs at least one cohort")
        for c in self.cohorts:
            for t in self.periods:
                if (c, t) not in self.cells:
                    raise ValueError(f"panel is not balanced: missing cell ({c}, {t})")

    @property
    def n_units(self) -> int:
        return len(self.cohorts)

    @property
    def n_periods(self) -> int:
        return len(self.periods)

    def cell(self, cohort_id: int, wave_year: int) -> CohortObservation:
        return self.cells[(cohort_id, wave_year)]

    def observations(self) -> list[CohortObservation]:
        """Cells in cohort-major, then period, order."""
        return [self.cells[(c, t)] for c in self.cohorts for t in self.periods]


def cohort_cell_counts(
    membership: dict[str, int],
    waves: list[list[HouseholdRecord]],
    cohort_universe: list[int] | None = None,
) -> SizeReport:
    """Count households per cohort-wave cell from the membership table."""
    years = sorted({r.wave_year for wave in waves for r in wave})
    if cohort_universe is None:
        cohort_universe = sorted(set(membership.values()))
    index = {c: i for i, c in enumerate(cohort_universe)}
    year_index = {y: j for j, y in enumerate(years)}
    counts = np.zeros((len(cohort_universe), len(years)), dtype=int)
    for wave in waves:
        for r in wave:
            if r.household_id not in membership:
                raise ValueError(
                    f"household {r.household_id!r} missing from the membership table"
                )
            c = membership[r.household_id]
            if c in index:
                counts[index[c], year_index[r.wave_year]] += 1
    return SizeReport(cohort_ids=list(cohort_universe), years=years, counts=counts)


def build_panel(
    membership: dict[str, int],
    waves: list[list[HouseholdRecord]],
    min_cell_size: int = DEFAULT_MIN_CELL_SIZE,
    cohort_universe: list[int] | None = None,
) -> PanelDataset:
    """Aggregate cells and keep only cohorts observed with at least
    ``min_cell_size`` households in every wave.

    Dropped cohorts are recorded with a reason ("empty cell in <year>" or
    "cell below min_cell_size ..."); the full size report (dropped cohorts
    included) rides along on the returned panel.
    """
    if len(waves) < 2:
        raise ValueError("a pseudo panel needs at least two waves")
    report = cohort_cell_counts(membership, waves, cohort_universe)
    years = report.years

    groups: dict[tuple[int, int], list[HouseholdRecord]] = {}
    for wave in waves:
        for r in wave:
            groups.setdefault((membership[r.household_id], r.wave_year), []).append(r)

    retained: list[int] = []
    dropped: list[tuple[int, str]] = []
    for i, c in enumerate(report.cohort_ids):
        row = report.counts[i]
        empty = [years[j] for j in range(len(years)) if row[j] == 0]
        if empty:
            dropped.append((c, "empty cell in " + ", ".join(str(y) for y in empty)))
            continue
        small = [
            f"{years[j]} (n={int(row[j])})"
            for j in range(len(years))
            if row[j] < min_cell_size
        ]
        if small:
            dropped.append(
                (c, f"cell below min_cell_size {min_cell_size}: " + ", ".join(small))
            )
            continue
        retained.append(c)

    if not retained:
        raise ValueError(
            f"no cohort satisfies min_cell_size={min_cell_size} in every wave"
        )

    cells = {
        (c, t): aggregate(groups[(c, t)], cohort_id=c) for c in retained for t in years
    }
    return PanelDataset(
        cohorts=retained,
        periods=years,
        cells=cells,
        dropped=dropped,
        size_report=report,
    )


# ---------------------------------------------------------------------------
# CSV serialization (deterministic: floats via repr round-trip)


def _fmt(v: float) -> str:
    return repr(float(v))


WAVE_CSV_COLUMNS = ["id", "year", "y_total", "age", "size_oxford"] + [
    f"w_{c}" for c in FUNCTION_CODES
]


def wave_csv_text(records: list[HouseholdRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(WAVE_CSV_COLUMNS)
    for r in records:
        w.writerow(
            [r.household_id, r.wave_year, _fmt(r.total_expenditure), _fmt(r.age), _fmt(r.size_oxford)]
            + [_fmt(s) for s in r.budget_shares]
        )
    return buf.getvalue()


def parse_wave_csv(text: str) -> list[HouseholdRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != WAVE_CSV_COLUMNS:
        raise ValueError("unexpected wave CSV header")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        out.append(
            HouseholdRecord(
                household_id=row[0],
                wave_year=int(row[1]),
                total_expenditure=float(row[2]),
                age=float(row[3]),
                size_oxford=float(row[4]),
                budget_shares=np.array([float(x) for x in row[5:]]),
            )
        )
    return out


PANEL_CSV_COLUMNS = (
    ["cohort", "year", "n_members", "sum_g", "hetero_factor"]
    + list(VARIABLE_NAMES)
    + ["t_const"]
    + [f"t_{v}" for v in VARIABLE_NAMES]
)


def panel_csv_text(panel: PanelDataset) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PANEL_CSV_COLUMNS)
    for obs in panel.observations():
        raw = obs.variables()
        t = transform(obs)
        sum_g = 1.0 if obs.g_weights is None else float(obs.g_weights.sum())
        w.writerow(
            [obs.cohort_id, obs.wave_year, obs.n_members, _fmt(sum_g), _fmt(obs.hetero_factor)]
            + [_fmt(raw[v]) for v in VARIABLE_NAMES]
            + [_fmt(t["const"])]
            + [_fmt(t[v]) for v in VARIABLE_NAMES]
        )
    return buf.getvalue()


def parse_panel_csv(text: str) -> PanelDataset:
    """Rebuild a panel from its CSV (raw variables and factor only; household
    g-weights are not round-tripped)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != PANEL_CSV_COLUMNS:
        raise ValueError("unexpected panel CSV header")
    col = {name: i for i, name in enumerate(PANEL_CSV_COLUMNS)}
    cells: dict[tuple[int, int], CohortObservation] = {}
    for row in rows[1:]:
        if not row:
            continue
        c, t = int(row[col["cohort"]]), int(row[col["year"]])
        shares = np.array(
            [float(row[col[f"w_{code}"]]) for code in FUNCTION_CODES]
        )
        cells[(c, t)] = CohortObservation(
            cohort_id=c,
            wave_year=t,
            n_members=int(row[col["n_members"]]),
            shares=shares,
            log_y=float(row[col["log_y"]]),
            log_y_sq=float(row[col["log_y_sq"]]),
            log_age=float(row[col["log_age"]]),
            log_age_sq=float(row[col["log_age_sq"]]),
            log_size=float(row[col["log_size"]]),
            log_size_sq=float(row[col["log_size_sq"]]),
            hetero_factor=float(row[col["hetero_factor"]]),
            g_weights=None,
        )
    cohorts = sorted({c for c, _ in cells})
    periods = sorted({t for _, t in cells})
    return PanelDataset(cohorts=cohorts, periods=periods, cells=cells)
