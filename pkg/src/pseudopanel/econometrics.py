"""Budget-share demand systems on the cohort panel.

Each consumption function's share equation is linear in log expenditure
(plus its square in the quadratic form), log age, log household size, their
squares, and wave dummies. All variables, the constant included, arrive
pre-multiplied by the cell's heteroskedasticity factor. Estimators: pooled
OLS, the within (fixed-effects) estimator, and Swamy-Arora random effects,
with the poolability F test, the Hausman test, and total-expenditure
elasticities by the delta method.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg, stats

from .cohort import PanelDataset, transform
from .functions import FUNCTION_CODES, FUNCTION_LABELS

FORMS = ("aids", "quaids")
EFFECTS = ("pooled", "fixed", "random")

_BASE_REGRESSORS = ("log_y", "log_age", "log_age_sq", "log_size", "log_size_sq")
_QUAIDS_REGRESSORS = ("log_y", "log_y_sq", "log_age", "log_age_sq", "log_size", "log_size_sq")


@dataclass(frozen=True)
class ModelSpec:
    """Which share equation to estimate, and how."""

    form: str
    effects: str
    function: str
    include_year_dummies: bool = True

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"form must be one of {FORMS}, got {self.form!r}")
        if self.effects not in EFFECTS:
            raise ValueError(f"effects must be one of {EFFECTS}, got {self.effects!r}")
        if self.function not in FUNCTION_CODES:
            raise ValueError(f"unknown function code {self.function!r}")

    @property
    def regressors(self) -> tuple[str, ...]:
        return _QUAIDS_REGRESSORS if self.form == "quaids" else _BASE_REGRESSORS


@dataclass
class DesignMatrix:
    X: np.ndarray
    y: np.ndarray
    units: np.ndarray
    periods: np.ndarray
    names: list[str]

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.units = np.asarray(self.units)
        self.periods = np.asarray(self.periods)
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.units.shape != (n,) or self.periods.shape != (n,):
            raise ValueError("X, y, units, periods must agree in length")
        if self.X.shape[1] != len(self.names):
            raise ValueError("names must match the number of design columns")

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    @property
    def k(self) -> int:
        return self.X.shape[1]


def build_design(panel: PanelDataset, spec: ModelSpec) -> DesignMatrix:
    """Stack the transformed cells into a regression design.

    Rows are cohort-major then period. Year dummies (all periods but the
    first) inherit the cell factor through the scaled constant. Raises on a
    rank-deficient design, naming the collinear columns.
    """
    obs = panel.observations()
    names = ["const", *spec.regressors]
    if spec.include_year_dummies:
        names += [f"year_{t}" for t in panel.periods[1:]]

    rows = np.empty((len(obs), len(names)))
    y = np.empty(len(obs))
    units = np.empty(len(obs), dtype=int)
    periods = np.empty(len(obs), dtype=int)
    for i, cell in enumerate(obs):
        t = transform(cell)
        y[i] = t[f"w_{spec.function}"]
        vals = [t["const"], *(t[r] for r in spec.regressors)]
        if spec.include_year_dummies:
            vals += [
                t["const"] if cell.wave_year == per else 0.0
                for per in panel.periods[1:]
            ]
        rows[i] = vals
        units[i] = cell.cohort_id
        periods[i] = cell.wave_year

    rank = np.linalg.matrix_rank(rows)
    if rank < len(names):
        _, R, piv = linalg.qr(rows, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        tol = diag.max() * max(rows.shape) * np.finfo(float).eps
        bad = [names[piv[j]] for j in range(len(names)) if j >= rank or diag[j] <= tol]
        raise ValueError(
            "design matrix is rank deficient; collinear column(s): "
            + ", ".join(sorted(set(bad)))
        )
    return DesignMatrix(X=rows, y=y, units=units, periods=periods, names=names)


@dataclass
class EstimationResult:
    """Coefficients, covariance, and fit diagnostics for one estimator."""

    effects: str
    names: list[str]
    coef: np.ndarray
    cov: np.ndarray
    rss: float
    resid_var: float
    dof: int
    n_obs: int
    n_units: int
    n_periods: int
    absorbed: list[str] = field(default_factory=list)
    sigma2_nu: float | None = None
    sigma2_mu: float | None = None
    theta: float | None = None

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float)
        self.cov = np.asarray(self.cov, dtype=float)
        k = len(self.names)
        if self.coef.shape != (k,) or self.cov.shape != (k, k):
            raise ValueError("coef/cov shapes must match names")

    def _idx(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"no coefficient named {name!r}") from None

    def coefficient(self, name: str) -> float:
        return float(self.coef[self._idx(name)])

    def std_error(self, name: str) -> float:
        return float(np.sqrt(self.cov[self._idx(name), self._idx(name)]))

    def t_stat(self, name: str) -> float:
        return self.coefficient(name) / self.std_error(name)

    def cov_block(self, names: list[str]) -> np.ndarray:
        idx = [self._idx(n) for n in names]
        return self.cov[np.ix_(idx, idx)]


def _solve_ols(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Normal-equation OLS: coefficients, (X'X)^-1, and the RSS."""
    XtX = X.T @ X
    try:
        XtX_inv = np.linalg.inv(XtX)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular design matrix") from exc
    b = XtX_inv @ (X.T @ y)
    resid = y - X @ b
    return b, XtX_inv, float(resid @ resid)


def _unit_structure(design: DesignMatrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    labels, inv = np.unique(design.units, return_inverse=True)
    counts = np.bincount(inv)
    return labels, inv, counts


def pooled_ols(design: DesignMatrix) -> EstimationResult:
    """OLS on the stacked panel, classical covariance s^2 (X'X)^-1."""
    n, k = design.X.shape
    if n <= k:
        raise ValueError(f"need more observations than regressors (n={n}, k={k})")
    b, XtX_inv, rss = _solve_ols(design.X, design.y)
    dof = n - k
    s2 = rss / dof
    cov = s2 * (XtX_inv + XtX_inv.T) / 2.0
    labels, _, _ = _unit_structure(design)
    return EstimationResult(
        effects="pooled",
        names=list(design.names),
        coef=b,
        cov=cov,
        rss=rss,
        resid_var=s2,
        dof=dof,
        n_obs=n,
        n_units=labels.size,
        n_periods=np.unique(design.periods).size,
    )


_WITHIN_TOL = 1e-10


def _within_demean(design: DesignMatrix):
    labels, inv, counts = _unit_structure(design)
    if np.any(counts < 2):
        few = labels[counts < 2]
        raise ValueError(f"every unit needs at least two observations (unit {few[0]!r})")
    Xsum = np.zeros((labels.size, design.k))
    np.add.at(Xsum, inv, design.X)
    Xmean = Xsum / counts[:, None]
    ymean = np.bincount(inv, weights=design.y) / counts
    return labels, inv, counts, Xmean, ymean


def fixed_effects(design: DesignMatrix) -> EstimationResult:
    """Within estimator: demean by unit, OLS on the residual variation.

    A constant column with no within variation is absorbed by the unit
    effects (recorded in ``absorbed``); any other zero-within-variation
    regressor raises, naming the column. Degrees of freedom account for the
    absorbed unit means: dof = n - N - k_kept.
    """
    labels, inv, counts, Xmean, ymean = _within_demean(design)
    Xd = design.X - Xmean[inv]
    yd = design.y - ymean[inv]

    col_scale = 1.0 + np.abs(design.X).max(axis=0)
    invariant = np.abs(Xd).max(axis=0) <= _WITHIN_TOL * col_scale
    bad = [n for j, n in enumerate(design.names) if invariant[j] and n != "const"]
    if bad:
        raise ValueError(
            "no within-unit variation in regressor(s): "
            + ", ".join(bad)
            + " (time-invariant columns are collinear with the unit effects)"
        )
    keep = [j for j in range(design.k) if not invariant[j]]
    absorbed = [design.names[j] for j in range(design.k) if invariant[j]]

    n = design.n_obs
    N = labels.size
    dof = n - N - len(keep)
    if dof <= 0:
        raise ValueError(f"non-positive within degrees of freedom (dof={dof})")

    b, XtX_inv, rss = _solve_ols(Xd[:, keep], yd)
    s2 = rss / dof
    cov = s2 * (XtX_inv + XtX_inv.T) / 2.0
    return EstimationResult(
        effects="fixed",
        names=[design.names[j] for j in keep],
        coef=b,
        cov=cov,
        rss=rss,
        resid_var=s2,
        dof=dof,
        n_obs=n,
        n_units=N,
        n_periods=np.unique(design.periods).size,
        absorbed=absorbed,
    )


def random_effects(design: DesignMatrix) -> EstimationResult:
    """Swamy-Arora random effects on a balanced panel.

    sigma^2_nu comes from the within residual variance; the between
    regression on unit means estimates sigma^2_mu + sigma^2_nu / T, and
    sigma^2_mu is floored at zero (with a warning) when the difference goes
    negative. GLS is performed by quasi-demeaning with
    theta = 1 - sqrt(sigma^2_nu / (sigma^2_nu + T sigma^2_mu)); theta = 0
    reduces to pooled OLS, theta -> 1 approaches the within estimator.
    """
    labels, inv, counts, Xmean, ymean = _within_demean(design)
    if np.unique(counts).size != 1:
        raise ValueError("random effects requires a balanced panel")
    T = int(counts[0])
    N = labels.size

    fe = fixed_effects(design)
    sigma2_nu = fe.resid_var

    rank_b = np.linalg.matrix_rank(Xmean)
    df_between = N - rank_b
    if df_between <= 0:
        raise ValueError(
            f"too few units for the between regression (N={N}, rank={rank_b})"
        )
    bb, _, _, _ = np.linalg.lstsq(Xmean, ymean, rcond=None)
    resid_b = ymean - Xmean @ bb
    sigma2_between = float(resid_b @ resid_b) / df_between

    sigma2_mu = sigma2_between - sigma2_nu / T
    if sigma2_mu < 0:
        warnings.warn(
            "estimated between variance below sigma2_nu/T; flooring sigma2_mu at 0 "
            "(random effects collapses to pooled OLS)",
            RuntimeWarning,
            stacklevel=2,
        )
        sigma2_mu = 0.0
    theta = 1.0 - np.sqrt(sigma2_nu / (sigma2_nu + T * sigma2_mu))

    Xq = design.X - theta * Xmean[inv]
    yq = design.y - theta * ymean[inv]
    n, k = design.X.shape
    dof = n - k
    if dof <= 0:
        raise ValueError(f"need more observations than regressors (n={n}, k={k})")
    b, XtX_inv, rss = _solve_ols(Xq, yq)
    s2 = rss / dof
    cov = s2 * (XtX_inv + XtX_inv.T) / 2.0
    return EstimationResult(
        effects="random",
        names=list(design.names),
        coef=b,
        cov=cov,
        rss=rss,
        resid_var=s2,
        dof=dof,
        n_obs=n,
        n_units=N,
        n_periods=np.unique(design.periods).size,
        sigma2_nu=sigma2_nu,
        sigma2_mu=float(sigma2_mu),
        theta=float(theta),
    )


class FTestResult(NamedTuple):
    statistic: float
    df1: int
    df2: int

    @property
    def p_value(self) -> float:
        return float(stats.f.sf(self.statistic, self.df1, self.df2))


def f_test_effects(pooled: EstimationResult, fixed: EstimationResult) -> FTestResult:
    """Poolability F test: joint significance of the unit effects.

    F = ((RSS_pooled - RSS_within) / (N - 1)) / (RSS_within / dof_within).
    """
    if pooled.effects != "pooled" or fixed.effects != "fixed":
        raise ValueError("pass the pooled result first and the fixed-effects result second")
    if pooled.n_obs != fixed.n_obs or pooled.n_units != fixed.n_units:
        raise ValueError("results come from different samples")
    df1 = fixed.n_units - 1
    df2 = fixed.dof
    if df1 < 1:
        raise ValueError("need at least two units")
    if fixed.rss <= 0.0:
        raise ValueError("within residual sum of squares is zero; F test undefined")
    f = ((pooled.rss - fixed.rss) / df1) / (fixed.rss / df2)
    return FTestResult(statistic=max(float(f), 0.0), df1=df1, df2=df2)


class HausmanResult(NamedTuple):
    statistic: float
    df: int

    @property
    def p_value(self) -> float:
        return float(stats.chi2.sf(self.statistic, self.df))


def hausman_slopes(fe: EstimationResult, re: EstimationResult) -> list[str]:
    """Slope coefficients common to both estimators (no const, no year dummies)."""
    re_names = set(re.names)
    return [
        n
        for n in fe.names
        if n in re_names and n != "const" and not n.startswith("year_")
    ]


def hausman(fe: EstimationResult, re: EstimationResult) -> HausmanResult:
    """Hausman test of RE consistency on the common slope coefficients.

    H = d' (V_FE - V_RE)^-1 d with d the coefficient difference. When the
    covariance difference is not positive definite the Moore-Penrose inverse
    is used with rank degrees of freedom (a warning is emitted).
    """
    slopes = hausman_slopes(fe, re)
    if not slopes:
        raise ValueError("no common slope coefficients to test")
    d = np.array([fe.coefficient(s) - re.coefficient(s) for s in slopes])
    M = fe.cov_block(slopes) - re.cov_block(slopes)
    M = (M + M.T) / 2.0
    try:
        c = linalg.cho_factor(M)
        h = float(d @ linalg.cho_solve(c, d))
        return HausmanResult(statistic=max(h, 0.0), df=len(slopes))
    except np.linalg.LinAlgError:
        pass
    warnings.warn(
        "V_FE - V_RE is not positive definite; using the pseudo-inverse with "
        "rank degrees of freedom",
        RuntimeWarning,
        stacklevel=2,
    )
    h = float(d @ np.linalg.pinv(M, hermitian=True) @ d)
    df = int(np.linalg.matrix_rank(M, hermitian=True))
    return HausmanResult(statistic=h, df=max(df, 1))


# ---------------------------------------------------------------------------
# specification selection


@dataclass
class SelectionResult:
    """All fits and tests behind one function's chosen specification."""

    function: str
    chosen: ModelSpec
    chosen_fit: EstimationResult
    fits: dict[tuple[str, str], EstimationResult]
    hausman_tests: dict[str, HausmanResult]
    f_tests: dict[str, FTestResult]
    effects_by_form: dict[str, str]
    b2_t_stat: float
    alpha: float


def select_specification(
    panel: PanelDataset,
    function: str,
    alpha: float = 0.05,
    include_year_dummies: bool = True,
) -> SelectionResult:
    """Two-stage choice: Hausman picks fixed vs random effects per form,
    then the significance of the squared-log-expenditure term (in the
    chosen-effects quadratic fit) picks quadratic vs linear form."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    fits: dict[tuple[str, str], EstimationResult] = {}
    hausman_tests: dict[str, HausmanResult] = {}
    f_tests: dict[str, FTestResult] = {}
    effects_by_form: dict[str, str] = {}
    for form in FORMS:
        spec = ModelSpec(form, "pooled", function, include_year_dummies)
        design = build_design(panel, spec)
        fits[(form, "pooled")] = pooled_ols(design)
        fits[(form, "fixed")] = fixed_effects(design)
        fits[(form, "random")] = random_effects(design)
        f_tests[form] = f_test_effects(fits[(form, "pooled")], fits[(form, "fixed")])
        hausman_tests[form] = hausman(fits[(form, "fixed")], fits[(form, "random")])
        effects_by_form[form] = (
            "fixed" if hausman_tests[form].p_value < alpha else "random"
        )

    quad_fit = fits[("quaids", effects_by_form["quaids"])]
    b2_t = quad_fit.t_stat("log_y_sq")
    crit = float(stats.norm.ppf(1.0 - alpha / 2.0))
    form = "quaids" if abs(b2_t) > crit else "aids"

    chosen = ModelSpec(form, effects_by_form[form], function, include_year_dummies)
    return SelectionResult(
        function=function,
        chosen=chosen,
        chosen_fit=fits[(form, effects_by_form[form])],
        fits=fits,
        hausman_tests=hausman_tests,
        f_tests=f_tests,
        effects_by_form=effects_by_form,
        b2_t_stat=float(b2_t),
        alpha=alpha,
    )


# ---------------------------------------------------------------------------
# elasticities


@dataclass
class ElasticityEstimate:
    """Total-expenditure elasticity at given evaluation means."""

    elasticity: float
    std_error: float
    t_stat: float
    w_mean: float
    log_y_mean: float
    form: str


def elasticity(
    result: EstimationResult, w_mean: float, log_y_mean: float
) -> ElasticityEstimate:
    """e = 1 + (b1 + 2 b2 log_y_mean) / w_mean, delta-method standard error.

    b2 is the squared-log-expenditure coefficient when present (quadratic
    form) and 0 otherwise; the gradient is (1/w_mean, 2 log_y_mean/w_mean).
    """
    if not w_mean > 0:
        raise ValueError("mean budget share must be positive")
    quaids = "log_y_sq" in result.names
    b1 = result.coefficient("log_y")
    if quaids:
        b2 = result.coefficient("log_y_sq")
        grad = np.array([1.0 / w_mean, 2.0 * log_y_mean / w_mean])
        V = result.cov_block(["log_y", "log_y_sq"])
    else:
        b2 = 0.0
        grad = np.array([1.0 / w_mean])
        V = result.cov_block(["log_y"])
    e = 1.0 + (b1 + 2.0 * b2 * log_y_mean) / w_mean
    var = float(grad @ V @ grad)
    if var <= 0:
        raise ValueError("non-positive delta-method variance")
    se = float(np.sqrt(var))
    return ElasticityEstimate(
        elasticity=float(e),
        std_error=se,
        t_stat=float(e / se),
        w_mean=float(w_mean),
        log_y_mean=float(log_y_mean),
        form="quaids" if quaids else "aids",
    )


def panel_means(panel: PanelDataset, function: str) -> tuple[float, float]:
    """Unweighted means over cohort-period cells of the RAW (untransformed)
    budget share and log expenditure: the elasticity evaluation point."""
    if function not in FUNCTION_CODES:
        raise ValueError(f"unknown function code {function!r}")
    idx = FUNCTION_CODES.index(function)
    obs = panel.observations()
    w = float(np.mean([o.shares[idx] for o in obs]))
    ly = float(np.mean([o.log_y for o in obs]))
    return w, ly


@dataclass
class FunctionEstimate:
    function: str
    selection: SelectionResult
    elasticity: ElasticityEstimate


def estimate_all(
    panel: PanelDataset,
    alpha: float = 0.05,
    include_year_dummies: bool = True,
    functions: tuple[str, ...] = FUNCTION_CODES,
) -> list[FunctionEstimate]:
    """Select and estimate every function's share equation, with its
    elasticity at the panel means."""
    out = []
    for fn in functions:
        sel = select_specification(panel, fn, alpha, include_year_dummies)
        w_mean, ly_mean = panel_means(panel, fn)
        est = elasticity(sel.chosen_fit, w_mean, ly_mean)
        out.append(FunctionEstimate(function=fn, selection=sel, elasticity=est))
    return out


# ---------------------------------------------------------------------------
# reporting


def elasticity_table_text(estimates: list[FunctionEstimate]) -> str:
    width = max(len(FUNCTION_LABELS[e.function]) for e in estimates)
    lines = [
        f"{'function':<{width}} {'elasticity':>10} {'student':>8} {'form':>7} "
        f"{'effects':>7} {'hausman_p':>9} {'fisher_p':>9}",
    ]
    for e in estimates:
        sel = e.selection
        hm = sel.hausman_tests[sel.chosen.form]
        ft = sel.f_tests[sel.chosen.form]
        lines.append(
            f"{FUNCTION_LABELS[e.function]:<{width}} "
            f"{e.elasticity.elasticity:>10.3f} {e.elasticity.t_stat:>8.2f} "
            f"{sel.chosen.form:>7} {sel.chosen.effects:>7} "
            f"{hm.p_value:>9.4f} {ft.p_value:>9.4f}"
        )
    return "\n".join(lines) + "\n"


def elasticity_table_csv_text(estimates: list[FunctionEstimate]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(
        [
            "function",
            "elasticity",
            "std_error",
            "t_stat",
            "form",
            "effects",
            "hausman_stat",
            "hausman_df",
            "hausman_p",
            "f_stat",
            "f_df1",
            "f_df2",
            "f_p",
            "w_mean",
            "log_y_mean",
        ]
    )
    for e in estimates:
        sel = e.selection
        hm = sel.hausman_tests[sel.chosen.form]
        ft = sel.f_tests[sel.chosen.form]
        w.writerow(
            [
                e.function,
                repr(e.elasticity.elasticity),
                repr(e.elasticity.std_error),
                repr(e.elasticity.t_stat),
                sel.chosen.form,
                sel.chosen.effects,
                repr(hm.statistic),
                hm.df,
                repr(hm.p_value),
                repr(ft.statistic),
                ft.df1,
                ft.df2,
                repr(ft.p_value),
                repr(e.elasticity.w_mean),
                repr(e.elasticity.log_y_mean),
            ]
        )
    return buf.getvalue()


def estimates_to_json_dict(estimates: list[FunctionEstimate]) -> dict:
    out: dict = {"alpha": estimates[0].selection.alpha if estimates else None, "functions": {}}
    for e in estimates:
        sel = e.selection
        fit = sel.chosen_fit
        hm = sel.hausman_tests[sel.chosen.form]
        ft = sel.f_tests[sel.chosen.form]
        out["functions"][e.function] = {
            "form": sel.chosen.form,
            "effects": sel.chosen.effects,
            "b2_t_stat": sel.b2_t_stat,
            "coefficients": {
                name: {
                    "coef": fit.coefficient(name),
                    "std_error": fit.std_error(name),
                    "t_stat": fit.t_stat(name),
                }
                for name in fit.names
            },
            "absorbed": list(fit.absorbed),
            "hausman": {"statistic": hm.statistic, "df": hm.df, "p_value": hm.p_value},
            "f_test": {
                "statistic": ft.statistic,
                "df1": ft.df1,
                "df2": ft.df2,
                "p_value": ft.p_value,
            },
            "elasticity": {
                "value": e.elasticity.elasticity,
                "std_error": e.elasticity.std_error,
                "t_stat": e.elasticity.t_stat,
                "w_mean": e.elasticity.w_mean,
                "log_y_mean": e.elasticity.log_y_mean,
            },
        }
    return out


def estimates_to_json(estimates: list[FunctionEstimate]) -> str:
    return json.dumps(estimates_to_json_dict(estimates), indent=2, sort_keys=True) + "\n"
