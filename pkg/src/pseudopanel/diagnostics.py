"""Homogeneity diagnostics for candidate cohort groupings.

Smaller is better throughout: a grouping explains behavior well when little
of each variable's variance remains within groups (within/total share) and
when the multivariate within-to-total scatter ratio (Wilks lambda) is small.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats


class WilksResult(NamedTuple):
    lambda_: float
    rao_f: float
    df1: float
    df2: float

    @property
    def p_value(self) -> float:
        return float(stats.f.sf(self.rao_f, self.df1, self.df2))


def _group_index(groups) -> tuple[np.ndarray, np.ndarray]:
    labels, inverse = np.unique(np.asarray(groups), return_inverse=True)
    return labels, inverse


def within_total_share(values: np.ndarray, groups) -> float:
    """Percent of a variable's total variance left within groups.

    100 * SSW / SST, where SSW pools squared deviations from group means.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ValueError("values must be one-dimensional")
    labels, inv = _group_index(groups)
    if inv.shape[0] != x.shape[0]:
        raise ValueError("values and groups must have the same length")
    sst = float(((x - x.mean()) ** 2).sum())
    if sst == 0.0:
        raise ValueError("variable has zero total variance")
    counts = np.bincount(inv)
    means = np.bincount(inv, weights=x) / counts
    ssw = float(((x - means[inv]) ** 2).sum())
    return 100.0 * ssw / sst


def scatter_matrices(X: np.ndarray, groups) -> tuple[np.ndarray, np.ndarray]:
    """Within-group and total scatter (sums of squares and cross-products)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be two-dimensional")
    labels, inv = _group_index(groups)
    if inv.shape[0] != X.shape[0]:
        raise ValueError("X and groups must have the same length")
    centered = X - X.mean(axis=0)
    T = centered.T @ centered
    counts = np.bincount(inv).astype(float)
    sums = np.zeros((labels.size, X.shape[1]))
    np.add.at(sums, inv, X)
    means = sums / counts[:, None]
    resid = X - means[inv]
    W = resid.T @ resid
    return W, T


def wilks_lambda(X: np.ndarray, groups) -> WilksResult:
    """Wilks lambda det(W)/det(T) with Rao's F approximation.

    Requires n > p + g. A singular within scatter is ridge-stabilized
    (lambda = 1e-8 * trace(T)/p added to both W and T diagonals); a singular
    total scatter means degenerate data and raises.
    """
    X = np.asarray(X, dtype=float)
    labels, inv = _group_index(groups)
    n, p = X.shape
    g = labels.size
    if g < 2:
        raise ValueError("need at least two groups")
    if n <= p + g:
        raise ValueError(f"need n > p + g (n={n}, p={p}, g={g})")
    W, T = scatter_matrices(X, inv)

    sign_t, logdet_t = np.linalg.slogdet(T)
    if sign_t <= 0:
        raise ValueError(
            "total scatter matrix is singular; the variables are degenerate "
            "(drop collinear columns)"
        )
    sign_w, logdet_w = np.linalg.slogdet(W)
    if sign_w <= 0:
        lam_ridge = 1e-8 * float(np.trace(T)) / p
        W = W + lam_ridge * np.eye(p)
        T = T + lam_ridge * np.eye(p)
        sign_t, logdet_t = np.linalg.slogdet(T)
        sign_w, logdet_w = np.linalg.slogdet(W)
        if sign_w <= 0 or sign_t <= 0:
            raise ValueError("scatter matrices remain singular after ridge")

    lam = float(np.exp(logdet_w - logdet_t))
    lam = min(lam, 1.0)

    df1 = p * (g - 1)
    denom = p * p + (g - 1) * (g - 1) - 5
    s = np.sqrt((p * p * (g - 1) * (g - 1) - 4) / denom) if denom > 0 else 1.0
    m = n - 1 - (p + g) / 2.0
    df2 = m * s - df1 / 2.0 + 1.0
    if df2 <= 0:
        raise ValueError("Rao F degrees of freedom non-positive; too few rows")
    lam_root = lam ** (1.0 / s)
    rao_f = (1.0 - lam_root) / lam_root * (df2 / df1)
    return WilksResult(lambda_=lam, rao_f=max(float(rao_f), 0.0), df1=float(df1), df2=float(df2))


# ---------------------------------------------------------------------------
# grouping reports


@dataclass
class GroupingReport:
    label: str
    n_groups: int
    group_sizes: list[int]
    variable_names: list[str]
    within_shares: np.ndarray  # percent, one per variable
    wilks: WilksResult
    lambda_variables: list[str]


def grouping_report(
    X: np.ndarray,
    groups,
    names: list[str],
    label: str = "grouping",
    drop_for_lambda: str | None = None,
) -> GroupingReport:
    """Per-variable within/total shares plus Wilks lambda for one grouping.

    ``drop_for_lambda`` names one column excluded from the multivariate
    statistic (budget shares sum to 1, so one share is redundant and makes
    the scatter near-singular); the per-variable shares still cover all
    columns.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError("X must be 2-d with one column per name")
    labels, inv = _group_index(groups)
    shares = np.empty(len(names))
    for j, name in enumerate(names):
        try:
            shares[j] = within_total_share(X[:, j], inv)
        except ValueError as exc:
            raise ValueError(f"variable {name!r}: {exc}") from exc
    keep = list(range(len(names)))
    if drop_for_lambda is not None:
        if drop_for_lambda not in names:
            raise ValueError(f"drop_for_lambda column {drop_for_lambda!r} not found")
        keep = [j for j in keep if names[j] != drop_for_lambda]
    wilks = wilks_lambda(X[:, keep], inv)
    return GroupingReport(
        label=label,
        n_groups=int(labels.size),
        group_sizes=[int(c) for c in np.bincount(inv)],
        variable_names=list(names),
        within_shares=shares,
        wilks=wilks,
        lambda_variables=[names[j] for j in keep],
    )


@dataclass
class ComparisonReport:
    report_a: GroupingReport
    report_b: GroupingReport
    note: str | None = None


def compare_groupings(
    X: np.ndarray,
    groups_a,
    groups_b,
    names: list[str],
    label_a: str = "A",
    label_b: str = "B",
    drop_for_lambda: str | None = None,
) -> ComparisonReport:
    """Side-by-side homogeneity reports for two groupings of the same rows.

    A mismatch in group counts is reported in ``note`` rather than raised:
    comparing, say, 64 SOM nodes against 15 demographic classes is exactly
    the intended use.
    """
    ra = grouping_report(X, groups_a, names, label_a, drop_for_lambda)
    rb = grouping_report(X, groups_b, names, label_b, drop_for_lambda)
    note = None
    if ra.n_groups != rb.n_groups:
        note = (
            f"group counts differ: {ra.n_groups} ({label_a}) vs "
            f"{rb.n_groups} ({label_b}); shares are comparable but not "
            "degrees-of-freedom matched"
        )
    return ComparisonReport(report_a=ra, report_b=rb, note=note)


def comparison_to_text(cmp: ComparisonReport) -> str:
    ra, rb = cmp.report_a, cmp.report_b
    width = max(len(n) for n in ra.variable_names)
    lines = [
        "within-group share of total variance (percent; smaller = more homogeneous)",
        f"{'variable':<{width}} {ra.label:>12} {rb.label:>12}",
    ]
    for j, name in enumerate(ra.variable_names):
        lines.append(
            f"{name:<{width}} {ra.within_shares[j]:>12.2f} {rb.within_shares[j]:>12.2f}"
        )
    lines.append("")
    lines.append(
        f"{'Wilks lambda':<{width}} {ra.wilks.lambda_:>12.6f} {rb.wilks.lambda_:>12.6f}"
    )
    lines.append(
        f"{'Rao F':<{width}} {ra.wilks.rao_f:>12.2f} {rb.wilks.rao_f:>12.2f}"
    )
    lines.append(
        f"{'(df1, df2)':<{width}} "
        f"{'(%d, %.1f)' % (ra.wilks.df1, ra.wilks.df2):>12} "
        f"{'(%d, %.1f)' % (rb.wilks.df1, rb.wilks.df2):>12}"
    )
    lines.append(
        f"{'groups':<{width}} {ra.n_groups:>12d} {rb.n_groups:>12d}"
    )
    if cmp.note:
        lines.append("note: " + cmp.note)
    return "\n".join(lines) + "\n"


def comparison_to_csv_text(cmp: ComparisonReport) -> str:
    ra, rb = cmp.report_a, cmp.report_b
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["variable", f"within_share_{ra.label}", f"within_share_{rb.label}"])
    for j, name in enumerate(ra.variable_names):
        w.writerow([name, repr(float(ra.within_shares[j])), repr(float(rb.within_shares[j]))])
    w.writerow(["wilks_lambda", repr(ra.wilks.lambda_), repr(rb.wilks.lambda_)])
    w.writerow(["rao_f", repr(ra.wilks.rao_f), repr(rb.wilks.rao_f)])
    w.writerow(["n_groups", ra.n_groups, rb.n_groups])
    return buf.getvalue()
