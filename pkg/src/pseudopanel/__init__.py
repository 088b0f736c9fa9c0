"""Pseudo panels from repeated cross-section surveys.

Households from independent survey waves are grouped into behaviorally
homogeneous cohorts with a self-organizing map; cohort-wave cells are
collapsed to expenditure-weighted means with a heteroskedasticity
correction; budget-share demand systems (linear and quadratic in log
expenditure) are then estimated on the resulting balanced panel with
pooled, fixed-effects, and random-effects estimators, specification tests,
and total-expenditure elasticities.
"""

from . import cohort, datagen, diagnostics, econometrics, functions, som

__version__ = "0.1.0"

__all__ = [
    "cohort",
    "datagen",
    "diagnostics",
    "econometrics",
    "functions",
    "som",
    "__version__",
]
