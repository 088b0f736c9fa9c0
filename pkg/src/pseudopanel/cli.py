"""Command-line pipeline: simulate -> fit-som -> build-panel -> estimate.

Each stage reads the files the previous stage wrote under the output
directory, so stages can be run separately or via ``run-all``. All outputs
are deterministic per master seed and written atomically (temp file +
rename). Exit codes: 0 success, 2 validation/config error, 1 internal error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import cohort, datagen, diagnostics, econometrics, som
from .functions import FUNCTION_CODES


class ConfigError(ValueError):
    """Bad or inconsistent run configuration."""


@dataclass
class DiagnosticsSettings:
    baseline: str = "age_x_expenditure"  # or "none"
    baseline_quantiles: int = 0  # 0 = auto: ceil(nodes / age classes)
    drop_share_for_lambda: str | None = f"w_{FUNCTION_CODES[-1]}"


@dataclass
class SimulateSettings:
    scale: float = 1.0
    noise_scale: float = 0.03
    sigma_mu: float = 0.001
    effect_log_y_corr: float = 0.0
    waves: tuple[tuple[int, int], ...] | None = None


@dataclass
class RunConfig:
    seed: int = 7
    out: Path = Path("out")
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    som_config: som.SomConfig = field(default_factory=som.SomConfig)
    age_classes: cohort.AgeClassConfig = field(default_factory=cohort.AgeClassConfig)
    features: cohort.FeatureConfig = field(default_factory=cohort.FeatureConfig)
    min_cell_size: int = cohort.DEFAULT_MIN_CELL_SIZE
    alpha: float = 0.05
    year_dummies: bool = True
    diagnostics: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    wave_files: tuple[str, ...] | None = None  # default: <out>/waves/wave_*.csv


def _section(raw: dict, name: str) -> dict:
    sec = raw.get(name, {})
    if not isinstance(sec, dict):
        raise ConfigError(f"[{name}] must be a table")
    return dict(sec)


def load_run_config(
    config_path: str | None, seed: int | None, out: str | None
) -> RunConfig:
    """Defaults, overlaid by the TOML file, overlaid by CLI flags."""
    raw: dict = {}
    if config_path is not None:
        p = Path(config_path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            raw = tomllib.loads(p.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"invalid TOML in {p}: {exc}") from exc

    run = _section(raw, "run")
    cfg_seed = int(run.get("seed", 7))
    cfg_out = str(run.get("out", "out"))
    if seed is not None:
        cfg_seed = int(seed)
    if out is not None:
        cfg_out = out

    sim = _section(raw, "simulate")
    waves = sim.get("waves")
    if waves is not None:
        try:
            waves = tuple((int(y), int(n)) for y, n in waves)
        except (TypeError, ValueError) as exc:
            raise ConfigError("simulate.waves must be a list of [year, n] pairs") from exc
    simulate = SimulateSettings(
        scale=float(sim.get("scale", 1.0)),
        noise_scale=float(sim.get("noise_scale", 0.03)),
        sigma_mu=float(sim.get("sigma_mu", 0.001)),
        effect_log_y_corr=float(sim.get("effect_log_y_corr", 0.0)),
        waves=waves,
    )

    s = _section(raw, "som")
    try:
        som_config = som.SomConfig(
            rows=int(s.get("rows", 8)),
            cols=int(s.get("cols", 8)),
            epochs=int(s.get("epochs", 12)),
            initial_radius=float(s.get("initial_radius", 4.0)),
            initial_learning_rate=float(s.get("initial_learning_rate", 0.5)),
            final_learning_rate=float(s.get("final_learning_rate", 0.02)),
            rng_seed=cfg_seed,
        )
    except ValueError as exc:
        raise ConfigError(f"[som]: {exc}") from exc

    a = _section(raw, "age_classes")
    try:
        age_classes = cohort.AgeClassConfig(
            boundaries=tuple(float(b) for b in a.get("boundaries", (30, 40, 50, 65))),
            wave_offsets={
                int(k): float(v)
                for k, v in a.get("wave_offsets", {1982: 0, 1986: 4, 1992: 6}).items()
            },
        )
    except ValueError as exc:
        raise ConfigError(f"[age_classes]: {exc}") from exc

    f = _section(raw, "features")
    features = cohort.FeatureConfig(
        include_age_dummies=bool(f.get("age_dummies", True)),
        include_log_size=bool(f.get("log_size", True)),
        include_log_expenditure=bool(f.get("log_expenditure", False)),
    )

    panel = _section(raw, "panel")
    min_cell_size = int(panel.get("min_cell_size", cohort.DEFAULT_MIN_CELL_SIZE))
    if min_cell_size < 1:
        raise ConfigError("panel.min_cell_size must be at least 1")

    est = _section(raw, "estimate")
    alpha = float(est.get("alpha", 0.05))
    if not 0 < alpha < 1:
        raise ConfigError("estimate.alpha must lie in (0, 1)")
    year_dummies = bool(est.get("year_dummies", True))

    d = _section(raw, "diagnostics")
    diag = DiagnosticsSettings(
        baseline=str(d.get("baseline", "age_x_expenditure")),
        baseline_quantiles=int(d.get("baseline_quantiles", 0)),
        drop_share_for_lambda=d.get("drop_share_for_lambda", f"w_{FUNCTION_CODES[-1]}"),
    )
    if diag.baseline not in ("age_x_expenditure", "none"):
        raise ConfigError(
            "diagnostics.baseline must be 'age_x_expenditure' or 'none'"
        )
    if diag.drop_share_for_lambda in ("", "none"):
        diag.drop_share_for_lambda = None

    wf = _section(raw, "waves").get("files")
    wave_files = tuple(str(x) for x in wf) if wf is not None else None

    return RunConfig(
        seed=cfg_seed,
        out=Path(cfg_out),
        simulate=simulate,
        som_config=som_config,
        age_classes=age_classes,
        features=features,
        min_cell_size=min_cell_size,
        alpha=alpha,
        year_dummies=year_dummies,
        diagnostics=diag,
        wave_files=wave_files,
    )


# ---------------------------------------------------------------------------
# file helpers


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _wave_paths(cfg: RunConfig) -> list[Path]:
    if cfg.wave_files is not None:
        paths = [Path(p) for p in cfg.wave_files]
    else:
        paths = sorted((cfg.out / "waves").glob("wave_*.csv"))
        if not paths:
            raise ConfigError(
                f"no wave files found under {cfg.out / 'waves'}; run 'simulate' "
                "first or list them in [waves] files"
            )
    for p in paths:
        if not p.exists():
            raise ConfigError(f"wave file not found: {p}")
    return paths


def _load_waves(cfg: RunConfig) -> list[list[cohort.HouseholdRecord]]:
    waves = [cohort.parse_wave_csv(p.read_text()) for p in _wave_paths(cfg)]
    waves.sort(key=lambda w: w[0].wave_year)
    return waves


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(cfg: RunConfig) -> None:
    sim = cfg.simulate
    pop = datagen.default_population_config(
        scale=sim.scale,
        seed=cfg.seed,
        noise_scale=sim.noise_scale,
        sigma_mu=sim.sigma_mu,
        effect_log_y_corr=sim.effect_log_y_corr,
        waves=sim.waves,
    )
    waves, truth = datagen.generate(pop)
    for records in waves:
        year = records[0].wave_year
        path = cfg.out / "waves" / f"wave_{year}.csv"
        _atomic_write(path, cohort.wave_csv_text(records))
        print(f"wrote {path} ({len(records)} households)")
    _write_json(cfg.out / "truth.json", truth.to_json_dict())
    _atomic_write(cfg.out / "class_labels.csv", truth.labels_csv_text())
    print(
        f"wrote {cfg.out / 'truth.json'} "
        f"(clip fraction {truth.clip_fraction:.4f})"
    )


def _features_extra(cfg: RunConfig) -> dict:
    return {
        "features": {
            "age_dummies": cfg.features.include_age_dummies,
            "log_size": cfg.features.include_log_size,
            "log_expenditure": cfg.features.include_log_expenditure,
            "age_boundaries": list(cfg.age_classes.boundaries),
            "age_wave_offsets": {
                str(k): v for k, v in cfg.age_classes.wave_offsets.items()
            },
        }
    }


def _membership_csv_text(membership: dict[str, int]) -> str:
    lines = ["id,cohort"]
    lines += [f"{hid},{node}" for hid, node in membership.items()]
    return "\n".join(lines) + "\n"


def cmd_fit_som(cfg: RunConfig) -> None:
    waves = _load_waves(cfg)
    pooled = [r for wave in waves for r in wave]
    X, names = cohort.build_features(pooled, cfg.age_classes, cfg.features)
    Z, scaler = som.standardize(X, names)
    fitted = som.train(Z, cfg.som_config, scaler)
    qe = som.quantization_error(fitted, Z)

    cov = som.pooled_covariance(Z)
    ridge_applied = False
    try:
        D = som.mahalanobis_matrix(fitted, cov)
    except ValueError:
        cov = som.ridge_regularize(cov)
        D = som.mahalanobis_matrix(fitted, cov)
        ridge_applied = True

    extra = _features_extra(cfg)
    extra["training"] = {
        "n_records": len(pooled),
        "quantization_error": qe,
        "covariance_ridge_applied": ridge_applied,
    }
    _atomic_write(cfg.out / "som_map.json", som.map_to_json(fitted, extra))
    _atomic_write(cfg.out / "distance_map.svg", som.distance_map_svg(fitted, D))

    membership = cohort.assign_waves(fitted, waves, cfg.age_classes, cfg.features)
    report = cohort.cohort_cell_counts(
        membership, waves, cohort_universe=list(range(1, fitted.n_nodes + 1))
    )
    _atomic_write(cfg.out / "membership.csv", _membership_csv_text(membership))
    _atomic_write(cfg.out / "cohort_sizes.csv", report.to_csv_text())
    _atomic_write(cfg.out / "cohort_sizes.txt", report.to_text(cfg.min_cell_size))
    print(f"wrote {cfg.out / 'som_map.json'} (quantization error {qe:.4f})")
    print(
        f"wrote {cfg.out / 'cohort_sizes.csv'} "
        f"({len(report.flagged(cfg.min_cell_size))} cohorts below "
        f"min_cell_size {cfg.min_cell_size})"
    )


def _baseline_grouping(
    cfg: RunConfig,
    records: list[cohort.HouseholdRecord],
    n_nodes: int,
) -> np.ndarray:
    """Age class x pooled-expenditure quantile cross-classification with a
    group count close to the SOM's node count."""
    n_age = cfg.age_classes.n_classes
    q = cfg.diagnostics.baseline_quantiles
    if q < 1:
        q = max(1, math.ceil(n_nodes / n_age))
    age_idx = np.array(
        [cohort.age_class_index(r.age, r.wave_year, cfg.age_classes) for r in records]
    )
    log_y = np.log([r.total_expenditure for r in records])
    edges = np.quantile(log_y, np.linspace(0, 1, q + 1)[1:-1])
    y_idx = np.searchsorted(edges, log_y, side="right")
    return age_idx * q + y_idx


def cmd_build_panel(cfg: RunConfig) -> None:
    waves = _load_waves(cfg)
    map_path = cfg.out / "som_map.json"
    if not map_path.exists():
        raise ConfigError(f"{map_path} not found; run 'fit-som' first")
    fitted = som.map_from_json(map_path.read_text())

    membership = cohort.assign_waves(fitted, waves, cfg.age_classes, cfg.features)
    panel = cohort.build_panel(
        membership,
        waves,
        min_cell_size=cfg.min_cell_size,
        cohort_universe=list(range(1, fitted.n_nodes + 1)),
    )
    _atomic_write(cfg.out / "panel.csv", cohort.panel_csv_text(panel))
    dropped_lines = ["cohort,reason"] + [
        f"{c},\"{reason}\"" for c, reason in panel.dropped
    ]
    _atomic_write(cfg.out / "dropped_cohorts.csv", "\n".join(dropped_lines) + "\n")
    print(
        f"wrote {cfg.out / 'panel.csv'} "
        f"({panel.n_units} cohorts x {panel.n_periods} waves, "
        f"{len(panel.dropped)} cohorts dropped)"
    )

    if cfg.diagnostics.baseline != "none":
        pooled = [r for wave in waves for r in wave]
        X = np.vstack([r.budget_shares for r in pooled])
        names = [f"w_{c}" for c in FUNCTION_CODES]
        som_labels = np.array([membership[r.household_id] for r in pooled])
        base_labels = _baseline_grouping(cfg, pooled, fitted.n_nodes)
        cmp = diagnostics.compare_groupings(
            X,
            som_labels,
            base_labels,
            names,
            label_a="som",
            label_b="age_x_y",
            drop_for_lambda=cfg.diagnostics.drop_share_for_lambda,
        )
        _atomic_write(cfg.out / "diagnostics.csv", diagnostics.comparison_to_csv_text(cmp))
        _atomic_write(cfg.out / "diagnostics.txt", diagnostics.comparison_to_text(cmp))
        print(
            f"wrote {cfg.out / 'diagnostics.csv'} "
            f"(Wilks lambda som {cmp.report_a.wilks.lambda_:.4f} vs "
            f"baseline {cmp.report_b.wilks.lambda_:.4f})"
        )


def cmd_estimate(cfg: RunConfig) -> None:
    panel_path = cfg.out / "panel.csv"
    if not panel_path.exists():
        raise ConfigError(f"{panel_path} not found; run 'build-panel' first")
    panel = cohort.parse_panel_csv(panel_path.read_text())
    estimates = econometrics.estimate_all(
        panel, alpha=cfg.alpha, include_year_dummies=cfg.year_dummies
    )
    _atomic_write(
        cfg.out / "elasticities.csv", econometrics.elasticity_table_csv_text(estimates)
    )
    _atomic_write(
        cfg.out / "elasticities.txt", econometrics.elasticity_table_text(estimates)
    )
    _write_json(
        cfg.out / "estimates.json", econometrics.estimates_to_json_dict(estimates)
    )
    n_quaids = sum(1 for e in estimates if e.selection.chosen.form == "quaids")
    print(
        f"wrote {cfg.out / 'elasticities.csv'} "
        f"({len(estimates)} functions, {n_quaids} quadratic)"
    )


def cmd_run_all(cfg: RunConfig) -> None:
    cmd_simulate(cfg)
    cmd_fit_som(cfg)
    cmd_build_panel(cfg)
    cmd_estimate(cfg)


COMMANDS = {
    "simulate": cmd_simulate,
    "fit-som": cmd_fit_som,
    "build-panel": cmd_build_panel,
    "estimate": cmd_estimate,
    "run-all": cmd_run_all,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pseudopanel",
        description="Pseudo-panel pipeline: synthetic survey, SOM cohorts, "
        "demand-system estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="TOML run configuration")
        p.add_argument("--seed", type=int, metavar="N", help="master RNG seed")
        p.add_argument("--out", metavar="DIR", help="output directory")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_run_config(args.config, args.seed, args.out)
        COMMANDS[args.command](cfg)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
