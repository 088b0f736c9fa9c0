"""Kohonen self-organizing map for grouping households into cohorts.

Nodes live on a rectangular grid and are numbered 1..rows*cols, row-major
from the top-left corner. Training is the classic online rule with a hard
(unweighted) Chebyshev-ball neighborhood, a per-epoch constant learning rate
decaying linearly from the initial to the final value, and a neighborhood
radius decaying linearly to 1 over the first epochs-1 epochs; the final
epoch updates the winning node only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

MAP_FORMAT = "som-map"
MAP_FORMAT_VERSION = 1

_ASSIGN_CHUNK = 2048


class DegenerateFeatureError(ValueError):
    """A non-dummy feature column has zero variance and cannot be scaled."""


@dataclass(frozen=True)
class Scaler:
    """Column-wise z-scoring fitted on one wave and reusable on others.

    Columns flagged as pass-through (dummy columns, values all in {0, 1})
    are left untouched; every other column is centered and divided by its
    sample standard deviation (ddof=1).
    """

    mean: np.ndarray
    scale: np.ndarray
    passthrough: np.ndarray
    names: tuple[str, ...]

    def __post_init__(self):
        for attr in ("mean", "scale", "passthrough"):
            object.__setattr__(self, attr, np.asarray(getattr(self, attr)))
        object.__setattr__(self, "names", tuple(self.names))
        if not (self.mean.shape == self.scale.shape == self.passthrough.shape):
            raise ValueError("scaler arrays must have identical shapes")
        if len(self.names) != self.mean.shape[0]:
            raise ValueError("scaler names do not match the number of columns")
        if np.any(self.scale[~self.passthrough] <= 0):
            raise ValueError("scaler standard deviations must be positive")

    @property
    def n_features(self) -> int:
        return self.mean.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(
                f"expected a 2-d array with {self.n_features} columns, got shape {X.shape}"
            )
        Z = X.copy()
        keep = ~self.passthrough
        Z[:, keep] = (X[:, keep] - self.mean[keep]) / self.scale[keep]
        return Z


def _is_dummy_column(col: np.ndarray) -> bool:
    return bool(np.all((col == 0.0) | (col == 1.0)))


def standardize(
    X: np.ndarray, names: list[str] | None = None
) -> tuple[np.ndarray, Scaler]:
    """Z-score feature columns, passing dummy (0/1) columns through unchanged.

    Returns the standardized copy and the fitted :class:`Scaler`. A constant
    non-dummy column raises :class:`DegenerateFeatureError` naming the column.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("standardize expects a 2-d array with at least two rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain non-finite values")
    d = X.shape[1]
    if names is None:
        names = [f"x{j}" for j in range(d)]
    if len(names) != d:
        raise ValueError("names length does not match the number of columns")

    passthrough = np.array([_is_dummy_column(X[:, j]) for j in range(d)])
    mean = X.mean(axis=0)
    sd = X.std(axis=0, ddof=1)
    bad = [names[j] for j in range(d) if not passthrough[j] and sd[j] == 0.0]
    if bad:
        raise DegenerateFeatureError(
            "zero-variance non-dummy feature column(s): " + ", ".join(bad)
        )
    scale = np.where(passthrough, 1.0, sd)
    scaler = Scaler(mean=mean, scale=scale, passthrough=passthrough, names=tuple(names))
    return scaler.apply(X), scaler


def identity_scaler(n_features: int, names: list[str] | None = None) -> Scaler:
    """A no-op scaler (used when training on already-scaled data)."""
    if names is None:
        names = [f"x{j}" for j in range(n_features)]
    return Scaler(
        mean=np.zeros(n_features),
        scale=np.ones(n_features),
        passthrough=np.ones(n_features, dtype=bool),
        names=tuple(names),
    )


@dataclass(frozen=True)
class SomConfig:
    rows: int = 8
    cols: int = 8
    epochs: int = 20
    initial_radius: float = 4.0
    initial_learning_rate: float = 0.5
    final_learning_rate: float = 0.02
    rng_seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("grid dimensions must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be positive")
        if self.initial_radius < 0:
            raise ValueError("initial_radius must be non-negative")
        if not (self.initial_learning_rate > 0 and self.final_learning_rate > 0):
            raise ValueError("learning rates must be positive")
        if self.final_learning_rate > self.initial_learning_rate:
            raise ValueError("final learning rate must not exceed the initial rate")

    @property
    def n_nodes(self) -> int:
        return self.rows * self.cols


def training_schedule(config: SomConfig) -> tuple[np.ndarray, np.ndarray]:
    """Per-epoch learning rates and neighborhood radii.

    The learning rate decays linearly from the initial to the final value.
    The radius decays linearly from ``initial_radius`` to 1 over the first
    ``epochs - 1`` epochs (clamped so the schedule never increases when the
    initial radius is already below 1); the last epoch uses radius 0, i.e.
    only the winning node is updated.
    """
    E = config.epochs
    rates = np.linspace(
        config.initial_learning_rate, config.final_learning_rate, E
    )
    if E == 1:
        radii = np.array([0.0])
    else:
        end = min(config.initial_radius, 1.0)
        radii = np.append(np.linspace(config.initial_radius, end, E - 1), 0.0)
    return rates, radii


def grid_coordinates(config: SomConfig) -> np.ndarray:
    """(n_nodes, 2) array of (row, col) grid positions, row-major."""
    idx = np.arange(config.n_nodes)
    return np.column_stack([idx // config.cols, idx % config.cols])


def grid_neighbors(config: SomConfig, node: int) -> list[int]:
    """1-based ids of the Chebyshev-distance-1 grid neighbors of ``node``."""
    if not 1 <= node <= config.n_nodes:
        raise ValueError(f"node id {node} outside 1..{config.n_nodes}")
    r, c = divmod(node - 1, config.cols)
    out = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            rr, cc = r + dr, c + dc
            if 0 <= rr < config.rows and 0 <= cc < config.cols:
                out.append(rr * config.cols + cc + 1)
    return sorted(out)


@dataclass
class SomMap:
    """A fitted map: code vectors (row-major, node 1 first), the scaler the
    training features were standardized with, and the realized schedules."""

    config: SomConfig
    code_vectors: np.ndarray
    scaler: Scaler
    learning_rates: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        self.code_vectors = np.asarray(self.code_vectors, dtype=float)
        if self.code_vectors.shape != (self.config.n_nodes, self.scaler.n_features):
            raise ValueError(
                "code_vectors must be (n_nodes, n_features) = "
                f"({self.config.n_nodes}, {self.scaler.n_features}), "
                f"got {self.code_vectors.shape}"
            )
        if not np.all(np.isfinite(self.code_vectors)):
            raise ValueError("code vectors contain non-finite values")

    @property
    def n_nodes(self) -> int:
        return self.config.n_nodes

    @property
    def n_features(self) -> int:
        return self.scaler.n_features


def _validate_training_data(data: np.ndarray, config: SomConfig) -> np.ndarray:
    X = np.asarray(data, dtype=float)
    if X.ndim != 2:
        raise ValueError("training data must be a 2-d array (rows = observations)")
    if X.shape[0] == 0:
        raise ValueError("training data is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError("training data contains non-finite values")
    return X


def train(data: np.ndarray, config: SomConfig, scaler: Scaler | None = None) -> SomMap:
    """Fit the map on (already standardized) feature rows.

    Code vectors are initialized by sampling training rows (without
    replacement when there are at least as many rows as nodes). Each epoch
    presents every row once in a seeded random order; the best-matching unit
    is the node with the smallest squared Euclidean distance, ties broken by
    the lowest node id, and every node within the epoch's Chebyshev radius of
    the winner (on the grid) moves toward the input by the epoch's rate.
    """
    X = _validate_training_data(data, config)
    n, d = X.shape
    if scaler is None:
        scaler = identity_scaler(d)
    if scaler.n_features != d:
        raise ValueError("scaler does not match the feature dimension")

    rng = np.random.default_rng(config.rng_seed)
    m = config.n_nodes
    init_idx = rng.choice(n, size=m, replace=n < m)
    code = X[init_idx].copy()

    coords = grid_coordinates(config)
    rows_, cols_ = coords[:, 0], coords[:, 1]
    rates, radii = training_schedule(config)

    for epoch in range(config.epochs):
        lr = rates[epoch]
        radius = radii[epoch]
        order = rng.permutation(n)
        if radius == 0.0:
            for i in order:
                x = X[i]
                b = int(np.argmin(((code - x) ** 2).sum(axis=1)))
                code[b] += lr * (x - code[b])
        else:
            for i in order:
                x = X[i]
                b = int(np.argmin(((code - x) ** 2).sum(axis=1)))
                mask = (np.abs(rows_ - rows_[b]) <= radius) & (
                    np.abs(cols_ - cols_[b]) <= radius
                )
                code[mask] += lr * (x - code[mask])

    return SomMap(
        config=config,
        code_vectors=code,
        scaler=scaler,
        learning_rates=rates,
        radii=radii,
    )


def assign(som_map: SomMap, data: np.ndarray) -> np.ndarray:
    """1-based BMU node id for each standardized feature row."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[1] != som_map.n_features:
        raise ValueError(
            f"expected rows with {som_map.n_features} features, got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise ValueError("feature rows contain non-finite values")
    code = som_map.code_vectors
    out = np.empty(X.shape[0], dtype=int)
    for start in range(0, X.shape[0], _ASSIGN_CHUNK):
        chunk = X[start : start + _ASSIGN_CHUNK]
        d2 = ((chunk[:, None, :] - code[None, :, :]) ** 2).sum(axis=2)
        out[start : start + chunk.shape[0]] = np.argmin(d2, axis=1) + 1
    return out


def bmu(som_map: SomMap, vector: np.ndarray) -> int:
    """Best-matching unit (1-based node id) for one standardized vector.

    Ties in squared Euclidean distance go to the lowest node id.
    """
    v = np.asarray(vector, dtype=float).reshape(1, -1)
    return int(assign(som_map, v)[0])


def quantization_error(som_map: SomMap, data: np.ndarray) -> float:
    """Mean Euclidean distance from each row to its BMU's code vector."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("quantization error needs a non-empty 2-d array")
    nodes = assign(som_map, X) - 1
    diffs = X - som_map.code_vectors[nodes]
    return float(np.sqrt((diffs**2).sum(axis=1)).mean())


def pooled_covariance(data: np.ndarray) -> np.ndarray:
    """Sample covariance (ddof=1) of the pooled standardized features."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise ValueError("covariance needs at least two rows")
    return np.cov(X, rowvar=False, ddof=1)


def ridge_regularize(cov: np.ndarray, rel: float = 1e-8) -> np.ndarray:
    """Add rel * trace(cov)/d to the diagonal (fix for singular covariances)."""
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    lam = rel * np.trace(cov) / d
    return cov + lam * np.eye(d)


def mahalanobis_matrix(som_map: SomMap, covariance: np.ndarray) -> np.ndarray:
    """Pairwise Mahalanobis distances between code vectors.

    dist(i, j) = || L^-1 (c_i - c_j) || with covariance = L L^T (Cholesky).
    Raises ValueError for a non-symmetric or non-positive-definite
    covariance; apply :func:`ridge_regularize` first in that case.
    """
    S = np.asarray(covariance, dtype=float)
    d = som_map.n_features
    if S.shape != (d, d):
        raise ValueError(f"covariance must be ({d}, {d}), got {S.shape}")
    if not np.allclose(S, S.T, rtol=0, atol=1e-10 * (1 + np.abs(S).max())):
        raise ValueError("covariance matrix is not symmetric")
    try:
        L = cholesky(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "covariance is singular or not positive definite; "
            "apply ridge_regularize() first"
        ) from exc
    Z = solve_triangular(L, som_map.code_vectors.T, lower=True).T
    return cdist(Z, Z)


def neighbor_distances(
    som_map: SomMap, distance_matrix: np.ndarray
) -> list[list[tuple[int, float]]]:
    """Per node (list index = node id - 1), the (neighbor id, distance) pairs
    for its grid neighbors, neighbor ids ascending."""
    D = np.asarray(distance_matrix, dtype=float)
    m = som_map.n_nodes
    if D.shape != (m, m):
        raise ValueError(f"distance matrix must be ({m}, {m}), got {D.shape}")
    out = []
    for node in range(1, m + 1):
        out.append(
            [(nb, float(D[node - 1, nb - 1])) for nb in grid_neighbors(som_map.config, node)]
        )
    return out


# ---------------------------------------------------------------------------
# serialization


def map_to_dict(som_map: SomMap) -> dict:
    return {
        "format": MAP_FORMAT,
        "version": MAP_FORMAT_VERSION,
        "config": {
            "rows": som_map.config.rows,
            "cols": som_map.config.cols,
            "epochs": som_map.config.epochs,
            "initial_radius": som_map.config.initial_radius,
            "initial_learning_rate": som_map.config.initial_learning_rate,
            "final_learning_rate": som_map.config.final_learning_rate,
            "rng_seed": som_map.config.rng_seed,
        },
        "scaler": {
            "mean": som_map.scaler.mean.tolist(),
            "scale": som_map.scaler.scale.tolist(),
            "passthrough": [bool(b) for b in som_map.scaler.passthrough],
            "names": list(som_map.scaler.names),
        },
        "learning_rates": som_map.learning_rates.tolist(),
        "radii": som_map.radii.tolist(),
        "code_vectors": som_map.code_vectors.tolist(),
    }


def map_from_dict(payload: dict) -> SomMap:
    if payload.get("format") != MAP_FORMAT:
        raise ValueError(f"not a {MAP_FORMAT} payload")
    if payload.get("version") != MAP_FORMAT_VERSION:
        raise ValueError(
            f"unsupported {MAP_FORMAT} version {payload.get('version')!r}"
        )
    cfg = SomConfig(**payload["config"])
    sc = payload["scaler"]
    scaler = Scaler(
        mean=np.array(sc["mean"], dtype=float),
        scale=np.array(sc["scale"], dtype=float),
        passthrough=np.array(sc["passthrough"], dtype=bool),
        names=tuple(sc["names"]),
    )
    return SomMap(
        config=cfg,
        code_vectors=np.array(payload["code_vectors"], dtype=float),
        scaler=scaler,
        learning_rates=np.array(payload["learning_rates"], dtype=float),
        radii=np.array(payload["radii"], dtype=float),
    )


def map_to_json(som_map: SomMap, extra: dict | None = None) -> str:
    """Deterministic JSON text for a fitted map (optionally with extra
    top-level sections, e.g. the feature recipe used to build inputs)."""
    payload = map_to_dict(som_map)
    if extra:
        overlap = set(extra) & set(payload)
        if overlap:
            raise ValueError(f"extra sections collide with map fields: {sorted(overlap)}")
        payload.update(extra)
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def map_from_json(text: str) -> SomMap:
    return map_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# distance-map rendering


def distance_map_svg(
    som_map: SomMap, distance_matrix: np.ndarray, cell_size: int = 48
) -> str:
    """Unified-distance map as SVG: one cell per node, with an inscribed
    polygon whose vertex radii are proportional to the Mahalanobis distance
    to each grid neighbor (scaled so the largest distance on the map touches
    the cell border)."""
    cfg = som_map.config
    D = np.asarray(distance_matrix, dtype=float)
    nd = neighbor_distances(som_map, D)
    dmax = max((d for entries in nd for _, d in entries), default=0.0)
    width = cfg.cols * cell_size
    height = cfg.rows * cell_size
    half = cell_size / 2.0

    # clockwise starting north-west so polygon vertices come out in grid order
    ring = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for node in range(1, cfg.n_nodes + 1):
        r, c = divmod(node - 1, cfg.cols)
        x0, y0 = c * cell_size, r * cell_size
        cx, cy = x0 + half, y0 + half
        parts.append(
            f'<rect x="{x0}" y="{y0}" width="{cell_size}" height="{cell_size}" '
            f'fill="none" stroke="#cccccc" stroke-width="1"/>'
        )
        by_offset = {}
        for nb, dist in nd[node - 1]:
            rr, cc = divmod(nb - 1, cfg.cols)
            by_offset[(rr - r, cc - c)] = dist
        points = []
        for dr, dc in ring:
            if (dr, dc) not in by_offset:
                continue
            frac = 0.0 if dmax == 0.0 else by_offset[(dr, dc)] / dmax
            points.append((cx + dc * half * frac, cy + dr * half * frac))
        if len(points) >= 3:
            pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in points)
            parts.append(
                f'<polygon points="{pts}" fill="#4477aa" fill-opacity="0.6" '
                f'stroke="#223355" stroke-width="1"/>'
            )
        parts.append(
            f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="1.5" fill="#223355"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
