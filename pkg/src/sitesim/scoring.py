"""Siting agents: feature normalization, seeded k-means, and weighted MCDA.

Four agents score grid cells for a deployment: the energy agent ranks raw
resource potential, the water and land agents run a cluster-then-score
pipeline over multi-criteria features, and the community agent prefers the
least-burdened cells. All scores land in [0, 1]; cells excluded by a
scenario mask are never scored at all.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .grid import Grid, GridCell, resource_value

BENEFIT = "benefit"
COST = "cost"

WATER_CRITERIA = ("volume", "stress", "quality_risk", "industrial_ratio", "suppliers")
WATER_DIRECTIONS = (BENEFIT, COST, COST, BENEFIT, BENEFIT)
LAND_CRITERIA = ("area", "biodiversity", "connectivity", "habitat", "resilience")
LAND_DIRECTIONS = (BENEFIT, COST, COST, COST, COST)


class ScoringError(ValueError):
    pass


def validate_weights(weights: dict[str, float], expected=None) -> None:
    """Weights must be a simplex vector over exactly the expected keys."""
    if expected is not None:
        missing = set(expected) - set(weights)
        extra = set(weights) - set(expected)
        if missing or extra:
            raise ScoringError(
                f"weight keys mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
    for name, w in weights.items():
        if w < 0 or w > 1:
            raise ScoringError(f"weight {name!r} outside [0,1]: {w!r}")
    total = sum(weights.values())
    if abs(total - 1.0) > 1e-9:
        raise ScoringError(f"weights sum to {total!r}, expected 1")


def equal_weights(names) -> dict[str, float]:
    names = list(names)
    return {n: 1.0 / len(names) for n in names}


@dataclass
class FeatureMatrix:
    """Raw or normalized criteria values for a set of cells (cell_id order)."""

    cell_ids: list[int]
    columns: list[str]
    directions: list[str]
    values: np.ndarray  # (n_cells, n_columns) float64

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ScoringError("duplicate criterion names")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.cell_ids), len(self.columns)):
            raise ScoringError("feature matrix shape mismatch")


def impute_median(matrix: FeatureMatrix) -> FeatureMatrix:
    """Replace NaNs with the column median (0 when a column is all-NaN)."""
    values = matrix.values.copy()
    for j in range(values.shape[1]):
        col = values[:, j]
        mask = np.isnan(col)
        if mask.any():
            finite = col[~mask]
            col[mask] = np.median(finite) if finite.size else 0.0
    return FeatureMatrix(matrix.cell_ids, matrix.columns, matrix.directions, values)


def normalize(matrix: FeatureMatrix) -> FeatureMatrix:
    """Min-max each column to [0,1]; cost columns are flipped, constants map to 0.5."""
    if len(matrix.cell_ids) == 0:
        raise ScoringError("cannot normalize an empty feature matrix")
    values = matrix.values.copy()
    for j, direction in enumerate(matrix.directions):
        col = values[:, j]
        lo, hi = col.min(), col.max()
        if hi == lo:
            col[:] = 0.5
        else:
            col[:] = (col - lo) / (hi - lo)
        if direction == COST:
            col[:] = 1.0 - col
    return FeatureMatrix(matrix.cell_ids, matrix.columns, matrix.directions, values)


def mcda_score(matrix: FeatureMatrix, weights: dict[str, float]) -> dict[int, float]:
    """Weighted-sum score per cell over a normalized feature matrix."""
    validate_weights(weights, expected=matrix.columns)
    w = np.array([weights[c] for c in matrix.columns])
    scores = matrix.values @ w
    return dict(zip(matrix.cell_ids, scores.tolist()))


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_trace: list[float]


def _seeded_rng(seed: int, label: str = "") -> np.random.Generator:
    # Per-agent streams: the label folds into the seed material so adding an
    # agent never perturbs another agent's draws.
    material = [int(seed)]
    if label:
        material.append(zlib.crc32(label.encode()))
    return np.random.default_rng(material)


def kmeans(values: np.ndarray, k: int, seed, max_iter: int = 100) -> KMeansResult:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Deterministic for fixed (values, k, seed). An empty cluster is re-seeded
    at the point farthest from its assigned centroid (lowest index on ties).
    `seed` may be an int or a prepared numpy Generator.
    """
    x = np.asarray(values, dtype=float)
    n = x.shape[0]
    if k < 1:
        raise ScoringError(f"k must be >= 1, got {k}")
    if k > n:
        raise ScoringError(f"k={k} exceeds the {n} available rows")
    if max_iter < 1:
        raise ScoringError("max_iter must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else _seeded_rng(seed)

    centroids = np.empty((k, x.shape[1]))
    centroids[0] = x[rng.integers(n)]
    d2 = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = rng.choice(n, p=d2 / total)
        else:
            idx = rng.integers(n)
        centroids[j] = x[idx]
        d2 = np.minimum(d2, ((x - centroids[j]) ** 2).sum(axis=1))

    labels = np.full(n, -1)
    inertia = 0.0
    trace: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        dists = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        inertia = float(dists[np.arange(n), new_labels].sum())
        trace.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        taken = np.zeros(n, dtype=bool)
        for j in range(k):
            members = x[labels == j]
            if len(members):
                centroids[j] = members.mean(axis=0)
            else:
                own = dists[np.arange(n), labels].copy()
                own[taken] = -1.0
                far = int(own.argmax())
                centroids[j] = x[far]
                taken[far] = True
    return KMeansResult(labels, centroids, inertia, iterations, trace)


@dataclass
class AgentScores:
    """Scores for the cells an agent deems eligible (and only those)."""

    scores: dict[int, float]
    eligible: set[int]


@dataclass
class AgentScoreSet:
    energy: AgentScores
    water: AgentScores
    land: AgentScores
    community: AgentScores

    def agent(self, name: str) -> AgentScores:
        return getattr(self, name)


def _minmax_scores(cell_ids: list[int], raw: list[float]) -> dict[int, float]:
    lo, hi = min(raw), max(raw)
    if hi == lo:
        return {c: 0.5 for c in cell_ids}
    return {c: (v - lo) / (hi - lo) for c, v in zip(cell_ids, raw)}


def score_energy_agent(grid: Grid, pathway, scenario) -> AgentScores:
    """Rank cells by the pathway's resource layer, within its siting mask."""
    eligible, potential = [], []
    for cell in grid.cells:
        if pathway.siting_mask and not getattr(cell, pathway.siting_mask):
            continue
        value = resource_value(cell, pathway.resource_category)
        if value > 0:
            eligible.append(cell.cell_id)
            potential.append(value)
    if not eligible:
        return AgentScores({}, set())
    return AgentScores(_minmax_scores(eligible, potential), set(eligible))


def _weighted_mean(pairs: list[tuple[float, float]]) -> float:
    total = sum(w for _, w in pairs)
    if total == 0:
        return float(np.mean([v for v, _ in pairs])) if pairs else 0.0
    return sum(v * w for v, w in pairs) / total


def water_features(grid: Grid, allowed_sources) -> FeatureMatrix:
    """Per-cell water criteria over the allowed sources (volume-weighted blends)."""
    sources = [s for s in ("urban", "rural", "transfer", "recycled") if s in allowed_sources]
    cell_ids, rows = [], []
    for cell in grid.cells:
        volume = cell.water_total(sources)
        if volume <= 0:
            continue

        def blend(feat):
            return _weighted_mean(
                [(cell.water_features[s][feat], cell.water_available[s]) for s in sources]
            )

        rows.append(
            [
                volume,
                blend("stress"),
                blend("quality_risk"),
                blend("industrial_ratio"),
                sum(cell.water_features[s]["suppliers"] for s in sources),
            ]
        )
        cell_ids.append(cell.cell_id)
    values = np.array(rows).reshape(len(cell_ids), len(WATER_CRITERIA))
    return FeatureMatrix(cell_ids, list(WATER_CRITERIA), list(WATER_DIRECTIONS), values)


def land_features(grid: Grid, allowed_types) -> FeatureMatrix:
    """Per-cell land criteria: convertible area vs. ecological value at stake."""
    cell_ids, rows = [], []
    for cell in grid.cells:
        area = cell.land_total(allowed_types)
        if area <= 0:
            continue
        eco = cell.ecological
        rows.append(
            [area, eco["biodiversity"], eco["connectivity"], eco["habitat"], eco["resilience"]]
        )
        cell_ids.append(cell.cell_id)
    values = np.array(rows).reshape(len(cell_ids), len(LAND_CRITERIA))
    return FeatureMatrix(cell_ids, list(LAND_CRITERIA), list(LAND_DIRECTIONS), values)


def cluster_mcda(
    matrix: FeatureMatrix,
    weights: dict[str, float],
    k: int,
    rng: np.random.Generator,
    cluster_blend: float,
) -> dict[int, float]:
    """Cluster-then-score pipeline shared by the water and land agents.

    Cells are clustered on their normalized features; clusters are ranked by
    the MCDA score of their centroid, and each cell's final score blends its
    own MCDA score with its cluster's normalized rank.
    """
    norm = normalize(impute_median(matrix))
    own = mcda_score(norm, weights)
    n = len(norm.cell_ids)
    k_eff = max(1, min(k, n))
    result = kmeans(norm.values, k_eff, rng)
    w = np.array([weights[c] for c in norm.columns])
    centroid_scores = result.centroids @ w
    # Rank clusters best-first; ties break on the lower cluster index.
    order = sorted(range(k_eff), key=lambda j: (-centroid_scores[j], j))
    rank_score = np.empty(k_eff)
    for pos, j in enumerate(order):
        rank_score[j] = 1.0 - pos / (k_eff - 1) if k_eff > 1 else 1.0
    blended = {}
    for i, cell_id in enumerate(norm.cell_ids):
        cluster_part = rank_score[result.labels[i]]
        blended[cell_id] = (1.0 - cluster_blend) * own[cell_id] + cluster_blend * cluster_part
    return blended


def score_water_agent(grid: Grid, scenario) -> AgentScores:
    matrix = water_features(grid, scenario.allowed_water_sources)
    if not matrix.cell_ids:
        return AgentScores({}, set())
    scores = cluster_mcda(
        matrix,
        scenario.criterion_weights_for("water", WATER_CRITERIA),
        scenario.k,
        _seeded_rng(scenario.seed, "water"),
        scenario.cluster_blend,
    )
    return AgentScores(scores, set(matrix.cell_ids))


def score_land_agent(grid: Grid, scenario) -> AgentScores:
    matrix = land_features(grid, scenario.allowed_land_types)
    if not matrix.cell_ids:
        return AgentScores({}, set())
    scores = cluster_mcda(
        matrix,
        scenario.criterion_weights_for("land", LAND_CRITERIA),
        scenario.k,
        _seeded_rng(scenario.seed, "land"),
        scenario.cluster_blend,
    )
    return AgentScores(scores, set(matrix.cell_ids))


def score_community_agent(grid: Grid, scenario) -> AgentScores:
    """Score every cell by how lightly burdened it is (1 = least burdened).

    Burden indicators carry the cost direction, so the normalized flip makes
    the weighted sum equal 1 minus the weighted burden.
    """
    n_burden = max((len(c.community) for c in grid.cells), default=0)
    cell_ids = grid.cell_ids()
    if n_burden == 0:
        return AgentScores({c: 0.5 for c in cell_ids}, set(cell_ids))
    columns = [f"burden_{i}" for i in range(1, n_burden + 1)]
    values = np.array(
        [[c.community[i] if i < len(c.community) else 0.0 for i in range(n_burden)] for c in grid.cells]
    )
    matrix = FeatureMatrix(cell_ids, columns, [COST] * n_burden, values)
    weights = scenario.criterion_weights_for("community", columns)
    scores = mcda_score(normalize(impute_median(matrix)), weights)
    return AgentScores(scores, set(cell_ids))


def score_all_agents(grid: Grid, pathway, scenario) -> AgentScoreSet:
    """All four agents against the current grid state, in one pass."""
    return AgentScoreSet(
        energy=score_energy_agent(grid, pathway, scenario),
        water=score_water_agent(grid, scenario),
        land=score_land_agent(grid, scenario),
        community=score_community_agent(grid, scenario),
    )
