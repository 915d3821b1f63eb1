"""Declarative run configuration: constraint masks, weights, and algorithm knobs.

A scenario is a YAML key-value tree; unknown keys are rejected outright so a
typo cannot silently fall back to a default. Two presets ship with the
package: "baseline" (urban water, urban open space or barren land only) and
"unconstrained".
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from importlib import resources

import yaml

from .grid import LAND_TYPES, WATER_SOURCES, resource_value
from .scoring import equal_weights, validate_weights

WALK_POLICIES = ("deploy_at_first_acceptable", "exhaust_for_full_fit")
AGENTS = ("energy", "water", "land", "community")

PRESETS = ("baseline", "unconstrained")


class ScenarioError(ValueError):
    pass


def load_criteria_manifest() -> dict[str, dict[str, dict[str, str]]]:
    """Shipped criteria manifest: agent -> criterion -> {direction, default_weight}."""
    text = resources.files("sitesim.data").joinpath("criteria.csv").read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    manifest: dict[str, dict[str, dict[str, str]]] = {}
    for row in csv.DictReader(lines):
        manifest.setdefault(row["agent"], {})[row["criterion"]] = {
            "direction": row["direction"],
            "default_weight": row["default_weight"],
        }
    return manifest


@dataclass
class ScenarioConfig:
    allowed_water_sources: list[str] = field(
        default_factory=lambda: list(WATER_SOURCES)
    )
    allowed_land_types: list[str] = field(default_factory=lambda: list(LAND_TYPES))
    agent_weights: dict[str, float] = field(
        default_factory=lambda: {a: 0.25 for a in AGENTS}
    )
    criterion_weights: dict[str, dict[str, float]] = field(default_factory=dict)
    k: int = 5
    seed: int = 0
    capacity_factor: float = 0.35
    min_fraction: float = 0.1
    max_relocations: int = 50
    walk_policy: str = "deploy_at_first_acceptable"
    capture_composition: bool = True
    dle_dac_grid_burden: bool = True
    cluster_blend: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.allowed_water_sources:
            raise ScenarioError("allowed_water_sources: must name at least one source")
        if not self.allowed_land_types:
            raise ScenarioError("allowed_land_types: must name at least one land type")
        for src in self.allowed_water_sources:
            if src not in WATER_SOURCES:
                raise ScenarioError(f"allowed_water_sources: unknown source {src!r}")
        for lt in self.allowed_land_types:
            if lt not in LAND_TYPES:
                raise ScenarioError(f"allowed_land_types: unknown land type {lt!r}")
        try:
            validate_weights(self.agent_weights, expected=AGENTS)
        except ValueError as exc:
            raise ScenarioError(f"agent_weights: {exc}") from None
        for agent, weights in self.criterion_weights.items():
            if agent not in AGENTS:
                raise ScenarioError(f"criterion_weights: unknown agent {agent!r}")
            try:
                validate_weights(weights)
            except ValueError as exc:
                raise ScenarioError(f"criterion_weights.{agent}: {exc}") from None
        if self.k < 1:
            raise ScenarioError(f"k: must be >= 1, got {self.k}")
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ScenarioError(f"seed: must be a non-negative integer, got {self.seed!r}")
        if self.capacity_factor <= 0 or self.capacity_factor > 1:
            raise ScenarioError(f"capacity_factor: must be in (0,1], got {self.capacity_factor!r}")
        if not 0 < self.min_fraction <= 1:
            raise ScenarioError(f"min_fraction: must be in (0,1], got {self.min_fraction!r}")
        if self.max_relocations < 0:
            raise ScenarioError("max_relocations: must be >= 0")
        if self.walk_policy not in WALK_POLICIES:
            raise ScenarioError(f"walk_policy: unknown policy {self.walk_policy!r}")
        if not 0 <= self.cluster_blend <= 1:
            raise ScenarioError(f"cluster_blend: must be in [0,1], got {self.cluster_blend!r}")

    def criterion_weights_for(self, agent: str, columns) -> dict[str, float]:
        """Resolved per-criterion weights for an agent, defaulting to equal."""
        columns = list(columns)
        override = self.criterion_weights.get(agent)
        if override is not None:
            validate_weights(override, expected=columns)
            return dict(override)
        return equal_weights(columns)

    def as_dict(self) -> dict:
        return {
            "allowed_water_sources": list(self.allowed_water_sources),
            "allowed_land_types": list(self.allowed_land_types),
            "agent_weights": dict(self.agent_weights),
            "criterion_weights": {a: dict(w) for a, w in self.criterion_weights.items()},
            "k": self.k,
            "seed": self.seed,
            "capacity_factor": self.capacity_factor,
            "min_fraction": self.min_fraction,
            "max_relocations": self.max_relocations,
            "walk_policy": self.walk_policy,
            "capture_composition": self.capture_composition,
            "dle_dac_grid_burden": self.dle_dac_grid_burden,
            "cluster_blend": self.cluster_blend,
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.as_dict(), sort_keys=True)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_yaml())


_FIELD_NAMES = {f.name for f in fields(ScenarioConfig)}


def _from_mapping(data: dict) -> ScenarioConfig:
    unknown = set(data) - _FIELD_NAMES
    if unknown:
        raise ScenarioError(f"unknown scenario keys: {sorted(unknown)}")
    return ScenarioConfig(**data)


def load_scenario(path) -> ScenarioConfig:
    """Load a scenario file; an empty file resolves to the documented defaults."""
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: scenario file must be a key-value mapping")
    return _from_mapping(data)


def load_preset(name: str) -> ScenarioConfig:
    if name not in PRESETS:
        raise ScenarioError(f"unknown preset {name!r}; shipped presets: {PRESETS}")
    text = resources.files("sitesim.data").joinpath(f"scenarios/{name}.yaml").read_text()
    data = yaml.safe_load(text) or {}
    return _from_mapping(data)


def resolve_scenario(spec: str | None) -> ScenarioConfig:
    """Accept a preset name or a file path; None means all defaults."""
    if spec is None:
        return ScenarioConfig()
    if spec in PRESETS:
        return load_preset(spec)
    return load_scenario(spec)


def eligibility_mask(scenario: ScenarioConfig, grid, pathway) -> set[int]:
    """Cells satisfying every siting constraint relevant to the pathway.

    Intersection of: positive allowed-source water, positive allowed-type
    land, the pathway's candidate flag (when it has one), and positive
    potential in the pathway's own resource layer.
    """
    mask = set()
    for cell in grid.cells:
        if cell.water_total(scenario.allowed_water_sources) <= 0:
            continue
        if cell.land_total(scenario.allowed_land_types) <= 0:
            continue
        if pathway.siting_mask and not getattr(cell, pathway.siting_mask):
            continue
        if resource_value(cell, pathway.resource_category) <= 0:
            continue
        mask.add(cell.cell_id)
    return mask
