"""Integrated site ranking and the deploy / scale-down / relocate walk.

The four agent score sets are fused into one ranking per pathway; the walk
then visits cells best-first, asking at each one whether the site's live
resources can carry the requested capacity, a scaled-down slice of it, or
nothing. Deployments debit the grid atomically, so later pathways compete
for what is left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .grid import Grid, GridCell
from .lca import ImpactVector, PathwaySpec, Portfolio, pathway_impact
from .scenario import AGENTS, ScenarioConfig
from .scoring import AgentScoreSet, score_all_agents, validate_weights

_WATER_LAYER = {"urban": "water_urban", "rural": "water_rural",
                "transfer": "water_transfer", "recycled": "water_recycled"}
_LAND_LAYER = {"urban_open_space": "land_urban_open", "barren": "land_barren",
               "other": "land_other"}


@dataclass(frozen=True)
class Deploy:
    capacity: float


@dataclass(frozen=True)
class ScaleDown:
    from_capacity: float
    to_capacity: float


@dataclass(frozen=True)
class Relocate:
    next_cell: int


@dataclass(frozen=True)
class Reject:
    residual: float


@dataclass
class IntegratedRanking:
    """Cells eligible for every resource agent, best score first."""

    entries: list[tuple[int, float]]
    agent_weights: dict[str, float]

    def cells(self) -> list[int]:
        return [cell_id for cell_id, _ in self.entries]


@dataclass
class SiteFit:
    """Site-level comparison of demand against one cell's live resources."""

    impact: ImpactVector
    ratios: dict[str, float]  # water/land/energy -> available/demand (inf if no demand)
    binding: str | None
    feasible: bool
    max_capacity: float  # largest capacity the cell can host now, capped at requested


@dataclass
class DeploymentRecord:
    pathway_id: str
    cell_id: int | None
    requested_capacity: float
    deployed_capacity: float
    site_impact: ImpactVector
    decision_trace: list[tuple[int | None, object]]
    step: int

    @property
    def residual(self) -> float:
        return self.requested_capacity - self.deployed_capacity


@dataclass(frozen=True)
class WalkPolicy:
    min_fraction: float = 0.1
    max_relocations: int = 50
    policy: str = "deploy_at_first_acceptable"

    @staticmethod
    def from_scenario(scenario: ScenarioConfig) -> "WalkPolicy":
        return WalkPolicy(
            min_fraction=scenario.min_fraction,
            max_relocations=scenario.max_relocations,
            policy=scenario.walk_policy,
        )


def capacity_quantum(pathway: PathwaySpec) -> float:
    """Scale-downs land on whole MW, or whole thousands of tonnes per year."""
    return 1.0 if pathway.functional_unit == "MW" else 1000.0


def integrate(
    scores: AgentScoreSet, agent_weights: dict[str, float], pathway: PathwaySpec
) -> IntegratedRanking:
    """Weighted fusion of the four agent scores into one descending ranking.

    Only cells eligible for all three resource agents are ranked; ties break
    toward the lower cell id. An empty ranking is a valid outcome and leads
    to rejection downstream.
    """
    validate_weights(agent_weights, expected=AGENTS)
    eligible = scores.energy.eligible & scores.water.eligible & scores.land.eligible
    entries = []
    for cell_id in eligible:
        total = sum(agent_weights[a] * scores.agent(a).scores[cell_id] for a in AGENTS)
        entries.append((cell_id, total))
    entries.sort(key=lambda e: (-e[1], e[0]))
    return IntegratedRanking(entries, dict(agent_weights))


def _site_impact(pathway, capacity, scenario, factors_capture):
    return pathway_impact(
        pathway,
        capacity,
        capacity_factor=scenario.capacity_factor,
        capture=factors_capture if scenario.capture_composition else None,
    )


def evaluate_site(
    pathway: PathwaySpec,
    capacity: float,
    cell: GridCell,
    grid: Grid,
    scenario: ScenarioConfig,
    capture=None,
) -> SiteFit:
    """Fit of one (pathway, capacity) against one cell's available resources.

    Compared dimensions are allowed-source water, allowed-type land, and
    deliverable grid energy for pathways that draw on it. Fit ratios are
    available/demand (infinite when nothing is demanded); the binding
    dimension carries the smallest ratio. max_capacity accounts for the
    fact that a per-site land footprint does not shrink with capacity.
    """
    impact = _site_impact(pathway, capacity, scenario, capture)
    gate_energy = pathway.requires_grid_energy and scenario.dle_dac_grid_burden
    available = {
        "water": cell.water_total(scenario.allowed_water_sources),
        "land": cell.land_total(scenario.allowed_land_types),
        "energy": cell.grid_energy_capacity,
    }
    demand = {
        "water": impact.water_m3,
        "land": impact.land_m2,
        "energy": impact.energy_mwh if gate_energy else 0.0,
    }
    ratios = {
        dim: (available[dim] / demand[dim] if demand[dim] > 0 else math.inf)
        for dim in ("water", "land", "energy")
    }
    finite = [(ratios[d], i, d) for i, d in enumerate(("water", "land", "energy"))
              if math.isfinite(ratios[d])]
    binding = min(finite)[2] if finite else None
    feasible = all(r >= 1.0 for r in ratios.values())

    caps = [capacity]
    for dim in ("water", "energy"):
        if demand[dim] > 0:
            caps.append(ratios[dim] * capacity)
    if demand["land"] > 0:
        if pathway.factors.land_basis == "per_site":
            # A fixed footprint either fits or it does not; no partial site.
            caps.append(capacity if ratios["land"] >= 1.0 else 0.0)
        else:
            caps.append(ratios["land"] * capacity)
    return SiteFit(impact, ratios, binding, feasible, max(0.0, min(caps)))


def _split_over_layers(total: float, buckets: list[tuple[str, float]]) -> dict[str, float] | None:
    """Drain `total` from the buckets in order; None if they cannot cover it."""
    out: dict[str, float] = {}
    remaining = total
    for layer, available in buckets:
        if remaining <= 0:
            break
        take = min(available, remaining)
        if take > 0:
            out[layer] = take
            remaining -= take
    if remaining > 0:
        return None
    return out


def site_demands(
    pathway: PathwaySpec,
    capacity: float,
    cell: GridCell,
    scenario: ScenarioConfig,
    capture=None,
) -> dict[str, float] | None:
    """Per-layer debit plan for a deployment, or None when the cell is short.

    Water drains allowed sources in canonical order (urban, rural, transfer,
    recycled), land drains allowed types in canonical order; grid energy is
    debited only for pathways that draw on it.
    """
    impact = _site_impact(pathway, capacity, scenario, capture)
    demands: dict[str, float] = {}
    water = _split_over_layers(
        impact.water_m3,
        [(_WATER_LAYER[s], cell.water_available[s])
         for s in _WATER_LAYER if s in scenario.allowed_water_sources],
    )
    if water is None:
        return None
    demands.update(water)
    land = _split_over_layers(
        impact.land_m2,
        [(_LAND_LAYER[t], cell.land_area[t])
         for t in _LAND_LAYER if t in scenario.allowed_land_types],
    )
    if land is None:
        return None
    demands.update(land)
    if pathway.requires_grid_energy and scenario.dle_dac_grid_burden:
        if impact.energy_mwh > cell.grid_energy_capacity:
            return None
        if impact.energy_mwh > 0:
            demands["grid_energy"] = impact.energy_mwh
    return demands


def transition_decide(
    pathway: PathwaySpec,
    capacity: float,
    ranking: IntegratedRanking,
    grid: Grid,
    scenario: ScenarioConfig,
    policy: WalkPolicy | None = None,
    capture=None,
    step: int = 0,
) -> DeploymentRecord:
    """Walk the ranking and deploy, scale down, relocate, or reject.

    Under deploy_at_first_acceptable (default) the walk settles at the first
    cell whose fit reaches min_fraction, scaling the capacity down to the
    cell's limit (floored to the pathway's capacity quantum). Under
    exhaust_for_full_fit it relocates past anything short of a full fit and
    rejects if none exists. Rejection is a result, not an error; deployed
    plus residual always equals the request.
    """
    policy = policy or WalkPolicy.from_scenario(scenario)
    quantum = capacity_quantum(pathway)
    cells = ranking.cells()
    if capacity <= 0 or not cells:
        trace = [(None, Reject(capacity))]
        return DeploymentRecord(pathway.id, None, capacity, 0.0, ImpactVector(), trace, step)

    trace: list[tuple[int | None, object]] = []
    relocations = 0
    for idx, cell_id in enumerate(cells):
        cell = grid.cell(cell_id)
        fit = evaluate_site(pathway, capacity, cell, grid, scenario, capture=capture)
        if fit.feasible:
            target = capacity
        elif (
            policy.policy == "deploy_at_first_acceptable"
            and fit.max_capacity / capacity >= policy.min_fraction
        ):
            target = math.floor(fit.max_capacity / quantum) * quantum
        else:
            target = 0.0
        demands = None
        while target > 0:
            demands = site_demands(pathway, target, cell, scenario, capture=capture)
            if demands is not None:
                break
            target -= quantum
        if demands is not None and target > 0:
            impact = _site_impact(pathway, target, scenario, capture)
            grid.consume(cell_id, demands, step=step)
            if target < capacity:
                trace.append((cell_id, ScaleDown(capacity, target)))
            trace.append((cell_id, Deploy(target)))
            return DeploymentRecord(pathway.id, cell_id, capacity, target, impact, trace, step)
        if idx + 1 < len(cells) and relocations < policy.max_relocations:
            trace.append((cell_id, Relocate(cells[idx + 1])))
            relocations += 1
        else:
            trace.append((cell_id, Reject(capacity)))
            return DeploymentRecord(pathway.id, None, capacity, 0.0, ImpactVector(), trace, step)
    raise AssertionError("ranking walk fell through")  # pragma: no cover


def run_portfolio(
    portfolio: Portfolio,
    grid: Grid,
    scenario: ScenarioConfig,
    capture=None,
) -> tuple[list[DeploymentRecord], Grid]:
    """Site every pathway in order against the continuously updated grid.

    Each deployment's consumption is visible to all later pathways: agents
    are re-scored on the mutated grid before every attempt. Expects a
    portfolio that already passed regional screening.
    """
    records = []
    for step, pathway in enumerate(portfolio):
        scores = score_all_agents(grid, pathway, scenario)
        ranking = integrate(scores, scenario.agent_weights, pathway)
        record = transition_decide(
            pathway,
            pathway.proposed_capacity,
            ranking,
            grid,
            scenario,
            capture=capture,
            step=step,
        )
        records.append(record)
    return records, grid


def encode_trace(trace) -> str:
    """Wire format: `12:relocate|7:scaledown:0.8|7:deploy`; `-` marks no cell."""
    parts = []
    for cell_id, decision in trace:
        label = "-" if cell_id is None else str(cell_id)
        if isinstance(decision, Relocate):
            parts.append(f"{label}:relocate")
        elif isinstance(decision, ScaleDown):
            ratio = decision.to_capacity / decision.from_capacity
            parts.append(f"{label}:scaledown:{ratio!r}")
        elif isinstance(decision, Deploy):
            parts.append(f"{label}:deploy")
        elif isinstance(decision, Reject):
            parts.append(f"{label}:reject")
        else:  # pragma: no cover
            raise TypeError(f"unknown decision {decision!r}")
    return "|".join(parts)
