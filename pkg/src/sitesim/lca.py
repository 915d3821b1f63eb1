"""Production-stage impact inventory for energy-transition pathways.

Converts (pathway, capacity) into a (water, land, energy, carbon) impact
vector from the shipped conversion-factor table, totals a whole portfolio,
and screens a portfolio against regional resource limits. Everything here
is a pure function of its inputs; impacts are annual rates (m3/yr, MWh/yr,
tonnes/yr) with land as the facility footprint in m2.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, replace
from importlib import resources

HOURS_PER_YEAR = 8760
DEFAULT_CAPACITY_FACTOR = 0.35
FEASIBILITY_RTOL = 1e-9

DIMENSIONS = ("water_m3", "land_m2", "energy_mwh", "carbon_t")

PATHWAY_IDS = (
    "geothermal",
    "agfo_residue",
    "animal_waste",
    "msw_dc",
    "msw_ad",
    "msw_lfg",
    "h2_wind",
    "h2_solar",
    "dle",
    "dac",
)
WTE_PATHWAYS = frozenset({"agfo_residue", "animal_waste", "msw_dc", "msw_ad", "msw_lfg"})
HYDROGEN_PATHWAYS = frozenset({"h2_wind", "h2_solar"})
TONNE_PATHWAYS = frozenset({"dle", "dac"})

# id -> (functional unit, siting mask flag, feedstock/resource layer, draws grid power)
_PATHWAY_META = {
    "geothermal": ("MW", "geothermal_candidate", "energy_geothermal", False),
    "agfo_residue": ("MW", None, "feed_agfo", False),
    "animal_waste": ("MW", None, "feed_aw", False),
    "msw_dc": ("MW", None, "feed_msw", False),
    "msw_ad": ("MW", None, "feed_msw", False),
    "msw_lfg": ("MW", None, "feed_msw", False),
    "h2_wind": ("MW", None, "energy_wind", False),
    "h2_solar": ("MW", None, "energy_solar", False),
    "dle": ("tonne_per_yr", None, "energy_geothermal", True),
    "dac": ("tonne_per_yr", "dac_candidate", "grid_energy", True),
}


class InventoryError(ValueError):
    """Bad factor table, portfolio file, or pathway definition."""


@dataclass(frozen=True)
class ImpactVector:
    """Annualised (water, land, energy, carbon) demand of a deployment."""

    water_m3: float = 0.0
    land_m2: float = 0.0
    energy_mwh: float = 0.0
    carbon_t: float = 0.0

    def __add__(self, other: "ImpactVector") -> "ImpactVector":
        return ImpactVector(
            self.water_m3 + other.water_m3,
            self.land_m2 + other.land_m2,
            self.energy_mwh + other.energy_mwh,
            self.carbon_t + other.carbon_t,
        )

    def scaled(self, a: float) -> "ImpactVector":
        return ImpactVector(
            a * self.water_m3, a * self.land_m2, a * self.energy_mwh, a * self.carbon_t
        )

    def as_dict(self) -> dict[str, float]:
        return {d: getattr(self, d) for d in DIMENSIONS}

    @staticmethod
    def total(vectors) -> "ImpactVector":
        vectors = list(vectors)
        return ImpactVector(
            *(math.fsum(getattr(v, d) for v in vectors) for d in DIMENSIONS)
        )


@dataclass(frozen=True)
class ConversionFactors:
    """Per-pathway factors; bases record what each factor multiplies."""

    water: float
    water_basis: str  # per_mw | per_tonne
    land: float
    land_basis: str  # per_mw | per_tonne | per_site
    energy: float  # MWh per tonne of annual product
    carbon: float  # tonnes per MW of capacity
    h2_specific_energy: float = 0.0  # MWh per tonne of H2, hydrogen routes only


@dataclass(frozen=True)
class CaptureFactors:
    """Post-combustion capture burden per tonne of CO2 handled."""

    water_per_tonne: float
    energy_per_tonne: float


@dataclass(frozen=True)
class PathwaySpec:
    id: str
    functional_unit: str  # "MW" | "tonne_per_yr"
    proposed_capacity: float
    factors: ConversionFactors
    requires_grid_energy: bool = False
    siting_mask: str | None = None
    resource_category: str = ""

    def __post_init__(self):
        # Ingested portfolios must carry positive capacities (load_portfolio
        # enforces that); regional screening may legitimately scale one to 0.
        if self.proposed_capacity < 0:
            raise InventoryError(
                f"{self.id}: proposed capacity must be non-negative, got {self.proposed_capacity!r}"
            )


@dataclass(frozen=True)
class Portfolio:
    pathways: tuple[PathwaySpec, ...]

    def __post_init__(self):
        ids = [p.id for p in self.pathways]
        if len(set(ids)) != len(ids):
            raise InventoryError("portfolio has duplicate pathway ids")

    def __iter__(self):
        return iter(self.pathways)

    def __len__(self):
        return len(self.pathways)

    def get(self, pathway_id: str) -> PathwaySpec:
        for p in self.pathways:
            if p.id == pathway_id:
                return p
        raise InventoryError(f"no pathway {pathway_id!r} in portfolio")


def _data_text(name: str) -> str:
    return resources.files("sitesim.data").joinpath(name).read_text()


def _read_data_rows(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    return list(csv.DictReader(lines))


def factors_version_hash() -> str:
    """Hash of the shipped factor table; surfaced by the CLI --version flag."""
    return hashlib.sha256(_data_text("conversion_factors.csv").encode()).hexdigest()[:12]


def load_factors(path=None) -> tuple[dict[str, ConversionFactors], CaptureFactors]:
    """Load the conversion-factor table (shipped data file by default)."""
    text = open(path).read() if path else _data_text("conversion_factors.csv")
    table: dict[str, ConversionFactors] = {}
    capture = None
    for row in _read_data_rows(text):
        name = row["pathway"].strip()
        water = float(row["water_factor"])
        energy = float(row["energy_factor"])
        if name == "post_combustion_capture":
            capture = CaptureFactors(water_per_tonne=water, energy_per_tonne=energy)
            continue
        water_basis = {"m3_per_mw": "per_mw", "m3_per_tonne": "per_tonne"}.get(
            row["water_unit"].strip()
        )
        if water_basis is None:
            raise InventoryError(f"{name}: unknown water unit {row['water_unit']!r}")
        land_basis = row["land_basis"].strip()
        if land_basis not in ("per_mw", "per_tonne", "per_site"):
            raise InventoryError(f"{name}: unknown land basis {land_basis!r}")
        factors = ConversionFactors(
            water=water,
            water_basis=water_basis,
            land=float(row["land_factor"]),
            land_basis=land_basis,
            energy=energy,
            carbon=float(row["carbon_factor"]),
            h2_specific_energy=energy if name in HYDROGEN_PATHWAYS else 0.0,
        )
        if min(factors.water, factors.land, factors.energy, factors.carbon) < 0:
            raise InventoryError(f"{name}: conversion factors must be non-negative")
        if land_basis == "per_site" and name not in WTE_PATHWAYS:
            raise InventoryError(f"{name}: per-site land basis is reserved for waste-to-energy")
        table[name] = factors
    if capture is None:
        raise InventoryError("factor table is missing the post_combustion_capture row")
    return table, capture


def make_pathway(pathway_id: str, capacity: float, factors: ConversionFactors) -> PathwaySpec:
    try:
        unit, mask, category, grid_power = _PATHWAY_META[pathway_id]
    except KeyError:
        raise InventoryError(f"unknown pathway id {pathway_id!r}") from None
    return PathwaySpec(
        id=pathway_id,
        functional_unit=unit,
        proposed_capacity=capacity,
        factors=factors,
        requires_grid_energy=grid_power,
        siting_mask=mask,
        resource_category=category,
    )


def load_portfolio(path=None) -> Portfolio:
    """Load a (pathway, capacity, unit) CSV; shipped default portfolio when no path."""
    text = open(path).read() if path else _data_text("default_portfolio.csv")
    table, _ = load_factors()
    pathways = []
    for row in _read_data_rows(text):
        pathway_id = row["pathway"].strip()
        if pathway_id not in table:
            raise InventoryError(f"portfolio names unknown pathway {pathway_id!r}")
        capacity = float(row["capacity"])
        if capacity <= 0:
            raise InventoryError(f"{pathway_id}: portfolio capacity must be positive")
        spec = make_pathway(pathway_id, capacity, table[pathway_id])
        unit = row.get("unit", "").strip()
        if unit and unit != spec.functional_unit:
            raise InventoryError(
                f"{pathway_id}: portfolio unit {unit!r} does not match "
                f"functional unit {spec.functional_unit!r}"
            )
        pathways.append(spec)
    return Portfolio(tuple(pathways))


def default_portfolio() -> Portfolio:
    return load_portfolio()


def annual_throughput(
    pathway: PathwaySpec, capacity: float, capacity_factor: float = DEFAULT_CAPACITY_FACTOR
) -> float:
    """Annual product in tonnes/yr for tonne-based factors, else the capacity.

    Hydrogen capacity is quoted in MW, so it is bridged to tonnes/yr via
    generation hours and the route's specific energy.
    """
    if capacity < 0:
        raise InventoryError(f"{pathway.id}: capacity must be non-negative")
    if pathway.id in HYDROGEN_PATHWAYS:
        return capacity * HOURS_PER_YEAR * capacity_factor / pathway.factors.h2_specific_energy
    return capacity


def pathway_impact(
    pathway: PathwaySpec,
    capacity: float,
    *,
    capacity_factor: float = DEFAULT_CAPACITY_FACTOR,
    capture: CaptureFactors | None = None,
    open_site: bool | None = None,
) -> ImpactVector:
    """Impact vector of deploying `capacity` of a pathway at one facility.

    Per-MW and per-tonne factors scale linearly with capacity; a per-site
    land footprint is charged once per opened facility (open_site defaults
    to "a site opens iff capacity > 0"). Passing `capture` composes
    post-combustion capture onto waste-to-energy pathways: its water and
    energy factors apply to the pathway's annual carbon inventory, which is
    reported unchanged as the mass handled.
    """
    f = pathway.factors
    throughput = annual_throughput(pathway, capacity, capacity_factor)
    water = f.water * (throughput if f.water_basis == "per_tonne" else capacity)
    if f.land_basis == "per_site":
        opened = capacity > 0 if open_site is None else open_site
        land = f.land if opened else 0.0
    elif f.land_basis == "per_tonne":
        land = f.land * throughput
    else:
        land = f.land * capacity
    energy = f.energy * throughput
    carbon = f.carbon * capacity if pathway.functional_unit == "MW" else 0.0
    if capture is not None and pathway.id in WTE_PATHWAYS:
        water += capture.water_per_tonne * carbon
        energy += capture.energy_per_tonne * carbon
    return ImpactVector(water_m3=water, land_m2=land, energy_mwh=energy, carbon_t=carbon)


@dataclass(frozen=True)
class PortfolioImpacts:
    by_pathway: dict[str, ImpactVector]
    total: ImpactVector


def portfolio_impacts(
    portfolio: Portfolio,
    *,
    capacity_factor: float = DEFAULT_CAPACITY_FACTOR,
    capture: CaptureFactors | None = None,
) -> PortfolioImpacts:
    """Per-pathway impacts at proposed capacities plus the grand total."""
    by_pathway = {
        p.id: pathway_impact(
            p, p.proposed_capacity, capacity_factor=capacity_factor, capture=capture
        )
        for p in portfolio
    }
    return PortfolioImpacts(by_pathway, ImpactVector.total(by_pathway.values()))


@dataclass(frozen=True)
class RegionalLimits:
    """Aggregate regional availability; None leaves a dimension unconstrained."""

    water_m3: float | None = None
    land_m2: float | None = None
    energy_mwh: float | None = None
    carbon_t: float | None = None

    def get(self, dimension: str) -> float | None:
        return getattr(self, dimension)


@dataclass
class ScreeningResult:
    portfolio: Portfolio
    scale: float
    binding: list[str]
    demand_before: ImpactVector
    demand_after: ImpactVector

    @property
    def feasible_before(self) -> bool:
        return self.scale == 1.0


def _within_limit(demand: float, limit: float) -> bool:
    return demand <= limit + FEASIBILITY_RTOL * max(abs(demand), abs(limit))


def regional_screen(
    portfolio: Portfolio,
    limits: RegionalLimits,
    *,
    capacity_factor: float = DEFAULT_CAPACITY_FACTOR,
    capture: CaptureFactors | None = None,
) -> ScreeningResult:
    """Scale the whole portfolio uniformly so regional limits are respected.

    The scale is the minimum over binding dimensions of the largest factor
    that fits: availability/demand for capacity-proportional demand, and
    (availability - fixed)/variable where per-site land footprints leave a
    fixed part. A scale of 0 closes every site, so fixed footprints drop
    with it. Screening an already-feasible portfolio is a no-op, which makes
    the operation idempotent.
    """
    impacts = portfolio_impacts(portfolio, capacity_factor=capacity_factor, capture=capture)
    demand = impacts.total
    fixed_land = math.fsum(
        p.factors.land
        for p in portfolio
        if p.factors.land_basis == "per_site" and p.proposed_capacity > 0
    )
    fixed = {d: (fixed_land if d == "land_m2" else 0.0) for d in DIMENSIONS}

    binding: list[str] = []
    scale = 1.0
    for d in DIMENSIONS:
        limit = limits.get(d)
        total = getattr(demand, d)
        if limit is None or _within_limit(total, limit):
            continue
        binding.append(d)
        variable = total - fixed[d]
        if variable > 0:
            s_d = max(0.0, (limit - fixed[d]) / variable)
        else:
            s_d = 0.0
        scale = min(scale, s_d)

    if not binding:
        return ScreeningResult(portfolio, 1.0, [], demand, demand)

    scaled = Portfolio(
        tuple(replace(p, proposed_capacity=p.proposed_capacity * scale) for p in portfolio)
    )
    after = portfolio_impacts(scaled, capacity_factor=capacity_factor, capture=capture).total
    return ScreeningResult(scaled, scale, binding, demand, after)
