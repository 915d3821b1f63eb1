"""Shared resource pool: a 10-km cell grid of energy, water, land and community layers.

Cells are ingested from a flat CSV (one row per cell, documented header in
GRID_COLUMNS), mutated only through :meth:`Grid.consume`, and every mutation
is logged so the current state can be replayed exactly from the ingested
snapshot.
"""

from __future__ import annotations

import copy
import csv
import math
from dataclasses import dataclass, field

CELL_SIZE_KM = 10.0

ENERGY_CATEGORIES = ("wind", "solar", "geothermal", "ag_forest_residue", "animal_waste", "msw")
WATER_SOURCES = ("urban", "rural", "transfer", "recycled")
WATER_FEATURES = ("stress", "quality_risk", "industrial_ratio", "suppliers")
LAND_TYPES = ("urban_open_space", "barren", "other")
ECO_INDICES = ("biodiversity", "connectivity", "habitat", "resilience")

# Canonical column -> (cell attribute, key). Grid CSV schema version 1.
_ENERGY_COLUMNS = {
    "energy_wind": "wind",
    "energy_solar": "solar",
    "energy_geothermal": "geothermal",
    "feed_agfo": "ag_forest_residue",
    "feed_aw": "animal_waste",
    "feed_msw": "msw",
}
_WATER_COLUMNS = {f"water_{s}": s for s in WATER_SOURCES}
_LAND_COLUMNS = {
    "land_urban_open": "urban_open_space",
    "land_barren": "barren",
    "land_other": "other",
}
_ECO_COLUMNS = {f"eco_{i}": i for i in ECO_INDICES}
# Optional per-source water indicator columns, e.g. water_stress_urban.
_FEATURE_PREFIX = {
    "stress": "water_stress",
    "quality_risk": "water_quality",
    "industrial_ratio": "water_industrial",
    "suppliers": "water_suppliers",
}
_WATER_FEATURE_COLUMNS = {
    f"{_FEATURE_PREFIX[feat]}_{src}": (src, feat)
    for src in WATER_SOURCES
    for feat in WATER_FEATURES
}

GRID_SCHEMA_VERSION = 1
GRID_COLUMNS = (
    ["cell_id", "x_km", "y_km"]
    + list(_ENERGY_COLUMNS)
    + list(_WATER_COLUMNS)
    + list(_LAND_COLUMNS)
    + list(_ECO_COLUMNS)
    + ["grid_energy", "dac_candidate", "geothermal_candidate"]
)

BOOL_COLUMNS = ("dac_candidate", "geothermal_candidate")


class GridError(ValueError):
    """Malformed grid input or an operation against the grid contract."""


class UnknownLayerError(GridError):
    """A layer name that is not part of the grid schema."""


class InsufficientResourcesError(GridError):
    """Raised by consume() when any demanded resource is short; nothing is debited."""

    def __init__(self, cell_id: int, shortfalls: list[tuple[str, float, float]]):
        self.cell_id = cell_id
        self.shortfalls = shortfalls
        detail = "; ".join(
            f"{name}: need {need!r}, have {have!r}" for name, need, have in shortfalls
        )
        super().__init__(f"cell {cell_id}: insufficient {detail}")


@dataclass
class GridCell:
    """One 10-km cell with its resource, ecological and community layers."""

    cell_id: int
    x_km: float
    y_km: float
    energy_potential: dict[str, float] = field(default_factory=dict)
    water_available: dict[str, float] = field(default_factory=dict)
    water_features: dict[str, dict[str, float]] = field(default_factory=dict)
    land_area: dict[str, float] = field(default_factory=dict)
    ecological: dict[str, float] = field(default_factory=dict)
    community: list[float] = field(default_factory=list)
    grid_energy_capacity: float = 0.0
    dac_candidate: bool = False
    geothermal_candidate: bool = False

    def __post_init__(self):
        for cat in ENERGY_CATEGORIES:
            self.energy_potential.setdefault(cat, 0.0)
        for src in WATER_SOURCES:
            self.water_available.setdefault(src, 0.0)
            feats = self.water_features.setdefault(src, {})
            for f in WATER_FEATURES:
                feats.setdefault(f, 0.0)
        for lt in LAND_TYPES:
            self.land_area.setdefault(lt, 0.0)
        for idx in ECO_INDICES:
            self.ecological.setdefault(idx, 0.0)

    def water_total(self, sources) -> float:
        return sum(self.water_available[s] for s in sources)

    def land_total(self, land_types) -> float:
        return sum(self.land_area[t] for t in land_types)


def resource_value(cell: GridCell, name: str) -> float:
    """Current availability of a named layer (canonical column name)."""
    if name in _WATER_COLUMNS:
        return cell.water_available[_WATER_COLUMNS[name]]
    if name in _LAND_COLUMNS:
        return cell.land_area[_LAND_COLUMNS[name]]
    if name in _ENERGY_COLUMNS:
        return cell.energy_potential[_ENERGY_COLUMNS[name]]
    if name == "grid_energy":
        return cell.grid_energy_capacity
    if name in _ECO_COLUMNS:
        return cell.ecological[_ECO_COLUMNS[name]]
    raise UnknownLayerError(f"unknown layer {name!r}")


def set_resource_value(cell: GridCell, name: str, value: float) -> None:
    if name in _WATER_COLUMNS:
        cell.water_available[_WATER_COLUMNS[name]] = value
    elif name in _LAND_COLUMNS:
        cell.land_area[_LAND_COLUMNS[name]] = value
    elif name in _ENERGY_COLUMNS:
        cell.energy_potential[_ENERGY_COLUMNS[name]] = value
    elif name == "grid_energy":
        cell.grid_energy_capacity = value
    elif name in _ECO_COLUMNS:
        cell.ecological[_ECO_COLUMNS[name]] = value
    else:
        raise UnknownLayerError(f"unknown layer {name!r}")


@dataclass(frozen=True)
class LedgerEntry:
    """One signed availability change; consumption events carry negative deltas."""

    step: int
    cell_id: int
    resource: str
    delta: float


@dataclass
class AggregationReport:
    folded: int = 0
    out_of_bounds: int = 0


class Grid:
    """Ordered cell collection plus the append-only consumption ledger.

    The snapshot taken at ingestion (and re-taken after point aggregation)
    is the replay baseline: applying the ledger to it must reproduce the
    live availabilities exactly.
    """

    cell_size_km = CELL_SIZE_KM

    def __init__(self, cells: list[GridCell]):
        seen = set()
        for cell in cells:
            if cell.cell_id in seen:
                raise GridError(f"duplicate cell_id {cell.cell_id}")
            seen.add(cell.cell_id)
        self.cells: list[GridCell] = list(cells)
        self._by_id = {c.cell_id: c for c in self.cells}
        self.ledger: list[LedgerEntry] = []
        self._baseline = copy.deepcopy(self.cells)

    def __len__(self) -> int:
        return len(self.cells)

    def cell(self, cell_id: int) -> GridCell:
        try:
            return self._by_id[cell_id]
        except KeyError:
            raise GridError(f"no cell with id {cell_id}") from None

    def cell_ids(self) -> list[int]:
        return [c.cell_id for c in self.cells]

    def consume(self, cell_id: int, demands: dict[str, float], step: int = 0) -> None:
        """Atomically debit the demanded amounts from one cell.

        Every demand is checked before anything is debited; a single
        shortfall raises InsufficientResourcesError listing all short
        resources and leaves the grid untouched. Zero demands produce no
        ledger entries.
        """
        cell = self.cell(cell_id)
        cleaned = []
        for name in sorted(demands):
            amount = demands[name]
            if amount < 0:
                raise GridError(f"negative demand for {name!r}: {amount!r}")
            if amount == 0:
                continue
            cleaned.append((name, amount, resource_value(cell, name)))
        shortfalls = [(n, a, h) for n, a, h in cleaned if a > h]
        if shortfalls:
            raise InsufficientResourcesError(cell_id, shortfalls)
        for name, amount, have in cleaned:
            set_resource_value(cell, name, have - amount)
            self.ledger.append(LedgerEntry(step, cell_id, name, -amount))

    def rebaseline(self) -> None:
        """Reset the replay baseline to the current state and clear the ledger."""
        self._baseline = copy.deepcopy(self.cells)
        self.ledger = []

    def baseline_cells(self) -> list[GridCell]:
        return copy.deepcopy(self._baseline)

    def replay(self) -> "Grid":
        """Rebuild the grid by applying the ledger to the ingested snapshot."""
        grid = Grid(self.baseline_cells())
        for entry in self.ledger:
            cell = grid.cell(entry.cell_id)
            set_resource_value(
                cell, entry.resource, resource_value(cell, entry.resource) + entry.delta
            )
            grid.ledger.append(entry)
        return grid


def _parse_float(raw: str, row_no: int, column: str) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise GridError(f"row {row_no}, column {column}: not a number: {raw!r}") from None
    if math.isnan(value) or math.isinf(value):
        raise GridError(f"row {row_no}, column {column}: non-finite value {raw!r}")
    return value


def _parse_bool(raw: str, row_no: int, column: str) -> bool:
    token = raw.strip().lower()
    if token in ("1", "true", "yes"):
        return True
    if token in ("0", "false", "no", ""):
        return False
    raise GridError(f"row {row_no}, column {column}: not a boolean: {raw!r}")


def load_grid(path, schema: dict[str, str] | None = None) -> Grid:
    """Load a grid from a one-row-per-cell CSV.

    `schema` optionally maps canonical column names to the file's actual
    header names. Burden indicator columns are burden_1..burden_n; missing
    optional layers default to 0. Rejections name the offending row and
    column.
    """
    rename = schema or {}
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise GridError(f"{path}: empty grid file")
    header = [h.strip() for h in rows[0]]
    actual_to_canonical = {}
    for canonical in GRID_COLUMNS + list(_WATER_FEATURE_COLUMNS):
        actual_to_canonical[rename.get(canonical, canonical)] = canonical

    burden_cols: list[tuple[int, str]] = []
    col_index: dict[str, int] = {}
    for i, name in enumerate(header):
        if name.startswith("burden_"):
            try:
                burden_cols.append((int(name.split("_", 1)[1]), name))
            except ValueError:
                raise GridError(f"bad burden column name {name!r}") from None
            col_index[name] = i
        elif name in actual_to_canonical:
            col_index[actual_to_canonical[name]] = i
        else:
            raise GridError(f"unknown column {name!r} in grid header")
    for required in ("cell_id", "x_km", "y_km"):
        if required not in col_index:
            raise GridError(f"grid header is missing required column {required!r}")
    burden_cols.sort()

    def get(row, name, row_no, default=None):
        idx = col_index.get(name)
        if idx is None or idx >= len(row) or row[idx].strip() == "":
            return default
        return row[idx]

    cells = []
    for row_no, row in enumerate(rows[1:], start=2):
        cell_id = int(_parse_float(get(row, "cell_id", row_no, "nan"), row_no, "cell_id"))
        kwargs = dict(
            cell_id=cell_id,
            x_km=_parse_float(get(row, "x_km", row_no, "nan"), row_no, "x_km"),
            y_km=_parse_float(get(row, "y_km", row_no, "nan"), row_no, "y_km"),
        )
        energy, water, land, eco = {}, {}, {}, {}
        feats: dict[str, dict[str, float]] = {s: {} for s in WATER_SOURCES}
        for column, key in _ENERGY_COLUMNS.items():
            raw = get(row, column, row_no)
            energy[key] = _parse_float(raw, row_no, column) if raw is not None else 0.0
        for column, key in _WATER_COLUMNS.items():
            raw = get(row, column, row_no)
            water[key] = _parse_float(raw, row_no, column) if raw is not None else 0.0
        for column, key in _LAND_COLUMNS.items():
            raw = get(row, column, row_no)
            land[key] = _parse_float(raw, row_no, column) if raw is not None else 0.0
        for column, key in _ECO_COLUMNS.items():
            raw = get(row, column, row_no)
            eco[key] = _parse_float(raw, row_no, column) if raw is not None else 0.0
        for column, (src, feat) in _WATER_FEATURE_COLUMNS.items():
            raw = get(row, column, row_no)
            if raw is not None:
                feats[src][feat] = _parse_float(raw, row_no, column)
        burden = []
        for _, name in burden_cols:
            raw = get(row, name, row_no)
            burden.append(_parse_float(raw, row_no, name) if raw is not None else 0.0)
        grid_energy_raw = get(row, "grid_energy", row_no)
        grid_energy = (
            _parse_float(grid_energy_raw, row_no, "grid_energy")
            if grid_energy_raw is not None
            else 0.0
        )

        for column, value in [
            *((c, energy[k]) for c, k in _ENERGY_COLUMNS.items()),
            *((c, water[k]) for c, k in _WATER_COLUMNS.items()),
            *((c, land[k]) for c, k in _LAND_COLUMNS.items()),
            ("grid_energy", grid_energy),
        ]:
            if value < 0:
                raise GridError(
                    f"row {row_no}, column {column}: negative availability {value!r}"
                )
        for column, value in ((c, eco[k]) for c, k in _ECO_COLUMNS.items()):
            if not 0.0 <= value <= 1.0:
                raise GridError(
                    f"row {row_no}, column {column}: ecological index outside [0,1]: {value!r}"
                )
        for i, value in enumerate(burden, start=1):
            if value < 0:
                raise GridError(
                    f"row {row_no}, column burden_{i}: negative indicator {value!r}"
                )

        cells.append(
            GridCell(
                energy_potential=energy,
                water_available=water,
                water_features=feats,
                land_area=land,
                ecological=eco,
                community=burden,
                grid_energy_capacity=grid_energy,
                dac_candidate=_parse_bool(
                    get(row, "dac_candidate", row_no, "0"), row_no, "dac_candidate"
                ),
                geothermal_candidate=_parse_bool(
                    get(row, "geothermal_candidate", row_no, "0"),
                    row_no,
                    "geothermal_candidate",
                ),
                **kwargs,
            )
        )
    return Grid(cells)


def aggregate_points_to_grid(points, grid: Grid, mode: str = "sum") -> AggregationReport:
    """Fold (x_km, y_km, layer, value) points into their containing cells.

    mode "sum" adds point values onto the existing layer value; "mean"
    replaces the layer value with the mean of the points that landed in the
    cell. Out-of-bounds points are counted in the report, never folded.
    Aggregation is part of ingestion, so the replay baseline is re-taken.
    """
    if mode not in ("sum", "mean"):
        raise GridError(f"unknown aggregation mode {mode!r}")
    index = {
        (math.floor(c.x_km / CELL_SIZE_KM), math.floor(c.y_km / CELL_SIZE_KM)): c
        for c in grid.cells
    }
    buckets: dict[tuple[int, str], list[float]] = {}
    report = AggregationReport()
    for x_km, y_km, layer, value in points:
        cell = index.get((math.floor(x_km / CELL_SIZE_KM), math.floor(y_km / CELL_SIZE_KM)))
        if cell is None:
            report.out_of_bounds += 1
            continue
        resource_value(cell, layer)  # raises UnknownLayerError for bad names
        buckets.setdefault((cell.cell_id, layer), []).append(value)
        report.folded += 1
    for (cell_id, layer), values in buckets.items():
        cell = grid.cell(cell_id)
        if mode == "sum":
            new = resource_value(cell, layer) + math.fsum(values)
        else:
            new = math.fsum(values) / len(values)
        if new < 0 and layer not in _ECO_COLUMNS:
            raise GridError(
                f"aggregation drove layer {layer!r} of cell {cell_id} negative ({new!r})"
            )
        set_resource_value(cell, layer, new)
    grid.rebaseline()
    return report


def _format(value) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_grid_csv(grid: Grid, path) -> None:
    """Write the grid back out in the canonical schema (round-trips exactly)."""
    n_burden = max((len(c.community) for c in grid.cells), default=0)
    header = (
        GRID_COLUMNS[: GRID_COLUMNS.index("grid_energy")]
        + [f"burden_{i}" for i in range(1, n_burden + 1)]
        + ["grid_energy", "dac_candidate", "geothermal_candidate"]
        + [
            c
            for c in _WATER_FEATURE_COLUMNS
            if any(
                grid_cell.water_features[_WATER_FEATURE_COLUMNS[c][0]][
                    _WATER_FEATURE_COLUMNS[c][1]
                ]
                for grid_cell in grid.cells
            )
        ]
    )
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for cell in grid.cells:
            row = []
            for column in header:
                if column == "cell_id":
                    row.append(str(cell.cell_id))
                elif column == "x_km":
                    row.append(_format(cell.x_km))
                elif column == "y_km":
                    row.append(_format(cell.y_km))
                elif column.startswith("burden_"):
                    i = int(column.split("_", 1)[1]) - 1
                    row.append(_format(cell.community[i] if i < len(cell.community) else 0.0))
                elif column in BOOL_COLUMNS:
                    row.append(_format(getattr(cell, column)))
                elif column in _WATER_FEATURE_COLUMNS:
                    src, feat = _WATER_FEATURE_COLUMNS[column]
                    row.append(_format(cell.water_features[src][feat]))
                else:
                    row.append(_format(resource_value(cell, column)))
            writer.writerow(row)


def write_ledger_csv(grid: Grid, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "cell_id", "resource", "delta"])
        for entry in grid.ledger:
            writer.writerow(
                [entry.step, entry.cell_id, entry.resource, _format(entry.delta)]
            )
