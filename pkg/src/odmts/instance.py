"""Problem instance data model, validation, geography, and synthetic generation.

An instance bundles everything one design problem needs: the stop map (with
hub flags and rail-line membership), the rail lines, the passenger trips, and
the cost parameters. Instances are immutable after construction and are safe
to share between threads.

The JSON file schema is documented in docs/instance_schema.md and enforced
strictly on load: any violation aborts with an error naming the offending
field rather than attempting a repair.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

EARTH_RADIUS_MILES = 3958.8


class InstanceParseError(ValueError):
    """Raised when an instance file is not syntactically well-formed."""


class InstanceValidationError(ValueError):
    """Raised when instance data violates a structural invariant."""


@dataclass(frozen=True)
class Stop:
    id: str
    lat: float
    lon: float
    is_hub: bool = False
    rail_line_ids: tuple[str, ...] = ()


@dataclass(frozen=True)
class RailLine:
    id: str
    station_ids: tuple[str, ...]


@dataclass(frozen=True)
class Trip:
    id: str
    origin_stop: str
    destination_stop: str
    passengers: int


@dataclass(frozen=True)
class CostParams:
    """Cost model parameters.

    alpha weighs convenience (travel minutes) against money: 0 is pure cost,
    1 is pure convenience. Bus design cost and the transit leg cost both
    derive from it; see network.arc_fixed_cost and network.trip_arc_cost.
    """

    alpha: float = 0.5
    shuttle_cost_per_mile: float = 5.0
    bus_cost_per_mile: float = 1.0
    transfer_time: float = 5.0          # minutes per transfer
    horizon: float = 240.0              # minutes
    speed: float = 30.0                 # miles per hour
    bus_frequencies: tuple[int, ...] = (12, 24)   # departures per horizon
    rail_frequency: int = 24
    max_arcs: int = 3                   # legs per passenger route (transfers + 1)
    scale_transit_cost_by_passengers: bool = False

    def validate(self) -> None:
        if not (0.0 <= self.alpha <= 1.0):
            raise InstanceValidationError("params.alpha out of [0,1]")
        for name in ("shuttle_cost_per_mile", "bus_cost_per_mile",
                     "transfer_time", "horizon", "speed"):
            if not getattr(self, name) > 0:
                raise InstanceValidationError(f"params.{name} must be > 0")
        for f in self.bus_frequencies:
            if not (isinstance(f, int) and f > 0):
                raise InstanceValidationError(
                    "params.bus_frequencies must be positive integers")
        if len(set(self.bus_frequencies)) != len(self.bus_frequencies):
            raise InstanceValidationError("params.bus_frequencies has duplicates")
        if not (isinstance(self.rail_frequency, int) and self.rail_frequency > 0):
            raise InstanceValidationError("params.rail_frequency must be a positive integer")
        if not (isinstance(self.max_arcs, int) and self.max_arcs >= 2):
            raise InstanceValidationError("params.max_arcs must be an integer >= 2")


@dataclass(frozen=True)
class Instance:
    stops: tuple[Stop, ...]
    rail_lines: tuple[RailLine, ...]
    trips: tuple[Trip, ...]
    params: CostParams
    _stop_index: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(
            self, "_stop_index", {s.id: i for i, s in enumerate(self.stops)})

    def stop(self, stop_id: str) -> Stop:
        return self.stops[self._stop_index[stop_id]]

    def stop_position(self, stop_id: str) -> int:
        """Dense 0-based index of a stop, in instance order."""
        return self._stop_index[stop_id]

    @property
    def hubs(self) -> tuple[Stop, ...]:
        return tuple(s for s in self.stops if s.is_hub)

    def validate(self) -> None:
        """Check all structural invariants; raise on the first violation."""
        seen: set[str] = set()
        for s in self.stops:
            if s.id in seen:
                raise InstanceValidationError(f"duplicate stop id {s.id!r}")
            seen.add(s.id)
            if not (-90.0 <= s.lat <= 90.0):
                raise InstanceValidationError(f"stop {s.id!r}: lat out of [-90,90]")
            if not (-180.0 <= s.lon <= 180.0):
                raise InstanceValidationError(f"stop {s.id!r}: lon out of [-180,180]")

        line_ids: set[str] = set()
        for line in self.rail_lines:
            if line.id in line_ids:
                raise InstanceValidationError(f"duplicate rail line id {line.id!r}")
            line_ids.add(line.id)
            if len(line.station_ids) < 2:
                raise InstanceValidationError(
                    f"rail line {line.id!r}: needs at least 2 stations")
            if len(set(line.station_ids)) != len(line.station_ids):
                raise InstanceValidationError(
                    f"rail line {line.id!r}: repeated station")
            for sid in line.station_ids:
                if sid not in self._stop_index:
                    raise InstanceValidationError(
                        f"rail line {line.id!r}: unknown station {sid!r}")

        # Stop-side line membership must agree with the line definitions.
        membership: dict[str, set[str]] = {s.id: set() for s in self.stops}
        for line in self.rail_lines:
            for sid in line.station_ids:
                membership[sid].add(line.id)
        for s in self.stops:
            if set(s.rail_line_ids) != membership[s.id]:
                raise InstanceValidationError(
                    f"stop {s.id!r}: rail_lines does not match line definitions")

        trip_ids: set[str] = set()
        for t in self.trips:
            if t.id in trip_ids:
                raise InstanceValidationError(f"duplicate trip id {t.id!r}")
            trip_ids.add(t.id)
            for fieldname, sid in (("origin", t.origin_stop),
                                   ("destination", t.destination_stop)):
                if sid not in self._stop_index:
                    raise InstanceValidationError(
                        f"trip {t.id!r}: unknown {fieldname} stop {sid!r}")
            if t.origin_stop == t.destination_stop:
                raise InstanceValidationError(
                    f"trip {t.id!r}: origin equals destination")
            if not (isinstance(t.passengers, int) and t.passengers >= 1):
                raise InstanceValidationError(
                    f"trip {t.id!r}: passengers must be an integer >= 1")

        self.params.validate()
        if self.params.bus_frequencies and not any(s.is_hub for s in self.stops):
            raise InstanceValidationError(
                "params.bus_frequencies offered but instance has no hub")


def great_circle_distance(p: tuple[float, float], q: tuple[float, float]) -> float:
    """Haversine distance in miles between two (lat, lon) points in degrees."""
    lat1, lon1 = math.radians(p[0]), math.radians(p[1])
    lat2, lon2 = math.radians(q[0]), math.radians(q[1])
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_MILES * math.asin(min(1.0, math.sqrt(a)))


def travel_time(distance: float, params: CostParams) -> float:
    """Minutes to cover `distance` miles at the instance's constant speed."""
    return distance / params.speed * 60.0


# --- JSON serialization -----------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    return {
        "stops": [
            {"id": s.id, "lat": s.lat, "lon": s.lon, "is_hub": s.is_hub,
             "rail_lines": list(s.rail_line_ids)}
            for s in inst.stops
        ],
        "rail_lines": [
            {"id": l.id, "stations": list(l.station_ids)} for l in inst.rail_lines
        ],
        "trips": [
            {"id": t.id, "origin": t.origin_stop, "destination": t.destination_stop,
             "passengers": t.passengers}
            for t in inst.trips
        ],
        "params": {
            "alpha": inst.params.alpha,
            "shuttle_cost_per_mile": inst.params.shuttle_cost_per_mile,
            "bus_cost_per_mile": inst.params.bus_cost_per_mile,
            "transfer_time": inst.params.transfer_time,
            "horizon": inst.params.horizon,
            "speed": inst.params.speed,
            "bus_frequencies": list(inst.params.bus_frequencies),
            "rail_frequency": inst.params.rail_frequency,
            "max_arcs": inst.params.max_arcs,
            "scale_transit_cost_by_passengers":
                inst.params.scale_transit_cost_by_passengers,
        },
    }


def instance_to_json(inst: Instance) -> str:
    """Canonical JSON text; identical instances serialize byte-identically."""
    return json.dumps(instance_to_dict(inst), sort_keys=True, indent=2) + "\n"


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(instance_to_json(inst), encoding="utf-8")


def instance_digest(inst: Instance) -> str:
    """SHA-256 of the canonical serialization; ties outputs to their input."""
    import hashlib

    return hashlib.sha256(instance_to_json(inst).encode("utf-8")).hexdigest()


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InstanceParseError(message)


def instance_from_dict(doc: dict) -> Instance:
    _require(isinstance(doc, dict), "top-level value must be an object")
    for key in ("stops", "rail_lines", "trips", "params"):
        _require(key in doc, f"missing top-level key {key!r}")

    stops = []
    for raw in doc["stops"]:
        _require(isinstance(raw, dict), "stops entries must be objects")
        for key in ("id", "lat", "lon"):
            _require(key in raw, f"stop missing field {key!r}")
        stops.append(Stop(
            id=str(raw["id"]),
            lat=float(raw["lat"]),
            lon=float(raw["lon"]),
            is_hub=bool(raw.get("is_hub", False)),
            rail_line_ids=tuple(str(x) for x in raw.get("rail_lines", [])),
        ))

    lines = []
    for raw in doc["rail_lines"]:
        _require(isinstance(raw, dict), "rail_lines entries must be objects")
        for key in ("id", "stations"):
            _require(key in raw, f"rail line missing field {key!r}")
        lines.append(RailLine(
            id=str(raw["id"]),
            station_ids=tuple(str(x) for x in raw["stations"]),
        ))

    trips = []
    for raw in doc["trips"]:
        _require(isinstance(raw, dict), "trips entries must be objects")
        for key in ("id", "origin", "destination", "passengers"):
            _require(key in raw, f"trip missing field {key!r}")
        _require(isinstance(raw["passengers"], int) and not isinstance(raw["passengers"], bool),
                 f"trip {raw['id']!r}: passengers must be an integer")
        trips.append(Trip(
            id=str(raw["id"]),
            origin_stop=str(raw["origin"]),
            destination_stop=str(raw["destination"]),
            passengers=raw["passengers"],
        ))

    p = doc["params"]
    _require(isinstance(p, dict), "params must be an object")
    known = {
        "alpha", "shuttle_cost_per_mile", "bus_cost_per_mile", "transfer_time",
        "horizon", "speed", "bus_frequencies", "rail_frequency", "max_arcs",
        "scale_transit_cost_by_passengers",
    }
    for key in p:
        _require(key in known, f"unknown params field {key!r}")
    defaults = CostParams()
    params = CostParams(
        alpha=float(p.get("alpha", defaults.alpha)),
        shuttle_cost_per_mile=float(p.get("shuttle_cost_per_mile",
                                          defaults.shuttle_cost_per_mile)),
        bus_cost_per_mile=float(p.get("bus_cost_per_mile", defaults.bus_cost_per_mile)),
        transfer_time=float(p.get("transfer_time", defaults.transfer_time)),
        horizon=float(p.get("horizon", defaults.horizon)),
        speed=float(p.get("speed", defaults.speed)),
        bus_frequencies=tuple(int(f) for f in p.get("bus_frequencies",
                                                    defaults.bus_frequencies)),
        rail_frequency=int(p.get("rail_frequency", defaults.rail_frequency)),
        max_arcs=int(p.get("max_arcs", defaults.max_arcs)),
        scale_transit_cost_by_passengers=bool(
            p.get("scale_transit_cost_by_passengers", False)),
    )

    inst = Instance(stops=tuple(stops), rail_lines=tuple(lines),
                    trips=tuple(trips), params=params)
    inst.validate()
    return inst


def load_instance(path: str | Path) -> Instance:
    """Load and validate an instance file.

    Raises InstanceParseError for malformed files and
    InstanceValidationError for files that parse but violate an invariant.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InstanceParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError(f"{path}: invalid JSON: {exc}") from exc
    return instance_from_dict(doc)


# --- synthetic generation ---------------------------------------------------

DEFAULT_BOUNDING_BOX = (33.6, -84.6, 33.95, -84.2)   # lat_lo, lon_lo, lat_hi, lon_hi


def _kmeans_spread(points: np.ndarray, k: int, rng: np.random.Generator,
                   iters: int = 12) -> np.ndarray:
    """Pick k well-spread row indices of `points` via a short k-means run."""
    n = len(points)
    centers = points[rng.choice(n, size=k, replace=False)]
    for _ in range(iters):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = d2.argmin(axis=1)
        for c in range(k):
            members = points[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    # Snap each center to the nearest not-yet-chosen point.
    chosen: list[int] = []
    for c in range(k):
        order = np.argsort(((points - centers[c]) ** 2).sum(axis=1), kind="stable")
        for idx in order:
            if idx not in chosen:
                chosen.append(int(idx))
                break
    return np.array(sorted(chosen))


def generate_synthetic(seed: int, n_stops: int, n_hubs: int, n_rail_lines: int,
                       n_trips: int,
                       bounding_box: tuple[float, float, float, float] = DEFAULT_BOUNDING_BOX,
                       params: CostParams | None = None) -> Instance:
    """Generate a deterministic synthetic instance.

    Stops are uniform in the bounding box; rail lines are lon-monotone
    polylines through sampled stops; hubs are chosen by k-means spreading;
    trip endpoints are sampled near random cluster seeds so demand shows
    spatial structure; passenger counts follow a small geometric law.
    """
    if params is None:
        params = CostParams()
    if n_stops < 1:
        raise ValueError("n_stops must be >= 1")
    if n_hubs > n_stops:
        raise ValueError("n_hubs cannot exceed n_stops")
    if n_trips < 1:
        raise ValueError("n_trips must be >= 1")
    if n_rail_lines > 0 and n_stops < 2:
        raise ValueError("rail lines need at least 2 stops")
    if n_hubs == 0 and params.bus_frequencies:
        raise ValueError("n_hubs=0 requires empty bus_frequencies")
    if n_trips >= 1 and n_stops < 2:
        raise ValueError("trips need at least 2 stops")

    rng = np.random.default_rng(seed)
    lat_lo, lon_lo, lat_hi, lon_hi = bounding_box
    lats = rng.uniform(lat_lo, lat_hi, size=n_stops)
    lons = rng.uniform(lon_lo, lon_hi, size=n_stops)
    coords = np.column_stack([lats, lons])

    width = max(1, len(str(n_stops - 1)))
    stop_ids = [f"s{idx:0{width}d}" for idx in range(n_stops)]

    # Rail lines: monotone-in-longitude polylines through sampled stops.
    stations_per_line = max(2, min(8, n_stops // max(1, 2 * n_rail_lines))) \
        if n_rail_lines else 0
    line_members: dict[int, list[str]] = {i: [] for i in range(n_stops)}
    lines: list[RailLine] = []
    for li in range(n_rail_lines):
        members = rng.choice(n_stops, size=stations_per_line, replace=False)
        members = members[np.argsort(lons[members], kind="stable")]
        line_id = f"rail{li}"
        lines.append(RailLine(id=line_id,
                              station_ids=tuple(stop_ids[m] for m in members)))
        for m in members:
            line_members[int(m)].append(line_id)

    hub_idx = set()
    if n_hubs > 0:
        if n_hubs == n_stops:
            hub_idx = set(range(n_stops))
        else:
            hub_idx = set(int(i) for i in _kmeans_spread(coords, n_hubs, rng))

    stops = tuple(
        Stop(id=stop_ids[i], lat=float(lats[i]), lon=float(lons[i]),
             is_hub=(i in hub_idx), rail_line_ids=tuple(line_members[i]))
        for i in range(n_stops)
    )

    # Trips: endpoints drawn near cluster seeds for spatial structure.
    n_clusters = min(6, n_stops)
    cluster_seeds = rng.choice(n_stops, size=n_clusters, replace=False)
    d2_to_seed = ((coords[:, None, :] - coords[cluster_seeds][None, :, :]) ** 2).sum(axis=2)
    neighborhood = max(1, n_stops // 4)
    near = np.argsort(d2_to_seed, axis=0, kind="stable")[:neighborhood, :]  # per seed

    def sample_stop() -> int:
        c = int(rng.integers(n_clusters))
        return int(near[int(rng.integers(neighborhood)), c])

    trips: list[Trip] = []
    twidth = max(1, len(str(n_trips - 1)))
    for ti in range(n_trips):
        o = sample_stop()
        d = sample_stop()
        while d == o:
            d = sample_stop()
        passengers = int(rng.geometric(0.5))
        trips.append(Trip(id=f"t{ti:0{twidth}d}", origin_stop=stop_ids[o],
                          destination_stop=stop_ids[d], passengers=passengers))

    inst = Instance(stops=stops, rail_lines=tuple(lines), trips=tuple(trips),
                    params=params)
    inst.validate()
    return inst


def with_max_arcs(inst: Instance, max_arcs: int) -> Instance:
    """Copy of `inst` with a different per-route leg budget."""
    new_params = replace(inst.params, max_arcs=max_arcs)
    return Instance(stops=inst.stops, rail_lines=inst.rail_lines,
                    trips=inst.trips, params=new_params)
