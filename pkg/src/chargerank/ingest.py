"""Charging stations, transactions, pool aggregation, and labels.

Stations closer than 50 m are merged into pools by single-linkage
clustering (the transitive closure of the pairwise rule, which is the only
order-independent reading). Seven usage indicators are computed per pool
from the filtered transactions, and the response is a binary top-share
label on one chosen indicator.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
import pandas as pd

from chargerank.geo import PointXY, Projection

POOL_DISTANCE_M = 50.0

ROLLOUT_STRATEGIC = "strategic"
ROLLOUT_DEMAND = "demand_driven"

STATION_COLUMNS = ["id", "lon", "lat", "n_connectors", "max_power_kw", "rollout"]
TRANSACTION_COLUMNS = ["station_id", "rfid", "plug_in", "plug_out",
                       "energy_kwh", "charging_time_h"]

INDICATOR_NAMES = [
    "energy_kwh",
    "n_transactions",
    "popularity",
    "charging_time_h",
    "charging_ratio",
    "use_time_ratio",
    "energy_ratio",
]


class IngestError(ValueError):
    """Raised for schema violations or inconsistent station data."""


@dataclass(frozen=True)
class StationRecord:
    id: str
    location: PointXY
    lon: float
    lat: float
    n_connectors: int
    max_power_kw: float
    rollout: str

    def __post_init__(self):
        if self.n_connectors < 1:
            raise IngestError(f"station {self.id}: n_connectors must be >= 1")
        if self.max_power_kw <= 0:
            raise IngestError(f"station {self.id}: max_power_kw must be positive")
        if self.rollout not in (ROLLOUT_STRATEGIC, ROLLOUT_DEMAND):
            raise IngestError(f"station {self.id}: unknown rollout {self.rollout!r}")


@dataclass(frozen=True)
class Transaction:
    station_id: str
    rfid: str
    plug_in: datetime
    plug_out: datetime
    energy_kwh: float
    charging_time_h: float

    @property
    def connection_h(self) -> float:
        return (self.plug_out - self.plug_in).total_seconds() / 3600.0


@dataclass
class IndicatorSet:
    energy_kwh: float = 0.0
    n_transactions: int = 0
    popularity: int = 0
    charging_time_h: float = 0.0
    charging_ratio: float = 0.0
    use_time_ratio: float = 0.0
    energy_ratio: float = 0.0

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in INDICATOR_NAMES}


@dataclass
class PoolRecord:
    pool_id: str
    location: PointXY
    lon: float
    lat: float
    station_ids: list
    n_connectors: int
    max_power_kw: float
    rollout: str
    indicators: IndicatorSet = field(default_factory=IndicatorSet)


@dataclass(frozen=True)
class LabelingSpec:
    """Top-share labeling: fraction z of pools labeled 1 over a period."""

    z: float = 0.25
    period_start: datetime = datetime(2015, 1, 1)
    period_end: datetime = datetime(2016, 1, 1)

    def __post_init__(self):
        if not 0.0 < self.z < 1.0:
            raise IngestError(f"top fraction z={self.z} must be in (0, 1)")
        if self.period_end <= self.period_start:
            raise IngestError("labeling period must have positive length")

    @property
    def period_hours(self) -> float:
        return (self.period_end - self.period_start).total_seconds() / 3600.0


def _require_columns(df: pd.DataFrame, required: list, what: str) -> None:
    for col in required:
        if col not in df.columns:
            raise IngestError(f"{what}: missing required column {col!r}")


def load_stations(path, projection: Projection) -> list:
    """Read stations.csv and project locations to planar meters."""
    df = pd.read_csv(path, dtype={"id": str})
    _require_columns(df, STATION_COLUMNS, Path(path).name)
    stations = []
    for row in df.itertuples(index=False):
        stations.append(StationRecord(
            id=str(row.id),
            location=projection.to_xy(float(row.lon), float(row.lat)),
            lon=float(row.lon),
            lat=float(row.lat),
            n_connectors=int(row.n_connectors),
            max_power_kw=float(row.max_power_kw),
            rollout=str(row.rollout),
        ))
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise IngestError(f"duplicate station ids: {dupes[:5]}")
    return stations


def load_transactions(path) -> list:
    """Read transactions.csv with RFC 3339 timestamps."""
    df = pd.read_csv(path, dtype={"station_id": str, "rfid": str})
    _require_columns(df, TRANSACTION_COLUMNS, Path(path).name)
    txs = []
    for row in df.itertuples(index=False):
        txs.append(Transaction(
            station_id=str(row.station_id),
            rfid=str(row.rfid),
            plug_in=datetime.fromisoformat(str(row.plug_in)),
            plug_out=datetime.fromisoformat(str(row.plug_out)),
            energy_kwh=float(row.energy_kwh),
            charging_time_h=float(row.charging_time_h),
        ))
    return txs


def filter_transactions(raw: list, spec: LabelingSpec) -> tuple:
    """Keep transactions fully inside the observed period and self-consistent.

    Returns ``(kept, drop_counts)``; inconsistent records (negative energy,
    charging time exceeding connection time, non-positive duration) are
    dropped and counted, never fatal.
    """
    kept = []
    drops = {"outside_period": 0, "non_positive_duration": 0,
             "charging_exceeds_connection": 0, "negative_energy": 0,
             "negative_charging_time": 0}
    for tx in raw:
        if tx.plug_out <= tx.plug_in:
            drops["non_positive_duration"] += 1
            continue
        if tx.charging_time_h < 0:
            drops["negative_charging_time"] += 1
            continue
        if tx.charging_time_h > tx.connection_h * (1 + 1e-9):
            drops["charging_exceeds_connection"] += 1
            continue
        if tx.energy_kwh < 0:
            drops["negative_energy"] += 1
            continue
        if tx.plug_in < spec.period_start or tx.plug_out > spec.period_end:
            drops["outside_period"] += 1
            continue
        kept.append(tx)
    return kept, drops


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))

    def find(self, i):
        while self.parent[i] != i:
            self.parent[i] = self.parent[self.parent[i]]
            i = self.parent[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            self.parent[max(ri, rj)] = min(ri, rj)


def aggregate_pools(stations: list, threshold_m: float = POOL_DISTANCE_M) -> list:
    """Single-linkage clustering of stations on distance < threshold.

    Deterministic and independent of input order: stations are sorted by id
    before clustering, pools are identified by their smallest member id.
    """
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        raise IngestError("duplicate station ids")
    stations = sorted(stations, key=lambda s: s.id)
    n = len(stations)
    uf = _UnionFind(n)
    xy = np.array([(s.location.x, s.location.y) for s in stations])
    # coarse cell hash keeps this near-linear for clustered layouts
    cell = threshold_m
    buckets: dict = {}
    for i in range(n):
        buckets.setdefault((int(xy[i, 0] // cell), int(xy[i, 1] // cell)), []).append(i)
    for (cx, cy), members in buckets.items():
        neigh = []
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                neigh.extend(buckets.get((cx + dx, cy + dy), ()))
        for i in members:
            for j in neigh:
                if j > i:
                    d = np.hypot(xy[i, 0] - xy[j, 0], xy[i, 1] - xy[j, 1])
                    if d < threshold_m:
                        uf.union(i, j)
    groups: dict = {}
    for i in range(n):
        groups.setdefault(uf.find(i), []).append(i)
    pools = []
    for root in sorted(groups):
        members = [stations[i] for i in groups[root]]
        cx = float(np.mean([s.location.x for s in members]))
        cy = float(np.mean([s.location.y for s in members]))
        lon = float(np.mean([s.lon for s in members]))
        lat = float(np.mean([s.lat for s in members]))
        n_strategic = sum(1 for s in members if s.rollout == ROLLOUT_STRATEGIC)
        rollout = ROLLOUT_STRATEGIC if 2 * n_strategic >= len(members) else ROLLOUT_DEMAND
        pools.append(PoolRecord(
            pool_id=f"pool-{members[0].id}",
            location=PointXY(cx, cy),
            lon=lon,
            lat=lat,
            station_ids=[s.id for s in members],
            n_connectors=sum(s.n_connectors for s in members),
            max_power_kw=max(s.max_power_kw for s in members),
            rollout=rollout,
        ))
    return pools


def union_length_hours(intervals: list) -> float:
    """Total length of the union of (start, end) datetime intervals."""
    if not intervals:
        return 0.0
    merged = 0.0
    intervals = sorted(intervals)
    cur_start, cur_end = intervals[0]
    for start, end in intervals[1:]:
        if start > cur_end:
            merged += (cur_end - cur_start).total_seconds()
            cur_start, cur_end = start, end
        elif end > cur_end:
            cur_end = end
    merged += (cur_end - cur_start).total_seconds()
    return merged / 3600.0


def compute_indicators(pool: PoolRecord, transactions: list, spec: LabelingSpec,
                       use_time_basis: str = "connected") -> IndicatorSet:
    """The seven usage indicators for one pool.

    ``transactions`` must already be filtered to the observed period and to
    this pool's member stations. ``use_time_basis`` selects the occupancy
    notion: "connected" counts plugged-in time (interval union across the
    pool); "charging" divides summed charging time by the period instead
    (the two readings found in the source material; connected is default).
    """
    period_h = spec.period_hours
    if period_h <= 0:
        raise IngestError("observed period has zero length")
    ind = IndicatorSet()
    if not transactions:
        return ind
    ind.energy_kwh = float(sum(tx.energy_kwh for tx in transactions))
    ind.n_transactions = len(transactions)
    ind.popularity = len({tx.rfid for tx in transactions})
    ind.charging_time_h = float(sum(tx.charging_time_h for tx in transactions))
    connection_h = float(sum(tx.connection_h for tx in transactions))
    ind.charging_ratio = ind.charging_time_h / connection_h if connection_h > 0 else 0.0
    if use_time_basis == "charging":
        ind.use_time_ratio = min(ind.charging_time_h / period_h, 1.0)
    else:
        occupied = union_length_hours([(tx.plug_in, tx.plug_out) for tx in transactions])
        ind.use_time_ratio = occupied / period_h
    ind.energy_ratio = ind.energy_kwh / (pool.max_power_kw * period_h)
    return ind


def attach_indicators(pools: list, transactions: list, spec: LabelingSpec,
                      use_time_basis: str = "connected") -> None:
    """Group transactions by pool membership and fill pool.indicators."""
    by_station: dict = {}
    for pool in pools:
        for sid in pool.station_ids:
            by_station[sid] = pool.pool_id
    grouped: dict = {pool.pool_id: [] for pool in pools}
    for tx in transactions:
        pid = by_station.get(tx.station_id)
        if pid is not None:
            grouped[pid].append(tx)
    for pool in pools:
        pool.indicators = compute_indicators(pool, grouped[pool.pool_id], spec,
                                             use_time_basis)


def label_top(values, pool_ids, z: float) -> np.ndarray:
    """Binary labels: exactly round(z*n) ones on the largest values.

    Ties at the cutoff are broken by pool id (ascending), which makes the
    labeling reproducible; round() is half-up.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.shape[0]
    if n < 2:
        raise IngestError("need at least 2 pools to label")
    m = int(np.floor(z * n + 0.5))
    order = sorted(range(n), key=lambda i: (-values[i], str(pool_ids[i])))
    y = np.zeros(n, dtype=np.int64)
    for i in order[:m]:
        y[i] = 1
    if np.all(values == values[0]):
        warnings.warn("all indicator values equal; top labels set by pool-id tie-break",
                      stacklevel=2)
    return y


def pools_dataframe(pools: list, labels: np.ndarray | None = None) -> pd.DataFrame:
    """Tabular pools.csv content: identity, aggregates, indicators, label."""
    rows = []
    for i, pool in enumerate(pools):
        row = {
            "pool_id": pool.pool_id,
            "lon": pool.lon,
            "lat": pool.lat,
            "station_ids": ";".join(pool.station_ids),
            "n_connectors": pool.n_connectors,
            "max_power_kw": pool.max_power_kw,
            "rollout": pool.rollout,
        }
        row.update(pool.indicators.as_dict())
        if labels is not None:
            row["label"] = int(labels[i])
        rows.append(row)
    return pd.DataFrame(rows)
