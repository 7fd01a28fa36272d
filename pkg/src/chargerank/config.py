"""Run configuration: every protocol default in one serializable object.

Defaults reproduce the reference experimental protocol: 350 m buffer,
top-25% labels over calendar 2015, a 201-point lambda grid 10^(-4+0.015i),
theta swept 0..0.99 in steps of 0.01, 10-fold CV, 100 stratified 80/20
splits, and 500 bootstrap resamples. A run writes its fully resolved
config next to its outputs so it can be reproduced exactly.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime
from pathlib import Path

from chargerank.geo import BUFFER_RADII_M, DEFAULT_BUFFER_RADIUS_M
from chargerank.ingest import LabelingSpec


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # inputs / outputs
    scenario_dir: str = "."
    manifest: str = "attributes.json"
    stations: str = "stations.csv"
    transactions: str = "transactions.csv"
    output_dir: str = "out"

    # buffer extraction
    buffer_radius_m: float = DEFAULT_BUFFER_RADIUS_M
    buffer_segments: int = 64
    radius_set_m: list = field(default_factory=lambda: list(BUFFER_RADII_M))

    # labeling
    top_fraction: float = 0.25
    period_start: str = "2015-01-01T00:00:00"
    period_end: str = "2016-01-01T00:00:00"
    response_indicator: str = "popularity"
    use_time_basis: str = "connected"

    # preprocessing
    max_missing_fraction: float = 0.015
    max_zero_fraction: float = 0.95
    correlation_threshold: float = 0.95
    correlation_mode: str = "clique"

    # model protocol
    method: str = "lr_l1"
    lambda_grid_base: float = -4.0
    lambda_grid_step: float = 0.015
    lambda_grid_count: int = 201
    k_folds: int = 10
    n_splits: int = 100
    test_fraction: float = 0.2
    n_bootstrap: int = 500
    master_seed: int = 0
    rank_theta: float = 0.34
    cv_obj_tol: float = 1e-5
    cv_max_sweeps: int = 100
    bootstrap_standardize: str = "divide"
    selection_threshold: float = 0.9
    rf_grid: dict = field(default_factory=lambda: {"n_trees": [100], "min_leaf": [5]})
    gbrt_grid: dict = field(default_factory=lambda: {
        "n_cycles": [100], "learn_rate": [0.1], "min_leaf": [5], "max_splits": [10]})
    n_jobs: int = 0  # 0: use all cores

    def __post_init__(self):
        if self.method not in ("lr_l1", "rf", "gbrt", "all"):
            raise ConfigError(f"unknown method {self.method!r}")
        if not 0.0 < self.top_fraction < 1.0:
            raise ConfigError("top_fraction must be in (0, 1)")
        if self.lambda_grid_count < 1 or self.k_folds < 2:
            raise ConfigError("invalid grid/fold configuration")

    @property
    def jobs(self) -> int:
        return self.n_jobs if self.n_jobs > 0 else (os.cpu_count() or 1)

    def labeling_spec(self) -> LabelingSpec:
        return LabelingSpec(
            z=self.top_fraction,
            period_start=datetime.fromisoformat(self.period_start),
            period_end=datetime.fromisoformat(self.period_end),
        )

    def path(self, name: str) -> Path:
        p = Path(getattr(self, name))
        if not p.is_absolute():
            p = Path(self.scenario_dir) / p
        return p

    def tree_grids(self) -> dict:
        from chargerank.models import expand_grid

        return {"rf": expand_grid(self.rf_grid), "gbrt": expand_grid(self.gbrt_grid)}

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def save(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1, sort_keys=True)
            f.write("\n")
