"""GIS layers: GeoJSON loading, attribute manifests, and a bbox grid index.

A scenario is a directory with an ``attributes.json`` manifest describing
each layer file, its geometry kind, how its attributes are aggregated into
predictors, and which imputation rules apply to its attribute table.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from chargerank.geo import (
    GeometryError,
    PointXY,
    Polygon,
    Polyline,
    Projection,
    polygon_area,
)

MIN_POLYGON_AREA_M2 = 1e-6

EXTRACTION_MODES = ("attributes", "categorical", "roads", "point_categories", "grid")
ATTRIBUTE_KINDS = ("extensive", "intensive")


class ManifestError(ValueError):
    """Raised when a layer manifest or layer file violates the schema."""


@dataclass(frozen=True)
class AttributeSpec:
    """How one attribute column becomes a predictor.

    Extensive attributes are apportioned by intersected-area fraction and
    summed; intensive ones are averaged with intersection-area weights, or
    with the buffer estimate of ``weight_attribute`` when given.
    """

    name: str
    kind: str
    weight_attribute: str | None = None

    def __post_init__(self):
        if self.kind not in ATTRIBUTE_KINDS:
            raise ManifestError(f"unknown attribute kind {self.kind!r} for {self.name!r}")


@dataclass
class LayerConfig:
    """Manifest entry for one layer."""

    name: str
    path: str
    geometry: str
    mode: str
    attributes: list = field(default_factory=list)
    imputation: list = field(default_factory=list)
    category_attribute: str | None = None
    categories: list | None = None
    flow_attributes: list = field(default_factory=list)
    type_attribute: str | None = None
    road_types: list = field(default_factory=list)
    value_attribute: str | None = None


class BBoxGrid:
    """Uniform grid over feature bounding boxes for candidate lookups."""

    def __init__(self, bboxes: list, n_cells: int = 64):
        self._bboxes = bboxes
        if not bboxes:
            self._cells = {}
            self.extent = (0.0, 0.0, 1.0, 1.0)
            self._step = 1.0
            return
        minx = min(b[0] for b in bboxes)
        miny = min(b[1] for b in bboxes)
        maxx = max(b[2] for b in bboxes)
        maxy = max(b[3] for b in bboxes)
        self.extent = (minx, miny, maxx, maxy)
        self._step = max((maxx - minx) / n_cells, (maxy - miny) / n_cells, 1e-9)
        cells: dict = {}
        for i, b in enumerate(bboxes):
            for key in self._cover(b):
                cells.setdefault(key, []).append(i)
        self._cells = cells

    def _cover(self, bbox):
        x0 = math.floor((bbox[0] - self.extent[0]) / self._step)
        y0 = math.floor((bbox[1] - self.extent[1]) / self._step)
        x1 = math.floor((bbox[2] - self.extent[0]) / self._step)
        y1 = math.floor((bbox[3] - self.extent[1]) / self._step)
        for ix in range(x0, x1 + 1):
            for iy in range(y0, y1 + 1):
                yield (ix, iy)

    def query(self, bbox) -> list:
        """Indices of features whose bbox may intersect ``bbox``, sorted."""
        found = set()
        for key in self._cover(bbox):
            found.update(self._cells.get(key, ()))
        out = []
        for i in sorted(found):
            b = self._bboxes[i]
            if not (b[2] < bbox[0] or bbox[2] < b[0] or b[3] < bbox[1] or bbox[3] < b[1]):
                out.append(i)
        return out


class Layer:
    """One geometry collection plus its aligned attribute table."""

    def __init__(self, name: str, kind: str, geoms: list, table: pd.DataFrame,
                 config: LayerConfig, warnings: list | None = None):
        if len(geoms) != len(table):
            raise ManifestError(f"layer {name!r}: {len(geoms)} geometries vs {len(table)} rows")
        self.name = name
        self.kind = kind
        self.geoms = geoms
        self.table = table.reset_index(drop=True)
        self.config = config
        self.warnings = warnings or []
        self._grid = None
        self._areas = None

    @property
    def grid(self) -> BBoxGrid:
        if self._grid is None:
            if self.kind == "point":
                bboxes = [(g.x, g.y, g.x, g.y) for g in self.geoms]
            else:
                bboxes = [g.bbox for g in self.geoms]
            self._grid = BBoxGrid(bboxes)
        return self._grid

    @property
    def areas(self) -> np.ndarray:
        """Per-feature polygon areas (polygon layers only), cached."""
        if self._areas is None:
            self._areas = np.array([polygon_area(g) for g in self.geoms])
        return self._areas

    def point_array(self) -> np.ndarray:
        return np.array([(g.x, g.y) for g in self.geoms]) if self.geoms else np.empty((0, 2))

    def __len__(self):
        return len(self.geoms)


def _parse_layer_config(name: str, raw: dict) -> LayerConfig:
    for key in ("path", "geometry", "mode"):
        if key not in raw:
            raise ManifestError(f"layer {name!r}: manifest entry missing {key!r}")
    if raw["mode"] not in EXTRACTION_MODES:
        raise ManifestError(f"layer {name!r}: unknown mode {raw['mode']!r}")
    attrs = [
        AttributeSpec(a["name"], a["kind"], a.get("weight_attribute"))
        for a in raw.get("attributes", [])
    ]
    return LayerConfig(
        name=name,
        path=raw["path"],
        geometry=raw["geometry"],
        mode=raw["mode"],
        attributes=attrs,
        imputation=raw.get("imputation", []),
        category_attribute=raw.get("category_attribute"),
        categories=raw.get("categories"),
        flow_attributes=raw.get("flow_attributes", []),
        type_attribute=raw.get("type_attribute"),
        road_types=raw.get("road_types", []),
        value_attribute=raw.get("value_attribute"),
    )


def load_manifest(manifest_path) -> tuple:
    """Read ``attributes.json``; returns (projection, [LayerConfig])."""
    manifest_path = Path(manifest_path)
    with open(manifest_path) as f:
        raw = json.load(f)
    if "layers" not in raw:
        raise ManifestError("manifest missing 'layers'")
    configs = [_parse_layer_config(name, entry) for name, entry in raw["layers"].items()]
    proj_cfg = raw.get("projection", {})
    projection = Projection(ref_lat=proj_cfg["ref_lat"]) if "ref_lat" in proj_cfg else None
    return projection, configs


def _project_coords(coords, projection: Projection) -> np.ndarray:
    pts = [projection.to_xy(lon, lat) for lon, lat in coords]
    return np.array([(p.x, p.y) for p in pts])


def load_geojson_layer(config: LayerConfig, base_dir, projection: Projection) -> Layer:
    """Load one GeoJSON FeatureCollection (WGS84), projecting at load.

    Degenerate polygons (area below 1e-6 m^2) and invalid rings are dropped
    with a warning record rather than failing the whole layer.
    """
    path = Path(base_dir) / config.path
    with open(path) as f:
        doc = json.load(f)
    if doc.get("type") != "FeatureCollection":
        raise ManifestError(f"{path}: expected a FeatureCollection")
    geoms = []
    rows = []
    warnings = []
    for fi, feat in enumerate(doc.get("features", [])):
        geom = feat.get("geometry") or {}
        gtype = geom.get("type")
        props = feat.get("properties") or {}
        try:
            if gtype == "Point":
                lon, lat = geom["coordinates"]
                g = projection.to_xy(lon, lat)
                expected = "point"
            elif gtype == "LineString":
                g = Polyline(_project_coords(geom["coordinates"], projection))
                expected = "polyline"
            elif gtype == "Polygon":
                rings = [_project_coords(r, projection) for r in geom["coordinates"]]
                g = Polygon(rings[0], rings[1:])
                if polygon_area(g) < MIN_POLYGON_AREA_M2:
                    warnings.append(f"{config.name}[{fi}]: degenerate polygon dropped")
                    continue
                expected = "polygon"
            else:
                raise ManifestError(f"{path}: unsupported geometry type {gtype!r}")
        except GeometryError as exc:
            warnings.append(f"{config.name}[{fi}]: invalid geometry dropped ({exc})")
            continue
        if expected != config.geometry:
            raise ManifestError(
                f"{path}: feature {fi} is {expected!r}, manifest says {config.geometry!r}"
            )
        geoms.append(g)
        rows.append(props)
    table = pd.DataFrame(rows) if rows else pd.DataFrame()
    return Layer(config.name, config.geometry, geoms, table, config, warnings)


def load_scenario_layers(manifest_path) -> tuple:
    """Load all layers of a scenario; returns (projection, {name: Layer})."""
    manifest_path = Path(manifest_path)
    projection, configs = load_manifest(manifest_path)
    if projection is None:
        raise ManifestError("manifest must declare projection.ref_lat")
    layers = {}
    for cfg in configs:
        layers[cfg.name] = load_geojson_layer(cfg, manifest_path.parent, projection)
    return projection, layers


def geojson_feature(geom, props: dict, projection: Projection) -> dict:
    """Serialize one geometry back to WGS84 GeoJSON."""
    if isinstance(geom, PointXY):
        coords = list(projection.to_lonlat(geom.x, geom.y))
        gtype = "Point"
    elif isinstance(geom, Polyline):
        coords = [list(projection.to_lonlat(x, y)) for x, y in geom.vertices]
        gtype = "LineString"
    elif isinstance(geom, Polygon):
        rings = [geom.exterior] + [h for h in geom.holes]
        coords = []
        for ring in rings:
            pts = [list(projection.to_lonlat(x, y)) for x, y in ring]
            pts.append(pts[0])
            coords.append(pts)
        gtype = "Polygon"
    else:
        raise TypeError(f"cannot serialize {type(geom)!r}")
    return {"type": "Feature", "geometry": {"type": gtype, "coordinates": coords},
            "properties": props}


def write_geojson(path, features: list) -> None:
    doc = {"type": "FeatureCollection", "features": features}
    with open(path, "w") as f:
        json.dump(doc, f, separators=(",", ":"))
        f.write("\n")
