"""Predictor extraction around pools and the pruning/imputation pipeline.

Each pool gets a circular buffer; polygon attributes are apportioned by
intersected area (extensive) or averaged with weights (intensive), land-use
categories become area proportions, roads contribute densities plus the
closest segment's attributes, and point layers contribute densities and
nearest distances. Missing values that survive the layer-level rules are
handled per column: median-imputed when rare, dropped when frequent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from chargerank._kernels import convex_clip_area
from chargerank.geo import (
    BufferSpec,
    Polygon,
    make_buffer,
    points_in_ring,
    polygon_area,
    polyline_length_within,
)
from chargerank.layers import Layer

MAX_MISSING_FRACTION = 0.015
MAX_ZERO_FRACTION = 0.95
CORRELATION_THRESHOLD = 0.95


class FeatureError(ValueError):
    pass


@dataclass
class ColumnInfo:
    name: str
    source: str
    kind: str


@dataclass
class FeatureMatrix:
    """n x p predictor matrix with provenance; missing values are NaN."""

    X: np.ndarray
    ids: list
    columns: list  # list[ColumnInfo]

    def __post_init__(self):
        if self.X.shape != (len(self.ids), len(self.columns)):
            raise FeatureError("matrix shape does not match ids/columns")

    @property
    def names(self) -> list:
        return [c.name for c in self.columns]

    @property
    def missing_mask(self) -> np.ndarray:
        return np.isnan(self.X)

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.X, columns=self.names)
        df.insert(0, "pool_id", self.ids)
        return df

    @classmethod
    def from_dataframe(cls, df: pd.DataFrame, source: str = "file") -> "FeatureMatrix":
        if "pool_id" not in df.columns:
            raise FeatureError("features table missing 'pool_id' column")
        ids = [str(v) for v in df["pool_id"]]
        names = [c for c in df.columns if c != "pool_id"]
        X = df[names].to_numpy(dtype=np.float64)
        cols = [ColumnInfo(n, source, "unknown") for n in names]
        return cls(X, ids, cols)


# ---------------------------------------------------------------------------
# layer-level imputation (rules applied before any extraction)
# ---------------------------------------------------------------------------

def impute_layer(layer: Layer) -> dict:
    """Apply the manifest's if-then imputation rules to the attribute table.

    Rule kinds:
      zero_when_zero   - guard attribute equals 0 -> missing targets get 0
      zero_when_below  - guard below threshold -> missing targets get 0
      fill_constant    - missing target gets a fixed lowest-class value
      derive_ratio     - missing target gets numerator/denominator
    Values not covered by any rule stay missing. Returns per-rule counts.
    """
    table = layer.table
    counts: dict = {}
    for rule in layer.config.imputation:
        kind = rule["rule"]
        applied = 0
        if kind == "zero_when_zero":
            guard = table[rule["guard"]]
            mask_guard = guard.notna() & (guard == 0)
            for target in rule["targets"]:
                mask = mask_guard & table[target].isna()
                applied += int(mask.sum())
                table.loc[mask, target] = 0.0
        elif kind == "zero_when_below":
            guard = table[rule["guard"]]
            mask_guard = guard.notna() & (guard < rule["threshold"])
            for target in rule["targets"]:
                mask = mask_guard & table[target].isna()
                applied += int(mask.sum())
                table.loc[mask, target] = 0.0
        elif kind == "fill_constant":
            target = rule["target"]
            mask = table[target].isna()
            applied = int(mask.sum())
            table.loc[mask, target] = rule["value"]
        elif kind == "derive_ratio":
            target = rule["target"]
            num = table[rule["numerator"]]
            den = table[rule["denominator"]]
            mask = table[target].isna() & num.notna() & den.notna() & (den > 0)
            applied = int(mask.sum())
            table.loc[mask, target] = num[mask] / den[mask]
        else:
            raise FeatureError(f"layer {layer.name!r}: unknown imputation rule {kind!r}")
        counts[kind] = counts.get(kind, 0) + applied
    return counts


# ---------------------------------------------------------------------------
# per-pool extraction
# ---------------------------------------------------------------------------

def _polygon_intersection_fractions(layer: Layer, buffer_poly: Polygon):
    """(feature index, intersection area, area fraction) per intersecting cell."""
    ring = buffer_poly.exterior
    out = []
    for i in layer.grid.query(buffer_poly.bbox):
        cell = layer.geoms[i]
        if cell.holes:
            from chargerank.geo import intersection_area
            inter = intersection_area(cell, buffer_poly)
        else:
            inter = convex_clip_area(cell.exterior, ring)
        if inter > 0.0:
            out.append((i, inter, inter / layer.areas[i]))
    return out


def extract_extensive(layer: Layer, attribute: str, intersections) -> float:
    """Uniform-density apportioning: sum of value * intersected fraction."""
    total = 0.0
    for i, _inter, frac in intersections:
        v = layer.table[attribute].iloc[i]
        if pd.isna(v):
            return math.nan
        total += float(v) * frac
    return total


def extract_intensive(layer: Layer, attribute: str, intersections,
                      weight_attribute: str | None = None) -> float:
    """Weighted mean over intersecting cells.

    Weights default to intersection areas; with ``weight_attribute`` set,
    the weight is that attribute's own buffer-intersection estimate. A zero
    total weight marks the value missing.
    """
    num = 0.0
    den = 0.0
    for i, inter, frac in intersections:
        v = layer.table[attribute].iloc[i]
        if pd.isna(v):
            return math.nan
        if weight_attribute is None:
            w = inter
        else:
            wv = layer.table[weight_attribute].iloc[i]
            if pd.isna(wv):
                return math.nan
            w = float(wv) * frac
        num += w * float(v)
        den += w
    if den <= 0.0:
        return math.nan
    return num / den


def extract_categorical(layer: Layer, intersections, buffer_area: float) -> dict:
    """Proportion of buffer area per category (manifest category order)."""
    cfg = layer.config
    sums = {c: 0.0 for c in cfg.categories}
    cat_col = layer.table[cfg.category_attribute]
    for i, inter, _frac in intersections:
        cat = cat_col.iloc[i]
        if pd.isna(cat):
            continue
        if cat in sums:
            sums[cat] += inter
    return {c: sums[c] / buffer_area for c in cfg.categories}


class _RoadIndex:
    """Precomputed segment arrays for vectorized nearest-segment queries."""

    def __init__(self, layer: Layer):
        seg_feature = []
        a_pts = []
        b_pts = []
        for fi, line in enumerate(layer.geoms):
            v = line.vertices
            for s in range(v.shape[0] - 1):
                seg_feature.append(fi)
                a_pts.append(v[s])
                b_pts.append(v[s + 1])
        self.seg_feature = np.array(seg_feature, dtype=np.int64)
        self.a = np.array(a_pts) if a_pts else np.empty((0, 2))
        self.b = np.array(b_pts) if b_pts else np.empty((0, 2))
        d = self.b - self.a
        self.d = d
        self.len2 = np.maximum(d[:, 0] ** 2 + d[:, 1] ** 2, 1e-300)

    def nearest_feature(self, x: float, y: float) -> tuple:
        if self.a.shape[0] == 0:
            return -1, math.nan
        t = ((x - self.a[:, 0]) * self.d[:, 0] + (y - self.a[:, 1]) * self.d[:, 1]) / self.len2
        t = np.clip(t, 0.0, 1.0)
        px = self.a[:, 0] + t * self.d[:, 0]
        py = self.a[:, 1] + t * self.d[:, 1]
        dist = np.hypot(px - x, py - y)
        k = int(np.argmin(dist))
        return int(self.seg_feature[k]), float(dist[k])


def extract_road_features(layer: Layer, road_index: _RoadIndex, pool_xy: tuple,
                          buffer_poly: Polygon, buffer_area: float) -> dict:
    """Traffic/road densities over the buffer plus closest-segment attributes."""
    cfg = layer.config
    out: dict = {}
    if len(layer) == 0:
        for flow in cfg.flow_attributes:
            out[f"closest_{flow}"] = math.nan
        out["traffic_density"] = math.nan
        out["road_density"] = math.nan
        for rt in cfg.road_types:
            out[f"closest_type_{rt}"] = math.nan
        return out
    flow_cols = {f: layer.table[f] for f in cfg.flow_attributes}
    weighted = 0.0
    total_len = 0.0
    for i in layer.grid.query(buffer_poly.bbox):
        clipped = polyline_length_within(layer.geoms[i], buffer_poly)
        if clipped <= 0.0:
            continue
        total_len += clipped
        flow_sum = 0.0
        for f in cfg.flow_attributes:
            v = flow_cols[f].iloc[i]
            if not pd.isna(v):
                flow_sum += float(v)
        weighted += clipped * flow_sum
    out["traffic_density"] = weighted / buffer_area
    out["road_density"] = total_len / buffer_area
    nearest_i, _dist = road_index.nearest_feature(*pool_xy)
    for f in cfg.flow_attributes:
        v = flow_cols[f].iloc[nearest_i]
        out[f"closest_{f}"] = float(v) if not pd.isna(v) else math.nan
    rtype = layer.table[cfg.type_attribute].iloc[nearest_i]
    for rt in cfg.road_types:
        out[f"closest_type_{rt}"] = 1.0 if rtype == rt else 0.0
    return out


def extract_point_features(points_by_cat: dict, pool_xy: tuple, buffer_poly: Polygon,
                           buffer_area: float) -> dict:
    """Per category: point density in the buffer and distance to the closest."""
    out = {}
    ring = buffer_poly.exterior
    x, y = pool_xy
    for cat, pts in points_by_cat.items():
        if pts.shape[0] == 0:
            out[f"density_{cat}"] = 0.0
            out[f"nearest_{cat}"] = math.nan
            continue
        bb = buffer_poly.bbox
        near = (pts[:, 0] >= bb[0]) & (pts[:, 0] <= bb[2]) \
            & (pts[:, 1] >= bb[1]) & (pts[:, 1] <= bb[3])
        count = 0
        if near.any():
            count = int(points_in_ring(pts[near, 0], pts[near, 1], ring).sum())
        out[f"density_{cat}"] = count / buffer_area
        out[f"nearest_{cat}"] = float(np.hypot(pts[:, 0] - x, pts[:, 1] - y).min())
    return out


def extract_pool_features(pool) -> dict:
    return {
        "n_connectors": float(pool.n_connectors),
        "max_power_kw": float(pool.max_power_kw),
        "latitude": float(pool.lat),
        "longitude": float(pool.lon),
        "rollout_strategic": 1.0 if pool.rollout == "strategic" else 0.0,
    }


def _points_by_category(layer: Layer) -> dict:
    cfg = layer.config
    pts = layer.point_array()
    if cfg.category_attribute is None:
        return {layer.name: pts}
    cats = cfg.categories or sorted(layer.table[cfg.category_attribute].dropna().unique())
    col = layer.table[cfg.category_attribute].to_numpy()
    return {c: pts[col == c] if len(layer) else pts for c in cats}


def extract_features(pools: list, layers: dict, buffer_spec: BufferSpec,
                     run_imputation: bool = True) -> tuple:
    """Build the raw predictor matrix for all pools.

    Layer attribute tables get the rule-based imputation first; whatever is
    still missing surfaces as NaN in the matrix for ``preprocess`` to
    resolve. Returns ``(FeatureMatrix, extraction_report)``.
    """
    imputation_report = {}
    if run_imputation:
        for layer in layers.values():
            counts = impute_layer(layer)
            if counts:
                imputation_report[layer.name] = counts

    road_indexes = {
        name: _RoadIndex(layer)
        for name, layer in layers.items() if layer.config.mode == "roads"
    }
    point_sets = {
        name: _points_by_category(layer)
        for name, layer in layers.items() if layer.config.mode == "point_categories"
    }
    grid_points = {
        name: layer.point_array()
        for name, layer in layers.items() if layer.config.mode == "grid"
    }

    columns: list = []
    rows: list = []
    for pool in pools:
        buffer_poly = make_buffer(pool.location, buffer_spec)
        buffer_area = polygon_area(buffer_poly)
        values: list = []
        cols: list = []
        for name, layer in layers.items():
            mode = layer.config.mode
            if mode == "attributes":
                inters = _polygon_intersection_fractions(layer, buffer_poly)
                for spec in layer.config.attributes:
                    if spec.kind == "extensive":
                        v = extract_extensive(layer, spec.name, inters)
                    else:
                        v = extract_intensive(layer, spec.name, inters,
                                              spec.weight_attribute)
                    cols.append(ColumnInfo(f"{name}.{spec.name}", name, spec.kind))
                    values.append(v)
            elif mode == "categorical":
                inters = _polygon_intersection_fractions(layer, buffer_poly)
                props = extract_categorical(layer, inters, buffer_area)
                for cat, v in props.items():
                    cols.append(ColumnInfo(f"{name}.prop.{cat}", name, "proportion"))
                    values.append(v)
            elif mode == "roads":
                feats = extract_road_features(
                    layer, road_indexes[name], (pool.location.x, pool.location.y),
                    buffer_poly, buffer_area)
                for key, v in feats.items():
                    cols.append(ColumnInfo(f"{name}.{key}", name, "road"))
                    values.append(v)
            elif mode == "point_categories":
                feats = extract_point_features(
                    point_sets[name], (pool.location.x, pool.location.y),
                    buffer_poly, buffer_area)
                for key, v in feats.items():
                    cols.append(ColumnInfo(f"{name}.{key}", name, "point"))
                    values.append(v)
            elif mode == "grid":
                pts = grid_points[name]
                if pts.shape[0] == 0:
                    v = math.nan
                else:
                    k = int(np.argmin(np.hypot(pts[:, 0] - pool.location.x,
                                               pts[:, 1] - pool.location.y)))
                    raw = layer.table[layer.config.value_attribute].iloc[k]
                    v = float(raw) if not pd.isna(raw) else math.nan
                cols.append(ColumnInfo(f"{name}.{layer.config.value_attribute}",
                                       name, "grid"))
                values.append(v)
        for key, v in extract_pool_features(pool).items():
            cols.append(ColumnInfo(f"pool.{key}", "pool", "pool"))
            values.append(v)
        if not columns:
            columns = cols
        rows.append(values)

    X = np.array(rows, dtype=np.float64) if rows else np.empty((0, len(columns)))
    fm = FeatureMatrix(X, [p.pool_id for p in pools], columns)
    report = {
        "n_pools": len(pools),
        "n_raw_predictors": len(columns),
        "buffer_radius_m": buffer_spec.radius,
        "layer_imputation": imputation_report,
        "layer_warnings": {name: layer.warnings for name, layer in layers.items()
                           if layer.warnings},
    }
    return fm, report


# ---------------------------------------------------------------------------
# column-level preprocessing
# ---------------------------------------------------------------------------

def _correlation_groups(corr: np.ndarray, threshold: float, mode: str) -> list:
    """Groups of mutually correlated columns; first member is the keeper."""
    p = corr.shape[0]
    over = np.abs(corr) > threshold
    np.fill_diagonal(over, False)
    assigned = np.zeros(p, dtype=bool)
    groups = []
    if mode == "component":
        for start in range(p):
            if assigned[start]:
                continue
            stack = [start]
            comp = []
            assigned[start] = True
            while stack:
                i = stack.pop()
                comp.append(i)
                for j in np.nonzero(over[i])[0]:
                    if not assigned[j]:
                        assigned[j] = True
                        stack.append(int(j))
            groups.append(sorted(comp))
        return groups
    if mode != "clique":
        raise FeatureError(f"unknown correlation grouping mode {mode!r}")
    for i in range(p):
        if assigned[i]:
            continue
        group = [i]
        assigned[i] = True
        for j in range(i + 1, p):
            if assigned[j]:
                continue
            if all(over[j, g] for g in group):
                group.append(j)
                assigned[j] = True
        groups.append(group)
    return groups


def preprocess(fm: FeatureMatrix,
               max_missing: float = MAX_MISSING_FRACTION,
               max_zero_fraction: float = MAX_ZERO_FRACTION,
               corr_threshold: float = CORRELATION_THRESHOLD,
               corr_mode: str = "clique") -> tuple:
    """Median-impute or drop missing columns, drop near-zero/constant
    columns, and prune correlated groups down to one representative.

    Clique grouping is iterated to a fixpoint so that no surviving pair
    exceeds the correlation threshold. Idempotent. Returns
    ``(FeatureMatrix, report)`` with every drop recorded and reasoned.
    """
    X = fm.X.copy()
    columns = list(fm.columns)
    dropped: list = []
    imputed: dict = {}

    # missing-value rule
    keep = []
    for j, col in enumerate(columns):
        v = X[:, j]
        miss = np.isnan(v)
        frac = float(miss.mean())
        if frac == 0.0:
            keep.append(j)
        elif frac < max_missing:
            v[miss] = float(np.nanmedian(v))
            imputed[col.name] = int(miss.sum())
            keep.append(j)
        else:
            dropped.append({"name": col.name, "reason": "missing",
                            "detail": f"missing fraction {frac:.4f}"})
    X = X[:, keep]
    columns = [columns[j] for j in keep]

    # near-zero / constant rule
    keep = []
    for j, col in enumerate(columns):
        v = X[:, j]
        zero_frac = float((v == 0.0).mean())
        if zero_frac > max_zero_fraction:
            dropped.append({"name": col.name, "reason": "sparsity",
                            "detail": f"zero fraction {zero_frac:.4f}"})
        elif float(v.std()) == 0.0:
            dropped.append({"name": col.name, "reason": "constant",
                            "detail": "zero variance"})
        else:
            keep.append(j)
    X = X[:, keep]
    columns = [columns[j] for j in keep]

    # correlation pruning to fixpoint
    while X.shape[1] >= 2:
        corr = np.corrcoef(X, rowvar=False)
        groups = [g for g in _correlation_groups(corr, corr_threshold, corr_mode)
                  if len(g) > 1]
        if not groups:
            break
        to_drop = set()
        for g in groups:
            keeper = columns[g[0]].name
            for j in g[1:]:
                to_drop.add(j)
                dropped.append({"name": columns[j].name, "reason": "correlated",
                                "detail": f"|r| > {corr_threshold} with {keeper}"})
        keep = [j for j in range(X.shape[1]) if j not in to_drop]
        X = X[:, keep]
        columns = [columns[j] for j in keep]
        if corr_mode == "component":
            break

    out = FeatureMatrix(X, list(fm.ids), columns)
    report = {
        "n_rows": X.shape[0],
        "n_columns": X.shape[1],
        "imputed": imputed,
        "dropped": dropped,
        "column_stats": {
            col.name: {
                "mean": float(X[:, j].mean()),
                "std": float(X[:, j].std()),
                "min": float(X[:, j].min()),
                "max": float(X[:, j].max()),
            }
            for j, col in enumerate(columns)
        },
    }
    return out, report


def verify_preprocessed(fm: FeatureMatrix,
                        max_zero_fraction: float = MAX_ZERO_FRACTION,
                        corr_threshold: float = CORRELATION_THRESHOLD) -> bool:
    """Direct re-check of the preprocess postconditions."""
    X = fm.X
    if np.isnan(X).any():
        return False
    for j in range(X.shape[1]):
        if float((X[:, j] == 0.0).mean()) > max_zero_fraction:
            return False
    if X.shape[1] >= 2:
        corr = np.corrcoef(X, rowvar=False)
        np.fill_diagonal(corr, 0.0)
        if np.abs(corr).max() > corr_threshold:
            return False
    return True
