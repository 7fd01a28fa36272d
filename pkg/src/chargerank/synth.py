"""Fully synthetic scenarios with planted ground truth.

Generates GIS layers (Voronoi polygon tables, roads, POI points, a density
grid), charging stations, and transactions whose per-pool unique-card
counts realize a planted logistic relationship on the extracted
predictors. The scenario round-trips through the exact same files the
ingestion and extraction pipeline reads, and ``truth.json`` retains the
Bayes scores so trained models can be benchmarked against the ceiling.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np
import pandas as pd
from scipy.spatial import Voronoi

from chargerank import features as features_mod
from chargerank import ingest
from chargerank.geo import BufferSpec, GeometryError, PointXY, Polygon, Polyline, Projection
from chargerank.layers import Layer, geojson_feature, load_manifest, write_geojson
from chargerank.models.common import STREAM_SCENARIO, rng_stream

POI_CATEGORIES = [
    "health", "entertainment", "finance", "fashion", "food",
    "transportation", "education", "sport", "family", "shopping",
    "hotel", "culture", "services", "nightlife", "utility",
]

LANDUSE_CATEGORIES = [
    "residential", "business", "industrial", "roads", "railways",
    "airports", "parks", "sports_fields", "allotments", "recreation_inland_water",
    "open_water", "forest", "dry_natural", "wet_natural", "agriculture",
    "greenhouses", "orchards", "arable", "grassland", "construction_sites",
    "socio_cultural", "public_facilities", "retail", "mixed_urban", "cemeteries",
]

ROAD_TYPES = ["residential", "primary", "secondary", "tertiary"]
ROAD_FLOW_ATTRS = [
    "flow_cars_day", "flow_cars_evening", "flow_cars_night",
    "flow_vans_day", "flow_vans_evening", "flow_vans_night",
    "flow_trucks_day", "flow_trucks_evening", "flow_trucks_night",
]


@dataclass(frozen=True)
class ScenarioSpec:
    """Knobs for one synthetic scenario; defaults give the reference size."""

    seed: int = 20150101
    center_lon: float = 5.0
    center_lat: float = 52.0
    box_km: float = 12.0
    n_population_cells: int = 220
    n_neighborhood_cells: int = 140
    n_landuse_cells: int = 420
    n_roads: int = 260
    n_poi_mean: float = 60.0
    n_competitors: int = 150
    grid_step_m: float = 800.0
    n_pools: int = 1200
    n_planted: int = 10
    planted_scale: float = 1.0
    noise_scale: float = 2.5
    top_fraction: float = 0.25
    buffer_radius_m: float = 350.0

    @property
    def box_m(self) -> float:
        return self.box_km * 1000.0


def _field_fn(rng: np.random.Generator, box: tuple, n_bumps: int = 6,
              scale: float = 1.0):
    """Smooth positive random field over the box (mixture of Gaussians)."""
    x0, y0, x1, y1 = box
    centers = np.column_stack((rng.uniform(x0, x1, n_bumps),
                               rng.uniform(y0, y1, n_bumps)))
    widths = rng.uniform(0.1, 0.35, n_bumps) * (x1 - x0)
    weights = rng.uniform(0.3, 1.0, n_bumps) * scale

    def fn(pts: np.ndarray) -> np.ndarray:
        acc = np.zeros(pts.shape[0])
        for c, w, a in zip(centers, widths, weights):
            d2 = (pts[:, 0] - c[0]) ** 2 + (pts[:, 1] - c[1]) ** 2
            acc += a * np.exp(-d2 / (2.0 * w * w))
        return acc

    return fn


def _voronoi_cells(rng: np.random.Generator, n: int, box: tuple) -> list:
    """Voronoi partition of the box; mirror points close every region."""
    x0, y0, x1, y1 = box
    pts = np.column_stack((rng.uniform(x0, x1, n), rng.uniform(y0, y1, n)))
    mirrored = [pts]
    for axis, lo, hi in ((0, x0, x1), (1, y0, y1)):
        for bound in (lo, hi):
            m = pts.copy()
            m[:, axis] = 2 * bound - m[:, axis]
            mirrored.append(m)
    vor = Voronoi(np.vstack(mirrored))
    cells = []
    for i in range(n):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            cells.append(None)
            continue
        ring = vor.vertices[region]
        try:
            poly = Polygon(ring)
        except GeometryError:
            cells.append(None)
            continue
        cells.append(poly)
    return [c for c in cells if c is not None]


def _inject_missing(rng, values: np.ndarray, fraction: float) -> np.ndarray:
    out = values.astype(float).copy()
    mask = rng.random(out.shape[0]) < fraction
    out[mask] = np.nan
    return out


def _population_table(rng, cells: list, box: tuple) -> pd.DataFrame:
    from chargerank.geo import polygon_area

    pop_field = _field_fn(rng, box, scale=1.0)
    income_field = _field_fn(rng, box, scale=1.0)
    centroids = np.array([c.exterior.mean(axis=0) for c in cells])
    areas = np.array([polygon_area(c) for c in cells])
    km2 = areas / 1e6
    base = pop_field(centroids) * 3000.0 + 150.0
    population = np.round(base * km2 * rng.lognormal(0.0, 0.25, len(cells)))
    population[rng.random(len(cells)) < 0.06] = 0.0  # uninhabited cells

    def split(total, k, conc=6.0):
        shares = rng.dirichlet(np.full(k, conc), size=len(cells))
        return [np.round(total * shares[:, i]) for i in range(k)]

    ages = split(population, 6)
    df = pd.DataFrame({"population": population})
    for name, col in zip(["age_0_14", "age_15_24", "age_25_44", "age_45_64",
                          "age_65_74", "age_75_plus"], ages):
        df[name] = col
    # near-duplicate of the elderly bands: exercises correlation pruning
    df["n_pensioners"] = df["age_65_74"] + df["age_75_plus"] + np.round(
        rng.normal(0.0, 1.0, len(cells)))
    for name, frac in [("n_social_assistance", 0.05), ("n_disability_benefits", 0.04),
                       ("n_unemployed", 0.06), ("n_cars", 0.45)]:
        df[name] = np.round(population * frac * rng.lognormal(0.0, 0.3, len(cells)))
    recipients = np.round(population * 0.55 * rng.uniform(0.8, 1.0, len(cells)))
    df["income_recipients"] = recipients
    inc = split(recipients, 3)
    for name, col in zip(["n_income_low", "n_income_mid", "n_income_high"], inc):
        df[name] = col
    df["mean_income"] = 22000.0 + 28000.0 * income_field(centroids) \
        + rng.normal(0, 1500.0, len(cells))
    buildings = np.round(population / rng.uniform(1.9, 2.6, len(cells)))
    df["buildings"] = buildings
    bsplit = split(buildings, 3)
    for name, col in zip(["n_rental_homes", "n_owned_homes", "n_institution_homes"],
                         bsplit):
        df[name] = col
    df["pct_multi_family"] = np.clip(
        60.0 * pop_field(centroids) / (pop_field(centroids).max() + 1e-9)
        + rng.normal(0, 8.0, len(cells)), 0.0, 100.0)
    df["mean_house_value"] = 180000.0 + 220000.0 * income_field(centroids) \
        + rng.normal(0, 20000.0, len(cells))
    df["mean_house_occupancy"] = rng.uniform(1.8, 2.7, len(cells))
    households = np.round(population / rng.uniform(2.0, 2.5, len(cells)))
    df["households"] = households
    hsplit = split(households, 3)
    for name, col in zip(["n_single_person", "n_with_children", "n_without_children"],
                         hsplit):
        df[name] = col
    df["mean_household_size"] = _inject_missing(
        rng, population / np.maximum(households, 1.0), 0.25)
    df["urbanity_class"] = _inject_missing(
        rng, np.clip(np.round(5.0 - 4.0 * pop_field(centroids)
                              / (pop_field(centroids).max() + 1e-9)), 1, 5), 0.04)
    df["pct_same_zip4"] = _inject_missing(
        rng, np.clip(50.0 + rng.normal(0, 20.0, len(cells)), 0, 100), 0.03)
    df["n_workers_total"] = np.round(population * 0.42
                                     * rng.uniform(0.85, 1.1, len(cells)))
    wsplit = split(df["n_workers_total"].to_numpy(), 3)
    for name, col in zip(["n_workers_industry", "n_workers_services",
                          "n_workers_agriculture"], wsplit):
        df[name] = col
    # population subcategories unknown where nobody lives (rule target)
    uninhabited = df["population"] == 0
    for col in ["n_social_assistance", "n_disability_benefits", "n_unemployed"]:
        df.loc[uninhabited, col] = np.nan
    no_income = df["income_recipients"] == 0
    for col in ["n_income_low", "n_income_mid", "n_income_high"]:
        df.loc[no_income, col] = np.nan
    no_buildings = df["buildings"] == 0
    for col in ["n_rental_homes", "n_owned_homes", "n_institution_homes",
                "mean_house_value"]:
        df.loc[no_buildings, col] = np.nan
    no_households = df["households"] == 0
    for col in ["n_single_person", "n_with_children", "n_without_children"]:
        df.loc[no_households, col] = np.nan
    # one deliberately noisy column that stays too gappy and gets dropped
    df["pct_second_homes"] = _inject_missing(
        rng, np.clip(rng.normal(4.0, 3.0, len(cells)), 0, 100), 0.08)
    return df


_POPULATION_ATTRS = [
    ("population", "extensive", None),
    ("age_0_14", "extensive", None),
    ("age_15_24", "extensive", None),
    ("age_25_44", "extensive", None),
    ("age_45_64", "extensive", None),
    ("age_65_74", "extensive", None),
    ("age_75_plus", "extensive", None),
    ("n_pensioners", "extensive", None),
    ("n_social_assistance", "extensive", None),
    ("n_disability_benefits", "extensive", None),
    ("n_unemployed", "extensive", None),
    ("n_cars", "extensive", None),
    ("income_recipients", "extensive", None),
    ("n_income_low", "extensive", None),
    ("n_income_mid", "extensive", None),
    ("n_income_high", "extensive", None),
    ("mean_income", "intensive", "income_recipients"),
    ("buildings", "extensive", None),
    ("n_rental_homes", "extensive", None),
    ("n_owned_homes", "extensive", None),
    ("n_institution_homes", "extensive", None),
    ("pct_multi_family", "intensive", None),
    ("mean_house_value", "intensive", "buildings"),
    ("mean_house_occupancy", "intensive", None),
    ("households", "extensive", None),
    ("n_single_person", "extensive", None),
    ("n_with_children", "extensive", None),
    ("n_without_children", "extensive", None),
    ("mean_household_size", "intensive", None),
    ("urbanity_class", "intensive", None),
    ("pct_same_zip4", "intensive", None),
    ("n_workers_total", "extensive", None),
    ("n_workers_industry", "extensive", None),
    ("n_workers_services", "extensive", None),
    ("n_workers_agriculture", "extensive", None),
    ("pct_second_homes", "intensive", None),
]

_POPULATION_RULES = [
    {"rule": "zero_when_zero", "guard": "population",
     "targets": ["n_social_assistance", "n_disability_benefits", "n_unemployed"]},
    {"rule": "zero_when_zero", "guard": "income_recipients",
     "targets": ["n_income_low", "n_income_mid", "n_income_high"]},
    {"rule": "zero_when_zero", "guard": "buildings",
     "targets": ["n_rental_homes", "n_owned_homes", "n_institution_homes",
                 "mean_house_value"]},
    {"rule": "zero_when_zero", "guard": "households",
     "targets": ["n_single_person", "n_with_children", "n_without_children"]},
    {"rule": "fill_constant", "target": "urbanity_class", "value": 5},
    {"rule": "fill_constant", "target": "pct_same_zip4", "value": 25.0},
    {"rule": "derive_ratio", "target": "mean_household_size",
     "numerator": "population", "denominator": "households"},
]


def _neighborhood_table(rng, cells: list, box: tuple) -> pd.DataFrame:
    dens_field = _field_fn(rng, box)
    centroids = np.array([c.exterior.mean(axis=0) for c in cells])
    n = len(cells)
    df = pd.DataFrame({
        "population_density": 400.0 + 5200.0 * dens_field(centroids)
        + rng.normal(0, 150.0, n),
        "address_density": 180.0 + 2400.0 * dens_field(centroids)
        + rng.normal(0, 90.0, n),
        "n_inhabitants": np.round(900.0 + 5200.0 * dens_field(centroids)
                                  * rng.lognormal(0, 0.2, n)),
    })
    df["n_men"] = np.round(df["n_inhabitants"] * rng.uniform(0.49, 0.51, n))
    df["n_women"] = df["n_inhabitants"] - df["n_men"]
    df["n_households_nb"] = np.round(df["n_inhabitants"] / rng.uniform(2.0, 2.4, n))
    df["pct_owner_occupied"] = np.clip(rng.normal(55.0, 14.0, n), 0, 100)
    df["pct_rental"] = 100.0 - df["pct_owner_occupied"]  # exact duplicate info
    df["mean_income_nb"] = 23000.0 + rng.normal(0, 4200.0, n)
    df["n_companies"] = np.round(20.0 + 480.0 * dens_field(centroids)
                                 * rng.lognormal(0, 0.35, n))
    df["n_jobs"] = np.round(df["n_companies"] * rng.uniform(4.0, 9.0, n))
    df["pct_built_before_1960"] = np.clip(rng.normal(30.0, 16.0, n), 0, 100)
    df["pct_built_after_2000"] = np.clip(rng.normal(18.0, 9.0, n), 0, 100)
    df["n_cars_nb"] = np.round(df["n_households_nb"] * rng.uniform(0.7, 1.3, n))
    return df


_NEIGHBORHOOD_ATTRS = [
    ("population_density", "intensive", None),
    ("address_density", "intensive", None),
    ("n_inhabitants", "extensive", None),
    ("n_men", "extensive", None),
    ("n_women", "extensive", None),
    ("n_households_nb", "extensive", None),
    ("pct_owner_occupied", "intensive", None),
    ("pct_rental", "intensive", None),
    ("mean_income_nb", "intensive", None),
    ("n_companies", "extensive", None),
    ("n_jobs", "extensive", None),
    ("pct_built_before_1960", "intensive", None),
    ("pct_built_after_2000", "intensive", None),
    ("n_cars_nb", "extensive", None),
]


def _energy_table(rng, cells: list, box: tuple) -> pd.DataFrame:
    load_field = _field_fn(rng, box)
    centroids = np.array([c.exterior.mean(axis=0) for c in cells])
    n = len(cells)
    meters_e = np.round(rng.uniform(0.0, 900.0, n))
    meters_g = np.round(rng.uniform(0.0, 800.0, n))
    df = pd.DataFrame({
        "n_meters_electricity": meters_e,
        "n_meters_gas": meters_g,
        "electricity_households_kwh": np.round(meters_e * rng.uniform(2500, 3400, n)),
        "electricity_companies_kwh": np.round(
            (80.0 + 900.0 * load_field(centroids)) * rng.lognormal(0, 0.4, n) * 1000),
        "gas_households_m3": np.round(meters_g * rng.uniform(900, 1500, n)),
        "gas_companies_m3": np.round(rng.lognormal(8.0, 0.8, n)),
        "mean_consumption_per_meter": rng.uniform(2300, 3600, n),
        "pct_green_energy": np.clip(rng.normal(12.0, 7.0, n), 0, 100),
        "peak_load_estimate": 40.0 + 600.0 * load_field(centroids)
        + rng.normal(0, 25.0, n),
        "transformer_count": np.round(rng.uniform(1, 12, n)),
        "n_solar_installations": np.round(rng.lognormal(3.0, 0.8, n)),
        "grid_age_years": rng.uniform(3.0, 45.0, n),
    })
    few_e = meters_e < 5
    few_g = meters_g < 5
    df.loc[few_e, "electricity_households_kwh"] = np.nan
    df.loc[few_g, "gas_households_m3"] = np.nan
    return df


_ENERGY_ATTRS = [
    ("n_meters_electricity", "extensive", None),
    ("n_meters_gas", "extensive", None),
    ("electricity_households_kwh", "extensive", None),
    ("electricity_companies_kwh", "extensive", None),
    ("gas_households_m3", "extensive", None),
    ("gas_companies_m3", "extensive", None),
    ("mean_consumption_per_meter", "intensive", "n_meters_electricity"),
    ("pct_green_energy", "intensive", None),
    ("peak_load_estimate", "intensive", None),
    ("transformer_count", "extensive", None),
    ("n_solar_installations", "extensive", None),
    ("grid_age_years", "intensive", None),
]

_ENERGY_RULES = [
    {"rule": "zero_when_below", "guard": "n_meters_electricity", "threshold": 5,
     "targets": ["electricity_households_kwh"]},
    {"rule": "zero_when_below", "guard": "n_meters_gas", "threshold": 5,
     "targets": ["gas_households_m3"]},
]


def _liveability_table(rng, cells: list, box: tuple) -> pd.DataFrame:
    qual_field = _field_fn(rng, box)
    centroids = np.array([c.exterior.mean(axis=0) for c in cells])
    n = len(cells)
    base = 3.0 + 2.0 * qual_field(centroids) / (qual_field(centroids).max() + 1e-9)
    df = pd.DataFrame({"idx_overall": base + rng.normal(0, 0.2, n)})
    for name in ["idx_housing", "idx_residents", "idx_services", "idx_safety",
                 "idx_environment"]:
        df[name] = base + rng.normal(0, 0.45, n)
    return df


_LIVEABILITY_ATTRS = [(name, "intensive", None) for name in [
    "idx_overall", "idx_housing", "idx_residents", "idx_services",
    "idx_safety", "idx_environment"]]


def _landuse_categories(rng, n: int) -> np.ndarray:
    weights = np.array([
        22, 9, 7, 8, 2, 0.4, 6, 4, 2, 3,
        4, 7, 2, 1.5, 9, 1, 1, 5, 4, 0.8,
        2, 2, 3, 2, 0.6])
    probs = weights / weights.sum()
    return rng.choice(np.array(LANDUSE_CATEGORIES), size=n, p=probs)


def _make_roads(rng, box: tuple, n_roads: int) -> tuple:
    x0, y0, x1, y1 = box
    geoms = []
    rows = []
    type_probs = np.array([0.5, 0.1, 0.16, 0.24])
    base_flow = {"residential": 300.0, "primary": 9000.0,
                 "secondary": 3500.0, "tertiary": 1200.0}
    for _ in range(n_roads):
        cx = rng.uniform(x0, x1)
        cy = rng.uniform(y0, y1)
        angle = rng.uniform(0, math.pi)
        half = rng.uniform(150.0, 900.0)
        p0 = (cx - half * math.cos(angle), cy - half * math.sin(angle))
        p1 = (cx + half * math.cos(angle), cy + half * math.sin(angle))
        rtype = str(rng.choice(np.array(ROAD_TYPES), p=type_probs))
        row = {"road_type": rtype}
        scale = base_flow[rtype] * rng.lognormal(0.0, 0.3)
        for cls, cls_mul in (("cars", 1.0), ("vans", 0.12), ("trucks", 0.05)):
            for period, per_mul in (("day", 1.0), ("evening", 0.35), ("night", 0.08)):
                row[f"flow_{cls}_{period}"] = round(scale * cls_mul * per_mul, 1)
        geoms.append(Polyline(np.array([p0, p1])))
        rows.append(row)
    return geoms, pd.DataFrame(rows)


def _scatter_points(rng, box: tuple, centers: np.ndarray, n: int,
                    cluster_frac: float = 0.7) -> np.ndarray:
    x0, y0, x1, y1 = box
    pts = np.empty((n, 2))
    n_cluster = int(round(n * cluster_frac))
    if n_cluster and centers.shape[0]:
        which = rng.integers(0, centers.shape[0], n_cluster)
        spread = 0.06 * (x1 - x0)
        pts[:n_cluster] = centers[which] + rng.normal(0, spread, (n_cluster, 2))
    for k in range(n_cluster, n):
        pts[k] = (rng.uniform(x0, x1), rng.uniform(y0, y1))
    pts[:, 0] = np.clip(pts[:, 0], x0, x1)
    pts[:, 1] = np.clip(pts[:, 1], y0, y1)
    return pts


def _place_pools(rng, box: tuple, centers: np.ndarray, n_pools: int,
                 min_separation: float = 120.0) -> np.ndarray:
    x0, y0, x1, y1 = box
    margin = 600.0
    cell = min_separation
    buckets: dict = {}
    out = []
    attempts = 0
    while len(out) < n_pools and attempts < n_pools * 400:
        attempts += 1
        if centers.shape[0] and rng.random() < 0.65:
            c = centers[rng.integers(0, centers.shape[0])]
            pt = c + rng.normal(0, 0.08 * (x1 - x0), 2)
        else:
            pt = np.array([rng.uniform(x0 + margin, x1 - margin),
                           rng.uniform(y0 + margin, y1 - margin)])
        if not (x0 + margin <= pt[0] <= x1 - margin
                and y0 + margin <= pt[1] <= y1 - margin):
            continue
        key = (int(pt[0] // cell), int(pt[1] // cell))
        ok = True
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for q in buckets.get((key[0] + dx, key[1] + dy), ()):
                    if np.hypot(q[0] - pt[0], q[1] - pt[1]) < min_separation:
                        ok = False
                        break
        if not ok:
            continue
        buckets.setdefault(key, []).append(pt)
        out.append(pt)
    if len(out) < n_pools:
        raise RuntimeError(f"could only place {len(out)} of {n_pools} pools")
    return np.array(out)


def build_manifest(spec: ScenarioSpec) -> dict:
    def attr_list(attrs):
        out = []
        for name, kind, weight in attrs:
            entry = {"name": name, "kind": kind}
            if weight:
                entry["weight_attribute"] = weight
            out.append(entry)
        return out

    return {
        "projection": {"ref_lat": spec.center_lat},
        "layers": {
            "population_cores": {
                "path": "layers/population_cores.geojson",
                "geometry": "polygon", "mode": "attributes",
                "attributes": attr_list(_POPULATION_ATTRS),
                "imputation": _POPULATION_RULES,
            },
            "neighborhoods": {
                "path": "layers/neighborhoods.geojson",
                "geometry": "polygon", "mode": "attributes",
                "attributes": attr_list(_NEIGHBORHOOD_ATTRS),
            },
            "energy": {
                "path": "layers/energy.geojson",
                "geometry": "polygon", "mode": "attributes",
                "attributes": attr_list(_ENERGY_ATTRS),
                "imputation": _ENERGY_RULES,
            },
            "liveability": {
                "path": "layers/liveability.geojson",
                "geometry": "polygon", "mode": "attributes",
                "attributes": attr_list(_LIVEABILITY_ATTRS),
            },
            "landuse": {
                "path": "layers/landuse.geojson",
                "geometry": "polygon", "mode": "categorical",
                "category_attribute": "category",
                "categories": LANDUSE_CATEGORIES,
            },
            "roads": {
                "path": "layers/roads.geojson",
                "geometry": "polyline", "mode": "roads",
                "flow_attributes": ROAD_FLOW_ATTRS,
                "type_attribute": "road_type",
                "road_types": ROAD_TYPES,
            },
            "poi": {
                "path": "layers/poi.geojson",
                "geometry": "point", "mode": "point_categories",
                "category_attribute": "category",
                "categories": POI_CATEGORIES,
            },
            "competitors": {
                "path": "layers/competitors.geojson",
                "geometry": "point", "mode": "point_categories",
                "category_attribute": None,
            },
            "ambient": {
                "path": "layers/ambient.geojson",
                "geometry": "point", "mode": "grid",
                "value_attribute": "density",
            },
        },
    }


def _layer_from_parts(name: str, manifest: dict, geoms, table) -> Layer:
    from chargerank.layers import _parse_layer_config

    cfg = _parse_layer_config(name, manifest["layers"][name])
    return Layer(name, cfg.geometry, list(geoms), table, cfg)


def generate_scenario(spec: ScenarioSpec, out_dir) -> dict:
    """Write a complete scenario directory and return its truth summary.

    Produces layers/, attributes.json, stations.csv, transactions.csv and
    truth.json. Deterministic: a fixed spec yields byte-identical files.
    """
    out_dir = Path(out_dir)
    (out_dir / "layers").mkdir(parents=True, exist_ok=True)
    rng = rng_stream(spec.seed, STREAM_SCENARIO)
    projection = Projection(ref_lat=spec.center_lat)
    center = projection.to_xy(spec.center_lon, spec.center_lat)
    half = spec.box_m / 2.0
    box = (center.x - half, center.y - half, center.x + half, center.y + half)

    manifest = build_manifest(spec)

    # town centers anchor POIs and pools so space has usable structure
    n_centers = 5
    centers = np.column_stack((rng.uniform(box[0], box[2], n_centers),
                               rng.uniform(box[1], box[3], n_centers)))

    pop_cells = _voronoi_cells(rng, spec.n_population_cells, box)
    pop_table = _population_table(rng, pop_cells, box)
    nb_cells = _voronoi_cells(rng, spec.n_neighborhood_cells, box)
    nb_table = _neighborhood_table(rng, nb_cells, box)
    en_cells = _voronoi_cells(rng, spec.n_neighborhood_cells, box)
    en_table = _energy_table(rng, en_cells, box)
    lv_cells = _voronoi_cells(rng, spec.n_neighborhood_cells, box)
    lv_table = _liveability_table(rng, lv_cells, box)
    lu_cells = _voronoi_cells(rng, spec.n_landuse_cells, box)
    lu_table = pd.DataFrame({"category": _landuse_categories(rng, len(lu_cells))})
    road_geoms, road_table = _make_roads(rng, box, spec.n_roads)

    poi_geoms = []
    poi_rows = []
    for cat in POI_CATEGORIES:
        n_cat = int(rng.poisson(spec.n_poi_mean))
        pts = _scatter_points(rng, box, centers, n_cat)
        for x, y in pts:
            poi_geoms.append(PointXY(float(x), float(y)))
            poi_rows.append({"category": cat})
    poi_table = pd.DataFrame(poi_rows)

    comp_pts = _scatter_points(rng, box, centers, spec.n_competitors)
    comp_geoms = [PointXY(float(x), float(y)) for x, y in comp_pts]
    comp_table = pd.DataFrame({"kind": ["pool_2015"] * len(comp_geoms)})

    gx = np.arange(box[0] + spec.grid_step_m / 2, box[2], spec.grid_step_m)
    gy = np.arange(box[1] + spec.grid_step_m / 2, box[3], spec.grid_step_m)
    dens_field = _field_fn(rng, box)
    grid_geoms = []
    grid_rows = []
    for y in gy:
        for x in gx:
            grid_geoms.append(PointXY(float(x), float(y)))
    grid_pts = np.array([(g.x, g.y) for g in grid_geoms])
    dens = 50.0 + 4200.0 * dens_field(grid_pts) + rng.normal(0, 30.0, len(grid_geoms))
    grid_rows = [{"density": round(float(d), 3)} for d in dens]
    grid_table = pd.DataFrame(grid_rows)

    layer_parts = {
        "population_cores": (pop_cells, pop_table),
        "neighborhoods": (nb_cells, nb_table),
        "energy": (en_cells, en_table),
        "liveability": (lv_cells, lv_table),
        "landuse": (lu_cells, lu_table),
        "roads": (road_geoms, road_table),
        "poi": (poi_geoms, poi_table),
        "competitors": (comp_geoms, comp_table),
        "ambient": (grid_geoms, grid_table),
    }

    # stations: 1-3 per pool site, tightly grouped so aggregation recovers
    # the sites exactly (sites are >= 120 m apart)
    pool_xy = _place_pools(rng, box, centers, spec.n_pools)
    station_rows = []
    pool_station_ids = []
    for i, (px, py) in enumerate(pool_xy):
        n_st = int(rng.integers(1, 4))
        ids = []
        for s in range(n_st):
            sx = px + rng.uniform(-15.0, 15.0)
            sy = py + rng.uniform(-15.0, 15.0)
            lon, lat = projection.to_lonlat(sx, sy)
            sid = f"st{i:05d}{chr(ord('a') + s)}"
            ids.append(sid)
            station_rows.append({
                "id": sid, "lon": lon, "lat": lat,
                "n_connectors": int(rng.integers(1, 3)),
                "max_power_kw": float(rng.choice(np.array([3.7, 11.0, 11.0]))),
                "rollout": str(rng.choice(np.array(["strategic", "demand_driven"]),
                                          p=np.array([0.6, 0.4]))),
            })
        pool_station_ids.append(ids)
    stations_df = pd.DataFrame(station_rows)

    # extraction round-trip: aggregate pools and extract features with the
    # production pipeline, then plant the response on the result
    stations = [
        ingest.StationRecord(
            id=r["id"], location=projection.to_xy(r["lon"], r["lat"]),
            lon=r["lon"], lat=r["lat"], n_connectors=r["n_connectors"],
            max_power_kw=r["max_power_kw"], rollout=r["rollout"])
        for r in station_rows
    ]
    pools = ingest.aggregate_pools(stations)
    if len(pools) != spec.n_pools:
        raise RuntimeError(f"aggregation gave {len(pools)} pools, "
                           f"expected {spec.n_pools}")
    layers = {name: _layer_from_parts(name, manifest, geoms, table.copy())
              for name, (geoms, table) in layer_parts.items()}
    fm_raw, _report = features_mod.extract_features(
        pools, layers, BufferSpec(radius=spec.buffer_radius_m))
    fm, _prep = features_mod.preprocess(fm_raw)

    truth = plant_popularity(spec, fm, rng)

    # transactions realizing the planted popularity counts
    tx_rows = []
    year_start = datetime(2015, 1, 1)
    pool_index = {pool.pool_id: i for i, pool in enumerate(pools)}
    for pool in pools:
        i = pool_index[pool.pool_id]
        count = truth["popularity"][i]
        sids = pool.station_ids
        for c in range(count):
            rfid = f"card{i:05d}x{c:04d}"
            start = year_start + timedelta(
                minutes=float(rng.integers(0, 364 * 24 * 60)))
            connect_h = float(rng.uniform(1.0, 10.0))
            charge_h = connect_h * float(rng.uniform(0.3, 0.95))
            energy = charge_h * pool.max_power_kw * float(rng.uniform(0.5, 0.95))
            tx_rows.append({
                "station_id": sids[int(rng.integers(0, len(sids)))],
                "rfid": rfid,
                "plug_in": start.isoformat(),
                "plug_out": (start + timedelta(hours=connect_h)).isoformat(),
                "energy_kwh": round(energy, 3),
                "charging_time_h": round(charge_h, 4),
            })
    tx_df = pd.DataFrame(tx_rows)

    # write everything
    for name, (geoms, table) in layer_parts.items():
        feats = []
        for g, (_, row) in zip(geoms, table.iterrows()):
            props = {}
            for key, val in row.items():
                if isinstance(val, float) and math.isnan(val):
                    props[key] = None
                elif isinstance(val, (np.integer,)):
                    props[key] = int(val)
                elif isinstance(val, (np.floating,)):
                    props[key] = float(val)
                else:
                    props[key] = val
            feats.append(geojson_feature(g, props, projection))
        write_geojson(out_dir / manifest["layers"][name]["path"], feats)
    with open(out_dir / "attributes.json", "w") as f:
        json.dump(manifest, f, indent=1)
        f.write("\n")
    stations_df.to_csv(out_dir / "stations.csv", index=False)
    tx_df.to_csv(out_dir / "transactions.csv", index=False)

    truth_doc = {
        "spec": asdict(spec),
        "planted": [
            {"column": name, "beta": float(b)}
            for name, b in zip(truth["planted_columns"], truth["beta_star"])
        ],
        "noise_scale": spec.noise_scale,
        "oracle_auc": truth["oracle_auc"],
        "pool_ids": truth["pool_ids"],
        "oracle_scores": truth["oracle_scores"].tolist(),
        "labels": truth["labels"].tolist(),
        "popularity": truth["popularity"].tolist(),
    }
    with open(out_dir / "truth.json", "w") as f:
        json.dump(truth_doc, f)
        f.write("\n")
    return truth_doc


def plant_popularity(spec: ScenarioSpec, fm, rng) -> dict:
    """Plant a sparse logistic response on extracted, preprocessed features.

    Chooses ``n_planted`` mutually weakly-correlated columns, draws signed
    coefficients, computes Bayes scores from the standardized columns, adds
    Gaussian noise on the linear scale, and maps the noisy ranking to
    integer popularity counts. Counts above the top-fraction cutoff are
    strictly larger than all counts below it, so the binary labels derived
    from popularity match the noisy-score ranking exactly.
    """
    from chargerank.models.linear import standardize_columns

    X = fm.X
    n, p = X.shape
    Xs, _mean, _std = standardize_columns(X)
    corr = np.corrcoef(Xs, rowvar=False)
    usable = [j for j in range(p) if X[:, j].std() > 0]
    order = list(rng.permutation(np.array(usable)))
    picked: list = []
    for j in order:
        if len(picked) == spec.n_planted:
            break
        if all(abs(corr[j, q]) < 0.5 for q in picked):
            picked.append(int(j))
    if len(picked) < spec.n_planted:
        raise RuntimeError("could not find enough weakly correlated columns to plant")
    picked.sort()
    signs = np.where(np.arange(spec.n_planted) % 2 == 0, 1.0, -1.0)
    magnitudes = (1.2 + rng.uniform(0.0, 1.0, spec.n_planted)) * spec.planted_scale
    beta_star = signs * magnitudes
    lin = Xs[:, picked] @ beta_star
    noisy = lin + rng.normal(0.0, spec.noise_scale, n)
    oracle_scores = 1.0 / (1.0 + np.exp(-lin))

    m = int(np.floor(spec.top_fraction * n + 0.5))
    rank = np.empty(n, dtype=np.int64)
    rank[np.argsort(noisy, kind="stable")] = np.arange(n)
    cut = n - m
    popularity = np.empty(n, dtype=np.int64)
    below = rank < cut
    if cut > 0:
        popularity[below] = 2 + (28 * rank[below]) // max(cut, 1)
    popularity[~below] = 40 + (60 * (rank[~below] - cut)) // max(m, 1)

    labels = np.zeros(n, dtype=np.int64)
    labels[~below] = 1
    try:
        from chargerank.models.common import rank_auc

        oracle_auc = rank_auc(labels, oracle_scores) if 0 < labels.sum() < n else 1.0
    except Exception:
        oracle_auc = float("nan")
    return {
        "planted_columns": [fm.columns[j].name for j in picked],
        "planted_indices": picked,
        "beta_star": beta_star,
        "oracle_scores": oracle_scores,
        "oracle_auc": float(oracle_auc),
        "labels": labels,
        "popularity": popularity,
        "pool_ids": list(fm.ids),
    }


def load_truth(path) -> dict:
    with open(Path(path)) as f:
        return json.load(f)
