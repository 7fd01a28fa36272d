"""Buffer extraction, layer imputation rules, and matrix preprocessing."""

import math

import numpy as np
import pandas as pd
import pytest

from chargerank import features as feat
from chargerank.geo import BufferSpec, PointXY, Polygon, Polyline, make_buffer, polygon_area
from chargerank.ingest import PoolRecord
from chargerank.layers import AttributeSpec, Layer, LayerConfig


def polygon_layer(name, polys, table, attrs=(), imputation=(), mode="attributes",
                  **extra):
    cfg = LayerConfig(name=name, path="x", geometry="polygon", mode=mode,
                      attributes=[AttributeSpec(*a) for a in attrs],
                      imputation=list(imputation), **extra)
    return Layer(name, "polygon", polys, table, cfg)


def square(x0, y0, side):
    return Polygon([(x0, y0), (x0 + side, y0), (x0 + side, y0 + side), (x0, y0 + side)])


def pool_at(x, y, pid="pool-1"):
    return PoolRecord(pool_id=pid, location=PointXY(x, y), lon=x / 1e5, lat=y / 1e5,
                      station_ids=["s"], n_connectors=2, max_power_kw=11.0,
                      rollout="strategic")


BUF = BufferSpec(radius=100.0, n_segments=64)


def intersections_for(layer, center):
    buf = make_buffer(center, BUF)
    return feat._polygon_intersection_fractions(layer, buf), buf


class TestExtensive:
    def test_fully_contained_polygon(self):
        layer = polygon_layer("pop", [square(-10, -10, 20)],
                              pd.DataFrame({"population": [100.0]}),
                              attrs=[("population", "extensive")])
        inters, _ = intersections_for(layer, PointXY(0, 0))
        assert feat.extract_extensive(layer, "population", inters) == pytest.approx(100.0)

    def test_half_covered(self):
        # huge half-plane-ish polygon covering exactly half the buffer
        layer = polygon_layer("pop", [square(0, -500, 1000)],
                              pd.DataFrame({"population": [100.0]}))
        inters, buf = intersections_for(layer, PointXY(0, 0))
        v = feat.extract_extensive(layer, "population", inters)
        frac = polygon_area(buf) / 2 / polygon_area(layer.geoms[0])
        assert v == pytest.approx(100.0 * frac, rel=1e-9)

    def test_two_polygons_weighted_sum(self):
        # fractions 0.25 and 0.1 of populations 200 and 1000 -> 150
        cells = [square(0, 0, 100), square(200, 0, 100)]
        layer = polygon_layer("pop", cells, pd.DataFrame({"population": [200.0, 1000.0]}))
        inters = [(0, 0.25 * polygon_area(cells[0]), 0.25),
                  (1, 0.1 * polygon_area(cells[1]), 0.1)]
        assert feat.extract_extensive(layer, "population", inters) == pytest.approx(150.0)

    def test_missing_value_marks_missing(self):
        layer = polygon_layer("pop", [square(-10, -10, 20)],
                              pd.DataFrame({"population": [np.nan]}))
        inters, _ = intersections_for(layer, PointXY(0, 0))
        assert math.isnan(feat.extract_extensive(layer, "population", inters))

    def test_additivity_under_split(self):
        # one 200x200 cell vs the same cell split into two halves
        whole = polygon_layer("a", [square(-100, -100, 200)],
                              pd.DataFrame({"v": [80.0]}))
        halves = polygon_layer("b", [
            Polygon([(-100, -100), (0, -100), (0, 100), (-100, 100)]),
            Polygon([(0, -100), (100, -100), (100, 100), (0, 100)])],
            pd.DataFrame({"v": [40.0, 40.0]}))
        i1, _ = intersections_for(whole, PointXY(20, 5))
        i2, _ = intersections_for(halves, PointXY(20, 5))
        v1 = feat.extract_extensive(whole, "v", i1)
        v2 = feat.extract_extensive(halves, "v", i2)
        assert v1 == pytest.approx(v2, rel=1e-9)

    def test_buffer_monotone_in_radius(self):
        layer = polygon_layer("a", [square(-400, -400, 800)],
                              pd.DataFrame({"v": [1000.0]}))
        values = []
        for r in (50.0, 150.0, 250.0, 350.0):
            buf = make_buffer(PointXY(0, 0), BufferSpec(r, 64))
            inters = feat._polygon_intersection_fractions(layer, buf)
            values.append(feat.extract_extensive(layer, "v", inters))
        assert all(a <= b + 1e-12 for a, b in zip(values, values[1:]))


class TestIntensive:
    def test_single_polygon_identity(self):
        layer = polygon_layer("a", [square(-10, -10, 20)],
                              pd.DataFrame({"rate": [7.5]}))
        inters, _ = intersections_for(layer, PointXY(0, 0))
        assert feat.extract_intensive(layer, "rate", inters) == pytest.approx(7.5)

    def test_equal_area_mean(self):
        layer = polygon_layer("a", [square(0, 0, 10), square(20, 0, 10)],
                              pd.DataFrame({"rate": [10.0, 30.0]}))
        inters = [(0, 5.0, 0.05), (1, 5.0, 0.05)]
        assert feat.extract_intensive(layer, "rate", inters) == pytest.approx(20.0)

    def test_weight_attribute(self):
        # house values 200k/400k weighted by counts 10/30 in equal areas -> 350k
        layer = polygon_layer("a", [square(0, 0, 10), square(20, 0, 10)],
                              pd.DataFrame({"value": [200e3, 400e3],
                                            "houses": [10.0, 30.0]}))
        inters = [(0, 5.0, 1.0), (1, 5.0, 1.0)]
        v = feat.extract_intensive(layer, "value", inters, weight_attribute="houses")
        assert v == pytest.approx(350e3)

    def test_zero_weight_is_missing(self):
        layer = polygon_layer("a", [square(0, 0, 10)],
                              pd.DataFrame({"value": [5.0], "houses": [0.0]}))
        inters = [(0, 5.0, 1.0)]
        assert math.isnan(feat.extract_intensive(layer, "value", inters,
                                                 weight_attribute="houses"))


class TestCategorical:
    def _layer(self, polys, cats, categories):
        return polygon_layer("lu", polys, pd.DataFrame({"category": cats}),
                             mode="categorical", category_attribute="category",
                             categories=categories)

    def test_fully_inside_one_category(self):
        layer = self._layer([square(-500, -500, 1000)], ["residential"],
                            ["residential", "roads"])
        inters, buf = intersections_for(layer, PointXY(0, 0))
        props = feat.extract_categorical(layer, inters, polygon_area(buf))
        assert props["residential"] == pytest.approx(1.0, rel=1e-9)
        assert props["roads"] == 0.0

    def test_half_and_half(self):
        layer = self._layer([square(-1000, -1000, 1000).__class__(
            [(-1000, -1000), (0, -1000), (0, 1000), (-1000, 1000)]),
            Polygon([(0, -1000), (1000, -1000), (1000, 1000), (0, 1000)])],
            ["residential", "roads"], ["residential", "roads"])
        inters, buf = intersections_for(layer, PointXY(0, 0))
        props = feat.extract_categorical(layer, inters, polygon_area(buf))
        assert props["residential"] == pytest.approx(0.5, rel=1e-6)
        assert props["roads"] == pytest.approx(0.5, rel=1e-6)

    def test_proportions_sum_at_most_one(self):
        rng = np.random.default_rng(0)
        cats = ["a", "b", "c"]
        polys = [square(rng.uniform(-300, 100), rng.uniform(-300, 100), 150)
                 for _ in range(6)]
        layer = self._layer(polys, [cats[i % 3] for i in range(6)], cats)
        inters, buf = intersections_for(layer, PointXY(0, 0))
        props = feat.extract_categorical(layer, inters, polygon_area(buf))
        assert all(0.0 <= v <= 1.0 for v in props.values())
        # overlapping synthetic cells may double-count; a real partition sums <= 1
        layer2 = self._layer([square(-500, -500, 500), square(0, -500, 500)],
                             ["a", "b"], cats)
        inters2, buf2 = intersections_for(layer2, PointXY(0, 0))
        props2 = feat.extract_categorical(layer2, inters2, polygon_area(buf2))
        assert sum(props2.values()) <= 1.0 + 1e-9


class TestRoads:
    def _layer(self, lines, table):
        cfg = LayerConfig(name="roads", path="x", geometry="polyline", mode="roads",
                          flow_attributes=["flow_cars_day"],
                          type_attribute="road_type",
                          road_types=["residential", "primary", "secondary",
                                      "tertiary"])
        return Layer("roads", "polyline", lines, table, cfg)

    def test_no_roads_in_buffer_densities_zero(self):
        layer = self._layer([Polyline(np.array([(5000.0, 0.0), (6000.0, 0.0)]))],
                            pd.DataFrame({"flow_cars_day": [100.0],
                                          "road_type": ["primary"]}))
        idx = feat._RoadIndex(layer)
        buf = make_buffer(PointXY(0, 0), BUF)
        out = feat.extract_road_features(layer, idx, (0.0, 0.0), buf,
                                         polygon_area(buf))
        assert out["traffic_density"] == 0.0
        assert out["road_density"] == 0.0
        assert out["closest_flow_cars_day"] == 100.0

    def test_density_formula(self):
        # one segment crossing the buffer: 100 m inside, flow 500
        line = Polyline(np.array([(-50.0, 0.0), (50.0, 0.0)]))
        layer = self._layer([line], pd.DataFrame({"flow_cars_day": [500.0],
                                                  "road_type": ["secondary"]}))
        idx = feat._RoadIndex(layer)
        buf = make_buffer(PointXY(0, 0), BUF)
        area = polygon_area(buf)
        out = feat.extract_road_features(layer, idx, (0.0, 0.0), buf, area)
        assert out["traffic_density"] == pytest.approx(100.0 * 500.0 / area)
        assert out["road_density"] == pytest.approx(100.0 / area)

    def test_one_hot_type(self):
        layer = self._layer([Polyline(np.array([(0.0, 10.0), (100.0, 10.0)]))],
                            pd.DataFrame({"flow_cars_day": [10.0],
                                          "road_type": ["primary"]}))
        idx = feat._RoadIndex(layer)
        buf = make_buffer(PointXY(0, 0), BUF)
        out = feat.extract_road_features(layer, idx, (0.0, 0.0), buf,
                                         polygon_area(buf))
        assert [out["closest_type_residential"], out["closest_type_primary"],
                out["closest_type_secondary"], out["closest_type_tertiary"]] \
            == [0.0, 1.0, 0.0, 0.0]

    def test_empty_layer_all_missing(self):
        layer = self._layer([], pd.DataFrame(columns=["flow_cars_day", "road_type"]))
        idx = feat._RoadIndex(layer)
        buf = make_buffer(PointXY(0, 0), BUF)
        out = feat.extract_road_features(layer, idx, (0.0, 0.0), buf,
                                         polygon_area(buf))
        assert all(math.isnan(v) for v in out.values())


class TestPoints:
    def test_density_and_nearest(self):
        buf = make_buffer(PointXY(0, 0), BUF)
        area = polygon_area(buf)
        pts = {"food": np.array([(10.0, 0.0), (20.0, 5.0), (-30.0, 2.0)]),
               "sport": np.empty((0, 2))}
        out = feat.extract_point_features(pts, (0.0, 0.0), buf, area)
        assert out["density_food"] == pytest.approx(3.0 / area)
        assert out["nearest_food"] == pytest.approx(10.0)
        assert out["density_sport"] == 0.0
        assert math.isnan(out["nearest_sport"])

    def test_points_outside_buffer_not_counted(self):
        buf = make_buffer(PointXY(0, 0), BUF)
        pts = {"food": np.array([(500.0, 0.0)])}
        out = feat.extract_point_features(pts, (0.0, 0.0), buf, polygon_area(buf))
        assert out["density_food"] == 0.0
        assert out["nearest_food"] == pytest.approx(500.0)


class TestPoolFeatures:
    def test_values_passed_through(self):
        out = feat.extract_pool_features(pool_at(0, 0))
        assert out["n_connectors"] == 2.0
        assert out["max_power_kw"] == 11.0
        assert out["rollout_strategic"] == 1.0
        assert len(out) == 5

    def test_demand_driven_indicator(self):
        p = pool_at(0, 0)
        p.rollout = "demand_driven"
        assert feat.extract_pool_features(p)["rollout_strategic"] == 0.0


class TestImputeLayer:
    def test_rule_a_population_zero(self):
        table = pd.DataFrame({"population": [0.0, 100.0],
                              "n_social": [np.nan, np.nan]})
        layer = polygon_layer("p", [square(0, 0, 1), square(2, 0, 1)], table,
                              imputation=[{"rule": "zero_when_zero",
                                           "guard": "population",
                                           "targets": ["n_social"]}])
        counts = feat.impute_layer(layer)
        assert counts["zero_when_zero"] == 1
        assert layer.table["n_social"].tolist()[0] == 0.0
        assert math.isnan(layer.table["n_social"].iloc[1])

    def test_rule_e_urbanity_lowest_class(self):
        table = pd.DataFrame({"urbanity": [np.nan, 2.0]})
        layer = polygon_layer("p", [square(0, 0, 1), square(2, 0, 1)], table,
                              imputation=[{"rule": "fill_constant",
                                           "target": "urbanity", "value": 5}])
        feat.impute_layer(layer)
        assert layer.table["urbanity"].tolist() == [5.0, 2.0]

    def test_rule_g_few_meters(self):
        table = pd.DataFrame({"meters": [3.0, 10.0], "kwh": [np.nan, np.nan]})
        layer = polygon_layer("p", [square(0, 0, 1), square(2, 0, 1)], table,
                              imputation=[{"rule": "zero_when_below",
                                           "guard": "meters", "threshold": 5,
                                           "targets": ["kwh"]}])
        feat.impute_layer(layer)
        assert layer.table["kwh"].iloc[0] == 0.0
        assert math.isnan(layer.table["kwh"].iloc[1])

    def test_derive_household_size(self):
        table = pd.DataFrame({"population": [120.0], "households": [40.0],
                              "mean_size": [np.nan]})
        layer = polygon_layer("p", [square(0, 0, 1)], table,
                              imputation=[{"rule": "derive_ratio",
                                           "target": "mean_size",
                                           "numerator": "population",
                                           "denominator": "households"}])
        feat.impute_layer(layer)
        assert layer.table["mean_size"].iloc[0] == pytest.approx(3.0)


def make_fm(X, names=None):
    names = names or [f"c{j}" for j in range(X.shape[1])]
    cols = [feat.ColumnInfo(n, "test", "extensive") for n in names]
    return feat.FeatureMatrix(np.asarray(X, dtype=float),
                              [f"p{i}" for i in range(X.shape[0])], cols)


class TestPreprocess:
    def test_two_percent_missing_dropped(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 2))
        X[:4, 0] = np.nan  # 2% missing
        out, report = feat.preprocess(make_fm(X))
        assert out.names == ["c1"]
        assert report["dropped"][0]["reason"] == "missing"

    def test_rare_missing_median_imputed(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(300, 2))
        X[0, 0] = np.nan  # 0.33% missing
        med = float(np.nanmedian(X[:, 0]))
        out, report = feat.preprocess(make_fm(X))
        assert out.X.shape[1] == 2
        assert out.X[0, 0] == pytest.approx(med)
        assert report["imputed"]["c0"] == 1

    def test_duplicate_column_dropped(self):
        rng = np.random.default_rng(1)
        base = rng.normal(size=300)
        X = np.column_stack((base, rng.normal(size=300), base))
        out, report = feat.preprocess(make_fm(X))
        assert out.names == ["c0", "c1"]
        assert any(d["reason"] == "correlated" and d["name"] == "c2"
                   for d in report["dropped"])

    def test_sparse_column_dropped(self):
        rng = np.random.default_rng(2)
        X = np.column_stack((rng.normal(size=300), np.zeros(300)))
        X[:5, 1] = 1.0  # > 95% zeros
        out, report = feat.preprocess(make_fm(X))
        assert out.names == ["c0"]
        assert report["dropped"][0]["reason"] == "sparsity"

    def test_constant_column_dropped(self):
        rng = np.random.default_rng(3)
        X = np.column_stack((rng.normal(size=100), np.full(100, 3.3)))
        out, report = feat.preprocess(make_fm(X))
        assert out.names == ["c0"]
        assert report["dropped"][0]["reason"] == "constant"

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        base = rng.normal(size=(400, 6))
        base[:, 3] = base[:, 0] + 1e-3 * rng.normal(size=400)
        base[:3, 1] = np.nan
        fm1, _ = feat.preprocess(make_fm(base))
        fm2, rep2 = feat.preprocess(fm1)
        assert fm2.names == fm1.names
        assert np.array_equal(fm1.X, fm2.X)
        assert not rep2["dropped"]

    def test_postconditions_recheck(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(300, 20))
        # build a correlated chain to stress the clique fixpoint
        X[:, 5] = X[:, 4] + 0.01 * rng.normal(size=300)
        X[:, 6] = X[:, 5] + 0.01 * rng.normal(size=300)
        X[:, 7] = X[:, 6] + 0.01 * rng.normal(size=300)
        out, _ = feat.preprocess(make_fm(X))
        assert feat.verify_preprocessed(out)

    def test_component_mode(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(300, 4))
        X[:, 1] = X[:, 0] + 0.01 * rng.normal(size=300)
        X[:, 2] = X[:, 1] + 0.01 * rng.normal(size=300)
        out, _ = feat.preprocess(make_fm(X), corr_mode="component")
        assert out.names[0] == "c0"
        assert "c3" in out.names


class TestEndToEndExtraction:
    def test_landuse_emits_all_categories(self, small_scenario):
        out_dir, spec, truth = small_scenario
        from chargerank.layers import load_scenario_layers

        projection, layers = load_scenario_layers(out_dir / "attributes.json")
        lu = layers["landuse"]
        assert len(lu.config.categories) == 25
        pools = [pool_at(lu.geoms[0].exterior[:, 0].mean(),
                         lu.geoms[0].exterior[:, 1].mean())]
        fm, _ = feat.extract_features(pools, {"landuse": lu}, BufferSpec(350.0, 32),
                                      run_imputation=False)
        landuse_cols = [c for c in fm.names if c.startswith("landuse.prop.")]
        assert len(landuse_cols) == 25
        props = fm.X[0, [fm.names.index(c) for c in landuse_cols]]
        assert np.all(props >= 0) and props.sum() <= 1.0 + 1e-9
