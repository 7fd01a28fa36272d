import numpy as np
import pytest

from chargerank.synth import ScenarioSpec, generate_scenario


@pytest.fixture(scope="session")
def small_scenario(tmp_path_factory):
    """A compact scenario shared by integration-style tests."""
    out = tmp_path_factory.mktemp("scenario")
    spec = ScenarioSpec(
        seed=2024, n_pools=150, box_km=6.0, n_population_cells=60,
        n_neighborhood_cells=40, n_landuse_cells=120, n_roads=80,
        n_poi_mean=25.0, n_competitors=40, noise_scale=2.5)
    truth = generate_scenario(spec, out)
    return out, spec, truth


def random_convex_polygon(rng, n_points=12, scale=1.0, center=(0.0, 0.0)):
    """Convex hull of random points; guaranteed CCW simple polygon."""
    from scipy.spatial import ConvexHull

    pts = rng.normal(size=(n_points, 2)) * scale + np.asarray(center)
    hull = ConvexHull(pts)
    return pts[hull.vertices]
