import numpy as np
import pytest

from thicket import simulator
from thicket.integrator import ImageIntegrator


@pytest.fixture(scope="session")
def small_rig():
    return simulator.default_rig(count=4, baseline_m=1.0, resolution=96)


@pytest.fixture(scope="session")
def small_plane(small_rig):
    return simulator.default_plane(small_rig)


@pytest.fixture(scope="session")
def small_scene(small_rig):
    spec = simulator.default_scene_spec(31, 0.4, rig=small_rig)
    return simulator.generate_scene(spec)


@pytest.fixture(scope="session")
def small_renderer(small_scene, small_rig, small_plane):
    return simulator.SceneRenderer(small_scene, small_rig, small_plane)


@pytest.fixture(scope="session")
def small_frames(small_renderer, small_rig):
    return [small_renderer.render(k, 0.0) for k in range(small_rig.count)]


@pytest.fixture(scope="session")
def small_integrator(small_rig, small_plane):
    return ImageIntegrator(small_plane).fit(small_rig)


def rng(seed=0):
    return np.random.default_rng(seed)
