import numpy as np
import pytest

from mvtrack3d import kernels, synth


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # compile (or load from cache) every jitted kernel once up front so
    # individual tests never pay or measure compilation time
    kernels.warm_up()


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)


@pytest.fixture(scope="session")
def clean_scene():
    """Noise-free 3-camera scene used by exactness tests."""
    return synth.generate(synth.SceneConfig(
        seed=3, n_cameras=3, n_actors=3, n_frames=240))


@pytest.fixture(scope="session")
def noisy_scene():
    """Mildly noisy 3-camera scene used by behavioral tests."""
    return synth.generate(synth.SceneConfig(
        seed=5, n_cameras=3, n_actors=3, n_frames=300, noise_px=1.0))
