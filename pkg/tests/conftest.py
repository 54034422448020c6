import numpy as np
import pytest

from featreg.core import Image2D


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_image(rng):
    return Image2D(rng.uniform(0.0, 1.0, size=(32, 32)))


def smooth_image(seed: int, size: int = 32) -> Image2D:
    """Band-limited random image for interpolation-sensitive tests."""
    from scipy.ndimage import gaussian_filter

    rng = np.random.default_rng(seed)
    data = gaussian_filter(rng.normal(size=(size, size)), sigma=2.5)
    data = (data - data.min()) / (data.max() - data.min())
    return Image2D(data)
