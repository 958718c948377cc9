import numpy as np
import pytest


@pytest.fixture(scope="session")
def photo():
    """Deterministic photograph-like fixture: smooth gradients plus sensor noise."""
    rng = np.random.default_rng(42)
    height, width = 96, 128
    yy, xx = np.mgrid[0:height, 0:width]
    base = (
        128.0
        + 60.0 * np.sin(xx / 17.0)
        + 40.0 * np.cos(yy / 11.0)
        + 25.0 * np.sin((xx + yy) / 23.0)
    )
    noise = rng.normal(0.0, 8.0, size=(height, width, 3))
    return np.clip(base[..., None] + noise, 0, 255).astype(np.uint8)
